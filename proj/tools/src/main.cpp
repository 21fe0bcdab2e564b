#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "metabias/copas_sens.hpp"
#include "metabias/dataset.hpp"
#include "metabias/numkit.hpp"
#include "metabias/registry_mle.hpp"
#include "metabias/remeta.hpp"
#include "metabias/simlab.hpp"
#include "report.hpp"
#include "svg.hpp"

namespace {

using namespace metabias;

// distinguishes optimizer failure (exit 3) from input problems (exit 2)
class ConvergenceFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot open output file: " + path);
    out << text;
    if (!out) throw std::invalid_argument("write failed: " + path);
}

std::string dataset_label(const std::string& path) {
    return std::filesystem::path(path).filename().string();
}

std::optional<double> finite_or_absent(double v) {
    if (std::isfinite(v)) return v;
    return std::nullopt;
}

struct FitArgs {
    std::string data;
    std::string method = "all";
    double level = 0.95;
    std::string scale = "or";
    std::string format = "tsv";
    std::string output;
};

int cmd_fit(const FitArgs& a) {
    const MetaDataset ds = parse_csv_file(a.data);
    const std::string label = dataset_label(a.data);
    const bool on_or_scale = a.scale == "or";
    auto rescale = [on_or_scale](double v) { return on_or_scale ? std::exp(v) : v; };

    const bool want_reml = a.method == "all" || a.method == "reml";
    const bool want_knha = a.method == "all" || a.method == "knha";
    const bool want_copas = a.method == "all" || a.method == "copas";
    const bool want_mle = a.method == "all" || a.method == "mle";

    tool::ReportTable table;

    std::optional<RandomEffectsFit> re;
    std::optional<KnhaInterval> kh;
    if (want_reml || want_knha || want_mle) {
        re = fit_random_effects(ds);
        kh = ci_knapp_hartung(ds, *re, a.level);
    }

    if (want_reml) {
        auto [lo, hi] = ci_normal(*re, a.level);
        table.rows.push_back({label, "REML", std::nullopt, rescale(re->theta_hat), rescale(lo),
                              rescale(hi), std::nullopt});
    }
    if (want_knha) {
        table.rows.push_back({label, "REML.KnHa", std::nullopt, rescale(re->theta_hat),
                              rescale(kh->lower), rescale(kh->upper), std::nullopt});
    }
    if (want_reml) {
        auto eg = egger_test(ds);
        table.rows.push_back({label, "Egger", std::nullopt, std::nullopt, std::nullopt,
                              std::nullopt, eg.p_value});
        auto mk = macaskill_test(ds);
        table.rows.push_back({label, "Macaskill", std::nullopt, std::nullopt, std::nullopt,
                              std::nullopt, mk.p_value});
    }

    if (want_copas) {
        const SensitivityCurve curve = run_grid(ds);
        const double z = norm_quantile(1.0 - (1.0 - a.level) / 2.0);
        for (std::size_t i = 0; i < curve.points.size(); ++i) {
            const auto& p = curve.points[i];
            tool::ReportRow row;
            row.description = label;
            row.method = (curve.selected && *curve.selected == i) ? "Copas.selected" : "Copas";
            row.expected_m = finite_or_absent(p.expected_m);
            row.or_value = rescale(p.theta_hat);
            if (p.converged && std::isfinite(p.se_theta)) {
                row.ci_lower = rescale(p.theta_hat - z * p.se_theta);
                row.ci_upper = rescale(p.theta_hat + z * p.se_theta);
            }
            row.p_value = finite_or_absent(p.gof_p);
            table.rows.push_back(std::move(row));
        }
        if (!curve.selected)
            throw ConvergenceFailure("no point of the sensitivity grid converged");
        if (curve.selected_flagged)
            std::cerr << "warning: no sensitivity fit passed the goodness-of-fit screen; "
                         "the reported point is the largest-m fallback\n";
    }

    if (want_mle) {
        if (ds.n_unpublished() == 0)
            std::cerr << "warning: no unpublished studies in the data; the selection "
                         "parameters of the joint fit are weakly identified\n";
        const CopasRegistryFit fit = fit_full_mle(ds);
        if (!fit.converged)
            throw ConvergenceFailure("joint selection-model likelihood did not converge");
        const CIBundle b = ci_bundle(fit, kh->se_hk, a.level);
        const auto m = static_cast<double>(fit.n_unpublished);
        table.rows.push_back({label, "MLE(N)", m, rescale(fit.theta), rescale(b.normal.first),
                              rescale(b.normal.second), std::nullopt});
        table.rows.push_back({label, "MLE(T)", m, rescale(fit.theta), rescale(b.t.first),
                              rescale(b.t.second), std::nullopt});
        table.rows.push_back({label, "MLE(SE#)", m, rescale(fit.theta),
                              rescale(b.se_sharp.first), rescale(b.se_sharp.second),
                              std::nullopt});
    }

    write_output(a.output, a.format == "json" ? to_json(table) : to_tsv(table));
    return 0;
}

struct SimArgs {
    ScenarioConfig cfg;
    double p20 = 0.0;
    double p500 = 0.0;
    bool anchors_given = false;
    std::string methods;
    std::string format = "tsv";
    std::string output;
};

std::uint32_t parse_method_mask(const std::string& spec) {
    if (spec.empty()) return kAllSimMethods;
    std::uint32_t mask = 0;
    std::size_t start = 0;
    while (start <= spec.size()) {
        std::size_t pos = spec.find(',', start);
        std::string name = spec.substr(start, pos == std::string::npos ? pos : pos - start);
        bool found = false;
        for (std::size_t i = 0; i < kSimMethodCount; ++i) {
            auto method = static_cast<SimMethod>(i);
            if (name == sim_method_name(method)) {
                mask |= sim_method_bit(method);
                found = true;
                break;
            }
        }
        if (!found) throw std::invalid_argument("unknown method name: " + name);
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return mask;
}

unsigned threads_from_env() {
    const char* raw = std::getenv("META_BIAS_THREADS");
    if (raw == nullptr || *raw == '\0') return 0;
    unsigned v = 0;
    std::string s = raw;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        std::cerr << "warning: ignoring unparseable META_BIAS_THREADS value '" << s << "'\n";
        return 0;
    }
    return v;
}

int cmd_simulate(SimArgs& a) {
    if (a.anchors_given) {
        auto [a0, a1] = solve_alphas(a.p20, a.p500);
        a.cfg.alpha0 = a0;
        a.cfg.alpha1 = a1;
    }
    a.cfg.method_mask = parse_method_mask(a.methods);

    const ScenarioSummary summary = run_scenario(a.cfg);
    if (summary.regenerated > 0)
        std::cerr << "note: " << summary.regenerated
                  << " draw(s) regenerated for having fewer than 2 published studies\n";

    tool::SummaryTable table;
    for (const auto& ms : summary.methods)
        table.rows.push_back({sim_method_name(ms.method), ms.ave, ms.sd, ms.cp, ms.loci, ms.noc});

    write_output(a.output, a.format == "json" ? to_json(table) : to_tsv(table));
    return 0;
}

struct FunnelArgs {
    std::string data;
    std::string mode = "standard";
    std::string output;
};

int cmd_funnel(const FunnelArgs& a) {
    const MetaDataset ds = parse_csv_file(a.data);
    const RandomEffectsFit re = fit_random_effects(ds);
    const auto mode =
        a.mode == "modified" ? tool::FunnelMode::modified : tool::FunnelMode::standard;
    write_output(a.output, tool::funnel_svg(ds, mode, re.theta_hat));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"meta-analysis with selection models for publication bias"};
    app.require_subcommand(1);

    FitArgs fit_args;
    auto* fit = app.add_subcommand("fit", "pooled and selection-adjusted estimates");
    fit->add_option("--data", fit_args.data, "study CSV file")->required();
    fit->add_option("--method", fit_args.method, "reml, knha, copas, mle, or all")
        ->check(CLI::IsMember({"all", "reml", "knha", "copas", "mle"}));
    fit->add_option("--level", fit_args.level, "confidence level")->check(CLI::Range(1e-6, 0.999999));
    fit->add_option("--scale", fit_args.scale, "report odds ratios or log odds ratios")
        ->check(CLI::IsMember({"or", "log"}));
    fit->add_option("--format", fit_args.format, "tsv or json")
        ->check(CLI::IsMember({"tsv", "json"}));
    fit->add_option("--output", fit_args.output, "output file (default stdout)");

    SimArgs sim_args;
    sim_args.cfg.threads = threads_from_env();
    auto* sim = app.add_subcommand("simulate", "selection-model simulation study");
    sim->set_config("--config", "", "flat key=value scenario file");
    sim->add_option("--theta", sim_args.cfg.theta, "true pooled log odds ratio");
    sim->add_option("--tau", sim_args.cfg.tau, "between-study standard deviation")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--rho", sim_args.cfg.rho, "selection correlation");
    auto* a0 = sim->add_option("--alpha0", sim_args.cfg.alpha0, "selection intercept");
    auto* a1 = sim->add_option("--alpha1", sim_args.cfg.alpha1, "selection slope on sqrt(n)");
    auto* p20 = sim->add_option("--p20", sim_args.p20,
                                "publication probability of an average study at n=20");
    auto* p500 = sim->add_option("--p500", sim_args.p500,
                                 "publication probability of an average study at n=500");
    p20->needs(p500);
    p500->needs(p20);
    p20->excludes(a0)->excludes(a1);
    p500->excludes(a0)->excludes(a1);
    sim->add_option("--total", sim_args.cfg.total_studies, "studies generated per replication");
    sim->add_option("--reps", sim_args.cfg.replications, "number of replications");
    sim->add_option("--seed", sim_args.cfg.seed, "random seed");
    sim->add_option("--level", sim_args.cfg.ci_level, "confidence level");
    sim->add_option("--threads", sim_args.cfg.threads,
                    "worker threads (0 = hardware concurrency; env META_BIAS_THREADS)");
    sim->add_option("--methods", sim_args.methods,
                    "comma-separated method names (default: all)");
    sim->add_option("--format", sim_args.format, "tsv or json")
        ->check(CLI::IsMember({"tsv", "json"}));
    sim->add_option("--output", sim_args.output, "output file (default stdout)");

    FunnelArgs funnel_args;
    auto* funnel = app.add_subcommand("funnel", "SVG funnel plot");
    funnel->add_option("--data", funnel_args.data, "study CSV file")->required();
    funnel->add_option("--mode", funnel_args.mode, "standard or modified")
        ->check(CLI::IsMember({"standard", "modified"}));
    funnel->add_option("--output", funnel_args.output, "output file (default stdout)");

    fit->callback([&] { cmd_fit(fit_args); });
    sim->callback([&] {
        sim_args.anchors_given = p20->count() > 0;
        cmd_simulate(sim_args);
    });
    funnel->callback([&] { cmd_funnel(funnel_args); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConvergenceFailure& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const RemlConvergenceError& e) {
        std::cerr << "error: pooled fit did not converge: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
