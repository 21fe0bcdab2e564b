#include "metabias/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "metabias/copas_sens.hpp"
#include "metabias/numkit.hpp"
#include "metabias/registry_mle.hpp"
#include "metabias/remeta.hpp"

namespace metabias {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

constexpr int kArmRedrawCap = 10000;
constexpr int kMetaRedrawCap = 10000;

void check_config(const ScenarioConfig& c) {
    if (c.replications < 1) throw std::invalid_argument("replications must be at least 1");
    if (!(std::abs(c.rho) < 1.0)) throw std::invalid_argument("|rho| must be below 1");
    if (!(c.tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
    if (c.total_studies < 2) throw std::invalid_argument("total_studies must be at least 2");
    if (!(c.ci_level > 0.0 && c.ci_level < 1.0))
        throw std::invalid_argument("ci_level must be in (0, 1)");
    if (!std::isfinite(c.alpha0) || !std::isfinite(c.alpha1) || !std::isfinite(c.theta))
        throw std::invalid_argument("theta and alphas must be finite");
}

bool wants(const ScenarioConfig& c, SimMethod m) { return c.method_mask & sim_method_bit(m); }

void set_outcome(RepRecord& rec, SimMethod m, double est, double lo, double hi) {
    rec.by_method[unsigned(m)] = RepOutcome{est, lo, hi, true};
}

void set_failed(RepRecord& rec, SimMethod m) { rec.by_method[unsigned(m)] = RepOutcome{}; }

RepRecord simulate_rep(const ScenarioConfig& cfg, std::size_t rep, std::size_t* regen) {
    RngStream rng(cfg.seed, rep);
    RepRecord rec;
    MetaDataset ds = gen_meta(cfg, rng, regen);
    const double z = norm_quantile(0.5 + cfg.ci_level / 2.0);

    std::optional<RandomEffectsFit> re;
    std::optional<KnhaInterval> kh;
    const bool need_re = wants(cfg, SimMethod::reml) || wants(cfg, SimMethod::reml_knha) ||
                         wants(cfg, SimMethod::mle_se_sharp);
    if (need_re) {
        try {
            re = fit_random_effects(ds, PoolMethod::reml);
            kh = ci_knapp_hartung(ds, *re, cfg.ci_level);
        } catch (...) {
        }
    }
    if (wants(cfg, SimMethod::reml)) {
        if (re)
            set_outcome(rec, SimMethod::reml, re->theta_hat, re->theta_hat - z * re->se_theta,
                        re->theta_hat + z * re->se_theta);
        else
            set_failed(rec, SimMethod::reml);
    }
    if (wants(cfg, SimMethod::reml_knha)) {
        if (re && kh)
            set_outcome(rec, SimMethod::reml_knha, re->theta_hat, kh->lower, kh->upper);
        else
            set_failed(rec, SimMethod::reml_knha);
    }

    if (wants(cfg, SimMethod::copas)) {
        set_failed(rec, SimMethod::copas);
        try {
            const SensitivityCurve curve = run_grid(ds);
            if (curve.selected) {
                const SensitivityPoint& p = curve.points[*curve.selected];
                if (p.converged && std::isfinite(p.se_theta))
                    set_outcome(rec, SimMethod::copas, p.theta_hat, p.theta_hat - z * p.se_theta,
                                p.theta_hat + z * p.se_theta);
            }
        } catch (...) {
        }
    }

    const bool need_mle = wants(cfg, SimMethod::mle_normal) || wants(cfg, SimMethod::mle_t) ||
                          wants(cfg, SimMethod::mle_se_sharp);
    if (need_mle) {
        if (wants(cfg, SimMethod::mle_normal)) set_failed(rec, SimMethod::mle_normal);
        if (wants(cfg, SimMethod::mle_t)) set_failed(rec, SimMethod::mle_t);
        if (wants(cfg, SimMethod::mle_se_sharp)) set_failed(rec, SimMethod::mle_se_sharp);
        try {
            const CopasRegistryFit fit = fit_full_mle(ds);
            if (fit.converged) {
                const CIBundle ci = ci_bundle(fit, kh ? kh->se_hk : 0.0, cfg.ci_level);
                if (wants(cfg, SimMethod::mle_normal))
                    set_outcome(rec, SimMethod::mle_normal, fit.theta, ci.normal.first,
                                ci.normal.second);
                if (wants(cfg, SimMethod::mle_t))
                    set_outcome(rec, SimMethod::mle_t, fit.theta, ci.t.first, ci.t.second);
                // the max-se interval is defined only when the KnHa se exists
                if (wants(cfg, SimMethod::mle_se_sharp) && kh)
                    set_outcome(rec, SimMethod::mle_se_sharp, fit.theta, ci.se_sharp.first,
                                ci.se_sharp.second);
            }
        } catch (...) {
        }
    }
    return rec;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), gen_(splitmix64(splitmix64(seed) + stream_id)) {}

double RngStream::uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
}

double RngStream::normal(double mean, double sd) {
    return std::normal_distribution<double>(mean, sd)(gen_);
}

double RngStream::lognormal(double meanlog, double sdlog) {
    return std::lognormal_distribution<double>(meanlog, sdlog)(gen_);
}

std::int64_t RngStream::binomial(std::int64_t n, double p) {
    return std::binomial_distribution<std::int64_t>(n, p)(gen_);
}

const char* sim_method_name(SimMethod m) {
    switch (m) {
        case SimMethod::reml: return "REML";
        case SimMethod::reml_knha: return "REML.KnHa";
        case SimMethod::copas: return "Copas";
        case SimMethod::mle_normal: return "MLE(N)";
        case SimMethod::mle_t: return "MLE(T)";
        case SimMethod::mle_se_sharp: return "MLE(SE#)";
    }
    return "?";
}

std::pair<double, double> solve_alphas(double p20, double p500) {
    if (!(p20 > 0.0 && p20 < 1.0 && p500 > 0.0 && p500 < 1.0))
        throw std::invalid_argument("publication probabilities must be in (0, 1)");
    const double z_lo = norm_quantile(p20);
    const double z_hi = norm_quantile(p500);
    const double alpha1 = (z_hi - z_lo) / (std::sqrt(500.0) - std::sqrt(20.0));
    return {z_lo - alpha1 * std::sqrt(20.0), alpha1};
}

double draw_selection(const ScenarioConfig& config, double yi, double sei, double n,
                      RngStream& rng) {
    const double v = config.tau * config.tau + sei * sei;
    const double mu =
        config.alpha0 + config.alpha1 * std::sqrt(n) + config.rho * sei * (yi - config.theta) / v;
    const double var = 1.0 - config.rho * config.rho * sei * sei / v;
    return rng.normal(mu, std::sqrt(std::max(var, 1e-12)));
}

SimStudy gen_study(const ScenarioConfig& config, RngStream& rng) {
    SimStudy st;
    st.theta_i = rng.normal(config.theta, config.tau);
    st.p_ctl = rng.uniform(0.2, 0.9);
    st.p_trt = 1.0 / (1.0 + std::exp(-(std::log(st.p_ctl / (1.0 - st.p_ctl)) + st.theta_i)));
    st.n = std::max<std::int64_t>(20, std::llround(rng.lognormal(5.0, 1.0)));
    int tries = 0;
    for (;;) {
        st.n_trt = rng.binomial(st.n, 0.5);
        st.n_ctl = st.n - st.n_trt;
        if (st.n_trt > 0 && st.n_ctl > 0) break;
        if (++tries >= kArmRedrawCap) throw std::runtime_error("arm allocation kept degenerating");
    }
    st.events_trt = rng.binomial(st.n_trt, st.p_trt);
    st.events_ctl = rng.binomial(st.n_ctl, st.p_ctl);
    const auto [yi, sei] = two_by_two_effect(st.events_trt, st.n_trt, st.events_ctl, st.n_ctl);
    st.yi = yi;
    st.sei = sei;
    st.y_latent = draw_selection(config, yi, sei, double(st.n), rng);
    st.published = st.y_latent > 0.0;
    return st;
}

MetaDataset gen_meta(const ScenarioConfig& config, RngStream& rng, std::size_t* regenerated) {
    for (int attempt = 0; attempt < kMetaRedrawCap; ++attempt) {
        std::vector<SimStudy> draws;
        draws.reserve(config.total_studies);
        std::size_t n_pub = 0;
        for (std::size_t i = 0; i < config.total_studies; ++i) {
            draws.push_back(gen_study(config, rng));
            n_pub += draws.back().published ? 1 : 0;
        }
        if (n_pub < 2) {
            if (regenerated) ++*regenerated;
            continue;
        }
        std::vector<StudyRecord> rows;
        rows.reserve(draws.size());
        for (int pass = 0; pass < 2; ++pass) {
            const bool want_published = pass == 0;
            for (std::size_t i = 0; i < draws.size(); ++i) {
                const SimStudy& st = draws[i];
                if (st.published != want_published) continue;
                StudyRecord r;
                r.id = "s" + std::to_string(i + 1);
                r.published = st.published;
                r.n = st.n;
                if (st.published) {
                    r.events_trt = st.events_trt;
                    r.total_trt = st.n_trt;
                    r.events_ctl = st.events_ctl;
                    r.total_ctl = st.n_ctl;
                    r.yi = st.yi;
                    r.sei = st.sei;
                }
                rows.push_back(std::move(r));
            }
        }
        return MetaDataset::unchecked(std::move(rows));
    }
    throw std::runtime_error("publication filter rejected every meta-analysis draw");
}

ScenarioSummary run_scenario(const ScenarioConfig& config) {
    check_config(config);
    std::vector<RepRecord> records(config.replications);
    std::vector<std::size_t> regen(config.replications, 0);

    unsigned n_threads = config.threads ? config.threads : std::thread::hardware_concurrency();
    if (n_threads == 0) n_threads = 1;
    n_threads = unsigned(std::min<std::size_t>(n_threads, config.replications));

    const auto worker_body = [&](std::size_t r) {
        try {
            records[r] = simulate_rep(config, r, &regen[r]);
        } catch (...) {
            records[r] = RepRecord{};
        }
    };
    if (n_threads <= 1) {
        for (std::size_t r = 0; r < config.replications; ++r) worker_body(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned t = 0; t < n_threads; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    const std::size_t r = next.fetch_add(1);
                    if (r >= config.replications) return;
                    worker_body(r);
                }
            });
        for (std::thread& th : pool) th.join();
    }

    std::size_t total_regen = 0;
    for (std::size_t g : regen) total_regen += g;
    return summarize(records, config, total_regen);
}

ScenarioSummary summarize(const std::vector<RepRecord>& records, const ScenarioConfig& config,
                          std::size_t regenerated) {
    ScenarioSummary out;
    out.config = config;
    out.regenerated = regenerated;
    for (unsigned m = 0; m < kSimMethodCount; ++m) {
        std::vector<const RepOutcome*> ok;
        for (const RepRecord& rec : records)
            if (rec.by_method[m] && rec.by_method[m]->converged) ok.push_back(&*rec.by_method[m]);
        if (ok.empty()) continue;
        MethodSummary ms;
        ms.method = SimMethod(m);
        ms.noc = ok.size();
        double sum = 0.0, len = 0.0;
        std::size_t covered = 0;
        for (const RepOutcome* o : ok) {
            sum += o->estimate;
            len += o->ci_upper - o->ci_lower;
            if (o->ci_lower <= config.theta && config.theta <= o->ci_upper) ++covered;
        }
        ms.ave = sum / double(ms.noc);
        ms.loci = len / double(ms.noc);
        ms.cp = double(covered) / double(ms.noc);
        double ss = 0.0;
        for (const RepOutcome* o : ok) ss += (o->estimate - ms.ave) * (o->estimate - ms.ave);
        ms.sd = ms.noc > 1 ? std::sqrt(ss / double(ms.noc - 1)) : 0.0;
        out.methods.push_back(ms);
    }
    return out;
}

}  // namespace metabias
