#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "metabias/dataset.hpp"

namespace metabias {

// Per-replication random source: (seed, stream_id) folded through splitmix64
// rounds keys a mersenne twister. Identical keys give identical sequences
// within one build; bit equality across standard libraries is not promised.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    double uniform(double lo, double hi);
    double normal(double mean, double sd);
    double lognormal(double meanlog, double sdlog);
    std::int64_t binomial(std::int64_t n, double p);

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 gen_;
};

enum class SimMethod : unsigned {
    reml = 0,
    reml_knha,
    copas,
    mle_normal,
    mle_t,
    mle_se_sharp,
};
inline constexpr std::size_t kSimMethodCount = 6;
inline constexpr std::uint32_t kAllSimMethods = 0x3F;

const char* sim_method_name(SimMethod m);
constexpr std::uint32_t sim_method_bit(SimMethod m) { return 1u << unsigned(m); }

struct ScenarioConfig {
    double theta = -0.25;
    double tau = 0.05;  // between-study standard deviation
    double rho = -0.8;
    double alpha0 = -2.18;
    double alpha1 = 0.2;
    std::size_t total_studies = 100;
    std::size_t replications = 1000;
    std::uint64_t seed = 1;
    double ci_level = 0.95;
    std::uint32_t method_mask = kAllSimMethods;
    unsigned threads = 0;  // 0 defers to hardware concurrency
};

// One generated two-arm study before the publication filter.
struct SimStudy {
    double theta_i = 0.0;
    double p_ctl = 0.0;
    double p_trt = 0.0;
    std::int64_t n = 0;
    std::int64_t n_trt = 0;
    std::int64_t n_ctl = 0;
    std::int64_t events_trt = 0;
    std::int64_t events_ctl = 0;
    double yi = 0.0;
    double sei = 0.0;
    double y_latent = 0.0;
    bool published = false;  // y_latent > 0
};

// One method's outcome on one replication; disengaged optionals in RepRecord
// mark methods that were masked off or never produced a fit.
struct RepOutcome {
    double estimate = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    bool converged = false;
};

struct RepRecord {
    std::array<std::optional<RepOutcome>, kSimMethodCount> by_method;
};

struct MethodSummary {
    SimMethod method{};
    double ave = 0.0;   // mean estimate over converged replications
    double sd = 0.0;    // sample standard deviation of estimates
    double cp = 0.0;    // fraction of converged CIs covering the true theta
    double loci = 0.0;  // mean CI length
    std::size_t noc = 0;
};

struct ScenarioSummary {
    ScenarioConfig config;
    std::vector<MethodSummary> methods;  // methods with zero converged reps are absent
    std::size_t regenerated = 0;         // metas redrawn for having < 2 published studies
};

// Selection anchors at n = 20 and n = 500: alpha0 + alpha1*sqrt(n) hits the
// normal quantiles of the two publication probabilities.
std::pair<double, double> solve_alphas(double p20, double p500);

// Latent publication propensity drawn from its conditional law given the
// observed effect: mean alpha0 + alpha1*sqrt(n) + rho*sei*(yi-theta)/(tau^2+sei^2),
// variance 1 - rho^2*sei^2/(tau^2+sei^2).
double draw_selection(const ScenarioConfig& config, double yi, double sei, double n,
                      RngStream& rng);

SimStudy gen_study(const ScenarioConfig& config, RngStream& rng);

// One simulated meta-analysis, published rows first. Draws with fewer than 2
// published studies are discarded and redrawn; *regenerated counts the
// discards when given.
MetaDataset gen_meta(const ScenarioConfig& config, RngStream& rng,
                     std::size_t* regenerated = nullptr);

ScenarioSummary run_scenario(const ScenarioConfig& config);

// Deterministic aggregation of per-replication records (index order), usable
// on records from any source.
ScenarioSummary summarize(const std::vector<RepRecord>& records, const ScenarioConfig& config,
                          std::size_t regenerated = 0);

}  // namespace metabias
