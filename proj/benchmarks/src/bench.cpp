#include <benchmark/benchmark.h>

#include <array>
#include <string>

#include "metabias/copas_sens.hpp"
#include "metabias/dataset.hpp"
#include "metabias/numkit.hpp"
#include "metabias/registry_mle.hpp"
#include "metabias/remeta.hpp"
#include "metabias/simlab.hpp"
#include "svg.hpp"

using namespace metabias;

namespace {

std::string data_file(const std::string& name) {
    return std::string(METABIAS_DATA_DIR) + "/" + name;
}

const MetaDataset& tiotropium() {
    static const MetaDataset ds = parse_csv_file(data_file("tiotropium.csv"));
    return ds;
}

void BM_TwoByTwoEffect(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(two_by_two_effect(38, 1070, 92, 1180));
}
BENCHMARK(BM_TwoByTwoEffect);

void BM_NormCdf(benchmark::State& state) {
    double x = -8.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(norm_cdf(x));
        x = x >= 8.0 ? -8.0 : x + 0.25;
    }
}
BENCHMARK(BM_NormCdf);

void BM_RemlFit(benchmark::State& state) {
    const auto& ds = tiotropium();
    for (auto _ : state) benchmark::DoNotOptimize(fit_random_effects(ds));
}
BENCHMARK(BM_RemlFit);

void BM_CondLoglik(benchmark::State& state) {
    const auto& ds = tiotropium();
    const std::array<double, 3> params{-0.25, 0.12, -0.4};
    for (auto _ : state) benchmark::DoNotOptimize(cond_loglik(params, {-0.3, 0.25}, ds));
}
BENCHMARK(BM_CondLoglik);

void BM_FitConditional(benchmark::State& state) {
    const auto& ds = tiotropium();
    for (auto _ : state) benchmark::DoNotOptimize(fit_conditional({-0.3, 0.25}, ds));
}
BENCHMARK(BM_FitConditional);

void BM_FullLoglik(benchmark::State& state) {
    const auto& ds = tiotropium();
    const std::array<double, 5> params{-0.24, 0.14, -0.41, -0.24, 0.04};
    for (auto _ : state) benchmark::DoNotOptimize(full_loglik(params, ds));
}
BENCHMARK(BM_FullLoglik);

void BM_FitFullMle(benchmark::State& state) {
    const auto& ds = tiotropium();
    for (auto _ : state) benchmark::DoNotOptimize(fit_full_mle(ds));
}
BENCHMARK(BM_FitFullMle);

void BM_GenMeta(benchmark::State& state) {
    ScenarioConfig cfg;
    cfg.total_studies = std::size_t(state.range(0));
    RngStream rng(5, 0);
    for (auto _ : state) benchmark::DoNotOptimize(gen_meta(cfg, rng));
}
BENCHMARK(BM_GenMeta)->Arg(15)->Arg(100);

void BM_FunnelSvg(benchmark::State& state) {
    const auto& ds = tiotropium();
    for (auto _ : state)
        benchmark::DoNotOptimize(tool::funnel_svg(ds, tool::FunnelMode::modified, -0.26));
}
BENCHMARK(BM_FunnelSvg);

}  // namespace

BENCHMARK_MAIN();
