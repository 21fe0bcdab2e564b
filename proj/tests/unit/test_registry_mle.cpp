#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "metabias/registry_mle.hpp"
#include "metabias/remeta.hpp"
#include "test_support.hpp"

using namespace metabias;

namespace {

MetaDataset tiotropium() { return parse_csv_file(testsup::data_file("tiotropium.csv")); }
MetaDataset clopidogrel() { return parse_csv_file(testsup::data_file("clopidogrel.csv")); }

double log_phi(double x) { return std::log(0.5 * std::erfc(-x / std::sqrt(2.0))); }

// contribution of one published row, assembled independently
double published_term(double y, double s, double n, const std::array<double, 5>& p) {
    const auto [theta, tau, rho, a0, a1] = p;
    const double rt = tau * tau + s * s;
    const double resid = y - theta;
    const double u = a0 + a1 * std::sqrt(n);
    const double vt = (u + rho * s * resid / rt) / std::sqrt(1.0 - rho * rho * s * s / rt);
    return -0.5 * std::log(rt) - resid * resid / (2.0 * rt) + log_phi(vt);
}

}  // namespace

TEST_SUITE_BEGIN("registry-mle");

TEST_CASE("single-study unit values") {
    const auto lone_unpub = MetaDataset::unchecked({testsup::unpub("u1", 25)});
    CHECK_BAND(full_loglik({0.3, 0.2, 0.5, 0.0, 0.0}, lone_unpub), std::log(0.5), 1e-12);

    const auto lone_pub = MetaDataset::unchecked({testsup::pub("p1", 0.3, 0.5, 100)});
    const std::array<double, 5> p{0.1, 0.2, 0.3, -0.2, 0.05};
    CHECK_BAND(full_loglik(p, lone_pub), published_term(0.3, 0.5, 100.0, p), 1e-12);
}

TEST_CASE("zero correlation separates into pooling and publication parts") {
    const auto ds = tiotropium();
    std::mt19937_64 gen(53);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const auto yi = ds.published_yi();
    const auto si = ds.published_sei();
    for (int rep = 0; rep < 10; ++rep) {
        const double theta = 0.4 * u(gen), tau = 0.25 * std::fabs(u(gen));
        const double a0 = u(gen), a1 = 0.15 * std::fabs(u(gen));
        double expected = 0.0;
        for (std::size_t i = 0; i < yi.size(); ++i) {
            const double rt = tau * tau + si[i] * si[i];
            expected += -0.5 * std::log(rt) - (yi[i] - theta) * (yi[i] - theta) / (2.0 * rt);
        }
        for (double n : ds.published_n()) expected += log_phi(a0 + a1 * std::sqrt(n));
        for (double n : ds.unpublished_n()) expected += log_phi(-(a0 + a1 * std::sqrt(n)));
        const double got = full_loglik({theta, tau, 0.0, a0, a1}, ds);
        CHECK(std::fabs(got - expected) <= 1e-9 * std::max(1.0, std::fabs(expected)));
    }
}

TEST_CASE("zero-correlation profile peaks at the unadjusted estimate") {
    const auto ds = tiotropium();
    const auto ml = fit_random_effects(ds, PoolMethod::ml);
    auto f = [&](const std::vector<double>& x) {
        return full_loglik({x[0], x[1], 0.0, -0.2, 0.05}, ds);
    };
    const auto r = maximize_bounded(f, {0.0, 0.3}, {{-5.0, 1e-8}, {5.0, 2.0}});
    REQUIRE(r.converged);
    CHECK_BAND(r.point[0], ml.theta_hat, 1e-4);
    CHECK_BAND(r.point[1] * r.point[1], ml.tau2_hat, 1e-4);
}

TEST_CASE("likelihood is smooth in all five parameters") {
    const auto ds = tiotropium();
    std::mt19937_64 gen(59);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto f = [&](const std::vector<double>& x) {
        return full_loglik({x[0], x[1], x[2], x[3], x[4]}, ds);
    };
    for (int rep = 0; rep < 20; ++rep) {
        const std::vector<double> x{-0.24 + 0.2 * u(gen), 0.05 + 0.2 * std::fabs(u(gen)),
                                    0.6 * u(gen), u(gen), 0.02 + 0.15 * std::fabs(u(gen))};
        const auto g1 = numeric_gradient(f, x, 1e-5);
        const auto g2 = numeric_gradient(f, x, 1e-6);
        double gmax = 1.0;
        for (double g : g1) gmax = std::max(gmax, std::fabs(g));
        for (std::size_t j = 0; j < g1.size(); ++j)
            CHECK(std::fabs(g1[j] - g2[j]) <= 1e-6 * gmax);
    }
}

TEST_CASE("infeasible parameters yield negative infinity") {
    const auto ds = tiotropium();
    CHECK(full_loglik({0.0, 0.2, 1.0, 0.0, 0.1}, ds) == -std::numeric_limits<double>::infinity());
    CHECK(full_loglik({0.0, 0.2, -1.5, 0.0, 0.1}, ds) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("evenness in the heterogeneity parameter") {
    const auto ds = clopidogrel();
    const std::array<double, 5> a{-0.3, 0.17, -0.4, -0.5, 0.08};
    const std::array<double, 5> b{-0.3, -0.17, -0.4, -0.5, 0.08};
    CHECK(full_loglik(a, ds) == full_loglik(b, ds));
}

TEST_CASE("study order does not change the likelihood") {
    auto studies = tiotropium().studies();
    const std::array<double, 5> p{-0.2, 0.12, -0.4, -0.3, 0.05};
    const double base = full_loglik(p, MetaDataset::unchecked(studies));
    std::mt19937_64 gen(61);
    for (int rep = 0; rep < 5; ++rep) {
        std::shuffle(studies.begin(), studies.end(), gen);
        const double perm = full_loglik(p, MetaDataset::unchecked(studies));
        CHECK(std::fabs(perm - base) <= 1e-12 * std::max(1.0, std::fabs(base)));
    }
}

TEST_CASE("an unpublished study grows more surprising with its size") {
    std::vector<StudyRecord> studies{testsup::pub("a", -0.2, 0.3, 100),
                                     testsup::pub("b", -0.1, 0.4, 80)};
    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t n : {25, 100, 400, 1600, 6400}) {
        auto with_unpub = studies;
        with_unpub.push_back(testsup::unpub("u", n));
        const double ll =
            full_loglik({-0.15, 0.1, -0.3, -0.4, 0.05}, MetaDataset::unchecked(with_unpub));
        CHECK(ll < prev);
        prev = ll;
    }
}

TEST_CASE("case study fits") {
    const auto tio = fit_full_mle(tiotropium());
    REQUIRE(tio.converged);
    CHECK(tio.n_published == 24);
    CHECK(tio.n_unpublished == 8);
    CHECK_BAND(std::exp(tio.theta), 0.787, 0.005);
    CHECK(tio.tau >= 0.0);
    CHECK(std::fabs(tio.rho) < 1.0);
    CHECK(std::isfinite(tio.se_theta));

    const auto clo = fit_full_mle(clopidogrel());
    REQUIRE(clo.converged);
    CHECK(clo.n_published == 12);
    CHECK(clo.n_unpublished == 3);
    CHECK_BAND(std::exp(clo.theta), 0.692, 0.01);
    CHECK(clo.tau >= 0.0);
    CHECK(std::fabs(clo.rho) < 1.0);
}

TEST_CASE("interval bundle for the larger case study") {
    const auto ds = tiotropium();
    const auto fit = fit_full_mle(ds);
    REQUIRE(fit.converged);
    const auto reml = fit_random_effects(ds);
    const auto kh = ci_knapp_hartung(ds, reml);
    const auto ci = ci_bundle(fit, kh.se_hk);
    CHECK(ci.df_used == 23);
    CHECK_BAND(std::exp(ci.normal.first), 0.709, 0.005);
    CHECK_BAND(std::exp(ci.normal.second), 0.873, 0.005);
    CHECK_BAND(std::exp(ci.t.first), 0.705, 0.005);
    CHECK_BAND(std::exp(ci.t.second), 0.878, 0.005);
    // the model standard error exceeds the scaled-weights one here, so the
    // wide interval coincides with the t interval
    CHECK(fit.se_theta > kh.se_hk);
    CHECK(ci.se_sharp.first == ci.t.first);
    CHECK(ci.se_sharp.second == ci.t.second);
    CHECK(ci.se_used_sharp == fit.se_theta);
}

TEST_CASE("interval bundle for the smaller case study") {
    const auto ds = clopidogrel();
    const auto fit = fit_full_mle(ds);
    REQUIRE(fit.converged);
    const auto reml = fit_random_effects(ds);
    const auto kh = ci_knapp_hartung(ds, reml);
    const auto ci = ci_bundle(fit, kh.se_hk);
    CHECK(ci.df_used == 11);
    CHECK_BAND(std::exp(ci.normal.first), 0.494, 0.01);
    CHECK_BAND(std::exp(ci.normal.second), 0.970, 0.01);
    CHECK_BAND(std::exp(ci.t.first), 0.474, 0.01);
    CHECK_BAND(std::exp(ci.t.second), 1.011, 0.01);
    CHECK_BAND(std::exp(ci.se_sharp.first), 0.460, 0.01);
    CHECK_BAND(std::exp(ci.se_sharp.second), 1.043, 0.01);
}

TEST_CASE("interval bundle degenerates correctly and nests always") {
    CopasRegistryFit fit;
    fit.theta = -0.2;
    fit.se_theta = 0.1;
    fit.n_published = 10;
    fit.converged = true;
    const auto ci = ci_bundle(fit, 0.0);
    CHECK(ci.se_sharp.first == ci.t.first);
    CHECK(ci.se_sharp.second == ci.t.second);
    CHECK(ci.se_used_sharp == fit.se_theta);

    std::mt19937_64 gen(67);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 100; ++rep) {
        CopasRegistryFit f;
        f.theta = 2.0 * u(gen) - 1.0;
        f.se_theta = 0.01 + 0.5 * u(gen);
        f.n_published = 2 + std::size_t(29.0 * u(gen));
        f.converged = true;
        const double knha = 0.8 * u(gen);
        const double level = 0.6 + 0.39 * u(gen);
        const auto b = ci_bundle(f, knha, level);
        CHECK(b.level == level);
        CHECK(b.df_used == f.n_published - 1);
        CHECK(b.se_used_sharp == std::max(f.se_theta, knha));
        CHECK(b.normal.first >= b.t.first);
        CHECK(b.normal.second <= b.t.second);
        CHECK(b.t.first >= b.se_sharp.first);
        CHECK(b.t.second <= b.se_sharp.second);
    }
}

TEST_CASE("a non-converged fit cannot be turned into intervals") {
    CopasRegistryFit fit;
    fit.converged = false;
    CHECK_THROWS_AS(ci_bundle(fit, 0.1), std::invalid_argument);
}

TEST_CASE("information matrix is usable at an interior optimum") {
    const auto fit = fit_full_mle(tiotropium());
    REQUIRE(fit.converged);
    CHECK(fit.info.dim() == 5);
    CHECK(is_positive_definite(fit.info));
    const auto inv = invert(fit.info);
    REQUIRE(inv.has_value());
    CHECK_BAND(std::sqrt((*inv)(0, 0)), fit.se_theta, 1e-10);
}

TEST_SUITE_END();
