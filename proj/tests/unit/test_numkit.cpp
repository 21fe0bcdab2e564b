#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "metabias/numkit.hpp"
#include "test_support.hpp"

using namespace metabias;

TEST_SUITE_BEGIN("numkit");

TEST_CASE("normal density values and symmetry") {
    CHECK(norm_pdf(0.0) == doctest::Approx(0.3989422804).epsilon(1e-9));
    CHECK(norm_pdf(1.0) ==
          doctest::Approx(std::exp(-0.5) / std::sqrt(2.0 * 3.14159265358979323846))
              .epsilon(1e-12));
    CHECK(norm_pdf(-1.0) == norm_pdf(1.0));
    CHECK(norm_pdf(3.0) > 0.0);
    CHECK_THROWS_AS(norm_pdf(std::numeric_limits<double>::infinity()), std::domain_error);
}

TEST_CASE("normal cdf against the series oracle") {
    CHECK(norm_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(norm_cdf(2.3263479) == doctest::Approx(0.99).epsilon(1e-7));
    for (double x : {-5.5, -3.0, -1.2, -0.3, 0.4, 1.7, 2.9, 4.2, 6.0})
        CHECK(std::fabs(norm_cdf(x) - testsup::norm_cdf_series(x)) < 1e-12);
    CHECK_THROWS_AS(norm_cdf(std::numeric_limits<double>::quiet_NaN()), std::domain_error);
}

TEST_CASE("normal cdf reflection identity") {
    for (double x = -6.0; x <= 6.0; x += 0.37)
        CHECK(std::fabs(norm_cdf(x) + norm_cdf(-x) - 1.0) < 1e-12);
}

TEST_CASE("log of the normal cdf stays finite deep in the left tail") {
    CHECK(log_norm_cdf(0.0) == doctest::Approx(std::log(0.5)).epsilon(1e-12));
    CHECK(std::isfinite(log_norm_cdf(-40.0)));
    CHECK(log_norm_cdf(-40.0) < -700.0);
    CHECK(std::fabs(log_norm_cdf(-3.0) - std::log(testsup::norm_cdf_series(-3.0))) < 1e-10);
}

TEST_CASE("normal quantile values from the bisection oracle") {
    CHECK(std::fabs(norm_quantile(0.5)) < 1e-12);
    CHECK(norm_quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
    CHECK(norm_quantile(0.99) == doctest::Approx(2.326348).epsilon(1e-6));
    CHECK(norm_quantile(0.99) == doctest::Approx(testsup::norm_quantile_bisect(0.99)).epsilon(1e-9));
    CHECK_THROWS_AS(norm_quantile(0.0), std::domain_error);
    CHECK_THROWS_AS(norm_quantile(1.0), std::domain_error);
    CHECK_THROWS_AS(norm_quantile(-0.2), std::domain_error);
}

TEST_CASE("quantile and cdf invert each other") {
    for (double p : {0.001, 0.025, 0.2, 0.5, 0.8, 0.975, 0.999})
        CHECK(std::fabs(norm_cdf(norm_quantile(p)) - p) < 1e-10);
    for (double x = -6.0; x <= 6.0; x += 0.5)
        CHECK(std::fabs(norm_quantile(norm_cdf(x)) - x) < 1e-8);
}

TEST_CASE("t quantile values from the quadrature oracle") {
    CHECK(std::fabs(t_quantile(0.5, 7.0)) < 1e-12);
    CHECK(t_quantile(0.975, 23.0) == doctest::Approx(2.068658).epsilon(1e-5));
    CHECK(t_quantile(0.975, 11.0) == doctest::Approx(2.200985).epsilon(1e-5));
    CHECK(t_quantile(0.975, 23.0) ==
          doctest::Approx(testsup::t_quantile_bisect(0.975, 23.0)).epsilon(1e-7));
    CHECK_THROWS_AS(t_quantile(1.2, 5.0), std::domain_error);
    CHECK_THROWS_AS(t_quantile(0.5, 0.0), std::domain_error);
}

TEST_CASE("t quantile is monotone in p and approaches the normal quantile in df") {
    double prev = -1e300;
    for (double p : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
        const double q = t_quantile(p, 9.0);
        CHECK(q > prev);
        prev = q;
    }
    const double z = norm_quantile(0.975);
    double last = std::numeric_limits<double>::infinity();
    for (double df : {2.0, 5.0, 10.0, 50.0, 500.0}) {
        const double q = t_quantile(0.975, df);
        CHECK(q < last);
        CHECK(q > z);
        last = q;
    }
    CHECK(t_quantile(0.975, 500.0) == doctest::Approx(z).epsilon(2e-3));
}

TEST_CASE("t cdf matches the quadrature oracle") {
    for (double x : {-3.0, -1.0, 0.0, 0.5, 2.2})
        for (double df : {1.0, 4.0, 23.0})
            CHECK(std::fabs(t_cdf(x, df) - testsup::t_cdf_simpson(x, df)) < 1e-7);
}

TEST_CASE("numeric gradient on simple functions") {
    auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    CHECK(numeric_gradient(square, {3.0})[0] == doctest::Approx(6.0).epsilon(1e-6));

    auto constant = [](const std::vector<double>&) { return 4.2; };
    for (double g : numeric_gradient(constant, {1.0, -2.0, 0.3})) CHECK(std::fabs(g) < 1e-12);

    auto prod = [](const std::vector<double>& x) { return x[0] * x[1]; };
    const auto g = numeric_gradient(prod, {2.0, 5.0});
    CHECK(g[0] == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(g[1] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("numeric gradient is exact on random quadratics") {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int rep = 0; rep < 20; ++rep) {
        const double a = u(gen), b = u(gen), c = u(gen), d = u(gen);
        auto f = [&](const std::vector<double>& x) {
            return a * x[0] * x[0] + b * x[0] * x[1] + c * x[1] * x[1] + d * x[0];
        };
        const std::vector<double> x{u(gen), u(gen)};
        const auto g = numeric_gradient(f, x);
        const double g0 = 2.0 * a * x[0] + b * x[1] + d;
        const double g1 = b * x[0] + 2.0 * c * x[1];
        CHECK(std::fabs(g[0] - g0) <= 1e-6 * std::max(1.0, std::fabs(g0)));
        CHECK(std::fabs(g[1] - g1) <= 1e-6 * std::max(1.0, std::fabs(g1)));
    }
}

TEST_CASE("numeric gradient rejects non-finite probes") {
    auto f = [](const std::vector<double>& x) { return std::log(x[0]); };
    CHECK_THROWS_AS(numeric_gradient(f, {1e-9}), std::domain_error);
}

TEST_CASE("numeric hessian on simple functions") {
    auto square = [](const std::vector<double>& x) { return x[0] * x[0]; };
    CHECK(numeric_hessian(square, {1.3})(0, 0) == doctest::Approx(2.0).epsilon(1e-4));

    auto bowl = [](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; };
    const auto h = numeric_hessian(bowl, {0.4, -0.9});
    CHECK(h(0, 0) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(h(1, 1) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(std::fabs(h(0, 1)) < 1e-4);

    auto prod = [](const std::vector<double>& x) { return x[0] * x[1]; };
    const auto hp = numeric_hessian(prod, {2.0, 5.0});
    CHECK(hp(0, 1) == doctest::Approx(1.0).epsilon(1e-4));
    CHECK(std::fabs(hp(0, 0)) < 1e-4);
    CHECK(hp(0, 1) == hp(1, 0));
}

TEST_CASE("symmetric matrix shares storage across the diagonal") {
    SymmetricMatrix m(3);
    m(0, 2) = 4.5;
    CHECK(m(2, 0) == 4.5);
    m(2, 1) = -1.0;
    CHECK(m(1, 2) == -1.0);
    CHECK(m.dim() == 3);
}

TEST_CASE("matrix inverse and definiteness checks") {
    SymmetricMatrix m(2);
    m(0, 0) = 4.0;
    m(1, 1) = 9.0;
    m(0, 1) = 2.0;  // det 32, positive definite
    const auto inv = invert(m);
    REQUIRE(inv.has_value());
    CHECK((*inv)(0, 0) == doctest::Approx(9.0 / 32.0).epsilon(1e-12));
    CHECK((*inv)(0, 1) == doctest::Approx(-2.0 / 32.0).epsilon(1e-12));
    CHECK(is_positive_definite(m));

    const auto ev = eigenvalues(m);
    REQUIRE(ev.size() == 2);
    CHECK(ev[0] * ev[1] == doctest::Approx(32.0).epsilon(1e-9));
    CHECK(ev[0] + ev[1] == doctest::Approx(13.0).epsilon(1e-9));

    SymmetricMatrix s(2);
    s(0, 0) = 1.0;
    s(1, 1) = 1.0;
    s(0, 1) = 1.0;  // singular
    CHECK_FALSE(invert(s).has_value());
    CHECK_FALSE(is_positive_definite(s));

    SymmetricMatrix neg(1);
    neg(0, 0) = -2.0;
    CHECK_FALSE(is_positive_definite(neg));
}

TEST_CASE("bounded maximization on simple objectives") {
    auto f1 = [](const std::vector<double>& x) { return -(x[0] - 2.0) * (x[0] - 2.0); };
    const auto r1 = maximize_bounded(f1, {0.0}, {{0.0}, {5.0}});
    CHECK(r1.converged);
    CHECK(r1.point[0] == doctest::Approx(2.0).epsilon(1e-6));

    auto f2 = [](const std::vector<double>& x) { return x[0]; };
    const auto r2 = maximize_bounded(f2, {0.5}, {{0.0}, {1.0}});
    CHECK(r2.converged);
    CHECK(r2.point[0] == doctest::Approx(1.0).epsilon(1e-9));

    auto f3 = [](const std::vector<double>& x) {
        return -(x[0] - 1.0) * (x[0] - 1.0) - 10.0 * (x[1] + 3.0) * (x[1] + 3.0);
    };
    const auto r3 = maximize_bounded(f3, {0.0, 0.0}, {{-5.0, -5.0}, {5.0, 5.0}});
    CHECK(r3.converged);
    CHECK(r3.point[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(r3.point[1] == doctest::Approx(-3.0).epsilon(1e-5));
}

TEST_CASE("bounded maximization recovers projected optima from random starts") {
    // diagonal concave quadratic: the box projection of the unconstrained
    // maximizer is the constrained one, coordinate by coordinate
    const std::vector<double> center{2.5, -4.0, 0.3};
    const std::vector<double> scale{1.0, 0.5, 3.0};
    const BoxBounds box{{-1.0, -1.0, -1.0}, {1.0, 1.0, 1.0}};
    auto f = [&](const std::vector<double>& x) {
        double v = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j)
            v -= scale[j] * (x[j] - center[j]) * (x[j] - center[j]);
        return v;
    };
    std::vector<double> expect;
    for (std::size_t j = 0; j < center.size(); ++j)
        expect.push_back(std::clamp(center[j], box.lower[j], box.upper[j]));

    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const std::vector<double> start{u(gen), u(gen), u(gen)};
        const auto r = maximize_bounded(f, start, box);
        CHECK(r.converged);
        for (std::size_t j = 0; j < expect.size(); ++j)
            CHECK(r.point[j] == doctest::Approx(expect[j]).epsilon(1e-5));
    }
}

TEST_CASE("converged results satisfy the interior gradient criterion") {
    auto f = [](const std::vector<double>& x) {
        return -(x[0] - 0.3) * (x[0] - 0.3) - 2.0 * x[1] * x[1] - x[0] * x[1];
    };
    const BoxBounds box{{-2.0, -2.0}, {2.0, 2.0}};
    const auto r = maximize_bounded(f, {1.0, 1.0}, box);
    REQUIRE(r.converged);
    CHECK(box.contains(r.point));
    const auto g = numeric_gradient(f, r.point);
    for (std::size_t j = 0; j < g.size(); ++j) {
        const bool interior = r.point[j] > box.lower[j] + 1e-9 && r.point[j] < box.upper[j] - 1e-9;
        if (interior) CHECK(std::fabs(g[j]) < 1e-4);
    }
}

TEST_CASE("box bounds validate and project") {
    BoxBounds b{{0.0, -1.0}, {1.0, 1.0}};
    b.check();
    CHECK(b.contains({0.5, 0.0}));
    CHECK_FALSE(b.contains({1.5, 0.0}));
    const auto p = b.project({2.0, -3.0});
    CHECK(p[0] == 1.0);
    CHECK(p[1] == -1.0);

    BoxBounds bad{{1.0}, {0.0}};
    CHECK_THROWS_AS(bad.check(), std::invalid_argument);
    BoxBounds mismatched{{0.0, 0.0}, {1.0}};
    CHECK_THROWS_AS(mismatched.check(), std::invalid_argument);
}

TEST_SUITE_END();
