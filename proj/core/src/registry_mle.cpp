#include "metabias/registry_mle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "metabias/remeta.hpp"

namespace metabias {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// rho stops one step short of the correlation boundary so that information
// probes at the optimum stay inside the domain.
const BoxBounds kRegistryBounds{{-10.0, 1e-8, -0.999, -20.0, -5.0},
                                {10.0, 5.0, 0.999, 20.0, 5.0}};

struct FlatData {
    std::vector<double> yi, sei, sqrt_n_pub, sqrt_n_unp;
};

FlatData flatten(const MetaDataset& ds) {
    FlatData d;
    d.yi = ds.published_yi();
    d.sei = ds.published_sei();
    for (double n : ds.published_n()) d.sqrt_n_pub.push_back(std::sqrt(n));
    for (double n : ds.unpublished_n()) d.sqrt_n_unp.push_back(std::sqrt(n));
    return d;
}

double loglik_impl(const std::array<double, 5>& q, const FlatData& d) {
    const double theta = q[0], tau = q[1], rho = q[2], a0 = q[3], a1 = q[4];
    if (std::abs(rho) >= 1.0) return kNegInf;
    const double t2 = tau * tau;
    double ll = 0.0;
    for (std::size_t i = 0; i < d.yi.size(); ++i) {
        const double s2 = d.sei[i] * d.sei[i];
        const double v = t2 + s2;
        const double rt = 1.0 - rho * rho * s2 / v;
        if (rt <= 0.0) return kNegInf;
        const double u = a0 + a1 * d.sqrt_n_pub[i];
        const double r = d.yi[i] - theta;
        const double vt = (u + rho * d.sei[i] * r / v) / std::sqrt(rt);
        ll += -0.5 * std::log(v) - r * r / (2.0 * v) + log_norm_cdf(vt);
    }
    for (double sq : d.sqrt_n_unp) ll += log_norm_cdf(-(a0 + a1 * sq));
    return std::isfinite(ll) ? ll : kNegInf;
}

// Probit regression of publication status on sqrt(n) by iterative reweighted
// least squares; returns (0, 0) when the iteration degenerates.
std::pair<double, double> probit_start(const FlatData& d) {
    std::vector<double> x(d.sqrt_n_pub);
    x.insert(x.end(), d.sqrt_n_unp.begin(), d.sqrt_n_unp.end());
    const std::size_t n_pub = d.sqrt_n_pub.size();
    double b0 = 0.0, b1 = 0.0;
    for (int it = 0; it < 25; ++it) {
        double s00 = 0, s01 = 0, s11 = 0, r0 = 0, r1 = 0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double eta = b0 + b1 * x[i];
            const double p = std::clamp(norm_cdf(eta), 1e-10, 1.0 - 1e-10);
            const double phi = norm_pdf(eta);
            const double w = phi * phi / (p * (1.0 - p));
            const double dd = i < n_pub ? 1.0 : 0.0;
            const double z = eta + (dd - p) / std::max(phi, 1e-12);
            s00 += w;
            s01 += w * x[i];
            s11 += w * x[i] * x[i];
            r0 += w * z;
            r1 += w * x[i] * z;
        }
        const double det = s00 * s11 - s01 * s01;
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
        const double n0 = (s11 * r0 - s01 * r1) / det;
        const double n1 = (s00 * r1 - s01 * r0) / det;
        if (!std::isfinite(n0) || !std::isfinite(n1)) break;
        const double step = std::max(std::abs(n0 - b0), std::abs(n1 - b1));
        b0 = n0;
        b1 = n1;
        if (step < 1e-8) break;
    }
    if (!std::isfinite(b0) || !std::isfinite(b1)) return {0.0, 0.0};
    return {b0, b1};
}

// (theta, tau) start; REML first, inverse-variance pooling when the scoring
// iteration fails to settle.
std::pair<double, double> pooled_start(const MetaDataset& ds, const FlatData& d) {
    try {
        const RandomEffectsFit re = fit_random_effects(ds, PoolMethod::reml);
        return {re.theta_hat, std::max(std::sqrt(re.tau2_hat), 0.01)};
    } catch (const RemlConvergenceError&) {
        double sw = 0.0, swy = 0.0;
        for (std::size_t i = 0; i < d.yi.size(); ++i) {
            const double w = 1.0 / (d.sei[i] * d.sei[i]);
            sw += w;
            swy += w * d.yi[i];
        }
        return {swy / sw, 0.01};
    }
}

SymmetricMatrix nan_info() {
    SymmetricMatrix m(5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j <= i; ++j) m(i, j) = kNan;
    return m;
}

}  // namespace

double full_loglik(const std::array<double, 5>& params, const MetaDataset& dataset) {
    return loglik_impl(params, flatten(dataset));
}

CopasRegistryFit fit_full_mle(const MetaDataset& dataset, const RegistryFitConfig& config) {
    if (dataset.n_published() < 2)
        throw DatasetError("full MLE needs at least 2 published studies");
    const FlatData d = flatten(dataset);
    const auto [theta0, tau0] = pooled_start(dataset, d);
    const auto [b0, b1] = probit_start(d);
    const double a0s = std::clamp(b0, -19.0, 19.0);
    const double a1s = std::clamp(b1, -4.9, 4.9);

    const ObjectiveFn f = [&d](const std::vector<double>& q) {
        return loglik_impl({q[0], q[1], q[2], q[3], q[4]}, d);
    };

    OptimResult best;
    bool have_best = false, best_converged = false;
    for (double rho0 : config.rho_starts) {
        const OptimResult res =
            maximize_bounded(f, {theta0, tau0, rho0, a0s, a1s}, kRegistryBounds, config.optim);
        // converged candidates outrank the rest; ties by start order
        const bool better = !have_best || (res.converged && !best_converged) ||
                            (res.converged == best_converged && res.value > best.value);
        if (better) {
            best = res;
            have_best = true;
            best_converged = res.converged;
        }
    }

    CopasRegistryFit fit;
    fit.theta = best.point[0];
    fit.tau = best.point[1];
    fit.rho = best.point[2];
    fit.alpha0 = best.point[3];
    fit.alpha1 = best.point[4];
    fit.loglik = best.value;
    fit.n_published = dataset.n_published();
    fit.n_unpublished = dataset.n_unpublished();

    std::vector<double> steps(5);
    for (std::size_t j = 0; j < 5; ++j) steps[j] = 1e-4 * std::max(1.0, std::abs(best.point[j]));
    steps[2] = std::min(steps[2], (1.0 - std::abs(fit.rho)) / 2.0);
    if (steps[2] <= 0.0) steps[2] = 1e-7;

    bool usable = false;
    try {
        const SymmetricMatrix h = numeric_hessian(f, best.point, steps);
        fit.info = SymmetricMatrix(5);
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j <= i; ++j) fit.info(i, j) = -h(i, j);
        if (const auto cov = invert(fit.info); cov && (*cov)(0, 0) > 0.0) {
            fit.se_theta = std::sqrt((*cov)(0, 0));
            usable = true;
        } else {
            fit.se_theta = kNan;
        }
    } catch (const std::domain_error&) {
        fit.info = nan_info();
        fit.se_theta = kNan;
    }
    fit.converged = best_converged && usable;
    return fit;
}

CIBundle ci_bundle(const CopasRegistryFit& fit, double knha_se, double level) {
    if (!fit.converged) throw std::invalid_argument("ci_bundle needs a converged fit");
    if (!(knha_se >= 0.0)) throw std::invalid_argument("knha_se must be nonnegative");
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
    const double p = 0.5 + level / 2.0;
    const double z = norm_quantile(p);
    const std::size_t df = fit.n_published - 1;
    const double tq = t_quantile(p, double(df));
    const double se_sharp = std::max(fit.se_theta, knha_se);
    CIBundle ci;
    ci.normal = {fit.theta - z * fit.se_theta, fit.theta + z * fit.se_theta};
    ci.t = {fit.theta - tq * fit.se_theta, fit.theta + tq * fit.se_theta};
    ci.se_sharp = {fit.theta - tq * se_sharp, fit.theta + tq * se_sharp};
    ci.level = level;
    ci.df_used = df;
    ci.se_used_sharp = se_sharp;
    return ci;
}

}  // namespace metabias
