#include "metabias/remeta.hpp"

#include <cmath>

#include "metabias/numkit.hpp"

namespace metabias {

namespace {

struct Pooled {
    double theta;
    double sum_w;
};

Pooled pool(const std::vector<double>& yi, const std::vector<double>& sei, double tau2) {
    double sw = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < yi.size(); ++i) {
        const double w = 1.0 / (sei[i] * sei[i] + tau2);
        sw += w;
        swy += w * yi[i];
    }
    return {swy / sw, sw};
}

double dl_start(const std::vector<double>& yi, const std::vector<double>& sei) {
    const std::size_t k = yi.size();
    double sw = 0.0, swy = 0.0, sw2 = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = 1.0 / (sei[i] * sei[i]);
        sw += w;
        swy += w * yi[i];
        sw2 += w * w;
    }
    const double th = swy / sw;
    double q = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = 1.0 / (sei[i] * sei[i]);
        q += w * (yi[i] - th) * (yi[i] - th);
    }
    return std::max(0.0, (q - double(k - 1)) / (sw - sw2 / sw));
}

}  // namespace

RandomEffectsFit fit_random_effects(const MetaDataset& ds, PoolMethod method) {
    const auto yi = ds.published_yi();
    const auto sei = ds.published_sei();
    const std::size_t k = yi.size();
    if (k < 2) throw DatasetError("fit_random_effects: needs at least 2 published studies");

    double tau2 = dl_start(yi, sei);
    bool converged = false;
    for (int it = 0; it < 200; ++it) {
        const auto [th, sw] = pool(yi, sei, tau2);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double w = 1.0 / (sei[i] * sei[i] + tau2);
            const double r = yi[i] - th;
            num += w * w * (r * r - sei[i] * sei[i]);
            den += w * w;
        }
        if (method == PoolMethod::reml) num += den / sw;
        const double tau2_new = std::max(0.0, num / den);
        const double delta = std::fabs(tau2_new - tau2);
        tau2 = tau2_new;
        if (delta < 1e-10 * std::max(1.0, tau2)) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw RemlConvergenceError("fit_random_effects: scoring did not converge", tau2);

    const auto [th, sw] = pool(yi, sei, tau2);
    RandomEffectsFit fit;
    fit.theta_hat = th;
    fit.tau2_hat = tau2;
    fit.se_theta = 1.0 / std::sqrt(sw);
    fit.k = k;
    fit.method = method;
    return fit;
}

std::pair<double, double> ci_normal(const RandomEffectsFit& fit, double level) {
    const double z = norm_quantile(0.5 + 0.5 * level);
    return {fit.theta_hat - z * fit.se_theta, fit.theta_hat + z * fit.se_theta};
}

KnhaInterval ci_knapp_hartung(const MetaDataset& ds, const RandomEffectsFit& fit, double level) {
    const auto yi = ds.published_yi();
    const auto sei = ds.published_sei();
    const std::size_t k = yi.size();
    double sw = 0.0, q = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = 1.0 / (sei[i] * sei[i] + fit.tau2_hat);
        sw += w;
        q += w * (yi[i] - fit.theta_hat) * (yi[i] - fit.theta_hat);
    }
    const double se_hk = std::sqrt(q / (double(k - 1) * sw));
    const double t = t_quantile(0.5 + 0.5 * level, double(k - 1));
    return {fit.theta_hat - t * se_hk, fit.theta_hat + t * se_hk, se_hk};
}

AsymmetryTest egger_test(const MetaDataset& ds) {
    const auto yi = ds.published_yi();
    const auto sei = ds.published_sei();
    const std::size_t k = yi.size();
    if (k < 3) throw DatasetError("egger_test: needs at least 3 published studies");

    // OLS of z = yi/sei on x = 1/sei; the intercept is the asymmetry term
    double sx = 0.0, sz = 0.0, sxx = 0.0, sxz = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double x = 1.0 / sei[i];
        const double z = yi[i] / sei[i];
        sx += x;
        sz += z;
        sxx += x * x;
        sxz += x * z;
    }
    const double n = double(k);
    const double slope = (n * sxz - sx * sz) / (n * sxx - sx * sx);
    const double intercept = (sz - slope * sx) / n;
    double rss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double x = 1.0 / sei[i];
        const double r = yi[i] / sei[i] - intercept - slope * x;
        rss += r * r;
    }
    const double sigma2 = rss / (n - 2.0);
    const double se_int = std::sqrt(sigma2 * sxx / (n * sxx - sx * sx));
    const double t = intercept / se_int;
    const double p = 2.0 * (1.0 - t_cdf(std::fabs(t), n - 2.0));
    return {AsymmetryTest::Kind::egger, t, p, k - 2};
}

AsymmetryTest macaskill_test(const MetaDataset& ds) {
    const auto yi = ds.published_yi();
    const auto sei = ds.published_sei();
    const auto ni = ds.published_n();
    const std::size_t k = yi.size();
    if (k < 3) throw DatasetError("macaskill_test: needs at least 3 published studies");

    double sw = 0.0, swx = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = 1.0 / (sei[i] * sei[i]);
        sw += w;
        swx += w * ni[i];
        swy += w * yi[i];
    }
    const double xbar = swx / sw;
    const double ybar = swy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = 1.0 / (sei[i] * sei[i]);
        sxx += w * (ni[i] - xbar) * (ni[i] - xbar);
        sxy += w * (ni[i] - xbar) * (yi[i] - ybar);
    }
    const double slope = sxy / sxx;
    const double intercept = ybar - slope * xbar;
    double wrss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double w = 1.0 / (sei[i] * sei[i]);
        const double r = yi[i] - intercept - slope * ni[i];
        wrss += w * r * r;
    }
    const double sigma2 = wrss / (double(k) - 2.0);
    const double se_slope = std::sqrt(sigma2 / sxx);
    const double t = slope / se_slope;
    const double p = 2.0 * (1.0 - t_cdf(std::fabs(t), double(k) - 2.0));
    return {AsymmetryTest::Kind::macaskill, t, p, k - 2};
}

}  // namespace metabias
