#include "metabias/copas_sens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "metabias/numkit.hpp"
#include "metabias/remeta.hpp"

namespace metabias {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// inverse Mills ratio phi(u)/Phi(u), stable far into the left tail
double inv_mills(double u) { return std::exp(-0.5 * u * u - 0.9189385332046727 - log_norm_cdf(u)); }

const BoxBounds kSensBounds{{-10.0, 1e-8, -0.9999}, {10.0, 5.0, 0.9999}};

struct PubData {
    std::vector<double> yi, sei;
};

PubData pub_data(const MetaDataset& ds) { return {ds.published_yi(), ds.published_sei()}; }

// the multistart only needs a sane anchor; scoring can cycle on odd draws
std::pair<double, double> pooled_start(const MetaDataset& ds, const PubData& d) {
    try {
        const RandomEffectsFit ml = fit_random_effects(ds, PoolMethod::ml);
        return {ml.theta_hat, std::max(std::sqrt(ml.tau2_hat), 0.01)};
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

double loglik_impl(const std::array<double, 3>& p, double a0, double a1, const PubData& d) {
    const double th = p[0], tau = p[1], rho = p[2];
    if (std::fabs(rho) >= 1.0) return -kInf;
    const double t2 = tau * tau;
    double ll = 0.0;
    for (std::size_t i = 0; i < d.yi.size(); ++i) {
        const double s = d.sei[i];
        const double u = a0 + a1 / s;
        const double lam = inv_mills(u);
        const double denom = 1.0 - rho * rho * lam * (u + lam);
        if (denom <= 1e-10) return -kInf;
        const double s2 = s * s / denom;
        const double v = t2 + s2;
        const double rt = 1.0 - rho * rho * s2 / v;
        if (rt <= 0.0) return -kInf;
        const double r = d.yi[i] - th;
        const double vi = (u + rho * std::sqrt(s2) * r / v) / std::sqrt(rt);
        ll += -0.5 * std::log(v) - r * r / (2.0 * v) - log_norm_cdf(u) + log_norm_cdf(vi);
    }
    return std::isfinite(ll) ? ll : -kInf;
}

double se_from_info(const std::array<double, 3>& par, double a0, double a1, const PubData& d) {
    const ObjectiveFn f = [&](const std::vector<double>& q) {
        return loglik_impl({q[0], q[1], q[2]}, a0, a1, d);
    };
    std::vector<double> x(par.begin(), par.end());
    std::vector<double> steps(3);
    for (int j = 0; j < 3; ++j) steps[j] = 1e-4 * std::max(1.0, std::fabs(x[j]));
    steps[2] = std::min(steps[2], (1.0 - std::fabs(x[2])) / 2.0);
    if (steps[2] <= 0.0) steps[2] = 1e-7;
    try {
        SymmetricMatrix h = numeric_hessian(f, x, steps);
        SymmetricMatrix info(3);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j <= i; ++j) info(i, j) = -h(i, j);
        const auto cov = invert(info);
        if (cov && (*cov)(0, 0) > 0.0) return std::sqrt((*cov)(0, 0));
    } catch (const std::domain_error&) {
    }
    return kNan;
}

struct RawFit {
    bool ok;
    double ll;
    std::array<double, 3> x;
};

RawFit fit_raw(const std::array<double, 3>& start, double a0, double a1, const PubData& d) {
    const ObjectiveFn f = [&](const std::vector<double>& q) {
        return loglik_impl({q[0], q[1], q[2]}, a0, a1, d);
    };
    const OptimResult r =
        maximize_bounded(f, {start[0], start[1], start[2]}, kSensBounds);
    return {r.converged, r.value, {r.point[0], r.point[1], r.point[2]}};
}

double expected_m_impl(double a0, double a1, const std::vector<double>& sei) {
    double m = 0.0;
    for (double s : sei) {
        const double p = norm_cdf(a0 + a1 / s);
        if (p <= 0.0) return kInf;
        m += (1.0 - p) / p;
    }
    return m;
}

SensitivityPoint make_point(const RawFit& fit, double a0, double a1, const MetaDataset& ds,
                            const PubData& d) {
    SensitivityPoint pt;
    pt.alpha0 = a0;
    pt.alpha1 = a1;
    pt.theta_hat = fit.x[0];
    pt.tau_hat = fit.x[1];
    pt.rho_hat = fit.x[2];
    pt.loglik = fit.ll;
    pt.converged = fit.ok;
    pt.expected_m = expected_m_impl(a0, a1, d.sei);
    pt.se_theta = se_from_info(fit.x, a0, a1, d);
    pt.gof_p = fit.ok ? residual_gof_p(pt, ds) : kNan;
    return pt;
}

}  // namespace

std::pair<double, double> alphas_from_anchors(double p_low, double p_high, double s_min,
                                              double s_max) {
    const double zl = norm_quantile(p_low);
    const double zh = norm_quantile(p_high);
    const double a1 = (zh - zl) / (1.0 / s_min - 1.0 / s_max);
    return {zl - a1 / s_max, a1};
}

double cond_loglik(const std::array<double, 3>& params, const std::pair<double, double>& alphas,
                   const MetaDataset& ds) {
    const PubData d = pub_data(ds);
    return loglik_impl(params, alphas.first, alphas.second, d);
}

double expected_unpublished(const std::pair<double, double>& alphas, const MetaDataset& ds) {
    return expected_m_impl(alphas.first, alphas.second, ds.published_sei());
}

SensitivityPoint fit_conditional(const std::pair<double, double>& alphas, const MetaDataset& ds,
                                 const std::array<double, 3>& start) {
    const PubData d = pub_data(ds);
    const RawFit fit = fit_raw(start, alphas.first, alphas.second, d);
    return make_point(fit, alphas.first, alphas.second, ds, d);
}

SensitivityPoint fit_conditional(const std::pair<double, double>& alphas, const MetaDataset& ds) {
    const PubData d = pub_data(ds);
    const auto [theta0, tau0] = pooled_start(ds, d);

    RawFit best{false, -kInf, {theta0, tau0, 0.0}};
    for (const double rho0 : {-0.6, 0.0, 0.6}) {
        const RawFit fit = fit_raw({theta0, tau0, rho0}, alphas.first, alphas.second, d);
        const bool better = (fit.ok && !best.ok) || (fit.ok == best.ok && fit.ll > best.ll);
        if (better) best = fit;
    }
    return make_point(best, alphas.first, alphas.second, ds, d);
}

double residual_gof_p(const SensitivityPoint& point, const MetaDataset& ds) {
    const auto yi = ds.published_yi();
    const auto sei = ds.published_sei();
    const std::size_t k = yi.size();
    if (k < 3) throw DatasetError("residual_gof_p: needs at least 3 published studies");

    const double th = point.theta_hat, tau = point.tau_hat, rho = point.rho_hat;
    const double t2 = tau * tau;
    std::vector<double> z(k), prec(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double u = point.alpha0 + point.alpha1 / sei[i];
        const double lam = inv_mills(u);
        const double denom = 1.0 - rho * rho * lam * (u + lam);
        const double s2 = (denom > 1e-10) ? sei[i] * sei[i] / denom : sei[i] * sei[i];
        const double st = std::sqrt(s2);
        const double vmarg = t2 + s2;
        const double r2 = rho * rho * s2 / vmarg;  // squared corr of effect and selection
        double cond_var = vmarg * (1.0 - r2 * lam * (lam + u));
        if (!(cond_var > 0.0)) cond_var = vmarg;
        z[i] = (yi[i] - th - rho * st * lam) / std::sqrt(cond_var);
        prec[i] = 1.0 / st;
    }

    // Egger-type screen: OLS of the standardized residuals on precision,
    // two-sided t test of the intercept.
    const double n = double(k);
    double sx = 0.0, sz = 0.0, sxx = 0.0, sxz = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        sx += prec[i];
        sz += z[i];
        sxx += prec[i] * prec[i];
        sxz += prec[i] * z[i];
    }
    const double slope = (n * sxz - sx * sz) / (n * sxx - sx * sx);
    const double intercept = (sz - slope * sx) / n;
    double rss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double r = z[i] - intercept - slope * prec[i];
        rss += r * r;
    }
    const double sigma2 = rss / (n - 2.0);
    const double se_int = std::sqrt(sigma2 * sxx / (n * sxx - sx * sx));
    if (!(se_int > 0.0)) return kNan;
    const double t = intercept / se_int;
    return 2.0 * (1.0 - t_cdf(std::fabs(t), n - 2.0));
}

SensitivityCurve run_grid(const MetaDataset& ds, const GridConfig& cfg) {
    const PubData d = pub_data(ds);
    const double s_min = *std::min_element(d.sei.begin(), d.sei.end());
    const double s_max = *std::max_element(d.sei.begin(), d.sei.end());

    struct Rung {
        double p_low, a0, a1, m;
        std::vector<RawFit> cand;
    };
    const int n_rungs =
        int(std::lround((cfg.p_low_start - cfg.p_low_end) / cfg.p_low_step)) + 1;
    std::vector<Rung> rungs;
    rungs.reserve(n_rungs);
    for (int i = 0; i < n_rungs; ++i) {
        const double pl = cfg.p_low_start - i * cfg.p_low_step;
        const auto [a0, a1] = alphas_from_anchors(pl, cfg.p_high, s_min, s_max);
        rungs.push_back({pl, a0, a1, expected_m_impl(a0, a1, d.sei), {}});
    }

    const auto [theta0, tau0] = pooled_start(ds, d);

    // descending pass, warm-started rung to rung; record where tau collapses
    std::array<double, 3> p{theta0, tau0, 0.0};
    int onset = -1;
    for (int i = 0; i < int(rungs.size()); ++i) {
        const RawFit fit = fit_raw(p, rungs[i].a0, rungs[i].a1, d);
        if (!fit.ok) continue;
        rungs[i].cand.push_back(fit);
        p = fit.x;
        if (onset < 0 && fit.x[1] < 1e-4) onset = i;
    }

    // ascending pass from the collapse onset: walking the tau ~ 0 branch back
    // up gives each rung a second candidate on the other side of the fold
    if (onset >= 0) {
        p = rungs[onset].cand.front().x;
        for (int i = onset - 1; i >= 0; --i) {
            const RawFit fit = fit_raw(p, rungs[i].a0, rungs[i].a1, d);
            if (!fit.ok) break;
            rungs[i].cand.push_back(fit);
            p = fit.x;
        }
    }

    SensitivityCurve curve;
    for (const Rung& r : rungs) {
        if (r.cand.empty()) continue;
        double best_ll = -kInf;
        for (const RawFit& c : r.cand) best_ll = std::max(best_ll, c.ll);
        const RawFit* pick = nullptr;
        for (const RawFit& c : r.cand) {
            if (std::fabs(c.x[2]) > 0.995 || c.ll < best_ll - 0.05) continue;
            if (!pick || c.x[1] < pick->x[1]) pick = &c;
        }
        if (!pick) {
            for (const RawFit& c : r.cand)
                if (!pick || c.ll > pick->ll) pick = &c;
        }
        curve.points.push_back(make_point(*pick, r.a0, r.a1, ds, d));
    }

    std::stable_sort(curve.points.begin(), curve.points.end(),
                     [](const SensitivityPoint& a, const SensitivityPoint& b) {
                         return a.expected_m < b.expected_m;
                     });

    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        if (curve.points[i].converged && curve.points[i].gof_p > 0.1) {
            curve.selected = i;
            break;
        }
    }
    if (!curve.selected) {
        for (std::size_t i = curve.points.size(); i-- > 0;) {
            if (curve.points[i].converged) {
                curve.selected = i;
                curve.selected_flagged = true;
                break;
            }
        }
    }
    return curve;
}

}  // namespace metabias
