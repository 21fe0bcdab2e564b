#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "metabias/dataset.hpp"

namespace metabias {

// One fitted point of the sensitivity curve at fixed selection parameters.
struct SensitivityPoint {
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    double theta_hat = 0.0;
    double tau_hat = 0.0;
    double rho_hat = 0.0;
    double se_theta = 0.0;  // NaN when the observed information is unusable
    double expected_m = 0.0;
    double gof_p = 0.0;  // NaN until computed
    double loglik = 0.0;
    bool converged = false;
};

struct SensitivityCurve {
    std::vector<SensitivityPoint> points;  // ascending expected_m
    std::optional<std::size_t> selected;
    // set when no point passed the goodness-of-fit screen and the selection
    // fell back to the largest-expected_m point
    bool selected_flagged = false;
};

// Probability ladder defining the selection grid. Each rung fixes the
// publication probability of the least precise study (p_low, anchored at
// s_max) while the most precise study is held at p_high (anchored at s_min);
// the two-point probit solve turns the pair into (alpha0, alpha1).
struct GridConfig {
    double p_low_start = 0.99;
    double p_low_end = 0.20;
    double p_low_step = 0.01;
    double p_high = 0.95;
};

std::pair<double, double> alphas_from_anchors(double p_low, double p_high, double s_min,
                                              double s_max);

// Log-likelihood of the published effects conditional on publication, with
// the within-study variance inflated by the selection truncation. Additive
// constants (-n/2 log 2pi) are excluded. Even in tau; -inf outside the
// feasible region (|rho| >= 1 or a collapsing truncation denominator).
double cond_loglik(const std::array<double, 3>& params /* theta, tau, rho */,
                   const std::pair<double, double>& alphas, const MetaDataset& ds);

// Expected number of unpublished studies implied by the selection
// probabilities of the published ones; +inf when a probability underflows
// to zero.
double expected_unpublished(const std::pair<double, double>& alphas, const MetaDataset& ds);

// Maximizes cond_loglik over (theta, tau, rho) in
// [-10,10] x [1e-8, 5] x [-0.9999, 0.9999]. The cold overload multistarts
// from the ML random-effects fit with rho in {-0.6, 0, 0.6}; the warm
// overload runs a single fit from the given start. A failed optimizer still
// returns the best point found, marked converged=false. se_theta comes from
// the theta entry of the inverse observed information (3x3 numeric Hessian,
// tau probed two-sided through 0, rho steps kept inside |rho| < 1).
SensitivityPoint fit_conditional(const std::pair<double, double>& alphas, const MetaDataset& ds);
SensitivityPoint fit_conditional(const std::pair<double, double>& alphas, const MetaDataset& ds,
                                 const std::array<double, 3>& start);

// Standardized residuals of the published effects against their
// selection-adjusted conditional means under the fitted point, screened with
// the Egger-type intercept regression; two-sided p, df N-2.
double residual_gof_p(const SensitivityPoint& point, const MetaDataset& ds);

// Full sensitivity sweep. Fits run warm along the descending-p_low ladder;
// when the ladder first collapses to tau ~ 0 a second warm pass walks back
// up from the collapse onset, and each rung keeps, among candidates within
// 0.05 log-likelihood of the rung best and with |rho| <= 0.995, the one with
// the smallest tau (falling back to the highest likelihood). Points are
// returned in ascending expected_m order. selected follows the smallest
// expected_m with gof_p > 0.1, else the last point with the flag set.
SensitivityCurve run_grid(const MetaDataset& ds, const GridConfig& cfg = {});

}  // namespace metabias
