#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>

#include "metabias/dataset.hpp"

namespace metabias {

enum class PoolMethod { reml, ml };

struct RandomEffectsFit {
    double theta_hat = 0.0;
    double tau2_hat = 0.0;
    double se_theta = 0.0;  // 1/sqrt(sum of final weights)
    std::size_t k = 0;      // published studies pooled
    PoolMethod method = PoolMethod::reml;
};

// Thrown when the scoring iteration exhausts its budget; carries the last
// iterate so callers can report how far it got.
class RemlConvergenceError : public std::runtime_error {
public:
    RemlConvergenceError(const std::string& what, double last_tau2)
        : std::runtime_error(what), last_tau2_(last_tau2) {}
    double last_tau2() const { return last_tau2_; }

private:
    double last_tau2_;
};

// Pools the published rows. Fisher scoring on tau^2 from a DerSimonian-Laird
// start, projected onto tau^2 >= 0; throws RemlConvergenceError after 200
// steps without |tau2 change| < 1e-10 * max(1, tau2).
RandomEffectsFit fit_random_effects(const MetaDataset& ds, PoolMethod method = PoolMethod::reml);

std::pair<double, double> ci_normal(const RandomEffectsFit& fit, double level = 0.95);

struct KnhaInterval {
    double lower;
    double upper;
    double se_hk;
};

// Knapp-Hartung interval: scaled-weights variance with a t(k-1) quantile.
// The variance is used as computed, never floored at the normal one.
KnhaInterval ci_knapp_hartung(const MetaDataset& ds, const RandomEffectsFit& fit,
                              double level = 0.95);

struct AsymmetryTest {
    enum class Kind { egger, macaskill };
    Kind kind;
    double statistic;  // t statistic
    double p_value;    // two-sided
    std::size_t df;
};

// Precision regression of yi/sei on 1/sei; t test on the intercept, df k-2.
AsymmetryTest egger_test(const MetaDataset& ds);

// Weighted regression of yi on study size n with weights 1/sei^2; t test on
// the slope, df k-2.
AsymmetryTest macaskill_test(const MetaDataset& ds);

}  // namespace metabias
