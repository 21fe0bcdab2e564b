#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "metabias/dataset.hpp"
#include "metabias/numkit.hpp"

namespace metabias {

// Joint selection-model fit over published studies and registry-identified
// unpublished ones. Parameter order is (theta, tau, rho, alpha0, alpha1)
// everywhere.
struct CopasRegistryFit {
    double theta = 0.0;
    double tau = 0.0;
    double rho = 0.0;
    double alpha0 = 0.0;
    double alpha1 = 0.0;
    SymmetricMatrix info{5};  // observed information at the optimum
    double se_theta = 0.0;    // NaN when the information is unusable
    double loglik = 0.0;
    bool converged = false;
    std::size_t n_published = 0;
    std::size_t n_unpublished = 0;
};

struct RegistryFitConfig {
    std::vector<double> rho_starts{-0.8, -0.4, 0.0, 0.4, 0.8};
    OptimOptions optim{};
};

// Normal-, t-, and max-standard-error confidence intervals around the same
// center. Containment holds by construction: normal within t within se_sharp.
struct CIBundle {
    std::pair<double, double> normal;
    std::pair<double, double> t;
    std::pair<double, double> se_sharp;
    double level = 0.95;
    std::size_t df_used = 0;
    double se_used_sharp = 0.0;
};

// Log likelihood of (theta, tau, rho, alpha0, alpha1) given published rows
// (yi, sei, n) and unpublished rows (n only). Even in tau; additive constants
// dropped as in cond_loglik. Returns -inf outside the domain (|rho| >= 1 or a
// nonpositive conditional variance) instead of throwing.
double full_loglik(const std::array<double, 5>& params, const MetaDataset& dataset);

// Maximizes full_loglik over a fixed box, multi-starting in rho with (theta,
// tau) from the REML fit and (alpha0, alpha1) from a probit regression of
// publication status on sqrt(n) across all studies. Requires at least 2
// published rows. Never throws on optimizer failure: converged=false marks a
// fit whose optimum or information matrix is unusable.
CopasRegistryFit fit_full_mle(const MetaDataset& dataset, const RegistryFitConfig& config = {});

// The three intervals at the given level: normal quantile, t quantile with
// df = n_published - 1, and the t interval with max(se_theta, knha_se) in
// place of se_theta. Throws std::invalid_argument on a non-converged fit.
CIBundle ci_bundle(const CopasRegistryFit& fit, double knha_se, double level = 0.95);

}  // namespace metabias
