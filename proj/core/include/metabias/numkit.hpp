#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

namespace metabias {

// Rectangular parameter box. Infinities mark unbounded coordinates.
struct BoxBounds {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t size() const { return lower.size(); }
    bool contains(const std::vector<double>& x) const;
    // componentwise clamp of x into the box
    std::vector<double> project(std::vector<double> x) const;
    void check() const;  // throws std::invalid_argument on length mismatch or lower > upper
};

struct OptimResult {
    std::vector<double> point;
    double value = 0.0;  // objective value at point (the maximized f)
    bool converged = false;
    int iterations = 0;
};

struct OptimOptions {
    double f_tol = 2.2e-9;    // objective-change criterion, relative to max(1, |f|)
    double grad_tol = 1e-5;   // projected-gradient sup-norm criterion
    int max_iter = 500;
    double fd_step = 1e-5;    // relative finite-difference step for internal gradients
};

// Dense symmetric matrix; (i,j) and (j,i) share one storage slot.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(std::size_t dim) : dim_(dim), a_(dim * (dim + 1) / 2, 0.0) {}

    std::size_t dim() const { return dim_; }
    double& operator()(std::size_t i, std::size_t j) { return a_[idx(i, j)]; }
    double operator()(std::size_t i, std::size_t j) const { return a_[idx(i, j)]; }

private:
    std::size_t idx(std::size_t i, std::size_t j) const {
        if (i < j) std::swap(i, j);
        return i * (i + 1) / 2 + j;
    }
    std::size_t dim_ = 0;
    std::vector<double> a_;
};

// Inverse via Gauss-Jordan with partial pivoting; nullopt when singular to
// working precision. Result is symmetrized.
std::optional<SymmetricMatrix> invert(const SymmetricMatrix& m);

// Eigenvalues by cyclic Jacobi rotations, ascending order.
std::vector<double> eigenvalues(const SymmetricMatrix& m);

bool is_positive_definite(const SymmetricMatrix& m);

// Standard normal density, CDF (absolute error below 1e-12), and log CDF.
// log_norm_cdf stays finite far into the left tail (Mills-ratio continued
// fraction below x = -8).
double norm_pdf(double x);
double norm_cdf(double x);
double log_norm_cdf(double x);
double norm_quantile(double p);

// Student-t CDF and quantile; df >= 1.
double t_cdf(double x, double df);
double t_quantile(double p, double df);

using ObjectiveFn = std::function<double(const std::vector<double>&)>;

// Central differences, h_j = step * max(1, |x_j|).
// Throws std::domain_error when f is non-finite at a probe point.
std::vector<double> numeric_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                     double step = 1e-5);

// Symmetric central-difference Hessian. The steps overload takes one
// absolute step per coordinate (domain-aware callers shrink the step of a
// bounded coordinate to stay inside its domain).
SymmetricMatrix numeric_hessian(const ObjectiveFn& f, const std::vector<double>& x,
                                double step = 1e-4);
SymmetricMatrix numeric_hessian(const ObjectiveFn& f, const std::vector<double>& x,
                                const std::vector<double>& steps);

// Box-constrained maximization: projected BFGS with finite-difference
// gradients and a bounded Nelder-Mead fallback when the line search stalls.
// Objective values of -inf are treated as infeasible probes, never errors.
// converged requires both the objective-change and projected-gradient
// criteria within the iteration budget; a spent budget returns
// converged=false rather than throwing.
OptimResult maximize_bounded(const ObjectiveFn& f, const std::vector<double>& start,
                             const BoxBounds& bounds, const OptimOptions& opts = {});

}  // namespace metabias
