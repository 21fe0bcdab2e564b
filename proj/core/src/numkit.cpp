#include "metabias/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metabias {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
constexpr double kLogSqrt2Pi = 0.9189385332046727417803297364;  // log(sqrt(2*pi))

}  // namespace

bool BoxBounds::contains(const std::vector<double>& x) const {
    if (x.size() != lower.size()) return false;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (x[j] < lower[j] || x[j] > upper[j]) return false;
    return true;
}

std::vector<double> BoxBounds::project(std::vector<double> x) const {
    for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = std::min(std::max(x[j], lower[j]), upper[j]);
    return x;
}

void BoxBounds::check() const {
    if (lower.size() != upper.size())
        throw std::invalid_argument("BoxBounds: lower/upper length mismatch");
    for (std::size_t j = 0; j < lower.size(); ++j) {
        if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] > upper[j])
            throw std::invalid_argument("BoxBounds: lower > upper");
    }
}

// ---------------------------------------------------------------------------
// small dense linear algebra

std::optional<SymmetricMatrix> invert(const SymmetricMatrix& m) {
    const std::size_t n = m.dim();
    if (n == 0) return std::nullopt;

    std::vector<double> a(n * n), inv(n * n, 0.0);
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        inv[i * n + i] = 1.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = m(i, j);
            if (!std::isfinite(v)) return std::nullopt;
            a[i * n + j] = v;
            scale = std::max(scale, std::fabs(v));
        }
    }
    if (scale == 0.0) return std::nullopt;
    const double tol = scale * n * 1e-14;

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
        if (std::fabs(a[piv * n + col]) <= tol) return std::nullopt;
        if (piv != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(a[piv * n + j], a[col * n + j]);
                std::swap(inv[piv * n + j], inv[col * n + j]);
            }
        }
        const double d = a[col * n + col];
        for (std::size_t j = 0; j < n; ++j) {
            a[col * n + j] /= d;
            inv[col * n + j] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double factor = a[r * n + col];
            if (factor == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                a[r * n + j] -= factor * a[col * n + j];
                inv[r * n + j] -= factor * inv[col * n + j];
            }
        }
    }

    SymmetricMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            const double v = 0.5 * (inv[i * n + j] + inv[j * n + i]);
            if (!std::isfinite(v)) return std::nullopt;
            out(i, j) = v;
        }
    return out;
}

std::vector<double> eigenvalues(const SymmetricMatrix& m) {
    const std::size_t n = m.dim();
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] = m(i, j);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
        if (off <= 1e-28 * (1.0 + std::fabs(a[0]))) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }

    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a[i * n + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

bool is_positive_definite(const SymmetricMatrix& m) {
    // Cholesky attempt; PD iff all pivots are positive.
    const std::size_t n = m.dim();
    if (n == 0) return false;
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = m(i, j);
            if (!std::isfinite(s)) return false;
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (!(s > 0.0)) return false;
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// normal distribution

double norm_pdf(double x) {
    if (!std::isfinite(x)) throw std::domain_error("norm_pdf: non-finite argument");
    return std::exp(-0.5 * x * x - kLogSqrt2Pi);
}

double norm_cdf(double x) {
    if (std::isnan(x)) throw std::domain_error("norm_cdf: NaN argument");
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

namespace {

// Mills ratio R(a) = Phi(-a)/phi(a) for a > 0 by backward continued fraction
// R(a) = 1/(a + 1/(a + 2/(a + 3/(...)))).
double mills_ratio_cf(double a) {
    double t = 0.0;
    for (int k = 64; k >= 1; --k) t = static_cast<double>(k) / (a + t);
    return 1.0 / (a + t);
}

}  // namespace

double log_norm_cdf(double x) {
    if (std::isnan(x)) throw std::domain_error("log_norm_cdf: NaN argument");
    if (x > -8.0) return std::log(norm_cdf(x));
    const double a = -x;
    return -0.5 * a * a - kLogSqrt2Pi + std::log(mills_ratio_cf(a));
}

namespace {

// Rational initial estimate for the normal quantile (Wichura-style minimax
// fits on three ranges), then Newton polish against norm_cdf.
double norm_quantile_estimate(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        const double num =
            (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                  6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
              1.3314166789178437745e+2) * r + 3.3871328727963666080e+0);
        const double den =
            (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                  3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
              4.2313330701600911252e+1) * r + 1.0);
        return q * num / den;
    }
    double r = (q < 0.0) ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        const double num =
            (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                  2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
              4.63033784615654529590e+0) * r + 1.42343711074968357734e+0);
        const double den =
            (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                  1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
              2.05319162663775882187e+0) * r + 1.0);
        val = num / den;
    } else {
        r -= 5.0;
        const double num =
            (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                  1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
              5.46378491116411436990e+0) * r + 6.65790464350110377720e+0);
        const double den =
            (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                  1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
              5.99832206555887937690e-1) * r + 1.0);
        val = num / den;
    }
    return (q < 0.0) ? -val : val;
}

}  // namespace

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("norm_quantile: p outside (0,1)");
    double x = norm_quantile_estimate(p);
    for (int it = 0; it < 2; ++it) {
        const double dens = norm_pdf(x);
        if (dens < 1e-280) break;
        x -= (norm_cdf(x) - p) / dens;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Student t

namespace {

// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr double fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 3e-16) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                                  a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_pdf(double x, double df) {
    return std::exp(std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                    0.5 * std::log(df * M_PI) -
                    0.5 * (df + 1.0) * std::log1p(x * x / df));
}

}  // namespace

double t_cdf(double x, double df) {
    if (!(df >= 1.0)) throw std::domain_error("t_cdf: df must be >= 1");
    if (std::isnan(x)) throw std::domain_error("t_cdf: NaN argument");
    if (x == 0.0) return 0.5;
    const double tail = 0.5 * reg_inc_beta(0.5 * df, 0.5, df / (df + x * x));
    return (x > 0.0) ? 1.0 - tail : tail;
}

double t_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("t_quantile: p outside (0,1)");
    if (!(df >= 1.0)) throw std::domain_error("t_quantile: df must be >= 1");
    if (p == 0.5) return 0.0;
    const double pu = std::max(p, 1.0 - p);

    double lo = 0.0, hi = 1.0;
    while (t_cdf(hi, df) < pu) {
        hi *= 2.0;
        if (hi > 1e150) break;
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (t_cdf(mid, df) < pu)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-14 * (1.0 + hi)) break;
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 4; ++it) {
        const double dens = t_pdf(x, df);
        if (dens < 1e-280) break;
        x -= (t_cdf(x, df) - pu) / dens;
    }
    return (p < 0.5) ? -x : x;
}

// ---------------------------------------------------------------------------
// finite differences

std::vector<double> numeric_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                     double step) {
    std::vector<double> g(x.size());
    std::vector<double> xp = x;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double h = step * std::max(1.0, std::fabs(x[j]));
        xp[j] = x[j] + h;
        const double fp = f(xp);
        xp[j] = x[j] - h;
        const double fm = f(xp);
        xp[j] = x[j];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::domain_error("numeric_gradient: non-finite objective at probe point");
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

SymmetricMatrix numeric_hessian(const ObjectiveFn& f, const std::vector<double>& x,
                                const std::vector<double>& steps) {
    const std::size_t n = x.size();
    if (steps.size() != n)
        throw std::invalid_argument("numeric_hessian: steps length mismatch");
    const double f0 = f(x);
    if (!std::isfinite(f0))
        throw std::domain_error("numeric_hessian: non-finite objective at center");

    SymmetricMatrix h(n);
    std::vector<double> xp = x;
    auto probe = [&](const std::vector<double>& pt) {
        const double v = f(pt);
        if (!std::isfinite(v))
            throw std::domain_error("numeric_hessian: non-finite objective at probe point");
        return v;
    };

    for (std::size_t i = 0; i < n; ++i) {
        const double hi = steps[i];
        xp[i] = x[i] + hi;
        const double fp = probe(xp);
        xp[i] = x[i] - hi;
        const double fm = probe(xp);
        xp[i] = x[i];
        h(i, i) = (fp - 2.0 * f0 + fm) / (hi * hi);
        for (std::size_t j = i + 1; j < n; ++j) {
            const double hj = steps[j];
            xp[i] = x[i] + hi;
            xp[j] = x[j] + hj;
            const double fpp = probe(xp);
            xp[j] = x[j] - hj;
            const double fpm = probe(xp);
            xp[i] = x[i] - hi;
            const double fmm = probe(xp);
            xp[j] = x[j] + hj;
            const double fmp = probe(xp);
            xp[i] = x[i];
            xp[j] = x[j];
            h(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
        }
    }
    return h;
}

SymmetricMatrix numeric_hessian(const ObjectiveFn& f, const std::vector<double>& x,
                                double step) {
    std::vector<double> steps(x.size());
    for (std::size_t j = 0; j < x.size(); ++j)
        steps[j] = step * std::max(1.0, std::fabs(x[j]));
    return numeric_hessian(f, x, steps);
}

// ---------------------------------------------------------------------------
// bounded maximization

namespace {

// Gradient of f with -inf treated as an infeasible probe: steps shrink toward
// the evaluation point (which is known feasible) and fall back to one-sided
// differences against the box.
std::vector<double> guarded_gradient(const ObjectiveFn& f, const std::vector<double>& x,
                                     double f0, const BoxBounds& b, double rel_step) {
    const std::size_t n = x.size();
    std::vector<double> g(n, 0.0);
    std::vector<double> xp = x;
    for (std::size_t j = 0; j < n; ++j) {
        double h = rel_step * std::max(1.0, std::fabs(x[j]));
        const double room_up = b.upper[j] - x[j];
        const double room_dn = x[j] - b.lower[j];
        bool done = false;
        for (int attempt = 0; attempt < 4 && !done; ++attempt) {
            const double hp = std::min(h, room_up);
            const double hm = std::min(h, room_dn);
            if (hp > 0.0 && hm > 0.0) {
                const double t = std::min(hp, hm);
                xp[j] = x[j] + t;
                const double fp = f(xp);
                xp[j] = x[j] - t;
                const double fm = f(xp);
                xp[j] = x[j];
                if (std::isfinite(fp) && std::isfinite(fm)) {
                    g[j] = (fp - fm) / (2.0 * t);
                    done = true;
                    continue;
                }
                if (std::isfinite(fp)) {
                    g[j] = (fp - f0) / t;
                    done = true;
                    continue;
                }
                if (std::isfinite(fm)) {
                    g[j] = (f0 - fm) / t;
                    done = true;
                    continue;
                }
            } else if (hp > 0.0) {
                xp[j] = x[j] + hp;
                const double fp = f(xp);
                xp[j] = x[j];
                if (std::isfinite(fp)) {
                    g[j] = (fp - f0) / hp;
                    done = true;
                    continue;
                }
            } else if (hm > 0.0) {
                xp[j] = x[j] - hm;
                const double fm = f(xp);
                xp[j] = x[j];
                if (std::isfinite(fm)) {
                    g[j] = (f0 - fm) / hm;
                    done = true;
                    continue;
                }
            } else {
                g[j] = 0.0;  // degenerate coordinate, lower == upper
                done = true;
                continue;
            }
            h *= 0.1;
        }
        if (!done) g[j] = 0.0;  // infeasible in every probed direction: treat as flat
    }
    return g;
}

// sup-norm of the gradient projected onto the feasible directions
double projected_gradient_norm(const std::vector<double>& g, const std::vector<double>& x,
                               const BoxBounds& b) {
    double n = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
        double pg = g[j];
        const double eps = 1e-12 * std::max(1.0, std::fabs(x[j]));
        if (x[j] >= b.upper[j] - eps) pg = std::min(pg, 0.0);
        if (x[j] <= b.lower[j] + eps) pg = std::max(pg, 0.0);
        n = std::max(n, std::fabs(pg));
    }
    return n;
}

struct NmPoint {
    std::vector<double> x;
    double fv;
};

// Bounded Nelder-Mead used as a rescue stage when the line search stalls.
// Returns best point found; evaluations of -inf rank below everything.
NmPoint nelder_mead(const ObjectiveFn& f, const std::vector<double>& start, double f_start,
                    const BoxBounds& b, int max_iter) {
    const std::size_t n = start.size();
    std::vector<NmPoint> s;
    s.push_back({start, f_start});
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> x = start;
        double d = 0.05 * std::max(1.0, std::fabs(x[j]));
        if (x[j] + d > b.upper[j]) d = -d;
        x[j] += d;
        x = b.project(std::move(x));
        s.push_back({x, f(x)});
    }
    auto cmp = [](const NmPoint& a, const NmPoint& bb) {
        const double fa = std::isfinite(a.fv) ? a.fv : -kInf;
        const double fb = std::isfinite(bb.fv) ? bb.fv : -kInf;
        return fa > fb;
    };
    std::sort(s.begin(), s.end(), cmp);

    for (int it = 0; it < max_iter; ++it) {
        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) centroid[j] += s[i].x[j] / double(n);

        auto blend = [&](double coef) {
            std::vector<double> x(n);
            for (std::size_t j = 0; j < n; ++j)
                x[j] = centroid[j] + coef * (centroid[j] - s[n].x[j]);
            return b.project(std::move(x));
        };

        const std::vector<double> xr = blend(1.0);
        const double fr = f(xr);
        if (std::isfinite(fr) && fr > s[0].fv) {
            const std::vector<double> xe = blend(2.0);
            const double fe = f(xe);
            s[n] = (std::isfinite(fe) && fe > fr) ? NmPoint{xe, fe} : NmPoint{xr, fr};
        } else if (std::isfinite(fr) && fr > s[n - 1].fv) {
            s[n] = {xr, fr};
        } else {
            const std::vector<double> xc = blend(-0.5);
            const double fc = f(xc);
            if (std::isfinite(fc) && fc > s[n].fv) {
                s[n] = {xc, fc};
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    std::vector<double> x(n);
                    for (std::size_t j = 0; j < n; ++j)
                        x[j] = 0.5 * (s[0].x[j] + s[i].x[j]);
                    s[i] = {x, f(x)};
                }
            }
        }
        std::sort(s.begin(), s.end(), cmp);

        double diam = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            diam = std::max(diam, std::fabs(s[0].x[j] - s[n].x[j]));
        const double fspread = std::isfinite(s[n].fv) ? s[0].fv - s[n].fv : kInf;
        if (diam < 1e-9 && fspread < 1e-11) break;
    }
    return s[0];
}

}  // namespace

OptimResult maximize_bounded(const ObjectiveFn& f, const std::vector<double>& start,
                             const BoxBounds& bounds, const OptimOptions& opts) {
    bounds.check();
    if (start.size() != bounds.size())
        throw std::invalid_argument("maximize_bounded: start/bounds length mismatch");
    const std::size_t n = start.size();

    OptimResult res;
    res.point = bounds.project(start);
    res.value = f(res.point);
    if (!std::isfinite(res.value))
        throw std::domain_error("maximize_bounded: objective non-finite at start");

    std::vector<double> x = res.point;
    double fx = res.value;
    std::vector<double> g = guarded_gradient(f, x, fx, bounds, opts.fd_step);

    // inverse Hessian approximation for the minimization of -f
    std::vector<double> hinv(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) hinv[j * n + j] = 1.0;

    double last_improvement = kInf;
    int iter = 0;
    bool converged = false;
    std::vector<char> active(n, 0), prev_active(n, 0);
    bool have_active = false;

    while (iter < opts.max_iter) {
        ++iter;
        const double pg = projected_gradient_norm(g, x, bounds);
        if (pg < opts.grad_tol && last_improvement < opts.f_tol * std::max(1.0, std::fabs(fx))) {
            converged = true;
            break;
        }
        if (pg < opts.grad_tol && last_improvement == kInf) {
            converged = true;  // started at a stationary point
            break;
        }

        // coordinates pinned at a bound with the ascent direction pointing
        // outward are frozen; BFGS runs in the free subspace, and the
        // curvature model restarts whenever the frozen set changes
        for (std::size_t j = 0; j < n; ++j) {
            const double eps = 1e-12 * std::max(1.0, std::fabs(x[j]));
            const bool lo = x[j] <= bounds.lower[j] + eps && g[j] < 0.0;
            const bool hi = x[j] >= bounds.upper[j] - eps && g[j] > 0.0;
            active[j] = (lo || hi) ? 1 : 0;
        }
        if (!have_active || active != prev_active) {
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k) hinv[j * n + k] = (j == k) ? 1.0 : 0.0;
            have_active = true;
        }
        prev_active = active;

        std::vector<double> gr = g;
        for (std::size_t j = 0; j < n; ++j)
            if (active[j]) gr[j] = 0.0;

        // direction d = Hinv * gr ascends f (Hinv approximates (-H)^-1)
        std::vector<double> d(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            if (active[i]) continue;
            for (std::size_t j = 0; j < n; ++j) d[i] += hinv[i * n + j] * gr[j];
        }

        bool accepted = false;
        std::vector<double> xn;
        double fn = -kInf;
        for (int pass = 0; pass < 2 && !accepted; ++pass) {
            if (pass == 1) {
                d = gr;  // steepest-ascent restart
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = 0; k < n; ++k)
                        hinv[j * n + k] = (j == k) ? 1.0 : 0.0;
            }
            double t = 1.0;
            for (int ls = 0; ls < 45; ++ls) {
                std::vector<double> cand(n);
                for (std::size_t j = 0; j < n; ++j) cand[j] = x[j] + t * d[j];
                cand = bounds.project(std::move(cand));
                const double fc = f(cand);
                if (std::isfinite(fc)) {
                    double dir = 0.0;
                    for (std::size_t j = 0; j < n; ++j) dir += g[j] * (cand[j] - x[j]);
                    if (fc >= fx + 1e-4 * dir && fc > fx - 1e-16 * std::fabs(fx)) {
                        if (fc > fx || dir > 0.0) {
                            xn = std::move(cand);
                            fn = fc;
                            accepted = fn >= fx;
                            if (accepted) break;
                        }
                    }
                }
                t *= 0.5;
                if (t < 1e-13) break;
            }
        }

        if (!accepted) {
            // rescue: bounded simplex from the current best point
            const NmPoint nm = nelder_mead(f, x, fx, bounds, opts.max_iter - iter);
            double moved = 0.0;
            for (std::size_t j = 0; j < n; ++j) moved = std::max(moved, std::fabs(nm.x[j] - x[j]));
            if (nm.fv > fx + 1e-14 || moved > 1e-10) {
                last_improvement = nm.fv - fx;
                x = nm.x;
                fx = nm.fv;
                g = guarded_gradient(f, x, fx, bounds, opts.fd_step);
                for (std::size_t j = 0; j < n; ++j)
                    for (std::size_t k = 0; k < n; ++k)
                        hinv[j * n + k] = (j == k) ? 1.0 : 0.0;
                const double pg2 = projected_gradient_norm(g, x, bounds);
                if (pg2 < opts.grad_tol) {
                    converged = true;
                    break;
                }
                continue;
            }
            // no progress anywhere; converged only if the gradient agrees
            converged = pg < opts.grad_tol;
            break;
        }

        const std::vector<double> gn = guarded_gradient(f, xn, fn, bounds, opts.fd_step);

        // BFGS update in the free subspace: s = xn - x, y = -(gn - g) with
        // frozen coordinates zeroed (minimization convention)
        std::vector<double> s(n), yv(n);
        double sy = 0.0, snorm = 0.0, ynorm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s[j] = active[j] ? 0.0 : xn[j] - x[j];
            yv[j] = active[j] ? 0.0 : -(gn[j] - g[j]);
            sy += s[j] * yv[j];
            snorm = std::max(snorm, std::fabs(s[j]));
            ynorm = std::max(ynorm, std::fabs(yv[j]));
        }
        if (sy > 1e-12 * snorm * ynorm && sy > 0.0) {
            std::vector<double> hy(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) hy[i] += hinv[i * n + j] * yv[j];
            double yhy = 0.0;
            for (std::size_t j = 0; j < n; ++j) yhy += yv[j] * hy[j];
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    hinv[i * n + j] += ((sy + yhy) * s[i] * s[j]) / (sy * sy) -
                                       (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }

        last_improvement = fn - fx;
        x = std::move(xn);
        fx = fn;
        g = gn;
    }

    res.point = x;
    res.value = fx;
    res.converged = converged;
    res.iterations = iter;
    return res;
}

}  // namespace metabias
