#pragma once

// Unconstrained minimizers used by the maximum-likelihood fits, plus the box
// reparameterization that maps unconstrained search coordinates onto open
// parameter intervals.

#include "agrivol/error.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace agrivol::optim {

using Vector = std::vector<double>;

/// Anything callable as f(const Vector&) -> double. Out-of-domain points
/// should evaluate to +inf rather than throw.
template <class F>
concept Objective = std::invocable<const F&, const Vector&> &&
                    std::convertible_to<std::invoke_result_t<const F&, const Vector&>, double>;

enum class Termination {
    converged,
    iteration_limit,
    line_search_failure,
    non_finite_start,
};

[[nodiscard]] inline const char* to_string(Termination t) noexcept {
    switch (t) {
        case Termination::converged: return "converged";
        case Termination::iteration_limit: return "iteration-limit";
        case Termination::line_search_failure: return "line-search-failure";
        case Termination::non_finite_start: return "non-finite-start";
    }
    return "unknown";
}

struct OptimResult {
    Vector x;
    double f = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    Termination termination = Termination::iteration_limit;
};

struct SimplexOptions {
    double tol = 1e-8;  // function-value spread across the simplex
    int max_iter = 5000;
    int restarts = 2;   // re-seed the simplex at the best vertex after convergence
    double initial_step = 0.05;  // relative offset of each initial vertex
    double absolute_step = 0.0;  // lower bound on that offset; 0 keeps the 0.00025 default for zero coordinates
};

struct BfgsOptions {
    double tol = 1e-6;  // infinity norm of the gradient
    int max_iter = 500;
};

namespace detail {

template <Objective F>
double eval(const F& f, const Vector& x) {
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
}

inline double step_for(double xi) { return std::max(1e-6, 1e-7 * std::fabs(xi)); }

}  // namespace detail

/// Nelder-Mead downhill simplex. Uses the dimension-adaptive coefficients of
/// Gao and Han for d > 2 and the classic ones otherwise.
template <Objective F>
[[nodiscard]] OptimResult minimize_simplex(const F& f, const Vector& x0, const SimplexOptions& opt = {}) {
    const std::size_t d = x0.size();
    require(d >= 1, ErrorKind::argument, "simplex needs at least one dimension");
    require(opt.tol > 0.0, ErrorKind::argument, "simplex tolerance must be positive");

    const double dd = static_cast<double>(d);
    const double alpha = 1.0;
    const double gamma = d > 2 ? 1.0 + 2.0 / dd : 2.0;
    const double rho = d > 2 ? 0.75 - 0.5 / dd : 0.5;
    const double sigma = d > 2 ? 1.0 - 1.0 / dd : 0.5;

    OptimResult best{x0, detail::eval(f, x0), 0, false, Termination::iteration_limit};
    const double f_start = best.f;

    std::vector<Vector> pts(d + 1);
    std::vector<double> fv(d + 1);
    std::vector<std::size_t> order(d + 1);
    Vector centroid(d), trial(d), trial2(d);

    int iter = 0;
    for (int round = 0; round <= opt.restarts; ++round) {
        pts[0] = best.x;
        fv[0] = best.f;
        for (std::size_t i = 0; i < d; ++i) {
            pts[i + 1] = best.x;
            const double xi = best.x[i];
            double step = xi != 0.0 ? opt.initial_step * xi : 0.00025;
            if (opt.absolute_step > 0.0 && std::fabs(step) < opt.absolute_step) {
                step = std::copysign(opt.absolute_step, step);
            }
            pts[i + 1][i] = xi + step;
            fv[i + 1] = detail::eval(f, pts[i + 1]);
        }
        bool round_converged = false;
        while (iter < opt.max_iter) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
            {
                std::vector<Vector> p2(d + 1);
                std::vector<double> f2(d + 1);
                for (std::size_t i = 0; i <= d; ++i) {
                    p2[i] = std::move(pts[order[i]]);
                    f2[i] = fv[order[i]];
                }
                pts.swap(p2);
                fv.swap(f2);
            }
            if (std::isfinite(fv[d]) && fv[d] - fv[0] < opt.tol) {
                round_converged = true;
                break;
            }
            ++iter;
            std::fill(centroid.begin(), centroid.end(), 0.0);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t k = 0; k < d; ++k) centroid[k] += pts[i][k] / dd;

            for (std::size_t k = 0; k < d; ++k) trial[k] = centroid[k] + alpha * (centroid[k] - pts[d][k]);
            const double fr = detail::eval(f, trial);
            if (fr < fv[0]) {
                for (std::size_t k = 0; k < d; ++k) trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
                const double fe = detail::eval(f, trial2);
                if (fe < fr) {
                    pts[d] = trial2;
                    fv[d] = fe;
                } else {
                    pts[d] = trial;
                    fv[d] = fr;
                }
                continue;
            }
            if (fr < fv[d - 1]) {
                pts[d] = trial;
                fv[d] = fr;
                continue;
            }
            const bool outside = fr < fv[d];
            for (std::size_t k = 0; k < d; ++k) {
                trial2[k] = outside ? centroid[k] + rho * (trial[k] - centroid[k])
                                    : centroid[k] + rho * (pts[d][k] - centroid[k]);
            }
            const double fc = detail::eval(f, trial2);
            if ((outside && fc <= fr) || (!outside && fc < fv[d])) {
                pts[d] = trial2;
                fv[d] = fc;
                continue;
            }
            for (std::size_t i = 1; i <= d; ++i) {
                for (std::size_t k = 0; k < d; ++k) pts[i][k] = pts[0][k] + sigma * (pts[i][k] - pts[0][k]);
                fv[i] = detail::eval(f, pts[i]);
            }
        }
        const auto argmin = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
        const double improvement = best.f - fv[argmin];
        if (fv[argmin] <= best.f) {
            best.x = pts[argmin];
            best.f = fv[argmin];
        }
        best.converged = round_converged;
        if (!round_converged) break;
        // A restart that cannot improve beyond tolerance confirms the optimum.
        if (round > 0 && !(improvement >= opt.tol)) break;
    }
    best.iterations = iter;
    if (!std::isfinite(f_start) && !std::isfinite(best.f)) {
        best.termination = Termination::non_finite_start;
        best.converged = false;
    } else {
        best.termination = best.converged ? Termination::converged : Termination::iteration_limit;
    }
    return best;
}

/// Central-difference gradient with one fixed step `h` for every component.
template <Objective F>
[[nodiscard]] Vector numeric_gradient(const F& f, const Vector& x, double h) {
    require(h > 0.0, ErrorKind::argument, "gradient step must be positive");
    Vector g(x.size());
    Vector xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            fail(ErrorKind::numeric, "non-finite objective while differencing component " + std::to_string(i));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Central-difference gradient with per-component step max(1e-6, 1e-7 |x_i|).
template <Objective F>
[[nodiscard]] Vector numeric_gradient(const F& f, const Vector& x) {
    Vector g(x.size());
    Vector xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = detail::step_for(x[i]);
        xp[i] = x[i] + h;
        const double fp = f(xp);
        xp[i] = x[i] - h;
        const double fm = f(xp);
        xp[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            fail(ErrorKind::numeric, "non-finite objective while differencing component " + std::to_string(i));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Finite-difference Hessian (row-major d*d). Step scales with |x_i|.
template <Objective F>
[[nodiscard]] std::vector<double> numeric_hessian(const F& f, const Vector& x) {
    const std::size_t d = x.size();
    std::vector<double> hess(d * d, 0.0);
    Vector h(d);
    for (std::size_t i = 0; i < d; ++i) h[i] = 1e-4 * std::max(1.0, std::fabs(x[i]));
    const double f0 = f(x);
    Vector xp = x;
    for (std::size_t i = 0; i < d; ++i) {
        xp[i] = x[i] + h[i];
        const double fp = f(xp);
        xp[i] = x[i] - h[i];
        const double fm = f(xp);
        xp[i] = x[i];
        hess[i * d + i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for (std::size_t j = 0; j < i; ++j) {
            double acc = 0.0;
            for (int si : {1, -1}) {
                for (int sj : {1, -1}) {
                    xp[i] = x[i] + si * h[i];
                    xp[j] = x[j] + sj * h[j];
                    acc += si * sj * f(xp);
                }
            }
            xp[i] = x[i];
            xp[j] = x[j];
            hess[i * d + j] = hess[j * d + i] = acc / (4.0 * h[i] * h[j]);
        }
    }
    return hess;
}

/// Quasi-Newton (BFGS inverse-Hessian update) with numeric gradients and an
/// Armijo backtracking line search. When the line search fails, a short
/// simplex run from the current point is tried before giving up.
template <Objective F>
[[nodiscard]] OptimResult minimize_bfgs(const F& f, const Vector& x0, const BfgsOptions& opt = {}) {
    const std::size_t d = x0.size();
    require(d >= 1, ErrorKind::argument, "BFGS needs at least one dimension");
    require(opt.tol > 0.0, ErrorKind::argument, "BFGS tolerance must be positive");

    OptimResult res{x0, detail::eval(f, x0), 0, false, Termination::iteration_limit};
    if (!std::isfinite(res.f)) {
        res.termination = Termination::non_finite_start;
        return res;
    }
    auto identity = [d] {
        std::vector<double> m(d * d, 0.0);
        for (std::size_t i = 0; i < d; ++i) m[i * d + i] = 1.0;
        return m;
    };
    auto grad_at = [&](const Vector& x, Vector& g) -> bool {
        try {
            g = numeric_gradient(f, x);
            return true;
        } catch (const Error&) {
            return false;
        }
    };
    auto inf_norm = [](const Vector& v) {
        double m = 0.0;
        for (double e : v) m = std::max(m, std::fabs(e));
        return m;
    };

    std::vector<double> hinv = identity();
    Vector g, g_new, p(d), x_new(d), s(d), y(d);
    bool have_grad = grad_at(res.x, g);
    bool fresh = true;

    while (res.iterations < opt.max_iter) {
        if (have_grad && inf_norm(g) < opt.tol) {
            res.converged = true;
            res.termination = Termination::converged;
            return res;
        }
        bool stepped = false;
        if (have_grad) {
            for (std::size_t i = 0; i < d; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < d; ++j) acc -= hinv[i * d + j] * g[j];
                p[i] = acc;
            }
            double slope = std::inner_product(g.begin(), g.end(), p.begin(), 0.0);
            if (!(slope < 0.0)) {
                hinv = identity();
                fresh = true;
                for (std::size_t i = 0; i < d; ++i) p[i] = -g[i];
                slope = -std::inner_product(g.begin(), g.end(), g.begin(), 0.0);
            }
            double t = 1.0;
            if (fresh) t = std::min(1.0, 1.0 / std::max(inf_norm(g), 1e-12));
            for (int k = 0; k < 60; ++k, t *= 0.5) {
                for (std::size_t i = 0; i < d; ++i) x_new[i] = res.x[i] + t * p[i];
                const double fn = detail::eval(f, x_new);
                if (fn <= res.f + 1e-4 * t * slope) {
                    if (grad_at(x_new, g_new)) {
                        for (std::size_t i = 0; i < d; ++i) {
                            s[i] = x_new[i] - res.x[i];
                            y[i] = g_new[i] - g[i];
                        }
                        const double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
                        if (sy > 1e-14) {
                            if (fresh) {
                                const double yy = std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
                                hinv = identity();
                                for (std::size_t i = 0; i < d; ++i) hinv[i * d + i] = sy / yy;
                                fresh = false;
                            }
                            // H <- (I - rho s y') H (I - rho y s') + rho s s'
                            const double rho = 1.0 / sy;
                            Vector hy(d, 0.0);
                            for (std::size_t i = 0; i < d; ++i)
                                for (std::size_t j = 0; j < d; ++j) hy[i] += hinv[i * d + j] * y[j];
                            const double yhy = std::inner_product(y.begin(), y.end(), hy.begin(), 0.0);
                            for (std::size_t i = 0; i < d; ++i) {
                                for (std::size_t j = 0; j < d; ++j) {
                                    hinv[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) +
                                                       (rho * rho * yhy + rho) * s[i] * s[j];
                                }
                            }
                        }
                        g = g_new;
                        have_grad = true;
                    } else {
                        have_grad = false;
                    }
                    res.x = x_new;
                    res.f = fn;
                    stepped = true;
                    break;
                }
            }
        }
        ++res.iterations;
        if (!stepped) {
            SimplexOptions sopt;
            sopt.max_iter = 200 * static_cast<int>(d);
            sopt.restarts = 0;
            sopt.initial_step = 1e-3;
            const OptimResult nm = minimize_simplex(f, res.x, sopt);
            if (nm.f < res.f - 1e-14 * (1.0 + std::fabs(res.f))) {
                res.x = nm.x;
                res.f = nm.f;
                hinv = identity();
                fresh = true;
                have_grad = grad_at(res.x, g);
                continue;
            }
            res.termination = Termination::line_search_failure;
            return res;
        }
    }
    res.termination = Termination::iteration_limit;
    return res;
}

/// Open interval (lo, hi); either end may be infinite.
struct Bound {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    [[nodiscard]] static Bound open(double lo, double hi) { return {lo, hi}; }
    [[nodiscard]] static Bound positive() { return {0.0, std::numeric_limits<double>::infinity()}; }
    [[nodiscard]] static Bound free() { return {}; }
};

/// Maps one unconstrained coordinate into its bound: scaled logistic for a
/// two-sided box, exponential for a half-open one, identity when unbounded.
[[nodiscard]] inline double to_bounded(double u, const Bound& b) {
    const bool has_lo = std::isfinite(b.lo);
    const bool has_hi = std::isfinite(b.hi);
    if (has_lo && has_hi) {
        const double s = u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
        const double v = b.lo + (b.hi - b.lo) * s;
        return std::clamp(v, std::nextafter(b.lo, b.hi), std::nextafter(b.hi, b.lo));
    }
    if (has_lo) return std::max(b.lo + std::exp(u), std::nextafter(b.lo, b.hi));
    if (has_hi) return std::min(b.hi - std::exp(u), std::nextafter(b.hi, b.lo));
    return u;
}

[[nodiscard]] inline double to_unbounded(double theta, const Bound& b) {
    const bool has_lo = std::isfinite(b.lo);
    const bool has_hi = std::isfinite(b.hi);
    if (has_lo && has_hi) return std::log((theta - b.lo) / (b.hi - theta));
    if (has_lo) return std::log(theta - b.lo);
    if (has_hi) return std::log(b.hi - theta);
    return theta;
}

[[nodiscard]] inline Vector bounded_reparam(const Vector& u, const std::vector<Bound>& bounds) {
    require(u.size() == bounds.size(), ErrorKind::argument, "reparameterization size mismatch");
    Vector out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        require(bounds[i].lo < bounds[i].hi, ErrorKind::argument, "bound with lo >= hi");
        out[i] = to_bounded(u[i], bounds[i]);
    }
    return out;
}

[[nodiscard]] inline Vector bounded_inverse(const Vector& theta, const std::vector<Bound>& bounds) {
    require(theta.size() == bounds.size(), ErrorKind::argument, "reparameterization size mismatch");
    Vector out(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) out[i] = to_unbounded(theta[i], bounds[i]);
    return out;
}

/// Simplex search followed by a BFGS polish; keeps whichever end point is
/// lower. Convergence is reported from the polishing pass.
template <Objective F>
[[nodiscard]] OptimResult minimize(const F& f, const Vector& x0, const SimplexOptions& sopt = {},
                                   const BfgsOptions& bopt = {}) {
    OptimResult nm = minimize_simplex(f, x0, sopt);
    OptimResult qn = minimize_bfgs(f, nm.x, bopt);
    qn.iterations += nm.iterations;
    if (qn.f > nm.f) {
        nm.iterations = qn.iterations;
        return nm;
    }
    if (!qn.converged && nm.converged && qn.termination == Termination::line_search_failure) {
        // the simplex optimum could not be refined further along the gradient
        qn.converged = true;
        qn.termination = Termination::converged;
    }
    return qn;
}

}  // namespace agrivol::optim
