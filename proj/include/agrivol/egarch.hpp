#pragma once

// EGARCH(p, o, q) conditional volatility for zero-mean returns:
//
//   ln s2_t = nu + sum_i kappa_i (|z_{t-i}| - sqrt(2/pi))
//                + sum_j delta_j z_{t-j}
//                + sum_k phi_k ln s2_{t-k},          z_t = r_t / s_t
//
// with Gaussian innovations. Pre-sample log-variances take `init_logvar` and
// pre-sample standardized shocks are 0.

#include "agrivol/calendar.hpp"
#include "agrivol/error.hpp"
#include "agrivol/optim.hpp"
#include "agrivol/series.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace agrivol::egarch {

inline constexpr double kAbsNormalMean = 0.79788456080286535588;  // sqrt(2/pi) = E|Z|

struct Orders {
    int p = 1;  // magnitude lags
    int o = 1;  // asymmetry lags
    int q = 1;  // log-variance persistence lags

    [[nodiscard]] int max_lag() const noexcept { return std::max({p, o, q}); }
    [[nodiscard]] int parameter_count() const noexcept { return 1 + p + o + q; }

    void validate() const {
        require(p >= 0 && o >= 0 && q >= 0, ErrorKind::argument, "EGARCH orders must be non-negative");
        require(p + o + q >= 1, ErrorKind::argument, "EGARCH needs at least one lag term");
        require(p <= 12 && o <= 12 && q <= 12, ErrorKind::argument, "EGARCH orders are capped at 12");
    }

    friend bool operator==(const Orders&, const Orders&) = default;
};

struct Params {
    double nu = 0.0;
    std::vector<double> kappa;
    std::vector<double> delta;
    std::vector<double> phi;

    [[nodiscard]] static Params zeros(const Orders& o) {
        return {0.0, std::vector<double>(static_cast<std::size_t>(o.p), 0.0),
                std::vector<double>(static_cast<std::size_t>(o.o), 0.0),
                std::vector<double>(static_cast<std::size_t>(o.q), 0.0)};
    }

    [[nodiscard]] double persistence() const noexcept {
        double s = 0.0;
        for (double v : phi) s += std::fabs(v);
        return s;
    }

    /// Stationary mean of ln s2, nu / (1 - sum phi).
    [[nodiscard]] double mean_logvar() const noexcept {
        double s = 0.0;
        for (double v : phi) s += v;
        return nu / (1.0 - s);
    }

    [[nodiscard]] std::vector<double> flatten() const {
        std::vector<double> v{nu};
        v.insert(v.end(), kappa.begin(), kappa.end());
        v.insert(v.end(), delta.begin(), delta.end());
        v.insert(v.end(), phi.begin(), phi.end());
        return v;
    }

    [[nodiscard]] static Params unflatten(const std::vector<double>& v, const Orders& o) {
        Params out = zeros(o);
        std::size_t k = 0;
        out.nu = v[k++];
        for (auto& x : out.kappa) x = v[k++];
        for (auto& x : out.delta) x = v[k++];
        for (auto& x : out.phi) x = v[k++];
        return out;
    }

    void check(const Orders& o) const {
        require(kappa.size() == static_cast<std::size_t>(o.p) && delta.size() == static_cast<std::size_t>(o.o) &&
                    phi.size() == static_cast<std::size_t>(o.q),
                ErrorKind::argument, "EGARCH parameter lengths do not match orders");
    }
};

struct Fit {
    Orders orders;
    Params params;
    double init_logvar = 0.0;
    MonthlySeries sigma;
    double loglik = 0.0;
    double aic = 0.0;
    std::size_t n_obs = 0;
    bool converged = false;
    std::string termination;
};

struct FitOptions {
    std::size_t min_obs = 30;
    optim::SimplexOptions simplex{};
    optim::BfgsOptions bfgs{};
};

namespace detail {

/// Fills `logvar` with ln s2_t; returns the first index whose value is not
/// finite or whose exponential overflows, or -1 on success.
inline long filter_logvar(const Params& prm, const Orders& o, const std::vector<double>& r, double init_logvar,
                          std::vector<double>& logvar, std::vector<double>& z) {
    const std::size_t n = r.size();
    logvar.assign(n, 0.0);
    z.assign(n, 0.0);
    constexpr double kMaxLogvar = 700.0;
    for (std::size_t t = 0; t < n; ++t) {
        double lv = prm.nu;
        for (int i = 1; i <= o.p; ++i) {
            const double zi = t >= static_cast<std::size_t>(i) ? z[t - i] : 0.0;
            lv += prm.kappa[i - 1] * (std::fabs(zi) - kAbsNormalMean);
        }
        for (int j = 1; j <= o.o; ++j) {
            const double zj = t >= static_cast<std::size_t>(j) ? z[t - j] : 0.0;
            lv += prm.delta[j - 1] * zj;
        }
        for (int k = 1; k <= o.q; ++k) {
            const double lk = t >= static_cast<std::size_t>(k) ? logvar[t - k] : init_logvar;
            lv += prm.phi[k - 1] * lk;
        }
        if (!std::isfinite(lv) || std::fabs(lv) > kMaxLogvar) return static_cast<long>(t);
        logvar[t] = lv;
        z[t] = r[t] * std::exp(-0.5 * lv);
    }
    return -1;
}

inline double loglik_from(const std::vector<double>& r, const std::vector<double>& logvar) {
    const double ln2pi = std::log(2.0 * std::numbers::pi);
    double ll = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
        ll += ln2pi + logvar[t] + r[t] * r[t] * std::exp(-logvar[t]);
    }
    return -0.5 * ll;
}

inline std::vector<double> checked_logvar(const Params& params, const Orders& orders, const MonthlySeries& returns,
                                          double init_logvar) {
    orders.validate();
    params.check(orders);
    require(std::isfinite(init_logvar), ErrorKind::argument, "init_logvar must be finite");
    for (std::size_t t = 0; t < returns.size(); ++t) {
        require(std::isfinite(returns[t]), ErrorKind::argument,
                "non-finite return at " + returns.month_at(t).to_string());
    }
    std::vector<double> lv, z;
    const long bad = filter_logvar(params, orders, returns.values(), init_logvar, lv, z);
    if (bad >= 0) {
        fail(ErrorKind::numeric, "EGARCH log-variance overflow at t=" + std::to_string(bad) + " (" +
                                     returns.month_at(static_cast<std::size_t>(bad)).to_string() + ")");
    }
    return lv;
}

}  // namespace detail

/// Conditional volatility s_t for every return, on the returns' calendar.
[[nodiscard]] inline MonthlySeries filter(const Params& params, const Orders& orders, const MonthlySeries& returns,
                                          double init_logvar) {
    const std::vector<double> lv = detail::checked_logvar(params, orders, returns, init_logvar);
    std::vector<double> sigma(lv.size());
    for (std::size_t t = 0; t < lv.size(); ++t) sigma[t] = std::exp(0.5 * lv[t]);
    return {returns.start(), std::move(sigma), "dimensionless"};
}

/// Gaussian log-likelihood of the returns given the filtered volatility.
[[nodiscard]] inline double loglik(const Params& params, const Orders& orders, const MonthlySeries& returns,
                                   double init_logvar) {
    return detail::loglik_from(returns.values(), detail::checked_logvar(params, orders, returns, init_logvar));
}

/// Draws r_t = s_t z_t with z_t ~ N(0,1) from a seeded Mersenne twister.
/// Pre-sample log-variance is the stationary mean.
[[nodiscard]] inline MonthlySeries simulate(const Params& params, const Orders& orders, std::size_t n,
                                            std::uint64_t seed, MonthStamp start = {2000, 1}) {
    orders.validate();
    params.check(orders);
    require(n >= 1, ErrorKind::argument, "simulation length must be >= 1");
    require(params.persistence() < 1.0, ErrorKind::argument,
            "explosive EGARCH parameters: sum |phi| = " + std::to_string(params.persistence()) + " >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double init = params.mean_logvar();
    std::vector<double> lv(n), z(n), r(n);
    for (std::size_t t = 0; t < n; ++t) {
        double v = params.nu;
        for (int i = 1; i <= orders.p; ++i) {
            const double zi = t >= static_cast<std::size_t>(i) ? z[t - i] : 0.0;
            v += params.kappa[i - 1] * (std::fabs(zi) - kAbsNormalMean);
        }
        for (int j = 1; j <= orders.o; ++j) {
            v += params.delta[j - 1] * (t >= static_cast<std::size_t>(j) ? z[t - j] : 0.0);
        }
        for (int k = 1; k <= orders.q; ++k) {
            v += params.phi[k - 1] * (t >= static_cast<std::size_t>(k) ? lv[t - k] : init);
        }
        lv[t] = v;
        z[t] = normal(rng);
        r[t] = std::exp(0.5 * v) * z[t];
    }
    return {start, std::move(r), "dimensionless"};
}

/// Maximum-likelihood fit. Each phi_k lives in (-1, 1) through a logistic map
/// and points with sum |phi| >= 1 are rejected as infeasible.
[[nodiscard]] inline Fit fit(const MonthlySeries& returns, const Orders& orders, const FitOptions& opt = {}) {
    orders.validate();
    require(returns.size() >= opt.min_obs, ErrorKind::insufficient_data,
            "EGARCH fit needs at least " + std::to_string(opt.min_obs) + " returns, got " +
                std::to_string(returns.size()));
    const auto [lo, hi] = std::minmax_element(returns.values().begin(), returns.values().end());
    const double var = sample_variance(returns.values());
    require(*lo < *hi && var > 0.0 && std::isfinite(var), ErrorKind::fit,
            "returns have zero variance; EGARCH is not identified");
    const double init_logvar = std::log(var);

    std::vector<optim::Bound> bounds(static_cast<std::size_t>(orders.parameter_count()));
    for (int k = 0; k < orders.q; ++k) bounds[static_cast<std::size_t>(1 + orders.p + orders.o + k)] = {-1.0, 1.0};

    const auto& r = returns.values();
    const double n = static_cast<double>(r.size());
    std::vector<double> lv, z;
    auto objective = [&](const std::vector<double>& u) {
        const Params prm = Params::unflatten(optim::bounded_reparam(u, bounds), orders);
        if (prm.persistence() >= 1.0) return std::numeric_limits<double>::infinity();
        if (detail::filter_logvar(prm, orders, r, init_logvar, lv, z) >= 0) {
            return std::numeric_limits<double>::infinity();
        }
        return -detail::loglik_from(r, lv) / n;
    };

    Params start = Params::zeros(orders);
    double phi_sum = 0.0;
    for (auto& v : start.phi) {
        v = 0.8 / static_cast<double>(orders.q);
        phi_sum += v;
    }
    for (auto& v : start.kappa) v = 0.1 / static_cast<double>(orders.p);
    start.nu = (1.0 - phi_sum) * init_logvar;
    const std::vector<double> u0 = optim::bounded_inverse(start.flatten(), bounds);

    const optim::OptimResult res = optim::minimize(objective, u0, opt.simplex, opt.bfgs);

    Fit out;
    out.orders = orders;
    out.params = Params::unflatten(optim::bounded_reparam(res.x, bounds), orders);
    out.init_logvar = init_logvar;
    out.sigma = filter(out.params, orders, returns, init_logvar);
    out.loglik = loglik(out.params, orders, returns, init_logvar);
    out.n_obs = r.size();
    out.aic = 2.0 * orders.parameter_count() - 2.0 * out.loglik;
    out.converged = res.converged;
    out.termination = optim::to_string(res.termination);
    return out;
}

/// AIC grid search over p, o, q in 1..max_order. Ties go to the smaller total
/// order, then to the lexicographically smaller (p, o, q).
[[nodiscard]] inline Orders select_orders(const MonthlySeries& returns, int max_order, const FitOptions& opt = {}) {
    require(max_order >= 1 && max_order <= 3, ErrorKind::argument, "EGARCH max_order must be in 1..3");
    bool found = false;
    Orders best{};
    double best_aic = std::numeric_limits<double>::infinity();
    std::string last_error;
    for (int p = 1; p <= max_order; ++p) {
        for (int o = 1; o <= max_order; ++o) {
            for (int q = 1; q <= max_order; ++q) {
                const Orders cand{p, o, q};
                try {
                    const Fit f = fit(returns, cand, opt);
                    if (!std::isfinite(f.aic)) continue;
                    const int total = p + o + q;
                    const int best_total = best.p + best.o + best.q;
                    // candidates are visited in lexicographic order, so equal
                    // totals keep the earlier one
                    if (!found || f.aic < best_aic || (f.aic == best_aic && total < best_total)) {
                        best = cand;
                        best_aic = f.aic;
                        found = true;
                    }
                } catch (const Error& e) {
                    last_error = e.what();
                }
            }
        }
    }
    require(found, ErrorKind::fit, "EGARCH order selection failed for every candidate: " + last_error);
    return best;
}

}  // namespace agrivol::egarch
