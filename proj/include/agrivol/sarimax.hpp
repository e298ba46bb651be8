#pragma once

// Seasonal ARIMA with exogenous regressors, estimated in regression-with-
// ARMA-errors form:
//
//   D(L) y_t = c + D(L) x_t' gamma + w_t,   a(L) A(L^s) w_t = b(L) B(L^s) eps_t
//
// where D(L) = (1-L)^m (1-L^s)^M and the intercept c is present only when no
// differencing is applied. The ARMA errors are cast in Harvey's state-space
// form and the exact Gaussian likelihood comes from a Kalman filter started
// at the stationary state covariance.

#include "agrivol/calendar.hpp"
#include "agrivol/error.hpp"
#include "agrivol/optim.hpp"
#include "agrivol/series.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace agrivol::sarimax {

struct Orders {
    int p = 1, m = 0, q = 1;
    int P = 1, M = 0, Q = 1;
    int s = 12;

    void validate() const {
        require(p >= 0 && m >= 0 && q >= 0 && P >= 0 && M >= 0 && Q >= 0, ErrorKind::argument,
                "SARIMAX orders must be non-negative");
        require(s >= 1, ErrorKind::argument, "seasonal period must be >= 1");
        require(m + M <= 2, ErrorKind::argument, "total differencing order m + M must be <= 2");
    }

    [[nodiscard]] int ar_degree() const noexcept { return p + s * P; }
    [[nodiscard]] int ma_degree() const noexcept { return q + s * Q; }
    [[nodiscard]] int diff_length() const noexcept { return m + M * s; }
    [[nodiscard]] bool has_intercept() const noexcept { return m + M == 0; }
    [[nodiscard]] int state_dim() const noexcept { return std::max(ar_degree(), ma_degree() + 1); }
    [[nodiscard]] int total_order() const noexcept { return p + m + q + P + M + Q; }

    [[nodiscard]] std::string to_string() const {
        return "(" + std::to_string(p) + "," + std::to_string(m) + "," + std::to_string(q) + ")(" +
               std::to_string(P) + "," + std::to_string(M) + "," + std::to_string(Q) + "," + std::to_string(s) + ")";
    }

    friend bool operator==(const Orders&, const Orders&) = default;
};

/// 1 + c_1 L + ... + c_n L^n, with c stored in `coefficients`.
struct LagPolynomial {
    std::vector<double> coefficients;

    [[nodiscard]] std::size_t degree() const noexcept { return coefficients.size(); }

    /// 1 - w_1 L^spacing - w_2 L^{2 spacing} - ...
    [[nodiscard]] static LagPolynomial from_weights(const std::vector<double>& w, int spacing = 1) {
        LagPolynomial out;
        out.coefficients.assign(w.size() * static_cast<std::size_t>(spacing), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            out.coefficients[(i + 1) * static_cast<std::size_t>(spacing) - 1] = -w[i];
        }
        return out;
    }

    /// w_i such that the polynomial is 1 - sum w_i L^i.
    [[nodiscard]] std::vector<double> weights() const {
        std::vector<double> w(coefficients.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = -coefficients[i];
        return w;
    }

    friend LagPolynomial operator*(const LagPolynomial& a, const LagPolynomial& b) {
        const std::size_t na = a.degree(), nb = b.degree();
        std::vector<double> full(na + nb + 1, 0.0);
        for (std::size_t i = 0; i <= na; ++i) {
            const double ai = i == 0 ? 1.0 : a.coefficients[i - 1];
            for (std::size_t j = 0; j <= nb; ++j) {
                const double bj = j == 0 ? 1.0 : b.coefficients[j - 1];
                full[i + j] += ai * bj;
            }
        }
        return {std::vector<double>(full.begin() + 1, full.end())};
    }

    friend bool operator==(const LagPolynomial&, const LagPolynomial&) = default;
};

/// Coefficients on the scale of the exogenous columns they are applied to.
struct Params {
    std::vector<double> ar;   // a_1..a_p
    std::vector<double> ma;   // b_1..b_q (polynomial 1 - b_1 L - ...)
    std::vector<double> sar;  // A_1..A_P
    std::vector<double> sma;  // B_1..B_Q
    std::vector<double> gamma;
    double intercept = 0.0;   // used only without differencing
    double sigma2 = 1.0;

    void check(const Orders& o, std::size_t n_exog) const {
        require(ar.size() == static_cast<std::size_t>(o.p) && ma.size() == static_cast<std::size_t>(o.q) &&
                    sar.size() == static_cast<std::size_t>(o.P) && sma.size() == static_cast<std::size_t>(o.Q),
                ErrorKind::argument, "SARIMAX parameter lengths do not match orders " + o.to_string());
        require(gamma.size() == n_exog, ErrorKind::argument,
                "exogenous column count " + std::to_string(n_exog) + " does not match gamma length " +
                    std::to_string(gamma.size()));
        require(sigma2 >= 0.0 && std::isfinite(sigma2), ErrorKind::argument, "sigma2 must be >= 0");
    }
};

using ExogColumns = std::vector<MonthlySeries>;

/// Reduced-form AR and MA polynomials, a(L) A(L^s) and b(L) B(L^s).
[[nodiscard]] inline std::pair<LagPolynomial, LagPolynomial> expand_polynomials(const Orders& o, const Params& prm) {
    o.validate();
    prm.check(o, prm.gamma.size());
    return {LagPolynomial::from_weights(prm.ar) * LagPolynomial::from_weights(prm.sar, o.s),
            LagPolynomial::from_weights(prm.ma) * LagPolynomial::from_weights(prm.sma, o.s)};
}

/// Coefficients of (1-L)^m (1-L^s)^M.
[[nodiscard]] inline LagPolynomial differencing_polynomial(int m, int M, int s) {
    LagPolynomial d;
    for (int i = 0; i < m; ++i) d = d * LagPolynomial{{-1.0}};
    for (int i = 0; i < M; ++i) d = d * LagPolynomial::from_weights({1.0}, s);
    return d;
}

[[nodiscard]] inline std::vector<double> difference_values(const std::vector<double>& y, int m, int M, int s) {
    std::vector<double> out = y;
    for (int i = 0; i < m; ++i) {
        if (out.size() <= 1) return {};
        for (std::size_t t = out.size() - 1; t >= 1; --t) out[t] -= out[t - 1];
        out.erase(out.begin());
    }
    for (int i = 0; i < M; ++i) {
        const auto lag = static_cast<std::size_t>(s);
        if (out.size() <= lag) return {};
        for (std::size_t t = out.size() - 1; t >= lag; --t) out[t] -= out[t - lag];
        out.erase(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(lag));
    }
    return out;
}

/// Applies (1-L) m times, then (1-L^s) M times.
[[nodiscard]] inline MonthlySeries difference(const MonthlySeries& y, int m, int M, int s) {
    require(m >= 0 && M >= 0 && s >= 1, ErrorKind::argument, "invalid differencing orders");
    const long lost = m + static_cast<long>(M) * s;
    require(static_cast<long>(y.size()) > lost, ErrorKind::insufficient_data,
            "series of length " + std::to_string(y.size()) + " too short for differencing that drops " +
                std::to_string(lost) + " observations");
    return {y.start().plus(lost), difference_values(y.values(), m, M, s), y.unit()};
}

/// Harvey ARMA state space: state_{t+1} = T state_t + R eps_{t+1}, w_t = state_t[0].
struct StateSpace {
    Eigen::MatrixXd transition;
    Eigen::VectorXd loading;    // R
    Eigen::MatrixXd state_cov;  // sigma2 R R'
};

[[nodiscard]] inline StateSpace build_state_space(const LagPolynomial& ar, const LagPolynomial& ma, double sigma2) {
    const auto k = static_cast<Eigen::Index>(std::max(ar.degree(), ma.degree() + 1));
    StateSpace ss;
    ss.transition = Eigen::MatrixXd::Zero(k, k);
    ss.loading = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < k; ++i) {
        if (static_cast<std::size_t>(i) < ar.degree()) ss.transition(i, 0) = -ar.coefficients[static_cast<std::size_t>(i)];
        if (i + 1 < k) ss.transition(i, i + 1) = 1.0;
    }
    ss.loading(0) = 1.0;
    for (std::size_t j = 0; j < ma.degree(); ++j) ss.loading(static_cast<Eigen::Index>(j + 1)) = ma.coefficients[j];
    ss.state_cov = sigma2 * ss.loading * ss.loading.transpose();
    return ss;
}

/// Partial autocorrelations in (-1, 1) -> weights of a stationary 1 - sum w_i L^i.
[[nodiscard]] inline std::vector<double> pacf_to_weights(const std::vector<double>& r) {
    std::vector<double> w, prev;
    for (std::size_t k = 0; k < r.size(); ++k) {
        prev = w;
        w.assign(k + 1, 0.0);
        for (std::size_t j = 0; j < k; ++j) w[j] = prev[j] - r[k] * prev[k - 1 - j];
        w[k] = r[k];
    }
    return w;
}

/// Inverse of pacf_to_weights (Levinson step-down). Returns false when a
/// partial autocorrelation falls outside (-1, 1), i.e. the polynomial has a
/// root on or inside the unit circle.
[[nodiscard]] inline bool weights_to_pacf(std::vector<double> w, std::vector<double>& r) {
    r.assign(w.size(), 0.0);
    for (std::size_t k = w.size(); k-- > 0;) {
        const double rk = w[k];
        if (!(std::fabs(rk) < 1.0)) return false;
        r[k] = rk;
        std::vector<double> prev(k);
        for (std::size_t j = 0; j < k; ++j) prev[j] = (w[j] + rk * w[k - 1 - j]) / (1.0 - rk * rk);
        w = std::move(prev);
    }
    return true;
}

[[nodiscard]] inline bool is_stationary(const LagPolynomial& ar) {
    std::vector<double> r;
    return weights_to_pacf(ar.weights(), r);
}

namespace detail {

inline constexpr double kLn2Pi = 1.8378770664093454836;

/// Solves P = T P T' + R R' by the doubling recursion.
inline Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& T, const Eigen::VectorXd& R) {
    Eigen::MatrixXd P = R * R.transpose();
    Eigen::MatrixXd A = T;
    for (int it = 0; it < 100; ++it) {
        const Eigen::MatrixXd AP = A * P;
        P += AP * A.transpose();
        A = A * A;
        if (A.cwiseAbs().maxCoeff() < 1e-20) break;
        if (!P.allFinite()) break;
    }
    return P;
}

/// Kalman filter output for sigma2 = 1; scale F by sigma2 for the actual model.
struct FilterRun {
    bool ok = true;
    double sum_log_f = 0.0;
    double sum_v2_f = 0.0;
    std::vector<double> v, f, pred;  // innovation, its variance, one-step prediction of w
    Eigen::VectorXd a_next;
    Eigen::MatrixXd P_next;
};

/// Companion structure is exploited so each step costs O(k^2).
inline FilterRun run_filter(const std::vector<double>& phi, const Eigen::VectorXd& R, const std::vector<double>& w,
                            bool keep_path) {
    const auto k = static_cast<std::size_t>(R.size());
    FilterRun out;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        T(static_cast<Eigen::Index>(i), 0) = phi[i];
        if (i + 1 < k) T(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = 1.0;
    }
    Eigen::MatrixXd P0 = stationary_covariance(T, R);
    if (!P0.allFinite()) {
        out.ok = false;
        return out;
    }
    std::vector<double> P(k * k), TP(k * k), a(k, 0.0), ta(k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) P[i * k + j] = P0(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    std::vector<double> RR(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) RR[i * k + j] = R(static_cast<Eigen::Index>(i)) * R(static_cast<Eigen::Index>(j));
    if (keep_path) {
        out.v.reserve(w.size());
        out.f.reserve(w.size());
        out.pred.reserve(w.size());
    }
    std::vector<double> kcol(k);
    for (std::size_t t = 0; t < w.size(); ++t) {
        const double F = P[0];
        if (!(F > 0.0) || !std::isfinite(F)) {
            out.ok = false;
            return out;
        }
        const double v = w[t] - a[0];
        out.sum_log_f += std::log(F);
        out.sum_v2_f += v * v / F;
        if (keep_path) {
            out.v.push_back(v);
            out.f.push_back(F);
            out.pred.push_back(a[0]);
        }
        // TP = T * P
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                TP[i * k + j] = phi[i] * P[j] + (i + 1 < k ? P[(i + 1) * k + j] : 0.0);
            }
        }
        // P <- TP T' + R R' - (TP)_{:,0} (TP)_{:,0}' / F
        for (std::size_t i = 0; i < k; ++i) kcol[i] = TP[i * k];
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i; j < k; ++j) {
                const double tpt = TP[i * k] * phi[j] + (j + 1 < k ? TP[i * k + j + 1] : 0.0);
                const double val = tpt + RR[i * k + j] - kcol[i] * kcol[j] / F;
                P[i * k + j] = val;
                P[j * k + i] = val;
            }
        }
        // a <- T a + K v with K = (TP)_{:,0} / F
        for (std::size_t i = 0; i < k; ++i) ta[i] = phi[i] * a[0] + (i + 1 < k ? a[i + 1] : 0.0) + kcol[i] / F * v;
        a.swap(ta);
    }
    out.a_next = Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(k));
    out.P_next = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        P.data(), static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    return out;
}

/// phi (length k, zero padded) and R for the reduced ARMA.
inline std::pair<std::vector<double>, Eigen::VectorXd> companion(const LagPolynomial& ar, const LagPolynomial& ma) {
    const std::size_t k = std::max(ar.degree(), ma.degree() + 1);
    std::vector<double> phi(k, 0.0);
    for (std::size_t i = 0; i < ar.degree(); ++i) phi[i] = -ar.coefficients[i];
    Eigen::VectorXd R = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    R(0) = 1.0;
    for (std::size_t j = 0; j < ma.degree(); ++j) R(static_cast<Eigen::Index>(j + 1)) = ma.coefficients[j];
    return {std::move(phi), std::move(R)};
}

/// Differenced regression residual w_t = D(L) y_t - c - D(L) x_t' gamma.
inline std::vector<double> regression_residual(const Orders& o, const Params& prm, const std::vector<double>& y,
                                               const std::vector<std::vector<double>>& x) {
    std::vector<double> w = difference_values(y, o.m, o.M, o.s);
    if (o.has_intercept()) {
        for (double& v : w) v -= prm.intercept;
    }
    for (std::size_t j = 0; j < x.size(); ++j) {
        const std::vector<double> xd = difference_values(x[j], o.m, o.M, o.s);
        for (std::size_t t = 0; t < w.size(); ++t) w[t] -= prm.gamma[j] * xd[t];
    }
    return w;
}

inline std::vector<std::vector<double>> columns_of(const ExogColumns& exog) {
    std::vector<std::vector<double>> x;
    x.reserve(exog.size());
    for (const auto& c : exog) x.push_back(c.values());
    return x;
}

inline void check_aligned(const MonthlySeries& y, const ExogColumns& exog) {
    for (std::size_t j = 0; j < exog.size(); ++j) {
        require(exog[j].range() == y.range(), ErrorKind::argument,
                "exogenous column " + std::to_string(j) + " covers " + exog[j].start().to_string() + ".." +
                    exog[j].end().to_string() + " but y covers " + y.start().to_string() + ".." +
                    y.end().to_string());
    }
}

inline double loglik_from(const FilterRun& run, double sigma2, std::size_t n) {
    return -0.5 * (static_cast<double>(n) * (kLn2Pi + std::log(sigma2)) + run.sum_log_f + run.sum_v2_f / sigma2);
}

}  // namespace detail

/// Exact Gaussian log-likelihood of y given the exogenous columns (same
/// calendar as y, undifferenced; differencing is applied here).
[[nodiscard]] inline double kalman_loglik(const Orders& orders, const Params& params, const MonthlySeries& y,
                                          const ExogColumns& exog) {
    orders.validate();
    params.check(orders, exog.size());
    detail::check_aligned(y, exog);
    require(static_cast<long>(y.size()) > orders.diff_length(), ErrorKind::insufficient_data,
            "series too short for the requested differencing");
    require(params.sigma2 > 0.0, ErrorKind::argument, "sigma2 must be positive for a likelihood");
    const auto [ar, ma] = expand_polynomials(orders, params);
    require(is_stationary(ar), ErrorKind::domain, "reduced AR polynomial is not stationary");
    const auto w = detail::regression_residual(orders, params, y.values(), detail::columns_of(exog));
    const auto [phi, R] = detail::companion(ar, ma);
    const detail::FilterRun run = detail::run_filter(phi, R, w, false);
    if (!run.ok) fail(ErrorKind::numeric, "Kalman filter produced a non-positive innovation variance");
    return detail::loglik_from(run, params.sigma2, w.size());
}

enum class Phase { historical, validation, forecast };

[[nodiscard]] inline const char* to_string(Phase p) noexcept {
    switch (p) {
        case Phase::historical: return "historical";
        case Phase::validation: return "validation";
        case Phase::forecast: return "forecast";
    }
    return "historical";
}

struct ForecastResult {
    MonthlySeries mean;
    MonthlySeries se;
    Phase phase = Phase::forecast;
};

struct Model {
    Orders orders;
    Params params;               // on the standardized exogenous scale
    std::vector<double> gamma_raw;
    double intercept_raw = 0.0;
    std::vector<std::string> exog_names;
    std::vector<double> exog_mean;   // standardization constants
    std::vector<double> exog_scale;
    std::vector<double> gamma_se;      // standardized scale
    std::vector<double> gamma_se_raw;
    double loglik = 0.0;
    double aic = 0.0;
    std::size_t n_obs = 0;             // after differencing
    bool converged = false;
    std::string termination;
    MonthlySeries history;             // conditioning sample
    ExogColumns history_exog;          // raw scale
};

struct FitOptions {
    optim::SimplexOptions simplex{1e-10, 4000, 2, 0.05, 0.1};
    optim::BfgsOptions bfgs{1e-6, 300};
    bool standard_errors = true;
    std::vector<std::string> exog_names;  // optional, for messages and output
};

namespace detail {

inline std::vector<std::vector<double>> standardized(const Model& m, const ExogColumns& exog) {
    std::vector<std::vector<double>> x(exog.size());
    for (std::size_t j = 0; j < exog.size(); ++j) {
        x[j].resize(exog[j].size());
        for (std::size_t t = 0; t < exog[j].size(); ++t) x[j][t] = (exog[j][t] - m.exog_mean[j]) / m.exog_scale[j];
    }
    return x;
}

/// Filters the model's history with its parameters.
inline FilterRun filter_history(const Model& m) {
    const auto [ar, ma] = expand_polynomials(m.orders, m.params);
    require(is_stationary(ar), ErrorKind::domain, "reduced AR polynomial is not stationary");
    const auto w = regression_residual(m.orders, m.params, m.history.values(), standardized(m, m.history_exog));
    const auto [phi, R] = companion(ar, ma);
    FilterRun run = run_filter(phi, R, w, true);
    if (!run.ok) fail(ErrorKind::numeric, "Kalman filter produced a non-positive innovation variance");
    return run;
}

inline std::string column_name(const std::vector<std::string>& names, std::size_t j) {
    return j < names.size() ? names[j] : "exog[" + std::to_string(j) + "]";
}

}  // namespace detail

/// Wraps fixed parameters (on the scale of `exog`) and a conditioning sample
/// into a model usable by forecast() and predict_in_sample().
[[nodiscard]] inline Model make_model(const Orders& orders, const Params& params, const MonthlySeries& y,
                                      const ExogColumns& exog) {
    orders.validate();
    params.check(orders, exog.size());
    detail::check_aligned(y, exog);
    Model m;
    m.orders = orders;
    m.params = params;
    m.gamma_raw = params.gamma;
    m.intercept_raw = params.intercept;
    m.exog_mean.assign(exog.size(), 0.0);
    m.exog_scale.assign(exog.size(), 1.0);
    m.history = y;
    m.history_exog = exog;
    m.n_obs = y.size() - static_cast<std::size_t>(orders.diff_length());
    return m;
}

/// Maximum-likelihood fit. Exogenous columns are z-scored with their sample
/// mean/std; AR and MA factors are searched through partial autocorrelations
/// so every candidate is stationary and invertible; sigma2 is concentrated out.
[[nodiscard]] inline Model fit(const MonthlySeries& y, const ExogColumns& exog, const Orders& orders,
                               const FitOptions& opt = {}) {
    orders.validate();
    detail::check_aligned(y, exog);
    const long n_diff = static_cast<long>(y.size()) - orders.diff_length();
    require(n_diff >= 3L * orders.s, ErrorKind::insufficient_data,
            "SARIMAX fit needs at least " + std::to_string(3 * orders.s) + " observations after differencing, got " +
                std::to_string(std::max(0L, n_diff)));
    for (std::size_t t = 0; t < y.size(); ++t) {
        require(std::isfinite(y[t]), ErrorKind::argument, "non-finite dependent value at " + y.month_at(t).to_string());
    }

    Model m;
    m.orders = orders;
    m.history = y;
    m.history_exog = exog;
    m.exog_names = opt.exog_names;
    const std::size_t r = exog.size();
    m.exog_mean.assign(r, 0.0);
    m.exog_scale.assign(r, 1.0);
    for (std::size_t j = 0; j < r; ++j) {
        const auto& c = exog[j].values();
        double mean = 0.0;
        for (double v : c) mean += v;
        mean /= static_cast<double>(c.size());
        double ss = 0.0;
        for (double v : c) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(c.size() - 1));
        require(sd > 0.0 && std::isfinite(sd), ErrorKind::fit,
                "exogenous column '" + detail::column_name(opt.exog_names, j) + "' is constant (collinear with the intercept)");
        m.exog_mean[j] = mean;
        m.exog_scale[j] = sd;
    }
    const auto x = detail::standardized(m, exog);
    const std::vector<double> yd = difference_values(y.values(), orders.m, orders.M, orders.s);
    std::vector<std::vector<double>> xd(r);
    for (std::size_t j = 0; j < r; ++j) xd[j] = difference_values(x[j], orders.m, orders.M, orders.s);

    const std::size_t n = yd.size();
    const std::size_t nb = (orders.has_intercept() ? 1 : 0) + r;
    Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nb));
    if (nb > 0) {
        Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nb));
        Eigen::VectorXd Y(static_cast<Eigen::Index>(n));
        for (std::size_t t = 0; t < n; ++t) {
            Eigen::Index c = 0;
            if (orders.has_intercept()) X(static_cast<Eigen::Index>(t), c++) = 1.0;
            for (std::size_t j = 0; j < r; ++j) X(static_cast<Eigen::Index>(t), c++) = xd[j][t];
            Y(static_cast<Eigen::Index>(t)) = yd[t];
        }
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
        qr.setThreshold(1e-10);
        if (qr.rank() < static_cast<Eigen::Index>(nb)) {
            std::string names;
            const auto& perm = qr.colsPermutation().indices();
            for (Eigen::Index c = qr.rank(); c < static_cast<Eigen::Index>(nb); ++c) {
                const Eigen::Index col = perm(c);
                const bool is_icpt = orders.has_intercept() && col == 0;
                const std::size_t j = static_cast<std::size_t>(col - (orders.has_intercept() ? 1 : 0));
                if (!names.empty()) names += ", ";
                names += is_icpt ? std::string("intercept") : detail::column_name(opt.exog_names, j);
            }
            fail(ErrorKind::fit, "collinear exogenous columns: " + names);
        }
        beta0 = qr.solve(Y);
    }

    const std::size_t np = static_cast<std::size_t>(orders.p + orders.q + orders.P + orders.Q);
    std::vector<optim::Bound> bounds(nb + np);
    for (std::size_t i = nb; i < nb + np; ++i) bounds[i] = {-1.0, 1.0};

    auto unpack = [&](const std::vector<double>& theta) {
        Params prm;
        std::size_t k = 0;
        if (orders.has_intercept()) prm.intercept = theta[k++];
        prm.gamma.assign(theta.begin() + static_cast<std::ptrdiff_t>(k), theta.begin() + static_cast<std::ptrdiff_t>(k + r));
        k += r;
        auto take = [&](int count) {
            std::vector<double> part(theta.begin() + static_cast<std::ptrdiff_t>(k),
                                     theta.begin() + static_cast<std::ptrdiff_t>(k + static_cast<std::size_t>(count)));
            k += static_cast<std::size_t>(count);
            return pacf_to_weights(part);
        };
        prm.ar = take(orders.p);
        prm.ma = take(orders.q);
        prm.sar = take(orders.P);
        prm.sma = take(orders.Q);
        return prm;
    };
    // Concentrated negative log-likelihood per observation.
    auto objective = [&](const std::vector<double>& u) {
        const Params prm = unpack(optim::bounded_reparam(u, bounds));
        const auto [ar, ma] = expand_polynomials(orders, prm);
        std::vector<double> w = yd;
        for (std::size_t t = 0; t < n; ++t) {
            if (orders.has_intercept()) w[t] -= prm.intercept;
            for (std::size_t j = 0; j < r; ++j) w[t] -= prm.gamma[j] * xd[j][t];
        }
        const auto [phi, R] = detail::companion(ar, ma);
        const detail::FilterRun run = detail::run_filter(phi, R, w, false);
        if (!run.ok) return std::numeric_limits<double>::infinity();
        const double s2 = run.sum_v2_f / static_cast<double>(n);
        if (!(s2 > 0.0)) return std::numeric_limits<double>::infinity();
        return 0.5 * (detail::kLn2Pi + 1.0 + std::log(s2)) + 0.5 * run.sum_log_f / static_cast<double>(n);
    };

    std::vector<double> theta0(nb + np, 0.0);
    for (std::size_t i = 0; i < nb; ++i) theta0[i] = beta0(static_cast<Eigen::Index>(i));
    for (std::size_t i = nb; i < nb + np; ++i) theta0[i] = 0.1;
    const optim::OptimResult res = optim::minimize(objective, optim::bounded_inverse(theta0, bounds), opt.simplex, opt.bfgs);

    m.params = unpack(optim::bounded_reparam(res.x, bounds));
    {
        const auto [ar, ma] = expand_polynomials(orders, m.params);
        std::vector<double> w = detail::regression_residual(orders, m.params, y.values(), x);
        const auto [phi, R] = detail::companion(ar, ma);
        const detail::FilterRun run = detail::run_filter(phi, R, w, false);
        require(run.ok, ErrorKind::fit, "SARIMAX fit ended at a point with a degenerate filter");
        m.params.sigma2 = run.sum_v2_f / static_cast<double>(n);
        m.loglik = detail::loglik_from(run, m.params.sigma2, n);
    }
    m.n_obs = n;
    const int k_params = static_cast<int>(nb + np) + 1;
    m.aic = 2.0 * k_params - 2.0 * m.loglik;
    m.converged = res.converged;
    m.termination = optim::to_string(res.termination);

    m.gamma_raw.resize(r);
    m.intercept_raw = m.params.intercept;
    for (std::size_t j = 0; j < r; ++j) {
        m.gamma_raw[j] = m.params.gamma[j] / m.exog_scale[j];
        if (orders.has_intercept()) m.intercept_raw -= m.params.gamma[j] * m.exog_mean[j] / m.exog_scale[j];
    }

    m.gamma_se.assign(r, std::numeric_limits<double>::quiet_NaN());
    m.gamma_se_raw = m.gamma_se;
    if (opt.standard_errors && r > 0) {
        // Observed information over the natural parameters (beta, ARMA weights, sigma2).
        std::vector<double> nat;
        if (orders.has_intercept()) nat.push_back(m.params.intercept);
        nat.insert(nat.end(), m.params.gamma.begin(), m.params.gamma.end());
        for (const auto* part : {&m.params.ar, &m.params.ma, &m.params.sar, &m.params.sma})
            nat.insert(nat.end(), part->begin(), part->end());
        nat.push_back(m.params.sigma2);
        auto neg_ll = [&](const std::vector<double>& v) {
            Params prm;
            std::size_t k = 0;
            if (orders.has_intercept()) prm.intercept = v[k++];
            for (std::size_t j = 0; j < r; ++j) prm.gamma.push_back(v[k++]);
            for (auto [vec, cnt] : {std::pair{&prm.ar, orders.p}, std::pair{&prm.ma, orders.q},
                                    std::pair{&prm.sar, orders.P}, std::pair{&prm.sma, orders.Q}}) {
                for (int i = 0; i < cnt; ++i) vec->push_back(v[k++]);
            }
            prm.sigma2 = v[k];
            if (!(prm.sigma2 > 0.0)) return std::numeric_limits<double>::infinity();
            const auto [ar, ma] = expand_polynomials(orders, prm);
            if (!is_stationary(ar)) return std::numeric_limits<double>::infinity();
            const auto w = detail::regression_residual(orders, prm, y.values(), x);
            const auto [phi, R] = detail::companion(ar, ma);
            const detail::FilterRun run = detail::run_filter(phi, R, w, false);
            if (!run.ok) return std::numeric_limits<double>::infinity();
            return -detail::loglik_from(run, prm.sigma2, n);
        };
        const std::vector<double> h = optim::numeric_hessian(neg_ll, nat);
        const auto d = static_cast<Eigen::Index>(nat.size());
        Eigen::MatrixXd H = Eigen::Map<const Eigen::MatrixXd>(h.data(), d, d);
        if (H.allFinite()) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(d, d));
                const std::size_t off = orders.has_intercept() ? 1 : 0;
                for (std::size_t j = 0; j < r; ++j) {
                    const double v = cov(static_cast<Eigen::Index>(off + j), static_cast<Eigen::Index>(off + j));
                    if (v > 0.0) {
                        m.gamma_se[j] = std::sqrt(v);
                        m.gamma_se_raw[j] = m.gamma_se[j] / m.exog_scale[j];
                    }
                }
            }
        }
    }
    return m;
}

/// Same model conditioned on a longer sample: `y_more` and `exog_more` must
/// continue the history month for month. Parameters are unchanged.
[[nodiscard]] inline Model extend(const Model& model, const MonthlySeries& y_more, const ExogColumns& exog_more) {
    require(y_more.start() == model.history.end().next(), ErrorKind::argument,
            "extension must start at " + model.history.end().next().to_string());
    require(exog_more.size() == model.history_exog.size(), ErrorKind::argument, "exogenous column count mismatch");
    detail::check_aligned(y_more, exog_more);
    Model out = model;
    std::vector<double> yv = model.history.values();
    yv.insert(yv.end(), y_more.values().begin(), y_more.values().end());
    out.history = model.history.with_values(std::move(yv));
    for (std::size_t j = 0; j < exog_more.size(); ++j) {
        std::vector<double> xv = model.history_exog[j].values();
        xv.insert(xv.end(), exog_more[j].values().begin(), exog_more[j].values().end());
        out.history_exog[j] = model.history_exog[j].with_values(std::move(xv));
    }
    return out;
}

/// One-step-ahead predictions over the conditioning sample, on the level
/// scale. The first m + M s months have no prediction and are NaN.
[[nodiscard]] inline ForecastResult predict_in_sample(const Model& model, Phase phase = Phase::historical) {
    const detail::FilterRun run = detail::filter_history(model);
    const auto& y = model.history.values();
    const auto D = static_cast<std::size_t>(model.orders.diff_length());
    const std::vector<double> c = differencing_polynomial(model.orders.m, model.orders.M, model.orders.s).coefficients;
    const auto x = detail::standardized(model, model.history_exog);
    std::vector<std::vector<double>> xd(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) xd[j] = difference_values(x[j], model.orders.m, model.orders.M, model.orders.s);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> mean(y.size(), nan), se(y.size(), nan);
    for (std::size_t i = 0; i < run.pred.size(); ++i) {
        const std::size_t t = i + D;
        double reg = model.orders.has_intercept() ? model.params.intercept : 0.0;
        for (std::size_t j = 0; j < xd.size(); ++j) reg += model.params.gamma[j] * xd[j][i];
        double level = reg + run.pred[i];
        for (std::size_t l = 0; l < c.size(); ++l) level -= c[l] * y[t - l - 1];
        mean[t] = level;
        se[t] = std::sqrt(model.params.sigma2 * run.f[i]);
    }
    return {model.history.with_values(std::move(mean)), model.history.with_values(std::move(se)), phase};
}

/// Standardized one-step innovations v_t / sqrt(F_t) over the conditioning sample.
[[nodiscard]] inline std::vector<double> standardized_residuals(const Model& model) {
    const detail::FilterRun run = detail::filter_history(model);
    std::vector<double> e(run.v.size());
    for (std::size_t t = 0; t < e.size(); ++t) e[t] = run.v[t] / std::sqrt(run.f[t]);
    return e;
}

/// h-step forecasts beyond the conditioning sample. Mean and standard error
/// are on the level scale; differencing is undone inside an augmented state
/// so forecast-error covariances across horizons are carried exactly.
[[nodiscard]] inline ForecastResult forecast(const Model& model, const ExogColumns& exog_future, int horizon) {
    require(horizon > 0, ErrorKind::argument, "forecast horizon must be positive");
    require(exog_future.size() == model.history_exog.size(), ErrorKind::argument,
            "future exogenous column count " + std::to_string(exog_future.size()) + " does not match the model's " +
                std::to_string(model.history_exog.size()));
    const MonthStamp first = model.history.end().next();
    for (std::size_t j = 0; j < exog_future.size(); ++j) {
        require(exog_future[j].start() == first && exog_future[j].size() >= static_cast<std::size_t>(horizon),
                ErrorKind::argument,
                "future exogenous column " + std::to_string(j) + " must start at " + first.to_string() + " and cover " +
                    std::to_string(horizon) + " months");
    }
    const Orders& o = model.orders;
    const auto h = static_cast<std::size_t>(horizon);
    const detail::FilterRun run = detail::filter_history(model);
    const auto [ar, ma] = expand_polynomials(o, model.params);
    const auto [phi, R] = detail::companion(ar, ma);
    const std::size_t k = phi.size();
    const std::vector<double> c = differencing_polynomial(o.m, o.M, o.s).coefficients;
    const std::size_t D = c.size();

    // Differenced standardized exog over the future months.
    std::vector<std::vector<double>> xd_future(exog_future.size());
    for (std::size_t j = 0; j < exog_future.size(); ++j) {
        std::vector<double> joined = model.history_exog[j].values();
        joined.insert(joined.end(), exog_future[j].values().begin(), exog_future[j].values().begin() + static_cast<std::ptrdiff_t>(h));
        for (double& v : joined) v = (v - model.exog_mean[j]) / model.exog_scale[j];
        const std::vector<double> d = difference_values(joined, o.m, o.M, o.s);
        xd_future[j].assign(d.end() - static_cast<std::ptrdiff_t>(h), d.end());
    }

    std::vector<double> levels = model.history.values();
    std::vector<double> mean(h), se(h);
    Eigen::VectorXd a = run.a_next;
    const auto K = static_cast<Eigen::Index>(k + D);
    Eigen::MatrixXd Paug = Eigen::MatrixXd::Zero(K, K);
    Paug.topLeftCorner(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = run.P_next;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(K);
    g(0) = 1.0;
    for (std::size_t l = 0; l < D; ++l) g(static_cast<Eigen::Index>(k + l)) = -c[l];
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K, K);
    for (std::size_t i = 0; i < k; ++i) {
        A(static_cast<Eigen::Index>(i), 0) = phi[i];
        if (i + 1 < k) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i + 1)) = 1.0;
    }
    if (D > 0) {
        A.row(static_cast<Eigen::Index>(k)) = g.transpose();
        for (std::size_t l = 1; l < D; ++l) A(static_cast<Eigen::Index>(k + l), static_cast<Eigen::Index>(k + l - 1)) = 1.0;
    }
    Eigen::MatrixXd Qaug = Eigen::MatrixXd::Zero(K, K);
    Qaug.topLeftCorner(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = R * R.transpose();

    for (std::size_t step = 0; step < h; ++step) {
        double reg = o.has_intercept() ? model.params.intercept : 0.0;
        for (std::size_t j = 0; j < xd_future.size(); ++j) reg += model.params.gamma[j] * xd_future[j][step];
        double level = reg + a(0);
        const std::size_t t = levels.size();
        for (std::size_t l = 0; l < D; ++l) level -= c[l] * levels[t - l - 1];
        levels.push_back(level);
        mean[step] = level;
        const double var = model.params.sigma2 * g.dot(Paug * g);
        se[step] = std::sqrt(std::max(var, 0.0));
        // advance the ARMA state mean and the augmented error covariance
        Eigen::VectorXd next(static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i) next(static_cast<Eigen::Index>(i)) = phi[i] * a(0) + (i + 1 < k ? a(static_cast<Eigen::Index>(i + 1)) : 0.0);
        a = next;
        Paug = A * Paug * A.transpose() + Qaug;
    }
    return {MonthlySeries(first, std::move(mean), model.history.unit()),
            MonthlySeries(first, std::move(se), model.history.unit()), Phase::forecast};
}

/// mean +/- n_se * se. One standard error gives the 68% band.
[[nodiscard]] inline BandSeries prediction_interval(const ForecastResult& fc, double n_se = 1.0) {
    require(n_se > 0.0, ErrorKind::argument, "interval width multiplier must be positive");
    std::vector<double> lo(fc.mean.size()), hi(fc.mean.size());
    for (std::size_t t = 0; t < lo.size(); ++t) {
        lo[t] = fc.mean[t] - n_se * fc.se[t];
        hi[t] = fc.mean[t] + n_se * fc.se[t];
    }
    return {fc.mean, fc.mean.with_values(std::move(lo)), fc.mean.with_values(std::move(hi)), 0, WidthRule::k_sigma};
}

struct OrderRange {
    int lo = 0;
    int hi = 0;
};

struct OrderGrid {
    OrderRange p{0, 1}, m{0, 0}, q{0, 1};
    OrderRange P{0, 1}, M{0, 0}, Q{0, 1};
    int s = 12;
};

/// AIC search over the grid; ties prefer the smaller total order, then the
/// lexicographically smaller (p, m, q, P, M, Q).
[[nodiscard]] inline Orders select_orders(const MonthlySeries& y, const ExogColumns& exog, const OrderGrid& grid,
                                          const FitOptions& opt = {}) {
    auto ok = [](OrderRange r, int cap) { return r.lo >= 0 && r.lo <= r.hi && r.hi <= cap; };
    require(ok(grid.p, 2) && ok(grid.q, 2) && ok(grid.P, 2) && ok(grid.Q, 2) && ok(grid.m, 1) && ok(grid.M, 1) &&
                grid.s == 12,
            ErrorKind::argument, "SARIMAX order grid must satisfy p,q,P,Q <= 2, m,M <= 1, s = 12");
    FitOptions fopt = opt;
    fopt.standard_errors = false;
    bool found = false;
    Orders best{};
    double best_aic = std::numeric_limits<double>::infinity();
    std::string last_error;
    for (int p = grid.p.lo; p <= grid.p.hi; ++p)
        for (int m = grid.m.lo; m <= grid.m.hi; ++m)
            for (int q = grid.q.lo; q <= grid.q.hi; ++q)
                for (int P = grid.P.lo; P <= grid.P.hi; ++P)
                    for (int M = grid.M.lo; M <= grid.M.hi; ++M)
                        for (int Q = grid.Q.lo; Q <= grid.Q.hi; ++Q) {
                            const Orders cand{p, m, q, P, M, Q, grid.s};
                            try {
                                const Model f = fit(y, exog, cand, fopt);
                                if (!std::isfinite(f.aic)) continue;
                                if (!found || f.aic < best_aic ||
                                    (f.aic == best_aic && cand.total_order() < best.total_order())) {
                                    best = cand;
                                    best_aic = f.aic;
                                    found = true;
                                }
                            } catch (const Error& e) {
                                last_error = e.what();
                            }
                        }
    require(found, ErrorKind::fit, "SARIMAX order selection failed for every candidate: " + last_error);
    return best;
}

struct LjungBox {
    double statistic = 0.0;
    double p_value = 1.0;
    int df = 0;
};

/// Portmanteau test on residual autocorrelations up to `lags`; degrees of
/// freedom are reduced by the number of fitted ARMA coefficients.
[[nodiscard]] inline LjungBox ljung_box(const std::vector<double>& e, int lags, int fitted_arma = 0) {
    require(lags >= 1 && static_cast<std::size_t>(lags) < e.size(), ErrorKind::argument, "invalid Ljung-Box lag count");
    const std::size_t n = e.size();
    double mean = 0.0;
    for (double v : e) mean += v;
    mean /= static_cast<double>(n);
    double c0 = 0.0;
    for (double v : e) c0 += (v - mean) * (v - mean);
    double q = 0.0;
    for (int l = 1; l <= lags; ++l) {
        double cl = 0.0;
        for (std::size_t t = static_cast<std::size_t>(l); t < n; ++t) cl += (e[t] - mean) * (e[t - l] - mean);
        const double rho = cl / c0;
        q += rho * rho / static_cast<double>(n - static_cast<std::size_t>(l));
    }
    q *= static_cast<double>(n) * (static_cast<double>(n) + 2.0);
    LjungBox out;
    out.statistic = q;
    out.df = std::max(1, lags - fitted_arma);
    out.p_value = boost::math::gamma_q(0.5 * out.df, 0.5 * q);
    return out;
}

}  // namespace agrivol::sarimax
