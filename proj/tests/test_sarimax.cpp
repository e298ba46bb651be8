#include <catch2/catch_amalgamated.hpp>

#include "agrivol/sarimax.hpp"
#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace agrivol;
using namespace agrivol::sarimax;
using Catch::Approx;

namespace {

const MonthStamp kStart{1990, 1};

MonthlySeries series(std::vector<double> v) { return {kStart, std::move(v), "x"}; }

/// Full coefficient vector (index = power) of 1 - sum w_i L^{i*spacing}.
std::vector<double> full_poly(const std::vector<double>& w, int spacing) {
    std::vector<double> c(w.size() * static_cast<std::size_t>(spacing) + 1, 0.0);
    c[0] = 1.0;
    for (std::size_t i = 0; i < w.size(); ++i) c[(i + 1) * static_cast<std::size_t>(spacing)] = -w[i];
    return c;
}

/// Reduced-form AR weights phi and MA coefficients theta (w_t = sum phi w + e + sum theta e);
/// both Params polynomials read 1 - c_1 L - ..., so theta is the MA polynomial itself.
struct Reduced {
    std::vector<double> phi, theta;
};

Reduced reduced(const Params& prm, int s) {
    const auto ar = oracle::poly_multiply(full_poly(prm.ar, 1), full_poly(prm.sar, s));
    const auto ma = oracle::poly_multiply(full_poly(prm.ma, 1), full_poly(prm.sma, s));
    Reduced r;
    for (std::size_t i = 1; i < ar.size(); ++i) r.phi.push_back(-ar[i]);
    for (std::size_t i = 1; i < ma.size(); ++i) r.theta.push_back(ma[i]);
    return r;
}

std::vector<double> simulate_arma(const Reduced& r, double sd, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, sd);
    const std::size_t burn = 600;
    std::vector<double> w(n + burn, 0.0), e(n + burn, 0.0);
    for (std::size_t t = 0; t < w.size(); ++t) {
        e[t] = z(rng);
        double v = e[t];
        for (std::size_t i = 1; i <= r.phi.size() && i <= t; ++i) v += r.phi[i - 1] * w[t - i];
        for (std::size_t j = 1; j <= r.theta.size() && j <= t; ++j) v += r.theta[j - 1] * e[t - j];
        w[t] = v;
    }
    return {w.begin() + static_cast<std::ptrdiff_t>(burn), w.end()};
}

std::vector<double> gaussian(std::size_t n, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = z(rng);
    return v;
}

Orders orders_of(int p, int q, int P = 0, int Q = 0, int m = 0, int M = 0) { return {p, m, q, P, M, Q, 12}; }

}  // namespace

TEST_CASE("polynomial expansion", "[sarimax][poly]") {
    Params prm;
    prm.ar = {0.5};
    prm.sar = {0.3};
    const auto [ar, ma] = expand_polynomials(orders_of(1, 0, 1, 0), prm);
    REQUIRE(ar.degree() == 13);
    CHECK(ar.coefficients[0] == -0.5);
    CHECK(ar.coefficients[11] == -0.3);
    CHECK(ar.coefficients[12] == Approx(0.15).margin(1e-15));
    for (std::size_t i = 1; i < 11; ++i) CHECK(ar.coefficients[i] == 0.0);
    CHECK(ma.degree() == 0);

    const auto [a0, m0] = expand_polynomials(orders_of(0, 0), Params{});
    CHECK(a0.degree() == 0);
    CHECK(m0.degree() == 0);

    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    std::uniform_int_distribution<int> ord(0, 2);
    for (int rep = 0; rep < 25; ++rep) {
        Orders o = orders_of(ord(rng), ord(rng), ord(rng), ord(rng));
        Params q;
        for (int i = 0; i < o.p; ++i) q.ar.push_back(u(rng));
        for (int i = 0; i < o.q; ++i) q.ma.push_back(u(rng));
        for (int i = 0; i < o.P; ++i) q.sar.push_back(u(rng));
        for (int i = 0; i < o.Q; ++i) q.sma.push_back(u(rng));
        const auto [ra, rm] = expand_polynomials(o, q);
        const auto fa = oracle::poly_multiply(full_poly(q.ar, 1), full_poly(q.sar, 12));
        const auto fm = oracle::poly_multiply(full_poly(q.ma, 1), full_poly(q.sma, 12));
        REQUIRE(ra.degree() + 1 == fa.size());
        REQUIRE(rm.degree() + 1 == fm.size());
        for (std::size_t i = 0; i < ra.degree(); ++i) CHECK(ra.coefficients[i] == fa[i + 1]);
        for (std::size_t i = 0; i < rm.degree(); ++i) CHECK(rm.coefficients[i] == fm[i + 1]);
    }
}

TEST_CASE("differencing", "[sarimax][difference]") {
    auto d = difference(series({1, 3, 6}), 1, 0, 12);
    REQUIRE(d.size() == 2);
    CHECK(d[0] == 2.0);
    CHECK(d[1] == 3.0);
    CHECK(d.start() == kStart.next());

    auto id = difference(series({1, 3, 6}), 0, 0, 12);
    CHECK(id.values() == std::vector<double>{1, 3, 6});

    std::vector<double> x(60);
    const double season[12] = {3, -1, 4, 1, -5, 9, 2, -6, 5, 3, -5, 8};
    for (std::size_t t = 0; t < x.size(); ++t) x[t] = static_cast<double>(t) + season[t % 12];
    auto z = difference(series(x), 1, 1, 12);
    CHECK(z.size() == 60 - 13);
    for (double v : z.values()) CHECK(v == 0.0);

    CHECK_THROWS_AS(difference(series({1, 2, 3}), 0, 1, 12), Error);
}

TEST_CASE("Kalman likelihood closed forms", "[sarimax][kalman]") {
    const auto y = gaussian(40, 1.0, 3);
    double expect = 0.0;
    for (double v : y) expect += std::log(2 * std::numbers::pi) + v * v;
    CHECK(kalman_loglik(orders_of(0, 0), Params{}, series(y), {}) == Approx(-0.5 * expect).epsilon(1e-13));

    Params ar0;
    ar0.ar = {0.0};
    CHECK(kalman_loglik(orders_of(1, 0), ar0, series({0.0}), {}) ==
          Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-14));
}

TEST_CASE("Kalman likelihood equals the dense Gaussian density", "[sarimax][kalman]") {
    SECTION("ARMA(1,1), n = 50") {
        Params prm;
        prm.ar = {0.6};
        prm.ma = {-0.3};
        prm.sigma2 = 1.7;
        const auto w = simulate_arma(reduced(prm, 12), 1.3, 50, 8);
        const auto r = reduced(prm, 12);
        const double dense = oracle::dense_gaussian_loglik(w, oracle::arma_autocov(r.phi, r.theta, prm.sigma2, 50));
        CHECK(std::fabs(kalman_loglik(orders_of(1, 1), prm, series(w), {}) - dense) < 1e-8);
    }
    SECTION("randomized ARMA(p,q), p,q <= 2") {
        std::mt19937_64 rng(21);
        std::uniform_real_distribution<double> pac(-0.85, 0.85);
        std::uniform_int_distribution<int> ord(0, 2);
        std::uniform_int_distribution<int> len(5, 50);
        for (int rep = 0; rep < 40; ++rep) {
            const Orders o = orders_of(ord(rng), ord(rng));
            std::vector<double> ra, rm;
            for (int i = 0; i < o.p; ++i) ra.push_back(pac(rng));
            for (int i = 0; i < o.q; ++i) rm.push_back(pac(rng));
            Params prm;
            prm.ar = pacf_to_weights(ra);
            prm.ma = pacf_to_weights(rm);
            prm.sigma2 = 0.5 + std::fabs(pac(rng));
            const auto n = static_cast<std::size_t>(len(rng));
            const auto r = reduced(prm, 12);
            const auto w = simulate_arma(r, std::sqrt(prm.sigma2), n, 900 + static_cast<std::uint64_t>(rep));
            const double dense = oracle::dense_gaussian_loglik(w, oracle::arma_autocov(r.phi, r.theta, prm.sigma2, n));
            CHECK(std::fabs(kalman_loglik(o, prm, series(w), {}) - dense) < 1e-8);
        }
    }
    SECTION("seasonal ARMA (1,0,1)(1,0,1,12)") {
        Params prm;
        prm.ar = {0.4};
        prm.ma = {0.2};
        prm.sar = {0.5};
        prm.sma = {-0.3};
        prm.sigma2 = 0.8;
        const auto r = reduced(prm, 12);
        const auto w = simulate_arma(r, std::sqrt(prm.sigma2), 50, 5);
        const double dense = oracle::dense_gaussian_loglik(w, oracle::arma_autocov(r.phi, r.theta, prm.sigma2, 50));
        CHECK(std::fabs(kalman_loglik(orders_of(1, 1, 1, 1), prm, series(w), {}) - dense) < 1e-8);
    }
}

TEST_CASE("Kalman likelihood errors", "[sarimax][kalman]") {
    Params unit;
    unit.ar = {1.0};
    try {
        (void)kalman_loglik(orders_of(1, 0), unit, series(gaussian(30, 1, 1)), {});
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::domain);
    }
    Params g;
    g.gamma = {1.0, 2.0};
    try {
        (void)kalman_loglik(orders_of(0, 0), g, series(gaussian(30, 1, 1)), {series(gaussian(30, 1, 2))});
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::argument);
    }
}

TEST_CASE("regression identities at fixed parameters", "[sarimax][kalman]") {
    const auto x = gaussian(80, 1.0, 10);
    const auto y = gaussian(80, 1.0, 11);
    const double c = 3.25;
    std::vector<double> shifted(x);
    for (auto& v : shifted) v += c;

    Params prm;
    prm.ar = {0.3};
    prm.ma = {0.2};
    prm.gamma = {0.7};
    prm.intercept = 0.4;
    prm.sigma2 = 1.1;
    Params adj = prm;
    adj.intercept -= c * prm.gamma[0];
    const Orders o = orders_of(1, 1);
    CHECK(kalman_loglik(o, prm, series(y), {series(x)}) ==
          Approx(kalman_loglik(o, adj, series(y), {series(shifted)})).epsilon(1e-12));

    // with differencing the constant vanishes on its own
    const Orders d = orders_of(1, 1, 0, 0, 1, 0);
    CHECK(kalman_loglik(d, prm, series(y), {series(x)}) ==
          Approx(kalman_loglik(d, prm, series(y), {series(shifted)})).epsilon(1e-10));
}

TEST_CASE("fit recovers AR(1) with an exogenous effect", "[sarimax][fit]") {
    const std::size_t n = 2000;
    Params truth;
    truth.ar = {0.7};
    const auto u = simulate_arma(reduced(truth, 12), 1.0, n, 77);
    const auto x = gaussian(n, 2.0, 78);
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) y[t] = 0.5 * x[t] + u[t];
    const Orders o = orders_of(1, 0);
    const Model m = fit(series(y), {series(x)}, o);
    CHECK(std::fabs(m.params.ar[0] - 0.7) < 0.05);
    CHECK(std::fabs(m.gamma_raw[0] - 0.5) < 0.05);
    CHECK(m.gamma_raw[0] == Approx(m.params.gamma[0] / m.exog_scale[0]));
    CHECK(m.aic == Approx(2.0 * (1 + 1 + 1 + 1) - 2.0 * m.loglik));

    // the stored likelihood is the raw-scale likelihood at the fitted values
    Params raw = m.params;
    raw.gamma = m.gamma_raw;
    raw.intercept = m.intercept_raw;
    CHECK(kalman_loglik(o, raw, series(y), {series(x)}) == Approx(m.loglik).epsilon(1e-9));

    // and is no worse than a plain regression start
    Params start = raw;
    start.ar = {0.1};
    CHECK(m.loglik >= kalman_loglik(o, start, series(y), {series(x)}));
}

TEST_CASE("irrelevant regressor is rarely significant", "[sarimax][fit]") {
    int covered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto y = gaussian(300, 1.0, 1000 + seed);
        const auto x = gaussian(300, 1.0, 2000 + seed);
        const Model m = fit(series(y), {series(x)}, orders_of(1, 0));
        REQUIRE(m.gamma_se_raw.size() == 1);
        if (std::fabs(m.gamma_raw[0]) < 2.0 * m.gamma_se_raw[0]) ++covered;
    }
    CHECK(covered >= 18);
}

TEST_CASE("fit without exogenous columns", "[sarimax][fit]") {
    Params truth;
    truth.ar = {0.5};
    truth.sar = {0.4};
    const auto y = simulate_arma(reduced(truth, 12), 1.0, 240, 6);
    const Model m = fit(series(y), {}, Orders{});
    CHECK(m.params.gamma.empty());
    CHECK(std::isfinite(m.loglik));
    CHECK(m.n_obs == 240);
}

TEST_CASE("fit errors", "[sarimax][fit]") {
    const auto y = gaussian(120, 1.0, 1);
    const auto x = gaussian(120, 1.0, 2);
    std::vector<double> twice(x);
    for (auto& v : twice) v = 2.0 * v + 1.0;
    try {
        FitOptions named;
        named.exog_names = {"tasmax", "tasmax_copy"};
        (void)fit(series(y), {series(x), series(twice)}, orders_of(1, 0), named);
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::fit);
        CHECK(std::string(e.what()).find("tasmax") != std::string::npos);
        CHECK(std::string(e.what()).find("tasmax_copy") != std::string::npos);
    }
    try {
        (void)fit(series(gaussian(30, 1, 1)), {}, orders_of(1, 0));
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::insufficient_data);
    }
    try {
        (void)fit(series(y), {MonthlySeries({1990, 2}, x, "x")}, orders_of(1, 0));
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::argument);
    }
}

TEST_CASE("forecasting closed forms", "[sarimax][forecast]") {
    SECTION("deterministic regression") {
        const auto x = gaussian(50, 1.0, 3);
        std::vector<double> y(50);
        for (std::size_t t = 0; t < 50; ++t) y[t] = 1.5 * x[t];
        Params prm;
        prm.gamma = {1.5};
        prm.sigma2 = 0.0;
        const Model m = make_model(orders_of(0, 0), prm, series(y), {series(x)});
        const auto xf = gaussian(6, 1.0, 4);
        const auto fc = forecast(m, {MonthlySeries(kStart.plus(50), xf, "x")}, 6);
        for (std::size_t h = 0; h < 6; ++h) {
            CHECK(fc.mean[h] == Approx(1.5 * xf[h]).margin(1e-14));
            CHECK(fc.se[h] == 0.0);
        }
        CHECK(fc.mean.start() == kStart.plus(50));
    }
    SECTION("pure AR(1)") {
        Params prm;
        prm.ar = {0.8};
        const auto y = simulate_arma(reduced(prm, 12), 1.0, 100, 2);
        const Model m = make_model(orders_of(1, 0), prm, series(y), {});
        const auto fc = forecast(m, {}, 12);
        for (int h = 1; h <= 12; ++h) {
            CHECK(fc.mean[static_cast<std::size_t>(h - 1)] == Approx(std::pow(0.8, h) * y.back()).margin(1e-12));
        }
    }
    SECTION("standard errors follow the psi weights") {
        Params prm;
        prm.ar = {0.5, -0.2};
        prm.ma = {0.3};
        prm.sar = {0.4};
        prm.sma = {0.25};
        prm.sigma2 = 0.6;
        const Orders o = orders_of(2, 1, 1, 1);
        const auto r = reduced(prm, 12);
        const auto y = simulate_arma(r, std::sqrt(prm.sigma2), 200, 12);
        const Model m = make_model(o, prm, series(y), {});
        const auto fc = forecast(m, {}, 40);
        const auto psi = oracle::psi_weights(r.phi, r.theta, 40);
        double acc = 0.0;
        for (std::size_t h = 0; h < 40; ++h) {
            acc += psi[h] * psi[h];
            CHECK(std::fabs(fc.se[h] - std::sqrt(prm.sigma2 * acc)) < 1e-8);
            if (h > 0) CHECK(fc.se[h] >= fc.se[h - 1]);
        }
    }
    SECTION("integrated series") {
        Params prm;
        prm.ar = {0.6};
        prm.sigma2 = 2.0;
        const Orders o = orders_of(1, 0, 0, 0, 1, 0);
        std::vector<double> y{10.0};
        const auto w = simulate_arma(reduced(prm, 12), std::sqrt(2.0), 150, 19);
        for (double v : w) y.push_back(y.back() + v);
        const Model m = make_model(o, prm, series(y), {});
        const auto fc = forecast(m, {}, 3);
        const double d_last = y[y.size() - 1] - y[y.size() - 2];
        CHECK(fc.mean[0] == Approx(y.back() + 0.6 * d_last).epsilon(1e-12));
        CHECK(fc.mean[1] == Approx(fc.mean[0] + 0.36 * d_last).epsilon(1e-12));
        // level error after two steps: e2 + (1 + a) e1
        CHECK(fc.se[0] == Approx(std::sqrt(2.0)).epsilon(1e-10));
        CHECK(fc.se[1] == Approx(std::sqrt(2.0 * (1.0 + 1.6 * 1.6))).epsilon(1e-10));

        Params rw;
        rw.sigma2 = 1.0;
        const Model walk = make_model(orders_of(0, 0, 0, 0, 1, 0), rw, series(y), {});
        const auto fw = forecast(walk, {}, 5);
        for (std::size_t h = 0; h < 5; ++h) {
            CHECK(fw.mean[h] == Approx(y.back()));
            CHECK(fw.se[h] == Approx(std::sqrt(static_cast<double>(h + 1))).epsilon(1e-12));
        }
    }
    SECTION("argument errors") {
        const Model m = make_model(orders_of(1, 0), Params{{0.5}, {}, {}, {}, {0.2}, 0.0, 1.0}, series(gaussian(30, 1, 1)),
                                   {series(gaussian(30, 1, 2))});
        CHECK_THROWS_AS(forecast(m, {MonthlySeries(kStart.plus(30), gaussian(5, 1, 3), "x")}, 0), Error);
        CHECK_THROWS_AS(forecast(m, {MonthlySeries(kStart.plus(30), gaussian(5, 1, 3), "x")}, 6), Error);
        CHECK_THROWS_AS(forecast(m, {}, 3), Error);
        CHECK_NOTHROW(forecast(m, {MonthlySeries(kStart.plus(30), gaussian(5, 1, 3), "x")}, 5));
    }
}

TEST_CASE("in-sample predictions", "[sarimax][forecast]") {
    Params prm;
    prm.ar = {0.5};
    const auto w = simulate_arma(reduced(prm, 12), 1.0, 60, 1);
    const Model m = make_model(orders_of(1, 0, 0, 0, 0, 1), prm, series(w), {});
    const auto p = predict_in_sample(m, Phase::validation);
    CHECK(p.phase == Phase::validation);
    for (std::size_t t = 0; t < 12; ++t) CHECK(std::isnan(p.mean[t]));
    for (std::size_t t = 12; t < 60; ++t) CHECK(std::isfinite(p.mean[t]));

    const Model flat = make_model(orders_of(1, 0), prm, series(w), {});
    const auto q = predict_in_sample(flat);
    for (std::size_t t = 30; t < 60; ++t) CHECK(q.mean[t] == Approx(0.5 * w[t - 1]).margin(1e-8));
}

TEST_CASE("prediction intervals", "[sarimax][interval]") {
    ForecastResult fc{series({5.0}), series({2.0}), Phase::forecast};
    const auto b = prediction_interval(fc);
    CHECK(b.lower[0] == 3.0);
    CHECK(b.upper[0] == 7.0);

    ForecastResult z{series({1.0, 2.0}), series({0.0, 0.0}), Phase::forecast};
    const auto bz = prediction_interval(z);
    CHECK(bz.lower.values() == bz.center.values());
    CHECK(bz.upper.values() == bz.center.values());

    ForecastResult u{series({0.0}), series({1.0}), Phase::forecast};
    const auto b2 = prediction_interval(u, 2.0);
    CHECK(b2.lower[0] == -2.0);
    CHECK(b2.upper[0] == 2.0);
    CHECK_THROWS_AS(prediction_interval(u, 0.0), Error);
}

TEST_CASE("one-step errors are uncorrelated for a correct model", "[sarimax][residuals]") {
    Params truth;
    truth.ar = {0.6};
    truth.ma = {-0.3};
    FitOptions quick;
    quick.standard_errors = false;
    int passed = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto y = simulate_arma(reduced(truth, 12), 1.0, 300, 3000 + seed);
        const Model m = fit(series(y), {}, orders_of(1, 1), quick);
        if (ljung_box(standardized_residuals(m), 12, 2).p_value > 0.01) ++passed;
    }
    CHECK(passed >= 18);
}

TEST_CASE("Ljung-Box against a chi-square tail", "[sarimax][residuals]") {
    const auto e = gaussian(500, 1.0, 44);
    const auto lb = ljung_box(e, 10);
    CHECK(lb.df == 10);
    CHECK(lb.p_value > 0.0);
    CHECK(lb.p_value < 1.0);
    // chi-square(2) survival is exp(-x/2)
    const auto lb2 = ljung_box(e, 4, 2);
    CHECK(lb2.p_value == Approx(std::exp(-0.5 * lb2.statistic)).epsilon(1e-12));
}

TEST_CASE("order selection", "[sarimax][select]") {
    SECTION("singleton grid") {
        OrderGrid g{{1, 1}, {0, 0}, {0, 0}, {1, 1}, {0, 0}, {0, 0}, 12};
        CHECK(select_orders(series(gaussian(120, 1, 5)), {}, g) == orders_of(1, 0, 1, 0));
    }
    SECTION("grid caps") {
        OrderGrid g;
        g.p = {0, 3};
        CHECK_THROWS_AS(select_orders(series(gaussian(120, 1, 5)), {}, g), Error);
    }
    SECTION("white noise") {
        int minimal = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            if (select_orders(series(gaussian(240, 1, 50 + seed)), {}, OrderGrid{}) == orders_of(0, 0)) ++minimal;
        }
        CHECK(minimal >= 3);
    }
    SECTION("simulation study") {
        Params truth;
        truth.ar = {0.6};
        truth.sar = {0.5};
        int hits = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            const auto y = simulate_arma(reduced(truth, 12), 1.0, 360, 4000 + seed);
            if (select_orders(series(y), {}, OrderGrid{}) == orders_of(1, 0, 1, 0)) ++hits;
        }
        CHECK(hits > 10);
    }
}
