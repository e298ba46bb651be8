#include <catch2/catch_amalgamated.hpp>

#include "agrivol/egarch.hpp"
#include "oracles.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>

using namespace agrivol;
using namespace agrivol::egarch;
using Catch::Approx;

namespace {

MonthlySeries returns_of(std::vector<double> v) { return {{2001, 11}, std::move(v), "dimensionless"}; }

MonthlySeries white_noise(std::size_t n, double sd, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> v(n);
    for (auto& x : v) x = z(rng);
    return returns_of(std::move(v));
}

const Orders k111{1, 1, 1};

}  // namespace

TEST_CASE("filter with degenerate parameters", "[egarch][filter]") {
    const auto r = returns_of({0.01, -0.03, 0.02, 0.0, 0.05});
    auto s1 = filter(Params::zeros(k111), k111, r, 0.0);
    for (double v : s1.values()) CHECK(v == Approx(1.0).margin(1e-15));
    Params p = Params::zeros(k111);
    p.nu = std::log(4.0);
    auto s2 = filter(p, k111, r, -3.0);
    for (double v : s2.values()) CHECK(v == Approx(2.0).margin(1e-14));
    CHECK(s2.start() == r.start());
    CHECK(s2.size() == r.size());
}

TEST_CASE("filter matches a hand recursion", "[egarch][filter]") {
    const std::vector<double> x{0.01, -0.02, 0.03};
    const double mean = (0.01 - 0.02 + 0.03) / 3.0;
    const double var = ((0.01 - mean) * (0.01 - mean) + (-0.02 - mean) * (-0.02 - mean) +
                        (0.03 - mean) * (0.03 - mean)) / 2.0;
    const double init = std::log(var);
    const double nu = 0.1, kap = 0.2, del = -0.05, phi = 0.9;
    const double c = std::sqrt(2.0 / std::numbers::pi);

    // t = 0: pre-sample shock 0, pre-sample log-variance init
    const double l0 = nu + kap * (0.0 - c) + del * 0.0 + phi * init;
    const double z0 = x[0] / std::exp(l0 / 2);
    const double l1 = nu + kap * (std::fabs(z0) - c) + del * z0 + phi * l0;
    const double z1 = x[1] / std::exp(l1 / 2);
    const double l2 = nu + kap * (std::fabs(z1) - c) + del * z1 + phi * l1;

    const auto sig = filter({nu, {kap}, {del}, {phi}}, k111, returns_of(x), init);
    CHECK(std::fabs(sig[0] - std::exp(l0 / 2)) < 1e-12);
    CHECK(std::fabs(sig[1] - std::exp(l1 / 2)) < 1e-12);
    CHECK(std::fabs(sig[2] - std::exp(l2 / 2)) < 1e-12);
}

TEST_CASE("filter overflow is a numeric error", "[egarch][filter]") {
    Params p{800.0, {0.0}, {0.0}, {0.0}};
    try {
        (void)filter(p, k111, returns_of({0.1, 0.2}), 0.0);
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
        CHECK(std::string(e.what()).find("t=0") != std::string::npos);
    }
}

TEST_CASE("log-likelihood", "[egarch][loglik]") {
    const std::size_t n = 17;
    const auto zeros = returns_of(std::vector<double>(n, 0.0));
    CHECK(loglik(Params::zeros(k111), k111, zeros, 0.0) ==
          Approx(-0.5 * static_cast<double>(n) * std::log(2 * std::numbers::pi)).epsilon(1e-14));

    const double v = 0.37;
    Params p = Params::zeros(k111);
    p.nu = std::log(v);
    CHECK(loglik(p, k111, returns_of({0.0}), 0.0) ==
          Approx(-0.5 * (std::log(2 * std::numbers::pi) + std::log(v))).epsilon(1e-14));

    SECTION("sum of pointwise densities") {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int rep = 0; rep < 10; ++rep) {
            const Orders o{2, 1, 2};
            Params q{0.3 * u(rng), {0.2 * u(rng), 0.1 * u(rng)}, {0.1 * u(rng)}, {0.4 * u(rng), 0.3 * u(rng)}};
            const auto r = white_noise(60, 0.05, 100 + static_cast<std::uint64_t>(rep));
            const double init = -5.0 + u(rng);
            const auto sig = filter(q, o, r, init);
            double dens = 0.0;
            for (std::size_t t = 0; t < r.size(); ++t) dens += oracle::normal_logdensity(r[t], sig[t]);
            CHECK(std::fabs(loglik(q, o, r, init) - dens) < 1e-10);
        }
    }
}

TEST_CASE("simulation", "[egarch][simulate]") {
    SECTION("zero parameters give standard normal draws") {
        const auto r = simulate(Params::zeros(k111), k111, 40000, 5);
        CHECK(std::fabs(sample_variance(r.values()) - 1.0) < 0.03);
    }
    SECTION("deterministic for a fixed seed") {
        const Params p{-0.1, {0.2}, {-0.05}, {0.9}};
        CHECK(simulate(p, k111, 500, 42) == simulate(p, k111, 500, 42));
        CHECK_FALSE(simulate(p, k111, 500, 42) == simulate(p, k111, 500, 43));
    }
    SECTION("long-run log-variance mean") {
        const Params p{-0.1, {0.2}, {-0.05}, {0.9}};
        const auto r = simulate(p, k111, 100000, 2024);
        const auto sig = filter(p, k111, r, p.mean_logvar());
        double m = 0.0;
        for (double s : sig.values()) m += 2.0 * std::log(s);
        m /= static_cast<double>(sig.size());
        CHECK(p.mean_logvar() == Approx(-1.0));
        CHECK(std::fabs(m - p.mean_logvar()) < 0.05 * std::fabs(p.mean_logvar()));
    }
    SECTION("explosive parameters") {
        try {
            (void)simulate({0.0, {0.1}, {0.0}, {1.0}}, k111, 10, 1);
            FAIL();
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::argument);
        }
    }
}

TEST_CASE("asymmetry responds to the sign of shocks", "[egarch][filter]") {
    const auto r = white_noise(50, 0.1, 77);
    std::vector<double> flipped(r.values());
    for (auto& v : flipped) v = -v;
    const auto rf = returns_of(flipped);
    const Params asym{-0.2, {0.2}, {-0.1}, {0.9}};
    const Params sym{-0.2, {0.2}, {0.0}, {0.9}};
    CHECK_FALSE(filter(asym, k111, r, -4.0).values() == filter(asym, k111, rf, -4.0).values());
    CHECK(filter(sym, k111, r, -4.0).values() == filter(sym, k111, rf, -4.0).values());
}

TEST_CASE("fit recovers simulated parameters", "[egarch][fit]") {
    const Params truth{-0.1, {0.2}, {-0.05}, {0.9}};
    const auto r = simulate(truth, k111, 5000, 12345);
    const Fit f = fit(r, k111);
    CHECK(std::fabs(f.params.nu - truth.nu) < 0.1);
    CHECK(std::fabs(f.params.kappa[0] - truth.kappa[0]) < 0.1);
    CHECK(std::fabs(f.params.delta[0] - truth.delta[0]) < 0.1);
    CHECK(std::fabs(f.params.phi[0] - truth.phi[0]) < 0.1);

    CHECK(f.loglik == loglik(f.params, k111, r, f.init_logvar));
    CHECK(f.aic == Approx(2.0 * 4 - 2.0 * f.loglik));
    CHECK(f.init_logvar == Approx(std::log(sample_variance(r.values()))));
    CHECK(f.n_obs == r.size());
    CHECK(f.sigma.start() == r.start());
    for (double s : f.sigma.values()) CHECK(s > 0.0);

    Params start{(1.0 - 0.8) * f.init_logvar, {0.1}, {0.0}, {0.8}};
    CHECK(f.loglik >= loglik(start, k111, r, f.init_logvar));
}

TEST_CASE("fit on white noise", "[egarch][fit]") {
    const auto r = white_noise(600, 0.05, 9);
    const Fit f = fit(r, k111);
    double sbar = 0.0;
    for (double s : f.sigma.values()) sbar += s;
    sbar /= static_cast<double>(f.sigma.size());
    const double sd = std::sqrt(sample_variance(r.values()));
    CHECK(std::fabs(sbar - sd) < 0.1 * sd);
    CHECK(std::fabs(f.params.kappa[0]) < 0.2);
}

TEST_CASE("fit errors", "[egarch][fit]") {
    try {
        (void)fit(returns_of(std::vector<double>(40, 0.02)), k111);
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::fit);
    }
    try {
        (void)fit(white_noise(20, 0.1, 1), k111);
        FAIL();
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::insufficient_data);
    }
    CHECK_THROWS_AS(fit(white_noise(50, 0.1, 1), Orders{0, 0, 0}), Error);
    CHECK_THROWS_AS(fit(white_noise(50, 0.1, 1), Orders{13, 1, 1}), Error);
}

TEST_CASE("order selection", "[egarch][select]") {
    SECTION("singleton grid") { CHECK(select_orders(white_noise(100, 0.1, 3), 1) == k111); }
    SECTION("invalid max order") { CHECK_THROWS_AS(select_orders(white_noise(100, 0.1, 3), 4), Error); }
    SECTION("white noise favours the smallest model") {
        std::map<int, int> votes;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const Orders o = select_orders(white_noise(400, 0.05, seed), 2);
            ++votes[o.p * 100 + o.o * 10 + o.q];
        }
        for (const auto& [code, count] : votes) {
            if (code != 111) CHECK(count < votes[111]);
        }
    }
    SECTION("simulation study") {
        const Params truth{-0.1, {0.2}, {-0.05}, {0.9}};
        int hits = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            if (select_orders(simulate(truth, k111, 400, 500 + seed), 2) == k111) ++hits;
        }
        CHECK(hits > 10);
    }
}
