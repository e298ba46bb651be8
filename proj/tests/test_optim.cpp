#include <catch2/catch_amalgamated.hpp>

#include "agrivol/egarch.hpp"
#include "agrivol/optim.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace agrivol;
using namespace agrivol::optim;
using Catch::Approx;

namespace {

double rosenbrock(const Vector& v) {
    const double a = 1.0 - v[0];
    const double b = v[1] - v[0] * v[0];
    return a * a + 100.0 * b * b;
}

}  // namespace

TEST_CASE("simplex on simple bowls", "[optim][simplex]") {
    auto f1 = [](const Vector& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
    auto r1 = minimize_simplex(f1, {0.0}, {1e-14, 5000, 2, 0.05, 0.0});
    CHECK(r1.converged);
    CHECK(r1.termination == Termination::converged);
    CHECK(std::fabs(r1.x[0] - 3.0) < 1e-6);

    auto f2 = [](const Vector& x) { return x[0] * x[0] + x[1] * x[1]; };
    auto r2 = minimize_simplex(f2, {1.0, 1.0}, {1e-14, 5000, 2, 0.05, 0.0});
    CHECK(std::fabs(r2.x[0]) < 1e-6);
    CHECK(std::fabs(r2.x[1]) < 1e-6);
    CHECK(r2.f == f2(r2.x));
}

TEST_CASE("simplex reaches the Rosenbrock minimum", "[optim][simplex]") {
    auto r = minimize_simplex(rosenbrock, {-1.2, 1.0}, {1e-16, 20000, 3, 0.05, 0.0});
    CHECK(r.f < 1e-8);
    CHECK(rosenbrock(r.x) == r.f);
    CHECK(std::fabs(r.x[0] - 1.0) < 1e-3);
    CHECK(std::fabs(r.x[1] - 1.0) < 1e-3);
}

TEST_CASE("simplex iteration limit", "[optim][simplex]") {
    auto r = minimize_simplex(rosenbrock, {-1.2, 1.0}, {1e-16, 10, 0, 0.05, 0.0});
    CHECK_FALSE(r.converged);
    CHECK(r.termination == Termination::iteration_limit);
    CHECK(std::string(to_string(r.termination)) == "iteration-limit");
    CHECK(r.iterations <= 10);
    CHECK(r.f <= rosenbrock({-1.2, 1.0}));
}

TEST_CASE("numeric gradient", "[optim][gradient]") {
    auto sq = [](const Vector& x) { return x[0] * x[0]; };
    CHECK(std::fabs(numeric_gradient(sq, {2.0}, 1e-5)[0] - 4.0) < 1e-6);

    auto c = [](const Vector&) { return 7.0; };
    for (double g : numeric_gradient(c, {1.0, -2.0, 3.0}, 1e-4)) CHECK(g == 0.0);

    auto xy = [](const Vector& x) { return x[0] * x[1]; };
    auto g = numeric_gradient(xy, {2.0, 3.0}, 1e-5);
    CHECK(std::fabs(g[0] - 3.0) < 1e-6);
    CHECK(std::fabs(g[1] - 2.0) < 1e-6);

    SECTION("quadratic form matches the analytic gradient") {
        // f = x'Ax, grad = (A + A')x
        const double A[3][3] = {{3, 1, 0}, {0.5, 2, -1}, {0, 0.2, 4}};
        auto quad = [&](const Vector& x) {
            double s = 0.0;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) s += x[i] * A[i][j] * x[j];
            return s;
        };
        const Vector x{0.7, -1.3, 2.1};
        const auto ng = numeric_gradient(quad, x);
        for (int i = 0; i < 3; ++i) {
            double exact = 0.0;
            for (int j = 0; j < 3; ++j) exact += (A[i][j] + A[j][i]) * x[j];
            CHECK(std::fabs(ng[i] - exact) < 1e-7);
        }
    }

    SECTION("non-finite objective names the component") {
        auto bad = [](const Vector& x) { return x[1] > 1.0 ? std::numeric_limits<double>::quiet_NaN() : x[0]; };
        try {
            (void)numeric_gradient(bad, {0.0, 1.0}, 1e-3);
            FAIL();
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::numeric);
            CHECK(std::string(e.what()).find("component 1") != std::string::npos);
        }
    }
}

TEST_CASE("BFGS", "[optim][bfgs]") {
    SECTION("positive definite quadratic") {
        auto quad = [](const Vector& x) { return 2 * x[0] * x[0] + x[0] * x[1] + 3 * x[1] * x[1] + 0.5 * x[2] * x[2]; };
        auto r = minimize_bfgs(quad, {1.0, -2.0, 0.5}, {1e-10, 500});
        for (double v : r.x) CHECK(std::fabs(v) < 1e-8);
        CHECK(r.converged);
    }
    SECTION("non-smooth absolute value") {
        auto absf = [](const Vector& x) { return std::fabs(x[0]); };
        auto r = minimize_bfgs(absf, {1.3});
        CHECK(r.f < 1e-4);
        CHECK(r.f <= 1.3);
    }
    SECTION("never worse than the start") {
        auto r = minimize_bfgs(rosenbrock, {-1.2, 1.0}, {1e-6, 30});
        CHECK(r.f <= rosenbrock({-1.2, 1.0}));
        CHECK(r.f == rosenbrock(r.x));
    }
}

TEST_CASE("BFGS and simplex agree on an EGARCH likelihood", "[optim][bfgs][egarch]") {
    const egarch::Orders o{1, 1, 1};
    const egarch::Params truth{-0.1, {0.2}, {-0.05}, {0.9}};
    const auto r = egarch::simulate(truth, o, 2000, 31);
    const double init = std::log(sample_variance(r.values()));
    auto f = [&](const Vector& x) {
        egarch::Params p{x[0], {x[1]}, {x[2]}, {x[3]}};
        if (p.persistence() >= 1.0) return std::numeric_limits<double>::infinity();
        try {
            return -egarch::loglik(p, o, r, init) / static_cast<double>(r.size());
        } catch (const Error&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const Vector x0{0.2 * init, 0.1, 0.0, 0.8};
    auto nm = minimize_simplex(f, x0, {1e-14, 20000, 4, 0.05, 0.01});
    auto qn = minimize_bfgs(f, x0, {1e-8, 2000});
    REQUIRE(std::isfinite(nm.f));
    REQUIRE(std::isfinite(qn.f));
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::fabs(nm.x[i] - qn.x[i]) < 1e-4);
    CHECK(nm.f <= f(x0));
    CHECK(qn.f <= f(x0));
}

TEST_CASE("bounded reparameterization", "[optim][bounds]") {
    const Bound unit{-1.0, 1.0};
    CHECK(to_bounded(0.0, unit) == Approx(0.0).margin(1e-15));
    CHECK(to_bounded(1e6, unit) < 1.0);
    CHECK(to_bounded(1e6, unit) > 0.999);
    CHECK(to_bounded(-1e6, unit) > -1.0);
    CHECK(to_bounded(50.0, Bound::positive()) > 0.0);
    CHECK(to_bounded(-800.0, Bound::positive()) > 0.0);
    CHECK(to_bounded(4.5, Bound::free()) == 4.5);

    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-6.0, 6.0);
    const std::vector<Bound> bounds{unit, Bound::positive(), Bound::free(), {2.0, 5.0}};
    for (int rep = 0; rep < 200; ++rep) {
        Vector x{u(rng), u(rng), u(rng), u(rng)};
        const auto th = bounded_reparam(x, bounds);
        CHECK(th[0] > -1.0);
        CHECK(th[0] < 1.0);
        CHECK(th[1] > 0.0);
        CHECK(th[3] > 2.0);
        CHECK(th[3] < 5.0);
        const auto back = bounded_inverse(th, bounds);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::fabs(back[i] - x[i]) < 1e-10);
    }
    CHECK_THROWS_AS(bounded_reparam({0.0}, {Bound{1.0, 1.0}}), Error);
}

TEST_CASE("minimizers are deterministic", "[optim]") {
    auto a = minimize(rosenbrock, {-1.2, 1.0});
    auto b = minimize(rosenbrock, {-1.2, 1.0});
    CHECK(a.x == b.x);
    CHECK(a.f == b.f);
    CHECK(a.iterations == b.iterations);
}
