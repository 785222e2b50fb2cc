#include <doctest.h>

#include <bit>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vcl/checks.hpp"
#include "vcl/dynamics.hpp"
#include "vcl/errors.hpp"
#include "vcl/presets.hpp"
#include "vcl/spectral.hpp"

using namespace vcl;
using namespace vcl::dynamics;

namespace {

VectorField linear(double lambda) {
    return [lambda](std::span<const double> x, double) {
        State out(x.begin(), x.end());
        for (auto& v : out) v *= lambda;
        return out;
    };
}

}  // namespace

TEST_CASE("integrate examples") {
    const State x0{1.0};
    const auto e = integrate(linear(1.0), x0, 0.0, 1.0, 2, Method::euler);
    CHECK(e.final_state()[0] == doctest::Approx(2.25).epsilon(1e-15));
    CHECK(e.trajectory.size() == 3);
    CHECK(e.h == 0.5);

    const double h = 0.5, factor = 1 + h + h * h / 2 + h * h * h / 6 + h * h * h * h / 24;
    const auto r = integrate(linear(1.0), x0, 0.0, 1.0, 2, Method::rk4);
    CHECK(r.final_state()[0] == doctest::Approx(factor * factor).epsilon(1e-14));
    CHECK(r.final_state()[0] == doctest::Approx(2.71735).epsilon(1e-5));
    CHECK(std::abs(r.final_state()[0] - std::exp(1.0)) < 1e-3);

    const State x2{0.3, -2.0};
    for (auto m : {Method::euler, Method::rk4}) {
        const auto z = integrate([](std::span<const double> x, double) { return State(x.size(), 0.0); }, x2, 0.0, 3.0,
                                 7, m);
        CHECK(z.final_state() == x2);
    }
}

TEST_CASE("integrate errors") {
    const State x0{1.0};
    CHECK_THROWS_AS(integrate(linear(1.0), x0, 0.0, 1.0, 0, Method::euler), std::invalid_argument);
    CHECK_THROWS_AS(integrate(linear(1.0), x0, 1.0, 1.0, 3, Method::euler), std::invalid_argument);
    const State big{1e200};
    const VectorField square = [](std::span<const double> x, double) { return State{x[0] * x[0]}; };
    try {
        (void)integrate(square, big, 0.0, 1.0, 4, Method::euler);
        FAIL("expected NumericError");
    } catch (const NumericError& err) {
        CHECK(err.step() == 1);
    }
}

TEST_CASE("integration is bitwise deterministic") {
    const State x0{0.7, -0.1, 2.0};
    const VectorField f = [](std::span<const double> x, double t) {
        return State{std::sin(x[1]) + t, x[0] * x[2], -0.3 * x[2]};
    };
    const auto a = integrate(f, x0, 0.0, 2.0, 50, Method::rk4), b = integrate(f, x0, 0.0, 2.0, 50, Method::rk4);
    for (std::size_t k = 0; k < a.trajectory.size(); ++k)
        for (std::size_t i = 0; i < 3; ++i)
            REQUIRE(std::bit_cast<std::uint64_t>(a.trajectory[k][i]) ==
                    std::bit_cast<std::uint64_t>(b.trajectory[k][i]));
}

TEST_CASE("euler_error_bound examples") {
    CHECK(euler_error_bound(0.1, 1.0, 1.0) == doctest::Approx(0.171828).epsilon(1e-6));
    CHECK(euler_error_bound(0.0, 2.0, 1.0) == 0.0);
    CHECK(euler_error_bound(0.3, 2.0, 0.0) == 0.0);
    CHECK_THROWS_AS(euler_error_bound(0.1, 0.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(euler_error_bound(-0.1, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("Euler bound on the linear test problem") {
    const auto cases = checks::euler_bound_suite();
    REQUIRE(cases.size() == 15);
    for (const auto& c : cases) {
        CAPTURE(c.lambda);
        CAPTURE(c.steps);
        CHECK(c.violations == 0);
        CHECK(c.max_error <= c.bound);
        CHECK(c.defect > 0.0);
    }

    // independent recomputation of one case
    const double lambda = 2.0;
    const std::size_t n = 16;
    const double h = 1.0 / n;
    double x = 1.0, err = 0.0, delta = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = k * h;
        delta = std::max(delta, std::abs((std::exp(lambda * (t + h)) - std::exp(lambda * t)) / h -
                                         lambda * std::exp(lambda * t)));
        x += h * lambda * x;
        err = std::max(err, std::abs(x - std::exp(lambda * (t + h))));
    }
    const State x0{1.0};
    const auto exact = [&](double t) { return State{std::exp(lambda * t)}; };
    CHECK(euler_defect(linear(lambda), exact, 0.0, 1.0, n) == doctest::Approx(delta).epsilon(1e-12));
    CHECK(err <= euler_error_bound(delta, lambda, 1.0));
}

TEST_CASE("RK4 is far more accurate than Euler at 16 steps") {
    const State x0{1.0};
    const double truth = std::exp(-1.0);
    const double eu = std::abs(integrate(linear(-1.0), x0, 0.0, 1.0, 16, Method::euler).final_state()[0] - truth);
    const double rk = std::abs(integrate(linear(-1.0), x0, 0.0, 1.0, 16, Method::rk4).final_state()[0] - truth);
    CHECK(rk / eu < 1e-2);
}

TEST_CASE("growth_bound examples") {
    const auto g = growth_bound(0.01, 2.0, 0.0, 4.0);
    CHECK(g.value == doctest::Approx(0.01 * std::exp(2.0)).epsilon(1e-14));
    CHECK(g.value == doctest::Approx(0.073891).epsilon(1e-5));
    CHECK(growth_bound(0.0, 2.0, 0.0, 4.0).value == 0.0);
    CHECK(growth_bound(0.01, 2.0, 0.5, 4.0).value > g.value);
    CHECK(growth_bound(0.01, 0.0, 0.0, 1.0).value >= 0.01);
    CHECK_THROWS_AS(growth_bound(-1.0, 0.0, 0.0, 1.0), std::invalid_argument);

    spectral::SpectraReport rep;
    rep.integral = 1.5;
    rep.steps = {{0, net::SublayerKind::embed, spectral::Mode::exact, 3.0, 0.0, 1},
                 {1, net::SublayerKind::attn, spectral::Mode::exact, 1.0, 0.0, 1},
                 {2, net::SublayerKind::mlp, spectral::Mode::exact, 0.5, 0.0, 1}};
    const auto r = growth_bound(0.02, rep, 0.1);
    CHECK(r.span == 2.0);
    CHECK(r.value == doctest::Approx(0.02 * std::exp(1.5 + 2.0 * 0.1 * 0.02)));
}

TEST_CASE("perturbation propagation") {
    auto p = net::build_model(presets::model_preset("ViT-toy"), 3);
    oracle::roughen(p, 3, 0.1);
    std::mt19937_64 rng(3);
    const auto img = oracle::random_image(3, 32, rng);

    const auto zero = propagate_perturbation(p, img, net::Image(3, 32));
    CHECK(zero.embed_distortion == 0.0);
    for (double d : zero.step_distortion) CHECK(d == 0.0);
    CHECK(zero.final_distortion == 0.0);

    auto frozen = p;
    for (auto& b : frozen.w.blocks) {
        b.wo.fill(0.0);
        b.bo.fill(0.0);
        b.fc2_w.fill(0.0);
        b.fc2_b.fill(0.0);
    }
    const auto delta = oracle::random_image(3, 32, rng);
    const auto still = propagate_perturbation(frozen, img, delta);
    REQUIRE(still.step_distortion.size() == 4);
    for (double d : still.step_distortion) CHECK(d == doctest::Approx(still.embed_distortion).epsilon(1e-12));

    CHECK_THROWS_AS(propagate_perturbation(p, img, net::Image(1, 32)), std::invalid_argument);
}

TEST_CASE("first-order growth bound holds for small pixel perturbations") {
    auto p = net::build_model(presets::model_preset("ViT-toy"), 4);
    oracle::roughen(p, 4, 0.1);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int t = 0; t < 5; ++t) {
        const auto img = oracle::random_image(3, 32, rng);
        const std::vector<spectral::LayerSpectra> ls{spectral::layer_spectra(p, img, spectral::Mode::exact)};
        const auto rep = spectral::aggregate_spectra(ls);
        net::Image delta(3, 32);
        for (auto& v : delta.pixels) v = n(rng);
        const double scale = 1e-6 / norm2(delta.pixels);
        for (auto& v : delta.pixels) v *= scale;
        const auto path = propagate_perturbation(p, img, delta);
        const auto bound = growth_bound(path.embed_distortion, rep, 0.0);
        CHECK(path.final_distortion <= 1.05 * bound.value);
    }

    const std::vector<net::Image> imgs{oracle::random_image(3, 32, rng), oracle::random_image(3, 32, rng)};
    const auto cases = checks::growth_bound_suite(p, imgs, 10, 1e-4, 0.05, 1);
    REQUIRE(cases.size() == 10);
    for (const auto& c : cases) {
        CHECK_FALSE(c.violated);
        CHECK(c.epsilon <= 1e-4);
        CHECK(c.distortion <= c.bound);
    }
}
