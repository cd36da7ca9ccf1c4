#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "dyntomo/common.hpp"
#include "dyntomo/geometry.hpp"
#include "dyntomo/phantom.hpp"
#include "dyntomo/schedule.hpp"

using namespace dyntomo;

TEST_CASE("default pinball sequence shape and range") {
    const auto spec = PhantomSpec::pinball();
    const auto seq = render_sequence(spec);
    CHECK(seq.n_t == 30);
    CHECK(seq.n == 42);
    const auto [lo, hi] = std::minmax_element(seq.data.begin(), seq.data.end());
    CHECK(*lo >= 0.0);
    CHECK(*hi <= std::max(spec.ball_intensity, spec.ellipse_intensity));
}

TEST_CASE("invisible ball") {
    auto spec = PhantomSpec::pinball();
    spec.ball_intensity = spec.ellipse_intensity;
    const auto f0 = render_pinball(spec, 0);
    for (std::size_t t = 1; t < spec.n_t; t += 7) {
        const auto ft = render_pinball(spec, t);
        for (std::size_t i = 0; i < ft.size(); ++i)
            CHECK(std::abs(ft[i] - f0[i]) <= spec.ellipse_intensity / (spec.supersample * spec.supersample));
    }
}

TEST_CASE("ball mass matches the disc area") {
    const auto spec = PhantomSpec::pinball();
    const auto bg = render_ellipse_only(spec);
    const double expect = (spec.ball_intensity - spec.ellipse_intensity) * kPi * spec.ball_radius * spec.ball_radius;
    for (std::size_t t = 0; t < spec.n_t; ++t) {
        const auto f = render_pinball(spec, t);
        double mass = 0;
        for (std::size_t i = 0; i < f.size(); ++i) mass += f[i] - bg[i];
        CHECK(std::abs(mass - expect) <= 0.01 * expect);
    }
}

TEST_CASE("ball leaving the ellipse is rejected") {
    auto spec = PhantomSpec::pinball();
    spec.ball_end_x = 15.0;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    CHECK_THROWS_AS(render_pinball(spec, 0), std::invalid_argument);
    auto neg = PhantomSpec::pinball();
    neg.ball_intensity = -1;
    CHECK_THROWS_AS(neg.validate(), std::invalid_argument);
}

TEST_CASE("noise-free simulation at supersample 1 is the discrete forward model") {
    auto spec = PhantomSpec::pinball(16, 4);
    spec.supersample = 1;
    const GridSpec g{16, 1.0};
    const auto det = DetectorSpec::covering(g);
    const auto sched = schedule_small_increments(4, 0.3, 2);
    const auto m = simulate_sinogram(spec, sched, g, det, 0.0, 1);
    for (std::size_t t = 0; t < 4; ++t) {
        const auto b = build_radon_block(g, det, sched.per_step[t]);
        const auto f = render_pinball(spec, t);
        std::vector<double> y(b.rows());
        b.multiply(f, y);
        CHECK(m.steps[t].values == y);
        CHECK(m.steps[t].angles == sched.per_step[t]);
    }
}

TEST_CASE("noise standard deviation") {
    auto spec = PhantomSpec::pinball();
    spec.supersample = 1;
    const GridSpec g{42, 1.0};
    const auto det = DetectorSpec::covering(g);
    const auto sched = schedule_small_increments(30, kPi / 30, 10);
    const auto clean = simulate_clean_highres(spec, sched, g, det);
    const auto noisy = simulate_sinogram(spec, sched, g, det, 0.01, 4242);
    const auto c = clean.flatten(), y = noisy.flatten();
    REQUIRE(c.size() == y.size());
    REQUIRE(c.size() >= 10000);
    double mx = 0, s = 0, s2 = 0;
    for (double x : c) mx = std::max(mx, std::abs(x));
    for (std::size_t i = 0; i < c.size(); ++i) {
        const double d = y[i] - c[i];
        s += d;
        s2 += d * d;
    }
    const double nn = static_cast<double>(c.size());
    const double sd = std::sqrt(s2 / nn - (s / nn) * (s / nn));
    CHECK(std::abs(sd - 0.01 * mx) <= 0.05 * 0.01 * mx);
    CHECK(noisy.noise_level == 0.01);
    CHECK(noisy.seed == 4242);
}

TEST_CASE("simulation is deterministic in the seed") {
    const auto spec = PhantomSpec::pinball(21, 5);
    const GridSpec g{21, 1.0};
    const auto det = DetectorSpec::covering(g);
    const auto sched = schedule_randomized(5, 1);
    const auto a = simulate_sinogram(spec, sched, g, det, 0.01, 9);
    const auto b = simulate_sinogram(spec, sched, g, det, 0.01, 9);
    const auto c = simulate_sinogram(spec, sched, g, det, 0.01, 10);
    CHECK(a == b);
    CHECK(a.flatten() != c.flatten());
}

TEST_CASE("supersampled data differs from the coarse discrete model") {
    const auto spec = PhantomSpec::pinball(21, 3);
    const GridSpec g{21, 1.0};
    const auto det = DetectorSpec::covering(g);
    const auto sched = schedule_small_increments(3, 0.4, 3);
    const auto m = simulate_sinogram(spec, sched, g, det, 0.0, 1);
    const auto op = build_operator(g, det, sched.per_step);
    const auto coarse = forward(op, render_sequence(spec));
    const auto a = m.flatten(), b = coarse.flatten();
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
    CHECK(diff > 0.0);
}

TEST_CASE("schedule length mismatch names both lengths") {
    const auto spec = PhantomSpec::pinball(21, 5);
    const GridSpec g{21, 1.0};
    const auto sched = schedule_randomized(4, 1);
    try {
        simulate_sinogram(spec, sched, g, DetectorSpec::covering(g), 0.01, 1);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find('4') != std::string::npos);
        CHECK(msg.find('5') != std::string::npos);
    }
    CHECK_THROWS_AS(simulate_sinogram(spec, schedule_randomized(5, 1), g, DetectorSpec::covering(g), -0.1, 1),
                    std::invalid_argument);
}
