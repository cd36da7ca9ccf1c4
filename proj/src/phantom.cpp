#include "dyntomo/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dyntomo/common.hpp"

namespace dyntomo {

PhantomSpec PhantomSpec::pinball(std::size_t n, std::size_t n_t) {
    PhantomSpec s;
    const double k = static_cast<double>(n) / 42.0;
    s.n = n;
    s.n_t = n_t;
    s.ball_radius *= k;
    s.ball_start_x *= k;
    s.ball_end_x *= k;
    s.ellipse_semi_x *= k;
    s.ellipse_semi_y *= k;
    return s;
}

double PhantomSpec::ball_center_x(std::size_t t) const {
    if (n_t <= 1) return ball_start_x;
    const double f = static_cast<double>(t) / static_cast<double>(n_t - 1);
    return ball_start_x + f * (ball_end_x - ball_start_x);
}

namespace {

bool inside_ellipse(const PhantomSpec& s, double x, double y) {
    const double ex = (x - s.ellipse_center_x) / s.ellipse_semi_x;
    const double ey = (y - s.ellipse_center_y) / s.ellipse_semi_y;
    return ex * ex + ey * ey < 1.0;
}

bool ball_inside(const PhantomSpec& s, double cx, double cy) {
    constexpr int kSamples = 720;
    if (!inside_ellipse(s, cx, cy)) return false;
    for (int i = 0; i < kSamples; ++i) {
        const double a = 2.0 * kPi * i / kSamples;
        if (!inside_ellipse(s, cx + s.ball_radius * std::cos(a), cy + s.ball_radius * std::sin(a)))
            return false;
    }
    return true;
}

}  // namespace

void PhantomSpec::validate() const {
    require(n >= 1, "phantom: n must be >= 1");
    require(n_t >= 1, "phantom: n_t must be >= 1");
    require(supersample >= 1, "phantom: supersample must be >= 1");
    require(ball_radius >= 0 && std::isfinite(ball_radius), "phantom: ball_radius must be >= 0");
    require(ball_intensity >= 0 && ellipse_intensity >= 0, "phantom: intensities must be >= 0");
    require(ellipse_semi_x > 0 && ellipse_semi_y > 0, "phantom: ellipse semi-axes must be > 0");
    // The path is a segment and the ellipse is convex: checking both ends suffices.
    for (double x : {ball_start_x, ball_end_x})
        if (!ball_inside(*this, x, ball_y))
            throw std::invalid_argument("phantom: ball at x=" + std::to_string(x) +
                                        " leaves the ellipse interior");
}

std::vector<double> render_pinball_points(const PhantomSpec& spec, std::size_t t,
                                          std::size_t side, bool include_ball) {
    spec.validate();
    if (t >= spec.n_t)
        throw std::out_of_range("render_pinball: step " + std::to_string(t) + " >= n_t " +
                                std::to_string(spec.n_t));
    std::vector<double> img(side * side, 0.0);
    const double scale = static_cast<double>(spec.n) / static_cast<double>(side);
    const double half = 0.5 * static_cast<double>(spec.n);
    const double bx = spec.ball_center_x(t), by = spec.ball_y;
    const double r2 = spec.ball_radius * spec.ball_radius;
    for (std::size_t row = 0; row < side; ++row) {
        const double y = (static_cast<double>(row) + 0.5) * scale - half;
        for (std::size_t col = 0; col < side; ++col) {
            const double x = (static_cast<double>(col) + 0.5) * scale - half;
            double v = 0.0;
            if (inside_ellipse(spec, x, y)) v = spec.ellipse_intensity;
            if (include_ball) {
                const double dx = x - bx, dy = y - by;
                if (dx * dx + dy * dy < r2) v = spec.ball_intensity;
            }
            img[row * side + col] = v;
        }
    }
    return img;
}

namespace {

std::vector<double> block_average(const std::vector<double>& fine, std::size_t n, std::size_t s) {
    if (s == 1) return fine;
    const std::size_t side = n * s;
    std::vector<double> out(n * n, 0.0);
    const double w = 1.0 / static_cast<double>(s * s);
    for (std::size_t row = 0; row < side; ++row)
        for (std::size_t col = 0; col < side; ++col)
            out[(row / s) * n + col / s] += fine[row * side + col];
    for (auto& v : out) v *= w;
    return out;
}

}  // namespace

std::vector<double> render_pinball(const PhantomSpec& spec, std::size_t t) {
    return block_average(render_pinball_points(spec, t, spec.n * spec.supersample), spec.n,
                         spec.supersample);
}

std::vector<double> render_ellipse_only(const PhantomSpec& spec) {
    return block_average(render_pinball_points(spec, 0, spec.n * spec.supersample, false), spec.n,
                         spec.supersample);
}

ImageSequence render_sequence(const PhantomSpec& spec) {
    ImageSequence seq(spec.n_t, spec.n);
    for (std::size_t t = 0; t < spec.n_t; ++t) {
        const auto f = render_pinball(spec, t);
        std::copy(f.begin(), f.end(), seq.frame(t).begin());
    }
    return seq;
}

namespace {

void check_inputs(const PhantomSpec& spec, const AngleSchedule& schedule, const GridSpec& grid) {
    spec.validate();
    grid.validate();
    if (schedule.n_t() != spec.n_t)
        throw std::invalid_argument("simulate_sinogram: schedule has " +
                                    std::to_string(schedule.n_t()) + " steps but phantom n_t is " +
                                    std::to_string(spec.n_t));
    if (grid.n != spec.n)
        throw std::invalid_argument("simulate_sinogram: grid n=" + std::to_string(grid.n) +
                                    " differs from phantom n=" + std::to_string(spec.n));
}

}  // namespace

SinogramStack simulate_clean_highres(const PhantomSpec& spec, const AngleSchedule& schedule,
                                     const GridSpec& grid, const DetectorSpec& det) {
    check_inputs(spec, schedule, grid);
    det.validate();
    const std::size_t s = spec.supersample;
    GridSpec hi_grid{grid.n * s, grid.pixel_size / static_cast<double>(s), grid.origin_x,
                     grid.origin_y};
    DetectorSpec hi_det{det.n_bins * s, det.bin_spacing / static_cast<double>(s)};

    SinogramStack out;
    out.steps.resize(spec.n_t);
    for (std::size_t t = 0; t < spec.n_t; ++t) {
        const auto frame = render_pinball_points(spec, t, hi_grid.n);
        const auto blk = build_radon_block(hi_grid, hi_det, schedule.per_step[t]);
        auto& st = out.steps[t];
        st.angles = schedule.per_step[t];
        st.n_bins = hi_det.n_bins;
        st.values.resize(blk.rows());
        blk.multiply(frame, st.values);
    }
    return out;
}

SinogramStack simulate_sinogram(const PhantomSpec& spec, const AngleSchedule& schedule,
                                const GridSpec& grid, const DetectorSpec& det, double noise_level,
                                std::uint64_t seed) {
    require(std::isfinite(noise_level) && noise_level >= 0,
            "simulate_sinogram: noise_level must be >= 0");
    SinogramStack hi = simulate_clean_highres(spec, schedule, grid, det);

    double peak = 0.0;
    for (const auto& st : hi.steps)
        for (double v : st.values) peak = std::max(peak, std::abs(v));
    const double sigma = noise_level * peak;
    if (sigma > 0) {
        Xoshiro256 rng(seed);
        for (auto& st : hi.steps)
            for (auto& v : st.values) v += sigma * rng.normal();
    }

    const std::size_t s = spec.supersample;
    SinogramStack out;
    out.noise_level = noise_level;
    out.seed = seed;
    out.steps.resize(hi.n_t());
    for (std::size_t t = 0; t < hi.n_t(); ++t) {
        const auto& src = hi.steps[t];
        auto& dst = out.steps[t];
        dst.angles = src.angles;
        dst.n_bins = det.n_bins;
        dst.values.assign(src.angles.size() * det.n_bins, 0.0);
        if (s == 1) {
            dst.values = src.values;
            continue;
        }
        const double w = 1.0 / static_cast<double>(s);
        for (std::size_t a = 0; a < src.angles.size(); ++a)
            for (std::size_t b = 0; b < src.n_bins; ++b)
                dst.values[a * det.n_bins + b / s] += w * src.values[a * src.n_bins + b];
    }
    return out;
}

}  // namespace dyntomo
