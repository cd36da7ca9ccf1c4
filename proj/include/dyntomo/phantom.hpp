#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dyntomo/geometry.hpp"
#include "dyntomo/schedule.hpp"
#include "dyntomo/sequences.hpp"

namespace dyntomo {

/// Moving ball inside a stationary ellipse. Lengths are in target-grid pixels,
/// measured from the grid center with x along columns and y along rows.
struct PhantomSpec {
    std::size_t n = 42;
    std::size_t n_t = 30;
    std::size_t supersample = 4;

    double ball_radius = 4.0;
    double ball_intensity = 1.0;
    double ball_start_x = -12.0;
    double ball_end_x = 12.0;
    double ball_y = 0.0;

    double ellipse_center_x = 0.0;
    double ellipse_center_y = 0.0;
    double ellipse_semi_x = 17.0;
    double ellipse_semi_y = 12.0;
    double ellipse_intensity = 0.5;

    /// Default geometry scaled from the 42-pixel layout to side n.
    static PhantomSpec pinball(std::size_t n = 42, std::size_t n_t = 30);

    /// Throws std::invalid_argument if any field is out of range or the ball
    /// leaves the ellipse interior at some step.
    void validate() const;

    double ball_center_x(std::size_t t) const;
};

/// Area-averaged frame t at resolution n (supersample^2 point samples per pixel).
std::vector<double> render_pinball(const PhantomSpec& spec, std::size_t t);

/// Frame t point-sampled at `side` x `side` pixel centers covering the same
/// square as the n x n target grid.
std::vector<double> render_pinball_points(const PhantomSpec& spec, std::size_t t,
                                          std::size_t side, bool include_ball = true);

/// Same as render_pinball without the ball.
std::vector<double> render_ellipse_only(const PhantomSpec& spec);

/// All n_t frames of render_pinball.
ImageSequence render_sequence(const PhantomSpec& spec);

/// Projects the phantom at supersample * n resolution with a supersample *
/// n_bins detector, adds i.i.d. Gaussian noise with std noise_level * max(clean)
/// and block-averages detector bins back to det.n_bins.
SinogramStack simulate_sinogram(const PhantomSpec& spec, const AngleSchedule& schedule,
                                const GridSpec& grid, const DetectorSpec& det,
                                double noise_level, std::uint64_t seed);

/// Clean high-resolution sinogram values before noise and binning; exposed for
/// noise statistics and the inverse-crime check.
SinogramStack simulate_clean_highres(const PhantomSpec& spec, const AngleSchedule& schedule,
                                     const GridSpec& grid, const DetectorSpec& det);

}  // namespace dyntomo
