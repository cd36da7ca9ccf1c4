#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dyntomo {

/// Projection angles (radians, in [0, pi)) measured at each time step.
struct AngleSchedule {
    std::vector<std::vector<double>> per_step;
    std::string label;
    std::optional<std::uint64_t> seed;

    std::size_t n_t() const { return per_step.size(); }
    std::size_t total_angles() const;
    bool operator==(const AngleSchedule&) const = default;
};

/// Step i measures {(i * increment + j * pi / k) mod pi : j = 0..k-1}.
AngleSchedule schedule_small_increments(std::size_t n_t, double increment, std::size_t k);

/// Full scans of `full_count` equispaced angles at the first and last step,
/// single angle (i * increment) mod pi in between.
AngleSchedule schedule_tracking(std::size_t n_t, std::size_t full_count, double increment);

/// One angle per step drawn i.i.d. uniform on [0, pi) from xoshiro256** seeded
/// with `seed`. When `quantize` > 0 the draw is snapped down to the grid
/// {j * pi / quantize}.
AngleSchedule schedule_randomized(std::size_t n_t, std::uint64_t seed, std::size_t quantize = 0);

/// Reduces an angle to [0, pi).
double wrap_angle(double a);

/// Text form: one line per step, angles in radians with 12 significant digits.
std::string format_schedule(const AngleSchedule& s);

}  // namespace dyntomo
