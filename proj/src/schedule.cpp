#include "dyntomo/schedule.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dyntomo/common.hpp"

namespace dyntomo {

std::size_t AngleSchedule::total_angles() const {
    std::size_t s = 0;
    for (const auto& a : per_step) s += a.size();
    return s;
}

double wrap_angle(double a) {
    require(std::isfinite(a), "wrap_angle: non-finite angle");
    double r = std::fmod(a, kPi);
    if (r < 0) r += kPi;
    if (r >= kPi) r = 0.0;
    return r;
}

AngleSchedule schedule_small_increments(std::size_t n_t, double increment, std::size_t k) {
    require(n_t >= 1, "schedule_small_increments: n_t must be >= 1");
    require(k >= 1, "schedule_small_increments: k must be >= 1");
    require(std::isfinite(increment) && increment > 0,
            "schedule_small_increments: increment must be > 0");
    AngleSchedule s;
    s.label = k == 1 ? "small_increments" : "small_increments_" + std::to_string(k);
    s.per_step.resize(n_t);
    for (std::size_t i = 0; i < n_t; ++i) {
        for (std::size_t j = 0; j < k; ++j)
            s.per_step[i].push_back(wrap_angle(static_cast<double>(i) * increment +
                                               static_cast<double>(j) * kPi / static_cast<double>(k)));
    }
    return s;
}

AngleSchedule schedule_tracking(std::size_t n_t, std::size_t full_count, double increment) {
    require(n_t >= 2, "schedule_tracking: n_t must be >= 2");
    require(full_count >= 1, "schedule_tracking: full_count must be >= 1");
    require(std::isfinite(increment) && increment > 0, "schedule_tracking: increment must be > 0");
    AngleSchedule s;
    s.label = "tracking";
    s.per_step.resize(n_t);
    std::vector<double> full(full_count);
    for (std::size_t j = 0; j < full_count; ++j)
        full[j] = static_cast<double>(j) * kPi / static_cast<double>(full_count);
    s.per_step.front() = full;
    s.per_step.back() = full;
    for (std::size_t i = 1; i + 1 < n_t; ++i)
        s.per_step[i] = {wrap_angle(static_cast<double>(i) * increment)};
    return s;
}

AngleSchedule schedule_randomized(std::size_t n_t, std::uint64_t seed, std::size_t quantize) {
    require(n_t >= 1, "schedule_randomized: n_t must be >= 1");
    AngleSchedule s;
    s.label = "randomized";
    s.seed = seed;
    s.per_step.resize(n_t);
    Xoshiro256 rng(seed);
    for (auto& step : s.per_step) {
        const double u = rng.uniform();
        double a;
        if (quantize > 0) {
            const auto q = static_cast<double>(quantize);
            a = std::floor(u * q) * kPi / q;
        } else {
            a = u * kPi;
        }
        if (a >= kPi) a = std::nextafter(kPi, 0.0);
        step = {a};
    }
    return s;
}

std::string format_schedule(const AngleSchedule& s) {
    std::string out;
    char buf[64];
    for (std::size_t i = 0; i < s.per_step.size(); ++i) {
        out += std::to_string(i);
        out += ':';
        for (double a : s.per_step[i]) {
            std::snprintf(buf, sizeof buf, " %.12g", a);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace dyntomo
