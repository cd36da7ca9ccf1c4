#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dyntomo {

/// n_t frames of an n x n grid, row-major per frame (index = row * n + col,
/// col is the x direction).
struct ImageSequence {
    std::size_t n_t = 0;
    std::size_t n = 0;
    std::vector<double> data;

    ImageSequence() = default;
    ImageSequence(std::size_t frames, std::size_t side, double fill = 0.0)
        : n_t(frames), n(side), data(frames * side * side, fill) {}

    std::size_t pixels() const { return n * n; }
    std::span<double> frame(std::size_t t) { return {data.data() + t * pixels(), pixels()}; }
    std::span<const double> frame(std::size_t t) const {
        return {data.data() + t * pixels(), pixels()};
    }
    double& at(std::size_t t, std::size_t row, std::size_t col) {
        return data[t * pixels() + row * n + col];
    }
    double at(std::size_t t, std::size_t row, std::size_t col) const {
        return data[t * pixels() + row * n + col];
    }
    bool operator==(const ImageSequence&) const = default;
};

/// `count` two-component vector fields on an n x n grid. Layout per field:
/// the x-component plane followed by the y-component plane. Values are
/// displacements in pixels per frame interval.
struct FlowSequence {
    std::size_t count = 0;
    std::size_t n = 0;
    std::vector<double> data;

    FlowSequence() = default;
    FlowSequence(std::size_t fields, std::size_t side, double fill = 0.0)
        : count(fields), n(side), data(fields * 2 * side * side, fill) {}

    std::size_t pixels() const { return n * n; }
    std::span<double> component(std::size_t i, int c) {
        return {data.data() + (2 * i + static_cast<std::size_t>(c)) * pixels(), pixels()};
    }
    std::span<const double> component(std::size_t i, int c) const {
        return {data.data() + (2 * i + static_cast<std::size_t>(c)) * pixels(), pixels()};
    }
    bool operator==(const FlowSequence&) const = default;
};

/// Per-frame gradient (u_x, u_y); same layout as FlowSequence with one field per frame.
using GradientField = FlowSequence;

struct SinogramStep {
    std::vector<double> angles;  // radians in [0, pi)
    std::size_t n_bins = 0;
    std::vector<double> values;  // angle-major: values[a * n_bins + bin]
    bool operator==(const SinogramStep&) const = default;
};

struct SinogramStack {
    std::vector<SinogramStep> steps;
    double noise_level = 0.0;
    std::uint64_t seed = 0;

    std::size_t n_t() const { return steps.size(); }
    std::size_t total_values() const {
        std::size_t s = 0;
        for (const auto& st : steps) s += st.values.size();
        return s;
    }
    /// Concatenation of all step values in time order.
    std::vector<double> flatten() const;
    bool operator==(const SinogramStack&) const = default;
};

}  // namespace dyntomo
