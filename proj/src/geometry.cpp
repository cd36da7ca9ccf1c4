#include "dyntomo/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dyntomo/common.hpp"

namespace dyntomo {

void GridSpec::validate() const {
    require(n >= 1, "grid: n must be >= 1");
    require(std::isfinite(pixel_size) && pixel_size > 0, "grid: pixel_size must be > 0");
    require(std::isfinite(origin_x) && std::isfinite(origin_y), "grid: origin must be finite");
}

void DetectorSpec::validate() const {
    require(n_bins >= 1, "detector: n_bins must be >= 1");
    require(std::isfinite(bin_spacing) && bin_spacing > 0, "detector: bin_spacing must be > 0");
}

DetectorSpec DetectorSpec::covering(const GridSpec& grid) {
    const double diag = static_cast<double>(grid.n) * std::sqrt(2.0);
    auto bins = static_cast<std::size_t>(std::ceil(diag - 1e-9));
    return {std::max<std::size_t>(bins, 1), grid.pixel_size};
}

RadonBlock RadonBlock::from_triplets(std::size_t rows, std::size_t cols,
                                     std::vector<Triplet> triplets) {
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    RadonBlock blk;
    blk.rows_ = rows;
    blk.cols_ = cols;
    blk.row_ptr_.assign(rows + 1, 0);
    for (const auto& t : triplets)
        if (t.row >= rows || t.col >= cols) throw DimensionError("triplet index out of range");
    std::size_t r = 0;
    for (const auto& t : triplets) {
        while (r < t.row) blk.row_ptr_[++r] = blk.values_.size();
        const bool dup = blk.values_.size() > blk.row_ptr_[r] &&
                         blk.col_idx_.back() == static_cast<std::uint32_t>(t.col);
        if (dup) {
            blk.values_.back() += t.value;
        } else {
            blk.col_idx_.push_back(static_cast<std::uint32_t>(t.col));
            blk.values_.push_back(t.value);
        }
    }
    while (r < rows) blk.row_ptr_[++r] = blk.values_.size();
    return blk;
}

void RadonBlock::multiply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != cols_ || out.size() != rows_) throw DimensionError("RadonBlock::multiply");
    for (std::size_t i = 0; i < rows_; ++i) {
        double acc = 0.0;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) acc += values_[k] * in[col_idx_[k]];
        out[i] = acc;
    }
}

void RadonBlock::multiply_transpose(std::span<const double> in, std::span<double> out) const {
    if (in.size() != rows_ || out.size() != cols_)
        throw DimensionError("RadonBlock::multiply_transpose");
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
        const double w = in[i];
        if (w == 0.0) continue;
        for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) out[col_idx_[k]] += values_[k] * w;
    }
}

namespace {

// Appends the chord lengths of one ray to the block arrays (Siddon-style:
// all grid-line crossings are merged in ray parameter order and every
// segment is attributed to the pixel containing its midpoint).
void trace_ray(const GridSpec& g, double px, double py, double dx, double dy,
               std::vector<double>& crossings, std::vector<std::uint32_t>& cols,
               std::vector<double>& vals) {
    const double h = g.pixel_size;
    const double half = 0.5 * static_cast<double>(g.n) * h;
    const double xmin = g.origin_x - half, xmax = g.origin_x + half;
    const double ymin = g.origin_y - half, ymax = g.origin_y + half;

    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    auto slab = [&](double p, double d, double lo, double hi) {
        if (d == 0.0) return p >= lo && p <= hi;
        double a = (lo - p) / d, b = (hi - p) / d;
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
        return true;
    };
    if (!slab(px, dx, xmin, xmax) || !slab(py, dy, ymin, ymax)) return;
    if (!(t1 > t0)) return;

    crossings.clear();
    crossings.push_back(t0);
    if (dx != 0.0) {
        for (std::size_t k = 1; k < g.n; ++k) {
            const double t = (xmin + static_cast<double>(k) * h - px) / dx;
            if (t > t0 && t < t1) crossings.push_back(t);
        }
    }
    if (dy != 0.0) {
        for (std::size_t k = 1; k < g.n; ++k) {
            const double t = (ymin + static_cast<double>(k) * h - py) / dy;
            if (t > t0 && t < t1) crossings.push_back(t);
        }
    }
    crossings.push_back(t1);
    std::sort(crossings.begin(), crossings.end());

    const auto n = static_cast<long>(g.n);
    const double min_len = 1e-13 * h;
    const std::size_t row_start = cols.size();
    for (std::size_t k = 0; k + 1 < crossings.size(); ++k) {
        const double len = crossings[k + 1] - crossings[k];
        if (len <= min_len) continue;
        const double tm = 0.5 * (crossings[k] + crossings[k + 1]);
        auto c = static_cast<long>(std::floor((px + tm * dx - xmin) / h));
        auto r = static_cast<long>(std::floor((py + tm * dy - ymin) / h));
        c = std::clamp(c, 0L, n - 1);
        r = std::clamp(r, 0L, n - 1);
        const auto j = static_cast<std::uint32_t>(r * n + c);
        if (cols.size() > row_start && cols.back() == j) {
            vals.back() += len;
        } else {
            cols.push_back(j);
            vals.push_back(len);
        }
    }
    // CSR rows are kept column-sorted for cache-friendly traversal.
    std::vector<std::pair<std::uint32_t, double>> tmp;
    tmp.reserve(cols.size() - row_start);
    for (std::size_t k = row_start; k < cols.size(); ++k) tmp.emplace_back(cols[k], vals[k]);
    std::sort(tmp.begin(), tmp.end());
    cols.resize(row_start);
    vals.resize(row_start);
    for (const auto& [c, v] : tmp) {
        if (cols.size() > row_start && cols.back() == c) {
            vals.back() += v;
        } else {
            cols.push_back(c);
            vals.push_back(v);
        }
    }
}

}  // namespace

RadonBlock build_radon_block(const GridSpec& grid, const DetectorSpec& det,
                             const std::vector<double>& angles) {
    grid.validate();
    det.validate();
    if (angles.empty()) throw std::invalid_argument("build_radon_block: empty angle list");
    for (double a : angles) {
        if (!std::isfinite(a)) throw std::invalid_argument("build_radon_block: non-finite angle");
        if (a < 0.0 || a >= kPi)
            throw std::invalid_argument("build_radon_block: angle outside [0, pi)");
    }
    if (grid.pixels() > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("build_radon_block: grid too large");

    RadonBlock blk;
    blk.rows_ = angles.size() * det.n_bins;
    blk.cols_ = grid.pixels();
    blk.n_bins_ = det.n_bins;
    blk.angles_ = angles;
    blk.row_ptr_.clear();
    blk.row_ptr_.reserve(blk.rows_ + 1);
    blk.row_ptr_.push_back(0);
    blk.col_idx_.reserve(blk.rows_ * 2 * grid.n);
    blk.values_.reserve(blk.rows_ * 2 * grid.n);

    std::vector<double> crossings;
    crossings.reserve(2 * grid.n + 2);
    const double center_bin = 0.5 * static_cast<double>(det.n_bins - 1);
    for (double theta : angles) {
        const double dx = std::cos(theta), dy = std::sin(theta);
        for (std::size_t b = 0; b < det.n_bins; ++b) {
            const double s = (static_cast<double>(b) - center_bin) * det.bin_spacing;
            const double px = grid.origin_x - s * dy;
            const double py = grid.origin_y + s * dx;
            trace_ray(grid, px, py, dx, dy, crossings, blk.col_idx_, blk.values_);
            blk.row_ptr_.push_back(blk.values_.size());
        }
    }
    return blk;
}

BlockDiagonalOperator::BlockDiagonalOperator(std::vector<RadonBlock> blocks)
    : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw std::invalid_argument("BlockDiagonalOperator: no blocks");
    cols_ = blocks_.front().cols();
    row_offset_.assign(1, 0);
    for (const auto& b : blocks_) {
        if (b.cols() != cols_) throw DimensionError("BlockDiagonalOperator: blocks differ in cols");
        row_offset_.push_back(row_offset_.back() + b.rows());
    }
}

void BlockDiagonalOperator::apply(std::span<const double> u, std::span<double> m) const {
    if (u.size() != n_t() * cols_ || m.size() != total_rows())
        throw DimensionError("BlockDiagonalOperator::apply: size mismatch");
    const auto nt = static_cast<long>(n_t());
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (long t = 0; t < nt; ++t) {
        const auto& b = blocks_[t];
        b.multiply(u.subspan(t * cols_, cols_), m.subspan(row_offset_[t], b.rows()));
    }
}

void BlockDiagonalOperator::apply_adjoint(std::span<const double> m, std::span<double> u) const {
    if (u.size() != n_t() * cols_ || m.size() != total_rows())
        throw DimensionError("BlockDiagonalOperator::apply_adjoint: size mismatch");
    const auto nt = static_cast<long>(n_t());
#pragma omp parallel for schedule(static) num_threads(num_threads())
    for (long t = 0; t < nt; ++t) {
        const auto& b = blocks_[t];
        b.multiply_transpose(m.subspan(row_offset_[t], b.rows()), u.subspan(t * cols_, cols_));
    }
}

BlockDiagonalOperator build_operator(const GridSpec& grid, const DetectorSpec& det,
                                     const std::vector<std::vector<double>>& angles_per_step) {
    std::vector<RadonBlock> blocks(angles_per_step.size());
    const auto nt = static_cast<long>(angles_per_step.size());
    // exceptions must not escape the parallel region; validate first
    grid.validate();
    det.validate();
    for (const auto& a : angles_per_step)
        if (a.empty()) throw std::invalid_argument("build_operator: time step without angles");
    for (const auto& a : angles_per_step)
        for (double x : a)
            if (!std::isfinite(x) || x < 0.0 || x >= kPi)
                throw std::invalid_argument("build_operator: angle outside [0, pi)");
#pragma omp parallel for schedule(dynamic) num_threads(num_threads())
    for (long t = 0; t < nt; ++t) blocks[t] = build_radon_block(grid, det, angles_per_step[t]);
    return BlockDiagonalOperator(std::move(blocks));
}

SinogramStack forward(const BlockDiagonalOperator& op, const ImageSequence& u) {
    if (u.n_t != op.n_t() || u.pixels() != op.cols())
        throw DimensionError("forward: image sequence " + std::to_string(u.n_t) + "x" +
                             std::to_string(u.pixels()) + " does not match operator " +
                             std::to_string(op.n_t()) + "x" + std::to_string(op.cols()));
    std::vector<double> flat(op.total_rows());
    op.apply(u.data, flat);
    SinogramStack out;
    out.steps.resize(op.n_t());
    for (std::size_t t = 0; t < op.n_t(); ++t) {
        const auto& b = op.block(t);
        auto& st = out.steps[t];
        st.angles = b.angles();
        st.n_bins = b.n_bins();
        st.values.assign(flat.begin() + static_cast<long>(op.row_offset(t)),
                         flat.begin() + static_cast<long>(op.row_offset(t) + b.rows()));
    }
    return out;
}

ImageSequence adjoint(const BlockDiagonalOperator& op, const SinogramStack& m) {
    if (m.n_t() != op.n_t()) throw DimensionError("adjoint: time step count mismatch");
    for (std::size_t t = 0; t < op.n_t(); ++t)
        if (m.steps[t].values.size() != op.block(t).rows())
            throw DimensionError("adjoint: step " + std::to_string(t) + " has " +
                                 std::to_string(m.steps[t].values.size()) + " values, expected " +
                                 std::to_string(op.block(t).rows()));
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(op.cols()))));
    ImageSequence u(op.n_t(), side);
    if (u.pixels() != op.cols()) throw DimensionError("adjoint: operator columns are not a square grid");
    op.apply_adjoint(m.flatten(), u.data);
    return u;
}

std::vector<double> SinogramStack::flatten() const {
    std::vector<double> out;
    out.reserve(total_values());
    for (const auto& st : steps) out.insert(out.end(), st.values.begin(), st.values.end());
    return out;
}

LinearMap as_linear_map(const BlockDiagonalOperator& op) {
    LinearMap m;
    m.in_dim = op.n_t() * op.cols();
    m.out_dim = op.total_rows();
    m.apply = [&op](std::span<const double> x, std::span<double> y) { op.apply(x, y); };
    m.apply_adjoint = [&op](std::span<const double> y, std::span<double> x) { op.apply_adjoint(y, x); };
    return m;
}

double operator_norm_estimate(std::span<const LinearMap> maps, const PowerIterationOptions& opts) {
    if (maps.empty()) throw std::invalid_argument("operator_norm_estimate: empty operator");
    const std::size_t n = maps.front().in_dim;
    for (const auto& m : maps)
        if (m.in_dim != n) throw DimensionError("operator_norm_estimate: stacked maps differ in in_dim");
    if (n == 0) return 0.0;

    std::vector<double> x(n), y(n), acc(n);
    Xoshiro256 rng(0x6f70'6e6f'726dULL);
    for (auto& xi : x) xi = 0.5 + rng.uniform();
    std::vector<std::vector<double>> out(maps.size());
    for (std::size_t i = 0; i < maps.size(); ++i) out[i].resize(maps[i].out_dim);

    auto normalize = [](std::vector<double>& v) {
        const double nrm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
        if (nrm > 0) for (auto& e : v) e /= nrm;
        return nrm;
    };
    normalize(x);

    double lambda = 0.0;
    for (int it = 0; it < opts.max_iters; ++it) {
        std::fill(acc.begin(), acc.end(), 0.0);
        double kx2 = 0.0;
        for (std::size_t i = 0; i < maps.size(); ++i) {
            maps[i].apply(x, out[i]);
            kx2 += std::inner_product(out[i].begin(), out[i].end(), out[i].begin(), 0.0);
            maps[i].apply_adjoint(out[i], y);
            for (std::size_t k = 0; k < n; ++k) acc[k] += y[k];
        }
        if (!std::isfinite(kx2)) throw SolverError("operator_norm_estimate: non-finite iterate");
        // Rayleigh quotient of K^T K at the unit vector x
        const double prev = lambda;
        lambda = kx2;
        if (lambda == 0.0) return 0.0;
        if (it > 0 && std::abs(lambda - prev) <= opts.rel_tol * lambda) return std::sqrt(lambda);
        x.swap(acc);
        if (normalize(x) == 0.0) return 0.0;
    }
    throw SolverError("operator_norm_estimate: power iteration did not converge in " +
                      std::to_string(opts.max_iters) + " iterations");
}

double operator_norm_estimate(const BlockDiagonalOperator& op, std::span<const LinearMap> extra,
                              const PowerIterationOptions& opts) {
    if (op.n_t() == 0) throw std::invalid_argument("operator_norm_estimate: empty operator");
    std::vector<LinearMap> maps;
    maps.push_back(as_linear_map(op));
    maps.insert(maps.end(), extra.begin(), extra.end());
    return operator_norm_estimate(maps, opts);
}

}  // namespace dyntomo
