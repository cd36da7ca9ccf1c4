#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dyntomo/sequences.hpp"

namespace dyntomo {

/// Square pixel grid. Pixel (row, col) covers
///   x in origin_x + [col - n/2, col + 1 - n/2] * pixel_size
///   y in origin_y + [row - n/2, row + 1 - n/2] * pixel_size.
struct GridSpec {
    std::size_t n = 1;
    double pixel_size = 1.0;
    double origin_x = 0.0;
    double origin_y = 0.0;

    void validate() const;
    std::size_t pixels() const { return n * n; }
};

/// Parallel-beam detector. Bin b sits at signed offset
/// (b - (n_bins - 1) / 2) * bin_spacing from the grid center.
struct DetectorSpec {
    std::size_t n_bins = 1;
    double bin_spacing = 1.0;

    void validate() const;

    /// Smallest detector with spacing == pixel_size that covers the grid diagonal.
    static DetectorSpec covering(const GridSpec& grid);
};

/// One time step of the Radon operator: CSR matrix of ray/pixel chord lengths.
///
/// Angle convention: a ray for angle theta travels along (cos theta, sin theta);
/// its detector offset s is measured along the normal (-sin theta, cos theta).
/// Row index = angle_index * n_bins + bin.
class RadonBlock {
public:
    struct Triplet {
        std::size_t row;
        std::size_t col;
        double value;
    };

    RadonBlock() = default;

    /// Generic sparse block; duplicates are summed. Used for synthetic operators.
    static RadonBlock from_triplets(std::size_t rows, std::size_t cols,
                                    std::vector<Triplet> triplets);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t n_bins() const { return n_bins_; }
    const std::vector<double>& angles() const { return angles_; }
    std::size_t nonzeros() const { return values_.size(); }

    std::span<const std::size_t> row_ptr() const { return row_ptr_; }
    std::span<const std::uint32_t> col_index() const { return col_idx_; }
    std::span<const double> values() const { return values_; }

    /// out = B * in
    void multiply(std::span<const double> in, std::span<double> out) const;
    /// out = B^T * in (overwrites out)
    void multiply_transpose(std::span<const double> in, std::span<double> out) const;

private:
    friend RadonBlock build_radon_block(const GridSpec&, const DetectorSpec&,
                                        const std::vector<double>&);
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t n_bins_ = 0;
    std::vector<double> angles_;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::uint32_t> col_idx_;
    std::vector<double> values_;
};

RadonBlock build_radon_block(const GridSpec& grid, const DetectorSpec& det,
                             const std::vector<double>& angles);

/// The block-diagonal space-time operator: one RadonBlock per time step.
class BlockDiagonalOperator {
public:
    BlockDiagonalOperator() = default;
    explicit BlockDiagonalOperator(std::vector<RadonBlock> blocks);

    std::size_t n_t() const { return blocks_.size(); }
    std::size_t cols() const { return cols_; }
    std::size_t total_rows() const { return row_offset_.back(); }
    std::size_t row_offset(std::size_t t) const { return row_offset_[t]; }
    const RadonBlock& block(std::size_t t) const { return blocks_[t]; }
    const std::vector<RadonBlock>& blocks() const { return blocks_; }

    /// Flat versions used in the solver hot loops. `u` holds n_t * cols values,
    /// `m` holds total_rows values.
    void apply(std::span<const double> u, std::span<double> m) const;
    void apply_adjoint(std::span<const double> m, std::span<double> u) const;

private:
    std::vector<RadonBlock> blocks_;
    std::vector<std::size_t> row_offset_{0};
    std::size_t cols_ = 0;
};

BlockDiagonalOperator build_operator(const GridSpec& grid, const DetectorSpec& det,
                                     const std::vector<std::vector<double>>& angles_per_step);

SinogramStack forward(const BlockDiagonalOperator& op, const ImageSequence& u);
ImageSequence adjoint(const BlockDiagonalOperator& op, const SinogramStack& m);

/// A linear map given by its action and the action of its transpose.
struct LinearMap {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;
    std::function<void(std::span<const double>, std::span<double>)> apply_adjoint;
};

struct PowerIterationOptions {
    int max_iters = 20000;
    double rel_tol = 1e-10;
};

/// ||K||_2 for K the vertical stack of `maps` (all sharing in_dim), by power
/// iteration on K^T K. Throws SolverError when not converged in max_iters.
double operator_norm_estimate(std::span<const LinearMap> maps,
                              const PowerIterationOptions& opts = {});

/// Same with K = (op; extra...). `op` is seen as a map on n_t * cols values.
double operator_norm_estimate(const BlockDiagonalOperator& op,
                              std::span<const LinearMap> extra = {},
                              const PowerIterationOptions& opts = {});

LinearMap as_linear_map(const BlockDiagonalOperator& op);

}  // namespace dyntomo
