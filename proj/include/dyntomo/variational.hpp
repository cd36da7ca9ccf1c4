#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dyntomo/sequences.hpp"

namespace dyntomo {

// Single-frame kernels on an n x n row-major frame. Forward differences with
// replicate (Neumann) boundary: the last column has u_x = 0, the last row u_y = 0.

void gradient(std::span<const double> frame, std::size_t n, std::span<double> gx,
              std::span<double> gy);
/// out = grad^T (gx, gy); the divergence is its negative.
void gradient_transpose(std::span<const double> gx, std::span<const double> gy, std::size_t n,
                        std::span<double> out);
double tv_norm(std::span<const double> gx, std::span<const double> gy);

// Sequence-level forms.

GradientField gradient(const ImageSequence& u);
/// div p = -grad^T p, so that <grad u, p> = -<u, div p>.
ImageSequence divergence_adjoint(const GradientField& p);
/// Sum over all fields and pixels of sqrt(p_x^2 + p_y^2).
double tv_norm(const GradientField& p);

/// r_i = u^{i+1} - u^i + grad(u^i) . v^i for i = 0..n_t-2; linear in u for fixed v.
ImageSequence transport_apply(const ImageSequence& u, const FlowSequence& v);
/// Transpose of transport_apply in u for fixed v; returns n_t frames.
ImageSequence transport_adjoint(const FlowSequence& v, const ImageSequence& r);

/// The flow-side factorization of the same residual: (T^ v)_i = grad(u^i) . v^i
/// and b_i = u^i - u^{i+1}, so that T^ v - b equals transport_apply(u, v).
ImageSequence flow_operator_apply(const ImageSequence& u, const FlowSequence& v);
FlowSequence flow_operator_adjoint(const ImageSequence& u, const ImageSequence& r);
ImageSequence flow_rhs(const ImageSequence& u);

/// Flat-buffer kernels used inside the solvers. u holds n_t frames, v holds
/// n_t - 1 fields (FlowSequence layout), r holds n_t - 1 frames.
void transport_apply(std::span<const double> u, std::span<const double> v, std::size_t n,
                     std::size_t n_t, std::span<double> r);
void transport_adjoint(std::span<const double> v, std::span<const double> r, std::size_t n,
                       std::size_t n_t, std::span<double> u);

/// Samples `frame` at x + v(x) with bilinear interpolation; coordinates are
/// clamped to the grid (replicate boundary).
std::vector<double> warp(std::span<const double> frame, std::size_t n, std::span<const double> vx,
                         std::span<const double> vy);

/// 2x2 block average; odd n is replicate-padded by one row/column first.
/// Output side is (n + 1) / 2.
std::vector<double> restrict_frame(std::span<const double> frame, std::size_t n);
/// Bilinear upsampling from n_coarse to n_fine (pixel-center aligned, factor 2).
std::vector<double> prolong_frame(std::span<const double> frame, std::size_t n_coarse,
                                  std::size_t n_fine);

ImageSequence restrict_sequence(const ImageSequence& u);
/// Restricts each component and halves the displacements.
FlowSequence restrict_flow(const FlowSequence& v);
/// Prolongs each component to n_fine and doubles the displacements.
FlowSequence prolong_flow(const FlowSequence& v, std::size_t n_fine);

}  // namespace dyntomo
