#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dyntomo/geometry.hpp"
#include "dyntomo/sequences.hpp"

namespace dyntomo {

struct SolverParams {
    int p = 1;              // data fidelity exponent, 1 or 2
    double alpha = 0.1;     // TV weight on u
    double beta = 0.2;      // TV weight on v
    double gamma = 0.5;     // optical-flow weight
    int inner_max_iters = 5000;
    double inner_tol = 1e-6;
    int outer_max_iters = 20;
    double outer_tol = 1e-4;
    int pyramid_levels = 1;
    double pyramid_scale = 0.5;
    double step_rule = 0.99;
    bool clamp_nonnegative = false;

    /// Checks the joint-problem invariants (all weights > 0).
    void validate() const;
};

/// Dual variables of the reconstruction problem.
struct DualStateU {
    std::vector<double> p1;  // sinogram-shaped
    std::vector<double> p2;  // gradient field per frame
    std::vector<double> p3;  // transport residual per frame pair
};

/// Dual variables of the motion problem.
struct DualStateV {
    std::vector<double> q1;  // residual-shaped
    std::vector<double> q2;  // gradient of the x flow component
    std::vector<double> q3;  // gradient of the y flow component
};

/// Counts of each update rule executed; lets tests confirm which code paths ran.
struct UpdateCounters {
    std::uint64_t p1_linf = 0;
    std::uint64_t p1_quadratic = 0;
    std::uint64_t p2 = 0;
    std::uint64_t p3 = 0;
    std::uint64_t primal = 0;
    bool operator==(const UpdateCounters&) const = default;
};

struct InnerStats {
    int iterations = 0;
    bool converged = false;
    double energy_start = 0.0;
    double energy_end = 0.0;
    double op_norm = 0.0;
    double step = 0.0;
};

struct SolveUResult {
    ImageSequence u;
    DualStateU dual;
    InnerStats stats;
    UpdateCounters counters;
};

struct SolveVResult {
    FlowSequence v;
    DualStateV dual;
    InnerStats stats;
};

struct WarmStartU {
    ImageSequence u;
    DualStateU dual;
};

struct WarmStartV {
    FlowSequence v;
    DualStateV dual;
};

/// Linearized optical-flow data term ||G v - b||_1 with (G v)_i = g_i . v_i.
/// From an image sequence: g_i = grad u^i, b_i = u^i - u^{i+1}.
struct FlowProblem {
    GradientField grads;
    ImageSequence rhs;

    static FlowProblem from_sequence(const ImageSequence& u);
    /// Linearization around v0 after warping each frame u^i by -v0_i.
    static FlowProblem warped(const ImageSequence& u, const FlowSequence& v0);
};

// Projections used by the dual updates.
void project_linf(std::span<double> x, double radius);
/// Scales every pixel's 2-vector (x[p], y[p]) to Euclidean norm <= radius.
void project_l2inf(std::span<double> x, std::span<double> y, double radius);

/// (1/p)||A u - m||_p^p + alpha * TV(u) + gamma * ||T_v u||_1
double u_subproblem_energy(const BlockDiagonalOperator& op, const SinogramStack& m,
                           const FlowSequence& v, const ImageSequence& u, const SolverParams& params);
/// ||T^ v - b||_1 + (beta / gamma) * sum of TV of both flow components
double v_subproblem_energy(const FlowProblem& prob, const FlowSequence& v, const SolverParams& params);
/// The full time-discrete joint functional.
double joint_energy(const BlockDiagonalOperator& op, const SinogramStack& m, const ImageSequence& u,
                    const FlowSequence& v, const SolverParams& params);

/// Primal-dual solve of the reconstruction problem with v held fixed.
/// Accepts alpha, gamma >= 0. Throws SolverError on non-finite iterates.
SolveUResult solve_u(const BlockDiagonalOperator& op, const SinogramStack& m,
                     const FlowSequence& v_fixed, const SolverParams& params,
                     const WarmStartU* warm = nullptr);

/// Primal-dual solve of the motion problem with u held fixed.
SolveVResult solve_v(const ImageSequence& u_fixed, const SolverParams& params,
                     const WarmStartV* warm = nullptr);
SolveVResult solve_flow(const FlowProblem& prob, const SolverParams& params,
                        const WarmStartV* warm = nullptr);

/// Coarse-to-fine flow estimate with one warp per level. `levels` <= 1 is solve_v.
SolveVResult solve_v_pyramid(const ImageSequence& u_fixed, const SolverParams& params,
                             const FlowSequence* initial = nullptr);

struct OuterRecord {
    int iteration = 0;
    double joint_energy = 0.0;
    double r_main = 0.0;
    double wall_seconds = 0.0;
    int inner_u_iters = 0;
    int inner_v_iters = 0;
};

struct JointResult {
    ImageSequence u;
    FlowSequence v;
    std::vector<double> energy_trace;
    std::vector<double> outer_residual_trace;
    std::vector<OuterRecord> records;
    bool converged = false;
};

using OuterCallback = std::function<void(const OuterRecord&)>;

/// Alternating minimization: solve_u with T from the current v, then solve_v
/// with T^, b from the new u, until r_main = ||u - u_old|| + ||v - v_old||
/// (Euclidean norms) <= outer_tol * (||u|| + ||v||) or outer_max_iters.
JointResult joint_solve(const BlockDiagonalOperator& op, const SinogramStack& m,
                        const SolverParams& params, const ImageSequence* initial_u = nullptr,
                        const FlowSequence* initial_v = nullptr, const OuterCallback& cb = {});

/// As joint_solve, with the motion step replaced by solve_v_pyramid.
JointResult joint_solve_pyramid(const BlockDiagonalOperator& op, const SinogramStack& m,
                                const SolverParams& params, const OuterCallback& cb = {});

}  // namespace dyntomo
