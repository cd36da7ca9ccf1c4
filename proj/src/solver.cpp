#include "dyntomo/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "dyntomo/common.hpp"
#include "dyntomo/variational.hpp"

namespace dyntomo {

void SolverParams::validate() const {
    require(p == 1 || p == 2, "solver: p must be 1 or 2");
    require(alpha > 0 && beta > 0 && gamma > 0, "solver: alpha, beta, gamma must be > 0");
    require(inner_max_iters >= 1 && outer_max_iters >= 1, "solver: iteration caps must be >= 1");
    require(inner_tol > 0 && outer_tol > 0, "solver: tolerances must be > 0");
    require(pyramid_levels >= 1, "solver: pyramid_levels must be >= 1");
    require(pyramid_scale == 0.5, "solver: only pyramid_scale 0.5 is supported");
    require(step_rule > 0 && step_rule <= 1, "solver: step_rule must be in (0, 1]");
}

namespace {

constexpr int kEnergyWindow = 10;
const PowerIterationOptions kNormOptions{20000, 1e-6};

void validate_inner(const SolverParams& prm) {
    require(prm.p == 1 || prm.p == 2, "solver: p must be 1 or 2");
    require(prm.alpha >= 0 && prm.gamma >= 0, "solver: alpha and gamma must be >= 0");
    require(prm.inner_max_iters >= 1, "solver: inner_max_iters must be >= 1");
    require(prm.inner_tol > 0, "solver: inner_tol must be > 0");
    require(prm.step_rule > 0 && prm.step_rule <= 1, "solver: step_rule must be in (0, 1]");
}

std::size_t side_of(std::size_t pixels) {
    const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pixels))));
    if (n * n != pixels) throw DimensionError("operator columns do not form a square grid");
    return n;
}

void check_data(const BlockDiagonalOperator& op, const SinogramStack& m) {
    if (m.n_t() != op.n_t())
        throw DimensionError("sinogram has " + std::to_string(m.n_t()) + " steps, operator has " +
                             std::to_string(op.n_t()));
    for (std::size_t t = 0; t < op.n_t(); ++t)
        if (m.steps[t].values.size() != op.block(t).rows())
            throw DimensionError("sinogram step " + std::to_string(t) + " has " +
                                 std::to_string(m.steps[t].values.size()) + " values, operator " +
                                 std::to_string(op.block(t).rows()));
}

void check_flow(const BlockDiagonalOperator& op, const FlowSequence& v) {
    if (v.count + 1 != op.n_t())
        throw DimensionError("flow has " + std::to_string(v.count) + " fields, expected " +
                             std::to_string(op.n_t() - 1));
    if (v.count > 0 && v.pixels() != op.cols()) throw DimensionError("flow grid differs from operator grid");
}

void grad_seq(std::span<const double> u, std::size_t n, std::size_t frames, std::span<double> g) {
    const std::size_t np = n * n;
    for (std::size_t t = 0; t < frames; ++t)
        gradient(u.subspan(t * np, np), n, g.subspan(2 * t * np, np), g.subspan((2 * t + 1) * np, np));
}

void grad_seq_transpose(std::span<const double> g, std::size_t n, std::size_t frames,
                        std::span<double> out) {
    const std::size_t np = n * n;
    for (std::size_t t = 0; t < frames; ++t)
        gradient_transpose(g.subspan(2 * t * np, np), g.subspan((2 * t + 1) * np, np), n,
                           out.subspan(t * np, np));
}

double tv_seq(std::span<const double> g, std::size_t np, std::size_t frames) {
    double s = 0.0;
    for (std::size_t t = 0; t < frames; ++t)
        s += tv_norm(g.subspan(2 * t * np, np), g.subspan((2 * t + 1) * np, np));
    return s;
}

double l1(std::span<const double> x) {
    double s = 0.0;
    for (double e : x) s += std::abs(e);
    return s;
}

double norm2(std::span<const double> x) {
    return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
}

double diff_norm2(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

bool window_converged(double e, double prev, double tol) {
    const double scale = std::max(std::abs(e), std::numeric_limits<double>::min());
    return std::abs(e - prev) <= tol * scale;
}

// The reconstruction subproblem on flat buffers.
struct UProblem {
    const BlockDiagonalOperator& op;
    std::vector<double> m;
    std::span<const double> v;
    std::size_t n, nt, np;
    const SolverParams& prm;

    // scratch
    std::vector<double> au, g, r;

    UProblem(const BlockDiagonalOperator& o, const SinogramStack& data, const FlowSequence& flow,
             const SolverParams& params)
        : op(o), m(data.flatten()), v(flow.data), n(side_of(o.cols())), nt(o.n_t()),
          np(o.cols()), prm(params), au(o.total_rows()), g(2 * nt * np), r((nt - 1) * np) {}

    double energy(std::span<const double> u) {
        op.apply(u, au);
        double data = 0.0;
        for (std::size_t i = 0; i < au.size(); ++i) {
            const double d = au[i] - m[i];
            data += prm.p == 1 ? std::abs(d) : 0.5 * d * d;
        }
        grad_seq(u, n, nt, g);
        transport_apply(u, v, n, nt, r);
        return data + prm.alpha * tv_seq(g, np, nt) + prm.gamma * l1(r);
    }

    std::vector<LinearMap> maps() const {
        const std::size_t dim = nt * np;
        const std::size_t nn = n, frames = nt;
        LinearMap grad{dim, 2 * dim,
                       [nn, frames](std::span<const double> x, std::span<double> y) { grad_seq(x, nn, frames, y); },
                       [nn, frames](std::span<const double> y, std::span<double> x) {
                           grad_seq_transpose(y, nn, frames, x);
                       }};
        auto vv = v;
        LinearMap trans{dim, (nt - 1) * np,
                        [vv, nn, frames](std::span<const double> x, std::span<double> y) {
                            transport_apply(x, vv, nn, frames, y);
                        },
                        [vv, nn, frames](std::span<const double> y, std::span<double> x) {
                            transport_adjoint(vv, y, nn, frames, x);
                        }};
        return {as_linear_map(op), grad, trans};
    }
};

}  // namespace

void project_linf(std::span<double> x, double radius) {
    for (auto& e : x) e = std::clamp(e, -radius, radius);
}

void project_l2inf(std::span<double> x, std::span<double> y, double radius) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double nrm = std::hypot(x[i], y[i]);
        if (nrm > radius) {
            const double s = radius / nrm;
            x[i] *= s;
            y[i] *= s;
        }
    }
}

double u_subproblem_energy(const BlockDiagonalOperator& op, const SinogramStack& m,
                           const FlowSequence& v, const ImageSequence& u, const SolverParams& params) {
    check_data(op, m);
    check_flow(op, v);
    if (u.n_t != op.n_t() || u.pixels() != op.cols()) throw DimensionError("u does not match operator");
    UProblem prob(op, m, v, params);
    return prob.energy(u.data);
}

double joint_energy(const BlockDiagonalOperator& op, const SinogramStack& m, const ImageSequence& u,
                    const FlowSequence& v, const SolverParams& params) {
    double tv_v = 0.0;
    for (std::size_t i = 0; i < v.count; ++i)
        for (int c = 0; c < 2; ++c) {
            std::vector<double> gx(v.pixels()), gy(v.pixels());
            gradient(v.component(i, c), v.n, gx, gy);
            tv_v += tv_norm(gx, gy);
        }
    return u_subproblem_energy(op, m, v, u, params) + params.beta * tv_v;
}

SolveUResult solve_u(const BlockDiagonalOperator& op, const SinogramStack& m,
                     const FlowSequence& v_fixed, const SolverParams& params, const WarmStartU* warm) {
    validate_inner(params);
    check_data(op, m);
    check_flow(op, v_fixed);
    UProblem prob(op, m, v_fixed, params);
    const std::size_t dim = prob.nt * prob.np;
    const std::size_t n = prob.n, nt = prob.nt;

    SolveUResult res;
    res.u = ImageSequence(nt, n);
    res.dual.p1.assign(op.total_rows(), 0.0);
    res.dual.p2.assign(2 * dim, 0.0);
    res.dual.p3.assign((nt - 1) * prob.np, 0.0);
    if (warm) {
        if (warm->u.data.size() != dim) throw DimensionError("solve_u: warm start u has wrong size");
        res.u = warm->u;
        if (warm->dual.p1.size() == res.dual.p1.size() && warm->dual.p2.size() == res.dual.p2.size() &&
            warm->dual.p3.size() == res.dual.p3.size())
            res.dual = warm->dual;
    }

    const auto maps = prob.maps();
    const double L = operator_norm_estimate(maps, kNormOptions);
    const double step = L > 0 ? params.step_rule / L : 1.0;
    const double sigma = step, tau = step;
    if (sigma * tau * L * L > 1.0 + 1e-12) throw SolverError("solve_u: step sizes violate sigma*tau*L^2 <= 1");
    res.stats.op_norm = L;
    res.stats.step = step;

    auto& u = res.u.data;
    auto& p1 = res.dual.p1;
    auto& p2 = res.dual.p2;
    auto& p3 = res.dual.p3;
    std::vector<double> ubar = u, au(op.total_rows()), g(2 * dim), r((nt - 1) * prob.np);
    std::vector<double> at(dim), gt(dim), tt(dim);

    double e = prob.energy(u);
    if (!std::isfinite(e)) throw SolverError("solve_u: non-finite energy at the starting point");
    res.stats.energy_start = e;
    double best_e = e, prev_e = e;
    std::vector<double> best_u = u;

    const double a_rad = params.alpha, g_rad = params.gamma;
    int k = 0;
    bool checked_last = true;
    for (k = 1; k <= params.inner_max_iters; ++k) {
        op.apply(ubar, au);
        if (params.p == 1) {
            for (std::size_t i = 0; i < p1.size(); ++i)
                p1[i] = std::clamp(p1[i] + sigma * (au[i] - prob.m[i]), -1.0, 1.0);
            ++res.counters.p1_linf;
        } else {
            const double inv = 1.0 / (1.0 + sigma);
            for (std::size_t i = 0; i < p1.size(); ++i) p1[i] = (p1[i] + sigma * (au[i] - prob.m[i])) * inv;
            ++res.counters.p1_quadratic;
        }

        grad_seq(ubar, n, nt, g);
        for (std::size_t i = 0; i < g.size(); ++i) p2[i] += sigma * g[i];
        for (std::size_t t = 0; t < nt; ++t)
            project_l2inf(std::span(p2).subspan(2 * t * prob.np, prob.np),
                          std::span(p2).subspan((2 * t + 1) * prob.np, prob.np), a_rad);
        ++res.counters.p2;

        transport_apply(ubar, prob.v, n, nt, r);
        for (std::size_t i = 0; i < r.size(); ++i) p3[i] = std::clamp(p3[i] + sigma * r[i], -g_rad, g_rad);
        ++res.counters.p3;

        op.apply_adjoint(p1, at);
        grad_seq_transpose(p2, n, nt, gt);
        transport_adjoint(prob.v, p3, n, nt, tt);
        for (std::size_t i = 0; i < dim; ++i) {
            const double un = u[i] - tau * (at[i] + gt[i] + tt[i]);
            ubar[i] = 2.0 * un - u[i];
            u[i] = un;
        }
        ++res.counters.primal;

        checked_last = false;
        if (k % kEnergyWindow == 0) {
            checked_last = true;
            e = prob.energy(u);
            if (!std::isfinite(e))
                throw SolverError("solve_u: non-finite iterate at iteration " + std::to_string(k) +
                                  " (step size too large?)");
            if (e < best_e) {
                best_e = e;
                best_u = u;
            }
            if (window_converged(e, prev_e, params.inner_tol)) {
                res.stats.converged = true;
                break;
            }
            prev_e = e;
        }
    }
    res.stats.iterations = std::min(k, params.inner_max_iters);
    if (!checked_last) {
        e = prob.energy(u);
        if (!std::isfinite(e)) throw SolverError("solve_u: non-finite final iterate");
        if (e < best_e) {
            best_e = e;
            best_u = u;
        }
    }
    u = std::move(best_u);
    res.stats.energy_end = best_e;
    return res;
}

// ---- motion problem ----

FlowProblem FlowProblem::from_sequence(const ImageSequence& u) {
    if (u.n_t < 1) throw DimensionError("FlowProblem: empty sequence");
    FlowProblem fp;
    fp.grads = GradientField(u.n_t - 1, u.n);
    for (std::size_t i = 0; i + 1 < u.n_t; ++i)
        gradient(u.frame(i), u.n, fp.grads.component(i, 0), fp.grads.component(i, 1));
    fp.rhs = flow_rhs(u);
    return fp;
}

FlowProblem FlowProblem::warped(const ImageSequence& u, const FlowSequence& v0) {
    if (v0.count + 1 != u.n_t || v0.n != u.n) throw DimensionError("FlowProblem::warped: shape mismatch");
    FlowProblem fp;
    const std::size_t n = u.n, np = u.pixels();
    fp.grads = GradientField(v0.count, n);
    fp.rhs = ImageSequence(v0.count, n);
    std::vector<double> mx(np), my(np);
    for (std::size_t i = 0; i < v0.count; ++i) {
        auto vx = v0.component(i, 0), vy = v0.component(i, 1);
        for (std::size_t p = 0; p < np; ++p) {
            mx[p] = -vx[p];
            my[p] = -vy[p];
        }
        const auto w = warp(u.frame(i), n, mx, my);
        auto gx = fp.grads.component(i, 0), gy = fp.grads.component(i, 1);
        gradient(w, n, gx, gy);
        auto next = u.frame(i + 1);
        auto b = fp.rhs.frame(i);
        for (std::size_t p = 0; p < np; ++p) b[p] = w[p] - next[p] + gx[p] * vx[p] + gy[p] * vy[p];
    }
    return fp;
}

namespace {

struct VProblem {
    const FlowProblem& fp;
    std::size_t n, np, count;
    double weight;
    std::vector<double> r, g1, g2;

    VProblem(const FlowProblem& f, double w)
        : fp(f), n(f.grads.n), np(f.grads.pixels()), count(f.grads.count), weight(w),
          r(count * np), g1(2 * count * np), g2(2 * count * np) {}

    void apply_that(std::span<const double> v, std::span<double> out) const {
        for (std::size_t i = 0; i < count; ++i) {
            const double* gx = fp.grads.data.data() + 2 * i * np;
            const double* gy = gx + np;
            const double* vx = v.data() + 2 * i * np;
            const double* vy = vx + np;
            double* o = out.data() + i * np;
            for (std::size_t p = 0; p < np; ++p) o[p] = gx[p] * vx[p] + gy[p] * vy[p];
        }
    }
    void apply_that_t(std::span<const double> q, std::span<double> out) const {
        for (std::size_t i = 0; i < count; ++i) {
            const double* gx = fp.grads.data.data() + 2 * i * np;
            const double* gy = gx + np;
            const double* qi = q.data() + i * np;
            double* ox = out.data() + 2 * i * np;
            double* oy = ox + np;
            for (std::size_t p = 0; p < np; ++p) {
                ox[p] = gx[p] * qi[p];
                oy[p] = gy[p] * qi[p];
            }
        }
    }
    // Gradient of flow component c of every field, in GradientField layout.
    void grad_component(std::span<const double> v, int c, std::span<double> out) const {
        for (std::size_t i = 0; i < count; ++i)
            gradient(v.subspan((2 * i + c) * np, np), n, out.subspan(2 * i * np, np),
                     out.subspan((2 * i + 1) * np, np));
    }
    // Adds grad^T of q (GradientField layout) into component c of out.
    void grad_component_t(std::span<const double> q, int c, std::span<double> out) const {
        for (std::size_t i = 0; i < count; ++i)
            gradient_transpose(q.subspan(2 * i * np, np), q.subspan((2 * i + 1) * np, np), n,
                               out.subspan((2 * i + c) * np, np));
    }

    double energy(std::span<const double> v) {
        apply_that(v, r);
        double data = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) data += std::abs(r[i] - fp.rhs.data[i]);
        grad_component(v, 0, g1);
        grad_component(v, 1, g2);
        return data + weight * (tv_seq(g1, np, count) + tv_seq(g2, np, count));
    }

    std::vector<LinearMap> maps() const {
        const std::size_t dim = 2 * count * np;
        const VProblem* self = this;
        auto comp_map = [self, dim](int c) {
            return LinearMap{dim, dim,
                             [self, c](std::span<const double> x, std::span<double> y) { self->grad_component(x, c, y); },
                             [self, c, dim](std::span<const double> y, std::span<double> x) {
                                 std::fill(x.begin(), x.end(), 0.0);
                                 self->grad_component_t(y, c, x);
                             }};
        };
        LinearMap that{dim, count * np,
                       [self](std::span<const double> x, std::span<double> y) { self->apply_that(x, y); },
                       [self](std::span<const double> y, std::span<double> x) { self->apply_that_t(y, x); }};
        return {that, comp_map(0), comp_map(1)};
    }
};

}  // namespace

double v_subproblem_energy(const FlowProblem& prob, const FlowSequence& v, const SolverParams& params) {
    require(params.gamma > 0, "v_subproblem_energy: gamma must be > 0");
    if (v.count != prob.grads.count || v.n != prob.grads.n) throw DimensionError("v_subproblem_energy: shape mismatch");
    VProblem vp(prob, params.beta / params.gamma);
    return vp.energy(v.data);
}

SolveVResult solve_flow(const FlowProblem& fp, const SolverParams& params, const WarmStartV* warm) {
    require(params.beta >= 0, "solve_v: beta must be >= 0");
    require(params.gamma > 0, "solve_v: gamma must be > 0");
    require(params.inner_max_iters >= 1 && params.inner_tol > 0, "solve_v: invalid inner stopping rule");
    require(params.step_rule > 0 && params.step_rule <= 1, "solver: step_rule must be in (0, 1]");
    if (fp.rhs.n_t != fp.grads.count || fp.rhs.n != fp.grads.n) throw DimensionError("FlowProblem: inconsistent");

    VProblem vp(fp, params.beta / params.gamma);
    const std::size_t count = vp.count, np = vp.np, dim = 2 * count * np;

    SolveVResult res;
    res.v = FlowSequence(count, vp.n);
    res.dual.q1.assign(count * np, 0.0);
    res.dual.q2.assign(dim, 0.0);
    res.dual.q3.assign(dim, 0.0);
    if (warm) {
        if (warm->v.data.size() != dim) throw DimensionError("solve_v: warm start v has wrong size");
        res.v = warm->v;
        if (warm->dual.q1.size() == res.dual.q1.size() && warm->dual.q2.size() == dim &&
            warm->dual.q3.size() == dim)
            res.dual = warm->dual;
    }
    if (count == 0) {
        res.stats.converged = true;
        return res;
    }

    const auto maps = vp.maps();
    const double L = operator_norm_estimate(maps, kNormOptions);
    const double step = L > 0 ? params.step_rule / L : 1.0;
    const double sigma = step, tau = step;
    if (sigma * tau * L * L > 1.0 + 1e-12) throw SolverError("solve_v: step sizes violate sigma*tau*L^2 <= 1");
    res.stats.op_norm = L;
    res.stats.step = step;

    auto& v = res.v.data;
    auto& q1 = res.dual.q1;
    auto& q2 = res.dual.q2;
    auto& q3 = res.dual.q3;
    const auto& b = fp.rhs.data;
    const double rad = vp.weight;
    std::vector<double> vbar = v, r(count * np), g(dim), acc(dim), tmp(dim);

    double e = vp.energy(v);
    if (!std::isfinite(e)) throw SolverError("solve_v: non-finite energy at the starting point");
    res.stats.energy_start = e;
    double best_e = e, prev_e = e;
    std::vector<double> best_v = v;

    int k = 0;
    bool checked_last = true;
    for (k = 1; k <= params.inner_max_iters; ++k) {
        vp.apply_that(vbar, r);
        for (std::size_t i = 0; i < q1.size(); ++i) q1[i] = std::clamp(q1[i] + sigma * (r[i] - b[i]), -1.0, 1.0);

        vp.grad_component(vbar, 0, g);
        for (std::size_t i = 0; i < dim; ++i) q2[i] += sigma * g[i];
        for (std::size_t f = 0; f < count; ++f)
            project_l2inf(std::span(q2).subspan(2 * f * np, np), std::span(q2).subspan((2 * f + 1) * np, np), rad);

        vp.grad_component(vbar, 1, g);
        for (std::size_t i = 0; i < dim; ++i) q3[i] += sigma * g[i];
        for (std::size_t f = 0; f < count; ++f)
            project_l2inf(std::span(q3).subspan(2 * f * np, np), std::span(q3).subspan((2 * f + 1) * np, np), rad);

        vp.apply_that_t(q1, acc);
        std::fill(tmp.begin(), tmp.end(), 0.0);
        vp.grad_component_t(q2, 0, tmp);
        vp.grad_component_t(q3, 1, tmp);
        for (std::size_t i = 0; i < dim; ++i) {
            const double vn = v[i] - tau * (acc[i] + tmp[i]);
            vbar[i] = 2.0 * vn - v[i];
            v[i] = vn;
        }

        checked_last = false;
        if (k % kEnergyWindow == 0) {
            checked_last = true;
            e = vp.energy(v);
            if (!std::isfinite(e))
                throw SolverError("solve_v: non-finite iterate at iteration " + std::to_string(k));
            if (e < best_e) {
                best_e = e;
                best_v = v;
            }
            if (window_converged(e, prev_e, params.inner_tol)) {
                res.stats.converged = true;
                break;
            }
            prev_e = e;
        }
    }
    res.stats.iterations = std::min(k, params.inner_max_iters);
    if (!checked_last) {
        e = vp.energy(v);
        if (!std::isfinite(e)) throw SolverError("solve_v: non-finite final iterate");
        if (e < best_e) {
            best_e = e;
            best_v = v;
        }
    }
    v = std::move(best_v);
    res.stats.energy_end = best_e;
    return res;
}

SolveVResult solve_v(const ImageSequence& u_fixed, const SolverParams& params, const WarmStartV* warm) {
    return solve_flow(FlowProblem::from_sequence(u_fixed), params, warm);
}

SolveVResult solve_v_pyramid(const ImageSequence& u, const SolverParams& params, const FlowSequence* initial) {
    if (params.pyramid_levels <= 1) {
        if (!initial) return solve_v(u, params);
        WarmStartV w{*initial, {}};
        return solve_v(u, params, &w);
    }
    require(params.pyramid_scale == 0.5, "solve_v_pyramid: only pyramid_scale 0.5 is supported");

    std::vector<ImageSequence> levels{u};
    while (static_cast<int>(levels.size()) < params.pyramid_levels && levels.back().n >= 8)
        levels.push_back(restrict_sequence(levels.back()));

    FlowSequence v = initial ? *initial : FlowSequence(u.n_t > 0 ? u.n_t - 1 : 0, u.n);
    if (v.count + 1 != u.n_t || v.n != u.n) throw DimensionError("solve_v_pyramid: initial flow shape mismatch");
    for (std::size_t l = 1; l < levels.size(); ++l) v = restrict_flow(v);

    SolveVResult res;
    for (std::size_t l = levels.size(); l-- > 0;) {
        const auto& ul = levels[l];
        if (v.n != ul.n) v = prolong_flow(v, ul.n);
        const FlowProblem fp = FlowProblem::warped(ul, v);
        WarmStartV w{v, {}};
        res = solve_flow(fp, params, &w);
        v = res.v;
    }
    return res;
}

namespace {

template <class FlowStep>
JointResult run_outer(const BlockDiagonalOperator& op, const SinogramStack& m, const SolverParams& params,
                      const ImageSequence* initial_u, const FlowSequence* initial_v, const OuterCallback& cb,
                      FlowStep&& flow_step) {
    params.validate();
    check_data(op, m);
    const std::size_t n = side_of(op.cols()), nt = op.n_t();

    JointResult jr;
    jr.u = initial_u ? *initial_u : ImageSequence(nt, n);
    jr.v = initial_v ? *initial_v : FlowSequence(nt - 1, n);
    if (jr.u.n_t != nt || jr.u.n != n) throw DimensionError("joint_solve: initial u does not match operator");
    check_flow(op, jr.v);

    const auto t0 = std::chrono::steady_clock::now();
    std::optional<WarmStartU> warm_u;
    std::optional<WarmStartV> warm_v;
    for (int l = 1; l <= params.outer_max_iters; ++l) {
        const ImageSequence u_old = jr.u;
        const FlowSequence v_old = jr.v;

        if (!warm_u) warm_u = WarmStartU{jr.u, {}};
        SolveUResult su = solve_u(op, m, jr.v, params, &*warm_u);
        jr.u = su.u;
        warm_u = WarmStartU{su.u, std::move(su.dual)};

        if (!warm_v) warm_v = WarmStartV{jr.v, {}};
        SolveVResult sv = flow_step(jr.u, *warm_v);
        jr.v = sv.v;
        warm_v = WarmStartV{sv.v, std::move(sv.dual)};

        OuterRecord rec;
        rec.iteration = l;
        rec.r_main = diff_norm2(jr.u.data, u_old.data) + diff_norm2(jr.v.data, v_old.data);
        rec.joint_energy = joint_energy(op, m, jr.u, jr.v, params);
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.inner_u_iters = su.stats.iterations;
        rec.inner_v_iters = sv.stats.iterations;
        if (!std::isfinite(rec.r_main) || !std::isfinite(rec.joint_energy))
            throw SolverError("joint_solve: non-finite outer iterate");
        jr.records.push_back(rec);
        jr.energy_trace.push_back(rec.joint_energy);
        jr.outer_residual_trace.push_back(rec.r_main);
        if (cb) cb(rec);

        if (rec.r_main <= params.outer_tol * (norm2(jr.u.data) + norm2(jr.v.data))) {
            jr.converged = true;
            break;
        }
    }
    if (params.clamp_nonnegative)
        for (auto& x : jr.u.data) x = std::max(x, 0.0);
    return jr;
}

}  // namespace

JointResult joint_solve(const BlockDiagonalOperator& op, const SinogramStack& m, const SolverParams& params,
                        const ImageSequence* initial_u, const FlowSequence* initial_v, const OuterCallback& cb) {
    return run_outer(op, m, params, initial_u, initial_v, cb,
                     [&](const ImageSequence& u, const WarmStartV& w) { return solve_v(u, params, &w); });
}

JointResult joint_solve_pyramid(const BlockDiagonalOperator& op, const SinogramStack& m,
                                const SolverParams& params, const OuterCallback& cb) {
    if (params.pyramid_levels <= 1) return joint_solve(op, m, params, nullptr, nullptr, cb);
    return run_outer(op, m, params, nullptr, nullptr, cb, [&](const ImageSequence& u, const WarmStartV& w) {
        return solve_v_pyramid(u, params, &w.v);
    });
}

}  // namespace dyntomo
