#include "dyntomo/variational.hpp"

#include <algorithm>
#include <cmath>

#include "dyntomo/common.hpp"

namespace dyntomo {

void gradient(std::span<const double> f, std::size_t n, std::span<double> gx, std::span<double> gy) {
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t row = r * n;
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t p = row + c;
            gx[p] = c + 1 < n ? f[p + 1] - f[p] : 0.0;
            gy[p] = r + 1 < n ? f[p + n] - f[p] : 0.0;
        }
    }
}

void gradient_transpose(std::span<const double> gx, std::span<const double> gy, std::size_t n,
                        std::span<double> out) {
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t row = r * n;
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t p = row + c;
            double acc = 0.0;
            if (c + 1 < n) acc -= gx[p];
            if (c > 0) acc += gx[p - 1];
            if (r + 1 < n) acc -= gy[p];
            if (r > 0) acc += gy[p - n];
            out[p] = acc;
        }
    }
}

double tv_norm(std::span<const double> gx, std::span<const double> gy) {
    double s = 0.0;
    for (std::size_t p = 0; p < gx.size(); ++p) s += std::hypot(gx[p], gy[p]);
    return s;
}

GradientField gradient(const ImageSequence& u) {
    GradientField g(u.n_t, u.n);
    for (std::size_t t = 0; t < u.n_t; ++t) gradient(u.frame(t), u.n, g.component(t, 0), g.component(t, 1));
    return g;
}

ImageSequence divergence_adjoint(const GradientField& p) {
    ImageSequence d(p.count, p.n);
    for (std::size_t t = 0; t < p.count; ++t) {
        auto f = d.frame(t);
        gradient_transpose(p.component(t, 0), p.component(t, 1), p.n, f);
        for (auto& x : f) x = -x;
    }
    return d;
}

double tv_norm(const GradientField& p) {
    double s = 0.0;
    for (std::size_t t = 0; t < p.count; ++t) s += tv_norm(p.component(t, 0), p.component(t, 1));
    return s;
}

void transport_apply(std::span<const double> u, std::span<const double> v, std::size_t n,
                     std::size_t n_t, std::span<double> r) {
    const std::size_t np = n * n;
    for (std::size_t i = 0; i + 1 < n_t; ++i) {
        const double* ui = u.data() + i * np;
        const double* un = ui + np;
        const double* vx = v.data() + 2 * i * np;
        const double* vy = vx + np;
        double* ri = r.data() + i * np;
        for (std::size_t row = 0; row < n; ++row) {
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t p = row * n + c;
                const double gx = c + 1 < n ? ui[p + 1] - ui[p] : 0.0;
                const double gy = row + 1 < n ? ui[p + n] - ui[p] : 0.0;
                ri[p] = un[p] - ui[p] + vx[p] * gx + vy[p] * gy;
            }
        }
    }
}

void transport_adjoint(std::span<const double> v, std::span<const double> r, std::size_t n,
                       std::size_t n_t, std::span<double> u) {
    const std::size_t np = n * n;
    std::fill(u.begin(), u.end(), 0.0);
    for (std::size_t i = 0; i + 1 < n_t; ++i) {
        const double* vx = v.data() + 2 * i * np;
        const double* vy = vx + np;
        const double* ri = r.data() + i * np;
        double* ui = u.data() + i * np;
        double* un = ui + np;
        for (std::size_t row = 0; row < n; ++row) {
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t p = row * n + c;
                const double w = ri[p];
                un[p] += w;
                double acc = -w;
                // grad^T applied to (vx * r, vy * r)
                if (c + 1 < n) acc -= vx[p] * w;
                if (c > 0) acc += vx[p - 1] * ri[p - 1];
                if (row + 1 < n) acc -= vy[p] * w;
                if (row > 0) acc += vy[p - n] * ri[p - n];
                ui[p] += acc;
            }
        }
    }
}

namespace {

void check_pair(const ImageSequence& u, const FlowSequence& v, const char* who) {
    if (u.n_t < 1 || v.count + 1 != u.n_t || v.n != u.n)
        throw DimensionError(std::string(who) + ": image sequence " + std::to_string(u.n_t) + "x" +
                             std::to_string(u.n) + " incompatible with flow " +
                             std::to_string(v.count) + "x" + std::to_string(v.n));
}

}  // namespace

ImageSequence transport_apply(const ImageSequence& u, const FlowSequence& v) {
    check_pair(u, v, "transport_apply");
    ImageSequence r(u.n_t - 1, u.n);
    transport_apply(u.data, v.data, u.n, u.n_t, r.data);
    return r;
}

ImageSequence transport_adjoint(const FlowSequence& v, const ImageSequence& r) {
    if (r.n_t != v.count || r.n != v.n) throw DimensionError("transport_adjoint: shape mismatch");
    ImageSequence u(v.count + 1, v.n);
    transport_adjoint(v.data, r.data, v.n, u.n_t, u.data);
    return u;
}

ImageSequence flow_operator_apply(const ImageSequence& u, const FlowSequence& v) {
    check_pair(u, v, "flow_operator_apply");
    const std::size_t n = u.n, np = u.pixels();
    ImageSequence out(v.count, n);
    std::vector<double> gx(np), gy(np);
    for (std::size_t i = 0; i < v.count; ++i) {
        gradient(u.frame(i), n, gx, gy);
        auto vx = v.component(i, 0), vy = v.component(i, 1);
        auto o = out.frame(i);
        for (std::size_t p = 0; p < np; ++p) o[p] = gx[p] * vx[p] + gy[p] * vy[p];
    }
    return out;
}

FlowSequence flow_operator_adjoint(const ImageSequence& u, const ImageSequence& r) {
    if (u.n_t < 1 || r.n_t + 1 != u.n_t || r.n != u.n)
        throw DimensionError("flow_operator_adjoint: shape mismatch");
    const std::size_t n = u.n, np = u.pixels();
    FlowSequence out(r.n_t, n);
    std::vector<double> gx(np), gy(np);
    for (std::size_t i = 0; i < r.n_t; ++i) {
        gradient(u.frame(i), n, gx, gy);
        auto ri = r.frame(i);
        auto ox = out.component(i, 0), oy = out.component(i, 1);
        for (std::size_t p = 0; p < np; ++p) {
            ox[p] = gx[p] * ri[p];
            oy[p] = gy[p] * ri[p];
        }
    }
    return out;
}

ImageSequence flow_rhs(const ImageSequence& u) {
    if (u.n_t < 1) throw DimensionError("flow_rhs: empty sequence");
    ImageSequence b(u.n_t - 1, u.n);
    for (std::size_t i = 0; i + 1 < u.n_t; ++i) {
        auto a = u.frame(i), c = u.frame(i + 1);
        auto o = b.frame(i);
        for (std::size_t p = 0; p < o.size(); ++p) o[p] = a[p] - c[p];
    }
    return b;
}

std::vector<double> warp(std::span<const double> f, std::size_t n, std::span<const double> vx,
                         std::span<const double> vy) {
    std::vector<double> out(n * n);
    const double hi = static_cast<double>(n - 1);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t p = r * n + c;
            const double x = std::clamp(static_cast<double>(c) + vx[p], 0.0, hi);
            const double y = std::clamp(static_cast<double>(r) + vy[p], 0.0, hi);
            const auto x0 = static_cast<std::size_t>(std::floor(x));
            const auto y0 = static_cast<std::size_t>(std::floor(y));
            const std::size_t x1 = std::min(x0 + 1, n - 1), y1 = std::min(y0 + 1, n - 1);
            const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
            const double top = (1 - fx) * f[y0 * n + x0] + fx * f[y0 * n + x1];
            const double bot = (1 - fx) * f[y1 * n + x0] + fx * f[y1 * n + x1];
            out[p] = (1 - fy) * top + fy * bot;
        }
    }
    return out;
}

std::vector<double> restrict_frame(std::span<const double> f, std::size_t n) {
    const std::size_t nc = (n + 1) / 2;
    std::vector<double> out(nc * nc);
    auto at = [&](std::size_t r, std::size_t c) { return f[std::min(r, n - 1) * n + std::min(c, n - 1)]; };
    for (std::size_t r = 0; r < nc; ++r)
        for (std::size_t c = 0; c < nc; ++c)
            out[r * nc + c] = 0.25 * (at(2 * r, 2 * c) + at(2 * r, 2 * c + 1) +
                                      at(2 * r + 1, 2 * c) + at(2 * r + 1, 2 * c + 1));
    return out;
}

std::vector<double> prolong_frame(std::span<const double> f, std::size_t nc, std::size_t nf) {
    std::vector<double> out(nf * nf);
    const double hi = static_cast<double>(nc - 1);
    for (std::size_t r = 0; r < nf; ++r) {
        const double y = std::clamp((static_cast<double>(r) + 0.5) * 0.5 - 0.5, 0.0, hi);
        const auto y0 = static_cast<std::size_t>(std::floor(y));
        const std::size_t y1 = std::min(y0 + 1, nc - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t c = 0; c < nf; ++c) {
            const double x = std::clamp((static_cast<double>(c) + 0.5) * 0.5 - 0.5, 0.0, hi);
            const auto x0 = static_cast<std::size_t>(std::floor(x));
            const std::size_t x1 = std::min(x0 + 1, nc - 1);
            const double fx = x - static_cast<double>(x0);
            const double top = (1 - fx) * f[y0 * nc + x0] + fx * f[y0 * nc + x1];
            const double bot = (1 - fx) * f[y1 * nc + x0] + fx * f[y1 * nc + x1];
            out[r * nf + c] = (1 - fy) * top + fy * bot;
        }
    }
    return out;
}

ImageSequence restrict_sequence(const ImageSequence& u) {
    ImageSequence out(u.n_t, (u.n + 1) / 2);
    for (std::size_t t = 0; t < u.n_t; ++t) {
        const auto c = restrict_frame(u.frame(t), u.n);
        std::copy(c.begin(), c.end(), out.frame(t).begin());
    }
    return out;
}

FlowSequence restrict_flow(const FlowSequence& v) {
    FlowSequence out(v.count, (v.n + 1) / 2);
    for (std::size_t i = 0; i < v.count; ++i)
        for (int k = 0; k < 2; ++k) {
            auto c = restrict_frame(v.component(i, k), v.n);
            auto dst = out.component(i, k);
            for (std::size_t p = 0; p < c.size(); ++p) dst[p] = 0.5 * c[p];
        }
    return out;
}

FlowSequence prolong_flow(const FlowSequence& v, std::size_t n_fine) {
    FlowSequence out(v.count, n_fine);
    for (std::size_t i = 0; i < v.count; ++i)
        for (int k = 0; k < 2; ++k) {
            auto f = prolong_frame(v.component(i, k), v.n, n_fine);
            auto dst = out.component(i, k);
            for (std::size_t p = 0; p < f.size(); ++p) dst[p] = 2.0 * f[p];
        }
    return out;
}

}  // namespace dyntomo
