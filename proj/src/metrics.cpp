#include "dyntomo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dyntomo/common.hpp"

namespace dyntomo {

namespace {

void check_shapes(const ImageSequence& a, const ImageSequence& b, const char* who) {
    if (a.n_t != b.n_t || a.n != b.n)
        throw DimensionError(std::string(who) + ": shape " + std::to_string(a.n_t) + "x" +
                             std::to_string(a.n) + "x" + std::to_string(a.n) + " differs from " +
                             std::to_string(b.n_t) + "x" + std::to_string(b.n) + "x" +
                             std::to_string(b.n));
}

}  // namespace

double relative_error(const ImageSequence& recon, const ImageSequence& truth, int exponent) {
    check_shapes(recon, truth, "relative_error");
    require(exponent == 1 || exponent == 2, "relative_error: exponent must be 1 or 2");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < truth.data.size(); ++i) {
        const double d = recon.data[i] - truth.data[i];
        if (exponent == 1) {
            num += std::abs(d);
            den += std::abs(truth.data[i]);
        } else {
            num += d * d;
            den += truth.data[i] * truth.data[i];
        }
    }
    if (den == 0.0) throw std::invalid_argument("relative_error: truth has zero norm");
    return exponent == 1 ? num / den : std::sqrt(num / den);
}

double ssim_frame(std::span<const double> a, std::span<const double> b, double c1, double c2) {
    if (a.size() != b.size()) throw DimensionError("ssim_frame: frame sizes differ");
    if (a.empty()) throw DimensionError("ssim_frame: empty frame");
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cov = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    va /= n;
    vb /= n;
    cov /= n;
    return ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

double ssim_sequence(const ImageSequence& recon, const ImageSequence& truth, double c1, double c2) {
    check_shapes(recon, truth, "ssim_sequence");
    if (truth.n_t == 0) throw DimensionError("ssim_sequence: empty sequence");
    double s = 0.0;
    for (std::size_t t = 0; t < truth.n_t; ++t) s += ssim_frame(recon.frame(t), truth.frame(t), c1, c2);
    return s / static_cast<double>(truth.n_t);
}

std::pair<double, double> default_ssim_constants(const ImageSequence& truth) {
    double range = 1.0;
    if (!truth.data.empty()) {
        const auto [lo, hi] = std::minmax_element(truth.data.begin(), truth.data.end());
        if (*hi > *lo) range = *hi - *lo;
    }
    return {std::pow(0.01 * range, 2), std::pow(0.03 * range, 2)};
}

MetricReport evaluate(const ImageSequence& recon, const ImageSequence& truth, std::string label) {
    check_shapes(recon, truth, "evaluate");
    MetricReport r;
    r.label = std::move(label);
    r.rel_l1 = relative_error(recon, truth, 1);
    r.rel_l2 = relative_error(recon, truth, 2);
    std::tie(r.c1, r.c2) = default_ssim_constants(truth);
    double s = 0.0;
    for (std::size_t t = 0; t < truth.n_t; ++t) {
        r.per_frame_ssim.push_back(ssim_frame(recon.frame(t), truth.frame(t), r.c1, r.c2));
        s += r.per_frame_ssim.back();
    }
    r.ssim = s / static_cast<double>(truth.n_t);
    return r;
}

}  // namespace dyntomo
