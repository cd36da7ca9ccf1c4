#pragma once

#include <span>
#include <string>
#include <vector>

#include "dyntomo/sequences.hpp"

namespace dyntomo {

struct MetricReport {
    std::string label;
    double rel_l1 = 0.0;
    double rel_l2 = 0.0;
    double ssim = 0.0;
    std::vector<double> per_frame_ssim;
    double c1 = 0.0;
    double c2 = 0.0;
};

/// ||recon - truth||_e / ||truth||_e over the whole space-time stack, e in {1, 2}.
double relative_error(const ImageSequence& recon, const ImageSequence& truth, int exponent);

/// Whole-frame SSIM: global means, population (1/N) variances and covariance.
double ssim_frame(std::span<const double> a, std::span<const double> b, double c1, double c2);

/// Mean of ssim_frame over all frames.
double ssim_sequence(const ImageSequence& recon, const ImageSequence& truth, double c1, double c2);

/// c1 = (0.01 L)^2, c2 = (0.03 L)^2 with L the dynamic range of `truth`
/// (L = 1 when truth is constant).
std::pair<double, double> default_ssim_constants(const ImageSequence& truth);

MetricReport evaluate(const ImageSequence& recon, const ImageSequence& truth, std::string label = "");

}  // namespace dyntomo
