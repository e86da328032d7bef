#pragma once

#include <vector>

#include "difflab/sample.hpp"

namespace difflab {

// Peak signal-to-noise ratio for unit-range images: 10*log10(1 / MSE).
// Identical inputs yield +infinity.
double psnr(const Sample& a, const Sample& b);

// Mean SSIM with an 11x11 Gaussian window (std 1.5, K1 = 0.01, K2 = 0.03,
// dynamic range 1), stride-1 valid windows, channels averaged. Images whose
// spatial extent is smaller than the window fall back to a single uniform
// window spanning the whole image.
double ssim(const Sample& a, const Sample& b);

// Fraction of successful attacks; rejects an empty list.
double attack_success_rate(const std::vector<bool>& successes);

// Aggregate over one run. mean_* average across all images.
struct MetricReport {
  int images = 0;
  int successes = 0;
  double asr = 0.0;
  double clean_error = 0.0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_linf = 0.0;
  double mean_l2 = 0.0;
};

MetricReport make_metric_report(const std::vector<bool>& successes,
                                const std::vector<bool>& clean_correct,
                                const std::vector<double>& psnrs,
                                const std::vector<double>& ssims,
                                const std::vector<double>& linfs,
                                const std::vector<double>& l2s);

}  // namespace difflab
