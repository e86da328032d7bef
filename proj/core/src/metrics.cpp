#include "difflab/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace difflab {

double psnr(const Sample& a, const Sample& b) {
  require_same_shape(a, b, "psnr");
  if (a.size() == 0) throw std::invalid_argument("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWindow = 11;
constexpr double kWindowStd = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;  // (K2 * L)^2

const std::vector<double>& gaussian_window() {
  static const std::vector<double> w = [] {
    std::vector<double> g(kWindow);
    const double c = (kWindow - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
      g[i] = std::exp(-(i - c) * (i - c) / (2.0 * kWindowStd * kWindowStd));
      sum += g[i];
    }
    for (double& v : g) v /= sum;
    return g;
  }();
  return w;
}

double ssim_value(double mu_a, double mu_b, double var_a, double var_b,
                  double cov) {
  var_a = std::max(var_a, 0.0);
  var_b = std::max(var_b, 0.0);
  return ((2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2)) /
         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

}  // namespace

double ssim(const Sample& a, const Sample& b) {
  require_same_shape(a, b, "ssim");
  const int h = a.shape.height, w = a.shape.width, c = a.shape.channels;
  if (h < 1 || w < 1 || c < 1) throw std::invalid_argument("ssim: empty image");

  auto at = [&](const Sample& s, int i, int j, int ch) {
    return s.data[(static_cast<std::size_t>(i) * w + j) * c + ch];
  };

  double channel_sum = 0.0;
  for (int ch = 0; ch < c; ++ch) {
    if (h < kWindow || w < kWindow) {
      // Single uniform window over the whole image.
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      const double n = static_cast<double>(h) * w;
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const double va = at(a, i, j, ch), vb = at(b, i, j, ch);
          sa += va; sb += vb; saa += va * va; sbb += vb * vb; sab += va * vb;
        }
      }
      const double mu_a = sa / n, mu_b = sb / n;
      channel_sum += ssim_value(mu_a, mu_b, saa / n - mu_a * mu_a,
                                sbb / n - mu_b * mu_b, sab / n - mu_a * mu_b);
      continue;
    }

    const std::vector<double>& g = gaussian_window();
    double win_sum = 0.0;
    int windows = 0;
    for (int i0 = 0; i0 + kWindow <= h; ++i0) {
      for (int j0 = 0; j0 + kWindow <= w; ++j0) {
        double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < kWindow; ++i) {
          for (int j = 0; j < kWindow; ++j) {
            const double wt = g[i] * g[j];
            const double va = at(a, i0 + i, j0 + j, ch);
            const double vb = at(b, i0 + i, j0 + j, ch);
            mu_a += wt * va; mu_b += wt * vb;
            saa += wt * va * va; sbb += wt * vb * vb; sab += wt * va * vb;
          }
        }
        win_sum += ssim_value(mu_a, mu_b, saa - mu_a * mu_a, sbb - mu_b * mu_b,
                              sab - mu_a * mu_b);
        ++windows;
      }
    }
    channel_sum += win_sum / windows;
  }
  return channel_sum / c;
}

double attack_success_rate(const std::vector<bool>& successes) {
  if (successes.empty())
    throw std::invalid_argument("attack_success_rate: empty result list");
  int count = 0;
  for (bool s : successes) count += s ? 1 : 0;
  return static_cast<double>(count) / static_cast<double>(successes.size());
}

MetricReport make_metric_report(const std::vector<bool>& successes,
                                const std::vector<bool>& clean_correct,
                                const std::vector<double>& psnrs,
                                const std::vector<double>& ssims,
                                const std::vector<double>& linfs,
                                const std::vector<double>& l2s) {
  const std::size_t n = successes.size();
  if (n == 0 || clean_correct.size() != n || psnrs.size() != n ||
      ssims.size() != n || linfs.size() != n || l2s.size() != n)
    throw std::invalid_argument("make_metric_report: length mismatch");
  MetricReport r;
  r.images = static_cast<int>(n);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.successes += successes[i] ? 1 : 0;
    mean += clean_correct[i] ? 0.0 : 1.0;
  }
  r.asr = static_cast<double>(r.successes) / static_cast<double>(n);
  r.clean_error = mean / static_cast<double>(n);
  auto avg = [n](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(n);
  };
  r.mean_psnr = avg(psnrs);
  r.mean_ssim = avg(ssims);
  r.mean_linf = avg(linfs);
  r.mean_l2 = avg(l2s);
  return r;
}

}  // namespace difflab
