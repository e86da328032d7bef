#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "difflab/metrics.hpp"
#include "doctest.h"

using namespace difflab;

namespace {

// Self-contained splitmix64 stream, the same generator family used to
// produce the frozen fixture values below with an out-of-repo reference
// implementation of both metrics.
struct SplitMix {
  std::uint64_t s;
  double unit() {
    s += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = s;
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }
};

Sample constant(Shape shape, double v) {
  Sample s(shape);
  for (double& x : s.data) x = v;
  return s;
}

// 16x16 fixture pair: A uniform noise, B a clipped small perturbation of A.
void fixture_pair(Sample& a, Sample& b) {
  const Shape shape{16, 16, 1};
  a = Sample(shape);
  b = Sample(shape);
  SplitMix rng{42};
  for (double& v : a.data) v = rng.unit();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double bumped = a.data[i] + 0.1 * (rng.unit() - 0.5);
    b.data[i] = bumped < 0.0 ? 0.0 : (bumped > 1.0 ? 1.0 : bumped);
  }
}

}  // namespace

TEST_CASE("psnr on a known mean squared error") {
  const Shape shape{4, 4, 1};
  const Sample a = constant(shape, 0.5);
  const Sample b = constant(shape, 0.6);
  // mse = 0.01 exactly -> 10 * log10(100) = 20
  CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(std::isinf(psnr(a, a)));
  CHECK(psnr(a, a) > 0.0);
  const Sample far = constant(shape, 1.5);
  CHECK(psnr(a, far) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS(psnr(a, constant(Shape{2, 8, 1}, 0.5)));
}

TEST_CASE("identical images have unit structural similarity") {
  Sample a, b;
  fixture_pair(a, b);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("structural similarity matches the frozen reference on 16x16 noise") {
  Sample a, b;
  fixture_pair(a, b);
  // spot-check the generator contract first so a drifted fixture fails loudly
  CHECK(a.data[0] == doctest::Approx(0.74156487877182331).epsilon(1e-16));
  CHECK(a.data[255] == doctest::Approx(0.4171888475751131).epsilon(1e-16));
  CHECK(b.data[0] == doctest::Approx(0.77365559450236399).epsilon(1e-16));
  CHECK(ssim(a, b) == doctest::Approx(0.99488620910655634).epsilon(1e-10));
  CHECK(ssim(b, a) == doctest::Approx(ssim(a, b)).epsilon(1e-15));
}

TEST_CASE("constant plates compare through the stabilizing constants") {
  // flat 0.3 vs flat 0.5 at any size: variances vanish, so the score is
  // (2*m1*m2 + c1) * c2 / ((m1^2 + m2^2 + c1) * c2) with c1 = 1e-4
  const double m1 = 0.3, m2 = 0.5, c1 = 1e-4;
  const double want = (2 * m1 * m2 + c1) / (m1 * m1 + m2 * m2 + c1);
  for (const Shape shape : {Shape{16, 16, 1}, Shape{4, 4, 1}}) {
    const Sample a = constant(shape, m1);
    const Sample b = constant(shape, m2);
    CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(want == doctest::Approx(0.88238753307850626).epsilon(1e-15));
}

TEST_CASE("small images fall back to one global window") {
  // 8x8 is narrower than the 11-tap window: a single uniform window means
  // plain means/variances over all pixels reproduce the score.
  const Shape shape{8, 8, 1};
  Sample a(shape), b(shape);
  SplitMix rng{7};
  for (double& v : a.data) v = rng.unit();
  for (double& v : b.data) v = rng.unit();

  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a.data[i];
    mb += b.data[i];
  }
  ma /= n;
  mb /= n;
  double va = 0, vb = 0, cov = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    va += (a.data[i] - ma) * (a.data[i] - ma);
    vb += (b.data[i] - mb) * (b.data[i] - mb);
    cov += (a.data[i] - ma) * (b.data[i] - mb);
  }
  va /= n;
  vb /= n;
  cov /= n;
  const double c1 = 1e-4, c2 = 9e-4;
  const double want = (2 * ma * mb + c1) * (2 * cov + c2) /
                      ((ma * ma + mb * mb + c1) * (va + vb + c2));
  CHECK(ssim(a, b) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("channels are averaged independently") {
  // a two-channel image whose channels are the two constant plates scores
  // the mean of the per-channel scores
  const Shape mono{6, 6, 1};
  const Shape duo{6, 6, 2};
  Sample a(duo), b(duo);
  for (std::size_t i = 0; i < a.size(); i += 2) {
    a.data[i] = 0.3;
    a.data[i + 1] = 0.4;
    b.data[i] = 0.5;
    b.data[i + 1] = 0.4;
  }
  const double per0 = ssim(constant(mono, 0.3), constant(mono, 0.5));
  const double per1 = 1.0;
  CHECK(ssim(a, b) == doctest::Approx(0.5 * (per0 + per1)).epsilon(1e-12));
}

TEST_CASE("similarity drops as images decouple") {
  Sample a, b;
  fixture_pair(a, b);
  Sample far = b;
  SplitMix rng{99};
  for (double& v : far.data) v = rng.unit();
  CHECK(ssim(a, far) < ssim(a, b));
  CHECK(ssim(a, far) < 0.2);
}

TEST_CASE("success rate is a plain fraction") {
  CHECK(attack_success_rate({true, false, true, true}) == doctest::Approx(0.75));
  CHECK(attack_success_rate({false}) == 0.0);
  CHECK(attack_success_rate({true}) == 1.0);
  CHECK_THROWS(attack_success_rate({}));
}

TEST_CASE("report aggregates means over every image") {
  const std::vector<bool> succ{true, false, true};
  const std::vector<bool> clean{true, true, false};
  const std::vector<double> psnrs{20.0, 30.0, 10.0};
  const std::vector<double> ssims{0.9, 0.8, 0.7};
  const std::vector<double> linfs{0.1, 0.05, 0.1};
  const std::vector<double> l2s{1.0, 2.0, 3.0};
  const MetricReport r = make_metric_report(succ, clean, psnrs, ssims, linfs, l2s);
  CHECK(r.images == 3);
  CHECK(r.successes == 2);
  CHECK(r.asr == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(r.clean_error == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(r.mean_psnr == doctest::Approx(20.0).epsilon(1e-15));
  CHECK(r.mean_ssim == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(r.mean_linf == doctest::Approx(0.25 / 3.0).epsilon(1e-12));
  CHECK(r.mean_l2 == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS(make_metric_report({}, {}, {}, {}, {}, {}));
  CHECK_THROWS(make_metric_report(succ, clean, {20.0}, ssims, linfs, l2s));
}
