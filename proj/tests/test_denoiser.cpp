#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"
#include "doctest.h"

using namespace difflab;

namespace {

const Shape kScalar{1, 1, 1};

Sample scalar(double v) {
  Sample s(kScalar);
  s.data[0] = v;
  return s;
}

// One class whose mixture is the reference two-component 1-D blend used by
// the integration oracle below.
DenoiserModel reference_model() {
  GaussianMixture mix;
  mix.components.push_back(GmmComponent{0.3, scalar(0.2), 0.1});
  mix.components.push_back(GmmComponent{0.7, scalar(0.8), 0.3});
  return make_denoiser_model(kScalar, {mix}, {});
}

// Schedule whose first step has alpha_bar_1 = 0.64 so a = 0.8 exactly
// enough for oracle work at 1e-12.
NoiseSchedule abar64_schedule() {
  return build_schedule(2, 0.36, 0.36, 1.0, HFormula::LogSnrDiff);
}

// Marginal density of x_t for a Gaussian-mixture data law: each component
// becomes N(a*m_k, abar*s_k^2 + 1 - abar). Written independently of the
// production responsibility algebra.
double marginal_log_density(const GaussianMixture& mix, double abar,
                            double x) {
  const double a = std::sqrt(abar);
  double acc = 0.0;
  for (const GmmComponent& c : mix.components) {
    const double v = abar * c.std * c.std + (1.0 - abar);
    acc += c.weight * std::exp(-(x - a * c.mean.data[0]) *
                               (x - a * c.mean.data[0]) / (2.0 * v)) /
           std::sqrt(2.0 * 3.14159265358979323846 * v);
  }
  return std::log(acc);
}

}  // namespace

TEST_CASE("mixture validation rejects malformed inputs") {
  GaussianMixture bad_weight;
  bad_weight.components.push_back(GmmComponent{0.4, scalar(0.0), 0.1});
  CHECK_THROWS(validate_mixture(bad_weight));

  GaussianMixture bad_std;
  bad_std.components.push_back(GmmComponent{1.0, scalar(0.0), 0.0});
  CHECK_THROWS(validate_mixture(bad_std));

  GaussianMixture empty;
  CHECK_THROWS(validate_mixture(empty));

  GaussianMixture wrong_shape;
  wrong_shape.components.push_back(GmmComponent{1.0, Sample(Shape{2, 1, 1}), 0.1});
  CHECK_THROWS(make_denoiser_model(kScalar, {wrong_shape}, {}));
}

TEST_CASE("posterior mean matches the numerical-integration oracle") {
  // E[x0 | x_t = 0.5] for the reference mixture at abar = 0.64, computed by
  // adaptive quadrature of x * p(x) * N(x_t; a x, 1-abar): frozen below.
  const DenoiserModel model = reference_model();
  const NoiseSchedule sched = abar64_schedule();
  const Sample post =
      gmm_posterior_mean(model.class_mixtures[0], scalar(0.5), 1, sched);
  CHECK(post.data[0] == doctest::Approx(0.61343849510333526).epsilon(1e-9));

  const Sample eps =
      predict_noise(model, scalar(0.5), 1, Condition::cls(0, 1.0), sched);
  CHECK(eps.data[0] == doctest::Approx(0.015415339862219584).epsilon(1e-8));
}

TEST_CASE("single-component posterior follows the conjugate closed form") {
  GaussianMixture mix;
  mix.components.push_back(GmmComponent{1.0, scalar(0.35), 0.2});
  const DenoiserModel model = make_denoiser_model(kScalar, {mix}, {});
  const NoiseSchedule sched = abar64_schedule();
  const double abar = sched.alpha_bar[1];
  const double a = std::sqrt(abar);
  const double x = 0.9;
  const double v = abar * 0.04 + (1.0 - abar);
  const double want = 0.35 + (a * 0.04 / v) * (x - a * 0.35);
  const Sample post =
      gmm_posterior_mean(model.class_mixtures[0], scalar(x), 1, sched);
  CHECK(post.data[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("noise prediction equals the scaled score of the marginal") {
  // Tweedie identity probe: eps_hat(x) = -sqrt(1-abar) * d/dx log p_t(x),
  // with the marginal log-density evaluated by an independent formula and
  // differentiated numerically.
  const DenoiserModel model = reference_model();
  const NoiseSchedule sched = abar64_schedule();
  const double abar = sched.alpha_bar[1];
  for (const double x : {-0.3, 0.1, 0.45, 0.8, 1.7}) {
    const double fd_step = 1e-6;
    const double score =
        (marginal_log_density(model.class_mixtures[0], abar, x + fd_step) -
         marginal_log_density(model.class_mixtures[0], abar, x - fd_step)) /
        (2.0 * fd_step);
    const Sample eps =
        predict_noise(model, scalar(x), 1, Condition::cls(0, 1.0), sched);
    CHECK(eps.data[0] ==
          doctest::Approx(-std::sqrt(1.0 - abar) * score).epsilon(1e-6));
  }
}

TEST_CASE("guidance collapses exactly at the endpoint scales") {
  GaussianMixture class0, class1;
  class0.components.push_back(GmmComponent{1.0, scalar(0.2), 0.15});
  class1.components.push_back(GmmComponent{1.0, scalar(0.7), 0.25});
  const DenoiserModel model =
      make_denoiser_model(kScalar, {class0, class1}, {0.5, 0.5});
  const NoiseSchedule sched = abar64_schedule();
  const Sample x = scalar(0.4);

  const Sample uncond = predict_noise(model, x, 1, Condition::null(), sched);
  const Sample cond =
      predict_noise(model, x, 1, Condition::cls(1, 1.0), sched);

  const Sample g0 = guided_noise(model, x, 1, Condition::cls(1, 0.0), sched);
  const Sample g1 = guided_noise(model, x, 1, Condition::cls(1, 1.0), sched);
  CHECK(g0.data[0] == uncond.data[0]);  // bitwise short-circuit
  CHECK(g1.data[0] == cond.data[0]);

  for (const double s : {0.25, 1.5, 3.0}) {
    const Sample g = guided_noise(model, x, 1, Condition::cls(1, s), sched);
    const double want = uncond.data[0] + s * (cond.data[0] - uncond.data[0]);
    CHECK(g.data[0] == doctest::Approx(want).epsilon(1e-15));
  }

  CHECK_THROWS(guided_noise(model, x, 1, Condition{ConditionKind::Null, 0, 0.5},
                            sched));
}

TEST_CASE("prior mixture blends class mixtures by prior weight") {
  GaussianMixture class0, class1;
  class0.components.push_back(GmmComponent{1.0, scalar(0.2), 0.15});
  class1.components.push_back(GmmComponent{0.5, scalar(0.6), 0.25});
  class1.components.push_back(GmmComponent{0.5, scalar(0.9), 0.25});
  const DenoiserModel model =
      make_denoiser_model(kScalar, {class0, class1}, {0.25, 0.75});
  REQUIRE(model.prior_mixture.components.size() == 3);
  CHECK(model.prior_mixture.components[0].weight == doctest::Approx(0.25));
  CHECK(model.prior_mixture.components[1].weight == doctest::Approx(0.375));
  CHECK(model.prior_mixture.components[2].weight == doctest::Approx(0.375));

  // default priors are uniform
  const DenoiserModel uniform = make_denoiser_model(kScalar, {class0, class1}, {});
  CHECK(uniform.class_priors[0] == doctest::Approx(0.5));
  CHECK(uniform.class_priors[1] == doctest::Approx(0.5));
}

TEST_CASE("evaluation counters account for guidance short-circuits") {
  const DenoiserModel model = reference_model();
  const NoiseSchedule sched = abar64_schedule();
  const Sample x = scalar(0.4);

  reset_denoiser_eval_counts();
  (void)predict_noise(model, x, 1, Condition::cls(0, 1.0), sched);
  CHECK(denoiser_eval_counts().conditional == 1);
  CHECK(denoiser_eval_counts().unconditional == 0);

  (void)predict_noise(model, x, 1, Condition::null(), sched);
  CHECK(denoiser_eval_counts().conditional == 1);
  CHECK(denoiser_eval_counts().unconditional == 1);

  reset_denoiser_eval_counts();
  (void)guided_noise(model, x, 1, Condition::cls(0, 0.5), sched);
  CHECK(denoiser_eval_counts().conditional == 1);
  CHECK(denoiser_eval_counts().unconditional == 1);

  reset_denoiser_eval_counts();
  (void)guided_noise(model, x, 1, Condition::cls(0, 1.0), sched);
  CHECK(denoiser_eval_counts().conditional == 1);
  CHECK(denoiser_eval_counts().unconditional == 0);

  reset_denoiser_eval_counts();
  (void)guided_noise(model, x, 1, Condition::cls(0, 0.0), sched);
  CHECK(denoiser_eval_counts().conditional == 0);
  CHECK(denoiser_eval_counts().unconditional == 1);
}

TEST_CASE("bad class ids and steps are rejected") {
  const DenoiserModel model = reference_model();
  const NoiseSchedule sched = abar64_schedule();
  CHECK_THROWS(predict_noise(model, scalar(0.4), 1, Condition::cls(3, 1.0), sched));
  CHECK_THROWS(predict_noise(model, scalar(0.4), 0, Condition::cls(0, 1.0), sched));
  CHECK_THROWS(predict_noise(model, scalar(0.4), 3, Condition::cls(0, 1.0), sched));
}
