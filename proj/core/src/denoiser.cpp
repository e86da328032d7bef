#include "difflab/denoiser.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace difflab {

namespace {

std::atomic<std::uint64_t> g_cond_evals{0};
std::atomic<std::uint64_t> g_uncond_evals{0};

}  // namespace

DenoiserEvalCounts denoiser_eval_counts() {
  return DenoiserEvalCounts{g_cond_evals.load(), g_uncond_evals.load()};
}

void reset_denoiser_eval_counts() {
  g_cond_evals.store(0);
  g_uncond_evals.store(0);
}

void validate_mixture(const GaussianMixture& mixture) {
  if (mixture.components.empty())
    throw std::invalid_argument("mixture: must have at least one component");
  const Shape shape = mixture.components.front().mean.shape;
  double wsum = 0.0;
  for (const GmmComponent& c : mixture.components) {
    if (!(c.weight > 0.0))
      throw std::invalid_argument("mixture.weight: must be > 0");
    if (!(c.std > 0.0)) throw std::invalid_argument("mixture.std: must be > 0");
    if (!(c.mean.shape == shape) || c.mean.size() != shape.size())
      throw std::invalid_argument("mixture.mean: shape mismatch across components");
    wsum += c.weight;
  }
  if (std::fabs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture.weight: weights must sum to 1");
}

DenoiserModel make_denoiser_model(Shape shape,
                                  std::vector<GaussianMixture> class_mixtures,
                                  std::vector<double> class_priors) {
  if (class_mixtures.empty())
    throw std::invalid_argument("model: needs at least one class mixture");
  if (class_priors.empty())
    class_priors.assign(class_mixtures.size(),
                        1.0 / static_cast<double>(class_mixtures.size()));
  if (class_priors.size() != class_mixtures.size())
    throw std::invalid_argument("model.class_priors: length mismatch");
  double psum = 0.0;
  for (double p : class_priors) {
    if (!(p > 0.0)) throw std::invalid_argument("model.class_priors: must be > 0");
    psum += p;
  }
  if (std::fabs(psum - 1.0) > 1e-12)
    throw std::invalid_argument("model.class_priors: must sum to 1");

  DenoiserModel model;
  model.shape = shape;
  // Prior mixture = prior-weighted union of the class mixtures.
  for (std::size_t k = 0; k < class_mixtures.size(); ++k) {
    validate_mixture(class_mixtures[k]);
    for (const GmmComponent& c : class_mixtures[k].components) {
      if (!(c.mean.shape == shape))
        throw std::invalid_argument("model: mixture shape differs from model shape");
      GmmComponent pc = c;
      pc.weight = c.weight * class_priors[k];
      model.prior_mixture.components.push_back(std::move(pc));
    }
  }
  model.class_mixtures = std::move(class_mixtures);
  model.class_priors = std::move(class_priors);
  validate_mixture(model.prior_mixture);
  return model;
}

Sample gmm_posterior_mean(const GaussianMixture& mixture, const Sample& x_t,
                          int t, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T)
    throw std::out_of_range("gmm_posterior_mean: step t out of range [1, T]");
  const std::size_t K = mixture.components.size();
  const double abar = schedule.alpha_bar[t];
  const double a = std::sqrt(abar);
  const double b2 = 1.0 - abar;
  const double d = static_cast<double>(x_t.size());

  // Log responsibilities of the diffused mixture, stabilized by max-shift.
  std::vector<double> logr(K);
  double logmax = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    const GmmComponent& c = mixture.components[k];
    if (c.mean.size() != x_t.size())
      throw std::invalid_argument("gmm_posterior_mean: x_t shape mismatch");
    const double v = abar * c.std * c.std + b2;
    double sq = 0.0;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      const double diff = x_t.data[i] - a * c.mean.data[i];
      sq += diff * diff;
    }
    logr[k] = std::log(c.weight) -
              0.5 * d * std::log(2.0 * std::numbers::pi * v) - 0.5 * sq / v;
    logmax = std::max(logmax, logr[k]);
  }
  if (!std::isfinite(logmax))
    throw std::runtime_error("gmm_posterior_mean: responsibilities failed to normalize");
  double Z = 0.0;
  for (std::size_t k = 0; k < K; ++k) Z += std::exp(logr[k] - logmax);

  Sample mean(x_t.shape);
  for (std::size_t k = 0; k < K; ++k) {
    const GmmComponent& c = mixture.components[k];
    const double r = std::exp(logr[k] - logmax) / Z;
    const double v = abar * c.std * c.std + b2;
    const double shrink = a * c.std * c.std / v;
    for (std::size_t i = 0; i < x_t.size(); ++i) {
      mean.data[i] += r * (c.mean.data[i] + shrink * (x_t.data[i] - a * c.mean.data[i]));
    }
  }
  return mean;
}

namespace {

const GaussianMixture& select_mixture(const DenoiserModel& model,
                                      const Condition& cond) {
  if (cond.kind == ConditionKind::Null) return model.prior_mixture;
  if (cond.class_id < 0 ||
      static_cast<std::size_t>(cond.class_id) >= model.class_mixtures.size())
    throw std::invalid_argument("condition.class_id: unknown class id");
  return model.class_mixtures[cond.class_id];
}

}  // namespace

Sample predict_noise(const DenoiserModel& model, const Sample& x_t, int t,
                     const Condition& cond, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T)
    throw std::out_of_range("predict_noise: step t out of range [1, T]");
  const GaussianMixture& mixture = select_mixture(model, cond);
  if (cond.kind == ConditionKind::Class)
    g_cond_evals.fetch_add(1, std::memory_order_relaxed);
  else
    g_uncond_evals.fetch_add(1, std::memory_order_relaxed);

  const double a = std::sqrt(schedule.alpha_bar[t]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
  Sample mean = gmm_posterior_mean(mixture, x_t, t, schedule);
  Sample eps(x_t.shape);
  for (std::size_t i = 0; i < x_t.size(); ++i)
    eps.data[i] = (x_t.data[i] - a * mean.data[i]) / b;
  return eps;
}

Sample guided_noise(const DenoiserModel& model, const Sample& x_t, int t,
                    const Condition& cond, const NoiseSchedule& schedule) {
  const double s = cond.guidance_scale;
  if (!(s >= 0.0))
    throw std::invalid_argument("condition.guidance_scale: must be >= 0");
  if (cond.kind == ConditionKind::Null) {
    if (s != 0.0)
      throw std::invalid_argument(
          "condition: null condition requires guidance_scale = 0");
    return predict_noise(model, x_t, t, Condition::null(), schedule);
  }
  if (s == 0.0) return predict_noise(model, x_t, t, Condition::null(), schedule);
  Sample eps_cond = predict_noise(model, x_t, t, cond, schedule);
  if (s == 1.0) return eps_cond;
  Sample eps_uncond = predict_noise(model, x_t, t, Condition::null(), schedule);
  Sample out(x_t.shape);
  for (std::size_t i = 0; i < x_t.size(); ++i)
    out.data[i] = eps_uncond.data[i] + s * (eps_cond.data[i] - eps_uncond.data[i]);
  return out;
}

Sample conditioned_noise(const DenoiserModel& model, const Sample& x_t, int t,
                         const Condition& cond, const NoiseSchedule& schedule) {
  return guided_noise(model, x_t, t, cond, schedule);
}

}  // namespace difflab
