#include "difflab/attack.hpp"

#include <cmath>
#include <stdexcept>

#include "difflab/rng.hpp"

namespace difflab {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

const char* to_string(GradEstimator e) {
  switch (e) {
    case GradEstimator::Rgf: return "rgf";
    case GradEstimator::SkipGradient: return "skip-gradient";
    default: return "none";
  }
}

GradEstimator estimator_from_string(const std::string& s) {
  if (s == "rgf") return GradEstimator::Rgf;
  if (s == "skip-gradient") return GradEstimator::SkipGradient;
  if (s == "none") return GradEstimator::None;
  throw std::invalid_argument("attack.estimator: unknown value '" + s +
                              "' (expected rgf, skip-gradient, or none)");
}

void validate_attack_config(const AttackConfig& cfg) {
  if (cfg.iterations < 1)
    throw std::invalid_argument("attack.iterations: must be >= 1");
  if (!(cfg.step_size > 0.0))
    throw std::invalid_argument("attack.step_size: must be > 0");
  if (!(cfg.kappa > 0.0)) throw std::invalid_argument("attack.kappa: must be > 0");
  if (!(cfg.momentum >= 0.0))
    throw std::invalid_argument("attack.momentum: must be >= 0");
  if (cfg.rgf_queries < 1)
    throw std::invalid_argument("attack.rgf_queries: must be >= 1");
  if (!(cfg.rgf_sigma > 0.0))
    throw std::invalid_argument("attack.rgf_sigma: must be > 0");
}

Sample clamp01(const Sample& x) {
  Sample out = x;
  for (double& v : out.data) v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return out;
}

Sample clamp01_mask(const Sample& x) {
  Sample out(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i)
    out.data[i] = (x.data[i] > 0.0 && x.data[i] < 1.0) ? 1.0 : 0.0;
  return out;
}

Sample momentum_step(const Sample& g_prev, const Sample& grad, double mu) {
  require_same_shape(g_prev, grad, "momentum_step");
  const double l1 = norm_l1(grad);
  Sample out = scaled(g_prev, mu);
  if (l1 > 0.0) axpy(out, 1.0 / l1, grad);
  return out;
}

Sample project_linf(const Sample& delta, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("project_linf: kappa must be > 0");
  Sample out = delta;
  for (double& v : out.data) v = v < -kappa ? -kappa : (v > kappa ? kappa : v);
  return out;
}

Sample rgf_estimate(const ChainFn& chain, const Sample& delta,
                    const Sample& base_raw, const Sample& g_base, int queries,
                    double sigma, std::uint64_t seed) {
  if (queries < 1) throw std::invalid_argument("rgf_estimate: queries must be >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("rgf_estimate: sigma must be > 0");
  require_same_shape(base_raw, g_base, "rgf_estimate");
  if (!all_finite(base_raw))
    throw std::runtime_error("rgf_estimate: non-finite chain output at base point");

  Sample estimate(delta.shape);
  const double scale = 1.0 / (static_cast<double>(queries) * sigma);
  for (int n = 0; n < queries; ++n) {
    std::mt19937_64 rng = make_rng(seed, static_cast<std::uint64_t>(n));
    Sample dir = sphere_direction(delta.shape, rng);
    Sample query = delta;
    axpy(query, sigma, dir);
    Sample out = chain(query);
    if (!all_finite(out))
      throw std::runtime_error("rgf_estimate: non-finite chain output at query");
    double inner = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i)
      inner += g_base.data[i] * (out.data[i] - base_raw.data[i]);
    axpy(estimate, scale * inner, dir);
  }
  return estimate;
}

namespace {

Sample masked_pixel_gradient(const Classifier& classifier, const Sample& raw,
                             int y) {
  Sample x0_hat = clamp01(raw);
  Sample g = input_gradient(classifier, x0_hat, y);
  Sample mask = clamp01_mask(raw);
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= mask.data[i];
  return g;
}

}  // namespace

Sample rgf_gradient(const NoiseMapStack& stack, const DenoiserModel& model,
                    const Classifier& classifier, int y, const AttackConfig& cfg,
                    const Sample& delta) {
  validate_attack_config(cfg);
  ChainFn chain = [&](const Sample& d) {
    return denoise_chain(stack, model, d, stack.schedule);
  };
  Sample base_raw = chain(delta);
  Sample g_base = masked_pixel_gradient(classifier, base_raw, y);
  return rgf_estimate(chain, delta, base_raw, g_base, cfg.rgf_queries,
                      cfg.rgf_sigma, cfg.rng_seed);
}

Sample skip_gradient(const NoiseMapStack& stack, const DenoiserModel& model,
                     const Classifier& classifier, int y, const Sample& delta) {
  Sample raw = denoise_chain(stack, model, delta, stack.schedule);
  Sample g = masked_pixel_gradient(classifier, raw, y);
  const double scale = 1.0 / std::sqrt(stack.schedule.alpha_bar[stack.schedule.T]);
  return scaled(g, scale);
}

AttackResult run_attack(const Sample& x0, int y, const DenoiserModel& model,
                        const Classifier& classifier,
                        const NoiseSchedule& schedule, const Condition& cond,
                        const AttackConfig& cfg) {
  validate_attack_config(cfg);
  if (y < 0 || y >= classifier.classes)
    throw std::invalid_argument("run_attack: label out of range");
  if (!(classifier.input_shape == x0.shape))
    throw std::invalid_argument("run_attack: classifier/input shape mismatch");

  NoiseMapStack stack =
      invert(x0, cond, model, schedule, mix_seed(cfg.rng_seed, kInvertStream));
  ChainFn chain = [&](const Sample& d) {
    return denoise_chain(stack, model, d, schedule);
  };

  AttackResult result;
  Sample delta(x0.shape, 0.0);
  Sample g_momentum(x0.shape, 0.0);

  // The delta = 0 chain output doubles as the first iteration's base point.
  Sample base_raw = chain(delta);
  result.clean_recon = clamp01(base_raw);
  result.clean_pred = predict(classifier, result.clean_recon);

  for (int k = 1; k <= cfg.iterations; ++k) {
    if (k > 1) base_raw = chain(delta);
    if (!all_finite(base_raw))
      throw std::runtime_error("run_attack: non-finite chain output");
    Sample x0_hat = clamp01(base_raw);
    ForwardResult fr = forward_loss(classifier, x0_hat, y);
    TraceRow row;
    row.iter = k;
    row.loss = fr.loss;
    row.pred = fr.predicted;
    row.l2_image = norm_l2(sub(x0_hat, x0));
    if (fr.predicted != y) {
      // Already adversarial at this delta: stop before growing it further.
      row.linf_delta = norm_linf(delta);
      result.trace.push_back(row);
      result.success = true;
      break;
    }

    Sample grad(x0.shape, 0.0);
    switch (cfg.estimator) {
      case GradEstimator::Rgf: {
        Sample g_base = masked_pixel_gradient(classifier, base_raw, y);
        grad = rgf_estimate(chain, delta, base_raw, g_base, cfg.rgf_queries,
                            cfg.rgf_sigma,
                            mix_seed(cfg.rng_seed, kIterStreamBase + k));
        break;
      }
      case GradEstimator::SkipGradient: {
        Sample g_base = masked_pixel_gradient(classifier, base_raw, y);
        grad = scaled(g_base, 1.0 / std::sqrt(schedule.alpha_bar[schedule.T]));
        break;
      }
      case GradEstimator::None:
        break;
    }

    g_momentum = momentum_step(g_momentum, grad, cfg.momentum);
    Sample step(x0.shape);
    for (std::size_t i = 0; i < step.size(); ++i)
      step.data[i] = delta.data[i] + cfg.step_size * sign_of(g_momentum.data[i]);
    delta = project_linf(step, cfg.kappa);
    result.iterations_used = k;

    row.linf_delta = norm_linf(delta);
    result.trace.push_back(row);
  }

  Sample adv_raw = chain(delta);
  result.adversarial = clamp01(adv_raw);
  result.delta = std::move(delta);
  result.final_pred = predict(classifier, result.adversarial);
  if (result.final_pred != y) result.success = true;
  return result;
}

}  // namespace difflab
