#pragma once

#include <cstdint>
#include <vector>

#include "difflab/sample.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

// One isotropic Gaussian component: weight, mean image, scalar std.
struct GmmComponent {
  double weight = 0.0;
  Sample mean;
  double std = 0.0;
};

// Isotropic Gaussian mixture over clean images. Weights must be positive and
// sum to 1 (within 1e-12); all means share one shape; stds are positive.
struct GaussianMixture {
  std::vector<GmmComponent> components;
};

// Validates the mixture invariants; throws std::invalid_argument otherwise.
void validate_mixture(const GaussianMixture& mixture);

enum class ConditionKind { Null, Class };

// Sampling condition: either unconditional (Null) or a class label with a
// guidance scale. guidance_scale must be >= 0; a Null condition only makes
// sense with guidance_scale = 0.
struct Condition {
  ConditionKind kind = ConditionKind::Null;
  int class_id = 0;
  double guidance_scale = 0.0;

  static Condition null() { return Condition{ConditionKind::Null, 0, 0.0}; }
  static Condition cls(int id, double s_g) {
    return Condition{ConditionKind::Class, id, s_g};
  }
};

// Closed-form denoiser: one Gaussian mixture per class plus the prior
// (unconditional) mixture, which is the prior-weighted union of the class
// mixtures. Immutable after construction; evaluation is stateless and safe
// to call concurrently.
struct DenoiserModel {
  Shape shape;
  std::vector<GaussianMixture> class_mixtures;  // indexed by class id
  std::vector<double> class_priors;             // same length, sums to 1
  GaussianMixture prior_mixture;                // derived union
};

// Builds the model and the derived prior mixture. Priors default to uniform
// when empty. Throws std::invalid_argument on invalid mixtures/priors or
// mismatched shapes.
DenoiserModel make_denoiser_model(Shape shape,
                                  std::vector<GaussianMixture> class_mixtures,
                                  std::vector<double> class_priors = {});

// Posterior mean E[x0 | x_t] for the diffused mixture at step t, computed
// with log-sum-exp stabilized responsibilities:
//   a = sqrt(abar_t), v_k = abar_t*s_k^2 + (1-abar_t)
//   r_k proportional to w_k * N(x_t; a*m_k, v_k I)
//   mean = sum_k r_k * (m_k + (a*s_k^2 / v_k) * (x_t - a*m_k))
// Requires 1 <= t <= T. Throws std::runtime_error if responsibilities fail
// to normalize (non-finite input).
Sample gmm_posterior_mean(const GaussianMixture& mixture, const Sample& x_t,
                          int t, const NoiseSchedule& schedule);

// Noise prediction implied by the posterior mean:
//   eps_hat = (x_t - sqrt(abar_t) * posterior_mean) / sqrt(1 - abar_t).
// The mixture is selected by cond: Null uses the prior mixture, Class uses
// that class's mixture. Unknown class ids are rejected.
Sample predict_noise(const DenoiserModel& model, const Sample& x_t, int t,
                     const Condition& cond, const NoiseSchedule& schedule);

// Classifier-free guidance combination:
//   eps = eps_uncond + s_g * (eps_cond - eps_uncond)
// s_g = 0 short-circuits to the unconditional prediction and s_g = 1 to the
// conditional one (bit-identical, and only one mixture evaluation each).
// Requires cond.kind = Class unless s_g = 0; a Null condition with s_g != 0
// is rejected.
Sample guided_noise(const DenoiserModel& model, const Sample& x_t, int t,
                    const Condition& cond, const NoiseSchedule& schedule);

// The noise prediction the reverse chain consumes for a given condition:
// guided_noise for Class conditions, the prior prediction for Null.
Sample conditioned_noise(const DenoiserModel& model, const Sample& x_t, int t,
                         const Condition& cond, const NoiseSchedule& schedule);

// Global counters of mixture evaluations, for query accounting. Conditional
// counts class-mixture evaluations, unconditional counts prior-mixture ones.
// Thread-safe.
struct DenoiserEvalCounts {
  std::uint64_t conditional = 0;
  std::uint64_t unconditional = 0;
};
DenoiserEvalCounts denoiser_eval_counts();
void reset_denoiser_eval_counts();

}  // namespace difflab
