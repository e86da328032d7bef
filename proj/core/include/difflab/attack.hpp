#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "difflab/chain.hpp"
#include "difflab/classifier.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/sample.hpp"

namespace difflab {

enum class GradEstimator { Rgf, SkipGradient, None };

// Substreams of AttackConfig.rng_seed: the inversion uses
// mix_seed(rng_seed, kInvertStream); RGF iteration k uses
// mix_seed(rng_seed, kIterStreamBase + k). Exposed so other drivers can
// reproduce the exact stack an attack run worked on.
inline constexpr std::uint64_t kInvertStream = 0x1001;
inline constexpr std::uint64_t kIterStreamBase = 0x2000;

const char* to_string(GradEstimator e);
GradEstimator estimator_from_string(const std::string& s);

struct AttackConfig {
  int iterations = 10;       // N_a
  double step_size = 0.04;   // eta
  double kappa = 0.1;        // l-inf budget on delta
  double momentum = 1.0;     // mu
  int rgf_queries = 64;      // N
  double rgf_sigma = 1e-3;   // query radius
  GradEstimator estimator = GradEstimator::Rgf;
  std::uint64_t rng_seed = 0;
};

void validate_attack_config(const AttackConfig& cfg);

struct TraceRow {
  int iter = 0;
  double loss = 0.0;
  int pred = 0;
  double linf_delta = 0.0;
  double l2_image = 0.0;
};

struct AttackResult {
  Sample adversarial;   // clamped final chain output
  Sample clean_recon;   // clamped delta = 0 reconstruction
  Sample delta;         // final latent perturbation
  bool success = false;
  int iterations_used = 0;  // momentum updates applied
  int clean_pred = 0;       // prediction on clean_recon
  int final_pred = 0;       // prediction on adversarial
  std::vector<TraceRow> trace;
};

// Pixel-range projection rho: clamps every entry to [0, 1].
Sample clamp01(const Sample& x);

// Companion subgradient mask, evaluated at the pre-clamp value: 1 on the
// open interval (0, 1), 0 at and beyond the boundary.
Sample clamp01_mask(const Sample& x);

// Momentum accumulation g = mu * g_prev + grad / ||grad||_1.
// A zero gradient contributes nothing (the normalized term is 0).
Sample momentum_step(const Sample& g_prev, const Sample& grad, double mu);

// Projection onto the l-inf ball of radius kappa (componentwise clamp).
Sample project_linf(const Sample& delta, double kappa);

// Randomized-gradient-free estimate with the chain evaluation injected, so
// the estimator can be driven against reference maps. base_raw must be
// chain(delta). Directions are uniform on the radius-sqrt(d) sphere, query n
// drawn from substream n of `seed`, and the estimate accumulates
//   (1 / (N * sigma)) * <g_base, chain(delta + sigma*dir_n) - base_raw> * dir_n.
// Non-finite chain outputs abort with a diagnostic.
using ChainFn = std::function<Sample(const Sample& delta)>;
Sample rgf_estimate(const ChainFn& chain, const Sample& delta,
                    const Sample& base_raw, const Sample& g_base, int queries,
                    double sigma, std::uint64_t seed);

// Full RGF latent gradient at `delta`: evaluates the base chain once, forms
// the clamp-masked pixel gradient, then queries per rgf_estimate.
Sample rgf_gradient(const NoiseMapStack& stack, const DenoiserModel& model,
                    const Classifier& classifier, int y, const AttackConfig& cfg,
                    const Sample& delta);

// Skip-gradient baseline: the clamp-masked pixel gradient mapped to the
// latent by 1/sqrt(abar_T), ignoring the chain Jacobian.
Sample skip_gradient(const NoiseMapStack& stack, const DenoiserModel& model,
                     const Classifier& classifier, int y, const Sample& delta);

// Whole pipeline for one image: invert once, then cfg.iterations momentum
// sign-steps with the configured estimator, projecting onto the kappa ball
// after every update. The iteration's loss/prediction are evaluated at its
// starting delta; the loop exits early once that prediction already differs
// from y. The adversarial output is the clamped replay at the final delta.
AttackResult run_attack(const Sample& x0, int y, const DenoiserModel& model,
                        const Classifier& classifier,
                        const NoiseSchedule& schedule, const Condition& cond,
                        const AttackConfig& cfg);

}  // namespace difflab
