#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/denoiser.hpp"
#include "difflab/sample.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

// Everything needed to replay one inverted trajectory deterministically:
// the terminal latent x_T, the per-step noise maps z_1..z_T, the auxiliary
// forward states x_0..x_T (kept for testing), the condition used, and an
// embedded copy of the schedule plus its content hash so replay against a
// different schedule is rejected.
//
// Noise-map convention: at steps where sigma_solver[t] > 0 the map is
// z_t = (x_{t-1} - mu_t) / sigma_t and replay adds sigma_t * z_t. At steps
// where sigma_solver[t] = 0 (structurally the final step t = 1, because
// alpha_bar[0] = 1) the map carries the raw residual x_{t-1} - mu_t and
// replay adds it with unit coefficient. Either way the replay is the exact
// algebraic inverse of the extraction for any denoiser.
struct NoiseMapStack {
  Sample x_T;
  std::vector<Sample> z;      // [0..T], index 0 unused
  std::vector<Sample> aux_x;  // [0..T]
  Condition cond;
  NoiseSchedule schedule;
  std::uint64_t schedule_id = 0;
};

// Forward marginal x_t = sqrt(abar_t) * x0 + sqrt(1-abar_t) * eps.
// Requires matching shapes and 1 <= t <= T.
Sample forward_marginal_sample(const Sample& x0, int t, const Sample& eps,
                               const NoiseSchedule& schedule);

// First-order reverse mean
//   mu = sqrt(abar_{t-1}) * (x_t - sqrt(1-abar_t)*eps) / sqrt(abar_t)
//      + sqrt(1 - abar_{t-1} - sigma_ddpm_t^2) * eps
// with eps the condition's noise prediction. Rejects schedules where
// 1 - abar_{t-1} - sigma_t^2 < 0 (eta too large for the step).
Sample ddpm_mu(const DenoiserModel& model, const Sample& x_t, int t,
               const Condition& cond, const NoiseSchedule& schedule);

// Second-order solver mean
//   mu = (sqrt(1-abar_{t-1}) / sqrt(1-abar_t)) * exp(-h_{t-1}) * x_t
//      + sqrt(abar_{t-1}) * (1 - exp(-2 h_{t-1})) * eps(x_t)
//      + 0.5 * sqrt(abar_{t-1}) * (1 - exp(-2 h_{t-1})) * (-h_t / h_{t-1})
//        * (eps(x_next) - eps(x_t))
// x_next is the state at step t+1; pass nullptr at t = T, where the
// correction term is defined to vanish (first-order boundary step).
// h_{t-1} = 0 is rejected as a degenerate schedule.
Sample solver_mu(const DenoiserModel& model, const Sample& x_t,
                 const Sample* x_next, int t, const Condition& cond,
                 const NoiseSchedule& schedule);

// Inversion: draws an independent forward state per step
// (x_t = sqrt(abar_t)*x0 + sqrt(1-abar_t)*eps_t, eps_t fresh from a per-step
// substream of rng_seed), then walks t = T..1 extracting the noise map that
// makes the solver step land exactly on the recorded x_{t-1}, rewriting the
// auxiliary state to the replayed value after each extraction.
// Requires x0 entries in [0, 1] and shape matching the model. Schedules with
// sigma_solver[t] = 0 at any step t >= 2 are rejected.
NoiseMapStack invert(const Sample& x0, const Condition& cond,
                     const DenoiserModel& model, const NoiseSchedule& schedule,
                     std::uint64_t rng_seed);

// Replays the stack from x_T + delta down to the clean image estimate,
// reusing each step's noise prediction for the next step's correction term.
// Returns the unclamped x0 estimate. The schedule must hash-match the one
// the stack was built with.
Sample denoise_chain(const NoiseMapStack& stack, const DenoiserModel& model,
                     const Sample& delta, const NoiseSchedule& schedule);

// Flat binary container (little-endian, float64 payload) for stacks.
// load_stack verifies the stored schedule hash against `schedule` and
// rebuilds the embedded copy from it.
void save_stack(const NoiseMapStack& stack, const std::string& path);
NoiseMapStack load_stack(const std::string& path, const NoiseSchedule& schedule);

}  // namespace difflab
