#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace difflab {

// Step-size convention for the second-order solver. LogSnrDiff is
// h_t = lambda_t - lambda_{t+1}, strictly positive for monotone schedules.
// RatioOfLogs is the alternative ratio-of-logs form
// h_t = ln(sqrt(abar_t))/ln(sqrt(1-abar_t)) - ln(sqrt(abar_{t+1}))/ln(sqrt(1-abar_{t+1})),
// which is strictly negative for monotone schedules. The two disagree; both
// are kept selectable so the difference can be studied. See sigma note below.
enum class HFormula { LogSnrDiff, RatioOfLogs };

const char* to_string(HFormula f);
HFormula h_formula_from_string(const std::string& s);

// Diffusion noise schedule over discrete steps t = 1..T, plus the derived
// quantities every other module consumes. All arrays are indexed so that
// position t corresponds to step t of the forward process; index 0 holds the
// clean-data boundary (alpha_bar[0] = 1, lambda[0] = +inf).
//
// sigma_solver is always derived from the log-SNR-difference h, whatever
// h_formula selects: the ratio-of-logs h is negative, which would put a
// negative value under the square root. The selected h drives the solver
// mean only. sigma_solver[1] = 0 structurally (alpha_bar[0] = 1); the chain
// module replays that step by carrying the raw residual.
struct NoiseSchedule {
  int T = 0;
  double eta_ddpm = 1.0;
  HFormula h_formula = HFormula::LogSnrDiff;

  std::vector<double> beta;          // [0..T], beta[0] unused (= 0)
  std::vector<double> alpha_bar;     // [0..T], alpha_bar[0] = 1
  std::vector<double> lambda;        // [0..T], lambda[0] = +inf
  std::vector<double> h;             // [0..T-1], selected formula
  std::vector<double> sigma_ddpm;    // [0..T], index 0 unused
  std::vector<double> sigma_solver;  // [0..T], index 0 unused
};

// Builds a linearly interpolated beta schedule (beta_1 = beta_start,
// beta_T = beta_end) and all derived arrays. The cumulative product
// alpha_bar is accumulated in extended precision before narrowing.
// Throws std::invalid_argument naming the offending field for T < 2,
// beta values outside (0, 1), beta_end < beta_start, or eta_ddpm < 0.
NoiseSchedule build_schedule(int T, double beta_start, double beta_end,
                             double eta_ddpm, HFormula h_formula);

// Half-log-SNR lambda_t = ln(sqrt(abar_t)) - ln(sqrt(1-abar_t)).
// Requires 1 <= t <= T.
double half_log_snr(const NoiseSchedule& schedule, int t);

// Content hash over the derived arrays plus eta and the h convention.
// Serialized noise-map stacks carry it so replay against a different
// schedule is detected.
std::uint64_t schedule_hash(const NoiseSchedule& schedule);

}  // namespace difflab
