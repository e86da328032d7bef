#include "difflab/schedule.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace difflab {

const char* to_string(HFormula f) {
  return f == HFormula::LogSnrDiff ? "log-snr-diff" : "ratio-of-logs";
}

HFormula h_formula_from_string(const std::string& s) {
  if (s == "log-snr-diff") return HFormula::LogSnrDiff;
  if (s == "ratio-of-logs") return HFormula::RatioOfLogs;
  throw std::invalid_argument("h_formula: unknown value '" + s +
                              "' (expected log-snr-diff or ratio-of-logs)");
}

namespace {

double lambda_of(double alpha_bar) {
  // ln(sqrt(a)) - ln(sqrt(1-a)); +inf at a = 1.
  return 0.5 * (std::log(alpha_bar) - std::log1p(-alpha_bar));
}

// Ratio-of-logs term f(t) = ln(sqrt(abar_t)) / ln(sqrt(1-abar_t)).
// At alpha_bar = 1 this is 0/-inf = -0.0, which is the correct limit.
double log_ratio_of(double alpha_bar) {
  return (0.5 * std::log(alpha_bar)) / (0.5 * std::log1p(-alpha_bar));
}

}  // namespace

NoiseSchedule build_schedule(int T, double beta_start, double beta_end,
                             double eta_ddpm, HFormula h_formula) {
  if (T < 2) throw std::invalid_argument("schedule.T: must be >= 2");
  if (!(beta_start > 0.0 && beta_start < 1.0))
    throw std::invalid_argument("schedule.beta_start: must lie in (0, 1)");
  if (!(beta_end > 0.0 && beta_end < 1.0))
    throw std::invalid_argument("schedule.beta_end: must lie in (0, 1)");
  if (beta_end < beta_start)
    throw std::invalid_argument("schedule.beta_end: must be >= beta_start");
  if (!(eta_ddpm >= 0.0))
    throw std::invalid_argument("schedule.eta_ddpm: must be >= 0");

  NoiseSchedule s;
  s.T = T;
  s.eta_ddpm = eta_ddpm;
  s.h_formula = h_formula;
  s.beta.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 1.0);
  s.lambda.assign(T + 1, std::numeric_limits<double>::infinity());
  s.sigma_ddpm.assign(T + 1, 0.0);
  s.sigma_solver.assign(T + 1, 0.0);

  // Linear interpolation of beta over t = 1..T; cumulative product kept in
  // extended precision so the stored doubles carry no accumulation error.
  long double acc = 1.0L;
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = beta_start +
                (static_cast<double>(t - 1) / static_cast<double>(T - 1)) *
                    (beta_end - beta_start);
    acc *= (1.0L - static_cast<long double>(s.beta[t]));
    s.alpha_bar[t] = static_cast<double>(acc);
    s.lambda[t] = lambda_of(s.alpha_bar[t]);
  }

  // h arrays over t = 0..T-1. The log-SNR difference form is always needed
  // for sigma_solver; the selected form is what the solver mean consumes.
  std::vector<double> h_diff(T), h_sel(T);
  for (int t = 0; t < T; ++t) {
    h_diff[t] = s.lambda[t] - s.lambda[t + 1];
    if (h_formula == HFormula::LogSnrDiff) {
      h_sel[t] = h_diff[t];
    } else {
      h_sel[t] = log_ratio_of(s.alpha_bar[t]) - log_ratio_of(s.alpha_bar[t + 1]);
    }
  }
  s.h = h_sel;

  for (int t = 1; t <= T; ++t) {
    s.sigma_ddpm[t] =
        eta_ddpm * s.beta[t] * (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]);
    s.sigma_solver[t] = std::sqrt(1.0 - s.alpha_bar[t - 1]) *
                        std::sqrt(1.0 - std::exp(-2.0 * h_diff[t - 1]));
  }
  return s;
}

double half_log_snr(const NoiseSchedule& schedule, int t) {
  if (t < 1 || t > schedule.T)
    throw std::out_of_range("half_log_snr: step t out of range [1, T]");
  return schedule.lambda[t];
}

namespace {

void hash_bytes(std::uint64_t& state, const void* data, std::size_t n) {
  // FNV-1a
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    state ^= p[i];
    state *= 1099511628211ULL;
  }
}

void hash_doubles(std::uint64_t& state, const std::vector<double>& v) {
  if (!v.empty()) hash_bytes(state, v.data(), v.size() * sizeof(double));
}

}  // namespace

std::uint64_t schedule_hash(const NoiseSchedule& s) {
  std::uint64_t state = 14695981039346656037ULL;
  std::uint64_t tt = static_cast<std::uint64_t>(s.T);
  hash_bytes(state, &tt, sizeof(tt));
  unsigned char f = s.h_formula == HFormula::LogSnrDiff ? 0 : 1;
  hash_bytes(state, &f, 1);
  hash_bytes(state, &s.eta_ddpm, sizeof(double));
  hash_doubles(state, s.beta);
  hash_doubles(state, s.alpha_bar);
  return state;
}

}  // namespace difflab
