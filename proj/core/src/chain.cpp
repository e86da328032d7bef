#include "difflab/chain.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "difflab/container.hpp"
#include "difflab/rng.hpp"

namespace difflab {

namespace {

void check_step(int t, const NoiseSchedule& schedule, const char* where) {
  if (t < 1 || t > schedule.T)
    throw std::out_of_range(std::string(where) + ": step t out of range [1, T]");
}

// Solver mean from precomputed noise predictions. invert() and
// denoise_chain() both route through this so extraction and replay execute
// the identical floating-point expression.
Sample solver_mu_from_eps(const Sample& x_t, const Sample& eps_t,
                          const Sample* eps_next, int t,
                          const NoiseSchedule& s) {
  const double h_prev = s.h[t - 1];
  // exp(-inf) = 0 and -h_t/inf = -0 give the correct t = 1 limits without
  // special cases; only an exactly zero h is degenerate.
  if (h_prev == 0.0)
    throw std::invalid_argument("solver_mu: degenerate schedule (h_{t-1} = 0)");
  const double c_x =
      std::sqrt(1.0 - s.alpha_bar[t - 1]) / std::sqrt(1.0 - s.alpha_bar[t]) *
      std::exp(-h_prev);
  const double c_eps = std::sqrt(s.alpha_bar[t - 1]) * (1.0 - std::exp(-2.0 * h_prev));
  double c_corr = 0.0;
  if (eps_next != nullptr && t < s.T) {
    c_corr = 0.5 * c_eps * (-s.h[t] / h_prev);
  }
  Sample mu(x_t.shape);
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    double v = c_x * x_t.data[i] + c_eps * eps_t.data[i];
    if (c_corr != 0.0) v += c_corr * (eps_next->data[i] - eps_t.data[i]);
    mu.data[i] = v;
  }
  return mu;
}

}  // namespace

Sample forward_marginal_sample(const Sample& x0, int t, const Sample& eps,
                               const NoiseSchedule& schedule) {
  check_step(t, schedule, "forward_marginal_sample");
  require_same_shape(x0, eps, "forward_marginal_sample");
  const double a = std::sqrt(schedule.alpha_bar[t]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
  Sample out(x0.shape);
  for (std::size_t i = 0; i < x0.size(); ++i)
    out.data[i] = a * x0.data[i] + b * eps.data[i];
  return out;
}

Sample ddpm_mu(const DenoiserModel& model, const Sample& x_t, int t,
               const Condition& cond, const NoiseSchedule& schedule) {
  check_step(t, schedule, "ddpm_mu");
  const double sigma = schedule.sigma_ddpm[t];
  const double dir2 = 1.0 - schedule.alpha_bar[t - 1] - sigma * sigma;
  if (dir2 < 0.0)
    throw std::invalid_argument(
        "ddpm_mu: 1 - abar_{t-1} - sigma^2 < 0 (eta_ddpm too large for step)");
  Sample eps = conditioned_noise(model, x_t, t, cond, schedule);
  const double a_prev = std::sqrt(schedule.alpha_bar[t - 1]);
  const double a_t = std::sqrt(schedule.alpha_bar[t]);
  const double b_t = std::sqrt(1.0 - schedule.alpha_bar[t]);
  const double c_dir = std::sqrt(dir2);
  Sample mu(x_t.shape);
  for (std::size_t i = 0; i < x_t.size(); ++i)
    mu.data[i] = a_prev * (x_t.data[i] - b_t * eps.data[i]) / a_t + c_dir * eps.data[i];
  return mu;
}

Sample solver_mu(const DenoiserModel& model, const Sample& x_t,
                 const Sample* x_next, int t, const Condition& cond,
                 const NoiseSchedule& schedule) {
  check_step(t, schedule, "solver_mu");
  Sample eps_t = conditioned_noise(model, x_t, t, cond, schedule);
  if (x_next != nullptr && t < schedule.T) {
    Sample eps_next = conditioned_noise(model, *x_next, t + 1, cond, schedule);
    return solver_mu_from_eps(x_t, eps_t, &eps_next, t, schedule);
  }
  return solver_mu_from_eps(x_t, eps_t, nullptr, t, schedule);
}

NoiseMapStack invert(const Sample& x0, const Condition& cond,
                     const DenoiserModel& model, const NoiseSchedule& schedule,
                     std::uint64_t rng_seed) {
  if (!(x0.shape == model.shape))
    throw std::invalid_argument("invert: x0 shape differs from model shape");
  if (!in_unit_range(x0))
    throw std::invalid_argument("invert: x0 entries must lie in [0, 1]");
  const int T = schedule.T;

  NoiseMapStack stack;
  stack.cond = cond;
  stack.schedule = schedule;
  stack.schedule_id = schedule_hash(schedule);
  stack.aux_x.assign(T + 1, Sample());
  stack.z.assign(T + 1, Sample());
  stack.aux_x[0] = x0;

  // Independent forward states: fresh noise per step from its own substream.
  for (int t = 1; t <= T; ++t) {
    std::mt19937_64 rng = make_rng(rng_seed, static_cast<std::uint64_t>(t));
    Sample eps = gaussian_sample(x0.shape, rng);
    stack.aux_x[t] = forward_marginal_sample(x0, t, eps, schedule);
  }

  // Extraction walks t = T..1. eps_cache holds the prediction at aux_x[t+1],
  // made in the previous iteration, so each state is predicted exactly once.
  Sample eps_cache;
  for (int t = T; t >= 1; --t) {
    Sample eps_t = conditioned_noise(model, stack.aux_x[t], t, cond, schedule);
    Sample mu = solver_mu_from_eps(stack.aux_x[t], eps_t,
                                   t == T ? nullptr : &eps_cache, t, schedule);
    const double sigma = schedule.sigma_solver[t];
    Sample z(x0.shape);
    if (sigma > 0.0) {
      for (std::size_t i = 0; i < z.size(); ++i)
        z.data[i] = (stack.aux_x[t - 1].data[i] - mu.data[i]) / sigma;
      for (std::size_t i = 0; i < z.size(); ++i)
        stack.aux_x[t - 1].data[i] = mu.data[i] + sigma * z.data[i];
    } else if (t == 1) {
      // Structural boundary (alpha_bar[0] = 1): the map carries the raw
      // residual and replays with unit coefficient.
      for (std::size_t i = 0; i < z.size(); ++i)
        z.data[i] = stack.aux_x[t - 1].data[i] - mu.data[i];
      for (std::size_t i = 0; i < z.size(); ++i)
        stack.aux_x[t - 1].data[i] = mu.data[i] + z.data[i];
    } else {
      std::ostringstream msg;
      msg << "invert: schedule rejected, sigma_solver[" << t
          << "] = 0 at an extracted step";
      throw std::invalid_argument(msg.str());
    }
    stack.z[t] = std::move(z);
    eps_cache = std::move(eps_t);
  }
  stack.x_T = stack.aux_x[T];
  return stack;
}

Sample denoise_chain(const NoiseMapStack& stack, const DenoiserModel& model,
                     const Sample& delta, const NoiseSchedule& schedule) {
  if (schedule_hash(schedule) != stack.schedule_id)
    throw std::invalid_argument("denoise_chain: stack/schedule mismatch");
  require_same_shape(stack.x_T, delta, "denoise_chain");
  const int T = schedule.T;
  if (stack.z.size() != static_cast<std::size_t>(T) + 1)
    throw std::invalid_argument("denoise_chain: stack is missing noise maps");
  for (int t = 1; t <= T; ++t)
    require_same_shape(stack.z[t], stack.x_T, "denoise_chain");

  Sample x_t = add(stack.x_T, delta);
  Sample eps_cache;  // prediction at the state one step up the chain
  for (int t = T; t >= 1; --t) {
    Sample eps_t = conditioned_noise(model, x_t, t, stack.cond, schedule);
    Sample mu = solver_mu_from_eps(x_t, eps_t, t == T ? nullptr : &eps_cache,
                                   t, schedule);
    const double sigma = schedule.sigma_solver[t];
    const double coeff = sigma > 0.0 ? sigma : 1.0;
    Sample x_prev(x_t.shape);
    for (std::size_t i = 0; i < x_prev.size(); ++i)
      x_prev.data[i] = mu.data[i] + coeff * stack.z[t].data[i];
    eps_cache = std::move(eps_t);
    x_t = std::move(x_prev);
  }
  return x_t;
}

namespace {

constexpr std::uint32_t kStackMagic = 0x4d4e4c44;  // "DLNM"
constexpr std::uint32_t kStackVersion = 1;

std::vector<double> flatten(const std::vector<Sample>& samples, int from) {
  std::vector<double> out;
  for (std::size_t i = static_cast<std::size_t>(from); i < samples.size(); ++i)
    out.insert(out.end(), samples[i].data.begin(), samples[i].data.end());
  return out;
}

}  // namespace

void save_stack(const NoiseMapStack& stack, const std::string& path) {
  std::ostringstream out(std::ios::binary);
  write_u32(out, kStackMagic);
  write_u32(out, kStackVersion);
  write_u32(out, static_cast<std::uint32_t>(stack.x_T.shape.height));
  write_u32(out, static_cast<std::uint32_t>(stack.x_T.shape.width));
  write_u32(out, static_cast<std::uint32_t>(stack.x_T.shape.channels));
  write_u32(out, static_cast<std::uint32_t>(stack.schedule.T));
  write_u64(out, stack.schedule_id);
  write_u8(out, stack.cond.kind == ConditionKind::Class ? 1 : 0);
  write_u32(out, static_cast<std::uint32_t>(stack.cond.class_id));
  write_f64(out, stack.cond.guidance_scale);

  const std::uint64_t d = stack.x_T.size();
  const std::uint64_t T = static_cast<std::uint64_t>(stack.schedule.T);
  write_array(out, {d}, stack.x_T.data);
  write_array(out, {T, d}, flatten(stack.z, 1));
  write_array(out, {T + 1, d}, flatten(stack.aux_x, 0));
  write_file_bytes(path, out.str());
}

NoiseMapStack load_stack(const std::string& path, const NoiseSchedule& schedule) {
  std::istringstream in(read_file_bytes(path), std::ios::binary);
  if (read_u32(in, "stack magic") != kStackMagic)
    throw std::runtime_error("load_stack: bad magic (not a noise-map stack): " + path);
  if (read_u32(in, "stack version") != kStackVersion)
    throw std::runtime_error("load_stack: unsupported container version: " + path);
  Shape shape;
  shape.height = static_cast<int>(read_u32(in, "stack height"));
  shape.width = static_cast<int>(read_u32(in, "stack width"));
  shape.channels = static_cast<int>(read_u32(in, "stack channels"));
  const int T = static_cast<int>(read_u32(in, "stack T"));
  const std::uint64_t hash = read_u64(in, "stack schedule hash");
  Condition cond;
  cond.kind = read_u8(in, "stack cond kind") == 1 ? ConditionKind::Class
                                                  : ConditionKind::Null;
  cond.class_id = static_cast<int>(read_u32(in, "stack class id"));
  cond.guidance_scale = read_f64(in, "stack guidance scale");

  if (T != schedule.T || hash != schedule_hash(schedule))
    throw std::runtime_error("load_stack: stack/schedule mismatch: " + path);

  const std::uint64_t d = shape.size();
  ArrayRecord x_T = read_array(in, "stack x_T");
  ArrayRecord z = read_array(in, "stack z");
  ArrayRecord aux = read_array(in, "stack aux_x");
  if (x_T.dims != std::vector<std::uint64_t>{d} ||
      z.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(T), d} ||
      aux.dims != std::vector<std::uint64_t>{static_cast<std::uint64_t>(T) + 1, d})
    throw std::runtime_error("load_stack: array dims inconsistent with header: " + path);

  NoiseMapStack stack;
  stack.cond = cond;
  stack.schedule = schedule;
  stack.schedule_id = hash;
  stack.x_T = Sample(shape);
  stack.x_T.data = std::move(x_T.data);
  stack.z.assign(T + 1, Sample());
  stack.aux_x.assign(T + 1, Sample());
  for (int t = 1; t <= T; ++t) {
    stack.z[t] = Sample(shape);
    std::copy(z.data.begin() + (t - 1) * d, z.data.begin() + t * d,
              stack.z[t].data.begin());
  }
  for (int t = 0; t <= T; ++t) {
    stack.aux_x[t] = Sample(shape);
    std::copy(aux.data.begin() + t * d, aux.data.begin() + (t + 1) * d,
              stack.aux_x[t].data.begin());
  }
  return stack;
}

}  // namespace difflab
