#pragma once

#include <cstdint>
#include <random>

#include "difflab/sample.hpp"

namespace difflab {

// splitmix64 finalizer; the standard way to turn (seed, stream-id) pairs into
// decorrelated child seeds. Every stochastic component derives its own
// substream this way, so results never depend on evaluation order.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  return std::mt19937_64(mix_seed(seed, stream));
}

// d iid standard normal draws shaped like `shape`.
inline Sample gaussian_sample(Shape shape, std::mt19937_64& rng) {
  Sample out(shape);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.data) v = normal(rng);
  return out;
}

// Direction drawn uniformly on the radius-sqrt(d) hypersphere, so that
// E[delta delta^T] = I. Degenerate all-zero draws are resampled.
inline Sample sphere_direction(Shape shape, std::mt19937_64& rng) {
  const double d = static_cast<double>(shape.size());
  for (;;) {
    Sample v = gaussian_sample(shape, rng);
    double n = norm_l2(v);
    if (n > 0.0) {
      double scale = std::sqrt(d) / n;
      for (double& x : v.data) x *= scale;
      return v;
    }
  }
}

}  // namespace difflab
