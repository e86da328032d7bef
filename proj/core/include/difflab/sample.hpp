#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace difflab {

// Image geometry: height x width x channels, flattened row-major
// (row, column, channel) into Sample::data.
struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  bool operator==(const Shape& o) const = default;
};

// A flat double-precision tensor tagged with its image shape. Used for
// images, latents, noise maps, and gradients alike.
struct Sample {
  Shape shape;
  std::vector<double> data;

  Sample() = default;
  Sample(Shape s, double fill = 0.0) : shape(s), data(s.size(), fill) {}

  std::size_t size() const { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
};

inline void require_same_shape(const Sample& a, const Sample& b, const char* where) {
  if (!(a.shape == b.shape) || a.data.size() != b.data.size()) {
    throw std::invalid_argument(std::string(where) + ": shape mismatch");
  }
}

inline Sample add(const Sample& a, const Sample& b) {
  require_same_shape(a, b, "add");
  Sample out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Sample sub(const Sample& a, const Sample& b) {
  require_same_shape(a, b, "sub");
  Sample out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline Sample scaled(const Sample& a, double c) {
  Sample out = a;
  for (double& v : out.data) v *= c;
  return out;
}

// out += c * a
inline void axpy(Sample& out, double c, const Sample& a) {
  require_same_shape(out, a, "axpy");
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += c * a.data[i];
}

inline double dot(const Sample& a, const Sample& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

inline double norm_l1(const Sample& a) {
  double s = 0.0;
  for (double v : a.data) s += std::fabs(v);
  return s;
}

inline double norm_l2(const Sample& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return std::sqrt(s);
}

inline double norm_linf(const Sample& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::fabs(v));
  return m;
}

inline double max_abs_diff(const Sample& a, const Sample& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

inline bool all_finite(const Sample& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool in_unit_range(const Sample& a) {
  for (double v : a.data)
    if (v < 0.0 || v > 1.0) return false;
  return true;
}

}  // namespace difflab
