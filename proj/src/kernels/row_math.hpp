#pragma once

// Per-row numerics shared by the serial and parallel kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>

namespace surgrep::kernels::detail {

inline constexpr double kProbClamp = 1e-12;

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(sigmoid(x)) without overflow.
inline double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

inline double log_softmax_at(std::span<const double> z, std::size_t k, double inv_t) {
  double m = z[0] * inv_t;
  for (double v : z) m = std::max(m, v * inv_t);
  double s = 0.0;
  for (double v : z) s += std::exp(v * inv_t - m);
  return z[k] * inv_t - m - std::log(s);
}

inline double sigmoid_nll_row(std::span<const double> z, const std::uint8_t* y, double inv_t) {
  double s = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double x = z[c] * inv_t;
    s -= y[c] ? log_sigmoid(x) : log_sigmoid(-x);
  }
  return s;
}

inline double weighted_bce_row(std::span<const double> z, const std::uint8_t* y,
                               std::span<const double> w) {
  double s = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    const double p = std::clamp(sigmoid(z[c]), kProbClamp, 1.0 - kProbClamp);
    s -= w[c] * (y[c] ? std::log(p) : std::log(1.0 - p));
  }
  return s;
}

inline void probabilities_row(std::span<const double> z, bool softmax, double inv_t, double* out) {
  if (!softmax) {
    for (std::size_t c = 0; c < z.size(); ++c) out[c] = sigmoid(z[c] * inv_t);
    return;
  }
  double m = z[0] * inv_t;
  for (double v : z) m = std::max(m, v * inv_t);
  double s = 0.0;
  for (std::size_t c = 0; c < z.size(); ++c) {
    out[c] = std::exp(z[c] * inv_t - m);
    s += out[c];
  }
  for (std::size_t c = 0; c < z.size(); ++c) out[c] /= s;
}

inline void patch_copy(std::span<const double> image, std::size_t width, std::size_t channels,
                       std::size_t patch, std::size_t grid_cols, std::size_t k, double* out) {
  const std::size_t r0 = (k / grid_cols) * patch;
  const std::size_t c0 = (k % grid_cols) * patch;
  const std::size_t run = patch * channels;
  for (std::size_t r = 0; r < patch; ++r) {
    const double* src = image.data() + ((r0 + r) * width + c0) * channels;
    std::copy(src, src + run, out + r * run);
  }
}

/// Pairwise (cascade) summation; order is fixed by the input length only.
inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t h = n / 2;
  return pairwise_sum(v, h) + pairwise_sum(v + h, n - h);
}

}  // namespace surgrep::kernels::detail
