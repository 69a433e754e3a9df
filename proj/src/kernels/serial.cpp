#include <cmath>

#include "row_math.hpp"
#include "surgrep/error.hpp"
#include "surgrep/kernels.hpp"

namespace surgrep::kernels {

std::size_t bin_of(double confidence, std::size_t bins) {
  if (!(confidence >= 0.0)) return 0;
  auto b = static_cast<std::size_t>(std::floor(confidence * static_cast<double>(bins)));
  return std::min(b, bins - 1);
}

namespace serial {

double nll_softmax_sum(const LogitMatrix& logits, std::span<const int> labels, double temperature) {
  const double inv_t = 1.0 / temperature;
  double s = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    s -= detail::log_softmax_at(logits.row(i), static_cast<std::size_t>(labels[i]), inv_t);
  }
  return s;
}

double nll_sigmoid_sum(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       double temperature) {
  const double inv_t = 1.0 / temperature;
  double s = 0.0;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    s += detail::sigmoid_nll_row(logits.row(i), bits.data() + i * logits.cols, inv_t);
  }
  return s;
}

BinTotals bin_totals(std::span<const double> confidences, std::span<const std::uint8_t> outcomes,
                     std::size_t bins) {
  BinTotals t(bins);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const auto b = bin_of(confidences[i], bins);
    ++t.count[b];
    t.conf_sum[b] += confidences[i];
    t.acc_sum[b] += outcomes[i] ? 1.0 : 0.0;
  }
  return t;
}

void patchify(std::span<const double> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t patch, std::span<double> out) {
  const std::size_t grid_cols = width / patch;
  const std::size_t n = (height / patch) * grid_cols;
  const std::size_t len = patch * patch * channels;
  for (std::size_t k = 0; k < n; ++k) {
    detail::patch_copy(image, width, channels, patch, grid_cols, k, out.data() + k * len);
  }
}

void weighted_bce_rows(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       std::span<const double> weights, std::span<double> out) {
  for (std::size_t i = 0; i < logits.rows; ++i) {
    out[i] = detail::weighted_bce_row(logits.row(i), bits.data() + i * logits.cols, weights);
  }
}

void probabilities(const LogitMatrix& logits, Squash mode, double temperature,
                   std::span<double> out) {
  const double inv_t = 1.0 / temperature;
  for (std::size_t i = 0; i < logits.rows; ++i) {
    detail::probabilities_row(logits.row(i), mode == Squash::softmax, inv_t,
                              out.data() + i * logits.cols);
  }
}

}  // namespace serial
}  // namespace surgrep::kernels
