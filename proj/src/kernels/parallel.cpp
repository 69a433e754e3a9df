#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "row_math.hpp"
#include "surgrep/kernels.hpp"

namespace surgrep::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace parallel {

namespace {

std::size_t block_count(std::size_t rows) { return (rows + kBlockRows - 1) / kBlockRows; }

// Sums f(i) over [0, rows) as fixed blocks combined pairwise.
template <typename RowFn>
double blocked_sum(std::size_t rows, RowFn&& f) {
  const auto nb = static_cast<std::ptrdiff_t>(block_count(rows));
  std::vector<double> partial(static_cast<std::size_t>(nb), 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlockRows;
    const std::size_t hi = std::min(rows, lo + kBlockRows);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += f(i);
    partial[static_cast<std::size_t>(b)] = s;
  }
  return detail::pairwise_sum(partial.data(), partial.size());
}

}  // namespace

double nll_softmax_sum(const LogitMatrix& logits, std::span<const int> labels, double temperature) {
  const double inv_t = 1.0 / temperature;
  return -blocked_sum(logits.rows, [&](std::size_t i) {
    return detail::log_softmax_at(logits.row(i), static_cast<std::size_t>(labels[i]), inv_t);
  });
}

double nll_sigmoid_sum(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       double temperature) {
  const double inv_t = 1.0 / temperature;
  return blocked_sum(logits.rows, [&](std::size_t i) {
    return detail::sigmoid_nll_row(logits.row(i), bits.data() + i * logits.cols, inv_t);
  });
}

BinTotals bin_totals(std::span<const double> confidences, std::span<const std::uint8_t> outcomes,
                     std::size_t bins) {
  const std::size_t n = confidences.size();
  const auto nb = static_cast<std::ptrdiff_t>(block_count(n));
  std::vector<BinTotals> partial(static_cast<std::size_t>(nb), BinTotals(bins));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nb; ++b) {
    auto& t = partial[static_cast<std::size_t>(b)];
    const std::size_t lo = static_cast<std::size_t>(b) * kBlockRows;
    const std::size_t hi = std::min(n, lo + kBlockRows);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto k = bin_of(confidences[i], bins);
      ++t.count[k];
      t.conf_sum[k] += confidences[i];
      t.acc_sum[k] += outcomes[i] ? 1.0 : 0.0;
    }
  }
  BinTotals total(bins);
  std::vector<double> conf(partial.size()), acc(partial.size());
  for (std::size_t k = 0; k < bins; ++k) {
    for (std::size_t b = 0; b < partial.size(); ++b) {
      total.count[k] += partial[b].count[k];
      conf[b] = partial[b].conf_sum[k];
      acc[b] = partial[b].acc_sum[k];
    }
    total.conf_sum[k] = detail::pairwise_sum(conf.data(), conf.size());
    total.acc_sum[k] = detail::pairwise_sum(acc.data(), acc.size());
  }
  return total;
}

void patchify(std::span<const double> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t patch, std::span<double> out) {
  const std::size_t grid_cols = width / patch;
  const auto n = static_cast<std::ptrdiff_t>((height / patch) * grid_cols);
  const std::size_t len = patch * patch * channels;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    detail::patch_copy(image, width, channels, patch, grid_cols, kk, out.data() + kk * len);
  }
}

void weighted_bce_rows(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       std::span<const double> weights, std::span<double> out) {
  const auto rows = static_cast<std::ptrdiff_t>(logits.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    out[r] = detail::weighted_bce_row(logits.row(r), bits.data() + r * logits.cols, weights);
  }
}

void probabilities(const LogitMatrix& logits, Squash mode, double temperature,
                   std::span<double> out) {
  const double inv_t = 1.0 / temperature;
  const auto rows = static_cast<std::ptrdiff_t>(logits.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto r = static_cast<std::size_t>(i);
    detail::probabilities_row(logits.row(r), mode == Squash::softmax, inv_t,
                              out.data() + r * logits.cols);
  }
}

}  // namespace parallel
}  // namespace surgrep::kernels
