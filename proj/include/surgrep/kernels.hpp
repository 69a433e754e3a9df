#pragma once

// Data-parallel inner loops. Each kernel has a plain serial reference and an
// OpenMP variant; the public module APIs call the parallel one and the tests
// hold the two against each other.
//
// Parallel reductions sum fixed-size blocks and then combine block partials
// pairwise, so results do not depend on the thread count.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "surgrep/logits.hpp"

namespace surgrep::kernels {

inline constexpr std::size_t kBlockRows = 256;

/// Per-bin accumulators of a reliability histogram.
struct BinTotals {
  std::vector<std::uint64_t> count;
  std::vector<double> conf_sum;
  std::vector<double> acc_sum;

  explicit BinTotals(std::size_t bins = 0) : count(bins, 0), conf_sum(bins, 0.0), acc_sum(bins, 0.0) {}
};

/// Bin of a confidence in [0, 1] among `bins` equal intervals; 1.0 goes to the
/// last bin.
std::size_t bin_of(double confidence, std::size_t bins);

/// Number of threads the parallel kernels may use (1 without OpenMP).
int max_threads();
void set_threads(int n);

namespace serial {

/// Sum over rows of -log softmax(row / T)[label].
double nll_softmax_sum(const LogitMatrix& logits, std::span<const int> labels, double temperature);

/// Sum over all cells of the binary cross-entropy of sigmoid(z / T).
double nll_sigmoid_sum(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       double temperature);

BinTotals bin_totals(std::span<const double> confidences, std::span<const std::uint8_t> outcomes,
                     std::size_t bins);

/// Image is H x W x C row-major with channels last; out receives N patches of
/// p*p*C values each, patches row-major over the grid.
void patchify(std::span<const double> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t patch, std::span<double> out);

/// Per-row weighted BCE with probabilities clamped to [1e-12, 1 - 1e-12].
void weighted_bce_rows(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       std::span<const double> weights, std::span<double> out);

/// Row-wise probabilities of z / T.
void probabilities(const LogitMatrix& logits, Squash mode, double temperature,
                   std::span<double> out);

}  // namespace serial

namespace parallel {

double nll_softmax_sum(const LogitMatrix& logits, std::span<const int> labels, double temperature);
double nll_sigmoid_sum(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       double temperature);
BinTotals bin_totals(std::span<const double> confidences, std::span<const std::uint8_t> outcomes,
                     std::size_t bins);
void patchify(std::span<const double> image, std::size_t height, std::size_t width,
              std::size_t channels, std::size_t patch, std::span<double> out);
void weighted_bce_rows(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                       std::span<const double> weights, std::span<double> out);
void probabilities(const LogitMatrix& logits, Squash mode, double temperature,
                   std::span<double> out);

}  // namespace parallel

}  // namespace surgrep::kernels
