#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "surgrep/logits.hpp"

namespace surgrep {

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double confidence = 0.0;  // mean predicted confidence, 0 when empty
  double accuracy = 0.0;    // mean correctness, 0 when empty
};

/// M equal-width bins over [0, 1].
struct ReliabilityBins {
  std::vector<ReliabilityBin> bins;

  std::size_t total() const;
};

inline constexpr std::size_t kDefaultBins = 10;

/// Sample with confidence c goes to bin floor(c * M); c = 1 goes to the last bin.
ReliabilityBins reliability_bins(std::span<const double> confidences,
                                 std::span<const std::uint8_t> correct,
                                 std::size_t bins = kDefaultBins);

/// Sum over bins of |B|/n * |acc(B) - conf(B)|; 0 for no samples.
double ece(const ReliabilityBins& bins);

/// Held-out scores with their labels. Softmax mode reads `classes` (one index
/// per row); sigmoid mode reads `bits` (rows x cols multi-hot).
struct ValidationSet {
  LogitMatrix logits;
  std::vector<int> classes;
  std::vector<std::uint8_t> bits;
};

/// Mean over samples of -log softmax(z / T)[label].
double nll_softmax(const LogitMatrix& logits, std::span<const int> classes, double temperature);

/// Mean over samples of the per-sample summed binary cross-entropy of sigmoid(z / T).
double nll_sigmoid(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                   double temperature);

double nll(const ValidationSet& data, double temperature, Squash mode);

/// Confidence/correctness pairs used for reliability analysis.
///  softmax: top-1 probability, correct when the argmax equals the label.
///  sigmoid: every per-class probability paired with that class's label bit.
struct ConfidencePairs {
  std::vector<double> confidence;
  std::vector<std::uint8_t> correct;
};
ConfidencePairs confidence_pairs(const ValidationSet& data, double temperature, Squash mode);

std::size_t argmax(std::span<const double> v);

struct TemperatureSearch {
  Squash mode = Squash::sigmoid;
  double t_lo = 0.05;
  double t_hi = 20.0;
  std::size_t bins = kDefaultBins;
  std::size_t grid_points = 64;
  double relative_tolerance = 1e-4;
};

struct CalibrationResult {
  Squash mode = Squash::sigmoid;
  double temperature = 1.0;
  double ece_before = 0.0;
  double ece_after = 0.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
  ReliabilityBins bins_before;
  ReliabilityBins bins_after;
  std::vector<std::string> warnings;
};

/// Minimizes NLL over log T: a coarse grid scan picks the bracket, golden
/// section refines it, and T = 1 is kept if it is no worse.
CalibrationResult fit_temperature(const ValidationSet& data, const TemperatureSearch& search = {});

/// {"temperature", "ece_before", ...} as one JSON object.
void write_calibration_json(std::ostream& out, const CalibrationResult& r);

/// bin_lo,bin_hi,count,conf,acc
void write_bins_csv(std::ostream& out, const ReliabilityBins& bins);

}  // namespace surgrep
