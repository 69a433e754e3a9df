#include "surgrep/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <nlohmann/json.hpp>

#include "surgrep/detection.hpp"
#include "surgrep/error.hpp"
#include "surgrep/io.hpp"
#include "surgrep/kernels.hpp"

namespace surgrep {

namespace {

void check_temperature(double t) {
  if (!(t > 0) || !std::isfinite(t)) throw PreconditionError("temperature must be positive");
}

void check_shapes(const ValidationSet& d, Squash mode) {
  if (d.logits.rows == 0) throw PreconditionError("empty validation set");
  if (mode == Squash::softmax) {
    if (d.classes.size() != d.logits.rows) {
      throw PreconditionError("softmax calibration needs one class label per row");
    }
    for (int c : d.classes) {
      if (c < 0 || static_cast<std::size_t>(c) >= d.logits.cols) {
        throw PreconditionError("class label out of range: " + std::to_string(c));
      }
    }
  } else if (d.bits.size() != d.logits.values.size()) {
    throw PreconditionError("sigmoid calibration needs a label bit per logit");
  }
}

bool degenerate(const ValidationSet& d, Squash mode) {
  if (mode == Squash::softmax) {
    return std::all_of(d.classes.begin(), d.classes.end(),
                       [&](int c) { return c == d.classes.front(); });
  }
  for (std::size_t c = 0; c < d.logits.cols; ++c) {
    for (std::size_t r = 1; r < d.logits.rows; ++r) {
      if (d.bits[r * d.logits.cols + c] != d.bits[c]) return false;
    }
  }
  return true;
}

}  // namespace

std::size_t ReliabilityBins::total() const {
  std::size_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

ReliabilityBins reliability_bins(std::span<const double> confidences,
                                 std::span<const std::uint8_t> correct, std::size_t bins) {
  if (confidences.size() != correct.size()) {
    throw PreconditionError("reliability_bins: confidences and correctness differ in length");
  }
  if (bins == 0) throw PreconditionError("reliability_bins: need at least one bin");
  for (double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) throw PreconditionError("confidence outside [0, 1]");
  }
  const auto totals = kernels::parallel::bin_totals(confidences, correct, bins);
  ReliabilityBins out;
  out.bins.resize(bins);
  for (std::size_t m = 0; m < bins; ++m) {
    auto& b = out.bins[m];
    b.lo = static_cast<double>(m) / static_cast<double>(bins);
    b.hi = static_cast<double>(m + 1) / static_cast<double>(bins);
    b.count = totals.count[m];
    if (b.count > 0) {
      b.confidence = totals.conf_sum[m] / static_cast<double>(b.count);
      b.accuracy = totals.acc_sum[m] / static_cast<double>(b.count);
    }
  }
  return out;
}

double ece(const ReliabilityBins& bins) {
  const auto n = bins.total();
  if (n == 0) return 0.0;
  double e = 0.0;
  for (const auto& b : bins.bins) {
    e += static_cast<double>(b.count) / static_cast<double>(n) * std::abs(b.accuracy - b.confidence);
  }
  return e;
}

double nll_softmax(const LogitMatrix& logits, std::span<const int> classes, double temperature) {
  check_temperature(temperature);
  if (logits.rows == 0) throw PreconditionError("nll: empty input");
  if (classes.size() != logits.rows) throw PreconditionError("nll: labels and logits differ in length");
  return kernels::parallel::nll_softmax_sum(logits, classes, temperature) /
         static_cast<double>(logits.rows);
}

double nll_sigmoid(const LogitMatrix& logits, std::span<const std::uint8_t> bits,
                   double temperature) {
  check_temperature(temperature);
  if (logits.rows == 0) throw PreconditionError("nll: empty input");
  if (bits.size() != logits.values.size()) throw PreconditionError("nll: label bits shape mismatch");
  return kernels::parallel::nll_sigmoid_sum(logits, bits, temperature) /
         static_cast<double>(logits.rows);
}

double nll(const ValidationSet& data, double temperature, Squash mode) {
  return mode == Squash::softmax ? nll_softmax(data.logits, data.classes, temperature)
                                 : nll_sigmoid(data.logits, data.bits, temperature);
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ConfidencePairs confidence_pairs(const ValidationSet& data, double temperature, Squash mode) {
  check_shapes(data, mode);
  const auto probs = probabilities_from_logits(data.logits, mode, temperature);
  ConfidencePairs out;
  if (mode == Squash::softmax) {
    out.confidence.reserve(probs.rows);
    out.correct.reserve(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
      auto row = probs.row(i);
      const auto k = argmax(row);
      out.confidence.push_back(row[k]);
      out.correct.push_back(static_cast<int>(k) == data.classes[i] ? 1 : 0);
    }
  } else {
    out.confidence = probs.values;
    out.correct = data.bits;
  }
  return out;
}

CalibrationResult fit_temperature(const ValidationSet& data, const TemperatureSearch& search) {
  if (!(search.t_lo > 0) || !(search.t_lo < search.t_hi)) {
    throw PreconditionError("temperature search range must satisfy 0 < T_lo < T_hi");
  }
  if (search.grid_points < 3) throw PreconditionError("temperature grid needs at least 3 points");
  check_shapes(data, search.mode);

  CalibrationResult r;
  r.mode = search.mode;
  if (degenerate(data, search.mode)) {
    r.warnings.push_back("degenerate validation set: every sample carries the same label");
  }

  auto objective = [&](double log_t) { return nll(data, std::exp(log_t), search.mode); };

  const double a0 = std::log(search.t_lo);
  const double b0 = std::log(search.t_hi);
  const std::size_t g = search.grid_points;
  std::vector<double> grid(g), values(g);
  for (std::size_t i = 0; i < g; ++i) {
    grid[i] = a0 + (b0 - a0) * static_cast<double>(i) / static_cast<double>(g - 1);
    values[i] = objective(grid[i]);
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) -
                                             values.begin());
  std::size_t local_minima = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const bool left = i == 0 || values[i] < values[i - 1];
    const bool right = i + 1 == g || values[i] < values[i + 1];
    if (left && right) ++local_minima;
  }
  if (local_minima > 1) r.warnings.push_back("NLL is not unimodal over the temperature grid");

  double a = grid[best == 0 ? 0 : best - 1];
  double b = grid[best + 1 == g ? g - 1 : best + 1];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  while (b - a > search.relative_tolerance) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  double log_t = 0.5 * (a + b);
  double f = objective(log_t);
  if (values[best] < f) {
    log_t = grid[best];
    f = values[best];
  }

  r.nll_before = nll(data, 1.0, search.mode);
  if (search.t_lo <= 1.0 && 1.0 <= search.t_hi && r.nll_before <= f) {
    log_t = 0.0;
    f = r.nll_before;
  }
  r.temperature = std::exp(log_t);
  r.nll_after = f;

  const auto before = confidence_pairs(data, 1.0, search.mode);
  const auto after = confidence_pairs(data, r.temperature, search.mode);
  r.bins_before = reliability_bins(before.confidence, before.correct, search.bins);
  r.bins_after = reliability_bins(after.confidence, after.correct, search.bins);
  r.ece_before = ece(r.bins_before);
  r.ece_after = ece(r.bins_after);
  return r;
}

void write_calibration_json(std::ostream& out, const CalibrationResult& r) {
  auto bins_json = [](const ReliabilityBins& bins) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& b : bins.bins) {
      arr.push_back({{"bin_lo", b.lo}, {"bin_hi", b.hi}, {"count", b.count},
                     {"conf", b.confidence}, {"acc", b.accuracy}});
    }
    return arr;
  };
  nlohmann::json j = {{"mode", std::string(to_string(r.mode))},
                      {"temperature", r.temperature},
                      {"ece_before", r.ece_before},
                      {"ece_after", r.ece_after},
                      {"nll_before", r.nll_before},
                      {"nll_after", r.nll_after},
                      {"bins_before", bins_json(r.bins_before)},
                      {"bins_after", bins_json(r.bins_after)},
                      {"warnings", r.warnings}};
  out << j.dump(2) << '\n';
}

void write_bins_csv(std::ostream& out, const ReliabilityBins& bins) {
  out << "bin_lo,bin_hi,count,conf,acc\n";
  for (const auto& b : bins.bins) {
    out << io::format_double(b.lo) << ',' << io::format_double(b.hi) << ',' << b.count << ','
        << io::format_double(b.confidence) << ',' << io::format_double(b.accuracy) << '\n';
  }
}

}  // namespace surgrep
