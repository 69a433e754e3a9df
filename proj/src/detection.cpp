#include "surgrep/detection.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"
#include "surgrep/io.hpp"
#include "surgrep/kernels.hpp"

namespace surgrep {

Squash parse_squash(std::string_view name) {
  if (name == "sigmoid") return Squash::sigmoid;
  if (name == "softmax") return Squash::softmax;
  throw PreconditionError("unknown mode '" + std::string(name) + "' (expected sigmoid or softmax)");
}

std::string_view to_string(Squash s) { return s == Squash::softmax ? "softmax" : "sigmoid"; }

std::vector<LogitsRecord> read_logits(std::istream& in, std::size_t classes) {
  std::vector<LogitsRecord> out;
  io::for_each_record(in, [&](const nlohmann::json& j, std::size_t line) {
    LogitsRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    r.frame_index = j.at("frame").get<std::size_t>();
    r.logits = j.at("logits").get<std::vector<double>>();
    if (r.logits.size() != classes) {
      throw ParseError("expected " + std::to_string(classes) + " logits, got " +
                           std::to_string(r.logits.size()),
                       line);
    }
    for (double v : r.logits) {
      if (!std::isfinite(v)) throw ParseError("non-finite logit", line);
    }
    if (j.contains("label")) r.label = j.at("label").get<int>();
    out.push_back(std::move(r));
  });
  return out;
}

void write_logits(std::ostream& out, std::span<const LogitsRecord> records) {
  for (const auto& r : records) {
    nlohmann::json j = {{"video_id", r.video_id}, {"frame", r.frame_index}, {"logits", r.logits}};
    if (r.label) j["label"] = *r.label;
    out << j.dump() << '\n';
  }
}

std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch) {
  if (patch == 0 || height == 0 || width == 0 || height % patch != 0 || width % patch != 0) {
    throw PreconditionError("patch size " + std::to_string(patch) + " does not divide " +
                            std::to_string(height) + "x" + std::to_string(width));
  }
  return (height * width) / (patch * patch);
}

PatchSequence patchify(const ImageMatrix& image, std::size_t patch) {
  const auto n = patch_count(image.height, image.width, patch);
  PatchSequence seq;
  seq.patch_size = patch;
  seq.channels = image.channels;
  seq.grid_rows = image.height / patch;
  seq.grid_cols = image.width / patch;
  seq.values.resize(n * seq.patch_length());
  kernels::parallel::patchify(image.data, image.height, image.width, image.channels, patch,
                              seq.values);
  return seq;
}

ImageMatrix unpatchify(const PatchSequence& patches) {
  const auto p = patches.patch_size;
  ImageMatrix img(patches.grid_rows * p, patches.grid_cols * p, patches.channels);
  const std::size_t run = p * patches.channels;
  for (std::size_t k = 0; k < patches.count(); ++k) {
    const std::size_t r0 = (k / patches.grid_cols) * p;
    const std::size_t c0 = (k % patches.grid_cols) * p;
    auto src = patches.patch(k);
    for (std::size_t r = 0; r < p; ++r) {
      std::copy_n(src.data() + r * run, run,
                  img.data.data() + ((r0 + r) * img.width + c0) * img.channels);
    }
  }
  return img;
}

std::vector<double> probabilities_from_logits(std::span<const double> logits, Squash mode,
                                              double temperature) {
  if (!(temperature > 0)) throw PreconditionError("temperature must be positive");
  LogitMatrix m(1, logits.size());
  std::copy(logits.begin(), logits.end(), m.values.begin());
  std::vector<double> out(logits.size());
  kernels::serial::probabilities(m, mode, temperature, out);
  return out;
}

LogitMatrix probabilities_from_logits(const LogitMatrix& logits, Squash mode, double temperature) {
  if (!(temperature > 0)) throw PreconditionError("temperature must be positive");
  LogitMatrix out(logits.rows, logits.cols);
  kernels::parallel::probabilities(logits, mode, temperature, out.values);
  return out;
}

DetectionSet threshold_detect(std::span<const double> probabilities, double threshold) {
  DetectionSet d;
  d.probabilities.assign(probabilities.begin(), probabilities.end());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] > threshold) d.detected.push_back(i);
  }
  return d;
}

DetectionSet threshold_detect(std::span<const double> probabilities,
                              std::span<const double> thresholds) {
  if (thresholds.size() != probabilities.size()) {
    throw PreconditionError("per-class thresholds must match the class count");
  }
  DetectionSet d;
  d.probabilities.assign(probabilities.begin(), probabilities.end());
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (probabilities[i] > thresholds[i]) d.detected.push_back(i);
  }
  return d;
}

ClassWeights class_weights(std::span<const double> frequencies, double epsilon) {
  if (epsilon < 0) throw PreconditionError("epsilon must be nonnegative");
  ClassWeights cw;
  cw.epsilon = epsilon;
  cw.weights.reserve(frequencies.size());
  double total = 0.0;
  for (double f : frequencies) {
    if (f < 0) throw PreconditionError("class frequencies must be nonnegative");
    if (f + epsilon == 0) throw PreconditionError("zero frequency requires a positive epsilon");
    cw.weights.push_back(1.0 / (f + epsilon));
    total += cw.weights.back();
  }
  for (double& w : cw.weights) w /= total;
  return cw;
}

std::vector<double> class_frequencies(const std::vector<VideoRecord>& records,
                                      const Vocabulary& vocab) {
  std::vector<double> freq(vocab.detection_classes(), 0.0);
  for (const auto& v : records) {
    for (const auto& f : v.frames) {
      auto bits = truth_bits(f, vocab);
      for (std::size_t c = 0; c < bits.size(); ++c) freq[c] += bits[c];
    }
  }
  return freq;
}

double weighted_bce(std::span<const std::uint8_t> labels, std::span<const double> logits,
                    const ClassWeights& weights) {
  if (labels.size() != logits.size() || weights.weights.size() != logits.size()) {
    throw PreconditionError("weighted_bce: labels, logits and weights must have equal length");
  }
  LogitMatrix m(1, logits.size());
  std::copy(logits.begin(), logits.end(), m.values.begin());
  double out = 0.0;
  kernels::serial::weighted_bce_rows(m, labels, weights.weights, {&out, 1});
  return out;
}

double mean_weighted_bce(const LogitMatrix& logits, std::span<const std::uint8_t> labels,
                         const ClassWeights& weights) {
  if (labels.size() != logits.values.size() || weights.weights.size() != logits.cols) {
    throw PreconditionError("mean_weighted_bce: shape mismatch");
  }
  if (logits.rows == 0) throw PreconditionError("mean_weighted_bce: empty batch");
  std::vector<double> per_row(logits.rows);
  kernels::parallel::weighted_bce_rows(logits, labels, weights.weights, per_row);
  double s = 0.0;
  for (double v : per_row) s += v;
  return s / static_cast<double>(logits.rows);
}

void write_detections(std::ostream& out, std::span<const DetectionSet> detections,
                      const Vocabulary& vocab) {
  for (const auto& d : detections) {
    nlohmann::json names = nlohmann::json::array();
    for (auto c : d.detected) names.push_back(vocab.detection_class_name(c));
    out << nlohmann::json{{"video_id", d.video_id},
                          {"frame", d.frame_index},
                          {"probabilities", d.probabilities},
                          {"detected", names}}
               .dump()
        << '\n';
  }
}

}  // namespace surgrep
