#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "surgrep/dataset.hpp"
#include "surgrep/logits.hpp"

namespace surgrep {

/// H x W x C grid stored row-major with channels interleaved last.
struct ImageMatrix {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> data;

  ImageMatrix() = default;
  ImageMatrix(std::size_t h, std::size_t w, std::size_t c = 3)
      : height(h), width(w), channels(c), data(h * w * c, 0.0) {}

  double& at(std::size_t r, std::size_t c, std::size_t ch = 0) {
    return data[(r * width + c) * channels + ch];
  }
  double at(std::size_t r, std::size_t c, std::size_t ch = 0) const {
    return data[(r * width + c) * channels + ch];
  }

  friend bool operator==(const ImageMatrix&, const ImageMatrix&) = default;
};

/// Flattened non-overlapping patches in dense row-major grid order. Positions
/// are 1-based: patch i (0-based storage) carries position i + 1.
struct PatchSequence {
  std::size_t patch_size = 0;
  std::size_t channels = 0;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  std::vector<double> values;

  std::size_t count() const { return grid_rows * grid_cols; }
  std::size_t patch_length() const { return patch_size * patch_size * channels; }
  std::size_t position(std::size_t i) const { return i + 1; }
  std::span<const double> patch(std::size_t i) const {
    return {values.data() + i * patch_length(), patch_length()};
  }
};

/// H * W / p^2. Throws PreconditionError unless p divides both sides.
std::size_t patch_count(std::size_t height, std::size_t width, std::size_t patch);

PatchSequence patchify(const ImageMatrix& image, std::size_t patch);

/// Reassembles the image a PatchSequence was cut from.
ImageMatrix unpatchify(const PatchSequence& patches);

/// Applies z / T, then the selected squashing.
std::vector<double> probabilities_from_logits(std::span<const double> logits, Squash mode,
                                              double temperature = 1.0);

/// Probabilities for every row of a matrix (parallel over rows).
LogitMatrix probabilities_from_logits(const LogitMatrix& logits, Squash mode,
                                      double temperature = 1.0);

struct DetectionSet {
  std::string video_id;
  std::size_t frame_index = 0;
  std::vector<std::size_t> detected;  // ascending class indices
  std::vector<double> probabilities;
};

inline constexpr double kDefaultThreshold = 0.5;

/// Classes whose probability strictly exceeds the threshold.
DetectionSet threshold_detect(std::span<const double> probabilities,
                              double threshold = kDefaultThreshold);

/// Per-class thresholds; `thresholds` must match the probability count.
DetectionSet threshold_detect(std::span<const double> probabilities,
                              std::span<const double> thresholds);

inline constexpr double kDefaultWeightEpsilon = 1e-6;

struct ClassWeights {
  std::vector<double> weights;  // sums to 1
  double epsilon = kDefaultWeightEpsilon;
};

/// Inverse-frequency weights 1 / (f_i + eps), normalized to sum to one.
ClassWeights class_weights(std::span<const double> frequencies,
                           double epsilon = kDefaultWeightEpsilon);

/// Positive-frame count per detection class.
std::vector<double> class_frequencies(const std::vector<VideoRecord>& records,
                                      const Vocabulary& vocab);

/// -sum_i w_i [y_i log s(z_i) + (1 - y_i) log(1 - s(z_i))] with s(z) clamped
/// to [1e-12, 1 - 1e-12].
double weighted_bce(std::span<const std::uint8_t> labels, std::span<const double> logits,
                    const ClassWeights& weights);

/// weighted_bce averaged over the rows of a batch; `labels` is rows x cols.
double mean_weighted_bce(const LogitMatrix& logits, std::span<const std::uint8_t> labels,
                         const ClassWeights& weights);

/// One line per frame: {"video_id", "frame", "probabilities", "detected": [names]}.
void write_detections(std::ostream& out, std::span<const DetectionSet> detections,
                      const Vocabulary& vocab);

}  // namespace surgrep
