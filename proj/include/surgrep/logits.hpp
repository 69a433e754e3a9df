#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace surgrep {

/// How raw scores become probabilities.
enum class Squash { sigmoid, softmax };

Squash parse_squash(std::string_view name);
std::string_view to_string(Squash s);

/// Dense row-major score matrix, one row per sample.
struct LogitMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  LogitMatrix() = default;
  LogitMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
};

/// Externally produced per-frame scores over the detection classes.
struct LogitsRecord {
  std::string video_id;
  std::size_t frame_index = 0;
  std::vector<double> logits;
  std::optional<int> label;  // single-class label, used by softmax calibration
};

/// Reads {"video_id", "frame", "logits": [...], optional "label"} lines;
/// every row must have `classes` finite values.
std::vector<LogitsRecord> read_logits(std::istream& in, std::size_t classes);
void write_logits(std::ostream& out, std::span<const LogitsRecord> records);

}  // namespace surgrep
