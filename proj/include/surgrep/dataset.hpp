#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "surgrep/vocabulary.hpp"

namespace surgrep {

/// One (instrument, verb, target) label. A missing verb means the instrument
/// is merely present, in which case the target is missing too.
struct Triplet {
  std::size_t instrument = 0;
  std::optional<std::size_t> verb;
  std::optional<std::size_t> target;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct FrameAnnotation {
  std::string video_id;
  std::size_t frame_index = 0;  // one frame per second
  std::vector<Triplet> triplets;
  std::size_t phase = 0;

  friend bool operator==(const FrameAnnotation&, const FrameAnnotation&) = default;
};

/// All frames of one video; indices are contiguous from 0.
struct VideoRecord {
  std::string video_id;
  std::vector<FrameAnnotation> frames;

  friend bool operator==(const VideoRecord&, const VideoRecord&) = default;
};

struct FrameRef {
  std::string video_id;
  std::size_t frame_index = 0;

  friend auto operator<=>(const FrameRef&, const FrameRef&) = default;
};

enum class SplitGranularity { frame, video };

struct SplitRatios {
  double train = 0.8;
  double test = 0.1;
  double validation = 0.1;
};

struct DatasetSplit {
  std::vector<FrameRef> train;
  std::vector<FrameRef> test;
  std::vector<FrameRef> validation;
  SplitRatios ratios;
};

struct PhaseDurationRow {
  std::string phase;  // "Total" for the final row
  std::uint64_t frame_count = 0;
  std::uint64_t tenths_of_minute = 0;

  double minutes() const { return static_cast<double>(tenths_of_minute) / 10.0; }
  /// Minutes with exactly one decimal, e.g. "46.8".
  std::string minutes_text() const;
};

/// Parses line-delimited annotation records. Each line is an object with keys
/// video_id, frame, phase and triplets; triplet components are names (or
/// integer indices), with "null" allowed for verb and target.
std::vector<VideoRecord> parse_annotations(std::istream& in, const Vocabulary& vocab);
std::vector<VideoRecord> parse_annotations(std::string_view text, const Vocabulary& vocab);

/// Inverse of parse_annotations; emits one line per frame, videos in order.
void write_annotations(std::ostream& out, const std::vector<VideoRecord>& records,
                       const Vocabulary& vocab);

/// Checks a triplet against the vocabulary, throwing UnknownLabelError.
void validate(const Triplet& t, const Vocabulary& vocab);

/// Deterministic random partition. Frame granularity hits the ratios to within
/// one frame; video granularity keeps each video in a single set.
DatasetSplit split_dataset(const std::vector<VideoRecord>& records, const SplitRatios& ratios,
                           std::uint64_t seed,
                           SplitGranularity granularity = SplitGranularity::frame);

/// Frames and minutes per phase (1 frame = 1 second); the last row is the total.
std::vector<PhaseDurationRow> phase_duration_table(const std::vector<VideoRecord>& records,
                                                   const Vocabulary& vocab);

/// Same table built directly from per-phase frame counts.
std::vector<PhaseDurationRow> phase_duration_table(const std::vector<std::uint64_t>& counts,
                                                   const Vocabulary& vocab);

/// Minutes for a frame count, in tenths, rounded half up.
std::uint64_t frames_to_tenths_of_minute(std::uint64_t frames);

void write_phase_duration_csv(std::ostream& out, const std::vector<PhaseDurationRow>& rows);

/// Multi-hot truth over the detection class space (instruments ++ targets).
/// A triplet without a target marks the vocabulary's null-target class, if any.
std::vector<std::uint8_t> truth_bits(const FrameAnnotation& frame, const Vocabulary& vocab);

}  // namespace surgrep
