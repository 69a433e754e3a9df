#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "surgrep/calibration.hpp"
#include "surgrep/dataset.hpp"
#include "surgrep/logits.hpp"
#include "surgrep/report.hpp"

namespace surgrep {

struct PathsConfig {
  std::filesystem::path annotations;  // a .jsonl file or a directory of them
  std::optional<std::filesystem::path> vocabulary;
  std::optional<std::filesystem::path> logits;
  std::optional<std::filesystem::path> embeddings;
  std::filesystem::path output = "out";
  std::optional<std::filesystem::path> generated_frame_captions;
  std::optional<std::filesystem::path> generated_clip_captions;
};

struct WindowingConfig {
  std::size_t size = 32;
  std::size_t stride = 16;
};

struct DetectionConfig {
  Squash mode = Squash::sigmoid;
  double threshold = 0.5;
  double epsilon = 1e-6;
  std::optional<double> temperature;  // unset: fitted value from calibration.json, else 1
  std::vector<double> class_thresholds;  // empty: the scalar threshold for every class
};

struct CalibrationConfig {
  std::size_t bins = kDefaultBins;
  double t_min = 0.05;
  double t_max = 20.0;
};

struct SplitConfig {
  SplitRatios ratios;
  std::uint64_t seed = 0;
  SplitGranularity granularity = SplitGranularity::frame;
};

struct ReportConfig {
  bool offline = true;
  CaptionFeed feed = CaptionFeed::raw;
  EndpointConfig endpoint;
};

struct PipelineConfig {
  PathsConfig paths;
  WindowingConfig windowing;
  DetectionConfig detection;
  CalibrationConfig calibration;
  SplitConfig split;
  ReportConfig report;

  /// Relative paths are resolved against `base`. Unknown keys are rejected.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base);
  static PipelineConfig load(const std::filesystem::path& file);

  nlohmann::json to_json() const;

  /// FNV-1a over the canonical JSON form.
  std::string hash() const;

  /// Numeric preconditions plus existence of the input paths `command` reads
  /// (every configured input path when `command` is empty).
  void validate(std::string_view command = {}) const;
};

}  // namespace surgrep
