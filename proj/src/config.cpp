#include "surgrep/config.hpp"

#include <cmath>
#include <initializer_list>
#include <string_view>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"
#include "surgrep/io.hpp"

namespace surgrep {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

void check_keys(const json& section, std::string_view name,
                std::initializer_list<std::string_view> allowed) {
  if (!section.is_object()) throw Error("config: '" + std::string(name) + "' must be an object");
  for (const auto& [k, _] : section.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || k == a;
    if (!ok) throw Error("config: unknown key '" + std::string(name) + "." + k + "'");
  }
}

template <class T>
void read(const json& section, const char* key, T& out) {
  if (auto it = section.find(key); it != section.end() && !it->is_null()) out = it->get<T>();
}

template <class T>
void read(const json& section, const char* key, std::optional<T>& out) {
  if (auto it = section.find(key); it != section.end() && !it->is_null()) out = it->get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void read_path(const json& section, const char* key, const fs::path& base, fs::path& out) {
  if (auto it = section.find(key); it != section.end() && !it->is_null()) {
    out = resolve(base, it->get<std::string>());
  }
}

void read_path(const json& section, const char* key, const fs::path& base,
               std::optional<fs::path>& out) {
  if (auto it = section.find(key); it != section.end() && !it->is_null()) {
    out = resolve(base, it->get<std::string>());
  }
}

json opt_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

std::string_view granularity_name(SplitGranularity g) {
  return g == SplitGranularity::video ? "video" : "frame";
}

SplitGranularity parse_granularity(const std::string& s) {
  if (s == "video") return SplitGranularity::video;
  if (s == "frame") return SplitGranularity::frame;
  throw Error("config: split.granularity must be 'frame' or 'video', got '" + s + "'");
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error("config: " + what);
}

void require_exists(const std::optional<fs::path>& p, std::string_view key) {
  if (p && !fs::exists(*p)) {
    throw Error("config: paths." + std::string(key) + " does not exist: " + p->string());
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
  PipelineConfig c;
  try {
    check_keys(j, "config", {"paths", "windowing", "detection", "calibration", "split", "report"});
    if (auto it = j.find("paths"); it != j.end()) {
      const auto& s = *it;
      check_keys(s, "paths",
                 {"annotations", "vocabulary", "logits", "embeddings", "output",
                  "generated_frame_captions", "generated_clip_captions"});
      read_path(s, "annotations", base, c.paths.annotations);
      read_path(s, "vocabulary", base, c.paths.vocabulary);
      read_path(s, "logits", base, c.paths.logits);
      read_path(s, "embeddings", base, c.paths.embeddings);
      read_path(s, "output", base, c.paths.output);
      read_path(s, "generated_frame_captions", base, c.paths.generated_frame_captions);
      read_path(s, "generated_clip_captions", base, c.paths.generated_clip_captions);
    }
    if (auto it = j.find("windowing"); it != j.end()) {
      check_keys(*it, "windowing", {"size", "stride"});
      read(*it, "size", c.windowing.size);
      read(*it, "stride", c.windowing.stride);
    }
    if (auto it = j.find("detection"); it != j.end()) {
      const auto& s = *it;
      check_keys(s, "detection", {"mode", "threshold", "epsilon", "temperature", "class_thresholds"});
      if (s.contains("mode")) c.detection.mode = parse_squash(s.at("mode").get<std::string>());
      read(s, "threshold", c.detection.threshold);
      read(s, "epsilon", c.detection.epsilon);
      read(s, "temperature", c.detection.temperature);
      read(s, "class_thresholds", c.detection.class_thresholds);
    }
    if (auto it = j.find("calibration"); it != j.end()) {
      check_keys(*it, "calibration", {"bins", "t_min", "t_max"});
      read(*it, "bins", c.calibration.bins);
      read(*it, "t_min", c.calibration.t_min);
      read(*it, "t_max", c.calibration.t_max);
    }
    if (auto it = j.find("split"); it != j.end()) {
      const auto& s = *it;
      check_keys(s, "split", {"train", "test", "validation", "seed", "granularity"});
      read(s, "train", c.split.ratios.train);
      read(s, "test", c.split.ratios.test);
      read(s, "validation", c.split.ratios.validation);
      read(s, "seed", c.split.seed);
      if (s.contains("granularity")) {
        c.split.granularity = parse_granularity(s.at("granularity").get<std::string>());
      }
    }
    if (auto it = j.find("report"); it != j.end()) {
      const auto& s = *it;
      check_keys(s, "report", {"offline", "feed", "endpoint"});
      read(s, "offline", c.report.offline);
      if (s.contains("feed")) c.report.feed = parse_caption_feed(s.at("feed").get<std::string>());
      if (auto e = s.find("endpoint"); e != s.end()) {
        auto& ep = c.report.endpoint;
        check_keys(*e, "report.endpoint",
                   {"base_url", "path", "model", "temperature", "max_tokens", "api_key_env",
                    "timeout_seconds", "attempts", "backoff_ms", "parallelism"});
        read(*e, "base_url", ep.base_url);
        read(*e, "path", ep.path);
        read(*e, "model", ep.model);
        read(*e, "temperature", ep.temperature);
        read(*e, "max_tokens", ep.max_tokens);
        read(*e, "api_key_env", ep.api_key_env);
        if (e->contains("timeout_seconds")) {
          ep.timeout = std::chrono::milliseconds(
              std::llround(e->at("timeout_seconds").get<double>() * 1000.0));
        }
        read(*e, "attempts", ep.attempts);
        if (e->contains("backoff_ms")) {
          ep.backoff = std::chrono::milliseconds(e->at("backoff_ms").get<std::int64_t>());
        }
        read(*e, "parallelism", ep.parallelism);
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& file) {
  const auto text = io::read_file(file);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error("config: " + file.string() + " is not valid JSON");
  return from_json(j, file.parent_path());
}

json PipelineConfig::to_json() const {
  const auto& ep = report.endpoint;
  return {
      {"paths",
       {{"annotations", paths.annotations.string()},
        {"vocabulary", opt_path(paths.vocabulary)},
        {"logits", opt_path(paths.logits)},
        {"embeddings", opt_path(paths.embeddings)},
        {"output", paths.output.string()},
        {"generated_frame_captions", opt_path(paths.generated_frame_captions)},
        {"generated_clip_captions", opt_path(paths.generated_clip_captions)}}},
      {"windowing", {{"size", windowing.size}, {"stride", windowing.stride}}},
      {"detection",
       {{"mode", std::string(to_string(detection.mode))},
        {"threshold", detection.threshold},
        {"epsilon", detection.epsilon},
        {"temperature", detection.temperature ? json(*detection.temperature) : json(nullptr)},
        {"class_thresholds", detection.class_thresholds}}},
      {"calibration",
       {{"bins", calibration.bins}, {"t_min", calibration.t_min}, {"t_max", calibration.t_max}}},
      {"split",
       {{"train", split.ratios.train},
        {"test", split.ratios.test},
        {"validation", split.ratios.validation},
        {"seed", split.seed},
        {"granularity", std::string(granularity_name(split.granularity))}}},
      {"report",
       {{"offline", report.offline},
        {"feed", report.feed == CaptionFeed::raw ? "raw" : "dedup"},
        {"endpoint",
         {{"base_url", ep.base_url},
          {"path", ep.path},
          {"model", ep.model},
          {"temperature", ep.temperature},
          {"max_tokens", ep.max_tokens},
          {"api_key_env", ep.api_key_env},
          {"timeout_seconds", static_cast<double>(ep.timeout.count()) / 1000.0},
          {"attempts", ep.attempts},
          {"backoff_ms", ep.backoff.count()},
          {"parallelism", ep.parallelism}}}}}};
}

std::string PipelineConfig::hash() const { return io::hex64(io::fnv1a(to_json().dump())); }

void PipelineConfig::validate(std::string_view command) const {
  auto reads = [&](std::initializer_list<std::string_view> users) {
    if (command.empty()) return true;
    for (auto u : users) {
      if (u == command) return true;
    }
    return false;
  };
  if (reads({"preprocess", "calibrate", "evaluate"})) {
    require(!paths.annotations.empty(), "paths.annotations is required");
    require_exists(paths.annotations, "annotations");
  }
  require_exists(paths.vocabulary, "vocabulary");
  if (reads({"calibrate", "detect", "evaluate"})) require_exists(paths.logits, "logits");
  if (reads({"evaluate"})) {
    require_exists(paths.embeddings, "embeddings");
    require_exists(paths.generated_frame_captions, "generated_frame_captions");
    require_exists(paths.generated_clip_captions, "generated_clip_captions");
  }

  require(windowing.size > 0, "windowing.size must be positive");
  require(windowing.stride > 0 && windowing.stride <= windowing.size,
          "windowing.stride must be in [1, windowing.size]");
  require(detection.threshold >= 0.0 && detection.threshold <= 1.0,
          "detection.threshold must be in [0, 1]");
  require(detection.epsilon >= 0.0, "detection.epsilon must be nonnegative");
  require(!detection.temperature || *detection.temperature > 0.0,
          "detection.temperature must be positive");
  for (double t : detection.class_thresholds) {
    require(t >= 0.0 && t <= 1.0, "detection.class_thresholds must lie in [0, 1]");
  }
  require(calibration.bins > 0, "calibration.bins must be positive");
  require(calibration.t_min > 0.0 && calibration.t_min < calibration.t_max,
          "calibration needs 0 < t_min < t_max");
  const auto& r = split.ratios;
  require(r.train >= 0 && r.test >= 0 && r.validation >= 0, "split ratios must be nonnegative");
  require(std::abs(r.train + r.test + r.validation - 1.0) <= 1e-9, "split ratios must sum to 1");
  const auto& ep = report.endpoint;
  require(ep.attempts >= 1, "report.endpoint.attempts must be at least 1");
  require(ep.parallelism >= 1, "report.endpoint.parallelism must be at least 1");
  require(ep.timeout.count() > 0, "report.endpoint.timeout_seconds must be positive");
  require(!ep.api_key_env.empty(), "report.endpoint.api_key_env must name a variable");
}

}  // namespace surgrep
