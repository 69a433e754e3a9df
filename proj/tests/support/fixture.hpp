#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "surgrep/dataset.hpp"
#include "surgrep/logits.hpp"

namespace surgrep::fixture {

// Portable draws on mt19937_64 (the standard distributions differ between
// library implementations).
double uniform01(std::mt19937_64& rng);
std::uint64_t below(std::mt19937_64& rng, std::uint64_t n);
double normal(std::mt19937_64& rng);

struct CorpusOptions {
  std::size_t videos = 10;
  std::size_t min_frames = 60;
  std::size_t max_frames = 160;
  std::uint64_t seed = 7;
};

/// Videos named VID01, VID02, ... whose phases advance monotonically and whose
/// actions persist over short runs of frames.
std::vector<VideoRecord> corpus(const CorpusOptions& opts, const Vocabulary& vocab);

/// 32 frames: 22 of preparation then 10 of calot-triangle-dissection, each with
/// the grasper grasping the gallbladder and the hook present.
VideoRecord two_phase_clip(const Vocabulary& vocab);

/// Noisy logits separating true from false classes; `label` carries the first
/// true class (or the last class when a frame has none).
std::vector<LogitsRecord> logits_for(const std::vector<VideoRecord>& records,
                                     const Vocabulary& vocab, std::uint64_t seed);

/// Writes annotations/, logits.jsonl and config.json under `dir`.
void write_corpus_dir(const std::filesystem::path& dir, const CorpusOptions& opts);

}  // namespace surgrep::fixture
