#include "fixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <numbers>
#include <string>

#include <nlohmann/json.hpp>

#include "surgrep/io.hpp"

namespace surgrep::fixture {

namespace {

struct NamedAction {
  const char* instrument;
  const char* verb;  // nullptr: present only
  const char* target;
};

// Plausible actions per phase, in phase order.
const std::vector<std::vector<NamedAction>>& repertoire() {
  static const std::vector<std::vector<NamedAction>> table = {
      {{"grasper", "retract", "gallbladder"},
       {"grasper", "grasp", "gallbladder"},
       {"hook", "dissect", "gallbladder"},
       {"hook", nullptr, nullptr},
       {"clipper", "retract", "omentum"}},
      {{"grasper", "retract", "gallbladder"},
       {"hook", "dissect", "cystic_duct"},
       {"hook", "dissect", "cystic_artery"},
       {"bipolar", "coagulate", "blood_vessel"},
       {"hook", nullptr, nullptr}},
      {{"clipper", "clip", "cystic_artery"},
       {"clipper", "clip", "cystic_duct"},
       {"scissors", "cut", "cystic_duct"},
       {"grasper", "retract", "gallbladder"}},
      {{"hook", "dissect", "gallbladder"},
       {"grasper", "retract", "liver"},
       {"irrigator", "retract", "liver"},
       {"grasper", nullptr, nullptr}},
      {{"grasper", "pack", "gallbladder"}, {"grasper", "grasp", "specimen_bag"}},
      {{"irrigator", "aspirate", "fluid"},
       {"bipolar", "coagulate", "omentum"},
       {"irrigator", "irrigate", "abdominal_wall_cavity"},
       {"grasper", "retract", "liver"}},
      {{"grasper", "grasp", "specimen_bag"},
       {"grasper", nullptr, nullptr},
       {"hook", "dissect", "gallbladder"}},
  };
  return table;
}

Triplet resolve(const NamedAction& a, const Vocabulary& vocab) {
  Triplet t;
  t.instrument = *vocab.find(Category::instrument, a.instrument);
  if (a.verb) {
    t.verb = vocab.find(Category::verb, a.verb);
    t.target = vocab.find(Category::target, a.target);
  }
  return t;
}

std::string video_name(std::size_t i) {
  std::string n = std::to_string(i + 1);
  return "VID" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
}

}  // namespace

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const auto x = rng();
    if (x < limit) return x % n;
  }
}

double normal(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0, 1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<VideoRecord> corpus(const CorpusOptions& opts, const Vocabulary& vocab) {
  std::mt19937_64 rng(opts.seed);
  const auto& rep = repertoire();
  std::vector<VideoRecord> out;
  for (std::size_t v = 0; v < opts.videos; ++v) {
    VideoRecord rec;
    rec.video_id = video_name(v);
    const std::size_t n = opts.min_frames + below(rng, opts.max_frames - opts.min_frames + 1);

    std::vector<std::size_t> cuts;
    for (std::size_t k = 0; k + 1 < rep.size(); ++k) cuts.push_back(below(rng, n + 1));
    std::sort(cuts.begin(), cuts.end());

    std::vector<Triplet> current;
    std::size_t run_left = 0;
    std::size_t last_phase = rep.size();
    for (std::size_t f = 0; f < n; ++f) {
      const auto phase = static_cast<std::size_t>(
          std::upper_bound(cuts.begin(), cuts.end(), f) - cuts.begin());
      if (run_left == 0 || phase != last_phase) {
        current.clear();
        const auto& choices = rep[phase];
        const std::size_t k = uniform01(rng) < 0.1 ? 0 : 1 + below(rng, 3);
        for (std::size_t j = 0; j < k; ++j) {
          auto t = resolve(choices[below(rng, choices.size())], vocab);
          if (std::find(current.begin(), current.end(), t) == current.end()) current.push_back(t);
        }
        run_left = 4 + below(rng, 9);
        last_phase = phase;
      }
      --run_left;
      rec.frames.push_back({rec.video_id, f, current, phase});
    }
    out.push_back(std::move(rec));
  }
  return out;
}

VideoRecord two_phase_clip(const Vocabulary& vocab) {
  VideoRecord rec;
  rec.video_id = "VID01";
  const std::vector<Triplet> actions = {resolve({"grasper", "grasp", "gallbladder"}, vocab),
                                        resolve({"hook", nullptr, nullptr}, vocab)};
  for (std::size_t f = 0; f < 32; ++f) {
    const auto phase = *vocab.find(Category::phase, f < 22 ? "preparation"
                                                           : "calot-triangle-dissection");
    rec.frames.push_back({rec.video_id, f, actions, phase});
  }
  return rec;
}

std::vector<LogitsRecord> logits_for(const std::vector<VideoRecord>& records,
                                     const Vocabulary& vocab, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<LogitsRecord> out;
  for (const auto& v : records) {
    for (const auto& f : v.frames) {
      const auto bits = truth_bits(f, vocab);
      LogitsRecord r;
      r.video_id = v.video_id;
      r.frame_index = f.frame_index;
      for (auto b : bits) r.logits.push_back((b ? 2.0 : -2.5) + 1.5 * normal(rng));
      const auto first = std::find(bits.begin(), bits.end(), 1);
      r.label = static_cast<int>(first == bits.end() ? bits.size() - 1 : first - bits.begin());
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_corpus_dir(const std::filesystem::path& dir, const CorpusOptions& opts) {
  const auto& vocab = Vocabulary::canonical();
  const auto records = corpus(opts, vocab);
  // Two annotation files exercise directory input.
  const auto half = records.size() / 2;
  std::ostringstream a, b, l;
  write_annotations(a, {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(half)},
                    vocab);
  write_annotations(b, {records.begin() + static_cast<std::ptrdiff_t>(half), records.end()},
                    vocab);
  io::write_file(dir / "annotations" / "part-1.jsonl", a.str());
  io::write_file(dir / "annotations" / "part-2.jsonl", b.str());
  write_logits(l, logits_for(records, vocab, opts.seed + 1));
  io::write_file(dir / "logits.jsonl", l.str());

  const nlohmann::json config = {
      {"paths",
       {{"annotations", "annotations"},
        {"logits", "logits.jsonl"},
        {"output", "out"},
        {"generated_frame_captions", "out/frame_captions.jsonl"},
        {"generated_clip_captions", "out/clip_captions.jsonl"}}},
      {"windowing", {{"size", 32}, {"stride", 16}}},
      {"detection", {{"mode", "sigmoid"}, {"threshold", 0.5}}},
      {"split",
       {{"train", 0.8}, {"test", 0.1}, {"validation", 0.1}, {"seed", 0}, {"granularity", "video"}}},
      {"report", {{"offline", true}, {"feed", "raw"}}}};
  io::write_file(dir / "config.json", config.dump(2) + "\n");
}

}  // namespace surgrep::fixture
