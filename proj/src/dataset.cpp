#include "surgrep/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"
#include "surgrep/io.hpp"

namespace surgrep {

namespace {

using nlohmann::json;

// Decodes one label component. Returns nullopt for "null" or a placeholder
// entry when `nullable`.
std::optional<std::size_t> decode_label(const json& v, Category c, const Vocabulary& vocab,
                                        bool nullable, std::size_t line) {
  const auto& names = vocab.names(c);
  std::optional<std::size_t> idx;
  std::string shown;
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "null") {
      if (nullable) return std::nullopt;
      throw UnknownLabelError("line " + std::to_string(line) + ": unknown label: " +
                              std::string(to_string(c)) + " cannot be null");
    }
    idx = vocab.find(c, s);
    shown = s;
  } else if (v.is_number_integer()) {
    auto i = v.get<std::int64_t>();
    if (i >= 0 && static_cast<std::size_t>(i) < names.size()) idx = static_cast<std::size_t>(i);
    shown = std::to_string(i);
  } else if (v.is_null() && nullable) {
    return std::nullopt;
  } else {
    throw ParseError("label must be a name or an index", line);
  }
  if (!idx) {
    throw UnknownLabelError("line " + std::to_string(line) + ": unknown label: " +
                            std::string(to_string(c)) + " '" + shown + "'");
  }
  if (c == Category::verb && vocab.null_verb() == idx) {
    if (nullable) return std::nullopt;
  }
  if (c == Category::target && vocab.null_target() == idx) {
    if (nullable) return std::nullopt;
  }
  return idx;
}

std::uint64_t next_below(std::mt19937_64& rng, std::uint64_t bound) {
  // Rejection sampling keeps the shuffle unbiased and identical across
  // standard library implementations (mt19937_64 output is fully specified).
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

template <typename T>
void shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[next_below(rng, i)]);
  }
}

}  // namespace

void validate(const Triplet& t, const Vocabulary& vocab) {
  if (t.instrument >= vocab.instruments().size()) {
    throw UnknownLabelError("unknown label: instrument index " + std::to_string(t.instrument));
  }
  if (t.verb && (*t.verb >= vocab.verbs().size() || vocab.null_verb() == *t.verb)) {
    throw UnknownLabelError("unknown label: verb index " + std::to_string(*t.verb));
  }
  if (t.target && (*t.target >= vocab.targets().size() || vocab.null_target() == *t.target)) {
    throw UnknownLabelError("unknown label: target index " + std::to_string(*t.target));
  }
  if (!t.verb && t.target) {
    throw PreconditionError("triplet has a target but no verb");
  }
}

std::vector<VideoRecord> parse_annotations(std::istream& in, const Vocabulary& vocab) {
  std::vector<VideoRecord> videos;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::map<std::size_t, std::size_t>> seen_lines;  // frame -> line

  io::for_each_record(in, [&](const json& j, std::size_t line) {
    FrameAnnotation f;
    f.video_id = j.at("video_id").get<std::string>();
    if (f.video_id.empty()) throw ParseError("empty video_id", line);
    const auto& frame = j.at("frame");
    if (!frame.is_number_integer() || frame.get<std::int64_t>() < 0) {
      throw ParseError("frame must be a nonnegative integer", line);
    }
    f.frame_index = frame.get<std::size_t>();
    f.phase = *decode_label(j.at("phase"), Category::phase, vocab, false, line);
    const auto& triplets = j.at("triplets");
    if (!triplets.is_array()) throw ParseError("triplets must be an array", line);
    for (const auto& t : triplets) {
      if (!t.is_array() || t.size() != 3) {
        throw ParseError("triplet must be [instrument, verb, target]", line);
      }
      Triplet tr;
      tr.instrument = *decode_label(t[0], Category::instrument, vocab, false, line);
      tr.verb = decode_label(t[1], Category::verb, vocab, true, line);
      tr.target = decode_label(t[2], Category::target, vocab, true, line);
      if (!tr.verb && tr.target) throw ParseError("triplet has a target but no verb", line);
      f.triplets.push_back(tr);
    }

    auto [it, inserted] = slot.emplace(f.video_id, videos.size());
    if (inserted) {
      videos.push_back({f.video_id, {}});
      seen_lines.emplace_back();
    }
    auto& lines = seen_lines[it->second];
    if (auto prev = lines.find(f.frame_index); prev != lines.end()) {
      throw ParseError("duplicate frame index " + std::to_string(f.frame_index) + " for video " +
                           f.video_id + " (first seen on line " + std::to_string(prev->second) +
                           ")",
                       line);
    }
    lines.emplace(f.frame_index, line);
    videos[it->second].frames.push_back(std::move(f));
  });

  for (auto& v : videos) {
    std::sort(v.frames.begin(), v.frames.end(),
              [](const auto& a, const auto& b) { return a.frame_index < b.frame_index; });
    for (std::size_t i = 0; i < v.frames.size(); ++i) {
      if (v.frames[i].frame_index != i) {
        throw Error("video " + v.video_id + ": frame indices are not contiguous from 0 (missing " +
                    std::to_string(i) + ")");
      }
    }
  }
  return videos;
}

std::vector<VideoRecord> parse_annotations(std::string_view text, const Vocabulary& vocab) {
  std::istringstream in{std::string(text)};
  return parse_annotations(in, vocab);
}

void write_annotations(std::ostream& out, const std::vector<VideoRecord>& records,
                       const Vocabulary& vocab) {
  for (const auto& v : records) {
    for (const auto& f : v.frames) {
      json triplets = json::array();
      for (const auto& t : f.triplets) {
        triplets.push_back({vocab.instrument(t.instrument), t.verb ? vocab.verb(*t.verb) : "null",
                            t.target ? vocab.target(*t.target) : "null"});
      }
      json j = {{"video_id", f.video_id},
                {"frame", f.frame_index},
                {"phase", vocab.phase(f.phase)},
                {"triplets", triplets}};
      out << j.dump() << '\n';
    }
  }
}

DatasetSplit split_dataset(const std::vector<VideoRecord>& records, const SplitRatios& ratios,
                           std::uint64_t seed, SplitGranularity granularity) {
  if (ratios.train < 0 || ratios.test < 0 || ratios.validation < 0 ||
      std::abs(ratios.train + ratios.test + ratios.validation - 1.0) > 1e-9) {
    throw PreconditionError("split ratios must be nonnegative and sum to 1");
  }
  std::size_t n = 0;
  for (const auto& v : records) n += v.frames.size();
  const auto n_train = std::min<std::size_t>(n, std::llround(static_cast<double>(n) * ratios.train));
  const auto n_test =
      std::min<std::size_t>(n - n_train, std::llround(static_cast<double>(n) * ratios.test));

  DatasetSplit split;
  split.ratios = ratios;
  if (granularity == SplitGranularity::frame) {
    std::vector<FrameRef> refs;
    refs.reserve(n);
    for (const auto& v : records) {
      for (const auto& f : v.frames) refs.push_back({v.video_id, f.frame_index});
    }
    shuffle(refs, seed);
    split.train.assign(refs.begin(), refs.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.test.assign(refs.begin() + static_cast<std::ptrdiff_t>(n_train),
                      refs.begin() + static_cast<std::ptrdiff_t>(n_train + n_test));
    split.validation.assign(refs.begin() + static_cast<std::ptrdiff_t>(n_train + n_test),
                            refs.end());
  } else {
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, seed);
    std::size_t assigned = 0;
    for (auto vi : order) {
      const auto& v = records[vi];
      auto& dst = assigned < n_train ? split.train
                  : assigned < n_train + n_test ? split.test
                                                : split.validation;
      for (const auto& f : v.frames) dst.push_back({v.video_id, f.frame_index});
      assigned += v.frames.size();
    }
  }
  for (auto* set : {&split.train, &split.test, &split.validation}) {
    std::sort(set->begin(), set->end());
  }
  return split;
}

std::uint64_t frames_to_tenths_of_minute(std::uint64_t frames) {
  // frames / 60 minutes = frames / 6 tenths; half-up rounding in integers.
  return (frames * 10 + 30) / 60;
}

std::string PhaseDurationRow::minutes_text() const {
  return std::to_string(tenths_of_minute / 10) + "." + std::to_string(tenths_of_minute % 10);
}

std::vector<PhaseDurationRow> phase_duration_table(const std::vector<std::uint64_t>& counts,
                                                   const Vocabulary& vocab) {
  if (counts.size() != vocab.phases().size()) {
    throw PreconditionError("phase_duration_table: expected one count per phase");
  }
  std::vector<PhaseDurationRow> rows;
  std::uint64_t total = 0;
  for (std::size_t p = 0; p < counts.size(); ++p) {
    rows.push_back({vocab.phase(p), counts[p], frames_to_tenths_of_minute(counts[p])});
    total += counts[p];
  }
  rows.push_back({"Total", total, frames_to_tenths_of_minute(total)});
  return rows;
}

std::vector<PhaseDurationRow> phase_duration_table(const std::vector<VideoRecord>& records,
                                                   const Vocabulary& vocab) {
  std::vector<std::uint64_t> counts(vocab.phases().size(), 0);
  for (const auto& v : records) {
    for (const auto& f : v.frames) ++counts.at(f.phase);
  }
  return phase_duration_table(counts, vocab);
}

void write_phase_duration_csv(std::ostream& out, const std::vector<PhaseDurationRow>& rows) {
  out << "phase,frame_count,minutes\n";
  for (const auto& r : rows) out << r.phase << ',' << r.frame_count << ',' << r.minutes_text() << '\n';
}

std::vector<std::uint8_t> truth_bits(const FrameAnnotation& frame, const Vocabulary& vocab) {
  std::vector<std::uint8_t> bits(vocab.detection_classes(), 0);
  for (const auto& t : frame.triplets) {
    bits[vocab.instrument_class(t.instrument)] = 1;
    if (t.target) {
      bits[vocab.target_class(*t.target)] = 1;
    } else if (auto nt = vocab.null_target()) {
      bits[vocab.target_class(*nt)] = 1;
    }
  }
  return bits;
}

}  // namespace surgrep
