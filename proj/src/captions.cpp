#include "surgrep/captions.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"
#include "surgrep/io.hpp"

namespace surgrep {

namespace {

constexpr std::string_view kNoInstrument = "no instrument is active";

void append_unique(std::vector<Action>& actions, const Action& a) {
  if (std::find(actions.begin(), actions.end(), a) == actions.end()) actions.push_back(a);
}

std::string frame_clause(const Action& a, const Vocabulary& vocab) {
  std::string s = "the " + vocab.instrument(a.instrument) + " is ";
  if (!a.verb) return s + "present";
  s += vocab.forms(*a.verb).progressive;
  if (a.target) s += " the " + vocab.target(*a.target);
  return s;
}

std::string clip_clause(const Action& a, bool continued, const Vocabulary& vocab) {
  std::string s = "the " + vocab.instrument(a.instrument) + " ";
  if (!a.verb) return s + (continued ? "remains present" : "is present");
  s += continued ? "continues to " + vocab.forms(*a.verb).base : vocab.forms(*a.verb).present;
  if (a.target) s += " the " + vocab.target(*a.target);
  return s;
}

// Hand-written recursive-descent reader over caption text.
class Cursor {
public:
  explicit Cursor(std::string_view text) : text_(text) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == text_.size(); }

  bool peek(std::string_view lit) const { return text_.substr(pos_).starts_with(lit); }

  bool accept(std::string_view lit) {
    if (!peek(lit)) return false;
    pos_ += lit.size();
    return true;
  }

  void expect(std::string_view lit) {
    if (!accept(lit)) fail("expected \"" + std::string(lit) + "\"");
  }

  /// A vocabulary word: everything up to a space, comma or period.
  std::string_view word() {
    auto end = text_.find_first_of(" ,.", pos_);
    if (end == std::string_view::npos) end = text_.size();
    if (end == pos_) fail("expected a word");
    auto w = text_.substr(pos_, end - pos_);
    pos_ = end;
    return w;
  }

  std::size_t number() {
    std::size_t value = 0;
    auto [p, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc{} || p == text_.data() + pos_) fail("expected a number");
    pos_ = static_cast<std::size_t>(p - text_.data());
    return value;
  }

  std::size_t lookup(std::string_view w, Category c, const Vocabulary& vocab, std::size_t at) const {
    auto idx = vocab.find(c, w);
    if (!idx || (c == Category::target && vocab.null_target() == idx)) {
      throw GrammarError("unknown " + std::string(to_string(c)) + " '" + std::string(w) + "'", at);
    }
    return *idx;
  }

  [[noreturn]] void fail(const std::string& what) const { throw GrammarError(what, pos_); }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

std::size_t verb_by_form(std::string_view w, std::string VerbForms::*form, const Vocabulary& vocab,
                         std::size_t at) {
  for (std::size_t v = 0; v < vocab.verbs().size(); ++v) {
    if (vocab.null_verb() == v) continue;
    if (vocab.forms(v).*form == w) return v;
  }
  throw GrammarError("unknown verb form '" + std::string(w) + "'", at);
}

void parse_optional_target(Cursor& cur, Action& a, const Vocabulary& vocab) {
  if (cur.accept(" the ")) {
    auto at = cur.pos();
    a.target = cur.lookup(cur.word(), Category::target, vocab, at);
  }
}

Action parse_frame_clause(Cursor& cur, const Vocabulary& vocab) {
  Action a;
  cur.expect("the ");
  auto at = cur.pos();
  a.instrument = cur.lookup(cur.word(), Category::instrument, vocab, at);
  cur.expect(" is ");
  if (cur.accept("present")) return a;
  at = cur.pos();
  a.verb = verb_by_form(cur.word(), &VerbForms::progressive, vocab, at);
  parse_optional_target(cur, a, vocab);
  return a;
}

Action parse_clip_clause(Cursor& cur, const Vocabulary& vocab) {
  Action a;
  cur.expect("the ");
  auto at = cur.pos();
  a.instrument = cur.lookup(cur.word(), Category::instrument, vocab, at);
  cur.expect(" ");
  if (cur.accept("is present") || cur.accept("remains present")) return a;
  at = cur.pos();
  if (cur.accept("continues to ")) {
    at = cur.pos();
    a.verb = verb_by_form(cur.word(), &VerbForms::base, vocab, at);
  } else {
    a.verb = verb_by_form(cur.word(), &VerbForms::present, vocab, at);
  }
  parse_optional_target(cur, a, vocab);
  return a;
}

}  // namespace

std::size_t ClipCaption::size() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.duration_seconds;
  return n;
}

std::string render_frame_text(std::size_t phase, std::span<const Action> actions,
                              const Vocabulary& vocab) {
  std::string s = "During phase " + vocab.phase(phase) + ", ";
  if (actions.empty()) return s + std::string(kNoInstrument);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (i > 0) s += ", ";
    s += frame_clause(actions[i], vocab);
  }
  return s;
}

FrameCaption synthesize_frame_caption(const FrameAnnotation& frame, const Vocabulary& vocab) {
  for (const auto& t : frame.triplets) validate(t, vocab);
  return {frame.video_id, frame.frame_index, render_frame_text(frame.phase, frame.triplets, vocab)};
}

ParsedFrameCaption parse_frame_caption(std::string_view text, const Vocabulary& vocab) {
  Cursor cur(text);
  ParsedFrameCaption out;
  cur.expect("During phase ");
  auto at = cur.pos();
  out.phase = cur.lookup(cur.word(), Category::phase, vocab, at);
  cur.expect(", ");
  if (cur.accept(kNoInstrument)) {
    if (!cur.done()) cur.fail("trailing text");
    return out;
  }
  out.actions.push_back(parse_frame_clause(cur, vocab));
  while (cur.accept(", ")) out.actions.push_back(parse_frame_clause(cur, vocab));
  if (!cur.done()) cur.fail("trailing text");
  return out;
}

std::string render_clip_text(std::span<const PhaseSegment> segments, const Vocabulary& vocab) {
  std::string s;
  const std::vector<Action>* previous = nullptr;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto& seg = segments[k];
    if (seg.duration_seconds == 0) throw PreconditionError("segment duration must be positive");
    if (k > 0) s += ' ';
    if (segments.size() == 1) {
      s += "During the ";
    } else {
      s += k == 0 ? "First, during the " : "Then, during the ";
    }
    s += std::to_string(seg.duration_seconds) + "-second " + vocab.phase(seg.phase) + " phase, ";
    if (seg.actions.empty()) s += kNoInstrument;
    for (std::size_t i = 0; i < seg.actions.size(); ++i) {
      if (i > 0) s += i + 1 == seg.actions.size() ? " while " : ", ";
      const auto& a = seg.actions[i];
      bool continued =
          previous && std::find(previous->begin(), previous->end(), a) != previous->end();
      s += clip_clause(a, continued, vocab);
    }
    s += '.';
    previous = &seg.actions;
  }
  return s;
}

ClipCaption synthesize_clip_caption(const ClipWindow& clip, std::span<const FrameAnnotation> frames,
                                    const Vocabulary& vocab) {
  std::map<std::size_t, const FrameAnnotation*> by_index;
  for (const auto& f : frames) by_index.emplace(f.frame_index, &f);

  ClipCaption out{clip.video_id, clip.start_frame, {}, {}};
  for (std::size_t idx = clip.start_frame; idx < clip.end_frame(); ++idx) {
    auto it = by_index.find(idx);
    if (it == by_index.end()) {
      throw Error("clip " + clip.video_id + "@" + std::to_string(clip.start_frame) +
                  ": missing frame " + std::to_string(idx));
    }
    const auto& f = *it->second;
    if (out.segments.empty() || out.segments.back().phase != f.phase) {
      out.segments.push_back({f.phase, 0, {}});
    }
    auto& seg = out.segments.back();
    ++seg.duration_seconds;
    for (const auto& t : f.triplets) {
      validate(t, vocab);
      append_unique(seg.actions, t);
    }
  }
  out.text = render_clip_text(out.segments, vocab);
  return out;
}

std::vector<PhaseSegment> parse_clip_caption(std::string_view text, const Vocabulary& vocab) {
  Cursor cur(text);
  std::vector<PhaseSegment> segments;
  while (true) {
    if (segments.empty()) {
      if (!cur.accept("During the ")) cur.expect("First, during the ");
    } else {
      cur.expect("Then, during the ");
    }
    PhaseSegment seg;
    auto at = cur.pos();
    seg.duration_seconds = cur.number();
    if (seg.duration_seconds == 0) throw GrammarError("duration must be positive", at);
    cur.expect("-second ");
    at = cur.pos();
    seg.phase = cur.lookup(cur.word(), Category::phase, vocab, at);
    cur.expect(" phase, ");
    if (!cur.accept(kNoInstrument)) {
      seg.actions.push_back(parse_clip_clause(cur, vocab));
      while (cur.accept(", ") || cur.accept(" while ")) {
        seg.actions.push_back(parse_clip_clause(cur, vocab));
      }
    }
    cur.expect(".");
    segments.push_back(std::move(seg));
    if (cur.done()) break;
    cur.expect(" ");
  }
  return segments;
}

void write_caption_records(std::ostream& out, std::span<const CaptionRecord> records,
                           std::string_view key) {
  for (const auto& r : records) {
    nlohmann::json j;
    j["video_id"] = r.video_id;
    j[std::string(key)] = r.index;
    j["text"] = r.text;
    out << j.dump() << '\n';
  }
}

std::vector<CaptionRecord> read_caption_records(std::istream& in, std::string_view key) {
  std::vector<CaptionRecord> records;
  io::for_each_record(in, [&](const nlohmann::json& j, std::size_t) {
    records.push_back({j.at("video_id").get<std::string>(), j.at(std::string(key)).get<std::size_t>(),
                       j.at("text").get<std::string>()});
  });
  return records;
}

}  // namespace surgrep
