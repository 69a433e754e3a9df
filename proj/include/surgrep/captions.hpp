#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surgrep/clips.hpp"
#include "surgrep/dataset.hpp"

namespace surgrep {

/// An action mentioned in a caption; same shape as an annotation triplet.
using Action = Triplet;

struct FrameCaption {
  std::string video_id;
  std::size_t frame_index = 0;
  std::string text;
};

/// A maximal run of frames sharing a phase inside one clip.
struct PhaseSegment {
  std::size_t phase = 0;
  std::size_t duration_seconds = 0;
  std::vector<Action> actions;  // deduplicated, first-appearance order

  friend bool operator==(const PhaseSegment&, const PhaseSegment&) = default;
};

struct ClipCaption {
  std::string video_id;
  std::size_t start_frame = 0;
  std::vector<PhaseSegment> segments;
  std::string text;

  std::size_t size() const;
};

/// Frame grammar:
///   caption := "During phase " PHASE ", " (clauses | "no instrument is active")
///   clauses := clause (", " clause)*
///   clause  := "the " INSTRUMENT " is " (PROGRESSIVE [" the " TARGET] | "present")
std::string render_frame_text(std::size_t phase, std::span<const Action> actions,
                              const Vocabulary& vocab);
FrameCaption synthesize_frame_caption(const FrameAnnotation& frame, const Vocabulary& vocab);

struct ParsedFrameCaption {
  std::size_t phase = 0;
  std::vector<Action> actions;
};
ParsedFrameCaption parse_frame_caption(std::string_view text, const Vocabulary& vocab);

/// Clip grammar (see docs/caption_grammar.ebnf). Actions already listed in
/// the previous segment use the continuation forms "continues to <verb>" and
/// "remains present".
std::string render_clip_text(std::span<const PhaseSegment> segments, const Vocabulary& vocab);

/// Groups the clip's frames into phase runs and renders them. `frames` must
/// contain every frame index of the clip; extra frames are ignored.
ClipCaption synthesize_clip_caption(const ClipWindow& clip, std::span<const FrameAnnotation> frames,
                                    const Vocabulary& vocab);

/// Inverse of render_clip_text. Throws GrammarError with the character offset
/// of the first violation.
std::vector<PhaseSegment> parse_clip_caption(std::string_view text, const Vocabulary& vocab);

/// Line-delimited caption records: {"video_id", <key>, "text"} where key is
/// "frame" for frame captions and "start_frame" for clip captions.
struct CaptionRecord {
  std::string video_id;
  std::size_t index = 0;
  std::string text;

  friend bool operator==(const CaptionRecord&, const CaptionRecord&) = default;
};

inline constexpr std::string_view kFrameKey = "frame";
inline constexpr std::string_view kClipKey = "start_frame";

void write_caption_records(std::ostream& out, std::span<const CaptionRecord> records,
                           std::string_view key);
std::vector<CaptionRecord> read_caption_records(std::istream& in, std::string_view key);

}  // namespace surgrep
