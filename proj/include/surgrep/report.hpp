#pragma once

#include <chrono>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surgrep/captions.hpp"

namespace surgrep {

struct TimelineEntry {
  std::size_t phase = 0;
  std::size_t total_seconds = 0;
  std::vector<Action> actions;  // union over merged segments, first appearance first
  std::size_t first_clip = 0;   // start_frame of the first contributing clip
  std::size_t last_clip = 0;    // start_frame of the last contributing clip

  friend bool operator==(const TimelineEntry&, const TimelineEntry&) = default;
};

struct MergedTimeline {
  std::string video_id;
  std::vector<TimelineEntry> entries;

  std::size_t total_seconds() const;
  friend bool operator==(const MergedTimeline&, const MergedTimeline&) = default;
};

/// Re-expands every segment to frame indices (one frame per second), keeps the
/// first clip's claim on frames covered twice, then merges maximal runs of one
/// phase. Gaps between clips do not break a run. Throws PreconditionError on
/// clips from more than one video or clips out of start_frame order.
MergedTimeline merge_timeline(std::span<const ClipCaption> clips);

/// Clips whose frames do not overlap an earlier kept clip.
std::vector<ClipCaption> non_overlapping(std::span<const ClipCaption> clips);

enum class CaptionFeed { raw, dedup };
CaptionFeed parse_caption_feed(std::string_view name);

inline constexpr std::string_view kReportTemplateId = "surgical-report-v1";

/// The report prompt with its "{ clip captions }" slot still open.
std::string_view report_prompt_template();

struct PromptRequest {
  std::string template_id;
  std::vector<std::string> clip_captions;
  std::string rendered;
};

/// Fills the template with "[1] <text>", "[2] <text>", ... one per line.
/// Throws PreconditionError on an empty list.
PromptRequest render_prompt(std::span<const ClipCaption> clips);
PromptRequest render_prompt(std::span<const std::string> clip_texts);

struct SurgicalReport {
  std::string video_id;
  std::string narrative;
  MergedTimeline timeline;
  std::string provenance;  // "offline" or "llm(<model>)"
};

/// One paragraph per entry: "The <phase> phase lasted <S> seconds, during
/// which <actions>." Throws PreconditionError on an empty timeline.
SurgicalReport offline_report(const MergedTimeline& timeline, const Vocabulary& vocab);

/// Generic chat-completion endpoint.
struct EndpointConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model = "gpt-4";
  double temperature = 0.2;
  int max_tokens = 1024;
  std::string api_key_env = "SURGREP_API_KEY";
  std::chrono::milliseconds timeout{60'000};
  int attempts = 3;
  std::chrono::milliseconds backoff{500};  // doubles after every failed attempt
  std::size_t parallelism = 2;
};

using LogSink = std::function<void(std::string_view)>;

/// Posts the rendered prompt as a single user message and returns
/// choices[0].message.content. Transport failures, 429 and 5xx responses are
/// retried up to `attempts` times. Every log line passes through the sink with
/// the credential replaced by "[REDACTED]".
///
/// Throws MissingCredentialError, TransportError or HttpStatusError.
std::string llm_complete(const PromptRequest& request, const EndpointConfig& endpoint,
                         const LogSink& log = {});

SurgicalReport llm_generate(const PromptRequest& request, const MergedTimeline& timeline,
                            const EndpointConfig& endpoint, const LogSink& log = {});

/// Replaces every occurrence of `secret` in `text`.
std::string redact(std::string_view text, std::string_view secret);

/// One JSON object per timeline entry.
void write_timeline_jsonl(std::ostream& out, const MergedTimeline& timeline,
                          const Vocabulary& vocab);

}  // namespace surgrep
