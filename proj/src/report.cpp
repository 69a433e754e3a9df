#include "surgrep/report.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <ostream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"

namespace surgrep {

namespace {

constexpr std::string_view kPromptTemplate =
    "Generate a concise and textual surgery report from the following sequential clip captions "
    "of a video.\n"
    "Each clip describes a phase of the surgery, including the activity, tools used, and "
    "duration.\n"
    "\n"
    "Key Instructions:\n"
    "\n"
    "1. The clips form a continuous video. If multiple clips describe the same activity, combine "
    "their durations to reflect the total time spent on that activity.\n"
    "\n"
    "2. Write the report in a narrative format, explaining each phase step-by-step in a flowing "
    "text.\n"
    "\n"
    "Clip captions: { clip captions }\n";

constexpr std::string_view kSlot = "{ clip captions }";

struct FrameClaim {
  std::size_t phase;
  std::size_t clip_start;
  const std::vector<Action>* actions;
};

std::string past_clause(const Action& a, const Vocabulary& vocab) {
  std::string s = "the " + vocab.instrument(a.instrument) + " ";
  if (!a.verb) return s + "was present";
  s += vocab.forms(*a.verb).past;
  if (a.target) s += " the " + vocab.target(*a.target);
  return s;
}

std::string join_clauses(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

bool retryable(int status) { return status == 429 || status >= 500; }

nlohmann::json action_json(const Action& a, const Vocabulary& vocab) {
  return {{"instrument", vocab.instrument(a.instrument)},
          {"verb", a.verb ? nlohmann::json(vocab.verb(*a.verb)) : nlohmann::json(nullptr)},
          {"target", a.target ? nlohmann::json(vocab.target(*a.target)) : nlohmann::json(nullptr)}};
}

}  // namespace

std::size_t MergedTimeline::total_seconds() const {
  std::size_t s = 0;
  for (const auto& e : entries) s += e.total_seconds;
  return s;
}

MergedTimeline merge_timeline(std::span<const ClipCaption> clips) {
  MergedTimeline tl;
  if (clips.empty()) return tl;
  tl.video_id = clips.front().video_id;

  std::map<std::size_t, FrameClaim> frames;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto& c = clips[i];
    if (c.video_id != tl.video_id) {
      throw PreconditionError("merge_timeline: clips from videos '" + tl.video_id + "' and '" +
                              c.video_id + "'");
    }
    if (i > 0 && c.start_frame < clips[i - 1].start_frame) {
      throw PreconditionError("merge_timeline: clips are not ordered by start frame");
    }
    std::size_t f = c.start_frame;
    for (const auto& seg : c.segments) {
      for (std::size_t k = 0; k < seg.duration_seconds; ++k, ++f) {
        frames.try_emplace(f, FrameClaim{seg.phase, c.start_frame, &seg.actions});
      }
    }
  }

  for (const auto& [frame, claim] : frames) {
    if (tl.entries.empty() || tl.entries.back().phase != claim.phase) {
      tl.entries.push_back({claim.phase, 0, {}, claim.clip_start, claim.clip_start});
    }
    auto& e = tl.entries.back();
    ++e.total_seconds;
    e.last_clip = std::max(e.last_clip, claim.clip_start);
    for (const auto& a : *claim.actions) {
      if (std::find(e.actions.begin(), e.actions.end(), a) == e.actions.end()) {
        e.actions.push_back(a);
      }
    }
  }
  return tl;
}

std::vector<ClipCaption> non_overlapping(std::span<const ClipCaption> clips) {
  std::vector<ClipCaption> out;
  std::size_t next_free = 0;
  for (const auto& c : clips) {
    if (out.empty() || c.start_frame >= next_free) {
      out.push_back(c);
      next_free = c.start_frame + c.size();
    }
  }
  return out;
}

CaptionFeed parse_caption_feed(std::string_view name) {
  if (name == "raw") return CaptionFeed::raw;
  if (name == "dedup") return CaptionFeed::dedup;
  throw PreconditionError("unknown caption feed '" + std::string(name) + "' (expected raw or dedup)");
}

std::string_view report_prompt_template() { return kPromptTemplate; }

PromptRequest render_prompt(std::span<const std::string> clip_texts) {
  if (clip_texts.empty()) throw PreconditionError("render_prompt: no clip captions");
  PromptRequest req;
  req.template_id = std::string(kReportTemplateId);
  req.clip_captions.assign(clip_texts.begin(), clip_texts.end());
  std::string listing;
  for (std::size_t i = 0; i < clip_texts.size(); ++i) {
    if (i > 0) listing += '\n';
    listing += "[" + std::to_string(i + 1) + "] " + clip_texts[i];
  }
  req.rendered = std::string(kPromptTemplate);
  req.rendered.replace(req.rendered.find(kSlot), kSlot.size(), listing);
  return req;
}

PromptRequest render_prompt(std::span<const ClipCaption> clips) {
  std::vector<std::string> texts;
  texts.reserve(clips.size());
  for (const auto& c : clips) texts.push_back(c.text);
  return render_prompt(texts);
}

SurgicalReport offline_report(const MergedTimeline& timeline, const Vocabulary& vocab) {
  if (timeline.entries.empty()) throw PreconditionError("offline_report: empty timeline");
  SurgicalReport r;
  r.video_id = timeline.video_id;
  r.timeline = timeline;
  r.provenance = "offline";
  for (std::size_t i = 0; i < timeline.entries.size(); ++i) {
    const auto& e = timeline.entries[i];
    std::vector<std::string> clauses;
    for (const auto& a : e.actions) clauses.push_back(past_clause(a, vocab));
    if (i > 0) r.narrative += "\n\n";
    r.narrative += "The " + vocab.phase(e.phase) + " phase lasted " +
                   std::to_string(e.total_seconds) + " seconds, during which " +
                   (clauses.empty() ? std::string("no instrument was active") : join_clauses(clauses)) +
                   ".";
  }
  r.narrative += '\n';
  return r;
}

std::string redact(std::string_view text, std::string_view secret) {
  std::string out(text);
  if (secret.empty()) return out;
  constexpr std::string_view mask = "[REDACTED]";
  for (auto pos = out.find(secret); pos != std::string::npos;
       pos = out.find(secret, pos + mask.size())) {
    out.replace(pos, secret.size(), mask);
  }
  return out;
}

std::string llm_complete(const PromptRequest& request, const EndpointConfig& endpoint,
                         const LogSink& log) {
  const char* env = std::getenv(endpoint.api_key_env.c_str());
  if (env == nullptr || *env == '\0') {
    throw MissingCredentialError("credential variable " + endpoint.api_key_env + " is not set");
  }
  const std::string key = env;
  auto emit = [&](const std::string& line) {
    if (log) log(redact(line, key));
  };
  if (endpoint.attempts < 1) throw PreconditionError("endpoint attempts must be at least 1");

  httplib::Client client(endpoint.base_url);
  if (!client.is_valid()) {
    throw PreconditionError("unsupported endpoint address '" + endpoint.base_url + "'");
  }
  const auto secs = endpoint.timeout.count() / 1000;
  const auto usecs = (endpoint.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const nlohmann::json body = {
      {"model", endpoint.model},
      {"temperature", endpoint.temperature},
      {"max_tokens", endpoint.max_tokens},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.rendered}}})}};
  const std::string payload = body.dump();
  const httplib::Headers headers = {{"Authorization", "Bearer " + key}};

  auto delay = endpoint.backoff;
  for (int attempt = 1;; ++attempt) {
    emit("request " + std::to_string(attempt) + "/" + std::to_string(endpoint.attempts) +
         ": POST " + endpoint.base_url + endpoint.path + " Authorization: Bearer " + key +
         " body=" + payload);
    auto res = client.Post(endpoint.path, headers, payload, "application/json");
    const bool last = attempt >= endpoint.attempts;
    if (!res) {
      const auto why = httplib::to_string(res.error());
      emit("attempt " + std::to_string(attempt) + " failed: " + why);
      if (last) {
        throw TransportError("endpoint " + endpoint.base_url + " unreachable after " +
                             std::to_string(attempt) + " attempts: " + why);
      }
    } else {
      emit("response " + std::to_string(res->status) + " body=" + res->body);
      if (res->status >= 200 && res->status < 300) {
        nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw Error("endpoint returned a body that is not JSON");
        std::string content;
        try {
          content = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
          throw Error("endpoint response lacks choices[0].message.content");
        }
        if (content.empty()) throw Error("endpoint returned an empty completion");
        return content;
      }
      if (last || !retryable(res->status)) {
        throw HttpStatusError("endpoint answered with status " + std::to_string(res->status),
                              res->status);
      }
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

SurgicalReport llm_generate(const PromptRequest& request, const MergedTimeline& timeline,
                            const EndpointConfig& endpoint, const LogSink& log) {
  SurgicalReport r;
  r.video_id = timeline.video_id;
  r.timeline = timeline;
  r.narrative = llm_complete(request, endpoint, log);
  if (r.narrative.back() != '\n') r.narrative += '\n';
  r.provenance = "llm(" + endpoint.model + ")";
  return r;
}

void write_timeline_jsonl(std::ostream& out, const MergedTimeline& timeline,
                          const Vocabulary& vocab) {
  for (const auto& e : timeline.entries) {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& a : e.actions) actions.push_back(action_json(a, vocab));
    out << nlohmann::json{{"video_id", timeline.video_id},
                          {"phase", vocab.phase(e.phase)},
                          {"seconds", e.total_seconds},
                          {"actions", actions},
                          {"first_clip", e.first_clip},
                          {"last_clip", e.last_clip}}
               .dump()
        << '\n';
  }
}

}  // namespace surgrep
