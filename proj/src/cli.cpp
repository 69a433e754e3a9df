#include "surgrep/cli.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "surgrep/calibration.hpp"
#include "surgrep/captions.hpp"
#include "surgrep/clips.hpp"
#include "surgrep/config.hpp"
#include "surgrep/dataset.hpp"
#include "surgrep/detection.hpp"
#include "surgrep/error.hpp"
#include "surgrep/io.hpp"
#include "surgrep/metrics.hpp"
#include "surgrep/report.hpp"

namespace surgrep::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Overrides {
  std::string config;
  std::vector<std::string> videos;
  bool offline = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> threshold;
  std::optional<std::string> mode;
};

struct Context {
  PipelineConfig config;
  Vocabulary vocab;
  std::string command;
  std::vector<std::string> videos;
  std::ostream& out;
  std::ostream& err;

  fs::path output(const std::string& name) const { return config.paths.output / name; }

  /// Data file plus its run manifest sibling.
  void write(const fs::path& path, const std::string& contents) const {
    io::write_file(path, contents);
    const json manifest = {{"artifact", "surgrep"},
                           {"version", std::string(kVersion)},
                           {"command", command},
                           {"config_hash", config.hash()},
                           {"file", path.filename().string()}};
    io::write_file(path.string() + ".manifest.json", manifest.dump(2) + "\n");
    out << "wrote " << path.string() << '\n';
  }
};

// Captures the first exception thrown inside an OpenMP region.
class FirstError {
public:
  template <class F>
  void guard(F&& f) {
    try {
      f();
    } catch (...) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = std::current_exception();
    }
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

private:
  std::mutex mu_;
  std::exception_ptr error_;
};

std::vector<VideoRecord> load_annotations(const Context& ctx) {
  std::vector<VideoRecord> all;
  std::set<std::string> seen;
  for (const auto& file : io::list_record_files(ctx.config.paths.annotations)) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file.string());
    std::vector<VideoRecord> part;
    try {
      part = parse_annotations(in, ctx.vocab);
    } catch (const Error& e) {
      throw Error(file.string() + ": " + e.what());
    }
    for (auto& v : part) {
      if (!seen.insert(v.video_id).second) {
        throw Error(file.string() + ": video '" + v.video_id + "' also appears in another file");
      }
      all.push_back(std::move(v));
    }
  }
  return all;
}

struct LogitsTable {
  std::vector<LogitsRecord> records;
  std::map<FrameRef, std::size_t> index;

  const LogitsRecord* find(const FrameRef& f) const {
    auto it = index.find(f);
    return it == index.end() ? nullptr : &records[it->second];
  }
};

LogitsTable load_logits(const Context& ctx) {
  const auto& p = ctx.config.paths.logits;
  if (!p) throw Error("paths.logits is not configured");
  std::ifstream in(*p);
  if (!in) throw Error("cannot open logits file " + p->string());
  LogitsTable t;
  try {
    t.records = read_logits(in, ctx.vocab.detection_classes());
  } catch (const Error& e) {
    throw Error(p->string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    FrameRef key{t.records[i].video_id, t.records[i].frame_index};
    if (!t.index.emplace(key, i).second) {
      throw Error(p->string() + ": duplicate logits for " + key.video_id + " frame " +
                  std::to_string(key.frame_index));
    }
  }
  return t;
}

std::map<FrameRef, const FrameAnnotation*> frame_index(const std::vector<VideoRecord>& records) {
  std::map<FrameRef, const FrameAnnotation*> m;
  for (const auto& v : records) {
    for (const auto& f : v.frames) m.emplace(FrameRef{v.video_id, f.frame_index}, &f);
  }
  return m;
}

DatasetSplit make_split(const Context& ctx, const std::vector<VideoRecord>& records) {
  const auto& s = ctx.config.split;
  return split_dataset(records, s.ratios, s.seed, s.granularity);
}

/// Logit rows for `frames`, in order; throws naming the first missing frame.
LogitMatrix gather(const LogitsTable& logits, const std::vector<FrameRef>& frames,
                   std::size_t classes, std::string_view what) {
  LogitMatrix m(frames.size(), classes);
  std::size_t missing = 0;
  const FrameRef* first_missing = nullptr;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto* r = logits.find(frames[i]);
    if (!r) {
      if (missing++ == 0) first_missing = &frames[i];
      continue;
    }
    std::copy(r->logits.begin(), r->logits.end(), m.row(i).begin());
  }
  if (missing > 0) {
    throw Error("logits missing for " + std::to_string(missing) + " " + std::string(what) +
                " frames (first: " + first_missing->video_id + " frame " +
                std::to_string(first_missing->frame_index) + ")");
  }
  return m;
}

double detection_temperature(const Context& ctx) {
  if (ctx.config.detection.temperature) return *ctx.config.detection.temperature;
  const auto path = ctx.output("calibration.json");
  if (fs::exists(path)) {
    const json j = json::parse(io::read_file(path), nullptr, false);
    if (!j.is_discarded() && j.value("mode", "") == to_string(ctx.config.detection.mode)) {
      const double t = j.at("temperature").get<double>();
      ctx.out << "using fitted temperature " << io::format_double(t) << " from "
              << path.string() << '\n';
      return t;
    }
  }
  return 1.0;
}

DetectionSet detect_row(const Context& ctx, std::span<const double> probs) {
  const auto& d = ctx.config.detection;
  if (!d.class_thresholds.empty()) {
    if (d.class_thresholds.size() != probs.size()) {
      throw Error("detection.class_thresholds has " + std::to_string(d.class_thresholds.size()) +
                  " entries, expected " + std::to_string(probs.size()));
    }
    return threshold_detect(probs, d.class_thresholds);
  }
  return threshold_detect(probs, d.threshold);
}

std::string split_name(int s) { return s == 0 ? "train" : s == 1 ? "test" : "validation"; }

// ---- preprocess -------------------------------------------------------------

int cmd_preprocess(Context& ctx) {
  const auto records = load_annotations(ctx);
  const auto& w = ctx.config.windowing;

  std::vector<std::string> frame_text(records.size()), clip_text(records.size()),
      manifest_text(records.size());
  FirstError failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(records.size()); ++i) {
    failure.guard([&] {
      const auto& v = records[static_cast<std::size_t>(i)];
      std::vector<CaptionRecord> frames, clips;
      for (const auto& f : v.frames) {
        auto c = synthesize_frame_caption(f, ctx.vocab);
        frames.push_back({c.video_id, c.frame_index, std::move(c.text)});
      }
      const auto windows = window_video(v, w.size, w.stride);
      for (const auto& cw : windows) {
        auto c = synthesize_clip_caption(cw, v.frames, ctx.vocab);
        clips.push_back({c.video_id, c.start_frame, std::move(c.text)});
      }
      std::ostringstream fo, co, mo;
      write_caption_records(fo, frames, kFrameKey);
      write_caption_records(co, clips, kClipKey);
      write_clip_manifest(mo, windows);
      frame_text[i] = fo.str();
      clip_text[i] = co.str();
      manifest_text[i] = mo.str();
    });
  }
  failure.rethrow();

  auto concat = [](const std::vector<std::string>& parts) {
    std::string s;
    for (const auto& p : parts) s += p;
    return s;
  };
  ctx.write(ctx.output("frame_captions.jsonl"), concat(frame_text));
  ctx.write(ctx.output("clip_captions.jsonl"), concat(clip_text));
  ctx.write(ctx.output("clips.jsonl"), concat(manifest_text));

  std::ostringstream table;
  write_phase_duration_csv(table, phase_duration_table(records, ctx.vocab));
  ctx.write(ctx.output("phase_durations.csv"), table.str());

  const auto split = make_split(ctx, records);
  std::ostringstream sp;
  const std::vector<FrameRef>* sets[] = {&split.train, &split.test, &split.validation};
  std::map<FrameRef, int> membership;
  for (int s = 0; s < 3; ++s) {
    for (const auto& f : *sets[s]) membership.emplace(f, s);
  }
  for (const auto& [f, s] : membership) {
    sp << json{{"video_id", f.video_id}, {"frame", f.frame_index}, {"split", split_name(s)}}.dump()
       << '\n';
  }
  ctx.write(ctx.output("split.jsonl"), sp.str());
  return 0;
}

// ---- calibrate --------------------------------------------------------------

int cmd_calibrate(Context& ctx) {
  const auto records = load_annotations(ctx);
  const auto split = make_split(ctx, records);
  if (split.validation.empty()) throw Error("the validation split is empty");
  const auto logits = load_logits(ctx);
  const auto mode = ctx.config.detection.mode;

  ValidationSet data;
  data.logits = gather(logits, split.validation, ctx.vocab.detection_classes(), "validation");
  const auto frames = frame_index(records);
  for (const auto& f : split.validation) {
    if (mode == Squash::softmax) {
      const auto* r = logits.find(f);
      if (!r->label) {
        throw Error("softmax calibration needs a \"label\" on every logits row (missing for " +
                    f.video_id + " frame " + std::to_string(f.frame_index) + ")");
      }
      data.classes.push_back(*r->label);
    } else {
      const auto bits = truth_bits(*frames.at(f), ctx.vocab);
      data.bits.insert(data.bits.end(), bits.begin(), bits.end());
    }
  }

  TemperatureSearch search;
  search.mode = mode;
  search.t_lo = ctx.config.calibration.t_min;
  search.t_hi = ctx.config.calibration.t_max;
  search.bins = ctx.config.calibration.bins;
  const auto result = fit_temperature(data, search);
  for (const auto& w : result.warnings) ctx.err << "warning: " << w << '\n';

  std::ostringstream cj, before, after;
  write_calibration_json(cj, result);
  write_bins_csv(before, result.bins_before);
  write_bins_csv(after, result.bins_after);
  ctx.write(ctx.output("calibration.json"), cj.str());
  ctx.write(ctx.output("reliability_before.csv"), before.str());
  ctx.write(ctx.output("reliability_after.csv"), after.str());
  ctx.out << "T* = " << io::format_double(result.temperature)
          << "  ECE " << io::format_double(result.ece_before) << " -> "
          << io::format_double(result.ece_after) << '\n';
  return 0;
}

// ---- detect -----------------------------------------------------------------

int cmd_detect(Context& ctx) {
  const auto logits = load_logits(ctx);
  const std::set<std::string> wanted(ctx.videos.begin(), ctx.videos.end());
  std::set<std::string> present;
  std::vector<const LogitsRecord*> rows;
  for (const auto& r : logits.records) {
    present.insert(r.video_id);
    if (wanted.empty() || wanted.contains(r.video_id)) rows.push_back(&r);
  }
  for (const auto& v : wanted) {
    if (!present.contains(v)) throw Error("unknown video id '" + v + "' (no logits rows)");
  }

  const double t = detection_temperature(ctx);
  LogitMatrix m(rows.size(), ctx.vocab.detection_classes());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i]->logits.begin(), rows[i]->logits.end(), m.row(i).begin());
  }
  const auto probs = probabilities_from_logits(m, ctx.config.detection.mode, t);
  std::vector<DetectionSet> dets;
  dets.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto d = detect_row(ctx, probs.row(i));
    d.video_id = rows[i]->video_id;
    d.frame_index = rows[i]->frame_index;
    dets.push_back(std::move(d));
  }
  std::ostringstream o;
  write_detections(o, dets, ctx.vocab);
  ctx.write(ctx.output("detections.jsonl"), o.str());
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

std::vector<CaptionRecord> read_captions(const fs::path& path, std::string_view key) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return read_caption_records(in, key);
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

void check_alignment(const std::vector<CaptionRecord>& gen, const std::vector<CaptionRecord>& ref,
                     const fs::path& gen_path) {
  const auto n = std::min(gen.size(), ref.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (gen[i].video_id != ref[i].video_id || gen[i].index != ref[i].index) {
      throw AlignmentError(gen_path.string() + ": record " + std::to_string(i + 1) + " is (" +
                           gen[i].video_id + ", " + std::to_string(gen[i].index) +
                           ") but the reference has (" + ref[i].video_id + ", " +
                           std::to_string(ref[i].index) + ")");
    }
  }
  if (gen.size() != ref.size()) {
    throw AlignmentError(gen_path.string() + ": " + std::to_string(gen.size()) +
                         " records, reference has " + std::to_string(ref.size()));
  }
}

MetricReport evaluate_level(const Context& ctx, const fs::path& gen_path, const fs::path& ref_path,
                            std::string_view key, const EmbeddingProvider& embed) {
  const auto gen = read_captions(gen_path, key);
  const auto ref = read_captions(ref_path, key);
  check_alignment(gen, ref, gen_path);
  if (gen.empty()) throw Error(gen_path.string() + ": no caption records");
  std::vector<std::string> g, r;
  for (const auto& c : gen) g.push_back(c.text);
  for (const auto& c : ref) r.push_back(c.text);
  auto rep = evaluate_captions(g, r, embed);
  rep.level = key == kFrameKey ? "frame" : "clip";
  (void)ctx;
  return rep;
}

int cmd_evaluate(Context& ctx) {
  const auto& paths = ctx.config.paths;
  if (!paths.generated_frame_captions && !paths.generated_clip_captions) {
    throw Error("set paths.generated_frame_captions or paths.generated_clip_captions");
  }
  std::optional<EmbeddingStore> store;
  if (paths.embeddings) {
    std::ifstream in(*paths.embeddings);
    if (!in) throw Error("cannot open " + paths.embeddings->string());
    store = EmbeddingStore::load(in);
  } else {
    ctx.err << "note: no embeddings configured; BERTScore uses hashed token vectors\n";
  }
  const auto embed = make_embedding_provider(store ? &*store : nullptr, !store);

  std::vector<MetricReport> reports;
  if (paths.generated_frame_captions) {
    reports.push_back(evaluate_level(ctx, *paths.generated_frame_captions,
                                     ctx.output("frame_captions.jsonl"), kFrameKey, embed));
  }
  if (paths.generated_clip_captions) {
    reports.push_back(evaluate_level(ctx, *paths.generated_clip_captions,
                                     ctx.output("clip_captions.jsonl"), kClipKey, embed));
  }

  if (paths.logits) {
    const auto records = load_annotations(ctx);
    const auto split = make_split(ctx, records);
    if (split.test.empty()) throw Error("the test split is empty");
    const auto logits = load_logits(ctx);
    const auto m = gather(logits, split.test, ctx.vocab.detection_classes(), "test");
    const auto probs = probabilities_from_logits(m, ctx.config.detection.mode,
                                                 detection_temperature(ctx));
    const auto frames = frame_index(records);
    std::vector<DetectionSet> dets;
    std::vector<std::vector<std::uint8_t>> truth;
    std::vector<std::uint8_t> flat;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      dets.push_back(detect_row(ctx, probs.row(i)));
      truth.push_back(truth_bits(*frames.at(split.test[i]), ctx.vocab));
      flat.insert(flat.end(), truth.back().begin(), truth.back().end());
    }
    const auto cm = classification_metrics(dets, truth);
    // Detection scores are per run; every caption-level row carries them.
    for (auto& rep : reports) {
      rep.precision = cm.precision;
      rep.recall = cm.recall;
      rep.f1 = cm.f1;
      rep.accuracy = cm.accuracy;
    }

    const auto ap = average_precision(rank_by_class(probs, flat), ctx.vocab.instruments().size());
    json per_class = json::object();
    for (std::size_t c = 0; c < ap.per_class.size(); ++c) {
      per_class[ctx.vocab.detection_class_name(c)] =
          ap.per_class[c] ? json(*ap.per_class[c]) : json(nullptr);
    }
    json excluded = json::array();
    for (auto c : ap.excluded) excluded.push_back(ctx.vocab.detection_class_name(c));
    const json apj = {
        {"ap_instruments", ap.ap_instruments ? json(*ap.ap_instruments) : json(nullptr)},
        {"ap_targets", ap.ap_targets ? json(*ap.ap_targets) : json(nullptr)},
        {"per_class", per_class},
        {"excluded", excluded},
        {"frames", dets.size()}};
    ctx.write(ctx.output("average_precision.json"), apj.dump(2) + "\n");
  }

  std::ostringstream csv, jsonl;
  write_metric_csv(csv, reports);
  write_metric_jsonl(jsonl, reports);
  ctx.write(ctx.output("metrics.csv"), csv.str());
  ctx.write(ctx.output("metrics.jsonl"), jsonl.str());
  return 0;
}

// ---- report -----------------------------------------------------------------

int cmd_report(Context& ctx) {
  const auto path = ctx.output("clip_captions.jsonl");
  if (!fs::exists(path)) throw Error(path.string() + " not found; run preprocess first");
  const auto records = read_captions(path, kClipKey);

  std::vector<std::string> order;
  std::map<std::string, std::vector<ClipCaption>> by_video;
  for (const auto& r : records) {
    ClipCaption c;
    c.video_id = r.video_id;
    c.start_frame = r.index;
    c.text = r.text;
    try {
      c.segments = parse_clip_caption(r.text, ctx.vocab);
    } catch (const GrammarError& e) {
      throw Error(path.string() + ": clip (" + r.video_id + ", " + std::to_string(r.index) +
                  "): " + e.what());
    }
    auto [it, fresh] = by_video.try_emplace(r.video_id);
    if (fresh) order.push_back(r.video_id);
    it->second.push_back(std::move(c));
  }

  std::vector<std::string> videos = ctx.videos.empty() ? order : ctx.videos;
  for (const auto& v : videos) {
    if (!by_video.contains(v)) throw Error("unknown video id '" + v + "'");
  }

  const auto reports_dir = ctx.output("reports");
  std::vector<MergedTimeline> timelines;
  for (const auto& v : videos) {
    auto& clips = by_video[v];
    std::stable_sort(clips.begin(), clips.end(),
                     [](const auto& a, const auto& b) { return a.start_frame < b.start_frame; });
    auto tl = merge_timeline(clips);
    const auto rep = offline_report(tl, ctx.vocab);
    std::ostringstream side;
    write_timeline_jsonl(side, tl, ctx.vocab);
    ctx.write(reports_dir / (v + ".offline.txt"), rep.narrative);
    ctx.write(reports_dir / (v + ".timeline.jsonl"), side.str());
    timelines.push_back(std::move(tl));
  }
  if (ctx.config.report.offline) return 0;

  const auto& ep = ctx.config.report.endpoint;
  std::vector<std::optional<SurgicalReport>> results(videos.size());
  std::vector<std::string> errors(videos.size());
  std::mutex log_mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < videos.size();) {
      const auto& v = videos[i];
      auto& clips = by_video[v];
      const auto fed = ctx.config.report.feed == CaptionFeed::dedup ? non_overlapping(clips) : clips;
      auto sink = [&](std::string_view line) {
        std::lock_guard lock(log_mu);
        ctx.err << "[" << v << "] " << line << '\n';
      };
      try {
        results[i] = llm_generate(render_prompt(fed), timelines[i], ep, sink);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const auto n_threads = std::min(ep.parallelism, videos.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  int status = 0;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (results[i]) {
      ctx.write(reports_dir / (videos[i] + ".llm.txt"), results[i]->narrative);
    } else {
      ctx.err << "error: " << videos[i] << ": " << errors[i] << " (offline report kept)\n";
      status = 1;
    }
  }
  return status;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Surgical video captioning and report pipeline", "surgrep"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();

  Overrides ov;
  app.add_option("--config", ov.config, "Pipeline configuration (JSON)")->required();
  app.add_option("--videos", ov.videos, "Restrict to these video ids (comma separated)")
      ->delimiter(',');
  app.add_flag("--offline", ov.offline, "Skip the remote language model");
  app.add_option("--seed", ov.seed, "Split seed");
  app.add_option("--threshold", ov.threshold, "Detection threshold")->check(CLI::Range(0.0, 1.0));
  app.add_option("--mode", ov.mode, "Squashing mode")->check(CLI::IsMember({"sigmoid", "softmax"}));

  const std::pair<const char*, const char*> commands[] = {
      {"preprocess", "Write captions, clip manifest, phase durations and split"},
      {"calibrate", "Fit the temperature on the validation split"},
      {"detect", "Threshold per-frame probabilities into detections"},
      {"evaluate", "Score generated captions and detections"},
      {"report", "Write per-video surgical reports"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    auto config = PipelineConfig::load(ov.config);
    if (ov.seed) config.split.seed = *ov.seed;
    if (ov.threshold) config.detection.threshold = *ov.threshold;
    if (ov.mode) config.detection.mode = parse_squash(*ov.mode);
    if (ov.offline) config.report.offline = true;
    const auto command = app.get_subcommands().front()->get_name();
    config.validate(command);

    Context ctx{config,
                config.paths.vocabulary ? Vocabulary::load(*config.paths.vocabulary)
                                        : Vocabulary::canonical(),
                command,
                ov.videos,
                out,
                err};
    if (ctx.command == "preprocess") return cmd_preprocess(ctx);
    if (ctx.command == "calibrate") return cmd_calibrate(ctx);
    if (ctx.command == "detect") return cmd_detect(ctx);
    if (ctx.command == "evaluate") return cmd_evaluate(ctx);
    return cmd_report(ctx);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace surgrep::cli
