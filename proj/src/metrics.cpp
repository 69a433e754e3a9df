#include "surgrep/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <exception>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "surgrep/error.hpp"
#include "surgrep/io.hpp"

namespace surgrep {

namespace {

using NgramCounts = std::unordered_map<std::string, std::uint64_t>;

NgramCounts count_ngrams(std::span<const std::string> tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::uint64_t clipped_overlap(const NgramCounts& cand, const NgramCounts& ref) {
  std::uint64_t m = 0;
  for (const auto& [g, c] : cand) {
    if (auto it = ref.find(g); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

bool is_separated_punct(unsigned char c) { return std::ispunct(c) && c != '_' && c != '-'; }

double mean_or_zero(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (is_separated_punct(c)) {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      cur += static_cast<char>(std::tolower(c));
    }
  }
  flush();
  return tokens;
}

ClassificationMetrics classification_metrics(std::span<const DetectionSet> predicted,
                                             std::span<const std::vector<std::uint8_t>> truth) {
  if (predicted.empty()) throw PreconditionError("classification_metrics: empty input");
  if (predicted.size() != truth.size()) {
    throw PreconditionError("classification_metrics: predictions and truth differ in length");
  }
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const auto& t = truth[i];
    std::vector<std::uint8_t> p(t.size(), 0);
    for (auto c : predicted[i].detected) {
      if (c >= t.size()) throw PreconditionError("classification_metrics: class index out of range");
      p[c] = 1;
    }
    for (std::size_t c = 0; c < t.size(); ++c) {
      if (p[c] && t[c]) ++tp;
      else if (p[c]) ++fp;
      else if (t[c]) ++fn;
      else ++tn;
    }
  }
  ClassificationMetrics m;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = m.precision + m.recall == 0 ? 0.0 : 2 * m.precision * m.recall / (m.precision + m.recall);
  const auto cells = tp + fp + fn + tn;
  m.accuracy = cells == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(cells);
  return m;
}

double average_precision(std::span<const ScoredItem> items) {
  std::vector<ScoredItem> sorted(items.begin(), items.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  const auto positives = static_cast<std::size_t>(
      std::count_if(sorted.begin(), sorted.end(), [](const auto& s) { return s.relevant; }));
  if (positives == 0) throw PreconditionError("average_precision: no relevant items");

  double ap = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].score == sorted[i].score) {
      tp += sorted[j].relevant ? 1 : 0;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

AveragePrecisionReport average_precision(const RankedPredictions& ranked,
                                         std::size_t instrument_classes) {
  AveragePrecisionReport r;
  r.per_class.resize(ranked.size());
  double sum_i = 0.0, sum_t = 0.0;
  std::size_t n_i = 0, n_t = 0;
  for (std::size_t c = 0; c < ranked.size(); ++c) {
    const bool any = std::any_of(ranked[c].begin(), ranked[c].end(),
                                 [](const auto& s) { return s.relevant; });
    if (!any) {
      r.excluded.push_back(c);
      continue;
    }
    const double ap = average_precision(ranked[c]);
    r.per_class[c] = ap;
    if (c < instrument_classes) {
      sum_i += ap;
      ++n_i;
    } else {
      sum_t += ap;
      ++n_t;
    }
  }
  if (n_i > 0) r.ap_instruments = sum_i / static_cast<double>(n_i);
  if (n_t > 0) r.ap_targets = sum_t / static_cast<double>(n_t);
  return r;
}

RankedPredictions rank_by_class(const LogitMatrix& probabilities,
                                std::span<const std::uint8_t> truth_bits) {
  if (truth_bits.size() != probabilities.values.size()) {
    throw PreconditionError("rank_by_class: truth shape mismatch");
  }
  RankedPredictions ranked(probabilities.cols);
  for (std::size_t i = 0; i < probabilities.rows; ++i) {
    auto row = probabilities.row(i);
    for (std::size_t c = 0; c < probabilities.cols; ++c) {
      ranked[c].push_back({row[c], truth_bits[i * probabilities.cols + c] != 0});
    }
  }
  return ranked;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  if (o.matches.size() != matches.size()) throw PreconditionError("BleuStats order mismatch");
  for (std::size_t n = 0; n < matches.size(); ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  candidate_length += o.candidate_length;
  reference_length += o.reference_length;
  return *this;
}

BleuStats bleu_stats(std::span<const std::string> candidate, std::span<const std::string> reference,
                     std::size_t max_n) {
  if (max_n == 0) throw PreconditionError("bleu: max_n must be at least 1");
  BleuStats s(max_n);
  s.candidate_length = candidate.size();
  s.reference_length = reference.size();
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto cand = count_ngrams(candidate, n);
    s.matches[n - 1] = clipped_overlap(cand, count_ngrams(reference, n));
    s.totals[n - 1] = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  }
  return s;
}

double bleu(const BleuStats& stats, bool smoothing) {
  if (stats.candidate_length == 0) return 0.0;
  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 0; n < stats.totals.size(); ++n) {
    if (stats.totals[n] == 0) continue;
    double m = static_cast<double>(stats.matches[n]);
    double t = static_cast<double>(stats.totals[n]);
    if (smoothing && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0) return 0.0;
    log_sum += std::log(m / t);
    ++orders;
  }
  const double c = static_cast<double>(stats.candidate_length);
  const double r = static_cast<double>(stats.reference_length);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            std::size_t max_n, bool smoothing) {
  return bleu(bleu_stats(candidate, reference, max_n), smoothing);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  const std::size_t m = a.size();
  if (m == 0 || b.empty()) return 0;
  const std::size_t words = (m + 63) / 64;

  // Match masks: bit i of mask[s] is set when a[i] == s.
  std::unordered_map<std::string_view, std::vector<std::uint64_t>> masks;
  for (std::size_t i = 0; i < m; ++i) {
    auto& mask = masks[a[i]];
    if (mask.empty()) mask.assign(words, 0);
    mask[i / 64] |= std::uint64_t{1} << (i % 64);
  }

  // Hyyro's recurrence: V' = (V + (V & M)) | (V & ~M); zeros in V count the LCS.
  std::vector<std::uint64_t> v(words, ~std::uint64_t{0});
  const std::vector<std::uint64_t> none(words, 0);
  for (const auto& sym : b) {
    auto it = masks.find(sym);
    const auto& mask = it == masks.end() ? none : it->second;
    std::uint64_t carry = 0;
    for (std::size_t w = 0; w < words; ++w) {
      const std::uint64_t u = v[w] & mask[w];
      const std::uint64_t sum1 = v[w] + u;
      const std::uint64_t c1 = sum1 < v[w] ? 1 : 0;
      const std::uint64_t sum = sum1 + carry;
      const std::uint64_t c2 = sum < sum1 ? 1 : 0;
      carry = c1 | c2;
      v[w] = sum | (v[w] & ~mask[w]);
    }
  }
  std::size_t ones = 0;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t word = v[w];
    if (w + 1 == words && m % 64 != 0) word &= (std::uint64_t{1} << (m % 64)) - 1;
    ones += static_cast<std::size_t>(std::popcount(word));
  }
  return m - ones;
}

double rouge(std::span<const std::string> candidate, std::span<const std::string> reference,
             RougeVariant variant) {
  if (reference.empty()) throw PreconditionError("rouge: empty reference");
  if (variant == RougeVariant::rL) {
    return static_cast<double>(lcs_length(reference, candidate)) /
           static_cast<double>(reference.size());
  }
  const std::size_t n = variant == RougeVariant::r1 ? 1 : 2;
  if (reference.size() < n) return candidate.size() < n ? 1.0 : 0.0;
  const auto ref = count_ngrams(reference, n);
  const auto overlap = clipped_overlap(count_ngrams(candidate, n), ref);
  return static_cast<double>(overlap) / static_cast<double>(reference.size() - n + 1);
}

EmbeddedText::EmbeddedText(Tokens tokens, std::size_t dim, std::vector<double> vectors)
    : tokens_(std::move(tokens)), dim_(dim), vectors_(std::move(vectors)) {
  if (dim_ == 0 || vectors_.size() != tokens_.size() * dim_) {
    throw PreconditionError("embedding shape mismatch");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    double* row = vectors_.data() + i * dim_;
    double n2 = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) n2 += row[k] * row[k];
    if (!(n2 > 0) || !std::isfinite(n2)) {
      throw PreconditionError("embedding for token '" + tokens_[i] + "' has zero or invalid norm");
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t k = 0; k < dim_; ++k) row[k] *= inv;
  }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

BertScore bertscore(const EmbeddedText& candidate, const EmbeddedText& reference) {
  if (candidate.size() == 0 || reference.size() == 0) {
    throw PreconditionError("bertscore: empty token sequence");
  }
  if (candidate.dim() != reference.dim()) throw PreconditionError("bertscore: dimension mismatch");
  std::vector<double> best_c(candidate.size(), -1.0), best_r(reference.size(), -1.0);
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double s = cosine_similarity(candidate.vector(i), reference.vector(j));
      best_c[i] = std::max(best_c[i], s);
      best_r[j] = std::max(best_r[j], s);
    }
  }
  BertScore out;
  out.precision = std::max(0.0, mean_or_zero(best_c));
  out.recall = std::max(0.0, mean_or_zero(best_r));
  const double pr = out.precision + out.recall;
  out.f1 = pr == 0.0 ? 0.0 : 2 * out.precision * out.recall / pr;
  return out;
}

std::string EmbeddingStore::key(std::span<const std::string> tokens) {
  std::uint64_t h = io::fnv1a("");
  for (const auto& t : tokens) {
    h = io::fnv1a(t, h);
    h = io::fnv1a("\x1f", h);
  }
  return io::hex64(h);
}

EmbeddingStore EmbeddingStore::load(std::istream& in) {
  EmbeddingStore store;
  io::for_each_record(in, [&](const nlohmann::json& j, std::size_t line) {
    auto tokens = j.at("tokens").get<Tokens>();
    const auto dim = j.at("dim").get<std::size_t>();
    const auto& rows = j.at("vectors");
    if (!rows.is_array() || rows.size() != tokens.size()) {
      throw ParseError("one vector per token required", line);
    }
    std::vector<double> flat;
    flat.reserve(tokens.size() * dim);
    for (const auto& r : rows) {
      auto v = r.get<std::vector<double>>();
      if (v.size() != dim) throw ParseError("vector length differs from dim", line);
      flat.insert(flat.end(), v.begin(), v.end());
    }
    if (j.contains("key") && j.at("key").get<std::string>() != key(tokens)) {
      throw ParseError("key does not match the token sequence", line);
    }
    try {
      store.add(EmbeddedText(std::move(tokens), dim, std::move(flat)));
    } catch (const PreconditionError& e) {
      throw ParseError(e.what(), line);
    }
  });
  return store;
}

void EmbeddingStore::write(std::ostream& out) const {
  for (const auto& k : order_) {
    const auto& e = entries_.at(k);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < e.size(); ++i) {
      auto v = e.vector(i);
      rows.push_back(std::vector<double>(v.begin(), v.end()));
    }
    out << nlohmann::json{{"key", k}, {"tokens", e.tokens()}, {"dim", e.dim()}, {"vectors", rows}}
               .dump()
        << '\n';
  }
}

void EmbeddingStore::add(const EmbeddedText& text) {
  auto k = key(text.tokens());
  if (entries_.insert_or_assign(k, text).second) order_.push_back(k);
}

const EmbeddedText* EmbeddingStore::find(std::span<const std::string> tokens) const {
  auto it = entries_.find(key(tokens));
  return it == entries_.end() ? nullptr : &it->second;
}

EmbeddedText hashed_embedding(const Tokens& tokens, std::size_t dim) {
  std::vector<double> flat;
  flat.reserve(tokens.size() * dim);
  for (const auto& t : tokens) {
    std::uint64_t state = io::fnv1a(t);
    for (std::size_t k = 0; k < dim; ++k) {
      // splitmix64
      std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      z ^= z >> 31;
      flat.push_back(static_cast<double>(z >> 11) * 0x1.0p-53 * 2.0 - 1.0);
    }
  }
  return EmbeddedText(tokens, dim, std::move(flat));
}

EmbeddingProvider make_embedding_provider(const EmbeddingStore* store, bool fallback) {
  return [store, fallback](const Tokens& tokens) {
    if (store) {
      if (const auto* e = store->find(tokens)) return *e;
    }
    if (!fallback) {
      throw Error("no embeddings for token sequence " + EmbeddingStore::key(tokens));
    }
    return hashed_embedding(tokens);
  };
}

MetricReport evaluate_captions(std::span<const std::string> generated,
                               std::span<const std::string> reference,
                               const EmbeddingProvider& embed) {
  if (generated.size() != reference.size()) {
    throw PreconditionError("evaluate_captions: generated and reference differ in length");
  }
  const auto n = generated.size();
  std::vector<BleuStats> stats(n);
  std::vector<double> r1(n), r2(n), rl(n), bp(n), br(n), bf(n);
  std::exception_ptr failure;

#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto k = static_cast<std::size_t>(i);
    try {
      const auto cand = tokenize(generated[k]);
      const auto ref = tokenize(reference[k]);
      stats[k] = bleu_stats(cand, ref);
      r1[k] = rouge(cand, ref, RougeVariant::r1);
      r2[k] = rouge(cand, ref, RougeVariant::r2);
      rl[k] = rouge(cand, ref, RougeVariant::rL);
      const auto b = bertscore(embed(cand), embed(ref));
      bp[k] = b.precision;
      br[k] = b.recall;
      bf[k] = b.f1;
    } catch (...) {
#pragma omp critical(surgrep_eval_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  MetricReport rep;
  rep.pairs = n;
  BleuStats corpus;
  for (const auto& s : stats) corpus += s;
  rep.bleu = bleu(corpus);
  rep.rouge1 = mean_or_zero(r1);
  rep.rouge2 = mean_or_zero(r2);
  rep.rougeL = mean_or_zero(rl);
  rep.bert_precision = mean_or_zero(bp);
  rep.bert_recall = mean_or_zero(br);
  rep.bert_f1 = mean_or_zero(bf);
  return rep;
}

namespace {

std::string opt_text(const std::optional<double>& v) { return v ? io::format_double(*v) : ""; }

nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

void write_metric_csv(std::ostream& out, std::span<const MetricReport> reports) {
  out << "level,pairs,bleu,rouge1,rouge2,rougeL,bert_precision,bert_recall,bert_f1,precision,recall,"
         "f1,accuracy\n";
  for (const auto& r : reports) {
    out << r.level << ',' << r.pairs << ',' << io::format_double(r.bleu) << ','
        << io::format_double(r.rouge1) << ',' << io::format_double(r.rouge2) << ','
        << io::format_double(r.rougeL) << ',' << io::format_double(r.bert_precision) << ','
        << io::format_double(r.bert_recall) << ',' << io::format_double(r.bert_f1) << ','
        << opt_text(r.precision) << ',' << opt_text(r.recall) << ',' << opt_text(r.f1) << ','
        << opt_text(r.accuracy) << '\n';
  }
}

void write_metric_jsonl(std::ostream& out, std::span<const MetricReport> reports) {
  for (const auto& r : reports) {
    nlohmann::json j = {{"level", r.level},
                        {"pairs", r.pairs},
                        {"bleu", r.bleu},
                        {"rouge1", r.rouge1},
                        {"rouge2", r.rouge2},
                        {"rougeL", r.rougeL},
                        {"bert_precision", r.bert_precision},
                        {"bert_recall", r.bert_recall},
                        {"bert_f1", r.bert_f1},
                        {"precision", opt_json(r.precision)},
                        {"recall", opt_json(r.recall)},
                        {"f1", opt_json(r.f1)},
                        {"accuracy", opt_json(r.accuracy)}};
    out << j.dump() << '\n';
  }
}

}  // namespace surgrep
