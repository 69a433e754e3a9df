#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "surgrep/detection.hpp"

namespace surgrep {

using Tokens = std::vector<std::string>;

/// Lowercases, splits punctuation other than '_' and '-' into separate
/// tokens, then splits on whitespace.
Tokens tokenize(std::string_view text);

// ---- detection metrics ------------------------------------------------------

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
};

/// Micro-averaged over all (frame, class) cells. Precision is 0 with no
/// predicted positives, recall 0 with no true positives, F1 0 when both are 0.
ClassificationMetrics classification_metrics(std::span<const DetectionSet> predicted,
                                             std::span<const std::vector<std::uint8_t>> truth);

struct ScoredItem {
  double score = 0.0;
  bool relevant = false;
};

/// Per-class (score, relevance) lists.
using RankedPredictions = std::vector<std::vector<ScoredItem>>;

/// Area under the precision-recall curve, sum_n (R_n - R_{n-1}) P_n, with a
/// threshold at every distinct score (tied scores enter together). Throws
/// PreconditionError when the list has no relevant item.
double average_precision(std::span<const ScoredItem> items);

struct AveragePrecisionReport {
  std::vector<std::optional<double>> per_class;  // nullopt: no positives
  std::vector<std::size_t> excluded;
  std::optional<double> ap_instruments;
  std::optional<double> ap_targets;
};

/// AP per class plus the means over the first `instrument_classes` classes
/// and over the rest. Classes without positives are excluded and listed.
AveragePrecisionReport average_precision(const RankedPredictions& ranked,
                                         std::size_t instrument_classes);

/// Column-wise ranking of a probability matrix against multi-hot truth.
RankedPredictions rank_by_class(const LogitMatrix& probabilities,
                                std::span<const std::uint8_t> truth_bits);

// ---- text metrics -----------------------------------------------------------

/// Clipped n-gram counts for one candidate/reference pair or a whole corpus.
struct BleuStats {
  std::vector<std::uint64_t> matches;
  std::vector<std::uint64_t> totals;
  std::uint64_t candidate_length = 0;
  std::uint64_t reference_length = 0;

  explicit BleuStats(std::size_t max_n = 4) : matches(max_n, 0), totals(max_n, 0) {}
  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(std::span<const std::string> candidate, std::span<const std::string> reference,
                     std::size_t max_n = 4);

/// BP * exp(sum_n w_n log p_n) over the orders that exist in the candidate
/// (w_n uniform over those orders); BP = 1 if c > r else exp(1 - r/c).
/// Without smoothing any zero precision gives 0; with smoothing, orders above
/// one use (m + 1) / (t + 1).
double bleu(const BleuStats& stats, bool smoothing = false);
double bleu(std::span<const std::string> candidate, std::span<const std::string> reference,
            std::size_t max_n = 4, bool smoothing = false);

enum class RougeVariant { r1, r2, rL };

/// Recall-oriented ROUGE: clipped overlap over reference n-grams (r1, r2) or
/// LCS length over reference length (rL). Throws on an empty reference.
double rouge(std::span<const std::string> candidate, std::span<const std::string> reference,
             RougeVariant variant);

/// Longest common subsequence length (bit-parallel over the first sequence).
std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// Tokens with one unit-norm vector each.
class EmbeddedText {
public:
  EmbeddedText() = default;
  /// `vectors` is tokens.size() x dim; rows are normalized here. Throws on a
  /// zero row or a shape mismatch.
  EmbeddedText(Tokens tokens, std::size_t dim, std::vector<double> vectors);

  const Tokens& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return dim_; }
  std::span<const double> vector(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }

private:
  Tokens tokens_;
  std::size_t dim_ = 0;
  std::vector<double> vectors_;
};

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Greedy cosine matching: precision averages each candidate token's best
/// similarity to the reference, recall the converse. Scores are floored at 0.
BertScore bertscore(const EmbeddedText& candidate, const EmbeddedText& reference);

/// Cosine similarity clamped to [-1, 1]; exactly 1 for bitwise-equal vectors.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Embeddings looked up by a hash of the token sequence.
class EmbeddingStore {
public:
  static std::string key(std::span<const std::string> tokens);

  /// Lines of {"key", "tokens", "dim", "vectors"}.
  static EmbeddingStore load(std::istream& in);
  void write(std::ostream& out) const;

  void add(const EmbeddedText& text);
  const EmbeddedText* find(std::span<const std::string> tokens) const;
  std::size_t size() const { return entries_.size(); }

private:
  std::unordered_map<std::string, EmbeddedText> entries_;
  std::vector<std::string> order_;
};

/// Deterministic per-token vectors seeded by a hash of the token text. A
/// lexical stand-in used when no contextual embeddings are supplied.
EmbeddedText hashed_embedding(const Tokens& tokens, std::size_t dim = 64);

using EmbeddingProvider = std::function<EmbeddedText(const Tokens&)>;

/// Looks up `store`, falling back to hashed_embedding on a miss when
/// `fallback` is set (throws otherwise).
EmbeddingProvider make_embedding_provider(const EmbeddingStore* store, bool fallback);

// ---- reports ----------------------------------------------------------------

struct MetricReport {
  std::string level;  // "frame" or "clip"
  std::size_t pairs = 0;
  double bleu = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double bert_precision = 0.0;
  double bert_recall = 0.0;
  double bert_f1 = 0.0;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> accuracy;
};

/// Corpus BLEU plus mean per-pair ROUGE and BERTScore, parallel over pairs.
MetricReport evaluate_captions(std::span<const std::string> generated,
                               std::span<const std::string> reference,
                               const EmbeddingProvider& embed);

void write_metric_csv(std::ostream& out, std::span<const MetricReport> reports);
void write_metric_jsonl(std::ostream& out, std::span<const MetricReport> reports);

}  // namespace surgrep
