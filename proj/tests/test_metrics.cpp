#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixture.hpp"
#include "oracles.hpp"
#include "surgrep/error.hpp"
#include "surgrep/metrics.hpp"

using namespace surgrep;
using doctest::Approx;

namespace {

Tokens random_words(std::mt19937_64& rng, std::size_t max_len, std::size_t alphabet) {
  Tokens t(fixture::below(rng, max_len + 1));
  for (auto& w : t) w = std::string(1, static_cast<char>('a' + fixture::below(rng, alphabet)));
  return t;
}

EmbeddedText embed(const std::vector<std::vector<double>>& rows) {
  Tokens tokens;
  std::vector<double> flat;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tokens.push_back("t" + std::to_string(i));
    flat.insert(flat.end(), rows[i].begin(), rows[i].end());
  }
  return EmbeddedText(tokens, rows.front().size(), flat);
}

DetectionSet detected(std::vector<std::size_t> classes) {
  DetectionSet d;
  d.detected = std::move(classes);
  return d;
}

}  // namespace

TEST_CASE("tokenizer keeps annotation names whole") {
  CHECK(tokenize("During phase calot-triangle-dissection, the Hook is near the cystic_duct.") ==
        Tokens{"during", "phase", "calot-triangle-dissection", ",", "the", "hook", "is", "near",
               "the", "cystic_duct", "."});
  CHECK(tokenize("  ").empty());
}

TEST_CASE("classification metrics: identity and all-negative predictions") {
  const std::vector<std::vector<std::uint8_t>> truth = {{1, 0, 1}, {0, 1, 0}};
  const std::vector<DetectionSet> same = {detected({0, 2}), detected({1})};
  const auto m = classification_metrics(same, truth);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.accuracy == 1.0);

  const std::vector<DetectionSet> none = {detected({}), detected({})};
  const auto z = classification_metrics(none, truth);
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);
  CHECK(z.f1 == 0.0);
  CHECK(z.accuracy == Approx(0.5));

  CHECK_THROWS(classification_metrics({}, {}));
  CHECK_THROWS(classification_metrics(none, std::vector<std::vector<std::uint8_t>>{{1, 0, 1}}));
}

TEST_CASE("classification metrics match a confusion-matrix count") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::vector<std::uint8_t>> truth(100, std::vector<std::uint8_t>(21));
    std::vector<DetectionSet> pred(100);
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t f = 0; f < 100; ++f) {
      for (std::size_t c = 0; c < 21; ++c) {
        truth[f][c] = fixture::below(rng, 4) == 0;
        const bool p = fixture::below(rng, 3) == 0;
        if (p) pred[f].detected.push_back(c);
        tp += p && truth[f][c];
        fp += p && !truth[f][c];
        fn += !p && truth[f][c];
        tn += !p && !truth[f][c];
      }
    }
    const double precision = tp / (tp + fp), recall = tp / (tp + fn);
    const auto m = classification_metrics(pred, truth);
    CHECK(m.precision == Approx(precision).epsilon(1e-12));
    CHECK(m.recall == Approx(recall).epsilon(1e-12));
    CHECK(m.f1 == Approx(2 * precision * recall / (precision + recall)).epsilon(1e-12));
    CHECK(m.accuracy == Approx((tp + tn) / 2100).epsilon(1e-12));
  }
}

TEST_CASE("average precision examples") {
  const std::vector<ScoredItem> perfect = {{0.9, true}, {0.8, true}, {0.2, false}};
  CHECK(average_precision(perfect) == 1.0);
  const std::vector<ScoredItem> mixed = {{0.9, true}, {0.5, false}, {0.1, true}};
  CHECK(average_precision(mixed) == Approx(5.0 / 6).epsilon(1e-12));
  CHECK_THROWS_AS(average_precision(std::vector<ScoredItem>{{0.3, false}}), PreconditionError);
}

TEST_CASE("average precision of random scores is near prevalence") {
  std::mt19937_64 rng(32);
  std::vector<ScoredItem> items(10000);
  std::size_t positives = 0;
  for (auto& it : items) {
    it.score = fixture::uniform01(rng);
    it.relevant = fixture::below(rng, 2) == 0;
    positives += it.relevant;
  }
  const double prevalence = static_cast<double>(positives) / items.size();
  CHECK(std::fabs(average_precision(items) - prevalence) <= 0.05);
}

TEST_CASE("average precision matches the threshold sweep on every ranking up to 10 items") {
  for (std::size_t n = 1; n <= 10; ++n) {
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
      std::vector<ScoredItem> items;
      std::vector<double> scores;
      std::vector<bool> rel;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = static_cast<double>(n - i);
        const bool r = (mask >> i) & 1u;
        items.push_back({s, r});
        scores.push_back(s);
        rel.push_back(r);
      }
      CHECK(average_precision(items) == Approx(oracle::average_precision(scores, rel)).epsilon(1e-12));
    }
  }
}

TEST_CASE("average precision with tied scores matches the sweep") {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 1 + fixture::below(rng, 30);
    std::vector<ScoredItem> items(n);
    std::vector<double> scores(n);
    std::vector<bool> rel(n);
    for (std::size_t k = 0; k < n; ++k) {
      scores[k] = static_cast<double>(fixture::below(rng, 5));
      rel[k] = fixture::below(rng, 2);
      items[k] = {scores[k], rel[k]};
    }
    rel[0] = items[0].relevant = true;
    CHECK(average_precision(items) == Approx(oracle::average_precision(scores, rel)).epsilon(1e-12));
  }
}

TEST_CASE("per-class AP splits instruments from targets and skips empty classes") {
  LogitMatrix p(4, 3);
  p.values = {0.9, 0.1, 0.8,  //
              0.2, 0.7, 0.3,  //
              0.6, 0.4, 0.9,  //
              0.1, 0.8, 0.2};
  const std::vector<std::uint8_t> truth = {1, 0, 1,  //
                                           0, 0, 0,  //
                                           1, 0, 0,  //
                                           0, 0, 1};
  const auto report = average_precision(rank_by_class(p, truth), 2);
  REQUIRE(report.per_class.size() == 3);
  CHECK(report.per_class[0] == 1.0);
  CHECK_FALSE(report.per_class[1].has_value());
  CHECK(report.excluded == std::vector<std::size_t>{1});
  CHECK(*report.ap_instruments == 1.0);
  // class 2 ranks - (0.9), + (0.8), - (0.3), + (0.2)
  CHECK(*report.ap_targets == Approx(0.5 * 0.5 + 0.5 * 0.5).epsilon(1e-12));
}

TEST_CASE("BLEU examples against the counting oracle") {
  const auto cand = tokenize("the grasper is retracting the gallbladder");
  const auto ref = tokenize("the grasper is retracting the liver");
  CHECK(bleu(cand, ref) == Approx(oracle::bleu(cand, ref)).epsilon(1e-12));
  CHECK(bleu(cand, ref) > 0.0);
  CHECK(bleu(cand, cand) == Approx(1.0));
  CHECK(bleu(tokenize("alpha beta"), tokenize("gamma delta")) == 0.0);
  CHECK(bleu(Tokens{}, ref) == 0.0);
}

TEST_CASE("BLEU matches the oracle on random pairs, smoothed or not") {
  std::mt19937_64 rng(34);
  for (int i = 0; i < 1000; ++i) {
    const auto c = random_words(rng, 12, 4);
    auto r = random_words(rng, 12, 4);
    if (r.empty()) r.push_back("a");
    for (bool smooth : {false, true}) {
      const double got = bleu(c, r, 4, smooth);
      CHECK(got == Approx(oracle::bleu(c, r, 4, smooth)).epsilon(1e-12));
      CHECK(got >= 0.0);
      CHECK(got <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("corpus BLEU pools counts before taking precisions") {
  const auto a = tokenize("the hook dissects the gallbladder");
  const auto b = tokenize("the grasper holds the liver");
  auto stats = bleu_stats(a, a);
  stats += bleu_stats(b, tokenize("the grasper retracts the liver"));
  CHECK(stats.totals[0] == 10);
  CHECK(stats.matches[0] == 9);
  CHECK(stats.candidate_length == 10);
  const double got = bleu(stats);
  CHECK(got > 0.0);
  CHECK(got < 1.0);
}

TEST_CASE("ROUGE examples") {
  const auto t = tokenize("the hook is dissecting the gallbladder");
  for (auto v : {RougeVariant::r1, RougeVariant::r2, RougeVariant::rL}) CHECK(rouge(t, t, v) == 1.0);
  CHECK(rouge(tokenize("the cat"), tokenize("the cat sat"), RougeVariant::r1) ==
        Approx(2.0 / 3).epsilon(1e-12));
  CHECK(rouge(tokenize("the cat"), tokenize("the cat sat"), RougeVariant::r2) ==
        Approx(1.0 / 2).epsilon(1e-12));
  CHECK_THROWS_AS(rouge(t, Tokens{}, RougeVariant::r1), PreconditionError);
}

TEST_CASE("LCS and ROUGE match dynamic programming") {
  std::mt19937_64 rng(35);
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_words(rng, 150, 5);
    auto b = random_words(rng, 150, 5);
    CHECK(lcs_length(a, b) == oracle::lcs(a, b));
    if (b.empty()) continue;
    CHECK(rouge(a, b, RougeVariant::rL) == Approx(oracle::rouge_l(a, b)).epsilon(1e-12));
    if (b.size() >= 2) {
      CHECK(rouge(a, b, RougeVariant::r1) == Approx(oracle::rouge_n(a, b, 1)).epsilon(1e-12));
      CHECK(rouge(a, b, RougeVariant::r2) == Approx(oracle::rouge_n(a, b, 2)).epsilon(1e-12));
    }
  }
}

TEST_CASE("BERTScore examples") {
  const auto a = embed({{1, 0, 0}, {0, 1, 0}});
  const auto same = bertscore(a, a);
  CHECK(same.precision == Approx(1.0));
  CHECK(same.recall == Approx(1.0));
  CHECK(same.f1 == Approx(1.0));

  const auto orth = bertscore(a, embed({{0, 0, 1}}));
  CHECK(orth.precision == 0.0);
  CHECK(orth.recall == 0.0);
  CHECK(orth.f1 == 0.0);

  const oracle::Vectors c = {{1, 2, 0}, {0, 1, 1}};
  const oracle::Vectors r = {{1, 0, 0}, {2, 2, 1}, {0, 0, 3}};
  const auto got = bertscore(embed(c), embed(r));
  const auto expect = oracle::bertscore(c, r);
  CHECK(got.precision == Approx(expect.p).epsilon(1e-12));
  CHECK(got.recall == Approx(expect.r).epsilon(1e-12));
  CHECK(got.f1 == Approx(expect.f).epsilon(1e-12));

  CHECK_THROWS(bertscore(a, embed({{1, 0}})));
  CHECK_THROWS(EmbeddedText({"x"}, 2, {0.0, 0.0}));
}

TEST_CASE("BERTScore swaps precision and recall with its operands") {
  std::mt19937_64 rng(36);
  for (int i = 0; i < 200; ++i) {
    auto rows = [&](std::size_t n) {
      std::vector<std::vector<double>> v(n, std::vector<double>(8));
      for (auto& row : v) {
        for (auto& x : row) x = fixture::normal(rng);
      }
      return v;
    };
    const auto x = embed(rows(1 + fixture::below(rng, 6)));
    const auto y = embed(rows(1 + fixture::below(rng, 6)));
    const auto xy = bertscore(x, y), yx = bertscore(y, x);
    CHECK(xy.precision == Approx(yx.recall).epsilon(1e-12));
    CHECK(xy.recall == Approx(yx.precision).epsilon(1e-12));
    for (double v : {xy.precision, xy.recall, xy.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("embedding store round trip and provider fallback") {
  EmbeddingStore store;
  const auto tokens = tokenize("the hook is present");
  store.add(hashed_embedding(tokens, 8));
  std::ostringstream out;
  store.write(out);
  std::istringstream in(out.str());
  const auto back = EmbeddingStore::load(in);
  REQUIRE(back.size() == 1);
  const auto* hit = back.find(tokens);
  REQUIRE(hit != nullptr);
  CHECK(hit->dim() == 8);
  CHECK(hit->tokens() == tokens);
  CHECK(back.find(tokenize("the hook")) == nullptr);

  const auto strict = make_embedding_provider(&back, false);
  CHECK(strict(tokens).size() == 4);
  CHECK_THROWS(strict(tokenize("unknown text")));
  const auto loose = make_embedding_provider(&back, true);
  CHECK(loose(tokenize("unknown text")).size() == 2);

  // same token, same vector, wherever it appears
  const auto h = hashed_embedding(tokenize("the grasper the"));
  CHECK(cosine_similarity(h.vector(0), h.vector(2)) == 1.0);
}

TEST_CASE("caption evaluation and export") {
  const std::vector<std::string> ref = {"the hook is dissecting the gallbladder",
                                        "the grasper is retracting the liver"};
  const auto embedder = make_embedding_provider(nullptr, true);
  const auto same = evaluate_captions(ref, ref, embedder);
  CHECK(same.pairs == 2);
  CHECK(same.bleu == Approx(1.0));
  CHECK(same.rougeL == 1.0);
  CHECK(same.bert_f1 == Approx(1.0));

  const std::vector<std::string> gen = {"the hook is dissecting the liver",
                                        "the grasper is retracting the liver"};
  auto report = evaluate_captions(gen, ref, embedder);
  CHECK(report.bleu < 1.0);
  CHECK(report.rouge1 == Approx((5.0 / 6 + 1.0) / 2));
  CHECK_THROWS(evaluate_captions(gen, std::vector<std::string>{ref[0]}, embedder));

  report.level = "clip";
  report.precision = 0.5;
  std::ostringstream csv, jsonl;
  write_metric_csv(csv, std::span(&report, 1));
  write_metric_jsonl(jsonl, std::span(&report, 1));
  CHECK(csv.str().rfind("level,pairs,bleu,rouge1,rouge2,rougeL,bert_precision,bert_recall,bert_f1,"
                        "precision,recall,f1,accuracy\n",
                        0) == 0);
  const auto j = nlohmann::json::parse(jsonl.str());
  CHECK(j.at("level") == "clip");
  CHECK(j.at("precision") == 0.5);
  CHECK(j.at("recall").is_null());
}
