#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixture.hpp"
#include "oracles.hpp"
#include "surgrep/detection.hpp"
#include "surgrep/error.hpp"

using namespace surgrep;
using doctest::Approx;

namespace {

ImageMatrix random_image(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t c) {
  ImageMatrix img(h, w, c);
  for (auto& v : img.data) v = fixture::uniform01(rng);
  return img;
}

}  // namespace

TEST_CASE("patch counts") {
  CHECK(patch_count(224, 224, 16) == 196);
  CHECK(patch_count(16, 16, 16) == 1);
  CHECK(patch_count(112, 224, 16) == 98);
  CHECK_THROWS_AS(patch_count(224, 220, 16), PreconditionError);
  CHECK_THROWS_AS(patch_count(16, 16, 0), PreconditionError);
}

TEST_CASE("4x4 grid cut into 2x2 patches") {
  ImageMatrix img(4, 4, 1);
  std::iota(img.data.begin(), img.data.end(), 1.0);
  const auto seq = patchify(img, 2);
  REQUIRE(seq.count() == 4);
  // brute force: patch k covers rows 2*(k/2).., columns 2*(k%2)..
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<double> expect;
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 2; ++c) expect.push_back(img.at(2 * (k / 2) + r, 2 * (k % 2) + c));
    }
    const auto p = seq.patch(k);
    CHECK(std::vector<double>(p.begin(), p.end()) == expect);
    CHECK(seq.position(k) == k + 1);
  }
  const auto first = seq.patch(0);
  CHECK(std::vector<double>(first.begin(), first.end()) == std::vector<double>{1, 2, 5, 6});
}

TEST_CASE("whole-image patch and standard ViT grid") {
  std::mt19937_64 rng(4);
  const auto img = random_image(rng, 8, 8, 3);
  const auto one = patchify(img, 8);
  REQUIRE(one.count() == 1);
  CHECK(std::vector<double>(one.patch(0).begin(), one.patch(0).end()) == img.data);

  const auto big = patchify(ImageMatrix(224, 224, 3), 16);
  CHECK(big.count() == 196);
  CHECK(big.patch_length() == 16 * 16 * 3);
}

TEST_CASE("patchify then unpatchify reconstructs the image") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const std::size_t p = 1 + fixture::below(rng, 5);
    const auto img = random_image(rng, p * (1 + fixture::below(rng, 6)),
                                  p * (1 + fixture::below(rng, 6)), 1 + fixture::below(rng, 3));
    CHECK(unpatchify(patchify(img, p)) == img);
  }
}

TEST_CASE("probability examples") {
  const std::vector<double> equal(21, 0.7);
  for (double p : probabilities_from_logits(equal, Squash::softmax)) CHECK(p == Approx(1.0 / 21));

  for (double t : {0.1, 1.0, 7.0}) {
    const std::vector<double> zero(21, 0.0);
    for (double p : probabilities_from_logits(zero, Squash::sigmoid, t)) CHECK(p == 0.5);
  }

  const std::vector<double> two = {std::log(2.0), 0.0};
  const auto p = probabilities_from_logits(two, Squash::softmax);
  CHECK(p[0] == Approx(2.0 / 3).epsilon(1e-12));
  CHECK(p[1] == Approx(1.0 / 3).epsilon(1e-12));

  CHECK_THROWS_AS(probabilities_from_logits(two, Squash::softmax, 0.0), PreconditionError);
  CHECK_THROWS_AS(probabilities_from_logits(two, Squash::sigmoid, -1.0), PreconditionError);
}

TEST_CASE("softmax sums to one and keeps its argmax under any temperature") {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> z(21);
    for (auto& v : z) v = 10 * fixture::normal(rng);
    const auto base = probabilities_from_logits(z, Squash::softmax);
    const auto top = std::max_element(base.begin(), base.end()) - base.begin();
    const double t = std::exp(4 * fixture::uniform01(rng) - 2);
    const auto p = probabilities_from_logits(z, Squash::softmax, t);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == Approx(1.0).epsilon(1e-9));
    CHECK(std::max_element(p.begin(), p.end()) - p.begin() == top);
    for (double v : probabilities_from_logits(z, Squash::sigmoid, t)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("thresholding is strict") {
  std::vector<double> p(21, 0.0);
  p[0] = 0.6;
  p[1] = 0.4;
  p[2] = 0.51;
  CHECK(threshold_detect(p, 0.5).detected == std::vector<std::size_t>{0, 2});
  CHECK(threshold_detect(std::vector<double>(21, 0.5), 0.5).detected.empty());
}

TEST_CASE("thresholding matches a brute-force filter") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p(21);
    for (auto& v : p) v = fixture::below(rng, 3) == 0 ? 0.5 : fixture::uniform01(rng);
    const double t = fixture::below(rng, 2) ? 0.5 : fixture::uniform01(rng);
    std::vector<std::size_t> expect;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > t) expect.push_back(k);
    }
    CHECK(threshold_detect(p, t).detected == expect);
  }
}

TEST_CASE("per-class thresholds") {
  const std::vector<double> p = {0.3, 0.3, 0.9};
  const std::vector<double> t = {0.2, 0.5, 0.95};
  CHECK(threshold_detect(p, t).detected == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(threshold_detect(p, std::vector<double>{0.5}), PreconditionError);
}

TEST_CASE("class weight examples") {
  const auto even = class_weights(std::vector<double>{1, 1}, 1e-12);
  CHECK(even.weights[0] == Approx(0.5));
  CHECK(even.weights[1] == Approx(0.5));
  const auto skew = class_weights(std::vector<double>{9, 1}, 0.0);
  CHECK(skew.weights[0] == Approx(0.1).epsilon(1e-12));
  CHECK(skew.weights[1] == Approx(0.9).epsilon(1e-12));
  CHECK_THROWS_AS(class_weights(std::vector<double>{0, 1}, 0.0), PreconditionError);
  CHECK(class_weights(std::vector<double>{0, 1}).weights[0] > 0.99);
}

TEST_CASE("class weights sum to one and ignore a common scale") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 300; ++i) {
    std::vector<double> f(21), doubled(21);
    for (std::size_t k = 0; k < 21; ++k) {
      f[k] = 1 + static_cast<double>(fixture::below(rng, 5000));
      doubled[k] = 2 * f[k];
    }
    const auto a = class_weights(f, 0.0);
    const auto b = class_weights(doubled, 0.0);
    CHECK(std::accumulate(a.weights.begin(), a.weights.end(), 0.0) == Approx(1.0).epsilon(1e-9));
    for (std::size_t k = 0; k < 21; ++k) CHECK(a.weights[k] == Approx(b.weights[k]).epsilon(1e-12));
    const auto c = class_weights(f);
    CHECK(std::accumulate(c.weights.begin(), c.weights.end(), 0.0) == Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("class frequencies count positive frames") {
  const auto corpus = fixture::corpus({3, 40, 60, 1}, Vocabulary::canonical());
  const auto f = class_frequencies(corpus, Vocabulary::canonical());
  std::vector<double> expect(21, 0.0);
  for (const auto& v : corpus) {
    for (const auto& fr : v.frames) {
      const auto bits = truth_bits(fr, Vocabulary::canonical());
      for (std::size_t k = 0; k < 21; ++k) expect[k] += bits[k];
    }
  }
  CHECK(f == expect);
}

TEST_CASE("weighted BCE examples") {
  const std::vector<std::uint8_t> ones(21, 1);
  const std::vector<double> sure(21, 20.0);
  const auto w = class_weights(std::vector<double>(21, 1.0));
  CHECK(weighted_bce(ones, sure, w) <= 1e-8);

  ClassWeights unit;
  unit.weights = {1.0};
  CHECK(weighted_bce(std::vector<std::uint8_t>{1}, std::vector<double>{0.0}, unit) ==
        Approx(std::log(2.0)).epsilon(1e-12));

  // a confidently wrong logit hits the clamp instead of infinity
  const double clamped = weighted_bce(std::vector<std::uint8_t>{0}, std::vector<double>{1000.0}, unit);
  CHECK(std::isfinite(clamped));
  CHECK(clamped == Approx(-std::log(1e-12)));

  CHECK_THROWS_AS(weighted_bce(ones, std::vector<double>{1.0}, w), PreconditionError);
}

TEST_CASE("weighted BCE matches a term-by-term sum") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + fixture::below(rng, 21);
    std::vector<std::uint8_t> y(n);
    std::vector<double> z(n), f(n);
    for (std::size_t k = 0; k < n; ++k) {
      y[k] = static_cast<std::uint8_t>(fixture::below(rng, 2));
      z[k] = 6 * fixture::normal(rng);
      f[k] = fixture::uniform01(rng) * 100;
    }
    const auto w = class_weights(f);
    const double got = weighted_bce(y, z, w);
    CHECK(got == Approx(oracle::weighted_bce(y, z, w.weights)).epsilon(1e-12));
    CHECK(got >= 0.0);
  }
}

TEST_CASE("batch BCE is the mean of row losses") {
  LogitMatrix z(3, 2);
  z.values = {0.0, 1.0, -2.0, 3.0, 0.5, -0.5};
  const std::vector<std::uint8_t> y = {1, 0, 0, 1, 1, 1};
  const auto w = class_weights(std::vector<double>{3, 1});
  double sum = 0;
  for (std::size_t r = 0; r < 3; ++r) {
    sum += weighted_bce(std::span(y).subspan(2 * r, 2), z.row(r), w);
  }
  CHECK(mean_weighted_bce(z, y, w) == Approx(sum / 3).epsilon(1e-12));
  CHECK_THROWS_AS(mean_weighted_bce(LogitMatrix(0, 2), {}, w), PreconditionError);
}

TEST_CASE("detection export names the detected classes") {
  std::vector<double> p(21, 0.1);
  p[1] = 0.9;
  p[6] = 0.8;
  auto d = threshold_detect(p);
  d.video_id = "VID02";
  d.frame_index = 5;
  std::ostringstream out;
  write_detections(out, std::span(&d, 1), Vocabulary::canonical());
  const auto j = nlohmann::json::parse(out.str());
  CHECK(j.at("video_id") == "VID02");
  CHECK(j.at("frame") == 5);
  CHECK(j.at("probabilities").size() == 21);
  CHECK(j.at("detected") == nlohmann::json::array({"bipolar", "gallbladder"}));
}
