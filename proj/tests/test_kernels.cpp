#include <doctest.h>

#include <random>

#include "fixture.hpp"
#include "surgrep/kernels.hpp"

using namespace surgrep;
namespace k = surgrep::kernels;

namespace {

struct Batch {
  LogitMatrix z;
  std::vector<int> labels;
  std::vector<std::uint8_t> bits;
};

Batch batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Batch b{LogitMatrix(rows, cols), {}, {}};
  for (auto& v : b.z.values) v = 3 * fixture::normal(rng);
  for (std::size_t r = 0; r < rows; ++r) b.labels.push_back(static_cast<int>(fixture::below(rng, cols)));
  for (std::size_t i = 0; i < rows * cols; ++i) b.bits.push_back(fixture::below(rng, 2));
  return b;
}

// Sizes straddle the block boundary so partial blocks are exercised.
const std::size_t kRows[] = {0, 1, 255, 256, 257, 1000, 5000};

}  // namespace

TEST_CASE("bin_of edges") {
  CHECK(k::bin_of(0.0, 10) == 0);
  CHECK(k::bin_of(0.1, 10) == 1);
  CHECK(k::bin_of(0.95, 10) == 9);
  CHECK(k::bin_of(1.0, 10) == 9);
  CHECK(k::bin_of(0.5, 1) == 0);
}

// The serial reference sums left to right, the parallel kernels pairwise over
// blocks, so the two agree to rounding while thread counts agree exactly.
TEST_CASE("NLL sums match serial and are identical across thread counts") {
  const int saved = k::max_threads();
  for (std::size_t rows : kRows) {
    if (rows == 0) continue;
    const auto b = batch(rows, 21, rows);
    for (double t : {0.5, 1.0, 3.0}) {
      k::set_threads(1);
      const double p1 = k::parallel::nll_softmax_sum(b.z, b.labels, t);
      const double p2 = k::parallel::nll_sigmoid_sum(b.z, b.bits, t);
      CHECK(p1 == doctest::Approx(k::serial::nll_softmax_sum(b.z, b.labels, t)).epsilon(1e-12));
      CHECK(p2 == doctest::Approx(k::serial::nll_sigmoid_sum(b.z, b.bits, t)).epsilon(1e-12));
      for (int threads : {2, 4}) {
        k::set_threads(threads);
        CHECK(k::parallel::nll_softmax_sum(b.z, b.labels, t) == p1);
        CHECK(k::parallel::nll_sigmoid_sum(b.z, b.bits, t) == p2);
      }
    }
  }
  k::set_threads(saved);
}

TEST_CASE("bin totals agree") {
  std::mt19937_64 rng(3);
  for (std::size_t n : kRows) {
    std::vector<double> conf(n);
    std::vector<std::uint8_t> ok(n);
    for (std::size_t i = 0; i < n; ++i) {
      conf[i] = fixture::below(rng, 20) == 0 ? 1.0 : fixture::uniform01(rng);
      ok[i] = fixture::below(rng, 2);
    }
    const auto s = k::serial::bin_totals(conf, ok, 10);
    k::set_threads(1);
    const auto one = k::parallel::bin_totals(conf, ok, 10);
    CHECK(one.count == s.count);
    CHECK(one.acc_sum == s.acc_sum);  // integer-valued, exact either way
    for (std::size_t m = 0; m < 10; ++m) {
      CHECK(one.conf_sum[m] == doctest::Approx(s.conf_sum[m]).epsilon(1e-12));
    }
    k::set_threads(3);
    const auto three = k::parallel::bin_totals(conf, ok, 10);
    CHECK(three.count == one.count);
    CHECK(three.conf_sum == one.conf_sum);
  }
}

TEST_CASE("patchify agrees") {
  std::mt19937_64 rng(4);
  for (auto [h, w, c, p] : {std::array<std::size_t, 4>{4, 4, 1, 2}, {32, 48, 3, 16}, {224, 224, 3, 16}}) {
    std::vector<double> img(h * w * c);
    for (auto& v : img) v = fixture::uniform01(rng);
    std::vector<double> a(img.size()), b(img.size());
    k::serial::patchify(img, h, w, c, p, a);
    k::parallel::patchify(img, h, w, c, p, b);
    CHECK(a == b);
  }
}

TEST_CASE("row BCE and probabilities agree") {
  for (std::size_t rows : kRows) {
    const auto b = batch(rows, 21, 100 + rows);
    std::vector<double> w(21, 1.0 / 21);
    std::vector<double> a(rows), c(rows);
    k::serial::weighted_bce_rows(b.z, b.bits, w, a);
    k::parallel::weighted_bce_rows(b.z, b.bits, w, c);
    CHECK(a == c);
    for (auto mode : {Squash::sigmoid, Squash::softmax}) {
      std::vector<double> pa(rows * 21), pb(rows * 21);
      k::serial::probabilities(b.z, mode, 1.7, pa);
      k::parallel::probabilities(b.z, mode, 1.7, pb);
      CHECK(pa == pb);
    }
  }
}
