// Serial reference against the OpenMP kernels on calibration-sized inputs.

#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "surgrep/kernels.hpp"

using namespace surgrep;
namespace k = surgrep::kernels;

namespace {

struct Inputs {
  LogitMatrix z;
  std::vector<int> labels;
  std::vector<std::uint8_t> bits;
  std::vector<double> confidences;
  std::vector<double> weights;
};

const Inputs& inputs(std::size_t rows) {
  static std::map<std::size_t, Inputs> cache;
  auto [it, fresh] = cache.try_emplace(rows);
  if (fresh) {
    std::mt19937_64 rng(rows);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto& in = it->second;
    in.z = LogitMatrix(rows, 21);
    for (auto& v : in.z.values) v = normal(rng);
    for (std::size_t r = 0; r < rows; ++r) in.labels.push_back(static_cast<int>(rng() % 21));
    for (std::size_t i = 0; i < rows * 21; ++i) {
      in.bits.push_back(rng() & 1u);
      in.confidences.push_back(unit(rng));
    }
    in.weights.assign(21, 1.0 / 21);
  }
  return it->second;
}

template <bool Parallel>
void nll_sigmoid(benchmark::State& state) {
  const auto& in = inputs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    const double v = Parallel ? k::parallel::nll_sigmoid_sum(in.z, in.bits, 1.7)
                              : k::serial::nll_sigmoid_sum(in.z, in.bits, 1.7);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void nll_softmax(benchmark::State& state) {
  const auto& in = inputs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    const double v = Parallel ? k::parallel::nll_softmax_sum(in.z, in.labels, 1.7)
                              : k::serial::nll_softmax_sum(in.z, in.labels, 1.7);
    benchmark::DoNotOptimize(v);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void bin_totals(benchmark::State& state) {
  const auto& in = inputs(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    auto t = Parallel ? k::parallel::bin_totals(in.confidences, in.bits, 10)
                      : k::serial::bin_totals(in.confidences, in.bits, 10);
    benchmark::DoNotOptimize(t);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 21);
}

template <bool Parallel>
void weighted_bce_rows(benchmark::State& state) {
  const auto& in = inputs(static_cast<std::size_t>(state.range(0)));
  std::vector<double> out(in.z.rows);
  for (auto _ : state) {
    if (Parallel) {
      k::parallel::weighted_bce_rows(in.z, in.bits, in.weights, out);
    } else {
      k::serial::weighted_bce_rows(in.z, in.bits, in.weights, out);
    }
    benchmark::ClobberMemory();
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void patchify(benchmark::State& state) {
  const std::size_t side = 224, channels = 3, p = 16;
  std::vector<double> image(side * side * channels, 0.5), out(image.size());
  for (auto _ : state) {
    if (Parallel) {
      k::parallel::patchify(image, side, side, channels, p, out);
    } else {
      k::serial::patchify(image, side, side, channels, p, out);
    }
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK(nll_sigmoid<false>)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(nll_sigmoid<true>)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(nll_softmax<false>)->Arg(10000)->Arg(100000);
BENCHMARK(nll_softmax<true>)->Arg(10000)->Arg(100000);
BENCHMARK(bin_totals<false>)->Arg(10000);
BENCHMARK(bin_totals<true>)->Arg(10000);
BENCHMARK(weighted_bce_rows<false>)->Arg(10000);
BENCHMARK(weighted_bce_rows<true>)->Arg(10000);
BENCHMARK(patchify<false>);
BENCHMARK(patchify<true>);

BENCHMARK_MAIN();
