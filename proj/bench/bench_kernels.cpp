#include <benchmark/benchmark.h>

#include "nagpipe/forecasters.hpp"
#include "nagpipe/kernels.hpp"
#include "nagpipe/numerics.hpp"

using namespace nagpipe;

namespace {

template <bool Parallel>
void BM_NagUpdate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const auto w = sample_uniform(rng, n, -1, 1);
  const auto wp = sample_uniform(rng, n, -1, 1);
  const auto g = sample_uniform(rng, n, -1, 1);
  std::vector<double> d(n), out(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::nag_update(w.view(), wp.view(), g.view(), 0.99, 1e-3, d, out);
    } else {
      kernels::serial::nag_update(w.view(), wp.view(), g.view(), 0.99, 1e-3, d, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_AffineForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(2);
  const auto W = sample_uniform(rng, n * n, -1, 1);
  const auto b = sample_uniform(rng, n, -1, 1);
  const auto x = sample_uniform(rng, n, -1, 1);
  std::vector<double> z(n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::affine_forward(W.view(), b.view(), x.view(), z);
    } else {
      kernels::serial::affine_forward(W.view(), b.view(), x.view(), z);
    }
    benchmark::DoNotOptimize(z.data());
  }
}

template <bool Parallel>
void BM_PolyFft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(3);
  GradientHistory h(16);
  for (long s = 1; s <= 16; ++s) h.push(s, sample_uniform(rng, n, -1, 1));
  for (auto _ : state) {
    auto f = Parallel ? poly_fft_forecast(h, 7) : serial::poly_fft_forecast(h, 7);
    benchmark::DoNotOptimize(f.gradient.values().data());
  }
}

}  // namespace

BENCHMARK(BM_NagUpdate<false>)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_NagUpdate<true>)->Arg(1 << 12)->Arg(1 << 20);
BENCHMARK(BM_AffineForward<false>)->Arg(256)->Arg(2048);
BENCHMARK(BM_AffineForward<true>)->Arg(256)->Arg(2048);
BENCHMARK(BM_PolyFft<false>)->Arg(1 << 14);
BENCHMARK(BM_PolyFft<true>)->Arg(1 << 14);

BENCHMARK_MAIN();
