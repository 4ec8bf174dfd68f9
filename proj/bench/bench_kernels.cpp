// Serial reference vs OpenMP kernels. Each parallel benchmark first checks
// that its output matches the serial one bit for bit.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cstring>
#include <vector>

#include "cfftgan/numcore/kernels.hpp"
#include "cfftgan/numcore/rng.hpp"

namespace k = cfftgan::num::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  cfftgan::num::Rng rng(seed);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

bool same(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const k::GemmShape s{n, n, n, false, false};
  const auto a = random_values(static_cast<std::size_t>(n) * n, 1);
  const auto b = random_values(static_cast<std::size_t>(n) * n, 2);
  std::vector<float> c(static_cast<std::size_t>(n) * n);
  if (Parallel) {
    std::vector<float> ref(c.size());
    k::serial::gemm(s, a.data(), b.data(), ref.data(), false);
    k::parallel::gemm(s, a.data(), b.data(), c.data(), false);
    if (!same(ref, c)) state.SkipWithError("parallel gemm differs from serial");
  }
  for (auto _ : state) {
    if (Parallel) k::parallel::gemm(s, a.data(), b.data(), c.data(), false);
    else k::serial::gemm(s, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
  state.counters["threads"] = omp_get_max_threads();
}

template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0)), hw = static_cast<int>(state.range(1));
  const k::ConvGeometry g{c, hw, hw, 3, 1, 1};
  const auto img = random_values(static_cast<std::size_t>(c) * hw * hw, 3);
  std::vector<float> cols(static_cast<std::size_t>(g.col_rows()) * g.out_height() * g.out_width());
  if (Parallel) {
    std::vector<float> ref(cols.size());
    k::serial::im2col(g, img.data(), ref.data());
    k::parallel::im2col(g, img.data(), cols.data());
    if (!same(ref, cols)) state.SkipWithError("parallel im2col differs from serial");
  }
  for (auto _ : state) {
    if (Parallel) k::parallel::im2col(g, img.data(), cols.data());
    else k::serial::im2col(g, img.data(), cols.data());
    benchmark::DoNotOptimize(cols.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(cols.size() * sizeof(float)));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  // (batch * heads * L) rows of length L, reduced over the last axis.
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const auto x = random_values(rows * n, 4);
  std::vector<float> y(x.size());
  if (Parallel) {
    std::vector<float> ref(y.size());
    k::serial::softmax(x.data(), ref.data(), rows, n, 1);
    k::parallel::softmax(x.data(), y.data(), rows, n, 1);
    if (!same(ref, y)) state.SkipWithError("parallel softmax differs from serial");
  }
  for (auto _ : state) {
    if (Parallel) k::parallel::softmax(x.data(), y.data(), rows, n, 1);
    else k::serial::softmax(x.data(), y.data(), rows, n, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.size()));
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
// Desk encoder stage and CFFT-size feature maps.
BENCHMARK(BM_Im2col<false>)->Name("im2col/serial")->Args({16, 32})->Args({32, 16})->Args({64, 64});
BENCHMARK(BM_Im2col<true>)->Name("im2col/parallel")->Args({16, 32})->Args({32, 16})->Args({64, 64});
// Desk attention (4 * 4 heads * 64 tokens) and a longer sequence.
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Args({1024, 64})->Args({4096, 256});
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Args({1024, 64})->Args({4096, 256});

BENCHMARK_MAIN();
