// Serial reference kernels against the blocked OpenMP kernels.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dei2n/kernels.hpp"

using namespace dei2n::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Shapes of the model's hot products: MHSA projections over a batch of
// sequences, the attention scorer and the head.
template <auto Gemm>
void gemm_case(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Gemm(Trans::no, Trans::no, m, n, k, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["FLOPS"] = benchmark::Counter(2.0 * static_cast<double>(m * n * k),
                                               benchmark::Counter::kIsIterationInvariantRate,
                                               benchmark::Counter::kIs1000);
}

template <auto Gemm>
void batched_case(benchmark::State& state) {
  const std::size_t batch = 256, t = 20, d = 36;
  const auto q = random_values(batch * t * d, 3), k = random_values(batch * t * d, 4);
  std::vector<double> scores(batch * t * t);
  for (auto _ : state) {
    Gemm(batch, Trans::no, Trans::yes, t, t, d, q, k, scores);
    benchmark::DoNotOptimize(scores.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({5120, 36, 108})->Args({5120, 80, 252})->Args({256, 200, 252})->Args({512, 512, 512});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(gemm_case<reference::gemm>)->Name("gemm/reference")->Apply(shapes);
BENCHMARK(gemm_case<gemm>)->Name("gemm/openmp")->Apply(shapes);
BENCHMARK(batched_case<reference::batched_gemm>)->Name("batched_gemm/reference")->Unit(benchmark::kMillisecond);
BENCHMARK(batched_case<batched_gemm>)->Name("batched_gemm/openmp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
