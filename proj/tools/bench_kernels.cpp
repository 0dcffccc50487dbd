// Serial reference vs OpenMP kernels over a random row matrix.
//   ./bench_kernels --benchmark_filter=Scores
#include <random>

#include <benchmark/benchmark.h>

#include "unir/kernels.hpp"

using namespace unir;

namespace {

struct Data {
  std::vector<float> rows, rows2;
  std::vector<double> query, centroids;
  std::vector<std::uint32_t> subset;
  std::size_t dim;
};

Data make(std::size_t n, std::size_t dim, std::size_t n_lists = 64) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> g;
  Data d;
  d.dim = dim;
  d.rows.resize(n * dim);
  d.rows2.resize(n * dim);
  for (auto& v : d.rows) v = g(rng);
  for (auto& v : d.rows2) v = g(rng);
  d.query.resize(dim);
  for (auto& v : d.query) v = g(rng);
  d.centroids.resize(n_lists * dim);
  for (auto& v : d.centroids) v = g(rng);
  for (std::uint32_t i = 0; i < n; i += 3) d.subset.push_back(i);
  return d;
}

template <kernels::Exec E>
void Scores(benchmark::State& state) {
  const auto d = make(state.range(0), 128);
  std::vector<double> out(state.range(0));
  for (auto _ : state) {
    kernels::inner_products(E, d.rows, d.dim, d.query, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <kernels::Exec E>
void FusedScores(benchmark::State& state) {
  const auto d = make(state.range(0), 128);
  std::vector<double> out(state.range(0));
  for (auto _ : state) {
    kernels::fused_scores(E, d.rows, d.rows2, d.dim, d.query, 1.0, 1.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <kernels::Exec E>
void GatherScores(benchmark::State& state) {
  const auto d = make(state.range(0), 128);
  std::vector<double> out(d.subset.size());
  for (auto _ : state) {
    if constexpr (E == kernels::Exec::Serial)
      kernels::inner_products_gather_serial(d.rows, d.dim, d.query, d.subset, out);
    else
      kernels::inner_products_gather_parallel(d.rows, d.dim, d.query, d.subset, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * d.subset.size());
}

template <kernels::Exec E>
void AssignNearest(benchmark::State& state) {
  const auto d = make(state.range(0), 128);
  std::vector<std::uint32_t> out(state.range(0));
  std::vector<double> dist(state.range(0));
  for (auto _ : state) {
    kernels::assign_nearest(E, d.rows, d.dim, d.centroids, out, dist);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(Scores<kernels::Exec::Serial>)->RangeMultiplier(8)->Range(1 << 10, 1 << 19);
BENCHMARK(Scores<kernels::Exec::Parallel>)->RangeMultiplier(8)->Range(1 << 10, 1 << 19)->UseRealTime();
BENCHMARK(FusedScores<kernels::Exec::Serial>)->RangeMultiplier(8)->Range(1 << 10, 1 << 19);
BENCHMARK(FusedScores<kernels::Exec::Parallel>)->RangeMultiplier(8)->Range(1 << 10, 1 << 19)->UseRealTime();
BENCHMARK(GatherScores<kernels::Exec::Serial>)->Range(1 << 12, 1 << 18);
BENCHMARK(GatherScores<kernels::Exec::Parallel>)->Range(1 << 12, 1 << 18)->UseRealTime();
BENCHMARK(AssignNearest<kernels::Exec::Serial>)->Range(1 << 12, 1 << 16);
BENCHMARK(AssignNearest<kernels::Exec::Parallel>)->Range(1 << 12, 1 << 16)->UseRealTime();

BENCHMARK_MAIN();
