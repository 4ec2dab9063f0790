// Microbenchmarks for the hot paths: pairwise distances, a mined loss step,
// coreset selection, and retrieval metrics.

#include <benchmark/benchmark.h>

#include "dml/batching.hpp"
#include "dml/distance.hpp"
#include "dml/evaluation.hpp"
#include "dml/losses.hpp"
#include "dml/mining.hpp"
#include "dml/objective.hpp"
#include "dml/rng.hpp"

namespace {

dml::Matrix random_unit_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  dml::Rng rng(seed);
  dml::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) m(i, c) = rng.next_gaussian();
  return dml::normalize_rows(m).values();
}

dml::LabelVector cyclic_labels(std::size_t n, int classes) {
  dml::LabelVector labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i) % classes;
  return labels;
}

void BM_PairwiseDistances(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dml::EmbeddingMatrix e(random_unit_rows(n, 128, 1), true);
  for (auto _ : state) benchmark::DoNotOptimize(dml::pairwise_distances(e));
  state.SetComplexityN(static_cast<std::int64_t>(n));
}
BENCHMARK(BM_PairwiseDistances)->Arg(64)->Arg(128)->Arg(256)->Complexity();

void BM_MarginLossWithMining(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dml::EmbeddingMatrix e(random_unit_rows(n, 128, 2), true);
  const dml::LabelVector labels = cyclic_labels(n, 8);
  const dml::ObjectiveSpec spec = dml::ObjectiveSpec::defaults(dml::LossKind::margin);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const dml::TupleSet t = dml::distance_weighted_miner(e, labels, seed++);
    benchmark::DoNotOptimize(dml::triplet_loss(e, labels, t, spec));
    benchmark::DoNotOptimize(dml::margin_loss(e, labels, dml::exhaustive_pairs(labels), spec, 1.2));
  }
}
BENCHMARK(BM_MarginLossWithMining)->Arg(32)->Arg(64)->Arg(128);

void BM_GreedyCoreset(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dml::Matrix pts = random_unit_rows(n, 64, 3);
  for (auto _ : state)
    benchmark::DoNotOptimize(dml::greedy_coreset_select(pts, n / 8, 7));
}
BENCHMARK(BM_GreedyCoreset)->Arg(256)->Arg(512)->Arg(1024);

void BM_RecallAtK(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const dml::EmbeddingMatrix e(random_unit_rows(n, 64, 4), true);
  const dml::LabelVector labels = cyclic_labels(n, 16);
  for (auto _ : state) benchmark::DoNotOptimize(dml::recall_at_k(e, labels, 4));
}
BENCHMARK(BM_RecallAtK)->Arg(128)->Arg(512)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
