#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cascade_ltr/diffsort.hpp"
#include "cascade_ltr/losses.hpp"
#include "cascade_ltr/metrics.hpp"

namespace {

using namespace cascade_ltr;

std::vector<double> random_scores(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(n);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> rank_labels(std::size_t n) {
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<double>(n - i);
  return labels;
}

void BM_NeuralSortForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto y = random_scores(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(neural_sort_matrix(y, 1.0));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_NeuralSortForward)->RangeMultiplier(2)->Range(8, 256)->Complexity(benchmark::oNSquared);

void BM_LossForwardBackward(benchmark::State& state, LossKind kind) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto scores = random_scores(n, 2);
  const auto labels = rank_labels(n);
  LossSpec spec;
  spec.kind = kind;
  spec.m = n * 3 / 4;
  spec.k = n * 3 / 8;
  spec.gain = GainMode::kLinear;
  for (auto _ : state) {
    Graph g;
    const Var s = g.parameter(Matrix::column(scores));
    std::optional<Var> alpha;
    if (kind == LossKind::kArf) alpha = g.parameter(Matrix::scalar(1.0));
    g.backward(build_loss(s, labels, spec, alpha));
    benchmark::DoNotOptimize(s.grad().data().data());
  }
}
BENCHMARK_CAPTURE(BM_LossForwardBackward, softmax, LossKind::kSoftmax)->Arg(40)->Arg(200);
BENCHMARK_CAPTURE(BM_LossForwardBackward, ranknet, LossKind::kRankNet)->Arg(40)->Arg(200);
BENCHMARK_CAPTURE(BM_LossForwardBackward, lambda_recall, LossKind::kLambdaRecall)->Arg(40)->Arg(200);
BENCHMARK_CAPTURE(BM_LossForwardBackward, l_relax, LossKind::kLRelax)->Arg(40)->Arg(200);
BENCHMARK_CAPTURE(BM_LossForwardBackward, arf, LossKind::kArf)->Arg(40)->Arg(200);

void BM_RecallAtMK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto scores = random_scores(n, 3);
  const auto labels = rank_labels(n);
  for (auto _ : state) benchmark::DoNotOptimize(recall_m_k(scores, labels, n * 3 / 4, n * 3 / 8));
}
BENCHMARK(BM_RecallAtMK)->Arg(40)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
