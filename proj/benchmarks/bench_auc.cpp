#include <benchmark/benchmark.h>

#include "tthf/common.hpp"
#include "tthf/evaluation.hpp"

using namespace tthf;

namespace {

void ComputeAuc(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng rng(7);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) {
    scores[i] = rng.uniform();
    labels[i] = rng.uniform() < 0.3 ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::compute_auc(scores, labels));
  }
  state.SetComplexityN(n);
}
BENCHMARK(ComputeAuc)->RangeMultiplier(10)->Range(1000, 100000)->Complexity();

}  // namespace
