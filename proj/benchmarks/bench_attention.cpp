#include <benchmark/benchmark.h>

#include "tthf/aafm.hpp"

using namespace tthf;

namespace {

Eigen::MatrixXd randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

void CrossAttend(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const int rows = static_cast<int>(state.range(1));
  Rng rng(1);
  aafm::CrossAttentionHead head = aafm::CrossAttentionHead::init(c, rng);
  auto fmap = ad::constant(randn(rows, c, rng));
  auto query = ad::constant(randn(1, c, rng));
  for (auto _ : state) {
    auto res = aafm::cross_attend(query, fmap, head);
    benchmark::DoNotOptimize(res.output->val.data());
  }
}
BENCHMARK(CrossAttend)->Args({32, 4})->Args({1024, 49});

void SoftTextAndFusion(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  Rng rng(2);
  aafm::FusionLayer layer = aafm::FusionLayer::init(c, rng);
  auto text = ad::constant(randn(11, c, rng));
  auto fused = ad::constant(randn(1, c, rng));
  auto vfr = ad::constant(randn(1, c, rng));
  auto lfr = ad::constant(randn(1, c, rng));
  for (auto _ : state) {
    auto soft = aafm::soft_text_representation(fused, text);
    auto out = aafm::fuse_enhanced(vfr, lfr, fused, layer);
    benchmark::DoNotOptimize(soft.soft_text->val.data());
    benchmark::DoNotOptimize(out->val.data());
  }
}
BENCHMARK(SoftTextAndFusion)->Arg(32)->Arg(1024);

}  // namespace
