#include <benchmark/benchmark.h>

#include "tthf/encoders.hpp"

using namespace tthf;

namespace {

Eigen::MatrixXd random_frame(int side, Rng& rng) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(side) * side, 3);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (int c = 0; c < 3; ++c) m(i, c) = rng.normal();
  }
  return m;
}

void ToyForward(benchmark::State& state) {
  Rng rng(1);
  enc::ConvBackbone bb = enc::ConvBackbone::init(enc::BackboneSpec::toy(), rng, false);
  auto frame = ad::constant(random_frame(224, rng));
  for (auto _ : state) {
    auto map = bb.feature_map(frame);
    benchmark::DoNotOptimize(map->val.data());
  }
}
BENCHMARK(ToyForward);

void ClipLikeForward(benchmark::State& state) {
  Rng rng(2);
  enc::ConvBackbone bb = enc::ConvBackbone::init(enc::BackboneSpec::clip_like(), rng, false);
  auto frame = ad::constant(random_frame(224, rng));
  for (auto _ : state) {
    auto map = bb.feature_map(frame);
    benchmark::DoNotOptimize(map->val.data());
  }
}
BENCHMARK(ClipLikeForward);

void ToyForwardBackward(benchmark::State& state) {
  Rng rng(3);
  enc::ConvBackbone bb = enc::ConvBackbone::init(enc::BackboneSpec::toy(), rng, true);
  auto frame = ad::constant(random_frame(224, rng));
  for (auto _ : state) {
    for (auto& layer : bb.layers) {
      layer.weight->zero_grad();
      layer.bias->zero_grad();
    }
    auto h = enc::encode_high_frequency(bb, frame);
    auto loss = ad::sum(ad::hadamard(h, h));
    ad::backward(loss);
    benchmark::DoNotOptimize(bb.layers[0].weight->grad.data());
  }
}
BENCHMARK(ToyForwardBackward);

}  // namespace
