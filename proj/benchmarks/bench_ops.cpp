#include <benchmark/benchmark.h>

#include <random>

#include "wsp/autodiff.hpp"
#include "wsp/gradcheck.hpp"
#include "wsp/losses.hpp"
#include "wsp/metrics.hpp"
#include "wsp/rng.hpp"

namespace {

wsp::Tensor uniform(wsp::Rng& rng, wsp::Shape shape) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  wsp::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

// Forward and backward of one 3x3 convolution on a 32x32 map.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  wsp::Rng rng = wsp::make_rng(1);
  const wsp::Tensor x = uniform(rng, {16, channels, 32, 32});
  const wsp::Tensor k = uniform(rng, {channels, channels, 3, 3});
  for (auto _ : state) {
    wsp::Tape tape;
    wsp::Var y = wsp::conv2d(tape.parameter(x), tape.parameter(k), 1);
    wsp::Var loss = wsp::sum(y);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value()[0]);
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(1)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

// Contrastive loss and its gradient for M = 2B views in 64 dimensions.
void BM_ContrastiveLoss(benchmark::State& state) {
  const auto slices = static_cast<std::size_t>(state.range(0));
  const auto kind = static_cast<wsp::LossKind>(state.range(1));
  wsp::Rng rng = wsp::make_rng(2);
  const wsp::BatchMeta meta = wsp::random_view_meta(rng, slices, 4);
  const wsp::Tensor x = uniform(rng, {2 * slices, 64});
  wsp::LossConfig cfg;
  cfg.kind = kind;
  for (auto _ : state) {
    wsp::Tape tape;
    wsp::Var z = wsp::l2_normalize(tape.parameter(x));
    wsp::Var loss = wsp::contrastive_loss(z, meta, cfg);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.value()[0]);
  }
  state.SetLabel(wsp::to_string(kind));
}
BENCHMARK(BM_ContrastiveLoss)
    ->ArgsProduct({{8, 32, 64}, {static_cast<long>(wsp::LossKind::wsp), static_cast<long>(wsp::LossKind::supcon)}})
    ->Unit(benchmark::kMicrosecond);

void BM_Auc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  wsp::Rng rng = wsp::make_rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = u(rng);
    labels[i] = static_cast<int>(i % 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(wsp::auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Auc)->Arg(64)->Arg(1440)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
