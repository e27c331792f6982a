#include <benchmark/benchmark.h>

#include <numeric>

#include "wsp/augment.hpp"
#include "wsp/dataset.hpp"
#include "wsp/encoder.hpp"
#include "wsp/trainer.hpp"

namespace {

const wsp::PreparedDataset& cohort() {
  static const wsp::PreparedDataset ds = wsp::prepare_dataset(wsp::generate_synthetic_dataset(wsp::GeneratorConfig{}, 1));
  return ds;
}

wsp::ViewBatch view_batch(std::size_t patients) {
  const auto& ds = cohort();
  std::vector<std::size_t> batch;
  for (std::size_t p = 0; p < patients; ++p) batch.push_back(ds.patients[p % ds.patients.size()].slices.front());
  return wsp::make_view_batch(ds, batch, wsp::AugmentConfig{}, 7);
}

// Frozen-encoder inference, as used for probing.
void BM_EncodeSlices(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const wsp::Encoder encoder{wsp::EncoderConfig{}};
  const wsp::Tensor images = view_batch(n / 2).images;
  for (auto _ : state) benchmark::DoNotOptimize(encoder.encode(images).data());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(images.extent(0)));
}
BENCHMARK(BM_EncodeSlices)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

// One optimisation step: augmentation excluded, forward, backward and update.
void BM_TrainStep(benchmark::State& state) {
  const auto patients = static_cast<std::size_t>(state.range(0));
  wsp::Encoder encoder{wsp::EncoderConfig{}};
  const wsp::ViewBatch batch = view_batch(patients);
  wsp::OptimConfig cfg;
  wsp::OptimizerState opt_state;
  std::vector<wsp::Tensor> grads;
  for (auto _ : state) {
    const double loss = wsp::loss_and_gradients(encoder, batch, cfg.loss, &grads);
    wsp::optimizer_step(encoder.parameters(), grads, opt_state, cfg, cfg.lr);
    benchmark::DoNotOptimize(loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * patients));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_MakeViewBatch(benchmark::State& state) {
  const auto patients = static_cast<std::size_t>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    const auto& ds = cohort();
    std::vector<std::size_t> batch(patients);
    std::iota(batch.begin(), batch.end(), 0);
    benchmark::DoNotOptimize(wsp::make_view_batch(ds, batch, wsp::AugmentConfig{}, seed++).images.data());
  }
}
BENCHMARK(BM_MakeViewBatch)->Arg(32)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
