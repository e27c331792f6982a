#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "test_support.hpp"
#include "wsp/error.hpp"
#include "wsp/trainer.hpp"

namespace {

using wsp::NamedParameter;
using wsp::OptimConfig;
using wsp::Tensor;

wsp::PreparedDataset smoke_cohort(std::uint64_t seed) {
  return wsp::prepare_dataset(wsp::generate_synthetic_dataset(wsp::testing::small_generator(16, 8, 32), seed));
}

OptimConfig smoke_optim(std::uint64_t seed) {
  OptimConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.seed = seed;
  return cfg;
}

TEST(CosineLrTest, EndpointsAndMidpoint) {
  EXPECT_EQ(wsp::cosine_lr(0, 100, 0.3), 0.3);
  EXPECT_EQ(wsp::cosine_lr(100, 100, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(wsp::cosine_lr(50, 100, 0.3), 0.15);
  EXPECT_THROW(wsp::cosine_lr(101, 100, 0.3), wsp::ContractError);
  EXPECT_THROW(wsp::cosine_lr(0, 0, 0.3), wsp::ContractError);
}

TEST(CosineLrTest, MonotoneDecay) {
  for (std::size_t t = 0; t < 60; ++t) EXPECT_GE(wsp::cosine_lr(t, 60, 1e-4), wsp::cosine_lr(t + 1, 60, 1e-4));
}

TEST(OptimizerStepTest, ZeroGradientNoDecayLeavesParameters) {
  std::vector<NamedParameter> params = {{"w", Tensor::vector({1.0, -2.0, 3.0})}};
  const std::vector<NamedParameter> before = params;
  wsp::OptimizerState state;
  OptimConfig cfg;
  cfg.weight_decay = 0.0;
  for (auto kind : {wsp::OptimizerKind::adaptive_moments, wsp::OptimizerKind::sgd_momentum}) {
    cfg.optimizer = kind;
    wsp::OptimizerState fresh;
    for (int i = 0; i < 5; ++i) wsp::optimizer_step(params, {Tensor::zeros({3})}, fresh, cfg, 0.1);
    EXPECT_EQ(params[0].value, before[0].value);
  }
}

TEST(OptimizerStepTest, ZeroGradientIsGeometricShrinkage) {
  std::vector<NamedParameter> params = {{"w", Tensor::vector({1.0, -2.0, 0.5})}};
  wsp::OptimizerState state;
  OptimConfig cfg;
  cfg.weight_decay = 0.01;
  const double lr = 0.1;
  const int steps = 25;
  for (int i = 0; i < steps; ++i) wsp::optimizer_step(params, {Tensor::zeros({3})}, state, cfg, lr);
  const double factor = std::pow(1.0 - lr * cfg.weight_decay, steps);
  EXPECT_NEAR(params[0].value[0], 1.0 * factor, 1e-15);
  EXPECT_NEAR(params[0].value[1], -2.0 * factor, 1e-15);
  EXPECT_NEAR(params[0].value[2], 0.5 * factor, 1e-15);
}

double bowl(const Tensor& x) { return x[0] * x[0] + x[1] * x[1]; }

TEST(OptimizerStepTest, QuadraticBowlConverges) {
  for (auto kind : {wsp::OptimizerKind::adaptive_moments, wsp::OptimizerKind::sgd_momentum}) {
    std::vector<NamedParameter> params = {{"x", Tensor::vector({1.0, 1.0})}};
    wsp::OptimizerState state;
    OptimConfig cfg;
    cfg.optimizer = kind;
    cfg.weight_decay = 0.0;
    const double lr = kind == wsp::OptimizerKind::adaptive_moments ? 0.02 : 0.01;
    const double f0 = bowl(params[0].value);
    for (int i = 0; i < 200; ++i) {
      const Tensor& x = params[0].value;
      wsp::optimizer_step(params, {Tensor::vector({2.0 * x[0], 2.0 * x[1]})}, state, cfg, lr);
    }
    EXPECT_LE(bowl(params[0].value), f0 / 100.0) << wsp::to_string(kind);
  }
}

TEST(OptimizerStepTest, NonFiniteGradientNamesParameter) {
  std::vector<NamedParameter> params = {{"conv0.weight", Tensor::vector({1.0, 2.0})}};
  wsp::OptimizerState state;
  try {
    wsp::optimizer_step(params, {Tensor::vector({0.0, std::numeric_limits<double>::quiet_NaN()})}, state,
                        OptimConfig{}, 0.1);
    FAIL() << "NaN gradient accepted";
  } catch (const wsp::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("conv0.weight"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos);
  }
}

TEST(OptimizerStepTest, ShapeMismatchThrows) {
  std::vector<NamedParameter> params = {{"w", Tensor::vector({1.0, 2.0})}};
  wsp::OptimizerState state;
  EXPECT_THROW(wsp::optimizer_step(params, {Tensor::zeros({3})}, state, OptimConfig{}, 0.1), wsp::DimensionError);
  EXPECT_THROW(wsp::optimizer_step(params, {}, state, OptimConfig{}, 0.1), wsp::ContractError);
}

TEST(OptimConfigTest, DefaultsAndJson) {
  OptimConfig cfg;
  EXPECT_EQ(cfg.lr, 1e-4);
  EXPECT_EQ(cfg.weight_decay, 1e-4);
  EXPECT_EQ(cfg.epochs, 30u);
  EXPECT_EQ(cfg.batch_size, 32u);
  EXPECT_EQ(cfg.loss.sigma, 0.1);
  EXPECT_EQ(cfg.loss.tau, 0.1);
  EXPECT_EQ(wsp::to_json(wsp::optim_config_from_json(wsp::to_json(cfg))), wsp::to_json(cfg));
  nlohmann::json bad = wsp::to_json(cfg);
  bad["warmup"] = 5;
  EXPECT_THROW(wsp::optim_config_from_json(bad), wsp::ConfigError);
  cfg.lr = 0.0;
  EXPECT_THROW(cfg.validate(), wsp::ConfigError);
}

TEST(PretrainTest, SecondEpochLossLowerForMostSeeds) {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    wsp::PreparedDataset ds = smoke_cohort(100 + seed);
    wsp::EncoderConfig enc;
    enc.seed = seed;
    auto result = wsp::pretrain(ds, enc, smoke_optim(seed));
    ASSERT_EQ(result.curve.size(), 2u);
    improved += result.curve[1].mean_loss < result.curve[0].mean_loss;
  }
  EXPECT_GE(improved, 3);
}

TEST(PretrainTest, ReplayIsBitIdentical) {
  wsp::PreparedDataset ds = smoke_cohort(7);
  wsp::EncoderConfig enc;
  enc.seed = 3;
  auto a = wsp::pretrain(ds, enc, smoke_optim(3));
  auto b = wsp::pretrain(ds, enc, smoke_optim(3));
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t e = 0; e < a.curve.size(); ++e) {
    EXPECT_EQ(a.curve[e].mean_loss, b.curve[e].mean_loss);
    EXPECT_EQ(a.curve[e].lr, b.curve[e].lr);
  }
  EXPECT_EQ(wsp::encode_checkpoint(a.checkpoint), wsp::encode_checkpoint(b.checkpoint));
  EXPECT_EQ(a.checkpoint.loss_kind, "wsp");
  EXPECT_EQ(a.checkpoint.step, 4u);
}

TEST(PretrainTest, SupConMatchesWspWhenDepthsAreEqual) {
  wsp::PreparedDataset ds = smoke_cohort(8);
  for (auto& s : ds.slices) s.d = 0.5;
  wsp::EncoderConfig enc;
  enc.seed = 4;
  OptimConfig wsp_cfg = smoke_optim(4);
  OptimConfig supcon_cfg = wsp_cfg;
  supcon_cfg.loss.kind = wsp::LossKind::supcon;
  auto a = wsp::pretrain(ds, enc, wsp_cfg);
  auto b = wsp::pretrain(ds, enc, supcon_cfg);
  for (std::size_t e = 0; e < a.curve.size(); ++e) EXPECT_NEAR(a.curve[e].mean_loss, b.curve[e].mean_loss, 1e-9);
  for (std::size_t p = 0; p < a.checkpoint.parameters.size(); ++p) {
    EXPECT_LT(wsp::max_relative_error(a.checkpoint.parameters[p].value, b.checkpoint.parameters[p].value, 1e-9), 1e-9);
  }
}

TEST(PretrainTest, SmallCohortFallsBackAutomatically) {
  wsp::PreparedDataset ds =
      wsp::prepare_dataset(wsp::generate_synthetic_dataset(wsp::testing::small_generator(4, 6, 32), 5));
  wsp::EncoderConfig enc;
  OptimConfig cfg = smoke_optim(1);
  cfg.epochs = 1;
  cfg.fallback_steps = 2;
  auto result = wsp::pretrain(ds, enc, cfg);
  EXPECT_EQ(result.checkpoint.metadata.at("sampling_mode"), "fallback_balanced");
  EXPECT_EQ(result.checkpoint.step, 2u);
  cfg.auto_fallback = false;
  EXPECT_THROW(wsp::pretrain(ds, enc, cfg), wsp::FallbackRequired);
}

TEST(PretrainTest, DivergenceReportsBatchDump) {
  wsp::testing::TempDir dir("diverge");
  wsp::PreparedDataset ds = smoke_cohort(9);
  wsp::EncoderConfig enc;
  OptimConfig cfg = smoke_optim(2);
  cfg.epochs = 3;
  cfg.lr = 1e300;
  wsp::PretrainOptions options;
  options.dump_dir = dir.path();
  try {
    wsp::pretrain(ds, enc, cfg, options);
    FAIL() << "divergent run finished";
  } catch (const wsp::NumericalError& e) {
    const std::string msg = e.what();
    const auto at = msg.find("batch dump written to ");
    ASSERT_NE(at, std::string::npos) << msg;
    EXPECT_TRUE(std::filesystem::exists(msg.substr(at + 22)));
  }
}

TEST(PretrainTest, InputShapeMustFitDataset) {
  wsp::PreparedDataset ds =
      wsp::prepare_dataset(wsp::generate_synthetic_dataset(wsp::testing::small_generator(8, 4, 16), 5));
  EXPECT_THROW(wsp::pretrain(ds, wsp::EncoderConfig{}, smoke_optim(0)), wsp::DimensionError);
}

TEST(LossCurveCsvTest, Schema) {
  wsp::testing::TempDir dir("curve");
  wsp::write_loss_curve_csv(dir / "loss.csv", {{1, 2.5, 1e-4}, {2, 2.25, 5e-5}});
  const std::string text = wsp::testing::read_file(dir / "loss.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "epoch,mean_loss,lr");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

}  // namespace
