#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "wsp/augment.hpp"
#include "wsp/dataset.hpp"
#include "wsp/encoder.hpp"
#include "wsp/losses.hpp"
#include "wsp/sampling.hpp"

namespace wsp {

enum class OptimizerKind { adaptive_moments, sgd_momentum };
enum class CosineGranularity { iteration, epoch };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);
std::string to_string(CosineGranularity g);
CosineGranularity cosine_granularity_from_string(const std::string& name);

struct OptimConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adaptive_moments;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.9;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  CosineGranularity cosine_granularity = CosineGranularity::iteration;
  SamplingMode sampling = SamplingMode::one_slice_per_patient;
  /// Steps per epoch in fallback mode; 0 means ceil(#patients / N).
  std::size_t fallback_steps = 0;
  /// Switch to fallback sampling when the cohort is smaller than a batch.
  bool auto_fallback = true;
  LossConfig loss;
  AugmentConfig augment;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const OptimConfig& cfg);
OptimConfig optim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossConfig& cfg);
LossConfig loss_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AugmentConfig& cfg);
AugmentConfig augment_config_from_json(const nlohmann::json& j);

/// alpha * 0.5 * (1 + cos(pi t / T)), for 0 <= t <= T.
double cosine_lr(std::size_t t, std::size_t total_steps, double alpha);

struct OptimizerState {
  std::vector<Tensor> first;
  std::vector<Tensor> second;
  std::uint64_t step = 0;
};

/// One update. Decoupled weight decay shrinks every parameter by
/// (1 - lr * weight_decay) before the gradient step. Throws NumericalError
/// naming the parameter when a gradient is not finite.
void optimizer_step(std::vector<NamedParameter>& params, const std::vector<Tensor>& grads, OptimizerState& state,
                    const OptimConfig& cfg, double lr);

struct EpochLog {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
};

struct PretrainOptions {
  /// Where a batch dump goes when the loss turns non-finite; empty disables it.
  std::filesystem::path dump_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

struct PretrainResult {
  EncoderCheckpoint checkpoint;
  std::vector<EpochLog> curve;
};

/// Contrastive pretraining of encode -> project under cfg.loss.
PretrainResult pretrain(const PreparedDataset& dataset, const EncoderConfig& enc_cfg, const OptimConfig& cfg,
                        const PretrainOptions& options = {});

/// Loss of one view batch and the parameter gradients, in parameter order.
double loss_and_gradients(const Encoder& encoder, const ViewBatch& batch, const LossConfig& loss,
                          std::vector<Tensor>* grads);

void write_loss_curve_csv(const std::filesystem::path& path, const std::vector<EpochLog>& curve);

}  // namespace wsp
