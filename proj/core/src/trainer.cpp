#include "wsp/trainer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include "wsp/error.hpp"
#include "wsp/format.hpp"
#include "wsp/json_util.hpp"
#include "wsp/rng.hpp"

namespace wsp {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adaptive_moments ? "adaptive_moments" : "sgd_momentum";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adaptive_moments" || name == "adamw") return OptimizerKind::adaptive_moments;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string to_string(CosineGranularity g) { return g == CosineGranularity::iteration ? "iteration" : "epoch"; }

CosineGranularity cosine_granularity_from_string(const std::string& name) {
  if (name == "iteration") return CosineGranularity::iteration;
  if (name == "epoch") return CosineGranularity::epoch;
  throw ConfigError("unknown cosine granularity '" + name + "'");
}

void OptimConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("optim.lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("optim.weight_decay must be non-negative");
  if (epochs < 1) throw ConfigError("optim.epochs must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optim betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("optim.eps must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optim.momentum must lie in [0, 1)");
  BatchSpec{batch_size}.validate();
  loss.validate();
  augment.validate();
}

nlohmann::json to_json(const LossConfig& cfg) {
  return {{"kind", to_string(cfg.kind)},
          {"tau", cfg.tau},
          {"sigma", cfg.sigma},
          {"denominator", to_string(cfg.denominator)}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig cfg;
  std::string kind = to_string(cfg.kind);
  std::string denominator = to_string(cfg.denominator);
  StrictObject(j, "loss")
      .read("kind", kind)
      .read("tau", cfg.tau)
      .read("sigma", cfg.sigma)
      .read("denominator", denominator)
      .finish();
  cfg.kind = loss_kind_from_string(kind);
  cfg.denominator = denominator_from_string(denominator);
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const AugmentConfig& cfg) {
  return {{"rotation_deg", cfg.rotation_deg},
          {"crop_scale_min", cfg.crop_scale_min},
          {"crop_scale_max", cfg.crop_scale_max},
          {"flip_prob", cfg.flip_prob},
          {"enabled", cfg.enabled}};
}

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
  AugmentConfig cfg;
  StrictObject(j, "augment")
      .read("rotation_deg", cfg.rotation_deg)
      .read("crop_scale_min", cfg.crop_scale_min)
      .read("crop_scale_max", cfg.crop_scale_max)
      .read("flip_prob", cfg.flip_prob)
      .read("enabled", cfg.enabled)
      .finish();
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const OptimConfig& cfg) {
  return {{"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"optimizer", to_string(cfg.optimizer)},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"momentum", cfg.momentum},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"cosine_granularity", to_string(cfg.cosine_granularity)},
          {"sampling", to_string(cfg.sampling)},
          {"fallback_steps", cfg.fallback_steps},
          {"auto_fallback", cfg.auto_fallback},
          {"augment", to_json(cfg.augment)},
          {"seed", cfg.seed}};
}

OptimConfig optim_config_from_json(const nlohmann::json& j) {
  OptimConfig cfg;
  std::string optimizer = to_string(cfg.optimizer);
  std::string granularity = to_string(cfg.cosine_granularity);
  std::string sampling = to_string(cfg.sampling);
  StrictObject obj(j, "optim");
  obj.read("lr", cfg.lr)
      .read("weight_decay", cfg.weight_decay)
      .read("optimizer", optimizer)
      .read("beta1", cfg.beta1)
      .read("beta2", cfg.beta2)
      .read("eps", cfg.eps)
      .read("momentum", cfg.momentum)
      .read("epochs", cfg.epochs)
      .read("batch_size", cfg.batch_size)
      .read("cosine_granularity", granularity)
      .read("sampling", sampling)
      .read("fallback_steps", cfg.fallback_steps)
      .read("auto_fallback", cfg.auto_fallback)
      .read("seed", cfg.seed);
  if (const nlohmann::json* aug = obj.child("augment")) cfg.augment = augment_config_from_json(*aug);
  obj.finish();
  cfg.optimizer = optimizer_kind_from_string(optimizer);
  cfg.cosine_granularity = cosine_granularity_from_string(granularity);
  cfg.sampling = sampling_mode_from_string(sampling);
  cfg.validate();
  return cfg;
}

double cosine_lr(std::size_t t, std::size_t total_steps, double alpha) {
  if (total_steps == 0 || t > total_steps) {
    throw ContractError("cosine_lr: step " + std::to_string(t) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  return alpha * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / static_cast<double>(total_steps)));
}

void optimizer_step(std::vector<NamedParameter>& params, const std::vector<Tensor>& grads, OptimizerState& state,
                    const OptimConfig& cfg, double lr) {
  if (grads.size() != params.size()) {
    throw ContractError("optimizer_step: " + std::to_string(grads.size()) + " gradients for " +
                        std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].value.shape()) {
      throw DimensionError("optimizer_step: gradient shape mismatch for " + params[k].name);
    }
    for (double g : grads[k].values()) {
      if (!std::isfinite(g)) {
        throw NumericalError("non-finite gradient for parameter " + params[k].name + " at step " +
                             std::to_string(state.step));
      }
    }
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.push_back(Tensor::zeros(p.value.shape()));
      state.second.push_back(Tensor::zeros(p.value.shape()));
    }
  }
  ++state.step;
  const double shrink = 1.0 - lr * cfg.weight_decay;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    double* p = params[k].value.data();
    const double* g = grads[k].data();
    double* m = state.first[k].data();
    double* v = state.second[k].data();
    const std::size_t n = params[k].value.size();
    if (cfg.optimizer == OptimizerKind::adaptive_moments) {
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        const double update = (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg.eps);
        p[i] = p[i] * shrink - lr * update;
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = cfg.momentum * m[i] + g[i];
        p[i] = p[i] * shrink - lr * m[i];
      }
    }
  }
}

double loss_and_gradients(const Encoder& encoder, const ViewBatch& batch, const LossConfig& loss,
                          std::vector<Tensor>* grads) {
  Tape tape;
  BoundEncoder bound = encoder.bind(tape, grads != nullptr);
  Var z = bound.project(bound.encode(tape.constant(batch.images)));
  Var value = contrastive_loss(z, batch.meta, loss);
  if (grads) {
    tape.backward(value);
    grads->clear();
    for (const Var& p : bound.parameters()) grads->push_back(tape.grad(p));
  }
  return value.value()[0];
}

namespace {

std::string dump_batch(const std::filesystem::path& dir, std::size_t epoch, std::size_t index, const Batch& batch,
                       const ViewBatch& views, double loss) {
  if (dir.empty()) return {};
  std::filesystem::create_directories(dir);
  const std::filesystem::path path =
      dir / ("batch_dump_e" + std::to_string(epoch) + "_b" + std::to_string(index) + ".json");
  nlohmann::json meta = nlohmann::json::array();
  for (const auto& v : views.meta.views) {
    meta.push_back({{"y", v.y}, {"d", v.d}, {"slice_id", v.slice_id}, {"patient_id", v.patient_id}});
  }
  nlohmann::json doc = {{"epoch", epoch},
                        {"batch", index},
                        {"loss", std::isfinite(loss) ? nlohmann::json(loss) : nlohmann::json(format_real(loss))},
                        {"slices", batch},
                        {"views", meta}};
  std::ofstream out(path);
  out << doc.dump(2) << '\n';
  return path.string();
}

}  // namespace

PretrainResult pretrain(const PreparedDataset& dataset, const EncoderConfig& enc_cfg, const OptimConfig& cfg,
                        const PretrainOptions& options) {
  cfg.validate();
  enc_cfg.validate();
  if (shape_product(enc_cfg.input_shape) != dataset.height * dataset.width) {
    throw DimensionError("encoder input " + shape_to_string(enc_cfg.input_shape) + " does not fit " +
                         std::to_string(dataset.height) + "x" + std::to_string(dataset.width) + " slices");
  }

  Encoder encoder(enc_cfg);
  BatchSpec spec;
  spec.batch_size = cfg.batch_size;
  spec.mode = cfg.sampling;
  spec.seed = cfg.seed;
  spec.fallback_steps = cfg.fallback_steps;
  if (spec.mode == SamplingMode::one_slice_per_patient && cfg.auto_fallback &&
      dataset.patients.size() < cfg.batch_size) {
    spec.mode = SamplingMode::fallback_balanced;
  }
  const std::size_t steps = steps_per_epoch(dataset, spec);
  const std::size_t total_steps = steps * cfg.epochs;

  OptimizerState state;
  PretrainResult result;
  std::vector<Tensor> grads;
  std::size_t global_step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    spec.epoch = epoch;
    const std::vector<Batch> batches = plan_epoch(dataset, spec);
    double loss_sum = 0.0;
    double epoch_lr = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b, ++global_step) {
      const double lr = cfg.cosine_granularity == CosineGranularity::iteration
                            ? cosine_lr(global_step, total_steps, cfg.lr)
                            : cosine_lr(epoch, cfg.epochs, cfg.lr);
      if (b == 0) epoch_lr = lr;
      const ViewBatch views = make_view_batch(dataset, batches[b], cfg.augment, derive_seed(cfg.seed, {0x617567ULL, epoch, b}));
      double loss = std::numeric_limits<double>::quiet_NaN();
      try {
        loss = loss_and_gradients(encoder, views, cfg.loss, &grads);
      } catch (const NumericalError& e) {
        const std::string dumped = dump_batch(options.dump_dir, epoch, b, batches[b], views, loss);
        throw NumericalError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what() +
                             (dumped.empty() ? std::string() : "; batch dump written to " + dumped));
      }
      if (!std::isfinite(loss)) {
        const std::string dumped = dump_batch(options.dump_dir, epoch, b, batches[b], views, loss);
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                             (dumped.empty() ? std::string() : "; batch dump written to " + dumped));
      }
      try {
        optimizer_step(encoder.parameters(), grads, state, cfg, lr);
      } catch (const NumericalError& e) {
        const std::string dumped = dump_batch(options.dump_dir, epoch, b, batches[b], views, loss);
        throw NumericalError(std::string(e.what()) + (dumped.empty() ? std::string() : "; batch dump written to " + dumped));
      }
      loss_sum += loss;
    }
    EpochLog log{epoch + 1, loss_sum / static_cast<double>(batches.size()), epoch_lr};
    result.curve.push_back(log);
    if (options.on_epoch) options.on_epoch(log);
  }

  nlohmann::json metadata = {{"loss", to_json(cfg.loss)},
                             {"optim", to_json(cfg)},
                             {"sampling_mode", to_string(spec.mode)},
                             {"steps", total_steps},
                             {"final_loss", result.curve.back().mean_loss}};
  result.checkpoint = make_checkpoint(encoder, total_steps, to_string(cfg.loss.kind), std::move(metadata));
  return result;
}

void write_loss_curve_csv(const std::filesystem::path& path, const std::vector<EpochLog>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "epoch,mean_loss,lr\n";
  for (const auto& e : curve) out << e.epoch << ',' << format_real(e.mean_loss) << ',' << format_real(e.lr) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace wsp
