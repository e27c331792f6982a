#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "wsp/autodiff.hpp"
#include "wsp/tensor.hpp"

namespace wsp {

enum class Arch { tiny_cnn, mlp };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

/// Architecture of an encoder plus the projection head used by the losses.
///
/// tiny_cnn: five valid-padding conv stages (conv -> bias -> relu), global
/// average pool, then a dense layer to repr_dim. The stride plan lives here so
/// the downsampling is explicit rather than hidden in a pooling layer.
///
/// mlp: flattened input -> hidden layers (relu) -> dense to repr_dim.
struct EncoderConfig {
  Arch arch = Arch::tiny_cnn;
  Shape input_shape = {1, 32, 32};
  std::vector<std::size_t> conv_channels = {16, 32, 64, 128, 256};
  std::vector<std::size_t> conv_strides = {1, 2, 2, 1, 1};
  std::size_t kernel_size = 3;
  std::vector<std::size_t> mlp_hidden = {128, 128};
  std::size_t repr_dim = 256;
  std::size_t proj_hidden = 256;
  std::size_t proj_dim = 64;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const nlohmann::json& j);

struct NamedParameter {
  std::string name;
  Tensor value;
};

/// Parameter shapes in declaration order, derived from the config alone.
std::vector<std::pair<std::string, Shape>> parameter_layout(const EncoderConfig& cfg);

class Encoder;

/// Parameters of an Encoder bound as leaves on a tape for one forward pass.
class BoundEncoder {
 public:
  BoundEncoder(const Encoder& encoder, Tape& tape, bool requires_grad);

  /// Representation vectors, B x repr_dim. Not normalized.
  Var encode(Var batch) const;
  /// Unit-norm latent vectors, B x proj_dim.
  Var project(Var repr) const;

  const std::vector<Var>& parameters() const { return params_; }

 private:
  const Encoder& encoder_;
  Tape& tape_;
  std::vector<Var> params_;
};

class Encoder {
 public:
  /// Seeded He-uniform initialization; biases start at zero.
  explicit Encoder(EncoderConfig cfg);
  Encoder(EncoderConfig cfg, std::vector<NamedParameter> params);

  const EncoderConfig& config() const { return cfg_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<NamedParameter>& parameters() { return params_; }
  std::size_t parameter_count() const;

  BoundEncoder bind(Tape& tape, bool requires_grad) const { return BoundEncoder(*this, tape, requires_grad); }

  /// Inference without gradients, processed in chunks of `chunk` rows.
  Tensor encode(const Tensor& batch, std::size_t chunk = 64) const;
  Tensor project(const Tensor& repr) const;

 private:
  friend class BoundEncoder;
  EncoderConfig cfg_;
  std::vector<NamedParameter> params_;
};

inline Encoder init_encoder(const EncoderConfig& cfg) { return Encoder(cfg); }

struct EncoderCheckpoint {
  EncoderConfig config;
  std::vector<NamedParameter> parameters;
  std::uint64_t step = 0;
  /// Loss used for pretraining, or "random" for an untrained encoder.
  std::string loss_kind = "random";
  /// Free-form provenance (training config echo).
  nlohmann::json metadata = nlohmann::json::object();

  Encoder encoder() const { return Encoder(config, parameters); }
};

EncoderCheckpoint make_checkpoint(const Encoder& encoder, std::uint64_t step, std::string loss_kind,
                                  nlohmann::json metadata = nlohmann::json::object());

/// "WSPC" | u16 version | u32 length + UTF-8 JSON | per parameter:
/// u8 rank, u32 extents..., float64 values. All little-endian.
std::vector<std::uint8_t> encode_checkpoint(const EncoderCheckpoint& ckpt);
EncoderCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const EncoderCheckpoint& ckpt);
EncoderCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wsp
