#include "wsp/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "wsp/error.hpp"
#include "wsp/json_util.hpp"
#include "wsp/rng.hpp"

namespace wsp {

namespace {

constexpr std::string_view kCheckpointMagic = "WSPC";
constexpr std::uint16_t kCheckpointVersion = 1;

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride) { return (in - k) / stride + 1; }

std::size_t flat_input(const EncoderConfig& cfg) { return shape_product(cfg.input_shape); }

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::tiny_cnn ? "tiny_cnn" : "mlp"; }

Arch arch_from_string(const std::string& name) {
  if (name == "tiny_cnn") return Arch::tiny_cnn;
  if (name == "mlp") return Arch::mlp;
  throw ConfigError("unknown encoder arch '" + name + "'");
}

void EncoderConfig::validate() const {
  if (input_shape.empty()) throw ConfigError("encoder input_shape is empty");
  for (std::size_t e : input_shape) {
    if (e == 0) throw ConfigError("encoder input_shape extents must be positive");
  }
  if (!(repr_dim > proj_dim && proj_dim > 0)) {
    throw ConfigError("encoder needs repr_dim > proj_dim > 0, got " + std::to_string(repr_dim) + " / " +
                      std::to_string(proj_dim));
  }
  if (proj_hidden == 0) throw ConfigError("encoder proj_hidden must be positive");
  if (arch == Arch::tiny_cnn) {
    if (conv_channels.size() != 5) {
      throw ConfigError("tiny_cnn needs exactly 5 conv stages, got " + std::to_string(conv_channels.size()));
    }
    if (conv_strides.size() != conv_channels.size()) throw ConfigError("conv_strides must match conv_channels");
    if (input_shape.size() != 3) throw ConfigError("tiny_cnn input_shape must be {C, H, W}");
    if (kernel_size == 0) throw ConfigError("kernel_size must be positive");
    std::size_t h = input_shape[1], w = input_shape[2];
    for (std::size_t s = 0; s < conv_channels.size(); ++s) {
      if (conv_channels[s] == 0 || conv_strides[s] == 0) throw ConfigError("conv channels and strides must be positive");
      if (kernel_size > h || kernel_size > w) {
        throw ConfigError("conv stage " + std::to_string(s) + " sees a " + std::to_string(h) + "x" +
                          std::to_string(w) + " map, smaller than the kernel");
      }
      h = conv_out(h, kernel_size, conv_strides[s]);
      w = conv_out(w, kernel_size, conv_strides[s]);
    }
  } else {
    for (std::size_t width : mlp_hidden) {
      if (width == 0) throw ConfigError("mlp hidden widths must be positive");
    }
  }
}

nlohmann::json to_json(const EncoderConfig& cfg) {
  return {
      {"arch", to_string(cfg.arch)},
      {"input_shape", cfg.input_shape},
      {"conv_channels", cfg.conv_channels},
      {"conv_strides", cfg.conv_strides},
      {"kernel_size", cfg.kernel_size},
      {"mlp_hidden", cfg.mlp_hidden},
      {"repr_dim", cfg.repr_dim},
      {"proj_hidden", cfg.proj_hidden},
      {"proj_dim", cfg.proj_dim},
      {"seed", cfg.seed},
  };
}

EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  StrictObject obj(j, "encoder");
  std::string arch = to_string(cfg.arch);
  obj.read("arch", arch)
      .read("input_shape", cfg.input_shape)
      .read("conv_channels", cfg.conv_channels)
      .read("conv_strides", cfg.conv_strides)
      .read("kernel_size", cfg.kernel_size)
      .read("mlp_hidden", cfg.mlp_hidden)
      .read("repr_dim", cfg.repr_dim)
      .read("proj_hidden", cfg.proj_hidden)
      .read("proj_dim", cfg.proj_dim)
      .read("seed", cfg.seed)
      .finish();
  cfg.arch = arch_from_string(arch);
  cfg.validate();
  return cfg;
}

std::vector<std::pair<std::string, Shape>> parameter_layout(const EncoderConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> layout;
  std::size_t features = 0;
  if (cfg.arch == Arch::tiny_cnn) {
    std::size_t channels = cfg.input_shape[0];
    for (std::size_t s = 0; s < cfg.conv_channels.size(); ++s) {
      const std::string prefix = "conv" + std::to_string(s);
      layout.emplace_back(prefix + ".weight", Shape{cfg.conv_channels[s], channels, cfg.kernel_size, cfg.kernel_size});
      layout.emplace_back(prefix + ".bias", Shape{cfg.conv_channels[s]});
      channels = cfg.conv_channels[s];
    }
    features = channels;
  } else {
    features = flat_input(cfg);
    for (std::size_t l = 0; l < cfg.mlp_hidden.size(); ++l) {
      const std::string prefix = "fc" + std::to_string(l);
      layout.emplace_back(prefix + ".weight", Shape{features, cfg.mlp_hidden[l]});
      layout.emplace_back(prefix + ".bias", Shape{cfg.mlp_hidden[l]});
      features = cfg.mlp_hidden[l];
    }
  }
  layout.emplace_back("repr.weight", Shape{features, cfg.repr_dim});
  layout.emplace_back("repr.bias", Shape{cfg.repr_dim});
  layout.emplace_back("proj0.weight", Shape{cfg.repr_dim, cfg.proj_hidden});
  layout.emplace_back("proj0.bias", Shape{cfg.proj_hidden});
  layout.emplace_back("proj1.weight", Shape{cfg.proj_hidden, cfg.proj_dim});
  layout.emplace_back("proj1.bias", Shape{cfg.proj_dim});
  return layout;
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  Rng rng = make_rng(cfg_.seed, {0x656e63ULL});
  for (auto& [name, shape] : parameter_layout(cfg_)) {
    Tensor value(shape);
    if (shape.size() > 1) {
      // Conv kernels are [F, C, k, k] (fan-in C*k*k); dense weights are [in, out].
      const std::size_t fan_in = shape.size() == 4 ? shape[1] * shape[2] * shape[3] : shape[0];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : value.values()) v = dist(rng);
    }
    params_.push_back({name, std::move(value)});
  }
}

Encoder::Encoder(EncoderConfig cfg, std::vector<NamedParameter> params)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  const auto layout = parameter_layout(cfg_);
  if (layout.size() != params_.size()) {
    throw ContractError("encoder expects " + std::to_string(layout.size()) + " parameter tensors, got " +
                        std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params_[i].value.shape() != layout[i].second) {
      throw DimensionError("parameter " + layout[i].first + " has shape " + shape_to_string(params_[i].value.shape()) +
                           ", config expects " + shape_to_string(layout[i].second));
    }
    params_[i].name = layout[i].first;
  }
}

std::size_t Encoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

BoundEncoder::BoundEncoder(const Encoder& encoder, Tape& tape, bool requires_grad)
    : encoder_(encoder), tape_(tape) {
  params_.reserve(encoder.params_.size());
  for (const auto& p : encoder.params_) {
    params_.push_back(requires_grad ? tape.parameter(p.value) : tape.constant(p.value));
  }
}

Var BoundEncoder::encode(Var batch) const {
  const EncoderConfig& cfg = encoder_.cfg_;
  const Shape& in = batch.shape();
  std::size_t idx = 0;
  Var h = batch;
  if (cfg.arch == Arch::tiny_cnn) {
    if (in.size() != 4 || Shape(in.begin() + 1, in.end()) != cfg.input_shape) {
      throw DimensionError("encode: batch " + shape_to_string(in) + " does not match input shape " +
                           shape_to_string(cfg.input_shape));
    }
    for (std::size_t s = 0; s < cfg.conv_channels.size(); ++s) {
      h = conv2d(h, params_[idx], cfg.conv_strides[s]);
      h = relu(add_channel_bias(h, params_[idx + 1]));
      idx += 2;
    }
    h = global_avg_pool(h);
  } else {
    const std::size_t features = flat_input(cfg);
    if (in.size() < 2 || shape_product(in) != in[0] * features) {
      throw DimensionError("encode: batch " + shape_to_string(in) + " does not match input shape " +
                           shape_to_string(cfg.input_shape));
    }
    if (in.size() != 2) h = reshape(h, {in[0], features});
    for (std::size_t l = 0; l < cfg.mlp_hidden.size(); ++l) {
      h = relu(affine(h, params_[idx], params_[idx + 1]));
      idx += 2;
    }
  }
  return affine(h, params_[idx], params_[idx + 1]);
}

Var BoundEncoder::project(Var repr) const {
  const EncoderConfig& cfg = encoder_.cfg_;
  if (repr.shape().size() != 2 || repr.shape()[1] != cfg.repr_dim) {
    throw DimensionError("project: expected B x " + std::to_string(cfg.repr_dim) + ", got " +
                         shape_to_string(repr.shape()));
  }
  const std::size_t n = params_.size();
  Var h = relu(affine(repr, params_[n - 4], params_[n - 3]));
  return l2_normalize(affine(h, params_[n - 2], params_[n - 1]));
}

Tensor Encoder::encode(const Tensor& batch, std::size_t chunk) const {
  if (batch.rank() < 2) throw DimensionError("encode: batch needs a leading batch axis");
  const std::size_t rows = batch.extent(0);
  const std::size_t per_row = batch.size() / rows;
  Tensor out({rows, cfg_.repr_dim});
  for (std::size_t start = 0; start < rows; start += chunk) {
    const std::size_t count = std::min(chunk, rows - start);
    Shape shape = batch.shape();
    shape[0] = count;
    std::vector<double> part(batch.data() + start * per_row, batch.data() + (start + count) * per_row);
    Tape tape;
    BoundEncoder bound = bind(tape, false);
    Var r = bound.encode(tape.constant(Tensor(shape, std::move(part))));
    std::copy_n(r.value().data(), count * cfg_.repr_dim, out.data() + start * cfg_.repr_dim);
  }
  return out;
}

Tensor Encoder::project(const Tensor& repr) const {
  Tape tape;
  BoundEncoder bound = bind(tape, false);
  return bound.project(tape.constant(repr)).value();
}

EncoderCheckpoint make_checkpoint(const Encoder& encoder, std::uint64_t step, std::string loss_kind,
                                  nlohmann::json metadata) {
  return EncoderCheckpoint{encoder.config(), encoder.parameters(), step, std::move(loss_kind), std::move(metadata)};
}

std::vector<std::uint8_t> encode_checkpoint(const EncoderCheckpoint& ckpt) {
  nlohmann::json header = {
      {"encoder", to_json(ckpt.config)},
      {"step", ckpt.step},
      {"loss_kind", ckpt.loss_kind},
      {"metadata", ckpt.metadata},
  };
  const std::string text = header.dump();
  detail::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& p : ckpt.parameters) {
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t e : p.value.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : p.value.values()) w.f64(v);
  }
  return w.buffer();
}

EncoderCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) r.fail("bad magic, expected WSPC");
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t length = r.u32();
  const std::size_t json_offset = r.offset();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.bytes(length));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint: invalid config JSON: ") + e.what(), json_offset);
  }

  EncoderCheckpoint ckpt;
  try {
    ckpt.config = encoder_config_from_json(header.at("encoder"));
    ckpt.step = header.at("step").get<std::uint64_t>();
    ckpt.loss_kind = header.at("loss_kind").get<std::string>();
    ckpt.metadata = header.value("metadata", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what(), json_offset);
  }

  for (const auto& [name, expected] : parameter_layout(ckpt.config)) {
    const std::size_t rank = r.u8();
    Shape shape(rank);
    for (auto& e : shape) e = r.u32();
    if (shape != expected) {
      r.fail("parameter " + name + " has shape " + shape_to_string(shape) + ", config expects " +
             shape_to_string(expected));
    }
    std::vector<double> values(shape_product(shape));
    for (double& v : values) v = r.f64();
    ckpt.parameters.push_back({name, Tensor(shape, std::move(values))});
  }
  if (!r.at_end()) r.fail("trailing bytes after parameters");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderCheckpoint& ckpt) {
  detail::write_file_bytes(path, encode_checkpoint(ckpt));
}

EncoderCheckpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file_bytes(path));
}

}  // namespace wsp
