#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>

#include "wsp/dataset.hpp"
#include "wsp/encoder.hpp"
#include "wsp/losses.hpp"
#include "wsp/probe.hpp"
#include "wsp/trainer.hpp"

namespace wsp::cli {

/// Everything a run needs. The JSON form has the sections `data`, `encoder`,
/// `loss`, `optim`, `probe`, `output_dir` and `seed`; absent keys keep the
/// defaults below and unknown keys are rejected.
struct RunConfig {
  GeneratorConfig generator;
  PrepareConfig prepare;
  EncoderConfig encoder;
  LossConfig loss;
  OptimConfig optim;
  ProbeConfig probe;
  std::filesystem::path output_dir = "wsp_out";
  /// Master seed; copied into the encoder, optimizer and probe seeds.
  std::uint64_t seed = 0;

  /// Propagates the master seed and the loss section into the sub-configs.
  void resolve();
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Echo of the effective configuration for provenance.
void write_effective_config(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command);

}  // namespace wsp::cli
