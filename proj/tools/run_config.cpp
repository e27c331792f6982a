#include "run_config.hpp"

#include <fstream>

#include "wsp/error.hpp"
#include "wsp/evaluation.hpp"
#include "wsp/json_util.hpp"

namespace wsp::cli {

namespace {

nlohmann::json prepare_to_json(const PrepareConfig& cfg) {
  return {{"central_fraction", cfg.central_fraction}, {"clip_lo", cfg.clip_lo}, {"clip_hi", cfg.clip_hi}};
}

PrepareConfig prepare_from_json(const nlohmann::json& j) {
  PrepareConfig cfg;
  StrictObject(j, "data.prepare")
      .read("central_fraction", cfg.central_fraction)
      .read("clip_lo", cfg.clip_lo)
      .read("clip_hi", cfg.clip_hi)
      .finish();
  cfg.validate();
  return cfg;
}

}  // namespace

void RunConfig::resolve() {
  encoder.seed = seed;
  optim.seed = seed;
  probe.seed = seed;
  optim.loss = loss;
}

nlohmann::json to_json(const RunConfig& cfg) {
  return {{"data", {{"generator", to_json(cfg.generator)}, {"prepare", prepare_to_json(cfg.prepare)}}},
          {"encoder", to_json(cfg.encoder)},
          {"loss", to_json(cfg.loss)},
          {"optim", to_json(cfg.optim)},
          {"probe", to_json(cfg.probe)},
          {"output_dir", cfg.output_dir.string()},
          {"seed", cfg.seed}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  StrictObject obj(j, "config");
  if (const nlohmann::json* data = obj.child("data")) {
    StrictObject d(*data, "data");
    if (const nlohmann::json* g = d.child("generator")) cfg.generator = generator_config_from_json(*g);
    if (const nlohmann::json* p = d.child("prepare")) cfg.prepare = prepare_from_json(*p);
    d.finish();
  }
  if (const nlohmann::json* e = obj.child("encoder")) cfg.encoder = encoder_config_from_json(*e);
  if (const nlohmann::json* l = obj.child("loss")) cfg.loss = loss_config_from_json(*l);
  if (const nlohmann::json* o = obj.child("optim")) cfg.optim = optim_config_from_json(*o);
  if (const nlohmann::json* p = obj.child("probe")) cfg.probe = probe_config_from_json(*p);
  std::string output_dir = cfg.output_dir.string();
  obj.read("output_dir", output_dir).read("seed", cfg.seed).finish();
  cfg.output_dir = output_dir;
  cfg.resolve();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

void write_effective_config(const std::filesystem::path& dir, const RunConfig& cfg, const std::string& command) {
  std::filesystem::create_directories(dir);
  nlohmann::json j = to_json(cfg);
  j["command"] = command;
  const std::filesystem::path path = dir / "effective_config.json";
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace wsp::cli
