#include "commands.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pca_svg.hpp"
#include "run_config.hpp"
#include "wsp/error.hpp"
#include "wsp/evaluation.hpp"
#include "wsp/format.hpp"
#include "wsp/gradcheck.hpp"
#include "wsp/pca.hpp"

namespace wsp::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kGradcheckTolerance = 1e-5;

struct Flags {
  /// The subcommand that was parsed; flags are looked up on it.
  const CLI::App* cmd = nullptr;
  std::string config;
  std::uint64_t seed = 0;

  std::string out;
  std::string data;
  std::string pretrain_data;
  std::string ckpt;
  std::string svg;

  std::size_t volumes = 0;
  std::size_t slices = 0;
  std::string size;
  double noise = 0.0;

  std::string loss = "wsp";
  double sigma = 0.1;
  double tau = 0.1;
  std::size_t epochs = 30;
  std::size_t batch = 32;
  double lr = 1e-4;
  std::string arch = "tiny_cnn";

  std::size_t folds = 5;

  std::size_t batches = 20;
  std::string sigmas = "0.01,0.1,0.2,0.3,0.5";
  std::string seeds = "0";
};

bool given(const Flags& f, const char* flag) { return f.cmd != nullptr && f.cmd->count(flag) > 0; }

RunConfig base_config(const Flags& f) {
  RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (given(f, "--seed")) cfg.seed = f.seed;
  cfg.resolve();
  return cfg;
}

fs::path output_path(const std::string& flag, const RunConfig& cfg, const char* fallback) {
  return flag.empty() ? cfg.output_dir / fallback : fs::path(flag);
}

fs::path parent_or_cwd(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": cannot parse '" + item + "'");
    }
  }
  if (values.empty()) throw UsageError(std::string(what) + " must not be empty");
  return values;
}

PreparedDataset load_prepared(const std::string& dir, const RunConfig& cfg) {
  if (dir.empty()) throw UsageError("--data is required");
  return prepare_dataset(load_dataset(dir), cfg.prepare);
}

void fit_encoder_to_data(RunConfig& cfg, const PreparedDataset& data) {
  cfg.encoder.input_shape = {1, data.height, data.width};
}

EncoderCheckpoint load_or_random(const std::string& ckpt, RunConfig& cfg, const PreparedDataset& data) {
  if (ckpt.empty()) throw UsageError("--ckpt is required (a checkpoint path or 'random')");
  if (ckpt == "random") {
    fit_encoder_to_data(cfg, data);
    return random_checkpoint(cfg.encoder);
  }
  return load_checkpoint(ckpt);
}

std::optional<double> checkpoint_sigma(const EncoderCheckpoint& ckpt) {
  if (ckpt.loss_kind != "wsp" && ckpt.loss_kind != "depth_aware") return std::nullopt;
  const auto& meta = ckpt.metadata;
  if (meta.contains("loss") && meta["loss"].contains("sigma")) return meta["loss"]["sigma"].get<double>();
  return std::nullopt;
}

int cmd_generate(const Flags& f, std::ostream& out) {
  RunConfig cfg = base_config(f);
  if (given(f, "--volumes")) {
    if (f.volumes == 0) throw UsageError("--volumes must be positive");
    cfg.generator.n_volumes = f.volumes;
  }
  if (given(f, "--slices")) {
    if (f.slices == 0) throw UsageError("--slices must be positive");
    cfg.generator.slices_per_volume = f.slices;
  }
  if (!f.size.empty()) {
    std::size_t h = 0, w = 0;
    char tail = 0;
    if (std::sscanf(f.size.c_str(), "%zux%zu%c", &h, &w, &tail) != 2 || h == 0 || w == 0) {
      throw UsageError("--size expects HxW, got '" + f.size + "'");
    }
    cfg.generator.height = h;
    cfg.generator.width = w;
  }
  if (given(f, "--noise")) cfg.generator.label_noise = f.noise;
  cfg.generator.validate();

  const fs::path dir = output_path(f.out, cfg, "data");
  save_dataset(dir, generate_synthetic_dataset(cfg.generator, cfg.seed));
  cfg.output_dir = dir;
  write_effective_config(dir, cfg, "generate");
  out << "wrote " << cfg.generator.n_volumes << " volumes to " << dir.string() << '\n';
  return kOk;
}

int cmd_pretrain(const Flags& f, std::ostream& out, std::ostream& err) {
  RunConfig cfg = base_config(f);
  if (given(f, "--loss")) cfg.loss.kind = loss_kind_from_string(f.loss);
  if (given(f, "--sigma")) {
    if (cfg.loss.kind == LossKind::supcon || cfg.loss.kind == LossKind::infonce) {
      err << "warning: --sigma is ignored by the " << to_string(cfg.loss.kind) << " loss\n";
    }
    cfg.loss.sigma = f.sigma;
  }
  if (given(f, "--tau")) cfg.loss.tau = f.tau;
  if (given(f, "--epochs")) cfg.optim.epochs = f.epochs;
  if (given(f, "--batch")) cfg.optim.batch_size = f.batch;
  if (given(f, "--lr")) cfg.optim.lr = f.lr;
  if (given(f, "--arch")) cfg.encoder.arch = arch_from_string(f.arch);
  cfg.resolve();
  cfg.loss.validate();
  cfg.optim.validate();

  const PreparedDataset data = load_prepared(f.data, cfg);
  fit_encoder_to_data(cfg, data);
  const fs::path ckpt_path = output_path(f.out, cfg, "checkpoint.wspc");
  const fs::path dir = parent_or_cwd(ckpt_path);
  fs::create_directories(dir);

  PretrainOptions options;
  options.dump_dir = dir;
  options.on_epoch = [&](const EpochLog& log) {
    out << "epoch " << log.epoch << '/' << cfg.optim.epochs << " loss " << format_fixed(log.mean_loss, 6) << " lr "
        << format_real(log.lr) << '\n';
  };
  const PretrainResult result = pretrain(data, cfg.encoder, cfg.optim, options);
  save_checkpoint(ckpt_path, result.checkpoint);
  write_loss_curve_csv(dir / (ckpt_path.stem().string() + "_loss.csv"), result.curve);
  cfg.output_dir = dir;
  write_effective_config(dir, cfg, "pretrain");
  out << "wrote checkpoint " << ckpt_path.string() << '\n';
  return kOk;
}

int cmd_probe(const Flags& f, std::ostream& out) {
  RunConfig cfg = base_config(f);
  if (given(f, "--folds")) cfg.probe.folds = f.folds;
  cfg.probe.validate();
  const PreparedDataset data = load_prepared(f.data, cfg);
  const EncoderCheckpoint ckpt = load_or_random(f.ckpt, cfg, data);
  const ProbeReport report = run_probe_protocol(ckpt, data, cfg.probe);

  const fs::path path = output_path(f.out, cfg, "metrics.csv");
  fs::create_directories(parent_or_cwd(path));
  write_metrics_csv(path, metrics_rows(ckpt.loss_kind, checkpoint_sigma(ckpt), report));
  cfg.output_dir = parent_or_cwd(path);
  write_effective_config(cfg.output_dir, cfg, "probe");
  out << "AUC " << format_fixed(report.auc_mean) << " +- " << format_fixed(report.auc_std) << "  bACC "
      << format_fixed(report.bacc_mean) << " +- " << format_fixed(report.bacc_std) << "  (" << report.folds.size()
      << " folds)\n";
  return kOk;
}

int cmd_project(const Flags& f, std::ostream& out) {
  RunConfig cfg = base_config(f);
  const PreparedDataset data = load_prepared(f.data, cfg);
  const EncoderCheckpoint ckpt = load_or_random(f.ckpt, cfg, data);
  const RepresentationTable table = extract_representations(ckpt, data);
  const PcaResult pca = pca_project(table.features, 2);

  const fs::path path = output_path(f.out, cfg, "pca.csv");
  fs::create_directories(parent_or_cwd(path));
  write_pca_csv(path, table, pca);
  if (!f.svg.empty()) {
    fs::create_directories(parent_or_cwd(f.svg));
    write_pca_svg(f.svg, table, pca);
  }
  cfg.output_dir = parent_or_cwd(path);
  write_effective_config(cfg.output_dir, cfg, "project");
  out << "explained variance " << format_fixed(pca.explained_variance[0]) << ", "
      << format_fixed(pca.explained_variance[1]) << "; wrote " << path.string() << '\n';
  return kOk;
}

int cmd_gradcheck(const Flags& f, std::ostream& out, std::ostream& err) {
  if (f.batches == 0) throw UsageError("--batches must be positive");
  bool ok = true;
  for (const GradcheckResult& r : gradcheck_all_losses(f.seed, f.batches)) {
    const bool pass = r.max_rel_error < kGradcheckTolerance;
    ok = ok && pass;
    out << (pass ? "ok   " : "FAIL ") << to_string(r.kind) << " max rel err " << format_real(r.max_rel_error) << " over "
        << r.batches << " batches\n";
    if (!pass) {
      err << "gradcheck failed for " << to_string(r.kind) << ": max rel err " << format_real(r.max_rel_error)
          << " >= " << kGradcheckTolerance << '\n';
    }
  }
  return ok ? kOk : kNumerical;
}

int cmd_sweep(const Flags& f, std::ostream& out) {
  RunConfig cfg = base_config(f);
  const std::vector<double> sigmas = parse_list(f.sigmas, "--sigmas");
  std::vector<std::uint64_t> seeds;
  for (double s : parse_list(f.seeds, "--seeds")) {
    if (s < 0.0 || s != static_cast<double>(static_cast<std::uint64_t>(s))) {
      throw UsageError("--seeds expects non-negative integers");
    }
    seeds.push_back(static_cast<std::uint64_t>(s));
  }
  if (given(f, "--epochs")) cfg.optim.epochs = f.epochs;
  if (given(f, "--batch")) cfg.optim.batch_size = f.batch;
  if (given(f, "--lr")) cfg.optim.lr = f.lr;
  if (given(f, "--tau")) cfg.loss.tau = f.tau;
  cfg.loss.kind = LossKind::wsp;
  cfg.resolve();

  const PreparedDataset probe_data = load_prepared(f.data, cfg);
  const PreparedDataset pretrain_data = f.pretrain_data.empty() ? probe_data : load_prepared(f.pretrain_data, cfg);
  fit_encoder_to_data(cfg, pretrain_data);
  const std::vector<SweepRow> rows = sigma_sweep(pretrain_data, probe_data, cfg.encoder, cfg.optim, cfg.probe, sigmas, seeds);

  const fs::path path = output_path(f.out, cfg, "sweep.csv");
  fs::create_directories(parent_or_cwd(path));
  write_sweep_csv(path, rows);
  cfg.output_dir = parent_or_cwd(path);
  write_effective_config(cfg.output_dir, cfg, "sweep");
  for (const SweepRow& r : rows) {
    out << "sigma " << format_real(r.sigma) << "  AUC " << format_fixed(r.auc_mean) << " +- " << format_fixed(r.auc_std)
        << '\n';
  }
  return kOk;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "Master seed (default: config seed, else 0)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly-supervised positional contrastive pretraining and linear probing"};
  app.name("wsp");
  app.require_subcommand(1);
  Flags f;

  CLI::App* gen = app.add_subcommand("generate", "Write a deterministic synthetic phantom cohort");
  add_common(gen, f);
  gen->add_option("--out", f.out, "Output directory (default: <output_dir>/data)");
  gen->add_option("--volumes", f.volumes, "Number of volumes (default 60)");
  gen->add_option("--slices", f.slices, "Slices per volume (default 24)");
  gen->add_option("--size", f.size, "Image size HxW (default 32x32)");
  gen->add_option("--noise", f.noise, "Weak-label noise rate rho (default 0.1)");

  CLI::App* pre = app.add_subcommand("pretrain", "Contrastive pretraining of the encoder");
  add_common(pre, f);
  pre->add_option("--data", f.data, "Dataset directory")->required();
  pre->add_option("--loss", f.loss, "Loss: wsp | supcon | depth | infonce")->capture_default_str();
  pre->add_option("--sigma", f.sigma, "Depth kernel bandwidth")->capture_default_str();
  pre->add_option("--tau", f.tau, "Temperature")->capture_default_str();
  pre->add_option("--epochs", f.epochs, "Epochs")->capture_default_str();
  pre->add_option("--batch", f.batch, "Batch size (patients per batch)")->capture_default_str();
  pre->add_option("--lr", f.lr, "Peak learning rate")->capture_default_str();
  pre->add_option("--arch", f.arch, "Encoder: tiny_cnn | mlp")->capture_default_str();
  pre->add_option("--out", f.out, "Checkpoint path (default: <output_dir>/checkpoint.wspc)");

  CLI::App* probe = app.add_subcommand("probe", "Stratified k-fold linear probe on frozen representations");
  add_common(probe, f);
  probe->add_option("--data", f.data, "Dataset directory")->required();
  probe->add_option("--ckpt", f.ckpt, "Checkpoint path, or 'random' for an untrained encoder")->required();
  probe->add_option("--folds", f.folds, "Cross-validation folds")->capture_default_str();
  probe->add_option("--out", f.out, "Metrics CSV (default: <output_dir>/metrics.csv)");

  CLI::App* proj = app.add_subcommand("project", "PCA projection of the representations");
  add_common(proj, f);
  proj->add_option("--data", f.data, "Dataset directory")->required();
  proj->add_option("--ckpt", f.ckpt, "Checkpoint path, or 'random' for an untrained encoder")->required();
  proj->add_option("--out", f.out, "PCA CSV (default: <output_dir>/pca.csv)");
  proj->add_option("--svg", f.svg, "Optional scatter plot");

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss kind");
  grad->add_option("--seed", f.seed, "Seed of the random batches")->capture_default_str();
  grad->add_option("--batches", f.batches, "Random batches per loss kind")->capture_default_str();

  CLI::App* sweep = app.add_subcommand("sweep", "WSP pretraining and probing over a list of sigma values");
  add_common(sweep, f);
  sweep->add_option("--data", f.data, "Probe dataset directory")->required();
  sweep->add_option("--pretrain-data", f.pretrain_data, "Pretraining dataset directory (default: --data)");
  sweep->add_option("--sigmas", f.sigmas, "Comma-separated sigma values")->capture_default_str();
  sweep->add_option("--seeds", f.seeds, "Comma-separated seeds")->capture_default_str();
  sweep->add_option("--epochs", f.epochs, "Epochs")->capture_default_str();
  sweep->add_option("--batch", f.batch, "Batch size")->capture_default_str();
  sweep->add_option("--lr", f.lr, "Peak learning rate")->capture_default_str();
  sweep->add_option("--tau", f.tau, "Temperature")->capture_default_str();
  sweep->add_option("--out", f.out, "Sweep CSV (default: <output_dir>/sweep.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (const CLI::App* sub : {gen, pre, probe, proj, grad, sweep}) {
    if (sub->parsed()) f.cmd = sub;
  }
  try {
    if (gen->parsed()) return cmd_generate(f, out);
    if (pre->parsed()) return cmd_pretrain(f, out, err);
    if (probe->parsed()) return cmd_probe(f, out);
    if (proj->parsed()) return cmd_project(f, out);
    if (grad->parsed()) return cmd_gradcheck(f, out, err);
    if (sweep->parsed()) return cmd_sweep(f, out);
    return kUsage;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace wsp::cli
