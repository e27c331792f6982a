#include "wsp/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "wsp/error.hpp"
#include "wsp/format.hpp"
#include "wsp/json_util.hpp"
#include "wsp/metrics.hpp"
#include "wsp/parallel.hpp"

namespace wsp {

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_csv(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Tensor select_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  const std::size_t d = x.extent(1);
  Tensor out({rows.size(), d});
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy_n(x.data() + rows[r] * d, d, out.data() + r * d);
  return out;
}

}  // namespace

RepresentationTable extract_representations(const Encoder& encoder, const PreparedDataset& dataset) {
  const std::size_t n = dataset.slices.size();
  if (n == 0) throw ContractError("extract_representations: dataset has no slices");
  const std::size_t hw = dataset.height * dataset.width;
  if (shape_product(encoder.config().input_shape) != hw) {
    throw DimensionError("extract_representations: encoder input " + shape_to_string(encoder.config().input_shape) +
                         " does not fit " + std::to_string(dataset.height) + "x" + std::to_string(dataset.width) +
                         " slices");
  }
  Tensor images({n, 1, dataset.height, dataset.width});
  RepresentationTable table;
  for (std::size_t i = 0; i < n; ++i) {
    const PreparedSlice& s = dataset.slices[i];
    std::copy(s.pixels.begin(), s.pixels.end(), images.data() + i * hw);
    table.patient_id.push_back(s.patient_id);
    table.slice_id.push_back(s.slice_id);
    table.d.push_back(s.d);
    table.y_weak.push_back(s.y_weak);
    table.y_strong.push_back(s.y_strong);
  }
  table.features = encoder.encode(images);
  return table;
}

RepresentationTable extract_representations(const EncoderCheckpoint& checkpoint, const PreparedDataset& dataset) {
  return extract_representations(checkpoint.encoder(), dataset);
}

RepresentationTable with_features(const RepresentationTable& table, Tensor features) {
  if (features.rank() != 2 || features.extent(0) != table.size()) {
    throw DimensionError("with_features: expected " + std::to_string(table.size()) + " rows");
  }
  RepresentationTable out = table;
  out.features = std::move(features);
  return out;
}

nlohmann::json to_json(const ProbeConfig& cfg) {
  return {{"l2_strength", cfg.l2_strength}, {"max_iterations", cfg.max_iterations}, {"tolerance", cfg.tolerance},
          {"folds", cfg.folds},             {"seed", cfg.seed},                     {"standardize", cfg.standardize}};
}

ProbeConfig probe_config_from_json(const nlohmann::json& j) {
  ProbeConfig cfg;
  StrictObject(j, "probe")
      .read("l2_strength", cfg.l2_strength)
      .read("max_iterations", cfg.max_iterations)
      .read("tolerance", cfg.tolerance)
      .read("folds", cfg.folds)
      .read("seed", cfg.seed)
      .read("standardize", cfg.standardize)
      .finish();
  cfg.validate();
  return cfg;
}

ProbeReport run_probe_protocol(const RepresentationTable& table, const ProbeConfig& cfg) {
  cfg.validate();
  if (table.size() == 0) throw ContractError("run_probe_protocol: empty representation table");

  // Patients in ascending id order with their strong label.
  std::map<std::int64_t, int> patient_label;
  for (std::size_t r = 0; r < table.size(); ++r) {
    if (!table.y_strong[r]) {
      throw ContractError("run_probe_protocol: patient " + std::to_string(table.patient_id[r]) +
                          " has no strong label");
    }
    auto [it, fresh] = patient_label.emplace(table.patient_id[r], *table.y_strong[r]);
    if (!fresh && it->second != *table.y_strong[r]) {
      throw ContractError("run_probe_protocol: patient " + std::to_string(table.patient_id[r]) +
                          " has inconsistent strong labels");
    }
  }
  std::vector<std::int64_t> patients;
  std::vector<int> labels;
  for (const auto& [pid, y] : patient_label) {
    patients.push_back(pid);
    labels.push_back(y);
  }
  const std::vector<std::size_t> fold_of_patient = stratified_kfold(labels, cfg.folds, cfg.seed);
  std::map<std::int64_t, std::size_t> fold_of;
  for (std::size_t p = 0; p < patients.size(); ++p) fold_of[patients[p]] = fold_of_patient[p];

  ProbeReport report;
  report.folds.resize(cfg.folds);
  std::vector<std::map<std::int64_t, double>> fold_probs(cfg.folds);
  parallel_for(cfg.folds, [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t r = 0; r < table.size(); ++r) (fold_of.at(table.patient_id[r]) == f ? test : train).push_back(r);
    std::vector<int> y_train;
    for (std::size_t r : train) y_train.push_back(*table.y_strong[r]);
    const LogisticModel model = fit_logistic_probe(select_rows(table.features, train), y_train, cfg);
    const std::vector<double> probs = model.predict_proba(select_rows(table.features, test));

    std::vector<int> y_test;
    std::vector<std::int64_t> pid_test;
    for (std::size_t r : test) {
      y_test.push_back(*table.y_strong[r]);
      pid_test.push_back(table.patient_id[r]);
    }
    const std::map<std::int64_t, double> agg = aggregate_patient(probs, pid_test);
    std::vector<double> scores;
    std::vector<int> truth;
    std::vector<int> predicted;
    for (const auto& [pid, prob] : agg) {
      scores.push_back(prob);
      truth.push_back(patient_label.at(pid));
      predicted.push_back(prob >= 0.5 ? 1 : 0);
    }
    report.folds[f] = {f, auc(scores, truth), auc(probs, y_test), balanced_accuracy(predicted, truth)};
    fold_probs[f] = agg;
  });

  std::vector<double> aucs, baccs;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    aucs.push_back(report.folds[f].auc_patient);
    baccs.push_back(report.folds[f].bacc);
    report.patient_probability.insert(fold_probs[f].begin(), fold_probs[f].end());
  }
  report.auc_mean = mean(aucs);
  report.auc_std = stddev(aucs);
  report.bacc_mean = mean(baccs);
  report.bacc_std = stddev(baccs);
  report.config = to_json(cfg);
  return report;
}

ProbeReport run_probe_protocol(const EncoderCheckpoint& checkpoint, const PreparedDataset& dataset,
                               const ProbeConfig& cfg) {
  return run_probe_protocol(extract_representations(checkpoint, dataset), cfg);
}

EncoderCheckpoint random_checkpoint(const EncoderConfig& cfg) {
  return make_checkpoint(Encoder(cfg), 0, "random", {{"init_seed", cfg.seed}});
}

ProbeReport pretrain_and_probe(const PreparedDataset& pretrain_data, const PreparedDataset& probe_data,
                               const EncoderConfig& enc_cfg, const OptimConfig& optim_cfg, const ProbeConfig& probe_cfg,
                               bool random_init) {
  const EncoderCheckpoint ckpt =
      random_init ? random_checkpoint(enc_cfg) : pretrain(pretrain_data, enc_cfg, optim_cfg).checkpoint;
  return run_probe_protocol(ckpt, probe_data, probe_cfg);
}

std::vector<SweepRow> sigma_sweep(const PreparedDataset& pretrain_data, const PreparedDataset& probe_data,
                                  const EncoderConfig& enc_cfg, const OptimConfig& optim_cfg,
                                  const ProbeConfig& probe_cfg, const std::vector<double>& sigmas,
                                  const std::vector<std::uint64_t>& seeds) {
  if (sigmas.empty()) throw ConfigError("sigma_sweep: empty sigma list");
  if (seeds.empty()) throw ConfigError("sigma_sweep: empty seed list");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("sigma_sweep: sigma values must be positive");
  }
  const std::size_t cells = sigmas.size() * seeds.size();
  std::vector<ProbeReport> reports(cells);
  parallel_for(cells, [&](std::size_t c) {
    const double sigma = sigmas[c / seeds.size()];
    const std::uint64_t seed = seeds[c % seeds.size()];
    EncoderConfig enc = enc_cfg;
    enc.seed = seed;
    OptimConfig opt = optim_cfg;
    opt.seed = seed;
    opt.loss.kind = LossKind::wsp;
    opt.loss.sigma = sigma;
    ProbeConfig probe = probe_cfg;
    probe.seed = seed;
    reports[c] = pretrain_and_probe(pretrain_data, probe_data, enc, opt, probe, false);
  });

  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    std::vector<double> aucs, baccs;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      for (const FoldMetrics& f : reports[i * seeds.size() + k].folds) {
        aucs.push_back(f.auc_patient);
        baccs.push_back(f.bacc);
      }
    }
    rows.push_back({sigmas[i], mean(aucs), stddev(aucs), mean(baccs), stddev(baccs), seeds.size()});
  }
  return rows;
}

std::vector<MetricsRow> metrics_rows(const std::string& method, std::optional<double> sigma, const ProbeReport& report) {
  std::vector<MetricsRow> rows;
  std::vector<double> slice_aucs;
  for (const FoldMetrics& f : report.folds) {
    rows.push_back({method, sigma, std::to_string(f.fold), f.auc_patient, f.auc_slice, f.bacc});
    slice_aucs.push_back(f.auc_slice);
  }
  rows.push_back({method, sigma, "mean", report.auc_mean, mean(slice_aucs), report.bacc_mean});
  return rows;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out = open_csv(path);
  out << "method,sigma,fold,auc_patient,auc_slice,bacc\n";
  for (const MetricsRow& r : rows) {
    out << r.method << ',' << (r.sigma ? format_real(*r.sigma) : std::string()) << ',' << r.fold << ','
        << format_real(r.auc_patient) << ',' << format_real(r.auc_slice) << ',' << format_real(r.bacc) << '\n';
  }
  finish_csv(out, path);
}

void write_embeddings_csv(const std::filesystem::path& path, const RepresentationTable& table) {
  std::ofstream out = open_csv(path);
  const std::size_t d = table.features.rank() == 2 ? table.features.extent(1) : 0;
  out << "patient_id,slice_id,d,y_weak,y_strong";
  for (std::size_t c = 0; c < d; ++c) out << ",r" << c;
  out << '\n';
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.patient_id[r] << ',' << table.slice_id[r] << ',' << format_real(table.d[r]) << ','
        << table.y_weak[r] << ',' << (table.y_strong[r] ? std::to_string(*table.y_strong[r]) : std::string());
    for (std::size_t c = 0; c < d; ++c) out << ',' << format_real(table.features.at(r, c));
    out << '\n';
  }
  finish_csv(out, path);
}

void write_pca_csv(const std::filesystem::path& path, const RepresentationTable& table, const PcaResult& pca) {
  if (pca.coordinates.rank() != 2 || pca.coordinates.extent(0) != table.size() || pca.coordinates.extent(1) < 2) {
    throw DimensionError("write_pca_csv: need two coordinates per table row");
  }
  std::ofstream out = open_csv(path);
  out << "# explained_variance: " << format_real(pca.explained_variance[0]) << ','
      << format_real(pca.explained_variance[1]) << '\n';
  out << "patient_id,slice_id,d,y_strong,pc1,pc2\n";
  for (std::size_t r = 0; r < table.size(); ++r) {
    out << table.patient_id[r] << ',' << table.slice_id[r] << ',' << format_real(table.d[r]) << ','
        << (table.y_strong[r] ? std::to_string(*table.y_strong[r]) : std::string()) << ','
        << format_real(pca.coordinates.at(r, 0)) << ',' << format_real(pca.coordinates.at(r, 1)) << '\n';
  }
  finish_csv(out, path);
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out = open_csv(path);
  out << "sigma,auc_mean,auc_std,bacc_mean,bacc_std,runs\n";
  for (const SweepRow& r : rows) {
    out << format_real(r.sigma) << ',' << format_real(r.auc_mean) << ',' << format_real(r.auc_std) << ','
        << format_real(r.bacc_mean) << ',' << format_real(r.bacc_std) << ',' << r.runs << '\n';
  }
  finish_csv(out, path);
}

}  // namespace wsp
