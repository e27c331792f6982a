#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "wsp/dataset.hpp"
#include "wsp/encoder.hpp"
#include "wsp/pca.hpp"
#include "wsp/probe.hpp"
#include "wsp/trainer.hpp"

namespace wsp {

/// One row per retained slice, encoded without augmentation.
struct RepresentationTable {
  std::vector<std::int64_t> patient_id;
  std::vector<std::int64_t> slice_id;
  std::vector<double> d;
  std::vector<int> y_weak;
  std::vector<std::optional<int>> y_strong;
  Tensor features;  ///< rows x D

  std::size_t size() const noexcept { return patient_id.size(); }
};

RepresentationTable extract_representations(const Encoder& encoder, const PreparedDataset& dataset);
RepresentationTable extract_representations(const EncoderCheckpoint& checkpoint, const PreparedDataset& dataset);

/// Same rows with a different feature matrix (e.g. PCA coordinates).
RepresentationTable with_features(const RepresentationTable& table, Tensor features);

struct FoldMetrics {
  std::size_t fold = 0;
  double auc_patient = 0.0;
  double auc_slice = 0.0;
  double bacc = 0.0;
};

struct ProbeReport {
  std::vector<FoldMetrics> folds;
  double auc_mean = 0.0;
  double auc_std = 0.0;
  double bacc_mean = 0.0;
  double bacc_std = 0.0;
  /// Held-out aggregated probability of every patient.
  std::map<std::int64_t, double> patient_probability;
  nlohmann::json config;
};

nlohmann::json to_json(const ProbeConfig& cfg);
ProbeConfig probe_config_from_json(const nlohmann::json& j);

/// Stratified k-fold over patients by y_strong. Each fold fits the probe on
/// the training patients' slices, averages test-slice probabilities per
/// patient and scores AUC and bACC (threshold 0.5) at patient level.
ProbeReport run_probe_protocol(const RepresentationTable& table, const ProbeConfig& cfg);
ProbeReport run_probe_protocol(const EncoderCheckpoint& checkpoint, const PreparedDataset& dataset,
                               const ProbeConfig& cfg);

/// Untrained encoder with the given seed, as a checkpoint.
EncoderCheckpoint random_checkpoint(const EncoderConfig& cfg);

/// Pretrain on `pretrain_data` (or skip when `random_init`) and probe on `probe_data`.
ProbeReport pretrain_and_probe(const PreparedDataset& pretrain_data, const PreparedDataset& probe_data,
                               const EncoderConfig& enc_cfg, const OptimConfig& optim_cfg, const ProbeConfig& probe_cfg,
                               bool random_init);

struct SweepRow {
  double sigma = 0.0;
  /// Statistics over every (seed, fold) cell.
  double auc_mean = 0.0;
  double auc_std = 0.0;
  double bacc_mean = 0.0;
  double bacc_std = 0.0;
  std::size_t runs = 0;
};

inline const std::vector<double> kDefaultSweepSigmas = {0.01, 0.1, 0.2, 0.3, 0.5};

/// WSP pretraining and probing per sigma. Every sigma reuses the same seeds:
/// seed s drives the encoder init, the sampler/augmentation and the folds.
std::vector<SweepRow> sigma_sweep(const PreparedDataset& pretrain_data, const PreparedDataset& probe_data,
                                  const EncoderConfig& enc_cfg, const OptimConfig& optim_cfg,
                                  const ProbeConfig& probe_cfg, const std::vector<double>& sigmas = kDefaultSweepSigmas,
                                  const std::vector<std::uint64_t>& seeds = {0});

struct MetricsRow {
  std::string method;
  std::optional<double> sigma;
  std::string fold;
  double auc_patient = 0.0;
  double auc_slice = 0.0;
  double bacc = 0.0;
};

/// Per-fold rows followed by a "mean" row.
std::vector<MetricsRow> metrics_rows(const std::string& method, std::optional<double> sigma, const ProbeReport& report);

/// `method,sigma,fold,auc_patient,auc_slice,bacc`
void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);
/// `patient_id,slice_id,d,y_weak,y_strong,r0..r{D-1}`
void write_embeddings_csv(const std::filesystem::path& path, const RepresentationTable& table);
/// `# explained_variance: a,b` then `patient_id,slice_id,d,y_strong,pc1,pc2`
void write_pca_csv(const std::filesystem::path& path, const RepresentationTable& table, const PcaResult& pca);
/// `sigma,auc_mean,auc_std,bacc_mean,bacc_std,runs`
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

}  // namespace wsp
