#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wsp {

/// One stored image with its integer depth. Pixels are raw intensities
/// (Hounsfield-like units), row-major H x W.
struct Slice {
  std::vector<float> pixels;
  std::uint32_t p = 0;
  double d = 0.0;
};

struct Volume {
  std::string volume_id;
  std::int64_t patient_id = 0;
  std::uint32_t v_max = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Slice> slices;
  int y_weak = 0;
  std::optional<int> y_strong;
  std::optional<double> latent_severity;

  /// Depths strictly increasing and within [0, v_max]; pixel counts match.
  void validate() const;
};

/// d = p / V_max. Throws DomainError when p is outside [0, V_max].
double normalize_depth(std::int64_t p, std::int64_t v_max);

/// Contiguous window of round(fraction * n) slices, trimming
/// floor((n - k) / 2) from the start and the rest from the end.
Volume select_central_slices(const Volume& volume, double fraction = 0.7);

/// Number of slices select_central_slices keeps and the first kept index.
std::pair<std::size_t, std::size_t> central_window(std::size_t n, double fraction);

/// Clamp to [lo, hi] then map affinely onto [0, 1].
double clip_intensity(double value, double lo = -100.0, double hi = 400.0);
std::vector<double> clip_intensity(std::span<const float> pixels, double lo = -100.0, double hi = 400.0);

struct GeneratorConfig {
  std::size_t n_volumes = 60;
  std::size_t slices_per_volume = 24;
  std::size_t height = 32;
  std::size_t width = 32;
  /// Prior mass of each severity quartile bin; defines the bin edges.
  std::vector<double> class_priors = {0.25, 0.25, 0.25, 0.25};
  /// Weak labels move to a neighbouring bin with probability rho; strong
  /// labels flip with probability rho / 2.
  double label_noise = 0.1;
  /// Boundary perturbation amplitude per true severity bin (fraction of radius).
  std::vector<double> irregularity = {0.0, 0.15, 0.3, 0.45};
  /// Angular frequencies of the two boundary harmonics (weights 0.6 and 0.4).
  std::vector<int> harmonics = {7, 11};
  /// Organ semi-major axis at mid depth, as a fraction of the half-width.
  double organ_radius = 0.6;
  /// Relative growth of the organ radius from d = 0 to d = 1.
  double depth_gain = 0.5;
  double noise_std = 12.0;
  double organ_hu = 90.0;
  double body_hu = 20.0;
  /// Spread of the per-patient nuisance factors.
  double scale_jitter = 0.15;
  double intensity_jitter = 10.0;
  double center_jitter = 0.08;

  void validate() const;
};

nlohmann::json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j);

struct VolumeRecord {
  std::string id;
  std::string file;
  std::int64_t patient_id = 0;
  std::uint32_t v_max = 1;
  int y_weak = 0;
  std::optional<int> y_strong;
  std::optional<double> latent_severity;
};

struct DatasetManifest {
  int version = 1;
  std::vector<VolumeRecord> volumes;
  /// Generator config echo plus "seed"; null for ingested data.
  nlohmann::json generator = nullptr;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& j);

struct Dataset {
  DatasetManifest manifest;
  std::vector<Volume> volumes;
};

/// Deterministic phantom cohort; every volume draws from its own seed stream.
Dataset generate_synthetic_dataset(const GeneratorConfig& cfg, std::uint64_t seed);

/// "WSPV" | u16 version | u32 H | u32 W | u32 n_slices | u32 V_max |
/// per slice: u32 p, H*W float32. Little-endian.
std::vector<std::uint8_t> encode_volume(const Volume& volume);
/// Fills the geometry and slices; labels come from the manifest.
Volume decode_volume(std::span<const std::uint8_t> bytes);

/// Writes manifest.json and one file per volume into `dir`.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

/// A retained, intensity-normalized slice ready for the encoder.
struct PreparedSlice {
  std::vector<double> pixels;
  std::int64_t patient_id = 0;
  std::int64_t slice_id = 0;
  std::uint32_t p = 0;
  double d = 0.0;
  int y_weak = 0;
  std::optional<int> y_strong;
};

struct PatientEntry {
  std::int64_t patient_id = 0;
  int y_weak = 0;
  std::optional<int> y_strong;
  std::vector<std::size_t> slices;  ///< indices into PreparedDataset::slices
};

struct PrepareConfig {
  double central_fraction = 0.7;
  double clip_lo = -100.0;
  double clip_hi = 400.0;

  void validate() const;
};

struct PreparedDataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<PreparedSlice> slices;
  std::vector<PatientEntry> patients;
};

/// Central-slice selection plus clipping. Volumes of one patient are pooled.
PreparedDataset prepare_dataset(const Dataset& dataset, const PrepareConfig& cfg = {});

}  // namespace wsp
