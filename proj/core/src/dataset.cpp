#include "wsp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "binary_io.hpp"
#include "wsp/error.hpp"
#include "wsp/json_util.hpp"
#include "wsp/rng.hpp"

namespace wsp {

namespace {

constexpr std::string_view kVolumeMagic = "WSPV";
constexpr std::uint16_t kVolumeVersion = 1;
constexpr int kNumBins = 4;

std::string volume_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vol_%04zu", index);
  return buf;
}

int severity_bin(double u, const std::vector<double>& priors) {
  double edge = 0.0;
  for (int b = 0; b < kNumBins - 1; ++b) {
    edge += priors[static_cast<std::size_t>(b)];
    if (u < edge) return b;
  }
  return kNumBins - 1;
}

struct Nuisance {
  double scale;
  double aspect;
  double orientation;
  double cx;
  double cy;
  double intensity;
  double phase1;
  double phase2;
};

void render_slice(const GeneratorConfig& cfg, const Nuisance& nz, double amplitude, double d, Rng& rng,
                  std::vector<float>& out) {
  const std::size_t h = cfg.height;
  const std::size_t w = cfg.width;
  out.assign(h * w, 0.0f);
  const double a = cfg.organ_radius * nz.scale * (1.0 + cfg.depth_gain * (d - 0.5));
  const double b = a * nz.aspect;
  const double c = std::cos(nz.orientation);
  const double s = std::sin(nz.orientation);
  const double edge = 1.0 / static_cast<double>(std::max(h, w));
  const double drift = 0.6 * std::numbers::pi * d;
  const auto h1 = static_cast<double>(cfg.harmonics[0]);
  const auto h2 = static_cast<double>(cfg.harmonics[1]);
  std::normal_distribution<double> noise(0.0, cfg.noise_std);
  for (std::size_t i = 0; i < h; ++i) {
    const double y = (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(h) - 1.0;
    for (std::size_t j = 0; j < w; ++j) {
      const double x = (2.0 * static_cast<double>(j) + 1.0) / static_cast<double>(w) - 1.0;
      double hu = -1000.0;
      if (x * x + y * y < 0.92 * 0.92) {
        const double dx = x - nz.cx;
        const double dy = y - nz.cy;
        const double u = (c * dx + s * dy) / a;
        const double v = (-s * dx + c * dy) / b;
        const double r = std::sqrt(u * u + v * v);
        const double phi = std::atan2(v, u);
        const double boundary =
            1.0 + amplitude * (0.6 * std::sin(h1 * phi + nz.phase1 + drift) + 0.4 * std::sin(h2 * phi + nz.phase2));
        const double inside = 1.0 / (1.0 + std::exp(-(boundary - r) * a / edge));
        hu = cfg.body_hu + inside * (cfg.organ_hu + nz.intensity - cfg.body_hu);
      }
      out[i * w + j] = static_cast<float>(hu + noise(rng));
    }
  }
}

Volume make_volume(const GeneratorConfig& cfg, std::uint64_t seed, std::size_t index) {
  Rng rng = make_rng(seed, {0x766f6cULL, index});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Volume vol;
  vol.volume_id = volume_name(index);
  vol.patient_id = static_cast<std::int64_t>(index);
  vol.height = cfg.height;
  vol.width = cfg.width;
  vol.v_max = static_cast<std::uint32_t>(cfg.slices_per_volume - 1);

  const double u = unit(rng);
  const int true_bin = severity_bin(u, cfg.class_priors);
  int weak = true_bin;
  if (unit(rng) < cfg.label_noise) {
    if (weak == 0) weak = 1;
    else if (weak == kNumBins - 1) weak = kNumBins - 2;
    else weak += unit(rng) < 0.5 ? -1 : 1;
  }
  int strong = u > 0.5 ? 1 : 0;
  if (unit(rng) < cfg.label_noise / 2.0) strong = 1 - strong;
  vol.y_weak = weak;
  vol.y_strong = strong;
  vol.latent_severity = u;

  Nuisance nz{};
  nz.scale = std::clamp(1.0 + cfg.scale_jitter * gauss(rng), 0.6, 1.4);
  nz.aspect = 0.7 + 0.25 * unit(rng);
  nz.orientation = std::numbers::pi * unit(rng);
  nz.cx = cfg.center_jitter * gauss(rng);
  nz.cy = cfg.center_jitter * gauss(rng);
  nz.intensity = cfg.intensity_jitter * gauss(rng);
  nz.phase1 = 2.0 * std::numbers::pi * unit(rng);
  nz.phase2 = 2.0 * std::numbers::pi * unit(rng);
  const double amplitude = cfg.irregularity[static_cast<std::size_t>(true_bin)];

  vol.slices.resize(cfg.slices_per_volume);
  for (std::size_t k = 0; k < cfg.slices_per_volume; ++k) {
    Slice& sl = vol.slices[k];
    sl.p = static_cast<std::uint32_t>(k);
    sl.d = normalize_depth(sl.p, vol.v_max);
    render_slice(cfg, nz, amplitude, sl.d, rng, sl.pixels);
  }
  return vol;
}

}  // namespace

void Volume::validate() const {
  if (v_max == 0) throw ContractError("volume " + volume_id + ": V_max must be positive");
  if (height == 0 || width == 0) throw ContractError("volume " + volume_id + ": empty image size");
  for (std::size_t k = 0; k < slices.size(); ++k) {
    if (slices[k].p > v_max) {
      throw ContractError("volume " + volume_id + ": slice depth " + std::to_string(slices[k].p) + " exceeds V_max " +
                          std::to_string(v_max));
    }
    if (k > 0 && slices[k].p <= slices[k - 1].p) {
      throw ContractError("volume " + volume_id + ": slice depths must be strictly increasing");
    }
    if (slices[k].pixels.size() != height * width) {
      throw DimensionError("volume " + volume_id + ": slice " + std::to_string(k) + " has wrong pixel count");
    }
  }
  if (y_weak < 0 || y_weak >= kNumBins) throw ContractError("volume " + volume_id + ": y_weak outside {0,1,2,3}");
  if (y_strong && *y_strong != 0 && *y_strong != 1) throw ContractError("volume " + volume_id + ": y_strong not binary");
}

double normalize_depth(std::int64_t p, std::int64_t v_max) {
  if (v_max <= 0) throw DomainError("normalize_depth: V_max must be positive, got " + std::to_string(v_max));
  if (p < 0 || p > v_max) {
    throw DomainError("normalize_depth: p=" + std::to_string(p) + " outside [0, " + std::to_string(v_max) + "]");
  }
  return static_cast<double>(p) / static_cast<double>(v_max);
}

std::pair<std::size_t, std::size_t> central_window(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("central slice fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  if (n == 0) throw ContractError("select_central_slices: empty volume");
  // Round half up; the epsilon absorbs representation error (0.7 * 45 is 31.4999...).
  auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 0.5 + 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  return {k, (n - k) / 2};
}

Volume select_central_slices(const Volume& volume, double fraction) {
  const auto [k, start] = central_window(volume.slices.size(), fraction);
  Volume out = volume;
  out.slices.assign(volume.slices.begin() + static_cast<std::ptrdiff_t>(start),
                    volume.slices.begin() + static_cast<std::ptrdiff_t>(start + k));
  return out;
}

double clip_intensity(double value, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("clip_intensity: need lo < hi");
  return (std::clamp(value, lo, hi) - lo) / (hi - lo);
}

std::vector<double> clip_intensity(std::span<const float> pixels, double lo, double hi) {
  if (!(lo < hi)) throw ContractError("clip_intensity: need lo < hi");
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = clip_intensity(pixels[i], lo, hi);
  return out;
}

void GeneratorConfig::validate() const {
  if (n_volumes == 0) throw ConfigError("generator: n_volumes must be positive");
  if (slices_per_volume < 2) throw ConfigError("generator: need at least 2 slices per volume");
  if (height < 4 || width < 4) throw ConfigError("generator: image must be at least 4x4");
  if (class_priors.size() != kNumBins || irregularity.size() != kNumBins) {
    throw ConfigError("generator: class_priors and irregularity need exactly 4 entries");
  }
  double total = 0.0;
  for (double p : class_priors) {
    if (!(p > 0.0)) throw ConfigError("generator: class priors must be positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("generator: class priors must sum to 1");
  if (harmonics.size() != 2 || harmonics[0] < 1 || harmonics[1] < 1) {
    throw ConfigError("generator: harmonics needs two positive frequencies");
  }
  for (double a : irregularity) {
    if (!(a >= 0.0 && a < 0.5)) throw ConfigError("generator: irregularity amplitudes must lie in [0, 0.5)");
  }
  if (!(label_noise >= 0.0 && label_noise <= 1.0)) throw ConfigError("generator: label noise must lie in [0, 1]");
  if (!(noise_std >= 0.0) || !(scale_jitter >= 0.0) || !(intensity_jitter >= 0.0) || !(center_jitter >= 0.0)) {
    throw ConfigError("generator: noise and jitter magnitudes must be non-negative");
  }
  if (!(organ_radius > 0.0 && organ_radius < 1.0)) throw ConfigError("generator: organ_radius must lie in (0, 1)");
  if (!(depth_gain >= 0.0 && depth_gain < 2.0)) throw ConfigError("generator: depth_gain must lie in [0, 2)");
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  return {
      {"n_volumes", cfg.n_volumes},
      {"slices_per_volume", cfg.slices_per_volume},
      {"height", cfg.height},
      {"width", cfg.width},
      {"class_priors", cfg.class_priors},
      {"label_noise", cfg.label_noise},
      {"irregularity", cfg.irregularity},
      {"harmonics", cfg.harmonics},
      {"organ_radius", cfg.organ_radius},
      {"depth_gain", cfg.depth_gain},
      {"noise_std", cfg.noise_std},
      {"organ_hu", cfg.organ_hu},
      {"body_hu", cfg.body_hu},
      {"scale_jitter", cfg.scale_jitter},
      {"intensity_jitter", cfg.intensity_jitter},
      {"center_jitter", cfg.center_jitter},
  };
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig cfg;
  StrictObject obj(j, "generator");
  obj.read("n_volumes", cfg.n_volumes)
      .read("slices_per_volume", cfg.slices_per_volume)
      .read("height", cfg.height)
      .read("width", cfg.width)
      .read("class_priors", cfg.class_priors)
      .read("label_noise", cfg.label_noise)
      .read("irregularity", cfg.irregularity)
      .read("harmonics", cfg.harmonics)
      .read("organ_radius", cfg.organ_radius)
      .read("depth_gain", cfg.depth_gain)
      .read("noise_std", cfg.noise_std)
      .read("organ_hu", cfg.organ_hu)
      .read("body_hu", cfg.body_hu)
      .read("scale_jitter", cfg.scale_jitter)
      .read("intensity_jitter", cfg.intensity_jitter)
      .read("center_jitter", cfg.center_jitter)
      .finish();
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const DatasetManifest& manifest) {
  nlohmann::json volumes = nlohmann::json::array();
  for (const auto& r : manifest.volumes) {
    nlohmann::json rec = {{"id", r.id},
                          {"file", r.file},
                          {"patient_id", r.patient_id},
                          {"v_max", r.v_max},
                          {"y_weak", r.y_weak},
                          {"y_strong", r.y_strong ? nlohmann::json(*r.y_strong) : nlohmann::json(nullptr)}};
    if (r.latent_severity) rec["latent_severity"] = *r.latent_severity;
    volumes.push_back(std::move(rec));
  }
  return {{"version", manifest.version}, {"volumes", volumes}, {"generator", manifest.generator}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw FormatError("manifest: unsupported version " + std::to_string(m.version), 0);
    for (const auto& v : j.at("volumes")) {
      VolumeRecord r;
      r.id = v.at("id").get<std::string>();
      r.file = v.at("file").get<std::string>();
      r.patient_id = v.at("patient_id").get<std::int64_t>();
      r.v_max = v.at("v_max").get<std::uint32_t>();
      r.y_weak = v.at("y_weak").get<int>();
      if (v.contains("y_strong") && !v["y_strong"].is_null()) r.y_strong = v["y_strong"].get<int>();
      if (v.contains("latent_severity") && !v["latent_severity"].is_null()) {
        r.latent_severity = v["latent_severity"].get<double>();
      }
      m.volumes.push_back(std::move(r));
    }
    m.generator = j.value("generator", nlohmann::json(nullptr));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what(), 0);
  }
  std::set<std::string> ids;
  for (const auto& r : m.volumes) {
    if (!ids.insert(r.id).second) throw FormatError("manifest: duplicate volume id '" + r.id + "'", 0);
  }
  return m;
}

Dataset generate_synthetic_dataset(const GeneratorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Dataset ds;
  ds.volumes.reserve(cfg.n_volumes);
  for (std::size_t i = 0; i < cfg.n_volumes; ++i) ds.volumes.push_back(make_volume(cfg, seed, i));
  ds.manifest.generator = to_json(cfg);
  ds.manifest.generator["seed"] = seed;
  for (const auto& v : ds.volumes) {
    ds.manifest.volumes.push_back(
        {v.volume_id, v.volume_id + ".wspv", v.patient_id, v.v_max, v.y_weak, v.y_strong, v.latent_severity});
  }
  return ds;
}

std::vector<std::uint8_t> encode_volume(const Volume& volume) {
  volume.validate();
  detail::ByteWriter w;
  w.bytes(kVolumeMagic);
  w.u16(kVolumeVersion);
  w.u32(static_cast<std::uint32_t>(volume.height));
  w.u32(static_cast<std::uint32_t>(volume.width));
  w.u32(static_cast<std::uint32_t>(volume.slices.size()));
  w.u32(volume.v_max);
  for (const auto& sl : volume.slices) {
    w.u32(sl.p);
    for (float px : sl.pixels) w.f32(px);
  }
  return w.buffer();
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "volume");
  if (r.bytes(kVolumeMagic.size()) != kVolumeMagic) r.fail("bad magic, expected WSPV");
  const std::uint16_t version = r.u16();
  if (version != kVolumeVersion) r.fail("unsupported volume version " + std::to_string(version));
  Volume vol;
  vol.height = r.u32();
  vol.width = r.u32();
  const std::uint32_t n = r.u32();
  vol.v_max = r.u32();
  if (vol.height == 0 || vol.width == 0 || vol.v_max == 0) r.fail("zero image extent or V_max");
  vol.slices.resize(n);
  std::uint32_t previous = 0;
  for (std::uint32_t k = 0; k < n; ++k) {
    Slice& sl = vol.slices[k];
    sl.p = r.u32();
    if (sl.p > vol.v_max || (k > 0 && sl.p <= previous)) r.fail("slice depths must increase and stay within V_max");
    previous = sl.p;
    sl.d = normalize_depth(sl.p, vol.v_max);
    sl.pixels.resize(vol.height * vol.width);
    for (float& px : sl.pixels) px = r.f32();
  }
  if (!r.at_end()) r.fail("trailing bytes after slices");
  return vol;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  if (dataset.manifest.volumes.size() != dataset.volumes.size()) {
    throw ContractError("save_dataset: manifest and volume counts differ");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
  for (std::size_t i = 0; i < dataset.volumes.size(); ++i) {
    detail::write_file_bytes(dir / dataset.manifest.volumes[i].file, encode_volume(dataset.volumes[i]));
  }
  const std::filesystem::path manifest_path = dir / "manifest.json";
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + manifest_path.string() + "' for writing");
  out << to_json(dataset.manifest).dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + manifest_path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const std::filesystem::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open '" + manifest_path.string() + "' for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest '" + manifest_path.string() + "': " + e.what(), e.byte);
  }
  Dataset ds;
  ds.manifest = manifest_from_json(j);
  for (const auto& rec : ds.manifest.volumes) {
    const std::filesystem::path file = dir / rec.file;
    if (!std::filesystem::exists(file)) throw IoError("volume file '" + file.string() + "' listed in manifest is missing");
    Volume vol;
    try {
      vol = decode_volume(detail::read_file_bytes(file));
    } catch (const FormatError& e) {
      throw FormatError(file.string() + ": " + e.what(), e.offset());
    }
    if (vol.v_max != rec.v_max) {
      throw FormatError(file.string() + ": V_max " + std::to_string(vol.v_max) + " disagrees with manifest", 18);
    }
    vol.volume_id = rec.id;
    vol.patient_id = rec.patient_id;
    vol.y_weak = rec.y_weak;
    vol.y_strong = rec.y_strong;
    vol.latent_severity = rec.latent_severity;
    vol.validate();
    ds.volumes.push_back(std::move(vol));
  }
  return ds;
}

void PrepareConfig::validate() const {
  if (!(central_fraction > 0.0 && central_fraction <= 1.0)) throw ConfigError("central_fraction must lie in (0, 1]");
  if (!(clip_lo < clip_hi)) throw ConfigError("clip_lo must be below clip_hi");
}

PreparedDataset prepare_dataset(const Dataset& dataset, const PrepareConfig& cfg) {
  cfg.validate();
  if (dataset.volumes.empty()) throw ContractError("prepare_dataset: dataset has no volumes");
  PreparedDataset out;
  out.height = dataset.volumes.front().height;
  out.width = dataset.volumes.front().width;
  std::map<std::int64_t, std::size_t> patient_index;
  for (const auto& vol : dataset.volumes) {
    if (vol.height != out.height || vol.width != out.width) {
      throw DimensionError("prepare_dataset: volume " + vol.volume_id + " has a different image size");
    }
    auto [it, fresh] = patient_index.emplace(vol.patient_id, out.patients.size());
    if (fresh) out.patients.push_back({vol.patient_id, vol.y_weak, vol.y_strong, {}});
    PatientEntry& patient = out.patients[it->second];
    if (patient.y_weak != vol.y_weak || patient.y_strong != vol.y_strong) {
      throw ContractError("prepare_dataset: patient " + std::to_string(vol.patient_id) + " has conflicting labels");
    }
    for (const auto& sl : select_central_slices(vol, cfg.central_fraction).slices) {
      PreparedSlice ps;
      ps.pixels = clip_intensity(sl.pixels, cfg.clip_lo, cfg.clip_hi);
      ps.patient_id = vol.patient_id;
      ps.slice_id = static_cast<std::int64_t>(out.slices.size());
      ps.p = sl.p;
      ps.d = sl.d;
      ps.y_weak = vol.y_weak;
      ps.y_strong = vol.y_strong;
      patient.slices.push_back(out.slices.size());
      out.slices.push_back(std::move(ps));
    }
  }
  return out;
}

}  // namespace wsp
