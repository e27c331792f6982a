#include "wsp/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "wsp/error.hpp"
#include "wsp/rng.hpp"

namespace wsp {

namespace {

double sample_bilinear(std::span<const double> px, std::size_t h, std::size_t w, double y, double x) {
  x = std::clamp(x, 0.0, static_cast<double>(w - 1));
  y = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(x);
  const auto y0 = static_cast<std::size_t>(y);
  const std::size_t x1 = std::min(x0 + 1, w - 1);
  const std::size_t y1 = std::min(y0 + 1, h - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = px[y0 * w + x0] * (1.0 - fx) + px[y0 * w + x1] * fx;
  const double bottom = px[y1 * w + x0] * (1.0 - fx) + px[y1 * w + x1] * fx;
  return top * (1.0 - fy) + bottom * fy;
}

void check_image(std::span<const double> pixels, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0 || pixels.size() != h * w) {
    throw DimensionError("image of " + std::to_string(pixels.size()) + " pixels is not " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
}

}  // namespace

void AugmentConfig::validate() const {
  if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) throw ConfigError("rotation_deg must lie in [0, 180]");
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0)) {
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1");
  }
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0, 1]");
}

std::vector<double> flip_horizontal(std::span<const double> pixels, std::size_t h, std::size_t w) {
  check_image(pixels, h, w);
  std::vector<double> out(pixels.size());
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = pixels[i * w + (w - 1 - j)];
  }
  return out;
}

std::vector<double> augment(std::span<const double> pixels, std::size_t h, std::size_t w, const AugmentConfig& cfg,
                            std::uint64_t draw_seed) {
  check_image(pixels, h, w);
  cfg.validate();
  if (!cfg.enabled) return {pixels.begin(), pixels.end()};

  Rng rng(draw_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const bool flip = unit(rng) < cfg.flip_prob;
  const double angle = (2.0 * unit(rng) - 1.0) * cfg.rotation_deg * std::numbers::pi / 180.0;
  const double scale = cfg.crop_scale_min + (cfg.crop_scale_max - cfg.crop_scale_min) * unit(rng);
  const double side = std::sqrt(scale);
  const double fw = static_cast<double>(w);
  const double fh = static_cast<double>(h);
  const double ox = (fw - side * fw) * unit(rng);
  const double oy = (fh - side * fh) * unit(rng);

  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double cx = (fw - 1.0) / 2.0;
  const double cy = (fh - 1.0) / 2.0;

  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < h; ++i) {
    const double yr = oy + (static_cast<double>(i) + 0.5) * side - 0.5;
    for (std::size_t j = 0; j < w; ++j) {
      const double xr = ox + (static_cast<double>(j) + 0.5) * side - 0.5;
      const double dx = xr - cx;
      const double dy = yr - cy;
      double xf = cx + c * dx + s * dy;
      const double yf = cy - s * dx + c * dy;
      if (flip) xf = (fw - 1.0) - xf;
      out[i * w + j] = sample_bilinear(pixels, h, w, yf, xf);
    }
  }
  return out;
}

ViewMeta view_meta(const PreparedSlice& slice) {
  return ViewMeta{slice.y_weak, slice.d, slice.slice_id, slice.patient_id};
}

ViewPair make_views(const PreparedSlice& slice, std::size_t h, std::size_t w, const AugmentConfig& cfg,
                    std::uint64_t seed) {
  const auto id = static_cast<std::uint64_t>(slice.slice_id);
  return ViewPair{augment(slice.pixels, h, w, cfg, derive_seed(seed, {id, 0})),
                  augment(slice.pixels, h, w, cfg, derive_seed(seed, {id, 1})), view_meta(slice)};
}

ViewBatch make_view_batch(const PreparedDataset& dataset, std::span<const std::size_t> batch,
                          const AugmentConfig& cfg, std::uint64_t seed) {
  const std::size_t b = batch.size();
  const std::size_t hw = dataset.height * dataset.width;
  ViewBatch out{Tensor({2 * b, 1, dataset.height, dataset.width}), {}};
  out.meta.views.resize(2 * b);
  for (std::size_t k = 0; k < b; ++k) {
    const PreparedSlice& slice = dataset.slices.at(batch[k]);
    // Position in the batch keys the draw so a slice sampled twice gets distinct views.
    const std::uint64_t view_seed = derive_seed(seed, {k});
    ViewPair pair = make_views(slice, dataset.height, dataset.width, cfg, view_seed);
    std::copy(pair.view_a.begin(), pair.view_a.end(), out.images.data() + k * hw);
    std::copy(pair.view_b.begin(), pair.view_b.end(), out.images.data() + (b + k) * hw);
    out.meta.views[k] = pair.meta;
    out.meta.views[b + k] = pair.meta;
  }
  return out;
}

}  // namespace wsp
