#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsp/dataset.hpp"
#include "wsp/losses.hpp"

namespace wsp {

struct AugmentConfig {
  /// Rotation angle is uniform in [-rotation_deg, rotation_deg].
  double rotation_deg = 15.0;
  /// Crop area fraction is uniform in [crop_scale_min, crop_scale_max].
  double crop_scale_min = 0.7;
  double crop_scale_max = 1.0;
  double flip_prob = 0.5;
  /// False reproduces inference mode: views equal the input.
  bool enabled = true;

  void validate() const;
};

/// Mirror columns of a row-major h x w image.
std::vector<double> flip_horizontal(std::span<const double> pixels, std::size_t h, std::size_t w);

/// Flip, rotate about the centre, then crop and resize back to h x w.
/// The three maps are composed and the source is sampled once, bilinearly,
/// with edge clamping. Deterministic in `draw_seed`.
std::vector<double> augment(std::span<const double> pixels, std::size_t h, std::size_t w, const AugmentConfig& cfg,
                            std::uint64_t draw_seed);

struct ViewPair {
  std::vector<double> view_a;
  std::vector<double> view_b;
  ViewMeta meta;
};

ViewPair make_views(const PreparedSlice& slice, std::size_t h, std::size_t w, const AugmentConfig& cfg,
                    std::uint64_t seed);

ViewMeta view_meta(const PreparedSlice& slice);

/// Two views per slice of `batch`, stacked as [all view_a; all view_b] into
/// a (2B) x 1 x h x w tensor, with matching metadata.
struct ViewBatch {
  Tensor images;
  BatchMeta meta;
};

ViewBatch make_view_batch(const PreparedDataset& dataset, std::span<const std::size_t> batch,
                          const AugmentConfig& cfg, std::uint64_t seed);

}  // namespace wsp
