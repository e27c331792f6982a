#pragma once

#include <cstdint>
#include <vector>

#include "wsp/losses.hpp"
#include "wsp/rng.hpp"

namespace wsp {

/// Two views per slice, labels in [0, classes), depths uniform in [0, 1].
/// Views of slice s sit at rows s and slices + s.
BatchMeta random_view_meta(Rng& rng, std::size_t slices, int classes);

struct GradcheckResult {
  LossKind kind = LossKind::wsp;
  std::size_t batches = 0;
  double max_rel_error = 0.0;
};

/// Analytic gradient of loss(l2_normalize(x)) against central differences on
/// random batches with M <= 8 views and D <= 16. The error of one batch is
/// max_i |g_i - f_i| / max(|g_i|, |f_i|, 1e-6).
GradcheckResult gradcheck_loss(LossKind kind, std::uint64_t seed, std::size_t batches = 20, double eps = 1e-5);

std::vector<GradcheckResult> gradcheck_all_losses(std::uint64_t seed, std::size_t batches = 20, double eps = 1e-5);

}  // namespace wsp
