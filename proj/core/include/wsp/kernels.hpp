#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wsp {

enum class KernelKind { gaussian, dirac, composite, constant };

std::string to_string(KernelKind kind);
KernelKind kernel_kind_from_string(const std::string& name);

struct KernelConfig {
  /// Bandwidth of the depth kernel, exp(-(da - db)^2 / (2 sigma^2)).
  double sigma = 0.1;
  KernelKind kind = KernelKind::composite;

  void validate() const;
};

/// Unnormalized Gaussian on depth. Result lies in (0, 1]; equals 1 when da == db.
double gaussian_weight(double d_a, double d_b, double sigma);

/// 1 if the labels match, else 0.
double dirac_weight(int y_a, int y_b);

/// dirac_weight * gaussian_weight.
double composite_weight(int y_a, int y_b, double d_a, double d_b, double sigma);

/// Dispatch on cfg.kind. `constant` always returns 1.
double kernel_weight(const KernelConfig& cfg, int y_a, int y_b, double d_a, double d_b);

using IndexWeights = std::vector<std::pair<std::size_t, double>>;

/// Divides each weight by the total. Returns nullopt when the set is empty or
/// sums to zero; callers treat that as "this anchor contributes no loss".
std::optional<IndexWeights> normalize_over_positives(const IndexWeights& weights);

}  // namespace wsp
