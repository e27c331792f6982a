#include "wsp/kernels.hpp"

#include <cmath>

#include "wsp/error.hpp"

namespace wsp {

std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::dirac: return "dirac";
    case KernelKind::composite: return "composite";
    case KernelKind::constant: return "constant";
  }
  return "?";
}

KernelKind kernel_kind_from_string(const std::string& name) {
  if (name == "gaussian") return KernelKind::gaussian;
  if (name == "dirac") return KernelKind::dirac;
  if (name == "composite") return KernelKind::composite;
  if (name == "constant") return KernelKind::constant;
  throw ConfigError("unknown kernel kind '" + name + "'");
}

void KernelConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ConfigError("kernel sigma must be a positive finite number, got " + std::to_string(sigma));
  }
}

double gaussian_weight(double d_a, double d_b, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("gaussian_weight: sigma must be positive, got " + std::to_string(sigma));
  const double u = d_a - d_b;
  return std::exp(-(u * u) / (2.0 * sigma * sigma));
}

double dirac_weight(int y_a, int y_b) { return y_a == y_b ? 1.0 : 0.0; }

double composite_weight(int y_a, int y_b, double d_a, double d_b, double sigma) {
  const double g = gaussian_weight(d_a, d_b, sigma);
  return dirac_weight(y_a, y_b) * g;
}

double kernel_weight(const KernelConfig& cfg, int y_a, int y_b, double d_a, double d_b) {
  switch (cfg.kind) {
    case KernelKind::gaussian: return gaussian_weight(d_a, d_b, cfg.sigma);
    case KernelKind::dirac: return dirac_weight(y_a, y_b);
    case KernelKind::composite: return composite_weight(y_a, y_b, d_a, d_b, cfg.sigma);
    case KernelKind::constant: return 1.0;
  }
  return 0.0;
}

std::optional<IndexWeights> normalize_over_positives(const IndexWeights& weights) {
  double total = 0.0;
  for (const auto& [index, w] : weights) {
    if (w < 0.0 || !std::isfinite(w)) throw DomainError("kernel weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) return std::nullopt;
  IndexWeights out;
  out.reserve(weights.size());
  for (const auto& [index, w] : weights) out.emplace_back(index, w / total);
  return out;
}

}  // namespace wsp
