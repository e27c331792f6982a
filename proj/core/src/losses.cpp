#include "wsp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "wsp/error.hpp"
#include "wsp/kernels.hpp"

namespace wsp {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::wsp: return "wsp";
    case LossKind::supcon: return "supcon";
    case LossKind::depth_aware: return "depth_aware";
    case LossKind::infonce: return "infonce";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "wsp") return LossKind::wsp;
  if (name == "supcon") return LossKind::supcon;
  if (name == "depth_aware" || name == "depth") return LossKind::depth_aware;
  if (name == "infonce" || name == "simclr") return LossKind::infonce;
  throw ConfigError("unknown loss kind '" + name + "'");
}

std::string to_string(DenominatorConvention convention) {
  return convention == DenominatorConvention::exclude_anchor ? "exclude_anchor" : "literal_paper";
}

DenominatorConvention denominator_from_string(const std::string& name) {
  if (name == "exclude_anchor") return DenominatorConvention::exclude_anchor;
  if (name == "literal_paper") return DenominatorConvention::literal_paper;
  throw ConfigError("unknown denominator convention '" + name + "'");
}

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("loss tau must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("loss sigma must be positive");
}

void BatchMeta::validate() const {
  std::map<std::int64_t, std::pair<int, double>> by_slice;
  for (std::size_t v = 0; v < views.size(); ++v) {
    const ViewMeta& m = views[v];
    if (!(m.d >= 0.0 && m.d <= 1.0)) {
      throw DomainError("view " + std::to_string(v) + " has depth " + std::to_string(m.d) + " outside [0,1]");
    }
    auto [it, inserted] = by_slice.try_emplace(m.slice_id, m.y, m.d);
    if (!inserted && (it->second.first != m.y || it->second.second != m.d)) {
      throw ContractError("views of slice " + std::to_string(m.slice_id) + " disagree on (y, d)");
    }
  }
}

Var similarity_matrix(Var z, double tau) {
  if (!(tau > 0.0)) throw ConfigError("similarity_matrix: tau must be positive");
  const Tensor& zv = z.value();
  if (zv.rank() != 2) throw DimensionError("similarity_matrix expects a rank-2 embedding matrix");
  const std::size_t rows = zv.extent(0), dim = zv.extent(1);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t c = 0; c < dim; ++c) sq += zv[r * dim + c] * zv[r * dim + c];
    if (!std::isfinite(sq)) {
      throw NumericalError("similarity_matrix: row " + std::to_string(r) + " is not finite");
    }
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw ContractError("similarity_matrix: row " + std::to_string(r) + " is not unit-norm");
    }
  }
  return scaled_gram(z, 1.0 / tau);
}

std::vector<std::size_t> positive_set(const BatchMeta& meta, std::size_t anchor) {
  if (anchor >= meta.size()) throw ContractError("positive_set: anchor index out of range");
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < meta.size(); ++i) {
    if (i != anchor && meta.views[i].y == meta.views[anchor].y) out.push_back(i);
  }
  return out;
}

Tensor positive_weights(const BatchMeta& meta, const LossConfig& cfg) {
  cfg.validate();
  const std::size_t m = meta.size();
  if (m < 2) throw ContractError("contrastive losses need at least 2 views, got " + std::to_string(m));
  Tensor weights({m, m});
  for (std::size_t t = 0; t < m; ++t) {
    const ViewMeta& anchor = meta.views[t];
    IndexWeights raw;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == t) continue;
      const ViewMeta& other = meta.views[i];
      switch (cfg.kind) {
        case LossKind::wsp:
          if (other.y == anchor.y) raw.emplace_back(i, composite_weight(anchor.y, other.y, anchor.d, other.d, cfg.sigma));
          break;
        case LossKind::supcon:
          if (other.y == anchor.y) raw.emplace_back(i, 1.0);
          break;
        case LossKind::depth_aware:
          raw.emplace_back(i, gaussian_weight(anchor.d, other.d, cfg.sigma));
          break;
        case LossKind::infonce:
          if (other.slice_id == anchor.slice_id) raw.emplace_back(i, 1.0);
          break;
      }
    }
    if (cfg.kind == LossKind::infonce && raw.empty()) {
      throw ContractError("infonce: view " + std::to_string(t) + " (slice " + std::to_string(anchor.slice_id) +
                          ") has no sibling view in the batch");
    }
    if (auto normalized = normalize_over_positives(raw)) {
      for (const auto& [i, w] : *normalized) weights.at(t, i) = w;
    }
  }
  return weights;
}

Var weighted_contrastive_loss(Var similarities, const Tensor& weights, DenominatorConvention convention) {
  const Tensor& s = similarities.value();
  if (s.rank() != 2 || s.extent(0) != s.extent(1)) {
    throw DimensionError("similarity matrix must be square, got " + shape_to_string(s.shape()));
  }
  const std::size_t m = s.extent(0);
  if (weights.shape() != s.shape()) {
    throw DimensionError("weights " + shape_to_string(weights.shape()) + " do not match similarities " +
                         shape_to_string(s.shape()));
  }
  const bool keep_anchor = convention == DenominatorConvention::literal_paper;

  // Per-anchor cache for the backward pass: shift, shifted exponentials and
  // the per-positive denominators.
  struct AnchorCache {
    std::size_t row;
    double shift;
    std::vector<double> expo;   // exp(S[t,j] - shift), 0 for j outside the candidate set
    std::vector<double> denom;  // sum over Den(t,i) of expo, indexed by i; only set for positives
  };
  std::vector<AnchorCache> anchors;
  double total = 0.0;

  std::vector<double> prefix(m + 1), suffix(m + 1);
  for (std::size_t t = 0; t < m; ++t) {
    double row_weight = 0.0;
    for (std::size_t i = 0; i < m; ++i) row_weight += weights.at(t, i);
    if (!(row_weight > 0.0)) continue;
    if (weights.at(t, t) != 0.0) throw ContractError("anchor cannot be its own positive");

    AnchorCache cache{t, -std::numeric_limits<double>::infinity(), std::vector<double>(m, 0.0),
                      std::vector<double>(m, 0.0)};
    for (std::size_t j = 0; j < m; ++j) {
      if (j != t || keep_anchor) cache.shift = std::max(cache.shift, s.at(t, j));
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (j != t || keep_anchor) cache.expo[j] = std::exp(s.at(t, j) - cache.shift);
    }
    // Den(t,i) sums exclude i, so use prefix/suffix sums instead of total - expo[i].
    prefix[0] = 0.0;
    for (std::size_t j = 0; j < m; ++j) prefix[j + 1] = prefix[j] + cache.expo[j];
    suffix[m] = 0.0;
    for (std::size_t j = m; j-- > 0;) suffix[j] = suffix[j + 1] + cache.expo[j];

    double anchor_loss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double w = weights.at(t, i);
      if (w == 0.0) continue;
      const double den = prefix[i] + suffix[i + 1];
      if (!(den > 0.0)) {
        throw ContractError("anchor " + std::to_string(t) + " has an empty denominator for positive " +
                            std::to_string(i) + " (batch too small for this convention)");
      }
      cache.denom[i] = den;
      anchor_loss += w * (cache.shift + std::log(den) - s.at(t, i));
    }
    total += anchor_loss;
    anchors.push_back(std::move(cache));
  }

  const double count = static_cast<double>(anchors.size());
  const double value = anchors.empty() ? 0.0 : total / count;

  Tape& tape = *similarities.tape();
  Var w_node = tape.constant(weights);
  return tape.record(Tensor::scalar(value), {similarities, w_node},
                     [m, count, anchors = std::move(anchors)](BackwardContext& ctx) {
                       if (!ctx.input_grads[0] || anchors.empty()) return;
                       const Tensor& w = *ctx.inputs[1];
                       Tensor& ds = *ctx.input_grads[0];
                       const double g = ctx.output_grad[0] / count;
                       for (const AnchorCache& a : anchors) {
                         const std::size_t t = a.row;
                         double c = 0.0;
                         for (std::size_t i = 0; i < m; ++i) {
                           if (a.denom[i] > 0.0) c += w.at(t, i) / a.denom[i];
                         }
                         for (std::size_t k = 0; k < m; ++k) {
                           const double wk = w.at(t, k);
                           const double own = a.denom[k] > 0.0 ? wk / a.denom[k] : 0.0;
                           ds.at(t, k) += g * (a.expo[k] * (c - own) - wk);
                         }
                       }
                     });
}

Var contrastive_loss(Var z, const BatchMeta& meta, const LossConfig& cfg) {
  cfg.validate();
  if (z.value().rank() != 2 || z.value().extent(0) != meta.size()) {
    throw DimensionError("embedding rows " + shape_to_string(z.value().shape()) + " do not match " +
                         std::to_string(meta.size()) + " views");
  }
  if (meta.size() < 2) throw ContractError("contrastive losses need at least 2 views");
  Tensor weights = positive_weights(meta, cfg);
  Var sims = similarity_matrix(z, cfg.tau);
  return weighted_contrastive_loss(sims, weights, cfg.denominator);
}

Var wsp_loss(Var z, const BatchMeta& meta, LossConfig cfg) {
  cfg.kind = LossKind::wsp;
  return contrastive_loss(z, meta, cfg);
}

Var supcon_loss(Var z, const BatchMeta& meta, LossConfig cfg) {
  cfg.kind = LossKind::supcon;
  return contrastive_loss(z, meta, cfg);
}

Var depth_aware_loss(Var z, const BatchMeta& meta, LossConfig cfg) {
  cfg.kind = LossKind::depth_aware;
  return contrastive_loss(z, meta, cfg);
}

Var infonce_loss(Var z, const BatchMeta& meta, LossConfig cfg) {
  cfg.kind = LossKind::infonce;
  return contrastive_loss(z, meta, cfg);
}

}  // namespace wsp
