#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "wsp/autodiff.hpp"
#include "wsp/tensor.hpp"

namespace wsp {

/// Metadata for one augmented view in a batch.
struct ViewMeta {
  int y = 0;                  ///< weak discrete label
  double d = 0.0;             ///< normalized depth in [0, 1]
  std::int64_t slice_id = 0;  ///< source slice; the two views of a slice share it
  std::int64_t patient_id = 0;
};

struct BatchMeta {
  std::vector<ViewMeta> views;

  std::size_t size() const noexcept { return views.size(); }
  /// Depth range and same-slice consistency of (y, d).
  void validate() const;
};

enum class LossKind { wsp, supcon, depth_aware, infonce };

/// Which similarities enter the denominator for the pair (anchor t, positive i).
///  - exclude_anchor: every j with j != t and j != i
///  - literal_paper:  every j with j != i (the self-similarity s_tt is kept)
enum class DenominatorConvention { exclude_anchor, literal_paper };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);
std::string to_string(DenominatorConvention convention);
DenominatorConvention denominator_from_string(const std::string& name);

struct LossConfig {
  double tau = 0.1;
  double sigma = 0.1;
  LossKind kind = LossKind::wsp;
  DenominatorConvention denominator = DenominatorConvention::exclude_anchor;

  void validate() const;
};

/// S[a,b] = z_a . z_b / tau. Rows of z must be unit-norm within 1e-6.
Var similarity_matrix(Var z, double tau);

/// Indices i != anchor sharing the anchor's weak label.
std::vector<std::size_t> positive_set(const BatchMeta& meta, std::size_t anchor);

/// Row-normalized positive weights W[t,i] for the configured loss kind.
/// A row of zeros marks an anchor without positives; it is skipped.
Tensor positive_weights(const BatchMeta& meta, const LossConfig& cfg);

/// Kernel-weighted contrastive loss over a precomputed similarity matrix:
///
///   L = 1/A sum_t sum_i W[t,i] * -log( exp(S[t,i]) / sum_{j in Den(t,i)} exp(S[t,j]) )
///
/// where A counts anchors with a non-zero weight row.
Var weighted_contrastive_loss(Var similarities, const Tensor& weights, DenominatorConvention convention);

/// similarity_matrix + positive_weights + weighted_contrastive_loss.
Var contrastive_loss(Var z, const BatchMeta& meta, const LossConfig& cfg);

Var wsp_loss(Var z, const BatchMeta& meta, LossConfig cfg);
Var supcon_loss(Var z, const BatchMeta& meta, LossConfig cfg);
Var depth_aware_loss(Var z, const BatchMeta& meta, LossConfig cfg);
Var infonce_loss(Var z, const BatchMeta& meta, LossConfig cfg);

}  // namespace wsp
