#pragma once

#include <vector>

#include "wsp/tensor.hpp"

namespace wsp {

struct PcaResult {
  /// n x modes coordinates of the centred rows.
  Tensor coordinates;
  /// D x modes unit-norm principal axes.
  Tensor components;
  std::vector<double> mean;
  /// Share of the total variance carried by each mode.
  std::vector<double> explained_variance;
};

/// Projection onto the leading eigenvectors of the sample covariance. Each
/// axis is signed so that its largest-magnitude coordinate is positive.
/// Throws ContractError for n < 3 and DegenerateInputError for zero variance.
PcaResult pca_project(const Tensor& x, std::size_t modes = 2);

}  // namespace wsp
