#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wsp/tensor.hpp"

namespace wsp {

struct ProbeConfig {
  double l2_strength = 1.0;
  std::size_t max_iterations = 100;
  /// Stop once the Euclidean norm of the objective gradient falls below this.
  double tolerance = 1e-8;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  /// Z-score features with train-fold statistics before fitting.
  bool standardize = true;

  void validate() const;
};

/// Binary logistic regression fitted by damped Newton iterations on
///   mean cross-entropy + (l2_strength / n) * |w|^2 / 2
/// with an unregularized bias.
struct LogisticModel {
  std::vector<double> weights;
  double bias = 0.0;
  /// Feature shift and scale applied before the linear map.
  std::vector<double> center;
  std::vector<double> scale;
  std::vector<double> objective_history;
  double gradient_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;

  std::vector<double> predict_proba(const Tensor& x) const;
};

/// X is n x D. Throws ContractError unless both classes are present.
LogisticModel fit_logistic_probe(const Tensor& x, std::span<const int> y, const ProbeConfig& cfg);

/// Objective value and gradient norm at the model's parameters, for tests.
std::pair<double, double> probe_objective(const LogisticModel& model, const Tensor& x, std::span<const int> y,
                                          double l2_strength);

}  // namespace wsp
