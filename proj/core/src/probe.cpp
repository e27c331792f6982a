#include "wsp/probe.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "wsp/error.hpp"

namespace wsp {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorX = Eigen::VectorXd;

double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

/// Design matrix with the model's standardization and a trailing ones column.
Matrix design(const Tensor& x, const std::vector<double>& center, const std::vector<double>& scale) {
  const std::size_t n = x.extent(0);
  const std::size_t d = x.extent(1);
  Matrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) a(r, c) = (x.at(r, c) - center[c]) / scale[c];
    a(r, d) = 1.0;
  }
  return a;
}

struct Evaluation {
  double objective;
  VectorX gradient;
  VectorX probabilities;
};

Evaluation evaluate(const Matrix& a, const VectorX& y, const VectorX& theta, double lambda) {
  const auto n = static_cast<double>(a.rows());
  const Eigen::Index d = a.cols() - 1;
  const VectorX logits = a * theta;
  Evaluation ev;
  ev.probabilities.resize(logits.size());
  double ce = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    // -[y log p + (1 - y) log(1 - p)] = softplus(t) - y t
    ce += softplus(logits[i]) - y[i] * logits[i];
    ev.probabilities[i] = sigmoid(logits[i]);
  }
  const double w2 = theta.head(d).squaredNorm();
  ev.objective = ce / n + lambda / n * w2 / 2.0;
  ev.gradient = a.transpose() * (ev.probabilities - y) / n;
  ev.gradient.head(d) += lambda / n * theta.head(d);
  return ev;
}

void check_input(const Tensor& x, std::span<const int> y) {
  if (x.rank() != 2) throw DimensionError("probe: features must be n x D, got " + shape_to_string(x.shape()));
  if (x.extent(0) != y.size()) throw DimensionError("probe: feature rows and labels differ in count");
}

}  // namespace

void ProbeConfig::validate() const {
  if (!(l2_strength >= 0.0)) throw ConfigError("probe.l2_strength must be non-negative");
  if (folds < 2) throw ConfigError("probe.folds must be at least 2");
  if (max_iterations == 0) throw ConfigError("probe.max_iterations must be positive");
  if (!(tolerance > 0.0)) throw ConfigError("probe.tolerance must be positive");
}

LogisticModel fit_logistic_probe(const Tensor& x, std::span<const int> y, const ProbeConfig& cfg) {
  cfg.validate();
  check_input(x, y);
  std::size_t positives = 0;
  for (int v : y) {
    if (v != 0 && v != 1) throw DomainError("probe: labels must be 0 or 1");
    positives += static_cast<std::size_t>(v);
  }
  if (positives == 0 || positives == y.size()) throw ContractError("probe: both classes must be present");

  const std::size_t n = x.extent(0);
  const std::size_t d = x.extent(1);
  LogisticModel model;
  model.center.assign(d, 0.0);
  model.scale.assign(d, 1.0);
  if (cfg.standardize) {
    for (std::size_t c = 0; c < d; ++c) {
      double m = 0.0;
      for (std::size_t r = 0; r < n; ++r) m += x.at(r, c);
      m /= static_cast<double>(n);
      double ss = 0.0;
      for (std::size_t r = 0; r < n; ++r) ss += (x.at(r, c) - m) * (x.at(r, c) - m);
      const double sd = std::sqrt(ss / static_cast<double>(n));
      model.center[c] = m;
      model.scale[c] = sd > 1e-12 ? sd : 1.0;
    }
  }

  const Matrix a = design(x, model.center, model.scale);
  VectorX target(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) target[static_cast<Eigen::Index>(i)] = y[i];
  const double lambda = cfg.l2_strength;
  const auto dn = static_cast<double>(n);

  VectorX theta = VectorX::Zero(static_cast<Eigen::Index>(d + 1));
  Evaluation ev = evaluate(a, target, theta, lambda);
  model.objective_history.push_back(ev.objective);
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    if (ev.gradient.norm() < cfg.tolerance) {
      model.converged = true;
      break;
    }
    const VectorX s = ev.probabilities.array() * (1.0 - ev.probabilities.array());
    Matrix hessian = a.transpose() * s.asDiagonal() * a / dn;
    hessian.diagonal().head(static_cast<Eigen::Index>(d)).array() += lambda / dn;
    // A small ridge keeps the system solvable for separable, unregularized data.
    hessian.diagonal().array() += 1e-12;
    VectorX step = hessian.ldlt().solve(-ev.gradient);
    if (!step.allFinite() || step.dot(ev.gradient) >= 0.0) step = -ev.gradient;

    // Armijo backtracking keeps the objective monotone.
    double t = 1.0;
    Evaluation candidate;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      candidate = evaluate(a, target, theta + t * step, lambda);
      if (candidate.objective <= ev.objective + 1e-4 * t * ev.gradient.dot(step)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    theta += t * step;
    ev = std::move(candidate);
    model.objective_history.push_back(ev.objective);
    model.iterations = it + 1;
  }
  model.gradient_norm = ev.gradient.norm();
  model.converged = model.converged || model.gradient_norm < cfg.tolerance;
  model.weights.assign(theta.data(), theta.data() + d);
  model.bias = theta[static_cast<Eigen::Index>(d)];
  return model;
}

std::vector<double> LogisticModel::predict_proba(const Tensor& x) const {
  if (x.rank() != 2 || x.extent(1) != weights.size()) {
    throw DimensionError("predict_proba: expected n x " + std::to_string(weights.size()) + " features");
  }
  std::vector<double> out(x.extent(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    double t = bias;
    for (std::size_t c = 0; c < weights.size(); ++c) t += weights[c] * (x.at(r, c) - center[c]) / scale[c];
    out[r] = sigmoid(t);
  }
  return out;
}

std::pair<double, double> probe_objective(const LogisticModel& model, const Tensor& x, std::span<const int> y,
                                          double l2_strength) {
  check_input(x, y);
  const Matrix a = design(x, model.center, model.scale);
  VectorX target(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) target[static_cast<Eigen::Index>(i)] = y[i];
  VectorX theta(static_cast<Eigen::Index>(model.weights.size() + 1));
  for (std::size_t c = 0; c < model.weights.size(); ++c) theta[static_cast<Eigen::Index>(c)] = model.weights[c];
  theta[static_cast<Eigen::Index>(model.weights.size())] = model.bias;
  const Evaluation ev = evaluate(a, target, theta, l2_strength);
  return {ev.objective, ev.gradient.norm()};
}

}  // namespace wsp
