#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "wsp/tensor.hpp"

namespace wsp {

class Tape;

/// Handle to a node recorded on a Tape.
///
/// A Var is cheap to copy. It stays valid as long as the Tape that issued
/// it is alive and has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a primitive's backward rule gets to see.
struct BackwardContext {
  const Tensor& output;
  const Tensor& output_grad;
  std::vector<const Tensor*> inputs;
  /// Null for inputs that do not require a gradient.
  std::vector<Tensor*> input_grads;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Define-by-run reverse-mode tape.
///
/// Nodes are appended in evaluation order, so parents always precede their
/// children. A tape is single-threaded; build a fresh one per forward pass.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var parameter(Tensor value);
  /// Leaf that does not.
  Var constant(Tensor value);

  /// Append a node computed from `parents`. The node requires a gradient iff
  /// any parent does; `backward` is dropped otherwise.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn backward);

  /// Reverse sweep from a single-element tensor. Gradients from any earlier
  /// sweep are discarded first, so repeated calls give identical results.
  void backward(Var scalar);

  /// Gradient of the last backward() target with respect to `v`. Nodes the
  /// sweep never reached report zeros.
  Tensor grad(Var v) const;

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  const Node& node(Var v) const;

  std::vector<std::unique_ptr<Node>> nodes_;
};

// Primitives. All inputs must come from the same tape.

/// out[r,c] = sum_k x[r,k] W[k,c] + b[c]
Var affine(Var x, Var weight, Var bias);

/// Valid cross-correlation of x[B,C,H,W] with kernels[F,C,k,k].
Var conv2d(Var x, Var kernels, std::size_t stride);

/// Adds bias[c] to every spatial position of channel c of x[B,C,H,W].
Var add_channel_bias(Var x, Var bias);

/// x[B,C,H,W] -> [B,C], mean over the spatial extent.
Var global_avg_pool(Var x);

enum class Elementwise { exp, log, relu, neg, add_const, mul_const };

/// Pointwise map. `constant` is used by add_const and mul_const only.
Var elementwise(Var x, Elementwise kind, double constant = 0.0);

inline Var exp(Var x) { return elementwise(x, Elementwise::exp); }
inline Var log(Var x) { return elementwise(x, Elementwise::log); }
inline Var relu(Var x) { return elementwise(x, Elementwise::relu); }
inline Var neg(Var x) { return elementwise(x, Elementwise::neg); }
inline Var add_const(Var x, double c) { return elementwise(x, Elementwise::add_const, c); }
inline Var mul_const(Var x, double c) { return elementwise(x, Elementwise::mul_const, c); }

Var add(Var a, Var b);
Var mul(Var a, Var b);

/// Same values under new extents with identical product.
Var reshape(Var x, Shape shape);

/// Sum of all elements as a {1} tensor.
Var sum(Var x);

/// Stabilized log-sum-exp along `axis`. The axis is removed from the shape;
/// a rank-1 input yields shape {1}.
Var reduce_logsumexp(Var x, std::size_t axis);

/// Scales each row of x[B,D] to unit Euclidean norm.
Var l2_normalize(Var x);

/// scale * x x^T for x[B,D].
Var scaled_gram(Var x, double scale);

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                            double eps = 1e-5);

}  // namespace wsp
