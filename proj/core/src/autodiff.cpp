#include "wsp/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "wsp/error.hpp"

namespace wsp {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using ConstMapRow = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

Tape& tape_of(std::initializer_list<Var> vars) {
  Tape* tape = nullptr;
  for (const Var& v : vars) {
    if (!v.valid()) throw ContractError("operation received an unbound Var");
    if (tape == nullptr) tape = v.tape();
    if (v.tape() != tape) throw ContractError("operation mixes Vars from different tapes");
  }
  return *tape;
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.shape().size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(v.shape()));
  }
}

// Fixed left-to-right order. Eigen's vectorised reductions over unaligned maps split the work
// by buffer address, which makes low bits depend on where the allocator placed the tensor.
double ordered_sum(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s;
}

double ordered_dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Var / Tape

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("unbound Var");
  return tape_->value(*this);
}

bool Var::requires_grad() const {
  return tape_ != nullptr && tape_->requires_grad(*this);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw ContractError("Var does not belong to this tape");
  return *nodes_[v.id()];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Var Tape::parameter(Tensor value) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn backward) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw ContractError("parent Var does not belong to this tape");
    n->parents.push_back(p.id());
    n->requires_grad = n->requires_grad || nodes_[p.id()]->requires_grad;
  }
  if (n->requires_grad) n->backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var scalar) {
  const Node& target = node(scalar);
  if (target.value.size() != 1) {
    throw ContractError("backward() needs a single-element tensor, got " +
                        shape_to_string(target.value.shape()));
  }
  for (auto& n : nodes_) n->grad = Tensor();
  nodes_[scalar.id()]->grad = Tensor::full(target.value.shape(), 1.0);

  for (std::size_t id = scalar.id() + 1; id-- > 0;) {
    Node& n = *nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    BackwardContext ctx{n.value, n.grad, {}, {}};
    ctx.inputs.reserve(n.parents.size());
    ctx.input_grads.reserve(n.parents.size());
    for (std::size_t pid : n.parents) {
      Node& parent = *nodes_[pid];
      ctx.inputs.push_back(&parent.value);
      if (parent.requires_grad) {
        if (parent.grad.empty()) parent.grad = Tensor::zeros(parent.value.shape());
        ctx.input_grads.push_back(&parent.grad);
      } else {
        ctx.input_grads.push_back(nullptr);
      }
    }
    n.backward(ctx);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor::zeros(n.value.shape());
  return n.grad;
}

// ---------------------------------------------------------------------------
// Dense

Var affine(Var x, Var weight, Var bias) {
  Tape& tape = tape_of({x, weight, bias});
  require_rank(x, 2, "affine");
  require_rank(weight, 2, "affine");
  require_rank(bias, 1, "affine");
  const std::size_t rows = x.shape()[0], in = x.shape()[1], out = weight.shape()[1];
  if (weight.shape()[0] != in || bias.shape()[0] != out) {
    throw DimensionError("affine: x " + shape_to_string(x.shape()) + ", W " +
                         shape_to_string(weight.shape()) + ", b " + shape_to_string(bias.shape()));
  }
  Tensor result({rows, out});
  MapRow y(result.data(), rows, out);
  y.noalias() = ConstMapRow(x.value().data(), rows, in) * ConstMapRow(weight.value().data(), in, out);
  y.rowwise() += ConstMapVec(bias.value().data(), out).transpose();

  return tape.record(std::move(result), {x, weight, bias}, [rows, in, out](BackwardContext& ctx) {
    ConstMapRow g(ctx.output_grad.data(), rows, out);
    if (ctx.input_grads[0]) {
      MapRow(ctx.input_grads[0]->data(), rows, in).noalias() +=
          g * ConstMapRow(ctx.inputs[1]->data(), in, out).transpose();
    }
    if (ctx.input_grads[1]) {
      MapRow(ctx.input_grads[1]->data(), in, out).noalias() +=
          ConstMapRow(ctx.inputs[0]->data(), rows, in).transpose() * g;
    }
    if (ctx.input_grads[2]) {
      Tensor& gb = *ctx.input_grads[2];
      for (std::size_t r = 0; r < rows; ++r) {
        const double* row = ctx.output_grad.data() + r * out;
        for (std::size_t j = 0; j < out; ++j) gb[j] += row[j];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolution via im2col

namespace {

struct ConvGeometry {
  std::size_t batch, channels, height, width, filters, k, stride, out_h, out_w;
  std::size_t patch() const { return channels * k * k; }
  std::size_t positions() const { return out_h * out_w; }
  std::size_t columns() const { return batch * positions(); }
};

// cols is patch() x columns(), row-major; column index = b * positions + oy * out_w + ox.
void im2col(const ConvGeometry& g, const double* x, double* cols) {
  const std::size_t n = g.columns(), pos = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = cols + ((c * g.k + ky) * g.k + kx) * n;
        for (std::size_t b = 0; b < g.batch; ++b) {
          const double* plane = x + (b * g.channels + c) * g.height * g.width;
          double* dst = row + b * pos;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            const double* src = plane + (oy * g.stride + ky) * g.width + kx;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[oy * g.out_w + ox] = src[ox * g.stride];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* dx) {
  const std::size_t n = g.columns(), pos = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = cols + ((c * g.k + ky) * g.k + kx) * n;
        for (std::size_t b = 0; b < g.batch; ++b) {
          double* plane = dx + (b * g.channels + c) * g.height * g.width;
          const double* src = row + b * pos;
          for (std::size_t oy = 0; oy < g.out_h; ++oy) {
            double* dst = plane + (oy * g.stride + ky) * g.width + kx;
            for (std::size_t ox = 0; ox < g.out_w; ++ox) dst[ox * g.stride] += src[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var kernels, std::size_t stride) {
  Tape& tape = tape_of({x, kernels});
  require_rank(x, 4, "conv2d");
  require_rank(kernels, 4, "conv2d");
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  if (stride == 0) throw ContractError("conv2d: stride must be >= 1");
  if (ks[1] != xs[1] || ks[2] != ks[3]) {
    throw DimensionError("conv2d: input " + shape_to_string(xs) + " incompatible with kernels " +
                         shape_to_string(ks));
  }
  if (ks[2] > xs[2] || ks[3] > xs[3]) {
    throw DimensionError("conv2d: kernel " + shape_to_string(ks) + " larger than input " +
                         shape_to_string(xs));
  }
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], stride,
                 (xs[2] - ks[2]) / stride + 1, (xs[3] - ks[3]) / stride + 1};

  auto cols = std::make_shared<std::vector<double>>(g.patch() * g.columns());
  im2col(g, x.value().data(), cols->data());

  RowMat fmap(g.filters, g.columns());
  fmap.noalias() = ConstMapRow(kernels.value().data(), g.filters, g.patch()) *
                   ConstMapRow(cols->data(), g.patch(), g.columns());

  Tensor result({g.batch, g.filters, g.out_h, g.out_w});
  const std::size_t pos = g.positions();
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t f = 0; f < g.filters; ++f) {
      std::copy_n(fmap.data() + f * g.columns() + b * pos, pos, result.data() + (b * g.filters + f) * pos);
    }
  }

  return tape.record(std::move(result), {x, kernels}, [g, cols](BackwardContext& ctx) {
    const std::size_t pos = g.positions();
    RowMat grad(g.filters, g.columns());
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t f = 0; f < g.filters; ++f) {
        std::copy_n(ctx.output_grad.data() + (b * g.filters + f) * pos, pos,
                    grad.data() + f * g.columns() + b * pos);
      }
    }
    if (ctx.input_grads[1]) {
      MapRow(ctx.input_grads[1]->data(), g.filters, g.patch()).noalias() +=
          grad * ConstMapRow(cols->data(), g.patch(), g.columns()).transpose();
    }
    if (ctx.input_grads[0]) {
      RowMat dcols(g.patch(), g.columns());
      dcols.noalias() = ConstMapRow(ctx.inputs[1]->data(), g.filters, g.patch()).transpose() * grad;
      col2im_add(g, dcols.data(), ctx.input_grads[0]->data());
    }
  });
}

Var add_channel_bias(Var x, Var bias) {
  Tape& tape = tape_of({x, bias});
  require_rank(x, 4, "add_channel_bias");
  require_rank(bias, 1, "add_channel_bias");
  const Shape& xs = x.shape();
  if (bias.shape()[0] != xs[1]) {
    throw DimensionError("add_channel_bias: " + shape_to_string(bias.shape()) + " vs channels of " +
                         shape_to_string(xs));
  }
  const std::size_t batch = xs[0], channels = xs[1], plane = xs[2] * xs[3];
  Tensor result = x.value();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      double* p = result.data() + (b * channels + c) * plane;
      const double v = bias.value()[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += v;
    }
  }
  return tape.record(std::move(result), {x, bias}, [batch, channels, plane](BackwardContext& ctx) {
    if (ctx.input_grads[0]) {
      MapVec(ctx.input_grads[0]->data(), ctx.output_grad.size()) +=
          ConstMapVec(ctx.output_grad.data(), ctx.output_grad.size());
    }
    if (ctx.input_grads[1]) {
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < channels; ++c) {
          (*ctx.input_grads[1])[c] += ordered_sum(ctx.output_grad.data() + (b * channels + c) * plane, plane);
        }
      }
    }
  });
}

Var global_avg_pool(Var x) {
  Tape& tape = tape_of({x});
  require_rank(x, 4, "global_avg_pool");
  const std::size_t rows = x.shape()[0] * x.shape()[1];
  const std::size_t plane = x.shape()[2] * x.shape()[3];
  Tensor result({x.shape()[0], x.shape()[1]});
  for (std::size_t r = 0; r < rows; ++r) {
    result[r] = ordered_sum(x.value().data() + r * plane, plane) / static_cast<double>(plane);
  }
  return tape.record(std::move(result), {x}, [rows, plane](BackwardContext& ctx) {
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t r = 0; r < rows; ++r) {
      MapVec(ctx.input_grads[0]->data() + r * plane, plane).array() += ctx.output_grad[r] * inv;
    }
  });
}

// ---------------------------------------------------------------------------
// Pointwise

Var elementwise(Var x, Elementwise kind, double constant) {
  Tape& tape = tape_of({x});
  const Tensor& in = x.value();
  Tensor result(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double v = in[i];
    switch (kind) {
      case Elementwise::exp: result[i] = std::exp(v); break;
      case Elementwise::log:
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
        result[i] = std::log(v);
        break;
      case Elementwise::relu: result[i] = v > 0.0 ? v : 0.0; break;
      case Elementwise::neg: result[i] = -v; break;
      case Elementwise::add_const: result[i] = v + constant; break;
      case Elementwise::mul_const: result[i] = v * constant; break;
    }
  }
  return tape.record(std::move(result), {x}, [kind, constant](BackwardContext& ctx) {
    const Tensor& in = *ctx.inputs[0];
    const Tensor& g = ctx.output_grad;
    Tensor& dx = *ctx.input_grads[0];
    for (std::size_t i = 0; i < in.size(); ++i) {
      switch (kind) {
        case Elementwise::exp: dx[i] += g[i] * ctx.output[i]; break;
        case Elementwise::log: dx[i] += g[i] / in[i]; break;
        case Elementwise::relu: dx[i] += in[i] > 0.0 ? g[i] : 0.0; break;
        case Elementwise::neg: dx[i] -= g[i]; break;
        case Elementwise::add_const: dx[i] += g[i]; break;
        case Elementwise::mul_const: dx[i] += g[i] * constant; break;
      }
    }
  });
}

Var add(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor result = a.value();
  for (std::size_t i = 0; i < result.size(); ++i) result[i] += b.value()[i];
  return tape.record(std::move(result), {a, b}, [](BackwardContext& ctx) {
    for (Tensor* dx : ctx.input_grads) {
      if (!dx) continue;
      for (std::size_t i = 0; i < dx->size(); ++i) (*dx)[i] += ctx.output_grad[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& tape = tape_of({a, b});
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor result = a.value();
  for (std::size_t i = 0; i < result.size(); ++i) result[i] *= b.value()[i];
  return tape.record(std::move(result), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad;
    if (ctx.input_grads[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ctx.input_grads[0])[i] += g[i] * (*ctx.inputs[1])[i];
    }
    if (ctx.input_grads[1]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*ctx.input_grads[1])[i] += g[i] * (*ctx.inputs[0])[i];
    }
  });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of({x});
  if (shape_product(shape) != x.value().size()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " cannot become " + shape_to_string(shape));
  }
  return tape.record(x.value().reshaped(std::move(shape)), {x}, [](BackwardContext& ctx) {
    for (std::size_t i = 0; i < ctx.output_grad.size(); ++i) (*ctx.input_grads[0])[i] += ctx.output_grad[i];
  });
}

Var sum(Var x) {
  Tape& tape = tape_of({x});
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  return tape.record(Tensor::scalar(total), {x}, [](BackwardContext& ctx) {
    const double g = ctx.output_grad[0];
    for (double& d : ctx.input_grads[0]->values()) d += g;
  });
}

// ---------------------------------------------------------------------------
// Reductions

Var reduce_logsumexp(Var x, std::size_t axis) {
  Tape& tape = tape_of({x});
  const Shape& xs = x.shape();
  if (axis >= xs.size()) {
    throw DimensionError("reduce_logsumexp: axis " + std::to_string(axis) + " out of range for " +
                         shape_to_string(xs));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= xs[a];
  for (std::size_t a = axis + 1; a < xs.size(); ++a) inner *= xs[a];
  const std::size_t n = xs[axis];

  Shape out_shape;
  for (std::size_t a = 0; a < xs.size(); ++a) {
    if (a != axis) out_shape.push_back(xs[a]);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  const Tensor& in = x.value();
  Tensor result(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) m = std::max(m, in[(o * n + j) * inner + i]);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += std::exp(in[(o * n + j) * inner + i] - m);
      result[o * inner + i] = m + std::log(s);
    }
  }
  return tape.record(std::move(result), {x}, [outer, inner, n](BackwardContext& ctx) {
    const Tensor& in = *ctx.inputs[0];
    Tensor& dx = *ctx.input_grads[0];
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double lse = ctx.output[o * inner + i];
        const double g = ctx.output_grad[o * inner + i];
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t idx = (o * n + j) * inner + i;
          dx[idx] += g * std::exp(in[idx] - lse);
        }
      }
    }
  });
}

Var l2_normalize(Var x) {
  Tape& tape = tape_of({x});
  require_rank(x, 2, "l2_normalize");
  const std::size_t rows = x.shape()[0], dim = x.shape()[1];
  Tensor result = x.value();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    MapVec row(result.data() + r * dim, dim);
    norms[r] = std::sqrt(ordered_dot(row.data(), row.data(), dim));
    if (!std::isfinite(norms[r])) throw NumericalError("l2_normalize: row " + std::to_string(r) + " is not finite");
    if (!(norms[r] > 0.0)) throw DegenerateInputError("l2_normalize: row " + std::to_string(r) + " has zero norm");
    row /= norms[r];
  }
  return tape.record(std::move(result), {x}, [rows, dim, norms = std::move(norms)](BackwardContext& ctx) {
    for (std::size_t r = 0; r < rows; ++r) {
      ConstMapVec y(ctx.output.data() + r * dim, dim);
      ConstMapVec g(ctx.output_grad.data() + r * dim, dim);
      MapVec(ctx.input_grads[0]->data() + r * dim, dim) += (g - y * ordered_dot(y.data(), g.data(), dim)) / norms[r];
    }
  });
}

Var scaled_gram(Var x, double scale) {
  Tape& tape = tape_of({x});
  require_rank(x, 2, "scaled_gram");
  const std::size_t rows = x.shape()[0], dim = x.shape()[1];
  ConstMapRow xm(x.value().data(), rows, dim);
  Tensor result({rows, rows});
  MapRow(result.data(), rows, rows).noalias() = scale * (xm * xm.transpose());
  return tape.record(std::move(result), {x}, [rows, dim, scale](BackwardContext& ctx) {
    ConstMapRow g(ctx.output_grad.data(), rows, rows);
    ConstMapRow xm(ctx.inputs[0]->data(), rows, dim);
    MapRow(ctx.input_grads[0]->data(), rows, dim).noalias() += scale * ((g + g.transpose()) * xm);
  });
}

// ---------------------------------------------------------------------------

Tensor finite_diff_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_gradient: eps must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double up = f(probe);
    probe[i] = orig - eps;
    const double down = f(probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace wsp
