#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "foresight/errors.hpp"
#include "foresight/tensor.hpp"

// Reverse-mode automatic differentiation over dense tensors. One Tape holds
// one computation graph; creation order is topological order, so backward is
// a single reverse sweep. Graphs are rebuilt per forward pass (one graph per
// mini-batch), which keeps the op set small and the memory story trivial.
namespace foresight::ad {

class Tape;

// Handle into a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int index = -1;
  bool valid() const { return tape != nullptr && index >= 0; }
};

// Trainable tensor plus its momentum buffer. Per-pass gradients live on the
// tape, not here, so parameters can be shared across many graphs.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor velocity;

  Parameter() = default;
  Parameter(std::string n, Tensor t)
      : name(std::move(n)), value(std::move(t)),
        velocity(Tensor::zeros(value.shape)) {}
};

enum class Op {
  leaf,
  add,
  sub,
  mul,
  scale,
  matmul,
  matvec,
  concat,
  sigmoid,
  tanh,
  l2norm,
  dot,
  sum,
  cross_entropy,
  detach,
};

struct Node {
  Tensor value;
  Tensor grad;  // zero-initialized, same shape as value
  Op op = Op::leaf;
  std::array<int, 2> parents{-1, -1};
  int n_parents = 0;
  double aux = 0.0;  // scale constant / cached norm
  int label = -1;    // cross-entropy target
  Parameter* param = nullptr;
};

// Norm floor below which normalization is refused.
inline constexpr double kNormFloor = 1e-8;

class Tape {
 public:
  Var constant(Tensor t) { return emplace(std::move(t), Op::leaf, {}, {}); }

  // Binds a parameter as a leaf. Binding the same parameter twice on one tape
  // returns the same node, so batch gradients accumulate in one place.
  Var param(Parameter& p) {
    auto it = bound_index_.find(&p);
    if (it != bound_index_.end()) return Var{this, it->second};
    Var v = emplace(p.value, Op::leaf, {}, {});
    nodes_[static_cast<std::size_t>(v.index)].param = &p;
    bound_index_.emplace(&p, v.index);
    bound_.emplace_back(&p, v.index);
    return v;
  }

  const Tensor& value(Var v) const { return node(v.index).value; }
  const Tensor& grad(Var v) const { return node(v.index).grad; }

  // Accumulates d(root)/d(node) into every node's grad buffer. All grads are
  // reset first, so calling backward twice on the same graph yields identical
  // grads (fixed idempotent-accumulation policy).
  void backward(Var root) {
    if (root.tape != this) throw ContractError("backward: root from another tape");
    Node& r = node_mut(root.index);
    if (r.value.numel() != 1)
      throw ContractError("backward requires a scalar root, got shape " +
                          r.value.shape_str());
    for (Node& n : nodes_) n.grad.fill(0.0);
    r.grad.v[0] = 1.0;
    for (int i = root.index; i >= 0; --i) accumulate(i);
  }

  void clear() {
    nodes_.clear();
    bound_.clear();
    bound_index_.clear();
  }

  std::size_t size() const { return nodes_.size(); }

  const std::vector<std::pair<Parameter*, int>>& bound_params() const {
    return bound_;
  }

  // Gradient of a bound parameter, or nullptr if it never joined this graph.
  const Tensor* param_grad(const Parameter& p) const {
    auto it = bound_index_.find(&p);
    if (it == bound_index_.end()) return nullptr;
    return &node(it->second).grad;
  }

  Var emplace(Tensor value, Op op, Var a, Var b, double aux = 0.0,
              int label = -1) {
    Node n;
    n.grad = Tensor::zeros(value.shape);
    n.value = std::move(value);
    n.op = op;
    n.aux = aux;
    n.label = label;
    if (a.valid()) n.parents[n.n_parents++] = a.index;
    if (b.valid()) n.parents[n.n_parents++] = b.index;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  Node& node_mut(int i) { return nodes_[static_cast<std::size_t>(i)]; }

 private:

  void accumulate(int i) {
    Node& n = node_mut(i);
    const Tensor& g = n.grad;
    switch (n.op) {
      case Op::leaf:
      case Op::detach:
        break;
      case Op::add: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gb = node_mut(n.parents[1]).grad;
        for (int k = 0; k < g.numel(); ++k) {
          ga.v[k] += g.v[k];
          gb.v[k] += g.v[k];
        }
        break;
      }
      case Op::sub: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gb = node_mut(n.parents[1]).grad;
        for (int k = 0; k < g.numel(); ++k) {
          ga.v[k] += g.v[k];
          gb.v[k] -= g.v[k];
        }
        break;
      }
      case Op::mul: {
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& b = node(n.parents[1]).value;
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gb = node_mut(n.parents[1]).grad;
        for (int k = 0; k < g.numel(); ++k) {
          ga.v[k] += g.v[k] * b.v[k];
          gb.v[k] += g.v[k] * a.v[k];
        }
        break;
      }
      case Op::scale: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        for (int k = 0; k < g.numel(); ++k) ga.v[k] += n.aux * g.v[k];
        break;
      }
      case Op::matmul: {
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& b = node(n.parents[1]).value;
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gb = node_mut(n.parents[1]).grad;
        const int m = a.rows(), k = a.cols(), c = b.cols();
        for (int r = 0; r < m; ++r)
          for (int j = 0; j < c; ++j) {
            const double gv = g.at(r, j);
            if (gv == 0.0) continue;
            for (int t = 0; t < k; ++t) {
              ga.at(r, t) += gv * b.at(t, j);
              gb.at(t, j) += gv * a.at(r, t);
            }
          }
        break;
      }
      case Op::matvec: {
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& x = node(n.parents[1]).value;
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gx = node_mut(n.parents[1]).grad;
        const int m = a.rows(), c = a.cols();
        for (int r = 0; r < m; ++r) {
          const double gv = g.v[r];
          if (gv == 0.0) continue;
          const double* arow = a.v.data() + static_cast<std::size_t>(r) * c;
          double* garow = ga.v.data() + static_cast<std::size_t>(r) * c;
          for (int t = 0; t < c; ++t) {
            garow[t] += gv * x.v[t];
            gx.v[t] += gv * arow[t];
          }
        }
        break;
      }
      case Op::concat: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gb = node_mut(n.parents[1]).grad;
        const int na = ga.numel();
        for (int k = 0; k < na; ++k) ga.v[k] += g.v[k];
        for (int k = 0; k < gb.numel(); ++k) gb.v[k] += g.v[na + k];
        break;
      }
      case Op::sigmoid: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        for (int k = 0; k < g.numel(); ++k) {
          const double y = n.value.v[k];
          ga.v[k] += g.v[k] * y * (1.0 - y);
        }
        break;
      }
      case Op::tanh: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        for (int k = 0; k < g.numel(); ++k) {
          const double y = n.value.v[k];
          ga.v[k] += g.v[k] * (1.0 - y * y);
        }
        break;
      }
      case Op::l2norm: {
        // y = x / ||x||; dx = (dy - y * (y . dy)) / ||x||
        Tensor& ga = node_mut(n.parents[0]).grad;
        const double inv_norm = 1.0 / n.aux;
        double s = 0.0;
        for (int k = 0; k < g.numel(); ++k) s += n.value.v[k] * g.v[k];
        for (int k = 0; k < g.numel(); ++k)
          ga.v[k] += (g.v[k] - n.value.v[k] * s) * inv_norm;
        break;
      }
      case Op::dot: {
        const Tensor& a = node(n.parents[0]).value;
        const Tensor& b = node(n.parents[1]).value;
        Tensor& ga = node_mut(n.parents[0]).grad;
        Tensor& gb = node_mut(n.parents[1]).grad;
        const double gv = g.v[0];
        for (int k = 0; k < a.numel(); ++k) {
          ga.v[k] += gv * b.v[k];
          gb.v[k] += gv * a.v[k];
        }
        break;
      }
      case Op::sum: {
        Tensor& ga = node_mut(n.parents[0]).grad;
        const double gv = g.v[0];
        for (int k = 0; k < ga.numel(); ++k) ga.v[k] += gv;
        break;
      }
      case Op::cross_entropy: {
        const Tensor& logits = node(n.parents[0]).value;
        Tensor& ga = node_mut(n.parents[0]).grad;
        const double gv = g.v[0];
        double mx = logits.v[0];
        for (double x : logits.v) mx = std::max(mx, x);
        double z = 0.0;
        for (double x : logits.v) z += std::exp(x - mx);
        for (int k = 0; k < logits.numel(); ++k) {
          const double p = std::exp(logits.v[k] - mx) / z;
          ga.v[k] += gv * (p - (k == n.label ? 1.0 : 0.0));
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<Parameter*, int>> bound_;
  std::unordered_map<const Parameter*, int> bound_index_;
};

namespace detail {

inline Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid())
    throw ContractError(std::string(op) + ": invalid operand");
  if (a.tape != b.tape)
    throw ContractError(std::string(op) + ": operands from different tapes");
  return *a.tape;
}

inline Tape& one_tape(Var a, const char* op) {
  if (!a.valid()) throw ContractError(std::string(op) + ": invalid operand");
  return *a.tape;
}

}  // namespace detail

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "add");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "add");
  Tensor out = x;
  for (int k = 0; k < out.numel(); ++k) out.v[k] += y.v[k];
  return t.emplace(std::move(out), Op::add, a, b);
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "sub");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "sub");
  Tensor out = x;
  for (int k = 0; k < out.numel(); ++k) out.v[k] -= y.v[k];
  return t.emplace(std::move(out), Op::sub, a, b);
}

inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "mul");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (int k = 0; k < out.numel(); ++k) out.v[k] *= y.v[k];
  return t.emplace(std::move(out), Op::mul, a, b);
}

inline Var scale(Var a, double c) {
  Tape& t = detail::one_tape(a, "scale");
  Tensor out = t.value(a);
  for (double& x : out.v) x *= c;
  return t.emplace(std::move(out), Op::scale, a, {}, c);
}

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matmul");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.rows())
    throw ShapeError("matmul: incompatible shapes " + x.shape_str() + " and " +
                     y.shape_str());
  const int m = x.rows(), k = x.cols(), c = y.cols();
  Tensor out({m, c});
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < k; ++j) {
      const double xv = x.at(r, j);
      for (int q = 0; q < c; ++q) out.at(r, q) += xv * y.at(j, q);
    }
  return t.emplace(std::move(out), Op::matmul, a, b);
}

inline Var matvec(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "matvec");
  const Tensor& m = t.value(a);
  const Tensor& x = t.value(b);
  if (m.rank() != 2 || x.rank() != 1 || m.cols() != x.numel())
    throw ShapeError("matvec: incompatible shapes " + m.shape_str() + " and " +
                     x.shape_str());
  Tensor out({m.rows()});
  for (int r = 0; r < m.rows(); ++r) {
    const double* row = m.v.data() + static_cast<std::size_t>(r) * m.cols();
    double s = 0.0;
    for (int j = 0; j < m.cols(); ++j) s += row[j] * x.v[j];
    out.v[r] = s;
  }
  return t.emplace(std::move(out), Op::matvec, a, b);
}

inline Var concat(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "concat");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.rank() != 1 || y.rank() != 1)
    throw ShapeError("concat expects vectors, got " + x.shape_str() + " and " +
                     y.shape_str());
  Tensor out({x.numel() + y.numel()});
  std::copy(x.v.begin(), x.v.end(), out.v.begin());
  std::copy(y.v.begin(), y.v.end(), out.v.begin() + x.numel());
  return t.emplace(std::move(out), Op::concat, a, b);
}

inline Var sigmoid(Var a) {
  Tape& t = detail::one_tape(a, "sigmoid");
  Tensor out = t.value(a);
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  return t.emplace(std::move(out), Op::sigmoid, a, {});
}

inline Var tanh(Var a) {
  Tape& t = detail::one_tape(a, "tanh");
  Tensor out = t.value(a);
  for (double& x : out.v) x = std::tanh(x);
  return t.emplace(std::move(out), Op::tanh, a, {});
}

inline Var l2_normalize(Var a) {
  Tape& t = detail::one_tape(a, "l2_normalize");
  const Tensor& x = t.value(a);
  if (x.rank() != 1)
    throw ShapeError("l2_normalize expects a vector, got " + x.shape_str());
  const double n = x.norm();
  if (n < kNormFloor)
    throw DegenerateVectorError("l2_normalize: norm " + std::to_string(n) +
                                " below floor 1e-8");
  Tensor out = x;
  for (double& v : out.v) v /= n;
  return t.emplace(std::move(out), Op::l2norm, a, {}, n);
}

inline Var dot(Var a, Var b) {
  Tape& t = detail::same_tape(a, b, "dot");
  const Tensor& x = t.value(a);
  const Tensor& y = t.value(b);
  if (x.rank() != 1 || y.rank() != 1 || x.numel() != y.numel())
    throw ShapeError("dot: incompatible shapes " + x.shape_str() + " and " +
                     y.shape_str());
  double s = 0.0;
  for (int k = 0; k < x.numel(); ++k) s += x.v[k] * y.v[k];
  return t.emplace(Tensor::scalar(s), Op::dot, a, b);
}

inline Var sum(Var a) {
  Tape& t = detail::one_tape(a, "sum");
  double s = 0.0;
  for (double x : t.value(a).v) s += x;
  return t.emplace(Tensor::scalar(s), Op::sum, a, {});
}

inline Var mean(Var a) {
  Tape& t = detail::one_tape(a, "mean");
  return scale(sum(a), 1.0 / t.value(a).numel());
}

// -log softmax(logits)[label], computed stably.
inline Var cross_entropy_with_logits(Var logits, int label) {
  Tape& t = detail::one_tape(logits, "cross_entropy_with_logits");
  const Tensor& x = t.value(logits);
  if (x.rank() != 1)
    throw ShapeError("cross_entropy_with_logits expects a vector, got " +
                     x.shape_str());
  if (label < 0 || label >= x.numel())
    throw LabelError("label " + std::to_string(label) + " out of range [0, " +
                     std::to_string(x.numel()) + ")");
  double mx = x.v[0];
  for (double v : x.v) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : x.v) z += std::exp(v - mx);
  const double loss = mx + std::log(z) - x.v[label];
  return t.emplace(Tensor::scalar(loss), Op::cross_entropy, logits, {}, 0.0,
                   label);
}

// Identity forward, zero backward. Used to keep a value in the graph while
// blocking gradient flow into the subgraph that produced it.
inline Var detach(Var a) {
  Tape& t = detail::one_tape(a, "detach");
  return t.emplace(t.value(a), Op::detach, a, {});
}

// v <- momentum * v + grad; theta <- theta - lr * v; grads reset to zero.
// Refuses the whole step if any gradient entry is non-finite. lr = 0 is
// allowed and leaves parameters untouched (frozen-optimizer runs).
inline void sgd_momentum_step(Tape& tape, double lr, double momentum) {
  if (lr < 0.0) throw ContractError("sgd_momentum_step: lr must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ContractError("sgd_momentum_step: momentum must be in [0, 1)");
  for (const auto& [p, idx] : tape.bound_params()) {
    const Tensor& g = tape.node(idx).grad;
    if (!g.finite())
      throw OptimizerError("non-finite gradient for parameter '" + p->name +
                           "'; step aborted");
  }
  for (const auto& [p, idx] : tape.bound_params()) {
    Tensor& g = tape.node_mut(idx).grad;
    for (int k = 0; k < g.numel(); ++k) {
      p->velocity.v[k] = momentum * p->velocity.v[k] + g.v[k];
      p->value.v[k] -= lr * p->velocity.v[k];
    }
    g.fill(0.0);
  }
}

}  // namespace foresight::ad
