#pragma once

#include <string>
#include <utility>
#include <vector>

#include "foresight/autodiff.hpp"
#include "foresight/rng.hpp"

// Recurrent cell steps and affine layers used by the encoder, the future
// feature generator, the decoder and the classifier. All functions are pure
// graph builders over immutable parameters.
namespace foresight {

using ad::Parameter;
using ad::Tape;
using ad::Var;

enum class CellKind { lstm, gru };

inline const char* to_string(CellKind k) {
  return k == CellKind::lstm ? "lstm" : "gru";
}

inline CellKind cell_kind_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::lstm;
  if (s == "gru") return CellKind::gru;
  throw ConfigError("unknown cell kind '" + s + "' (expected lstm or gru)");
}

// Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
inline Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

// Gate layout is fixed: lstm {input, forget, cell, output}, gru {reset,
// update, candidate}. Every gate weight is [hidden x (input + hidden)] and is
// applied to the concatenation [x; h].
struct CellParams {
  CellKind kind = CellKind::lstm;
  int input_dim = 0;
  int hidden_dim = 0;
  std::vector<Parameter> w;
  std::vector<Parameter> b;

  int gates() const { return kind == CellKind::lstm ? 4 : 3; }
};

namespace gate {
inline constexpr int lstm_input = 0;
inline constexpr int lstm_forget = 1;
inline constexpr int lstm_cell = 2;
inline constexpr int lstm_output = 3;
inline constexpr int gru_reset = 0;
inline constexpr int gru_update = 1;
inline constexpr int gru_candidate = 2;
}  // namespace gate

// forget_bias defaults to 1.0 so the forget gate starts open; pass 0 to
// disable.
inline CellParams make_cell(CellKind kind, int input_dim, int hidden_dim,
                            Rng& rng, const std::string& name_prefix,
                            double forget_bias = 1.0) {
  if (input_dim <= 0 || hidden_dim <= 0)
    throw ContractError("make_cell: dimensions must be positive");
  CellParams p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  const int fan_in = input_dim + hidden_dim;
  static const char* lstm_names[] = {"i", "f", "g", "o"};
  static const char* gru_names[] = {"r", "u", "n"};
  for (int g = 0; g < p.gates(); ++g) {
    const char* gname =
        kind == CellKind::lstm ? lstm_names[g] : gru_names[g];
    p.w.emplace_back(name_prefix + ".w_" + gname,
                     uniform_init({hidden_dim, fan_in}, fan_in, rng));
    Tensor bias = Tensor::zeros({hidden_dim});
    if (kind == CellKind::lstm && g == gate::lstm_forget)
      bias.fill(forget_bias);
    p.b.emplace_back(name_prefix + ".b_" + gname, std::move(bias));
  }
  return p;
}

// h (and c for lstm). For gru, c stays invalid.
struct CellState {
  Var h;
  Var c;
};

struct BoundCell {
  const CellParams* spec = nullptr;
  std::vector<Var> w;
  std::vector<Var> b;
};

inline BoundCell bind(Tape& tape, CellParams& p) {
  BoundCell bc;
  bc.spec = &p;
  for (int g = 0; g < p.gates(); ++g) {
    bc.w.push_back(tape.param(p.w[static_cast<std::size_t>(g)]));
    bc.b.push_back(tape.param(p.b[static_cast<std::size_t>(g)]));
  }
  return bc;
}

inline CellState zero_state(Tape& tape, const CellParams& p) {
  CellState s;
  s.h = tape.constant(Tensor::zeros({p.hidden_dim}));
  if (p.kind == CellKind::lstm)
    s.c = tape.constant(Tensor::zeros({p.hidden_dim}));
  return s;
}

inline CellState cell_step(const BoundCell& cell, Var x,
                           const CellState& state) {
  const CellParams& p = *cell.spec;
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 1 || xv.numel() != p.input_dim)
    throw ShapeError("cell_step: input " + xv.shape_str() + " does not match input_dim " +
                     std::to_string(p.input_dim));
  auto gate_pre = [&](int g, Var z) {
    return ad::add(ad::matvec(cell.w[static_cast<std::size_t>(g)], z),
                   cell.b[static_cast<std::size_t>(g)]);
  };
  if (p.kind == CellKind::lstm) {
    Var z = ad::concat(x, state.h);
    Var i = ad::sigmoid(gate_pre(gate::lstm_input, z));
    Var f = ad::sigmoid(gate_pre(gate::lstm_forget, z));
    Var g = ad::tanh(gate_pre(gate::lstm_cell, z));
    Var o = ad::sigmoid(gate_pre(gate::lstm_output, z));
    Var c_next = ad::add(ad::mul(f, state.c), ad::mul(i, g));
    Var h_next = ad::mul(o, ad::tanh(c_next));
    return CellState{h_next, c_next};
  }
  // gru: h' = (1 - u) * h + u * n, so an update gate at zero carries the
  // previous state through unchanged.
  Var z = ad::concat(x, state.h);
  Var r = ad::sigmoid(gate_pre(gate::gru_reset, z));
  Var u = ad::sigmoid(gate_pre(gate::gru_update, z));
  Var zc = ad::concat(x, ad::mul(r, state.h));
  Var n = ad::tanh(gate_pre(gate::gru_candidate, zc));
  Var h_next =
      ad::add(ad::sub(state.h, ad::mul(u, state.h)), ad::mul(u, n));
  return CellState{h_next, {}};
}

struct LinearParams {
  Parameter weight;  // [out x in]
  Parameter bias;    // [out]

  int in_dim() const { return weight.value.cols(); }
  int out_dim() const { return weight.value.rows(); }
};

inline LinearParams make_linear(int out_dim, int in_dim, Rng& rng,
                                const std::string& name_prefix) {
  if (out_dim <= 0 || in_dim <= 0)
    throw ContractError("make_linear: dimensions must be positive");
  LinearParams p;
  p.weight = Parameter(name_prefix + ".weight",
                       uniform_init({out_dim, in_dim}, in_dim, rng));
  p.bias = Parameter(name_prefix + ".bias", Tensor::zeros({out_dim}));
  return p;
}

struct BoundLinear {
  Var weight;
  Var bias;
};

inline BoundLinear bind(Tape& tape, LinearParams& p) {
  return BoundLinear{tape.param(p.weight), tape.param(p.bias)};
}

// W x + b
inline Var linear_forward(const BoundLinear& lin, Var x) {
  return ad::add(ad::matvec(lin.weight, x), lin.bias);
}

}  // namespace foresight
