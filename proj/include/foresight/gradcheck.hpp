#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "foresight/pipeline.hpp"

// Finite-difference verification of every gradient path. The checker rebuilds
// the forward graph from scratch around each perturbed coordinate, so it is
// independent of the backward implementation it validates.
namespace foresight {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  std::uint64_t seed = 7;
  int repeats = 3;  // random draws per problem
  // Test fixture: perturbs the analytic tanh gradient so the checker itself
  // can be shown to catch a broken backward rule.
  bool corrupt_tanh_backward = false;
};

struct SuiteResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// |a - n| / max(1e-6, |a|, |n|). The floor keeps finite-difference roundoff
// on true-zero gradients from registering as error.
inline double relative_error(double a, double n) {
  const double denom = std::max({1e-6, std::abs(a), std::abs(n)});
  return std::abs(a - n) / denom;
}

// Max relative error between backward() gradients and central differences,
// over every coordinate of every listed parameter. build must construct the
// graph from the parameters' current values and return the scalar root.
inline double check_gradients(std::vector<ad::Parameter*> inputs,
                              const std::function<Var(Tape&)>& build,
                              double step = 1e-5,
                              const std::function<void(std::vector<Tensor>&)>&
                                  analytic_tweak = nullptr) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    Var root = build(tape);
    tape.backward(root);
    for (ad::Parameter* p : inputs) {
      const Tensor* g = tape.param_grad(*p);
      analytic.push_back(g ? *g : Tensor::zeros(p->value.shape));
    }
  }
  if (analytic_tweak) analytic_tweak(analytic);

  auto eval = [&]() {
    Tape tape;
    Var root = build(tape);
    return tape.value(root).v[0];
  };

  double worst = 0.0;
  for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
    Tensor& value = inputs[pi]->value;
    for (int k = 0; k < value.numel(); ++k) {
      const double saved = value.v[k];
      value.v[k] = saved + step;
      const double fp = eval();
      value.v[k] = saved - step;
      const double fm = eval();
      value.v[k] = saved;
      const double numeric = (fp - fm) / (2.0 * step);
      worst = std::max(worst, relative_error(analytic[pi].v[k], numeric));
    }
  }
  return worst;
}

namespace gradcheck_detail {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& x : t.v) x = scale * rng.normal();
  return t;
}

inline double primitives_suite(const GradCheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, "primitives"));
  double worst = 0.0;
  for (int rep = 0; rep < opt.repeats; ++rep) {
    ad::Parameter a("a", random_tensor({3, 4}, rng));
    ad::Parameter b("b", random_tensor({4, 2}, rng));
    Tensor r_mat = random_tensor({3, 2}, rng);
    worst = std::max(worst, check_gradients({&a, &b}, [&](Tape& t) {
      return ad::sum(ad::mul(ad::matmul(t.param(a), t.param(b)),
                             t.constant(r_mat)));
    }, opt.step));

    ad::Parameter m("m", random_tensor({3, 4}, rng));
    ad::Parameter x("x", random_tensor({4}, rng));
    Tensor r3 = random_tensor({3}, rng);
    worst = std::max(worst, check_gradients({&m, &x}, [&](Tape& t) {
      return ad::dot(ad::matvec(t.param(m), t.param(x)), t.constant(r3));
    }, opt.step));

    ad::Parameter u("u", random_tensor({5}, rng));
    ad::Parameter w("w", random_tensor({5}, rng));
    Tensor r5 = random_tensor({5}, rng);
    worst = std::max(worst, check_gradients({&u, &w}, [&](Tape& t) {
      Var uu = t.param(u);
      Var ww = t.param(w);
      Var e = ad::sub(ad::add(uu, ww), ad::scale(ad::mul(uu, ww), 0.3));
      return ad::dot(e, t.constant(r5));
    }, opt.step));

    ad::Parameter p("p", random_tensor({3}, rng));
    ad::Parameter q("q", random_tensor({2}, rng));
    Tensor r5b = random_tensor({5}, rng);
    worst = std::max(worst, check_gradients({&p, &q}, [&](Tape& t) {
      return ad::dot(ad::concat(t.param(p), t.param(q)), t.constant(r5b));
    }, opt.step));

    ad::Parameter s("s", random_tensor({4}, rng));
    Tensor r4 = random_tensor({4}, rng);
    worst = std::max(worst, check_gradients({&s}, [&](Tape& t) {
      return ad::dot(ad::sigmoid(t.param(s)), t.constant(r4));
    }, opt.step));

    ad::Parameter th("th", random_tensor({4}, rng));
    auto tweak = [&](std::vector<Tensor>& grads) {
      if (!opt.corrupt_tanh_backward) return;
      for (double& g : grads[0].v) g *= 1.01;
    };
    worst = std::max(worst, check_gradients({&th}, [&](Tape& t) {
      return ad::dot(ad::tanh(t.param(th)), t.constant(r4));
    }, opt.step, tweak));

    ad::Parameter nz("nz", random_tensor({4}, rng));
    nz.value.v[0] += 2.0;  // keep the norm clear of the floor
    worst = std::max(worst, check_gradients({&nz}, [&](Tape& t) {
      return ad::dot(ad::l2_normalize(t.param(nz)), t.constant(r4));
    }, opt.step));

    ad::Parameter lg("lg", random_tensor({6}, rng));
    const int label = rng.uniform_int(6);
    worst = std::max(worst, check_gradients({&lg}, [&](Tape& t) {
      return ad::cross_entropy_with_logits(ad::scale(t.param(lg), 2.0), label);
    }, opt.step));
  }
  return worst;
}

inline double cell_suite(CellKind kind, const GradCheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, kind == CellKind::lstm ? "lstm" : "gru"));
  double worst = 0.0;
  for (int rep = 0; rep < opt.repeats; ++rep) {
    Rng init(rng.next_u64());
    CellParams cell = make_cell(kind, 3, 4, init, "cell");
    ad::Parameter x("x", random_tensor({3}, rng, 0.7));
    ad::Parameter h0("h0", random_tensor({4}, rng, 0.5));
    ad::Parameter c0("c0", random_tensor({4}, rng, 0.5));
    Tensor rh = random_tensor({4}, rng);
    Tensor rc = random_tensor({4}, rng);
    std::vector<ad::Parameter*> inputs{&x, &h0};
    if (kind == CellKind::lstm) inputs.push_back(&c0);
    for (auto& w : cell.w) inputs.push_back(&w);
    for (auto& b : cell.b) inputs.push_back(&b);
    worst = std::max(worst, check_gradients(inputs, [&](Tape& t) {
      BoundCell bc = bind(t, cell);
      CellState st{t.param(h0), kind == CellKind::lstm ? t.param(c0) : Var{}};
      CellState next = cell_step(bc, t.param(x), st);
      Var root = ad::dot(next.h, t.constant(rh));
      if (kind == CellKind::lstm)
        root = ad::add(root, ad::dot(next.c, t.constant(rc)));
      return root;
    }, opt.step));
  }
  return worst;
}

inline double rollout_suite(const GradCheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, "rollout"));
  double worst = 0.0;
  for (int rep = 0; rep < opt.repeats; ++rep) {
    Rng init(rng.next_u64());
    CellParams cell = make_cell(CellKind::lstm, 3, 4, init, "gen");
    LinearParams phi = make_linear(3, 4, init, "phi");
    ad::Parameter f0("f0", random_tensor({3}, rng, 0.7));
    ad::Parameter h0("h0", random_tensor({4}, rng, 0.5));
    ad::Parameter c0("c0", random_tensor({4}, rng, 0.5));
    std::vector<Tensor> readouts;
    for (int k = 0; k < 4; ++k) readouts.push_back(random_tensor({3}, rng));
    std::vector<ad::Parameter*> inputs{&f0, &h0, &c0, &phi.weight, &phi.bias};
    for (auto& w : cell.w) inputs.push_back(&w);
    for (auto& b : cell.b) inputs.push_back(&b);
    const bool residual = rep % 2 == 0;
    worst = std::max(worst, check_gradients(inputs, [&](Tape& t) {
      BoundCell bc = bind(t, cell);
      BoundLinear bphi = bind(t, phi);
      CellState st{t.param(h0), t.param(c0)};
      ImaginedTrajectory traj =
          rollout(bc, bphi, t.param(f0), st, 4, residual);
      Var root;
      for (int k = 0; k < 4; ++k) {
        Var term = ad::dot(traj.features[static_cast<std::size_t>(k)],
                           t.constant(readouts[static_cast<std::size_t>(k)]));
        root = root.valid() ? ad::add(root, term) : term;
      }
      return root;
    }, opt.step));
  }
  return worst;
}

inline double nce_suite(const GradCheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, "nce"));
  double worst = 0.0;
  NceConfig nce;
  for (int rep = 0; rep < opt.repeats; ++rep) {
    ad::Parameter w("w", random_tensor({4, 3}, rng));
    ad::Parameter x("x", random_tensor({3}, rng));
    CandidateSet cands;
    cands.positive = random_tensor({4}, rng);
    for (int j = 0; j < 5; ++j) {
      cands.negatives.push_back(random_tensor({4}, rng));
      cands.kinds.push_back(j < 2 ? NegativeKind::hard : NegativeKind::easy);
    }
    worst = std::max(worst, check_gradients({&w, &x}, [&](Tape& t) {
      Var f_hat = ad::tanh(ad::matvec(t.param(w), t.param(x)));
      return nce_loss(f_hat, cands, nce);
    }, opt.step));
  }
  return worst;
}

// Tiny end-to-end instance: full objective through encoder, rollout, decoder
// and both loss terms.
inline double end_to_end_suite(const GradCheckOptions& opt) {
  Rng rng(mix_seed(opt.seed, "e2e"));
  double worst = 0.0;
  TimelineConfig tcfg;
  tcfg.alpha_s = 0.25;
  tcfg.window_s = 1.0;
  tcfg.encoder_end_offset_s = 0.75;  // 2 observed frames, 2 generated
  ActionVocab vocab = ActionVocab::full_grid(2, 1);
  for (ImaginationLossMode mode :
       {ImaginationLossMode::contrastive, ImaginationLossMode::l2}) {
    Rng init(rng.next_u64());
    ModelParams mp = ModelParams::init(CellKind::lstm, 3, 4, 2, init);
    std::vector<AnticipationSample> batch(2);
    for (int s = 0; s < 2; ++s) {
      batch[static_cast<std::size_t>(s)].video_id = "g" + std::to_string(s);
      for (int i = 0; i < 2; ++i)
        batch[static_cast<std::size_t>(s)].observed.push_back(
            random_tensor({3}, rng, 0.7));
      for (int i = 0; i < 2; ++i)
        batch[static_cast<std::size_t>(s)].future_truth.push_back(
            random_tensor({3}, rng, 0.7));
      batch[static_cast<std::size_t>(s)].action = s;
      batch[static_cast<std::size_t>(s)].verb = vocab.verb_of(s);
      batch[static_cast<std::size_t>(s)].noun = vocab.noun_of(s);
    }
    PipelineOptions popt;
    popt.loss_mode = mode;
    std::vector<ad::Parameter*> inputs;
    mp.visit([&](ad::Parameter& p) { inputs.push_back(&p); });
    worst = std::max(worst, check_gradients(inputs, [&](Tape& t) {
      Var total;
      for (int s = 0; s < 2; ++s) {
        ForwardResult res =
            forward_train(t, mp, batch, s, tcfg, vocab, popt);
        total = total.valid() ? ad::add(total, res.loss.total)
                              : res.loss.total;
      }
      return ad::scale(total, 0.5);
    }, opt.step));
  }
  return worst;
}

}  // namespace gradcheck_detail

inline std::vector<SuiteResult> run_gradcheck(const GradCheckOptions& opt = {}) {
  using namespace gradcheck_detail;
  std::vector<SuiteResult> results;
  auto record = [&](const std::string& name, double err) {
    results.push_back({name, err, err <= opt.tol});
  };
  record("primitives", primitives_suite(opt));
  record("lstm_cell", cell_suite(CellKind::lstm, opt));
  record("gru_cell", cell_suite(CellKind::gru, opt));
  record("rollout_n4", rollout_suite(opt));
  record("nce_loss", nce_suite(opt));
  record("end_to_end", end_to_end_suite(opt));
  return results;
}

// Prints one line per suite and returns a process exit status.
inline int gradcheck_report(std::ostream& os, const GradCheckOptions& opt = {}) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<SuiteResult> results = run_gradcheck(opt);
  bool all_pass = true;
  for (const SuiteResult& r : results) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s max_rel_err=%.3e  %s\n",
                  r.name.c_str(), r.max_rel_err, r.pass ? "PASS" : "FAIL");
    os << buf;
    all_pass = all_pass && r.pass;
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%zu suites in %.2fs: %s\n", results.size(),
                secs, all_pass ? "all passed" : "FAILURES");
  os << buf;
  return all_pass ? 0 : 1;
}

}  // namespace foresight
