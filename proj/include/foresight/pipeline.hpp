#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "foresight/imagination.hpp"
#include "foresight/losses.hpp"
#include "foresight/task.hpp"

// The full anticipation model: an encoder consumes the observed frames, the
// generator cell bridges the unobserved span with predicted features, and a
// decoder reads them back to emit an action distribution at every step.
namespace foresight {

struct PipelineOptions {
  bool residual = true;
  ImaginationLossMode loss_mode = ImaginationLossMode::contrastive;
  // When false, classification gradients stop at the generated features:
  // the decoder and classifier still train on the action label, but the
  // generator is shaped by the feature loss alone.
  bool intention = true;
  bool teacher_forcing = false;
  // Restrict training-time classification terms to one anticipation time.
  bool classify_only_at_t1 = false;
  double classification_time_s = 1.0;
  NceConfig nce;
  // The hidden-to-feature projection is affine by default; set true to apply
  // a tanh on top.
  bool phi_tanh = false;
};

struct ModelParams {
  CellKind cell = CellKind::lstm;
  int feature_dim = 0;
  int hidden_dim = 0;
  int num_actions = 0;
  CellParams encoder;
  CellParams imagine;
  CellParams decoder;
  LinearParams phi;         // hidden -> feature space
  LinearParams classifier;  // hidden -> action logits

  static ModelParams init(CellKind kind, int feature_dim, int hidden_dim,
                          int num_actions, Rng& rng, double forget_bias = 1.0) {
    ModelParams p;
    p.cell = kind;
    p.feature_dim = feature_dim;
    p.hidden_dim = hidden_dim;
    p.num_actions = num_actions;
    p.encoder = make_cell(kind, feature_dim, hidden_dim, rng, "encoder", forget_bias);
    p.imagine = make_cell(kind, feature_dim, hidden_dim, rng, "imagine", forget_bias);
    p.decoder = make_cell(kind, feature_dim, hidden_dim, rng, "decoder", forget_bias);
    p.phi = make_linear(feature_dim, hidden_dim, rng, "phi");
    p.classifier = make_linear(num_actions, hidden_dim, rng, "classifier");
    return p;
  }

  template <typename F>
  void visit(F&& f) {
    for (CellParams* c : {&encoder, &imagine, &decoder}) {
      for (auto& w : c->w) f(w);
      for (auto& b : c->b) f(b);
    }
    f(phi.weight);
    f(phi.bias);
    f(classifier.weight);
    f(classifier.bias);
  }
};

// Per anticipation time: an action distribution plus the verb/noun marginals.
struct PredictionSweep {
  std::vector<double> times;  // descending
  std::vector<Tensor> action_probs;
  std::vector<Tensor> verb_probs;
  std::vector<Tensor> noun_probs;
};

inline Tensor stable_softmax(const Tensor& logits) {
  Tensor p = logits;
  double mx = p.v[0];
  for (double x : p.v) mx = std::max(mx, x);
  double z = 0.0;
  for (double& x : p.v) {
    x = std::exp(x - mx);
    z += x;
  }
  for (double& x : p.v) x /= z;
  return p;
}

// verb_probs[v] = sum of action probabilities whose verb is v; same for
// nouns. Both marginals sum to 1 whenever the input does.
inline std::pair<Tensor, Tensor> marginalize(const Tensor& action_probs,
                                             const ActionVocab& vocab) {
  if (action_probs.numel() != vocab.num_actions())
    throw ShapeError("marginalize: " + action_probs.shape_str() +
                     " does not match vocab size " +
                     std::to_string(vocab.num_actions()));
  double s = 0.0;
  for (double x : action_probs.v) s += x;
  if (std::abs(s - 1.0) > 1e-6)
    throw ContractError("marginalize: action probabilities sum to " +
                        std::to_string(s) + ", expected 1");
  Tensor verbs = Tensor::zeros({vocab.num_verbs()});
  Tensor nouns = Tensor::zeros({vocab.num_nouns()});
  for (int a = 0; a < vocab.num_actions(); ++a) {
    verbs.v[static_cast<std::size_t>(vocab.verb_of(a))] += action_probs.v[a];
    nouns.v[static_cast<std::size_t>(vocab.noun_of(a))] += action_probs.v[a];
  }
  return {std::move(verbs), std::move(nouns)};
}

// Late fusion: weighted average of per-modality action distributions,
// renormalized, with marginals re-derived. Fusion and marginalization are
// both linear, so their order does not matter.
inline PredictionSweep fuse(const std::vector<PredictionSweep>& sweeps,
                            const std::vector<double>& weights,
                            const ActionVocab& vocab) {
  if (sweeps.empty()) throw ContractError("fuse: no sweeps");
  if (weights.size() != sweeps.size())
    throw ContractError("fuse: weights count does not match sweeps");
  double wsum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ContractError("fuse: weights must be non-negative");
    wsum += w;
  }
  if (wsum <= 0.0) throw ContractError("fuse: weights must sum to > 0");
  const PredictionSweep& first = sweeps[0];
  for (const PredictionSweep& s : sweeps) {
    if (s.times.size() != first.times.size())
      throw ContractError("fuse: sweeps report different anticipation times");
    for (std::size_t i = 0; i < s.times.size(); ++i)
      if (std::abs(s.times[i] - first.times[i]) > 1e-9)
        throw ContractError("fuse: sweeps report different anticipation times");
    for (const Tensor& p : s.action_probs)
      if (p.numel() != vocab.num_actions())
        throw ContractError("fuse: sweep vocab size mismatch");
  }
  PredictionSweep out;
  out.times = first.times;
  for (std::size_t i = 0; i < first.times.size(); ++i) {
    Tensor acc = Tensor::zeros({vocab.num_actions()});
    for (std::size_t m = 0; m < sweeps.size(); ++m)
      for (int a = 0; a < acc.numel(); ++a)
        acc.v[a] += weights[m] * sweeps[m].action_probs[i].v[a];
    double s = 0.0;
    for (double x : acc.v) s += x;
    for (double& x : acc.v) x /= s;
    auto [verbs, nouns] = marginalize(acc, vocab);
    out.action_probs.push_back(std::move(acc));
    out.verb_probs.push_back(std::move(verbs));
    out.noun_probs.push_back(std::move(nouns));
  }
  return out;
}

struct ForwardResult {
  LossBreakdown loss;
  PredictionSweep sweep;
  std::vector<Tensor> imagined;  // generated feature values, for diagnostics
};

namespace detail {

struct UnrolledModel {
  std::vector<Var> imagined;  // anticipation_steps - 1 features
  std::vector<Var> logits;    // one per decoder step
};

// Shared graph construction for training and inference.
inline UnrolledModel unroll(Tape& tape, ModelParams& params,
                            const AnticipationSample& sample,
                            const TimelineConfig& tcfg,
                            const PipelineOptions& opt, bool training) {
  const Timeline tl = timeline(tcfg);
  if (static_cast<int>(sample.observed.size()) != tl.encoder_steps)
    throw DataError("sample '" + sample.video_id + "' has " +
                    std::to_string(sample.observed.size()) +
                    " observed frames, timeline expects " +
                    std::to_string(tl.encoder_steps));
  if (tl.anticipation_steps < 2)
    throw ContractError(
        "anticipation span of one step leaves no frames to generate; "
        "increase encoder_end_offset_s");

  BoundCell enc = bind(tape, params.encoder);
  BoundCell gen = bind(tape, params.imagine);
  BoundCell dec = bind(tape, params.decoder);
  BoundLinear phi = bind(tape, params.phi);
  BoundLinear cls = bind(tape, params.classifier);

  CellState state = zero_state(tape, params.encoder);
  for (const Tensor& f : sample.observed)
    state = cell_step(enc, tape.constant(f), state);

  Var f_last = tape.constant(sample.observed.back());

  // Teacher forcing feeds the ground-truth future frames back instead of the
  // model's own outputs; only meaningful while training.
  const int gen_steps = tl.anticipation_steps - 1;
  std::vector<Var> forced;
  const std::vector<Var>* forced_ptr = nullptr;
  if (training && opt.teacher_forcing) {
    for (int k = 0; k < gen_steps - 1; ++k)
      forced.push_back(
          tape.constant(sample.future_truth[static_cast<std::size_t>(k)]));
    forced_ptr = &forced;
  }

  // The generator and the decoder both start from the encoder's final state,
  // so everything downstream is conditioned on the observed context.
  auto phi_apply = [&](Var h) {
    Var out = linear_forward(phi, h);
    return opt.phi_tanh ? ad::tanh(out) : out;
  };
  UnrolledModel um;
  um.imagined = rollout_with(gen, phi_apply, f_last, state, gen_steps,
                             opt.residual, forced_ptr)
                    .features;

  CellState dstate = state;
  for (int j = 0; j < tl.anticipation_steps; ++j) {
    Var input = j == 0 ? f_last : um.imagined[static_cast<std::size_t>(j - 1)];
    if (j > 0 && !opt.intention) input = ad::detach(input);
    dstate = cell_step(dec, input, dstate);
    um.logits.push_back(linear_forward(cls, dstate.h));
  }
  return um;
}

inline PredictionSweep sweep_from_logits(const std::vector<Var>& logits,
                                         const TimelineConfig& tcfg,
                                         const ActionVocab& vocab) {
  PredictionSweep sweep;
  sweep.times = anticipation_times(tcfg);
  for (double t : sweep.times) {
    const int j = prediction_index(tcfg, t);
    Tape& tape = *logits[static_cast<std::size_t>(j)].tape;
    Tensor probs =
        stable_softmax(tape.value(logits[static_cast<std::size_t>(j)]));
    auto [verbs, nouns] = marginalize(probs, vocab);
    sweep.action_probs.push_back(std::move(probs));
    sweep.verb_probs.push_back(std::move(verbs));
    sweep.noun_probs.push_back(std::move(nouns));
  }
  return sweep;
}

}  // namespace detail

// Builds the training graph for one sample of the batch. The rest of the
// batch supplies the easy negatives for the contrastive candidates.
inline ForwardResult forward_train(Tape& tape, ModelParams& params,
                                   const std::vector<AnticipationSample>& batch,
                                   int sample_index,
                                   const TimelineConfig& tcfg,
                                   const ActionVocab& vocab,
                                   const PipelineOptions& opt) {
  if (sample_index < 0 || sample_index >= static_cast<int>(batch.size()))
    throw ContractError("forward_train: sample_index out of range");
  const AnticipationSample& sample =
      batch[static_cast<std::size_t>(sample_index)];
  const Timeline tl = timeline(tcfg);
  if (static_cast<int>(sample.future_truth.size()) != tl.anticipation_steps - 1)
    throw DataError("sample '" + sample.video_id +
                    "' is missing ground-truth future frames (have " +
                    std::to_string(sample.future_truth.size()) + ", need " +
                    std::to_string(tl.anticipation_steps - 1) + ")");
  if (sample.action < 0 || sample.action >= vocab.num_actions())
    throw LabelError("sample '" + sample.video_id + "' has action label " +
                     std::to_string(sample.action) + " outside the vocab");

  detail::UnrolledModel um =
      detail::unroll(tape, params, sample, tcfg, opt, /*training=*/true);

  std::vector<Var> imagination_terms;
  const bool needs_candidates = opt.loss_mode != ImaginationLossMode::l2;
  for (int k = 0; k < static_cast<int>(um.imagined.size()); ++k) {
    CandidateSet cands;
    if (needs_candidates) cands = build_candidates(batch, sample_index, k);
    Var truth =
        tape.constant(sample.future_truth[static_cast<std::size_t>(k)]);
    imagination_terms.push_back(imagination_step_loss(
        um.imagined[static_cast<std::size_t>(k)],
        needs_candidates ? &cands : nullptr, truth, opt.loss_mode, opt.nce));
  }

  std::vector<Var> classification_terms;
  for (int j = 0; j < static_cast<int>(um.logits.size()); ++j) {
    if (opt.classify_only_at_t1) {
      const double t = tcfg.encoder_end_offset_s - j * tcfg.alpha_s;
      if (std::abs(t - opt.classification_time_s) > 1e-9) continue;
    }
    classification_terms.push_back(classification_loss(
        um.logits[static_cast<std::size_t>(j)], sample.action));
  }
  if (classification_terms.empty())
    throw ConfigError(
        "classification_time_s is not one of the prediction times");

  ForwardResult res;
  res.loss = total_loss(imagination_terms, classification_terms);
  res.sweep = detail::sweep_from_logits(um.logits, tcfg, vocab);
  for (Var f : um.imagined) res.imagined.push_back(tape.value(f));
  return res;
}

// Inference-only sweep; future_truth is not required. Pure function of the
// parameters and the sample.
inline PredictionSweep predict_sweep(ModelParams& params,
                                     const AnticipationSample& sample,
                                     const TimelineConfig& tcfg,
                                     const ActionVocab& vocab,
                                     const PipelineOptions& opt) {
  Tape tape;
  PipelineOptions inference = opt;
  inference.teacher_forcing = false;
  detail::UnrolledModel um =
      detail::unroll(tape, params, sample, tcfg, inference, /*training=*/false);
  return detail::sweep_from_logits(um.logits, tcfg, vocab);
}

}  // namespace foresight
