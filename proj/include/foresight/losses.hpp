#pragma once

#include <string>
#include <vector>

#include "foresight/autodiff.hpp"
#include "foresight/task.hpp"

// Training objectives: the contrastive pick-the-true-future loss over easy
// and hard distractors, the plain regression baseline, the future-action
// classification loss, and their combination.
namespace foresight {

struct NceConfig {
  double temperature = 0.2;
};

enum class NegativeKind { easy, hard };

// One positive (the ground-truth future frame) plus distractors. Hard
// negatives come from other time steps of the same sequence, easy negatives
// from every frame of the other sequences in the batch.
struct CandidateSet {
  Tensor positive;
  std::vector<Tensor> negatives;
  std::vector<NegativeKind> kinds;  // parallel to negatives

  int count(NegativeKind k) const {
    int n = 0;
    for (NegativeKind kk : kinds) n += (kk == k) ? 1 : 0;
    return n;
  }
};

inline CandidateSet build_candidates(
    const std::vector<AnticipationSample>& batch, int sample_index,
    int time_index) {
  if (batch.empty()) throw ContractError("build_candidates: empty batch");
  if (sample_index < 0 || sample_index >= static_cast<int>(batch.size()))
    throw ContractError("build_candidates: sample_index out of range");
  const auto& window = batch[static_cast<std::size_t>(sample_index)].future_truth;
  if (time_index < 0 || time_index >= static_cast<int>(window.size()))
    throw ContractError("build_candidates: time_index outside the window");
  CandidateSet set;
  set.positive = window[static_cast<std::size_t>(time_index)];
  for (int j = 0; j < static_cast<int>(window.size()); ++j) {
    if (j == time_index) continue;
    set.negatives.push_back(window[static_cast<std::size_t>(j)]);
    set.kinds.push_back(NegativeKind::hard);
  }
  for (int s = 0; s < static_cast<int>(batch.size()); ++s) {
    if (s == sample_index) continue;
    for (const Tensor& f : batch[static_cast<std::size_t>(s)].future_truth) {
      set.negatives.push_back(f);
      set.kinds.push_back(NegativeKind::easy);
    }
  }
  if (set.negatives.empty())
    throw ConfigError(
        "build_candidates: no distractors available (batch of one sample "
        "with a one-step window)");
  return set;
}

namespace detail {
inline Tensor normalized_or_throw(const Tensor& x, const char* what) {
  const double n = x.norm();
  if (n < ad::kNormFloor)
    throw DegenerateVectorError(std::string(what) +
                                ": norm below floor 1e-8");
  Tensor out = x;
  for (double& v : out.v) v /= n;
  return out;
}
}  // namespace detail

// Temperature-scaled cross entropy over cosine similarities: the prediction
// must pick the true future frame out of the candidate set. All vectors are
// L2-normalized; the candidates enter the graph as constants, so gradients
// flow only through the predicted feature.
inline Var nce_loss(Var f_hat, const CandidateSet& candidates,
                    const NceConfig& cfg) {
  if (cfg.temperature <= 0.0)
    throw ContractError("nce_loss: temperature must be positive");
  if (candidates.negatives.empty())
    throw ContractError("nce_loss: candidate set has no negatives");
  Tape& tape = *f_hat.tape;
  const int d = tape.value(f_hat).numel();
  const int rows = 1 + static_cast<int>(candidates.negatives.size());
  Tensor c({rows, d});
  Tensor pos = detail::normalized_or_throw(candidates.positive, "nce positive");
  if (pos.numel() != d)
    throw ShapeError("nce_loss: positive " + candidates.positive.shape_str() +
                     " does not match prediction dim " + std::to_string(d));
  for (int j = 0; j < d; ++j) c.at(0, j) = pos.v[j];
  for (int i = 0; i < rows - 1; ++i) {
    const Tensor& raw = candidates.negatives[static_cast<std::size_t>(i)];
    if (raw.numel() != d)
      throw ShapeError("nce_loss: negative " + raw.shape_str() +
                       " does not match prediction dim " + std::to_string(d));
    Tensor neg = detail::normalized_or_throw(raw, "nce negative");
    for (int j = 0; j < d; ++j) c.at(i + 1, j) = neg.v[j];
  }
  Var sims = ad::matvec(tape.constant(std::move(c)), ad::l2_normalize(f_hat));
  return ad::cross_entropy_with_logits(ad::scale(sims, 1.0 / cfg.temperature),
                                       0);
}

// Mean squared error over feature dimensions.
inline Var l2_loss(Var f_hat, Var f_true) {
  Var d = ad::sub(f_hat, f_true);
  return ad::mean(ad::mul(d, d));
}

// -log softmax(logits)[label]
inline Var classification_loss(Var logits, int label) {
  return ad::cross_entropy_with_logits(logits, label);
}

enum class ImaginationLossMode { contrastive, l2, contrastive_plus_l2 };

inline const char* to_string(ImaginationLossMode m) {
  switch (m) {
    case ImaginationLossMode::contrastive: return "contrastive";
    case ImaginationLossMode::l2: return "l2";
    default: return "contrastive+l2";
  }
}

inline ImaginationLossMode loss_mode_from_string(const std::string& s) {
  if (s == "contrastive") return ImaginationLossMode::contrastive;
  if (s == "l2") return ImaginationLossMode::l2;
  if (s == "contrastive+l2") return ImaginationLossMode::contrastive_plus_l2;
  throw ConfigError("unknown loss mode '" + s +
                    "' (expected contrastive, l2 or contrastive+l2)");
}

// Per-step generation loss under the selected mode. The two terms are added
// with weight 1 each in combined mode.
inline Var imagination_step_loss(Var f_hat, const CandidateSet* candidates,
                                 Var f_true, ImaginationLossMode mode,
                                 const NceConfig& cfg) {
  switch (mode) {
    case ImaginationLossMode::contrastive:
      if (!candidates) throw ContractError("contrastive mode needs candidates");
      return nce_loss(f_hat, *candidates, cfg);
    case ImaginationLossMode::l2:
      return l2_loss(f_hat, f_true);
    default:
      if (!candidates) throw ContractError("combined mode needs candidates");
      return ad::add(nce_loss(f_hat, *candidates, cfg), l2_loss(f_hat, f_true));
  }
}

struct LossBreakdown {
  Var contrastive;     // mean over generated steps
  Var classification;  // mean over prediction points
  Var total;           // contrastive + classification

  double contrastive_value() const {
    return contrastive.tape->value(contrastive).v[0];
  }
  double classification_value() const {
    return classification.tape->value(classification).v[0];
  }
  double total_value() const { return total.tape->value(total).v[0]; }
};

namespace detail {
inline Var mean_of(const std::vector<Var>& terms) {
  Var acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ad::add(acc, terms[i]);
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}
}  // namespace detail

// Averaging (rather than summing) over generated steps keeps the loss
// magnitude independent of the anticipation span.
inline LossBreakdown total_loss(const std::vector<Var>& imagination_terms,
                                const std::vector<Var>& classification_terms) {
  if (imagination_terms.empty())
    throw ContractError("total_loss: no imagination terms");
  if (classification_terms.empty())
    throw ContractError("total_loss: no classification terms");
  LossBreakdown out;
  out.contrastive = detail::mean_of(imagination_terms);
  out.classification = detail::mean_of(classification_terms);
  out.total = ad::add(out.contrastive, out.classification);
  return out;
}

}  // namespace foresight
