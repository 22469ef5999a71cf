#pragma once

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "foresight/pipeline.hpp"
#include "foresight/synthetic.hpp"

// Top-k accuracy and mean top-5 recall over prediction sweeps. Ties are
// broken by ascending class id, which makes every metric deterministic.
namespace foresight {

// True iff `label` ranks among the k best classes of `scores` under
// (score descending, id ascending) ordering.
inline bool label_in_topk(const Tensor& scores, int label, int k) {
  if (label < 0 || label >= scores.numel())
    throw LabelError("label " + std::to_string(label) + " out of range");
  int better = 0;
  const double ls = scores.v[static_cast<std::size_t>(label)];
  for (int c = 0; c < scores.numel(); ++c) {
    if (c == label) continue;
    if (scores.v[static_cast<std::size_t>(c)] > ls ||
        (scores.v[static_cast<std::size_t>(c)] == ls && c < label))
      ++better;
  }
  return better < k;
}

inline double topk_accuracy(const std::vector<Tensor>& scores,
                            const std::vector<int>& labels, int k) {
  if (scores.size() != labels.size())
    throw ContractError("topk_accuracy: scores and labels differ in length");
  if (scores.empty()) throw ContractError("topk_accuracy: no samples");
  if (k < 1) throw MetricError("topk_accuracy: k must be >= 1");
  if (k > scores[0].numel())
    throw MetricError("topk_accuracy: k = " + std::to_string(k) +
                      " exceeds class count " +
                      std::to_string(scores[0].numel()));
  int hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    hits += label_in_topk(scores[i], labels[i], k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

// Per-class top-5 recall averaged over the many-shot classes (class mean,
// not sample mean). Many-shot classes without samples are skipped with a
// warning on stderr.
inline double mean_top5_recall(const std::vector<Tensor>& scores,
                               const std::vector<int>& labels,
                               const std::set<int>& many_shot) {
  if (scores.size() != labels.size())
    throw ContractError("mean_top5_recall: scores and labels differ in length");
  if (many_shot.empty())
    throw MetricError("mean_top5_recall: many_shot set is empty");
  double recall_sum = 0.0;
  int counted = 0;
  for (int c : many_shot) {
    int n = 0, hit = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] != c) continue;
      ++n;
      hit += label_in_topk(scores[i], c, 5) ? 1 : 0;
    }
    if (n == 0) {
      std::cerr << "warning: many-shot class " << c
                << " has no samples; skipped\n";
      continue;
    }
    recall_sum += static_cast<double>(hit) / static_cast<double>(n);
    ++counted;
  }
  if (counted == 0)
    throw MetricError("mean_top5_recall: no many-shot class has samples");
  return recall_sum / static_cast<double>(counted);
}

struct EvalRow {
  double t = 0.0;
  std::string target;  // action | noun | verb
  double top1 = 0.0;
  double top5 = 0.0;
  double mt5r = 0.0;
  int n = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  // CSV with floats at 6 decimals, sorted by (descending T, target name).
  std::string to_csv() const {
    std::string out = "T,target,top1,top5,mt5r,n\n";
    for (const EvalRow& r : rows) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%.6f,%s,%.6f,%.6f,%.6f,%d\n", r.t,
                    r.target.c_str(), r.top1, r.top5, r.mt5r, r.n);
      out += buf;
    }
    return out;
  }

  const EvalRow& row(double t, const std::string& target) const {
    for (const EvalRow& r : rows)
      if (std::abs(r.t - t) < 1e-9 && r.target == target) return r;
    throw ContractError("no eval row for T=" + std::to_string(t) + " " + target);
  }
};

// One trained per-modality model plus the knobs needed to run it.
struct EvalModel {
  ModelParams* params = nullptr;
  std::string modality;
  TimelineConfig tcfg;
  PipelineOptions opt;
};

// Classes with at least `threshold` training samples, per target.
inline std::set<int> many_shot_classes(const Dataset& ds,
                                       const std::string& target,
                                       int threshold) {
  std::map<int, int> counts;
  const ActionVocab& vocab = ds.manifest().vocab;
  for (const SegmentRow* seg : ds.split_segments("train")) {
    int cls = seg->action_id;
    if (target == "verb") cls = vocab.verb_of(seg->action_id);
    if (target == "noun") cls = vocab.noun_of(seg->action_id);
    ++counts[cls];
  }
  std::set<int> out;
  for (const auto& [cls, n] : counts)
    if (n >= threshold) out.insert(cls);
  return out;
}

// Runs fused prediction sweeps over a split and fills the report for every
// anticipation time and every target.
inline EvalReport evaluate(const std::vector<EvalModel>& models,
                           const std::vector<double>& weights,
                           const Dataset& ds, const std::string& split,
                           int many_shot_threshold = 10) {
  if (models.empty()) throw ContractError("evaluate: no models");
  const ActionVocab& vocab = ds.manifest().vocab;
  std::vector<std::vector<AnticipationSample>> samples;
  for (const EvalModel& m : models)
    samples.push_back(make_samples(ds, split, m.modality, m.tcfg,
                                   /*with_future_truth=*/false));
  if (samples[0].empty())
    throw EvalError("evaluate: split '" + split + "' has no samples");

  const std::vector<double> times = anticipation_times(models[0].tcfg);
  const std::size_t n = samples[0].size();
  for (const auto& s : samples)
    if (s.size() != n)
      throw ContractError("evaluate: modalities disagree on sample count");
  std::vector<std::vector<Tensor>> action_scores(times.size());
  std::vector<std::vector<Tensor>> verb_scores(times.size());
  std::vector<std::vector<Tensor>> noun_scores(times.size());
  std::vector<int> action_labels, verb_labels, noun_labels;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<PredictionSweep> sweeps;
    for (std::size_t m = 0; m < models.size(); ++m)
      sweeps.push_back(predict_sweep(*models[m].params, samples[m][i],
                                     models[m].tcfg, vocab, models[m].opt));
    PredictionSweep fused = fuse(sweeps, weights, vocab);
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      action_scores[ti].push_back(fused.action_probs[ti]);
      verb_scores[ti].push_back(fused.verb_probs[ti]);
      noun_scores[ti].push_back(fused.noun_probs[ti]);
    }
    action_labels.push_back(samples[0][i].action);
    verb_labels.push_back(samples[0][i].verb);
    noun_labels.push_back(samples[0][i].noun);
  }

  const std::set<int> ms_action = many_shot_classes(ds, "action", many_shot_threshold);
  const std::set<int> ms_verb = many_shot_classes(ds, "verb", many_shot_threshold);
  const std::set<int> ms_noun = many_shot_classes(ds, "noun", many_shot_threshold);

  EvalReport report;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    struct TargetSpec {
      const char* name;
      const std::vector<Tensor>* scores;
      const std::vector<int>* labels;
      const std::set<int>* many_shot;
    };
    const TargetSpec targets[] = {
        {"action", &action_scores[ti], &action_labels, &ms_action},
        {"noun", &noun_scores[ti], &noun_labels, &ms_noun},
        {"verb", &verb_scores[ti], &verb_labels, &ms_verb},
    };
    for (const TargetSpec& t : targets) {
      EvalRow row;
      row.t = times[ti];
      row.target = t.name;
      row.top1 = topk_accuracy(*t.scores, *t.labels, 1);
      row.top5 = topk_accuracy(*t.scores, *t.labels,
                               std::min(5, (*t.scores)[0].numel()));
      row.mt5r = t.many_shot->empty()
                     ? 0.0
                     : mean_top5_recall(*t.scores, *t.labels, *t.many_shot);
      row.n = static_cast<int>(t.labels->size());
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace foresight
