#pragma once

#include <cstdio>
#include <iostream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "foresight/checkpoint.hpp"
#include "foresight/metrics.hpp"

// Mini-batch SGD training with per-epoch validation and early stopping, plus
// the ablation runner. One training job is single-threaded so that a given
// (config, seed) pair reproduces its logs and checkpoints byte for byte.
namespace foresight {

struct EpochRow {
  int epoch = 0;
  double l_c = 0.0;
  double l_f = 0.0;
  double l = 0.0;
  double val_top5 = 0.0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRow> log;
  int epochs_run = 0;

  std::string log_csv() const {
    std::string out = "epoch,L_c,L_f,L,val_top5@1s\n";
    for (const EpochRow& r : log) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f\n", r.epoch,
                    r.l_c, r.l_f, r.l, r.val_top5);
      out += buf;
    }
    return out;
  }
};

namespace train_detail {

// Top-5 action accuracy at one anticipation time, the early-stopping signal.
inline double val_topk_action(ModelParams& params,
                              const std::vector<AnticipationSample>& samples,
                              const TimelineConfig& tcfg,
                              const ActionVocab& vocab,
                              const PipelineOptions& opt, double at_time,
                              int k) {
  std::vector<Tensor> scores;
  std::vector<int> labels;
  const std::vector<double> times = anticipation_times(tcfg);
  std::size_t ti = times.size();
  for (std::size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - at_time) < 1e-9) ti = i;
  if (ti == times.size())
    throw ConfigError("validation time is not among the anticipation times");
  for (const AnticipationSample& s : samples) {
    PredictionSweep sweep = predict_sweep(params, s, tcfg, vocab, opt);
    scores.push_back(sweep.action_probs[ti]);
    labels.push_back(s.action);
  }
  return topk_accuracy(scores, labels, std::min(k, scores[0].numel()));
}

inline std::vector<int> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j =
        static_cast<std::size_t>(rng.next_u64() % static_cast<std::uint64_t>(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace train_detail

inline TrainResult train(const RunConfig& cfg, const Dataset& ds,
                         std::ostream* progress = nullptr) {
  cfg.validate();
  const TimelineConfig tcfg = cfg.timeline_config();
  const PipelineOptions opt = cfg.pipeline_options();
  const ActionVocab& vocab = ds.manifest().vocab;
  const ModalityInfo& modality = ds.modality(cfg.modality);

  std::vector<AnticipationSample> train_samples =
      make_samples(ds, "train", cfg.modality, tcfg);
  std::vector<AnticipationSample> val_samples =
      make_samples(ds, "val", cfg.modality, tcfg, /*with_future_truth=*/false);
  if (train_samples.empty()) throw DataError("train split has no samples");
  if (val_samples.empty()) throw DataError("val split has no samples");

  Rng init_rng(mix_seed(cfg.seed, "init"));
  ModelParams params =
      ModelParams::init(cfg.cell, modality.dim, cfg.hidden_dim,
                        vocab.num_actions(), init_rng, cfg.forget_bias);
  Rng shuffle_rng(mix_seed(cfg.seed, "shuffle"));

  TrainResult result;
  result.best.config = cfg;
  result.best.modality = cfg.modality;
  result.best.feature_dim = modality.dim;
  result.best.num_actions = vocab.num_actions();
  result.best.config_hash = cfg.hash();
  result.best.val_top5_at_1s = -1.0;

  int epochs_without_improvement = 0;
  Tape tape;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const std::vector<int> order =
        train_detail::shuffled_indices(train_samples.size(), shuffle_rng);
    double sum_lc = 0.0, sum_lf = 0.0, sum_l = 0.0;
    std::size_t seen = 0;
    int batch_index = 0;
    for (std::size_t off = 0; off < order.size();
         off += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t count = std::min(
          static_cast<std::size_t>(cfg.batch_size), order.size() - off);
      std::vector<AnticipationSample> batch;
      batch.reserve(count);
      for (std::size_t i = 0; i < count; ++i)
        batch.push_back(
            train_samples[static_cast<std::size_t>(order[off + i])]);
      tape.clear();
      Var total;
      for (int i = 0; i < static_cast<int>(count); ++i) {
        ForwardResult res =
            forward_train(tape, params, batch, i, tcfg, vocab, opt);
        sum_lc += res.loss.contrastive_value();
        sum_lf += res.loss.classification_value();
        sum_l += res.loss.total_value();
        total = total.valid() ? ad::add(total, res.loss.total)
                              : res.loss.total;
      }
      seen += count;
      Var root = ad::scale(total, 1.0 / static_cast<double>(count));
      if (!std::isfinite(tape.value(root).v[0]))
        throw OptimizerError("non-finite loss in epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + "; aborting");
      tape.backward(root);
      ad::sgd_momentum_step(tape, cfg.lr, cfg.momentum);
    }

    EpochRow row;
    row.epoch = epoch;
    row.l_c = sum_lc / static_cast<double>(seen);
    row.l_f = sum_lf / static_cast<double>(seen);
    row.l = sum_l / static_cast<double>(seen);
    row.val_top5 = train_detail::val_topk_action(
        params, val_samples, tcfg, vocab, opt, cfg.val_anticipation_s, 5);
    result.log.push_back(row);
    result.epochs_run = epoch;
    if (progress) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "epoch %3d  L_c %.4f  L_f %.4f  L %.4f  val_top5@1s %.4f\n",
                    epoch, row.l_c, row.l_f, row.l, row.val_top5);
      *progress << buf << std::flush;
    }

    if (row.val_top5 > result.best.val_top5_at_1s) {
      result.best.val_top5_at_1s = row.val_top5;
      result.best.epoch = epoch;
      result.best.params = params;
      epochs_without_improvement = 0;
    } else {
      ++epochs_without_improvement;
      if (epochs_without_improvement > cfg.patience) break;
    }
  }
  return result;
}

// Which axes the ablation grid varies; a disabled axis keeps the base value.
struct AblateAxes {
  bool cell = true;
  bool loss = true;
  bool residual = true;
  bool intention = true;
};

// Trains every grid variant with the shared seed and reports validation
// metrics at the early-stopping time. Per-variant failures are recorded in
// the status column and the grid continues.
inline std::string ablate(const RunConfig& base, const Dataset& ds,
                          const AblateAxes& axes = {},
                          std::ostream* progress = nullptr) {
  std::vector<CellKind> cells = axes.cell
                                    ? std::vector<CellKind>{CellKind::lstm,
                                                            CellKind::gru}
                                    : std::vector<CellKind>{base.cell};
  std::vector<ImaginationLossMode> losses =
      axes.loss ? std::vector<ImaginationLossMode>{
                      ImaginationLossMode::contrastive, ImaginationLossMode::l2}
                : std::vector<ImaginationLossMode>{base.loss_mode};
  std::vector<bool> residuals = axes.residual ? std::vector<bool>{true, false}
                                              : std::vector<bool>{base.residual};
  std::vector<bool> intentions = axes.intention
                                     ? std::vector<bool>{true, false}
                                     : std::vector<bool>{base.intention};

  std::string csv = "cell,loss,diff,intention,val_top1@1s,val_top5@1s,best_epoch,status\n";
  for (CellKind cell : cells)
    for (ImaginationLossMode loss : losses)
      for (bool residual : residuals)
        for (bool intention : intentions) {
          RunConfig cfg = base;
          cfg.cell = cell;
          cfg.loss_mode = loss;
          cfg.residual = residual;
          cfg.intention = intention;
          const std::string tag = std::string(to_string(cell)) + "," +
                                  to_string(loss) + "," +
                                  (residual ? "diff" : "no-diff") + "," +
                                  (intention ? "with-intention" : "no-intention");
          if (progress) *progress << "ablate: " << tag << "\n" << std::flush;
          try {
            TrainResult res = train(cfg, ds, nullptr);
            const double top1 = train_detail::val_topk_action(
                res.best.params,
                make_samples(ds, "val", cfg.modality, cfg.timeline_config(),
                             false),
                cfg.timeline_config(), ds.manifest().vocab,
                cfg.pipeline_options(), cfg.val_anticipation_s, 1);
            char buf[200];
            std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%d,ok\n", tag.c_str(),
                          top1, res.best.val_top5_at_1s, res.best.epoch);
            csv += buf;
          } catch (const Error& e) {
            csv += tag + ",,,," + "error: " + e.what() + "\n";
          }
        }
  return csv;
}

}  // namespace foresight
