#include <gtest/gtest.h>

#include <cmath>

#include "foresight/gradcheck.hpp"
#include "foresight/pipeline.hpp"

using namespace foresight;

namespace {

Tensor random_probs(int n, Rng& rng) {
  Tensor p({n});
  double s = 0.0;
  for (double& x : p.v) {
    x = -std::log(1.0 - rng.uniform());
    s += x;
  }
  for (double& x : p.v) x /= s;
  return p;
}

struct TinyWorld {
  TimelineConfig tcfg;
  ActionVocab vocab = ActionVocab::full_grid(2, 2);
  ModelParams params;
  std::vector<AnticipationSample> batch;

  explicit TinyWorld(std::uint64_t seed, CellKind kind = CellKind::lstm) {
    tcfg.alpha_s = 0.25;
    tcfg.window_s = 1.0;
    tcfg.encoder_end_offset_s = 0.75;  // 2 observed, 3 decoder steps
    Rng rng(seed);
    params = ModelParams::init(kind, 3, 4, 4, rng);
    for (int s = 0; s < 2; ++s) {
      AnticipationSample smp;
      smp.video_id = "tiny" + std::to_string(s);
      for (int i = 0; i < 2; ++i) {
        Tensor f({3});
        for (double& x : f.v) x = rng.normal();
        smp.observed.push_back(std::move(f));
      }
      for (int i = 0; i < 2; ++i) {
        Tensor f({3});
        for (double& x : f.v) x = rng.normal();
        smp.future_truth.push_back(std::move(f));
      }
      smp.action = s;
      smp.verb = vocab.verb_of(s);
      smp.noun = vocab.noun_of(s);
      batch.push_back(std::move(smp));
    }
  }
};

}  // namespace

TEST(Timeline, DefaultArithmetic) {
  TimelineConfig cfg;
  Timeline tl = timeline(cfg);
  EXPECT_EQ(tl.encoder_steps, 7);
  EXPECT_EQ(tl.anticipation_steps, 8);
  ASSERT_EQ(tl.observed_times.size(), 7u);
  EXPECT_DOUBLE_EQ(tl.observed_times.front(), -3.5);
  EXPECT_DOUBLE_EQ(tl.observed_times.back(), -2.0);
  ASSERT_EQ(tl.imagined_times.size(), 7u);
  EXPECT_DOUBLE_EQ(tl.imagined_times.front(), -1.75);
  EXPECT_DOUBLE_EQ(tl.imagined_times.back(), -0.25);
  ASSERT_EQ(tl.prediction_times.size(), 8u);
  EXPECT_DOUBLE_EQ(tl.prediction_times.front(), 2.0);
  EXPECT_DOUBLE_EQ(tl.prediction_times.back(), 0.25);
}

TEST(Timeline, SingleObservedFrameBoundary) {
  TimelineConfig cfg;
  cfg.window_s = 2.0;
  cfg.encoder_end_offset_s = 2.0;
  EXPECT_EQ(timeline(cfg).encoder_steps, 1);
}

TEST(Timeline, NonIntegralRatioRejected) {
  TimelineConfig cfg;
  cfg.alpha_s = 0.3;
  EXPECT_THROW(timeline(cfg), ConfigError);
}

TEST(Timeline, PredictionIndexMapping) {
  TimelineConfig cfg;
  EXPECT_EQ(prediction_index(cfg, 2.0), 0);
  EXPECT_EQ(prediction_index(cfg, 1.0), 4);
  EXPECT_EQ(prediction_index(cfg, 0.25), 7);
  EXPECT_THROW(prediction_index(cfg, 0.3), ConfigError);
}

TEST(Marginalize, HandSummation) {
  // actions: (v0,n0) 0.5, (v0,n1) 0.2, (v1,n0) 0.3
  ActionVocab vocab;
  vocab.verbs = {"v0", "v1"};
  vocab.nouns = {"n0", "n1"};
  vocab.actions = {{0, 0}, {0, 1}, {1, 0}};
  auto [verbs, nouns] = marginalize(Tensor::from({0.5, 0.2, 0.3}), vocab);
  EXPECT_NEAR(verbs.v[0], 0.7, 1e-15);
  EXPECT_NEAR(verbs.v[1], 0.3, 1e-15);
  EXPECT_NEAR(nouns.v[0], 0.8, 1e-15);
  EXPECT_NEAR(nouns.v[1], 0.2, 1e-15);
}

TEST(Marginalize, OneHotStaysOneHot) {
  ActionVocab vocab = ActionVocab::full_grid(3, 4);
  Tensor p = Tensor::zeros({12});
  p.v[7] = 1.0;  // (v1, n3)
  auto [verbs, nouns] = marginalize(p, vocab);
  EXPECT_DOUBLE_EQ(verbs.v[1], 1.0);
  EXPECT_DOUBLE_EQ(nouns.v[3], 1.0);
}

TEST(Marginalize, UniformGridStaysUniform) {
  ActionVocab vocab = ActionVocab::full_grid(3, 4);
  auto [verbs, nouns] = marginalize(Tensor::full({12}, 1.0 / 12.0), vocab);
  for (double v : verbs.v) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  for (double n : nouns.v) EXPECT_NEAR(n, 1.0 / 4.0, 1e-12);
}

TEST(Marginalize, SumViolationRejected) {
  ActionVocab vocab = ActionVocab::full_grid(2, 2);
  EXPECT_THROW(marginalize(Tensor::full({4}, 0.3), vocab), ContractError);
}

TEST(Marginalize, MarginalsSumToOneOnRandomInput) {
  Rng rng(4);
  ActionVocab vocab = ActionVocab::full_grid(4, 5);
  for (int rep = 0; rep < 50; ++rep) {
    auto [verbs, nouns] = marginalize(random_probs(20, rng), vocab);
    double sv = 0.0, sn = 0.0;
    for (double v : verbs.v) sv += v;
    for (double n : nouns.v) sn += n;
    EXPECT_NEAR(sv, 1.0, 1e-9);
    EXPECT_NEAR(sn, 1.0, 1e-9);
  }
}

namespace {
PredictionSweep sweep_of(const std::vector<Tensor>& probs,
                         const ActionVocab& vocab) {
  PredictionSweep s;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    s.times.push_back(2.0 - 0.25 * static_cast<double>(i));
    auto [verbs, nouns] = marginalize(probs[i], vocab);
    s.action_probs.push_back(probs[i]);
    s.verb_probs.push_back(std::move(verbs));
    s.noun_probs.push_back(std::move(nouns));
  }
  return s;
}
}  // namespace

TEST(Fuse, SingleModalityIdentity) {
  Rng rng(5);
  ActionVocab vocab = ActionVocab::full_grid(2, 3);
  PredictionSweep s = sweep_of({random_probs(6, rng), random_probs(6, rng)}, vocab);
  PredictionSweep fused = fuse({s}, {1.0}, vocab);
  for (std::size_t i = 0; i < s.times.size(); ++i)
    for (int a = 0; a < 6; ++a)
      EXPECT_NEAR(fused.action_probs[i].v[a], s.action_probs[i].v[a], 1e-15);
}

TEST(Fuse, IdenticalSweepsAreIdempotent) {
  Rng rng(6);
  ActionVocab vocab = ActionVocab::full_grid(2, 3);
  PredictionSweep s = sweep_of({random_probs(6, rng)}, vocab);
  PredictionSweep fused = fuse({s, s}, {1.0, 1.0}, vocab);
  for (int a = 0; a < 6; ++a)
    EXPECT_NEAR(fused.action_probs[0].v[a], s.action_probs[0].v[a], 1e-15);
}

TEST(Fuse, DegenerateWeightsPickOneSweep) {
  Rng rng(7);
  ActionVocab vocab = ActionVocab::full_grid(2, 3);
  PredictionSweep a = sweep_of({random_probs(6, rng)}, vocab);
  PredictionSweep b = sweep_of({random_probs(6, rng)}, vocab);
  PredictionSweep fused = fuse({a, b}, {1.0, 0.0}, vocab);
  for (int k = 0; k < 6; ++k)
    EXPECT_NEAR(fused.action_probs[0].v[k], a.action_probs[0].v[k], 1e-15);
}

TEST(Fuse, CommutesWithMarginalization) {
  Rng rng(8);
  ActionVocab vocab = ActionVocab::full_grid(3, 4);
  for (int rep = 0; rep < 20; ++rep) {
    PredictionSweep a = sweep_of({random_probs(12, rng)}, vocab);
    PredictionSweep b = sweep_of({random_probs(12, rng)}, vocab);
    const std::vector<double> w{0.7, 1.3};
    PredictionSweep fused = fuse({a, b}, w, vocab);
    // fuse-then-marginalize vs marginalize-then-fuse
    for (int v = 0; v < 3; ++v) {
      const double direct =
          (w[0] * a.verb_probs[0].v[v] + w[1] * b.verb_probs[0].v[v]) /
          (w[0] + w[1]);
      EXPECT_NEAR(fused.verb_probs[0].v[v], direct, 1e-12);
    }
    for (int n = 0; n < 4; ++n) {
      const double direct =
          (w[0] * a.noun_probs[0].v[n] + w[1] * b.noun_probs[0].v[n]) /
          (w[0] + w[1]);
      EXPECT_NEAR(fused.noun_probs[0].v[n], direct, 1e-12);
    }
  }
}

TEST(Fuse, MismatchedTimesRejected) {
  Rng rng(9);
  ActionVocab vocab = ActionVocab::full_grid(2, 3);
  PredictionSweep a = sweep_of({random_probs(6, rng)}, vocab);
  PredictionSweep b = a;
  b.times[0] = 1.0;
  EXPECT_THROW(fuse({a, b}, {1.0, 1.0}, vocab), ContractError);
  EXPECT_THROW(fuse({a, a}, {0.0, 0.0}, vocab), ContractError);
}

TEST(ForwardTrain, ZeroPhiResidualFeedsLastFrameEverywhere) {
  TinyWorld w(11);
  w.params.phi.weight.value.fill(0.0);
  w.params.phi.bias.value.fill(0.0);
  Tape tape;
  PipelineOptions opt;
  ForwardResult res =
      forward_train(tape, w.params, w.batch, 0, w.tcfg, w.vocab, opt);
  ASSERT_EQ(res.imagined.size(), 2u);
  for (const Tensor& f : res.imagined)
    EXPECT_EQ(f.v, w.batch[0].observed.back().v);
}

TEST(ForwardTrain, BreakdownInvariantHolds) {
  TinyWorld w(12);
  Tape tape;
  PipelineOptions opt;
  ForwardResult res =
      forward_train(tape, w.params, w.batch, 0, w.tcfg, w.vocab, opt);
  EXPECT_DOUBLE_EQ(res.loss.total_value(),
                   res.loss.contrastive_value() + res.loss.classification_value());
  EXPECT_GE(res.loss.contrastive_value(), 0.0);
  EXPECT_GE(res.loss.classification_value(), 0.0);
}

TEST(ForwardTrain, SingleStepAnticipationIsRejected) {
  TinyWorld w(13);
  w.tcfg.encoder_end_offset_s = 0.25;  // one decoder step, nothing to generate
  w.tcfg.window_s = 0.5;
  for (auto& s : w.batch) {
    s.observed.resize(2);
    s.future_truth.clear();
  }
  Tape tape;
  PipelineOptions opt;
  EXPECT_THROW(
      forward_train(tape, w.params, w.batch, 0, w.tcfg, w.vocab, opt),
      ContractError);
}

TEST(ForwardTrain, MissingFutureTruthIsDataError) {
  TinyWorld w(14);
  w.batch[0].future_truth.clear();
  Tape tape;
  PipelineOptions opt;
  EXPECT_THROW(
      forward_train(tape, w.params, w.batch, 0, w.tcfg, w.vocab, opt),
      DataError);
}

TEST(ForwardTrain, RunsWithEitherCellKind) {
  for (CellKind kind : {CellKind::lstm, CellKind::gru}) {
    TinyWorld w(15, kind);
    Tape tape;
    PipelineOptions opt;
    ForwardResult res =
        forward_train(tape, w.params, w.batch, 0, w.tcfg, w.vocab, opt);
    EXPECT_TRUE(std::isfinite(res.loss.total_value()));
  }
}

TEST(ForwardTrain, IntentionOffStopsClassificationGradientAtGenerator) {
  for (bool intention : {true, false}) {
    TinyWorld w(16);
    Tape tape;
    PipelineOptions opt;
    opt.intention = intention;
    ForwardResult res =
        forward_train(tape, w.params, w.batch, 0, w.tcfg, w.vocab, opt);
    tape.backward(res.loss.classification);
    const Tensor* phi_grad = tape.param_grad(w.params.phi.weight);
    ASSERT_NE(phi_grad, nullptr);
    double phi_norm = 0.0;
    for (double g : phi_grad->v) phi_norm += g * g;
    const Tensor* cls_grad = tape.param_grad(w.params.classifier.weight);
    double cls_norm = 0.0;
    for (double g : cls_grad->v) cls_norm += g * g;
    EXPECT_GT(cls_norm, 0.0);
    if (intention) {
      EXPECT_GT(phi_norm, 0.0);
    } else {
      EXPECT_DOUBLE_EQ(phi_norm, 0.0);
    }
    // The encoder keeps training through the decoder's initial state.
    const Tensor* enc_grad = tape.param_grad(w.params.encoder.w[0]);
    double enc_norm = 0.0;
    for (double g : enc_grad->v) enc_norm += g * g;
    EXPECT_GT(enc_norm, 0.0);
  }
}

TEST(ForwardTrain, TeacherForcingChangesTheRollout) {
  TinyWorld w(17);
  PipelineOptions opt;
  Tape t1;
  ForwardResult autoreg =
      forward_train(t1, w.params, w.batch, 0, w.tcfg, w.vocab, opt);
  opt.teacher_forcing = true;
  Tape t2;
  ForwardResult forced =
      forward_train(t2, w.params, w.batch, 0, w.tcfg, w.vocab, opt);
  // First generated frame sees the same input either way.
  EXPECT_EQ(autoreg.imagined[0].v, forced.imagined[0].v);
  double diff = 0.0;
  for (int d = 0; d < 3; ++d)
    diff += std::abs(autoreg.imagined[1].v[d] - forced.imagined[1].v[d]);
  EXPECT_GT(diff, 1e-9);
}

TEST(PredictSweep, ZeroClassifierGivesUniformDistributions) {
  TinyWorld w(18);
  w.params.classifier.weight.value.fill(0.0);
  w.params.classifier.bias.value.fill(0.0);
  PipelineOptions opt;
  AnticipationSample query = w.batch[0];
  query.future_truth.clear();
  PredictionSweep sweep = predict_sweep(w.params, query, w.tcfg, w.vocab, opt);
  ASSERT_EQ(sweep.times.size(), 3u);
  for (const Tensor& p : sweep.action_probs)
    for (double x : p.v) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(PredictSweep, DeterministicBitIdentical) {
  TinyWorld w(19);
  PipelineOptions opt;
  AnticipationSample query = w.batch[1];
  query.future_truth.clear();
  PredictionSweep a = predict_sweep(w.params, query, w.tcfg, w.vocab, opt);
  PredictionSweep b = predict_sweep(w.params, query, w.tcfg, w.vocab, opt);
  for (std::size_t i = 0; i < a.times.size(); ++i)
    EXPECT_EQ(a.action_probs[i].v, b.action_probs[i].v);
}

TEST(PredictSweep, SweepLengthMatchesDefaults) {
  Rng rng(20);
  ActionVocab vocab = ActionVocab::full_grid(3, 4);
  ModelParams params = ModelParams::init(CellKind::lstm, 4, 5, 12, rng);
  TimelineConfig tcfg;  // defaults: 7 observed frames, 8 prediction times
  AnticipationSample s;
  for (int i = 0; i < 7; ++i) {
    Tensor f({4});
    for (double& x : f.v) x = rng.normal();
    s.observed.push_back(std::move(f));
  }
  PredictionSweep sweep = predict_sweep(params, s, tcfg, vocab, {});
  EXPECT_EQ(sweep.times.size(), 8u);
  for (const Tensor& p : sweep.action_probs) {
    double sum = 0.0;
    for (double x : p.v) {
      EXPECT_GE(x, 0.0);
      sum += x;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(ForwardTrain, EndToEndGradientsMatchFiniteDifferences) {
  GradCheckOptions opt;
  opt.repeats = 1;
  EXPECT_LE(gradcheck_detail::end_to_end_suite(opt), 1e-4);
}

TEST(ActionVocabTest, RejectsDuplicatePairs) {
  ActionVocab vocab;
  vocab.verbs = {"a", "b"};
  vocab.nouns = {"x"};
  vocab.actions = {{0, 0}, {0, 0}};
  EXPECT_THROW(vocab.validate(), DataError);
}
