#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "foresight/errors.hpp"
#include "foresight/tensor.hpp"

// Task definition: the action vocabulary, the observation/anticipation
// timeline, and the per-instance sample layout.
namespace foresight {

// Actions are (verb, noun) pairs with dense ids. The pair map must be
// injective so marginal distributions are well defined.
struct ActionVocab {
  std::vector<std::string> verbs;
  std::vector<std::string> nouns;
  std::vector<std::pair<int, int>> actions;  // action id -> (verb id, noun id)

  int num_verbs() const { return static_cast<int>(verbs.size()); }
  int num_nouns() const { return static_cast<int>(nouns.size()); }
  int num_actions() const { return static_cast<int>(actions.size()); }

  int verb_of(int action) const {
    return actions[static_cast<std::size_t>(action)].first;
  }
  int noun_of(int action) const {
    return actions[static_cast<std::size_t>(action)].second;
  }

  void validate() const {
    std::vector<std::pair<int, int>> seen;
    for (const auto& [v, n] : actions) {
      if (v < 0 || v >= num_verbs() || n < 0 || n >= num_nouns())
        throw DataError("action refers to verb " + std::to_string(v) +
                        " / noun " + std::to_string(n) + " outside the vocab");
      for (const auto& s : seen)
        if (s.first == v && s.second == n)
          throw DataError("duplicate (verb, noun) pair (" + std::to_string(v) +
                          ", " + std::to_string(n) + ") in action vocab");
      seen.emplace_back(v, n);
    }
  }

  // Full verb x noun grid with ids in row-major verb order.
  static ActionVocab full_grid(int num_verbs, int num_nouns) {
    ActionVocab vocab;
    for (int v = 0; v < num_verbs; ++v) vocab.verbs.push_back("v" + std::to_string(v));
    for (int n = 0; n < num_nouns; ++n) vocab.nouns.push_back("n" + std::to_string(n));
    for (int v = 0; v < num_verbs; ++v)
      for (int n = 0; n < num_nouns; ++n) vocab.actions.emplace_back(v, n);
    return vocab;
  }
};

// One training/eval instance for a single modality. Frames are ordered
// oldest to newest; future_truth is present only for training samples.
struct AnticipationSample {
  std::string video_id;
  double action_start_s = 0.0;
  std::vector<Tensor> observed;
  std::vector<Tensor> future_truth;
  int verb = -1;
  int noun = -1;
  int action = -1;
};

// Times are relative to the action start. Observation covers
// [-window_s, -encoder_end_offset_s]; the anticipation span is bridged by
// generated features, with a prediction read off after every decoder step.
struct TimelineConfig {
  double alpha_s = 0.25;
  double window_s = 3.5;
  double encoder_end_offset_s = 2.0;
  // Descending anticipation times to report. Empty means every step from
  // encoder_end_offset_s down to alpha_s.
  std::vector<double> anticipation_times;
};

struct Timeline {
  int encoder_steps = 0;
  int anticipation_steps = 0;
  std::vector<double> observed_times;    // encoder inputs, oldest first
  std::vector<double> imagined_times;    // frames bridged by the generator
  std::vector<double> prediction_times;  // T after decoder step j (descending)
};

namespace detail {
inline int integral_ratio(double x, double alpha, const char* what) {
  const double r = x / alpha;
  const long long k = std::llround(r);
  if (std::abs(r - static_cast<double>(k)) > 1e-9)
    throw ConfigError(std::string(what) + " = " + std::to_string(x) +
                      " is not a multiple of alpha = " + std::to_string(alpha));
  return static_cast<int>(k);
}
}  // namespace detail

inline Timeline timeline(const TimelineConfig& cfg) {
  if (cfg.alpha_s <= 0.0 || cfg.window_s <= 0.0)
    throw ConfigError("timeline: alpha_s and window_s must be positive");
  if (cfg.encoder_end_offset_s < cfg.alpha_s)
    throw ConfigError("timeline: encoder_end_offset_s must be >= alpha_s");
  if (cfg.encoder_end_offset_s > cfg.window_s)
    throw ConfigError("timeline: encoder_end_offset_s must be <= window_s");
  const int window_steps = detail::integral_ratio(cfg.window_s, cfg.alpha_s, "window_s");
  const int end_steps =
      detail::integral_ratio(cfg.encoder_end_offset_s, cfg.alpha_s, "encoder_end_offset_s");
  Timeline tl;
  tl.encoder_steps = window_steps - end_steps + 1;
  tl.anticipation_steps = end_steps;
  for (int i = 0; i < tl.encoder_steps; ++i)
    tl.observed_times.push_back(-cfg.window_s + i * cfg.alpha_s);
  for (int k = 1; k < tl.anticipation_steps; ++k)
    tl.imagined_times.push_back(-cfg.encoder_end_offset_s + k * cfg.alpha_s);
  for (int j = 0; j < tl.anticipation_steps; ++j)
    tl.prediction_times.push_back(cfg.encoder_end_offset_s - j * cfg.alpha_s);
  return tl;
}

// Descending list of anticipation times actually reported: the configured
// list, validated against the computed grid, or the full grid when empty.
inline std::vector<double> anticipation_times(const TimelineConfig& cfg) {
  Timeline tl = timeline(cfg);
  if (cfg.anticipation_times.empty()) return tl.prediction_times;
  std::vector<double> out;
  double prev = cfg.encoder_end_offset_s + 1.0;
  for (double t : cfg.anticipation_times) {
    bool found = false;
    for (double p : tl.prediction_times)
      if (std::abs(p - t) < 1e-9) found = true;
    if (!found)
      throw ConfigError("anticipation time " + std::to_string(t) +
                        " is not on the prediction grid");
    if (t >= prev)
      throw ConfigError("anticipation_times must be strictly descending");
    prev = t;
    out.push_back(t);
  }
  return out;
}

// Decoder step (0-based) whose prediction corresponds to anticipation time T.
inline int prediction_index(const TimelineConfig& cfg, double t) {
  const double r = (cfg.encoder_end_offset_s - t) / cfg.alpha_s;
  const long long j = std::llround(r);
  if (std::abs(r - static_cast<double>(j)) > 1e-9 || j < 0)
    throw ConfigError("anticipation time " + std::to_string(t) +
                      " is not on the prediction grid");
  return static_cast<int>(j);
}

}  // namespace foresight
