#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "foresight/pipeline.hpp"
#include "foresight/rng.hpp"
#include "foresight/synthetic.hpp"

// Plain-text `key = value` configuration files. '#' starts a comment, blank
// lines are ignored, unknown keys are hard errors.
namespace foresight {

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  std::size_t e = s.find_last_not_of(" \t");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

inline double to_double(const ConfigEntry& e) {
  char* end = nullptr;
  const double x = std::strtod(e.value.c_str(), &end);
  if (end == e.value.c_str() || *end != '\0')
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                      "' expects a number, got '" + e.value + "'");
  return x;
}

inline int to_int(const ConfigEntry& e) {
  const double x = to_double(e);
  const int k = static_cast<int>(std::llround(x));
  if (std::abs(x - k) > 1e-9)
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                      "' expects an integer, got '" + e.value + "'");
  return k;
}

inline std::uint64_t to_u64(const ConfigEntry& e) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(e.value, &pos);
    if (pos != e.value.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                      "' expects an unsigned integer, got '" + e.value + "'");
  }
}

inline bool to_bool(const ConfigEntry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "on") return true;
  if (e.value == "false" || e.value == "0" || e.value == "off") return false;
  throw ConfigError("line " + std::to_string(e.line) + ": key '" + e.key +
                    "' expects true/false, got '" + e.value + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string fmt(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace config_detail

inline std::vector<ConfigEntry> parse_config_text(const std::string& text) {
  std::vector<ConfigEntry> entries;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    ConfigEntry e;
    e.key = config_detail::trim(line.substr(0, eq));
    e.value = config_detail::trim(line.substr(eq + 1));
    e.line = line_no;
    if (e.key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<ConfigEntry> parse_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

// Training/evaluation configuration. Desk-scale defaults; `preset = paper`
// switches to the full-scale values (hidden 1024, batch 128) while keeping
// everything else identical.
struct RunConfig {
  std::string preset = "desk";
  std::string modality = "appearance";
  int hidden_dim = 64;
  CellKind cell = CellKind::lstm;
  ImaginationLossMode loss_mode = ImaginationLossMode::contrastive;
  bool residual = true;
  bool intention = true;
  bool teacher_forcing = false;
  bool classify_only_at_t1 = false;
  bool phi_tanh = false;
  double lr = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 15;
  double temperature = 0.2;
  std::uint64_t seed = 1;
  double alpha_s = 0.25;
  double window_s = 3.5;
  double encoder_end_offset_s = 2.0;
  std::vector<double> anticipation_times;  // empty = every step
  double val_anticipation_s = 1.0;
  double forget_bias = 1.0;
  int many_shot_threshold = 10;

  TimelineConfig timeline_config() const {
    TimelineConfig t;
    t.alpha_s = alpha_s;
    t.window_s = window_s;
    t.encoder_end_offset_s = encoder_end_offset_s;
    t.anticipation_times = anticipation_times;
    return t;
  }

  PipelineOptions pipeline_options() const {
    PipelineOptions o;
    o.residual = residual;
    o.loss_mode = loss_mode;
    o.intention = intention;
    o.teacher_forcing = teacher_forcing;
    o.classify_only_at_t1 = classify_only_at_t1;
    o.classification_time_s = val_anticipation_s;
    o.nce.temperature = temperature;
    o.phi_tanh = phi_tanh;
    return o;
  }

  void apply(const ConfigEntry& e) {
    using namespace config_detail;
    if (e.key == "preset") {
      if (e.value != "desk" && e.value != "paper")
        throw ConfigError("line " + std::to_string(e.line) +
                          ": unknown preset '" + e.value + "'");
      preset = e.value;
      if (preset == "paper") {
        hidden_dim = 1024;
        batch_size = 128;
      } else {
        hidden_dim = 64;
        batch_size = 32;
      }
    } else if (e.key == "modality") {
      modality = e.value;
    } else if (e.key == "hidden_dim") {
      hidden_dim = to_int(e);
    } else if (e.key == "cell") {
      cell = cell_kind_from_string(e.value);
    } else if (e.key == "loss_mode") {
      loss_mode = loss_mode_from_string(e.value);
    } else if (e.key == "residual") {
      residual = to_bool(e);
    } else if (e.key == "intention") {
      intention = to_bool(e);
    } else if (e.key == "teacher_forcing") {
      teacher_forcing = to_bool(e);
    } else if (e.key == "classify_only_at_t1") {
      classify_only_at_t1 = to_bool(e);
    } else if (e.key == "phi_tanh") {
      phi_tanh = to_bool(e);
    } else if (e.key == "lr") {
      lr = to_double(e);
    } else if (e.key == "momentum") {
      momentum = to_double(e);
    } else if (e.key == "batch_size") {
      batch_size = to_int(e);
    } else if (e.key == "max_epochs") {
      max_epochs = to_int(e);
    } else if (e.key == "patience") {
      patience = to_int(e);
    } else if (e.key == "temperature") {
      temperature = to_double(e);
    } else if (e.key == "seed") {
      seed = to_u64(e);
    } else if (e.key == "alpha_s") {
      alpha_s = to_double(e);
    } else if (e.key == "window_s") {
      window_s = to_double(e);
    } else if (e.key == "encoder_end_offset_s") {
      encoder_end_offset_s = to_double(e);
    } else if (e.key == "anticipation_times") {
      anticipation_times.clear();
      for (const std::string& part : split(e.value, ',')) {
        ConfigEntry sub{e.key, trim(part), e.line};
        anticipation_times.push_back(to_double(sub));
      }
    } else if (e.key == "val_anticipation_s") {
      val_anticipation_s = to_double(e);
    } else if (e.key == "forget_bias") {
      forget_bias = to_double(e);
    } else if (e.key == "many_shot_threshold") {
      many_shot_threshold = to_int(e);
    } else {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" +
                        e.key + "'");
    }
  }

  static RunConfig from_entries(const std::vector<ConfigEntry>& entries) {
    RunConfig cfg;
    // The preset establishes the baseline, so it applies before everything
    // else no matter where it sits in the file.
    for (const ConfigEntry& e : entries)
      if (e.key == "preset") cfg.apply(e);
    for (const ConfigEntry& e : entries)
      if (e.key != "preset") cfg.apply(e);
    cfg.validate();
    return cfg;
  }

  static RunConfig from_file(const std::string& path) {
    return from_entries(parse_config_file(path));
  }

  void validate() const {
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (lr < 0.0) throw ConfigError("lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw ConfigError("momentum must be in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (temperature <= 0.0) throw ConfigError("temperature must be positive");
    if (many_shot_threshold < 1)
      throw ConfigError("many_shot_threshold must be >= 1");
    (void)anticipation_times_checked();
  }

  std::vector<double> anticipation_times_checked() const {
    const std::vector<double> times =
        foresight::anticipation_times(timeline_config());
    for (double t : times)
      if (std::abs(t - val_anticipation_s) < 1e-9) return times;
    throw ConfigError("val_anticipation_s = " +
                      std::to_string(val_anticipation_s) +
                      " is not among the anticipation times");
  }

  // Canonical text used for hashing and checkpoint embedding.
  std::string canonical_text() const {
    using config_detail::fmt;
    std::ostringstream os;
    os << "alpha_s = " << fmt(alpha_s) << "\n";
    os << "anticipation_times = ";
    if (anticipation_times.empty()) {
      os << "default";
    } else {
      for (std::size_t i = 0; i < anticipation_times.size(); ++i)
        os << (i ? "," : "") << fmt(anticipation_times[i]);
    }
    os << "\n";
    os << "batch_size = " << batch_size << "\n";
    os << "cell = " << to_string(cell) << "\n";
    os << "classify_only_at_t1 = " << (classify_only_at_t1 ? "true" : "false") << "\n";
    os << "encoder_end_offset_s = " << fmt(encoder_end_offset_s) << "\n";
    os << "forget_bias = " << fmt(forget_bias) << "\n";
    os << "hidden_dim = " << hidden_dim << "\n";
    os << "intention = " << (intention ? "true" : "false") << "\n";
    os << "loss_mode = " << to_string(loss_mode) << "\n";
    os << "lr = " << fmt(lr) << "\n";
    os << "many_shot_threshold = " << many_shot_threshold << "\n";
    os << "max_epochs = " << max_epochs << "\n";
    os << "modality = " << modality << "\n";
    os << "momentum = " << fmt(momentum) << "\n";
    os << "patience = " << patience << "\n";
    os << "phi_tanh = " << (phi_tanh ? "true" : "false") << "\n";
    os << "preset = " << preset << "\n";
    os << "residual = " << (residual ? "true" : "false") << "\n";
    os << "seed = " << seed << "\n";
    os << "teacher_forcing = " << (teacher_forcing ? "true" : "false") << "\n";
    os << "temperature = " << fmt(temperature) << "\n";
    os << "val_anticipation_s = " << fmt(val_anticipation_s) << "\n";
    os << "window_s = " << fmt(window_s) << "\n";
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a64(canonical_text()); }
};

// World-generator configuration from the same file format. Modalities are
// written as comma-separated name:dim:noise_std:drift_std specs.
inline WorldConfig world_config_from_entries(
    const std::vector<ConfigEntry>& entries) {
  using namespace config_detail;
  WorldConfig cfg;
  for (const ConfigEntry& e : entries) {
    if (e.key == "num_verbs") cfg.num_verbs = to_int(e);
    else if (e.key == "num_nouns") cfg.num_nouns = to_int(e);
    else if (e.key == "transition_dominance") cfg.transition_dominance = to_double(e);
    else if (e.key == "min_segment_s") cfg.min_segment_s = to_double(e);
    else if (e.key == "max_segment_s") cfg.max_segment_s = to_double(e);
    else if (e.key == "segments_per_video") cfg.segments_per_video = to_int(e);
    else if (e.key == "train_videos") cfg.train_videos = to_int(e);
    else if (e.key == "val_videos") cfg.val_videos = to_int(e);
    else if (e.key == "test_videos") cfg.test_videos = to_int(e);
    else if (e.key == "alpha_s") cfg.alpha_s = to_double(e);
    else if (e.key == "blend_window_s") cfg.blend_window_s = to_double(e);
    else if (e.key == "min_history_s") cfg.min_history_s = to_double(e);
    else if (e.key == "seed") cfg.seed = to_u64(e);
    else if (e.key == "transition") {
      cfg.transition.clear();
      for (const std::string& part : split(e.value, ',')) {
        ConfigEntry sub{e.key, trim(part), e.line};
        cfg.transition.push_back(to_double(sub));
      }
    } else if (e.key == "modalities") {
      cfg.modalities.clear();
      for (const std::string& part : split(e.value, ',')) {
        auto fields = split(trim(part), ':');
        if (fields.size() != 4)
          throw ConfigError("line " + std::to_string(e.line) +
                            ": modality spec must be name:dim:noise:drift");
        ModalitySpec m;
        m.name = trim(fields[0]);
        m.dim = to_int({e.key, trim(fields[1]), e.line});
        m.noise_std = to_double({e.key, trim(fields[2]), e.line});
        m.drift_std = to_double({e.key, trim(fields[3]), e.line});
        cfg.modalities.push_back(std::move(m));
      }
    } else {
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" +
                        e.key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

inline WorldConfig world_config_from_file(const std::string& path) {
  return world_config_from_entries(parse_config_file(path));
}

}  // namespace foresight
