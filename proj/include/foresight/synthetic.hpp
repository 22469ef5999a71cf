#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "foresight/rng.hpp"
#include "foresight/task.hpp"

// Procedural generator of labeled egocentric-like feature streams, plus the
// loader for that directory layout (which also ingests externally produced
// features in the same format).
//
// Layout (CSV, UTF-8, LF, '.' decimal separator, 9 significant digits):
//   verbs.csv     id,name
//   nouns.csv     id,name
//   actions.csv   action_id,verb_id,noun_id
//   segments.csv  video_id,action_start_s,action_id,split
//   manifest.csv  modality,dim,alpha_s
//   features/<video_id>.<modality>.csv   time_s,f0,...,f{D-1}
namespace foresight {

struct ModalitySpec {
  std::string name;
  int dim = 0;
  double noise_std = 0.0;
  double drift_std = 0.0;
};

struct WorldConfig {
  int num_verbs = 3;
  int num_nouns = 4;
  // Row-stochastic [A x A]; empty means "generate from the seed": each action
  // gets one dominant successor with probability transition_dominance, the
  // remainder spread uniformly.
  std::vector<double> transition;
  double transition_dominance = 0.75;
  double min_segment_s = 2.5;
  double max_segment_s = 4.5;
  int segments_per_video = 6;
  std::vector<ModalitySpec> modalities = {{"appearance", 32, 0.05, 0.01},
                                          {"motion", 24, 0.05, 0.01}};
  int train_videos = 300;
  int val_videos = 60;
  int test_videos = 60;
  double alpha_s = 0.25;
  // Frames this close to an action boundary blend linearly toward the next
  // action's prototype; this is the signal that makes anticipation solvable.
  double blend_window_s = 1.5;
  // Segments starting earlier than this serve as context only and get no
  // label row; keep it >= the model's observation window.
  double min_history_s = 3.5;
  std::uint64_t seed = 1;

  int num_actions() const { return num_verbs * num_nouns; }

  void validate() const {
    if (num_verbs < 1 || num_nouns < 1)
      throw ConfigError("world: vocab sizes must be positive");
    if (min_segment_s <= 0.0 || max_segment_s < min_segment_s)
      throw ConfigError("world: segment duration range is invalid");
    if (segments_per_video < 1)
      throw ConfigError("world: segments_per_video must be >= 1");
    if (alpha_s <= 0.0) throw ConfigError("world: alpha_s must be positive");
    if (blend_window_s < 0.0)
      throw ConfigError("world: blend_window_s must be >= 0");
    if (train_videos < 0 || val_videos < 0 || test_videos < 0)
      throw ConfigError("world: video counts must be >= 0");
    if (modalities.empty()) throw ConfigError("world: no modalities");
    for (const auto& m : modalities) {
      if (m.name.empty()) throw ConfigError("world: modality without a name");
      if (m.dim < 2) throw ConfigError("world: modality dims must be >= 2");
      if (m.noise_std < 0.0 || m.drift_std < 0.0)
        throw ConfigError("world: noise levels must be >= 0");
    }
    if (!transition.empty()) {
      const int a = num_actions();
      if (static_cast<int>(transition.size()) != a * a)
        throw ConfigError("world: transition matrix must be " +
                          std::to_string(a) + "x" + std::to_string(a));
      for (int r = 0; r < a; ++r) {
        double s = 0.0;
        for (int c = 0; c < a; ++c) {
          const double p = transition[static_cast<std::size_t>(r) * a + c];
          if (p < 0.0) throw ConfigError("world: negative transition entry");
          s += p;
        }
        if (std::abs(s - 1.0) > 1e-9)
          throw ConfigError("world: transition row " + std::to_string(r) +
                            " sums to " + std::to_string(s));
      }
    }
    if (transition_dominance <= 0.0 || transition_dominance > 1.0)
      throw ConfigError("world: transition_dominance must be in (0, 1]");
  }
};

struct SegmentRow {
  std::string video_id;
  double start_s = 0.0;
  int action_id = -1;
  std::string split;
};

struct ModalityInfo {
  std::string name;
  int dim = 0;
  double alpha_s = 0.0;
};

struct DatasetManifest {
  ActionVocab vocab;
  std::vector<SegmentRow> segments;
  std::vector<ModalityInfo> modalities;
};

namespace detail {

inline std::string fmt9(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", x);
  return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s, const std::string& file,
                           int line) {
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw DataError(file + ":" + std::to_string(line) +
                    ": malformed number '" + s + "'");
  return x;
}

inline int parse_int(const std::string& s, const std::string& file, int line) {
  const double x = parse_double(s, file, line);
  const int k = static_cast<int>(std::llround(x));
  if (std::abs(x - k) > 1e-9)
    throw DataError(file + ":" + std::to_string(line) +
                    ": expected integer, got '" + s + "'");
  return k;
}

}  // namespace detail

// Per-action unit-norm prototype vectors for one modality, a deterministic
// function of the world seed.
inline std::vector<Tensor> action_prototypes(const WorldConfig& cfg,
                                             const ModalitySpec& m) {
  Rng rng(mix_seed(cfg.seed, "proto." + m.name));
  std::vector<Tensor> protos;
  for (int a = 0; a < cfg.num_actions(); ++a) {
    Tensor p({m.dim});
    for (double& x : p.v) x = rng.normal();
    const double n = p.norm();
    for (double& x : p.v) x /= n;
    protos.push_back(std::move(p));
  }
  return protos;
}

inline std::vector<double> make_transition(const WorldConfig& cfg) {
  if (!cfg.transition.empty()) return cfg.transition;
  const int a = cfg.num_actions();
  Rng rng(mix_seed(cfg.seed, "transition"));
  std::vector<double> t(static_cast<std::size_t>(a) * a, 0.0);
  for (int r = 0; r < a; ++r) {
    const int successor = a == 1 ? 0 : (r + 1 + rng.uniform_int(a - 1)) % a;
    const double rest =
        a == 1 ? 0.0 : (1.0 - cfg.transition_dominance) / (a - 1);
    for (int c = 0; c < a; ++c)
      t[static_cast<std::size_t>(r) * a + c] = (c == successor)
                                                   ? cfg.transition_dominance
                                                   : rest;
    if (a == 1) t[0] = 1.0;
  }
  return t;
}

// Writes one procedurally generated dataset. Every video draws from its own
// seed stream (derived from the global seed and the video id), so the output
// is byte-identical for a given config regardless of generation order.
inline DatasetManifest gen_dataset(const WorldConfig& cfg,
                                   const std::string& out_dir) {
  namespace fs = std::filesystem;
  cfg.validate();
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "features", ec);
  if (ec)
    throw IoError("cannot create output directory '" + out_dir +
                  "': " + ec.message());

  DatasetManifest manifest;
  manifest.vocab = ActionVocab::full_grid(cfg.num_verbs, cfg.num_nouns);
  for (const auto& m : cfg.modalities)
    manifest.modalities.push_back({m.name, m.dim, cfg.alpha_s});

  const std::vector<double> transition = make_transition(cfg);
  std::vector<std::vector<Tensor>> protos;
  for (const auto& m : cfg.modalities)
    protos.push_back(action_prototypes(cfg, m));

  auto open_out = [&](const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write '" + p.string() + "'");
    return f;
  };

  {
    auto f = open_out(fs::path(out_dir) / "verbs.csv");
    f << "id,name\n";
    for (int v = 0; v < manifest.vocab.num_verbs(); ++v)
      f << v << "," << manifest.vocab.verbs[static_cast<std::size_t>(v)] << "\n";
  }
  {
    auto f = open_out(fs::path(out_dir) / "nouns.csv");
    f << "id,name\n";
    for (int n = 0; n < manifest.vocab.num_nouns(); ++n)
      f << n << "," << manifest.vocab.nouns[static_cast<std::size_t>(n)] << "\n";
  }
  {
    auto f = open_out(fs::path(out_dir) / "actions.csv");
    f << "action_id,verb_id,noun_id\n";
    for (int a = 0; a < manifest.vocab.num_actions(); ++a)
      f << a << "," << manifest.vocab.verb_of(a) << ","
        << manifest.vocab.noun_of(a) << "\n";
  }
  {
    auto f = open_out(fs::path(out_dir) / "manifest.csv");
    f << "modality,dim,alpha_s\n";
    for (const auto& m : cfg.modalities)
      f << m.name << "," << m.dim << "," << detail::fmt9(cfg.alpha_s) << "\n";
  }

  const int num_actions = cfg.num_actions();
  auto gen_video = [&](const std::string& video_id, const std::string& split,
                       std::ofstream& segments_out) {
    Rng rng(mix_seed(cfg.seed, "video." + video_id));
    std::vector<int> actions;
    std::vector<double> starts;
    std::vector<double> durations;
    double t = 0.0;
    for (int s = 0; s < cfg.segments_per_video; ++s) {
      int a;
      if (s == 0) {
        a = rng.uniform_int(num_actions);
      } else {
        const double u = rng.uniform();
        double acc = 0.0;
        a = num_actions - 1;
        for (int c = 0; c < num_actions; ++c) {
          acc += transition[static_cast<std::size_t>(actions.back()) *
                                num_actions +
                            c];
          if (u < acc) {
            a = c;
            break;
          }
        }
      }
      const double raw = rng.uniform(cfg.min_segment_s, cfg.max_segment_s);
      const double dur =
          std::max(1LL, std::llround(raw / cfg.alpha_s)) * cfg.alpha_s;
      actions.push_back(a);
      starts.push_back(t);
      durations.push_back(dur);
      t += dur;
    }
    const double video_end = t;
    const int frames = static_cast<int>(std::llround(video_end / cfg.alpha_s)) + 1;

    for (std::size_t mi = 0; mi < cfg.modalities.size(); ++mi) {
      const ModalitySpec& m = cfg.modalities[mi];
      auto f = open_out(fs::path(out_dir) / "features" /
                        (video_id + "." + m.name + ".csv"));
      f << "time_s";
      for (int d = 0; d < m.dim; ++d) f << ",f" << d;
      f << "\n";
      Tensor drift = Tensor::zeros({m.dim});
      int seg = 0;
      for (int k = 0; k < frames; ++k) {
        const double time = k * cfg.alpha_s;
        while (seg + 1 < static_cast<int>(starts.size()) &&
               time >= starts[static_cast<std::size_t>(seg + 1)] - 1e-9)
          ++seg;
        const Tensor& proto = protos[mi][static_cast<std::size_t>(
            actions[static_cast<std::size_t>(seg)])];
        Tensor base = proto;
        if (seg + 1 < static_cast<int>(starts.size()) && cfg.blend_window_s > 0.0) {
          const double boundary = starts[static_cast<std::size_t>(seg + 1)];
          const double gap = boundary - time;
          if (gap < cfg.blend_window_s - 1e-9) {
            const double w = 1.0 - gap / cfg.blend_window_s;
            const Tensor& next = protos[mi][static_cast<std::size_t>(
                actions[static_cast<std::size_t>(seg + 1)])];
            for (int d = 0; d < m.dim; ++d)
              base.v[d] = (1.0 - w) * proto.v[d] + w * next.v[d];
          }
        }
        f << detail::fmt9(time);
        for (int d = 0; d < m.dim; ++d) {
          drift.v[d] += m.drift_std * rng.normal();
          const double value = base.v[d] + drift.v[d] + m.noise_std * rng.normal();
          f << "," << detail::fmt9(value);
        }
        f << "\n";
      }
    }

    for (std::size_t s = 0; s < starts.size(); ++s) {
      if (starts[s] < cfg.min_history_s - 1e-9) continue;
      SegmentRow row{video_id, starts[s], actions[s], split};
      manifest.segments.push_back(row);
      segments_out << row.video_id << "," << detail::fmt9(row.start_s) << ","
                   << row.action_id << "," << row.split << "\n";
    }
  };

  auto segments_out = open_out(fs::path(out_dir) / "segments.csv");
  segments_out << "video_id,action_start_s,action_id,split\n";
  const std::pair<const char*, int> splits[] = {{"train", cfg.train_videos},
                                                {"val", cfg.val_videos},
                                                {"test", cfg.test_videos}};
  for (const auto& [split, count] : splits) {
    for (int i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s%04d", split, i);
      gen_video(id, split, segments_out);
    }
  }
  return manifest;
}

// Frame rows of one (video, modality) file, on an exact alpha grid.
struct FeatureTable {
  double t0 = 0.0;
  double alpha = 0.0;
  std::vector<Tensor> rows;
  std::string file;

  double t_last() const {
    return t0 + (static_cast<int>(rows.size()) - 1) * alpha;
  }

  const Tensor& frame_at(double time) const {
    const double r = (time - t0) / alpha;
    const long long k = std::llround(r);
    if (std::abs(r - static_cast<double>(k)) > 1e-6 || k < 0 ||
        k >= static_cast<long long>(rows.size()))
      throw DataError(file + ": no frame at t=" + detail::fmt9(time) +
                      " (coverage gap)");
    return rows[static_cast<std::size_t>(k)];
  }
};

// Loaded dataset: validated manifest plus in-memory feature tables.
class Dataset {
 public:
  // required_history_s is the observation span each labeled segment must be
  // covered for; keep it equal to the model's window.
  static Dataset load(const std::string& dir, double required_history_s = 3.5) {
    namespace fs = std::filesystem;
    Dataset ds;
    ds.dir_ = dir;

    auto read_lines = [&](const std::string& name) {
      const std::string path = (fs::path(dir) / name).string();
      std::ifstream f(path, std::ios::binary);
      if (!f) throw DataError("missing file '" + path + "'");
      std::vector<std::string> lines;
      std::string line;
      while (std::getline(f, line)) lines.push_back(line);
      if (lines.empty()) throw DataError(path + ": empty file");
      return std::make_pair(path, lines);
    };

    {
      auto [path, lines] = read_lines("manifest.csv");
      if (lines[0] != "modality,dim,alpha_s")
        throw DataError(path + ":1: unexpected header '" + lines[0] + "'");
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cols = detail::split_csv_line(lines[i]);
        if (cols.size() != 3)
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": expected 3 columns");
        ModalityInfo m;
        m.name = cols[0];
        m.dim = detail::parse_int(cols[1], path, static_cast<int>(i + 1));
        m.alpha_s = detail::parse_double(cols[2], path, static_cast<int>(i + 1));
        if (m.dim < 1 || m.alpha_s <= 0.0)
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": invalid modality row");
        ds.manifest_.modalities.push_back(std::move(m));
      }
      if (ds.manifest_.modalities.empty())
        throw DataError(path + ": no modalities");
      for (const auto& m : ds.manifest_.modalities)
        if (std::abs(m.alpha_s - ds.manifest_.modalities[0].alpha_s) > 1e-12)
          throw DataError(path + ": modalities disagree on alpha_s");
    }

    auto read_names = [&](const std::string& name, const char* header) {
      auto [path, lines] = read_lines(name);
      if (lines[0] != header)
        throw DataError(path + ":1: unexpected header '" + lines[0] + "'");
      std::vector<std::string> out;
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cols = detail::split_csv_line(lines[i]);
        if (cols.size() != 2)
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": expected 2 columns");
        const int id = detail::parse_int(cols[0], path, static_cast<int>(i + 1));
        if (id != static_cast<int>(out.size()))
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": ids must be dense and ascending");
        out.push_back(cols[1]);
      }
      return out;
    };
    ds.manifest_.vocab.verbs = read_names("verbs.csv", "id,name");
    ds.manifest_.vocab.nouns = read_names("nouns.csv", "id,name");

    {
      auto [path, lines] = read_lines("actions.csv");
      if (lines[0] != "action_id,verb_id,noun_id")
        throw DataError(path + ":1: unexpected header '" + lines[0] + "'");
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cols = detail::split_csv_line(lines[i]);
        if (cols.size() != 3)
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": expected 3 columns");
        const int line_no = static_cast<int>(i + 1);
        const int id = detail::parse_int(cols[0], path, line_no);
        if (id != ds.manifest_.vocab.num_actions())
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": action ids must be dense and ascending");
        const int v = detail::parse_int(cols[1], path, line_no);
        const int n = detail::parse_int(cols[2], path, line_no);
        ds.manifest_.vocab.actions.emplace_back(v, n);
      }
      try {
        ds.manifest_.vocab.validate();
      } catch (const DataError& e) {
        throw DataError(path + ": " + e.what());
      }
    }

    std::map<std::string, std::string> video_split;
    {
      auto [path, lines] = read_lines("segments.csv");
      if (lines[0] != "video_id,action_start_s,action_id,split")
        throw DataError(path + ":1: unexpected header '" + lines[0] + "'");
      for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        auto cols = detail::split_csv_line(lines[i]);
        if (cols.size() != 4)
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": expected 4 columns");
        const int line_no = static_cast<int>(i + 1);
        SegmentRow row;
        row.video_id = cols[0];
        row.start_s = detail::parse_double(cols[1], path, line_no);
        row.action_id = detail::parse_int(cols[2], path, line_no);
        row.split = cols[3];
        if (row.action_id < 0 ||
            row.action_id >= ds.manifest_.vocab.num_actions())
          throw DataError(path + ":" + std::to_string(i + 1) + ": action id " +
                          std::to_string(row.action_id) +
                          " not present in actions.csv");
        if (row.split != "train" && row.split != "val" && row.split != "test")
          throw DataError(path + ":" + std::to_string(i + 1) +
                          ": unknown split '" + row.split + "'");
        auto it = video_split.find(row.video_id);
        if (it == video_split.end())
          video_split.emplace(row.video_id, row.split);
        else if (it->second != row.split)
          throw DataError(path + ":" + std::to_string(i + 1) + ": video '" +
                          row.video_id + "' appears in more than one split");
        ds.manifest_.segments.push_back(std::move(row));
      }
    }

    // Parse every referenced feature file and check grid + coverage.
    const double alpha = ds.manifest_.modalities[0].alpha_s;
    for (const auto& [video, split] : video_split) {
      (void)split;
      for (const auto& m : ds.manifest_.modalities) {
        const std::string path =
            (fs::path(dir) / "features" / (video + "." + m.name + ".csv"))
                .string();
        std::ifstream f(path, std::ios::binary);
        if (!f) throw DataError("missing feature file '" + path + "'");
        FeatureTable table;
        table.file = path;
        table.alpha = alpha;
        std::string line;
        int line_no = 0;
        while (std::getline(f, line)) {
          ++line_no;
          if (line.empty()) continue;
          if (line_no == 1) {
            std::string expect = "time_s";
            for (int d = 0; d < m.dim; ++d) expect += ",f" + std::to_string(d);
            std::string got = line;
            if (!got.empty() && got.back() == '\r') got.pop_back();
            if (got != expect)
              throw DataError(path + ":1: unexpected header");
            continue;
          }
          auto cols = detail::split_csv_line(line);
          if (static_cast<int>(cols.size()) != m.dim + 1)
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(m.dim + 1) +
                            " columns, got " + std::to_string(cols.size()));
          const double t = detail::parse_double(cols[0], path, line_no);
          Tensor frame({m.dim});
          for (int d = 0; d < m.dim; ++d)
            frame.v[d] = detail::parse_double(cols[1 + d], path, line_no);
          if (table.rows.empty()) {
            table.t0 = t;
          } else {
            const double expect_t =
                table.t0 + static_cast<double>(table.rows.size()) * alpha;
            if (std::abs(t - expect_t) > 1e-6)
              throw DataError(path + ":" + std::to_string(line_no) +
                              ": coverage gap, expected t=" +
                              detail::fmt9(expect_t) + " got t=" +
                              detail::fmt9(t));
          }
          table.rows.push_back(std::move(frame));
        }
        if (table.rows.empty()) throw DataError(path + ": no frames");
        ds.tables_.emplace(video + "|" + m.name, std::move(table));
      }
    }

    for (const auto& seg : ds.manifest_.segments) {
      for (const auto& m : ds.manifest_.modalities) {
        const FeatureTable& t = ds.features(seg.video_id, m.name);
        if (t.t0 > seg.start_s - required_history_s + 1e-9 ||
            t.t_last() < seg.start_s - 1e-9)
          throw DataError(t.file + ": does not cover [" +
                          detail::fmt9(seg.start_s - required_history_s) +
                          ", " + detail::fmt9(seg.start_s) +
                          "] required by the segment at t=" +
                          detail::fmt9(seg.start_s));
      }
    }
    return ds;
  }

  const DatasetManifest& manifest() const { return manifest_; }
  const std::string& dir() const { return dir_; }

  double alpha_s() const { return manifest_.modalities[0].alpha_s; }

  const ModalityInfo& modality(const std::string& name) const {
    for (const auto& m : manifest_.modalities)
      if (m.name == name) return m;
    throw DataError("modality '" + name + "' not present in the dataset");
  }

  const FeatureTable& features(const std::string& video,
                               const std::string& modality) const {
    auto it = tables_.find(video + "|" + modality);
    if (it == tables_.end())
      throw DataError("no features for video '" + video + "' modality '" +
                      modality + "'");
    return it->second;
  }

  // Labels seen in the given split, one entry per segment, in file order.
  std::vector<const SegmentRow*> split_segments(const std::string& split) const {
    std::vector<const SegmentRow*> out;
    for (const auto& seg : manifest_.segments)
      if (seg.split == split) out.push_back(&seg);
    return out;
  }

 private:
  DatasetManifest manifest_;
  std::map<std::string, FeatureTable> tables_;
  std::string dir_;
};

// Materializes per-segment samples for one modality. Frames are copied out of
// the dataset tables at the timeline's offsets.
inline std::vector<AnticipationSample> make_samples(
    const Dataset& ds, const std::string& split, const std::string& modality,
    const TimelineConfig& tcfg, bool with_future_truth = true) {
  const Timeline tl = timeline(tcfg);
  (void)ds.modality(modality);
  std::vector<AnticipationSample> out;
  for (const SegmentRow* seg : ds.split_segments(split)) {
    const FeatureTable& table = ds.features(seg->video_id, modality);
    AnticipationSample s;
    s.video_id = seg->video_id;
    s.action_start_s = seg->start_s;
    s.action = seg->action_id;
    s.verb = ds.manifest().vocab.verb_of(seg->action_id);
    s.noun = ds.manifest().vocab.noun_of(seg->action_id);
    for (double t : tl.observed_times)
      s.observed.push_back(table.frame_at(seg->start_s + t));
    if (with_future_truth)
      for (double t : tl.imagined_times)
        s.future_truth.push_back(table.frame_at(seg->start_s + t));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace foresight
