#pragma once

#include <fstream>
#include <string>

#include "json.hpp"

#include "foresight/config.hpp"

// Checkpoint files are JSON; nlohmann serializes doubles with
// shortest-round-trip formatting, so a reloaded model reproduces evaluation
// output bit for bit.
namespace foresight {

struct Checkpoint {
  RunConfig config;
  std::string modality;
  int feature_dim = 0;
  int num_actions = 0;
  int epoch = -1;
  double val_top5_at_1s = 0.0;
  std::uint64_t config_hash = 0;
  ModelParams params;
};

inline void save_checkpoint(const std::string& path, Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "foresight-checkpoint-v1";
  j["modality"] = ckpt.modality;
  j["feature_dim"] = ckpt.feature_dim;
  j["num_actions"] = ckpt.num_actions;
  j["epoch"] = ckpt.epoch;
  j["val_top5_at_1s"] = ckpt.val_top5_at_1s;
  j["config_hash"] = ckpt.config_hash;
  j["config"] = ckpt.config.canonical_text();
  nlohmann::json params = nlohmann::json::object();
  ckpt.params.visit([&](ad::Parameter& p) {
    nlohmann::json t;
    t["shape"] = p.value.shape;
    t["values"] = p.value.v;
    params[p.name] = std::move(t);
  });
  j["params"] = std::move(params);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  f << j.dump();
  f << "\n";
}

namespace checkpoint_detail {

// canonical_text round-trips through the ordinary config parser, with the
// one synthesized value ("default" anticipation times) mapped back.
inline RunConfig config_from_canonical(const std::string& text) {
  std::vector<ConfigEntry> entries = parse_config_text(text);
  std::vector<ConfigEntry> kept;
  for (ConfigEntry& e : entries) {
    if (e.key == "anticipation_times" && e.value == "default") continue;
    kept.push_back(std::move(e));
  }
  return RunConfig::from_entries(kept);
}

}  // namespace checkpoint_detail

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw DataError("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != std::string("foresight-checkpoint-v1"))
    throw DataError("checkpoint '" + path + "' has an unknown format tag");
  Checkpoint ckpt;
  ckpt.modality = j.at("modality").get<std::string>();
  ckpt.feature_dim = j.at("feature_dim").get<int>();
  ckpt.num_actions = j.at("num_actions").get<int>();
  ckpt.epoch = j.at("epoch").get<int>();
  ckpt.val_top5_at_1s = j.at("val_top5_at_1s").get<double>();
  ckpt.config_hash = j.at("config_hash").get<std::uint64_t>();
  ckpt.config = checkpoint_detail::config_from_canonical(
      j.at("config").get<std::string>());
  if (ckpt.config.hash() != ckpt.config_hash)
    throw DataError("checkpoint '" + path +
                    "': embedded config does not match its hash");

  Rng scratch(0);
  ckpt.params = ModelParams::init(ckpt.config.cell, ckpt.feature_dim,
                                  ckpt.config.hidden_dim, ckpt.num_actions,
                                  scratch, ckpt.config.forget_bias);
  const nlohmann::json& params = j.at("params");
  ckpt.params.visit([&](ad::Parameter& p) {
    if (!params.contains(p.name))
      throw DataError("checkpoint '" + path + "' is missing parameter '" +
                      p.name + "'");
    const nlohmann::json& t = params.at(p.name);
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    if (shape != p.value.shape)
      throw DataError("checkpoint '" + path + "': parameter '" + p.name +
                      "' has unexpected shape");
    std::vector<double> values = t.at("values").get<std::vector<double>>();
    if (values.size() != p.value.v.size())
      throw DataError("checkpoint '" + path + "': parameter '" + p.name +
                      "' has wrong element count");
    p.value.v = std::move(values);
    p.velocity = Tensor::zeros(shape);
  });
  return ckpt;
}

}  // namespace foresight
