#pragma once

#include "neurostage/eval/protocols.hpp"
#include "neurostage/io/container.hpp"
#include "neurostage/model/config.hpp"
#include "neurostage/train/trainer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace neurostage {

struct DataConfig {
  std::string root;      // directory of subject folders
  std::string features;  // feature cache directory
  std::vector<std::string> subjects;
  std::string split = "dependent";
  bool zscore = true;
  bool things_eeg_counts = false;  // enforce 66,160 / 16,000 samples
};

struct EvalConfig {
  std::vector<int> ks = {1, 5};
  std::vector<std::string> stages = {"I", "II_fine", "III"};
  std::vector<std::string> protocols = {"standard", "coarse_text"};
  std::vector<double> temporal_boundaries_ms = {0,   100, 200, 300, 400, 500,
                                                600, 700, 800, 900, 1000};
  ExpandedSpec expanded;
};

/// Everything a run needs. JSON schema mirrors the field names; every key is
/// optional and falls back to the defaults below.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EvalConfig eval;
};

inline void to_json(nlohmann::json& j, const DataConfig& d) {
  j = nlohmann::json{{"root", d.root},     {"features", d.features},
                     {"subjects", d.subjects}, {"split", d.split},
                     {"zscore", d.zscore}, {"things_eeg_counts", d.things_eeg_counts}};
}
inline void from_json(const nlohmann::json& j, DataConfig& d) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("root", d.root);
  get("features", d.features);
  get("subjects", d.subjects);
  get("split", d.split);
  get("zscore", d.zscore);
  get("things_eeg_counts", d.things_eeg_counts);
}

inline void to_json(nlohmann::json& j, const EvalConfig& e) {
  j = nlohmann::json{{"ks", e.ks},
                     {"stages", e.stages},
                     {"protocols", e.protocols},
                     {"temporal_boundaries_ms", e.temporal_boundaries_ms},
                     {"expanded",
                      {{"images_per_class", e.expanded.images_per_class},
                       {"seed", e.expanded.seed},
                       {"ks", e.expanded.ks}}}};
}
inline void from_json(const nlohmann::json& j, EvalConfig& e) {
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("ks", e.ks);
  get("stages", e.stages);
  get("protocols", e.protocols);
  get("temporal_boundaries_ms", e.temporal_boundaries_ms);
  if (j.contains("expanded")) {
    const auto& x = j.at("expanded");
    if (x.contains("images_per_class")) x.at("images_per_class").get_to(e.expanded.images_per_class);
    if (x.contains("seed")) x.at("seed").get_to(e.expanded.seed);
    if (x.contains("ks")) x.at("ks").get_to(e.expanded.ks);
  }
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json{{"model", c.model}, {"train", c.train}, {"data", c.data}, {"eval", c.eval}};
}
inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  static const std::set<std::string> known = {"model", "train", "data", "eval"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()))
      throw ConfigError("unknown config section '" + it.key() + "'");
  if (j.contains("model")) j.at("model").get_to(c.model);
  if (j.contains("train")) j.at("train").get_to(c.train);
  if (j.contains("data")) j.at("data").get_to(c.data);
  if (j.contains("eval")) j.at("eval").get_to(c.eval);
}

/// "default" (or empty) yields the built-in configuration; otherwise the file
/// is parsed and layered over the defaults.
inline ExperimentConfig load_experiment_config(const std::string& path_or_default) {
  ExperimentConfig c;
  if (path_or_default.empty() || path_or_default == "default") return c;
  const std::filesystem::path p(path_or_default);
  if (!std::filesystem::exists(p)) throw ConfigError("config file not found: " + p.string());
  try {
    nlohmann::json j = nlohmann::json::parse(io::read_text(p), nullptr, true, /*comments*/ true);
    j.get_to(c);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
  c.model.validate();
  c.train.validate();
  return c;
}

}  // namespace neurostage
