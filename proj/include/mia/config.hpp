#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mia/boundary.hpp"
#include "mia/dataset.hpp"
#include "mia/eval.hpp"
#include "mia/membership.hpp"
#include "mia/model.hpp"

namespace mia {

struct DataConfig {
  // Used when no dataset paths are given.
  SyntheticSpec synthetic;
  std::size_t n_train_per_class = 50;
  std::size_t n_test_per_class = 100;
  // Optional MIADS1 inputs; all three must be set together.
  std::string train_path;
  std::string test_path;
  std::string aux_path;

  bool from_files() const { return !train_path.empty(); }
};

struct ModelConfig {
  std::string path;  // load instead of training when set
  TrainConfig train;
};

struct AttackConfig {
  AttackKind kind = AttackKind::kMultiTargeted;
  HsjaParams params;
  MultiTargetConfig multi;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out_dir = "out";
  DataConfig data;
  ModelConfig model;
  AttackConfig attack;
  ScoreKind score = ScoreKind::kRelativeDistance;
  EvalKind eval = EvalKind::kCBalanced;
  std::size_t n_per_side = 50;
  std::size_t stability_repeats = 10;
  bool stability_reference = true;  // anchor d_min with a multi-targeted run
  std::string oracle_url;           // empty means in-process
};

// Strict parse: unknown keys and out-of-range values raise ConfigError with
// the offending key path (e.g. "attack.r").
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

// Canonical JSON echo of a config (every field, defaults included).
std::string config_to_json(const ExperimentConfig& config);

// Sub-seeds derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose,
                          std::uint64_t index = 0);

}  // namespace mia
