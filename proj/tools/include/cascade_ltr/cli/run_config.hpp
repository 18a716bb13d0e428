#pragma once

// Flat `key = value` run configuration shared by `train` and `sweep`.
//
// Blank lines and text after '#' are ignored. Booleans are true/false and
// lists are comma-separated. Unknown or repeated keys are errors, and every
// problem in a file is reported in one ValidationError.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cascade_ltr/dataio.hpp"
#include "cascade_ltr/losses.hpp"
#include "cascade_ltr/model.hpp"
#include "cascade_ltr/trainer.hpp"

namespace cascade_ltr::cli {

struct DataConfig {
  std::string train_path;  // empty: generate synthetic data
  std::string valid_path;  // empty: split off the training data
  std::string test_path;   // optional; the final report uses it when set
  SyntheticSpec synthetic;
  std::size_t valid_queries = 0;  // takes precedence over valid_fraction
  std::size_t test_queries = 0;   // held out from generated or loaded training data
  double valid_fraction = 0.2;
  bool log1p = false;

  bool synthetic_data() const { return train_path.empty(); }
};

struct ModelConfig {
  std::vector<std::size_t> hidden{64, 32};
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LossSpec loss;
  TrainConfig train;
  bool grid_search = false;
  std::vector<std::string> metrics;
  std::string output_dir;

  // Resolved `key = value` pairs in canonical form, every key present.
  std::map<std::string, std::string> entries;
};

RunConfig parse_run_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_run_config(const std::string& path);

// Canonical text form; parse_run_config(format_run_config(c)) reproduces c.
std::string format_run_config(const RunConfig& config);

// Every accepted key, in canonical order.
const std::vector<std::string>& run_config_keys();

}  // namespace cascade_ltr::cli
