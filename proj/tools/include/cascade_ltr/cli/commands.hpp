#pragma once

// Subcommands of the `cascade_ltr` tool. Each cmd_* function returns a
// process exit code: 0 success, 1 validation error, 2 runtime or numerical
// failure, 3 I/O error. Messages go to `out`, diagnostics to `err`.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cascade_ltr/cli/run_config.hpp"
#include "cascade_ltr/dataio.hpp"
#include "cascade_ltr/metrics.hpp"
#include "cascade_ltr/trainer.hpp"

namespace cascade_ltr::cli {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2, kExitIo = 3 };

const char* tool_version();
inline constexpr int kSchemaVersion = 1;

// Runs body and maps library exceptions to exit codes, printing the message.
int run_guarded(std::ostream& err, const std::function<int()>& body);

// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

struct LoadedData {
  Dataset train;
  Dataset valid;
  std::optional<Dataset> test;

  // Test set when present, otherwise the validation set.
  const Dataset& report_set() const { return test ? *test : valid; }
};

LoadedData load_data(const RunConfig& config);

struct TrainOutcome {
  TrainResult result;
  double tau = 0.0;
  std::optional<GridSearchResult> grid;
  MetricReport report;
};

// Training and final evaluation without touching the filesystem.
TrainOutcome run_training(const RunConfig& config, const LoadedData& data);

struct PrepareArgs {
  std::string input;
  std::string output;
  PreprocessOptions options;
  bool log1p = false;
};

struct GenerateArgs {
  SyntheticSpec spec;
  std::string output;
};

struct EvaluateArgs {
  std::string model_path;
  std::string data_path;
  std::vector<std::string> metrics{"recall@30@15", "ndcg", "opa"};
  GainMode gain = GainMode::kExponential;
  bool log1p = false;
  std::string output;  // optional report CSV
  std::size_t threads = 0;
};

struct GradcheckArgs {
  LossSpec loss;
  std::size_t items = 8;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
};

struct SweepCell {
  std::size_t train_m = 0;
  std::size_t train_k = 0;
  std::size_t eval_m = 0;
  std::size_t eval_k = 0;
  double recall = 0.0;
};

struct SweepResult {
  std::vector<std::pair<std::size_t, std::size_t>> grid;  // (m, k) with k <= m
  std::vector<SweepCell> cells;                           // train-major
  double consistency = 0.0;
};

// Valid (m, k) pairs of the cartesian product, m-major.
std::vector<std::pair<std::size_t, std::size_t>> sweep_grid(const std::vector<std::size_t>& m_list,
                                                            const std::vector<std::size_t>& k_list);

// Fraction of evaluation cells whose best training cell is the matching one.
// A diagonal cell tied with the best counts as a match.
double diagonal_consistency(const std::vector<std::pair<std::size_t, std::size_t>>& grid,
                            const std::vector<SweepCell>& cells);

// Trains one model per grid pair and evaluates it at every pair.
SweepResult run_sweep(const RunConfig& config, const LoadedData& data,
                      const std::vector<std::pair<std::size_t, std::size_t>>& grid);

int cmd_prepare(const PrepareArgs& args, std::ostream& out, std::ostream& err);
int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err);
int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err);
int cmd_sweep(const std::string& config_path, const std::vector<std::pair<std::size_t, std::size_t>>& grid,
              std::ostream& out, std::ostream& err);

}  // namespace cascade_ltr::cli
