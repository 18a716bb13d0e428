#pragma once

// Adam optimisation of a ScorerModel over whole query groups, with periodic
// validation Recall@m@k, patience-based early stopping and best-checkpoint
// selection; plus temperature grid search and dataset evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cascade_ltr/dataio.hpp"
#include "cascade_ltr/losses.hpp"
#include "cascade_ltr/metrics.hpp"
#include "cascade_ltr/model.hpp"

namespace cascade_ltr {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
};

// One bias-corrected Adam update. The moment buffers are created on the
// first call; params and grads must keep their shapes across calls.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options);

struct EarlyStopConfig {
  // Validation cadence in optimizer steps; 0 evaluates once per epoch.
  std::size_t eval_every = 0;
  std::size_t patience = 3;
  double min_delta = 1e-5;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t max_epochs = 6;
  std::size_t batch_queries = 16;
  EarlyStopConfig early_stop;
  // Validation metric Recall@eval_m@eval_k; NDCG uses eval_gain.
  std::size_t eval_m = 0;
  std::size_t eval_k = 0;
  GainMode eval_gain = GainMode::kExponential;
  std::vector<double> tau_grid{0.1, 0.3, 1.0, 3.0, 10.0};
  std::uint64_t seed = 0;
  // 0 selects default_thread_count().
  std::size_t threads = 0;

  void validate() const;
};

struct EvalRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per-query loss since the previous record
  double val_recall = 0.0;
  double val_ndcg = 0.0;
  std::optional<double> alpha;

  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

enum class StopReason { kMaxEpochs, kEarlyStop };

std::string to_string(StopReason reason);

struct TrainHistory {
  std::vector<EvalRecord> records;
  std::vector<double> epoch_train_loss;
  StopReason stop_reason = StopReason::kMaxEpochs;
  std::size_t best_record = 0;
  std::vector<std::string> flags;

  double best_val_recall() const { return records.at(best_record).val_recall; }

  // `step,train_loss,val_recall,val_ndcg[,alpha]`.
  void write_csv(std::ostream& out, bool with_alpha) const;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  ScorerModel model;            // best-validation checkpoint
  std::optional<double> alpha;  // ARF weight at that checkpoint
  TrainHistory history;
};

TrainResult train(ScorerModel model, const Dataset& train_ds, const Dataset& valid_ds,
                  const LossSpec& loss, const TrainConfig& config);

struct TauTrial {
  double tau = 0.0;
  TrainResult result;
};

struct GridSearchResult {
  double best_tau = 0.0;
  std::size_t best_index = 0;
  std::vector<TauTrial> trials;
};

using ModelFactory = std::function<ScorerModel(std::uint64_t seed)>;

// One training run per tau in config.tau_grid, each with seeds derived from
// config.seed and the grid index; picks the highest best-validation recall
// (earliest grid point on ties).
GridSearchResult grid_search_tau(const ModelFactory& make_model, const Dataset& train_ds,
                                 const Dataset& valid_ds, const LossSpec& loss,
                                 const TrainConfig& config);

MetricReport evaluate(const ScorerModel& model, const Dataset& ds,
                      const std::vector<MetricSpec>& metrics, std::size_t threads = 0);

}  // namespace cascade_ltr
