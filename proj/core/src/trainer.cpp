#include "cascade_ltr/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "cascade_ltr/diffsort.hpp"
#include "cascade_ltr/errors.hpp"
#include "cascade_ltr/parallel.hpp"
#include "cascade_ltr/seeding.hpp"

namespace cascade_ltr {

// ---- Adam ------------------------------------------------------------------

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options) {
  if (params.size() != grads.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const Matrix* p : params) {
      state.first_moment.emplace_back(p->rows(), p->cols());
      state.second_moment.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: optimizer state was built for a different parameter list");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(options.beta1, t);
  const double correction2 = 1.0 - std::pow(options.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    const Matrix& g = grads[p];
    if (!w.same_shape(g)) {
      throw DimensionError("adam_step: parameter " + w.shape_string() + " vs gradient " +
                           g.shape_string());
    }
    Matrix& m = state.first_moment[p];
    Matrix& v = state.second_moment[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = options.beta1 * m[i] + (1.0 - options.beta1) * g[i];
      v[i] = options.beta2 * v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

// ---- config / history ------------------------------------------------------

void TrainConfig::validate() const {
  std::string problems;
  // Zero is accepted and freezes the model (useful for probing early stopping).
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    problems += " learning_rate must be non-negative;";
  }
  if (max_epochs < 1) problems += " max_epochs must be >= 1;";
  if (batch_queries < 1) problems += " batch_queries must be >= 1;";
  if (early_stop.patience < 1) problems += " patience must be >= 1;";
  if (!(early_stop.min_delta >= 0.0)) problems += " min_delta must be >= 0;";
  if (eval_k < 1 || eval_m < eval_k) problems += " evaluation needs 1 <= eval_k <= eval_m;";
  for (double tau : tau_grid) {
    if (!(tau > 0.0)) problems += " tau_grid entries must be positive;";
  }
  if (!problems.empty()) throw ValidationError("invalid training config:" + problems);
}

std::string to_string(StopReason reason) {
  return reason == StopReason::kEarlyStop ? "early_stop" : "max_epochs";
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void TrainHistory::write_csv(std::ostream& out, bool with_alpha) const {
  out << "step,train_loss,val_recall,val_ndcg" << (with_alpha ? ",alpha" : "") << '\n';
  for (const EvalRecord& r : records) {
    out << r.step << ',' << format_double(r.train_loss) << ',' << format_double(r.val_recall)
        << ',' << format_double(r.val_ndcg);
    if (with_alpha) out << ',' << (r.alpha ? format_double(*r.alpha) : std::string("nan"));
    out << '\n';
  }
}

// ---- evaluation ------------------------------------------------------------

MetricReport evaluate(const ScorerModel& model, const Dataset& ds,
                      const std::vector<MetricSpec>& metrics, std::size_t threads) {
  const std::size_t q = ds.groups.size();
  std::vector<std::vector<double>> scores(q);
  std::vector<std::vector<double>> labels(q);
  std::vector<std::string> ids(q);
  parallel_for(q, threads == 0 ? default_thread_count() : threads, [&](std::size_t i) {
    scores[i] = model.score(ds.groups[i]);
    labels[i] = ds.groups[i].labels();
    ids[i] = ds.groups[i].query_id;
  });
  MetricReport report = build_report(ids, scores, labels, metrics);
  return report;
}

// ---- training --------------------------------------------------------------

namespace {

struct QueryGradient {
  double loss = 0.0;
  std::vector<Matrix> grads;
  double alpha_grad = 0.0;
};

struct Validation {
  double recall = 0.0;
  double ndcg = 0.0;
};

Validation validate_model(const ScorerModel& model, const Dataset& valid, const TrainConfig& cfg,
                          std::size_t threads) {
  const MetricReport report =
      evaluate(model, valid,
               {MetricSpec::recall(cfg.eval_m, cfg.eval_k), MetricSpec::ndcg_metric(cfg.eval_gain)},
               threads);
  return {report.results[0].mean, report.results[1].mean};
}

// Mean over validation queries of the average per-row maximum of the relaxed
// permutation; close to 1/n when tau is too large to carry ordering signal.
double mean_row_peak(const ScorerModel& model, const Dataset& valid, double tau) {
  const std::size_t limit = std::min<std::size_t>(valid.groups.size(), 50);
  double total = 0.0;
  double uniform = 0.0;
  for (std::size_t q = 0; q < limit; ++q) {
    const Matrix p = neural_sort_matrix(model.score(valid.groups[q]), tau);
    double peak = 0.0;
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const auto row = p.row_span(r);
      peak += *std::max_element(row.begin(), row.end());
    }
    total += peak / static_cast<double>(p.rows());
    uniform += 1.0 / static_cast<double>(p.rows());
  }
  return limit == 0 ? 0.0 : total / uniform;
}

}  // namespace

TrainResult train(ScorerModel model, const Dataset& train_ds, const Dataset& valid_ds,
                  const LossSpec& loss, const TrainConfig& config) {
  config.validate();
  loss.validate();
  if (train_ds.groups.empty() || valid_ds.groups.empty()) {
    throw ValidationError("training and validation datasets must be non-empty");
  }
  if (train_ds.feature_dim != model.input_dim() || valid_ds.feature_dim != model.input_dim()) {
    throw DimensionError("model expects " + std::to_string(model.input_dim()) +
                         " features, datasets have " + std::to_string(train_ds.feature_dim) +
                         " / " + std::to_string(valid_ds.feature_dim));
  }
  for (const QueryGroup& g : train_ds.groups) loss.validate_for(g.size());

  const std::size_t threads = config.threads == 0 ? default_thread_count() : config.threads;
  const bool with_alpha = loss.uses_alpha();
  ArfState arf{loss.alpha_init};
  arf.project();

  const AdamOptions adam_options{config.learning_rate};
  AdamState adam;
  Matrix alpha_param = Matrix::scalar(arf.alpha);

  std::vector<std::size_t> order(train_ds.groups.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(derive_seed(config.seed, 0x5A0F));

  TrainResult result;
  result.model = model;
  result.alpha = with_alpha ? std::optional<double>(arf.alpha) : std::nullopt;
  TrainHistory& history = result.history;

  double best_recall = -std::numeric_limits<double>::infinity();
  double patience_reference = -std::numeric_limits<double>::infinity();
  std::size_t evals_without_gain = 0;
  bool stop = false;

  std::size_t step = 0;
  std::size_t last_eval_step = 0;
  double window_loss = 0.0;
  std::size_t window_count = 0;

  const auto record_eval = [&](std::size_t epoch) {
    const Validation v = validate_model(model, valid_ds, config, threads);
    EvalRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.train_loss = window_count ? window_loss / static_cast<double>(window_count) : 0.0;
    rec.val_recall = v.recall;
    rec.val_ndcg = v.ndcg;
    if (with_alpha) rec.alpha = arf.alpha;
    history.records.push_back(rec);
    window_loss = 0.0;
    window_count = 0;
    last_eval_step = step;

    if (v.recall > best_recall) {
      best_recall = v.recall;
      history.best_record = history.records.size() - 1;
      result.model = model;
      if (with_alpha) result.alpha = arf.alpha;
    }
    if (v.recall > patience_reference + config.early_stop.min_delta) {
      patience_reference = v.recall;
      evals_without_gain = 0;
    } else if (++evals_without_gain >= config.early_stop.patience) {
      stop = true;
      history.stop_reason = StopReason::kEarlyStop;
    }
  };

  std::vector<QueryGradient> batch_grads;
  for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size() && !stop; start += config.batch_queries) {
      const std::size_t end = std::min(order.size(), start + config.batch_queries);
      const std::size_t batch = end - start;
      batch_grads.assign(batch, QueryGradient{});
      parallel_for(batch, threads, [&](std::size_t i) {
        const QueryGroup& group = train_ds.groups[order[start + i]];
        Graph g;
        const ForwardPass pass = forward(g, model, group);
        const std::vector<double> labels = group.labels();
        std::optional<Var> alpha_var;
        if (with_alpha) alpha_var = g.parameter(alpha_param);
        const Var l = build_loss(pass.scores, labels, loss, alpha_var);
        g.backward(l);
        QueryGradient& out = batch_grads[i];
        out.loss = l.value()[0];
        out.grads.reserve(pass.params.size());
        for (const Var& p : pass.params) out.grads.push_back(p.grad());
        if (alpha_var) out.alpha_grad = alpha_var->grad()[0];
      });

      std::vector<Matrix> mean_grads = std::move(batch_grads[0].grads);
      double alpha_grad = batch_grads[0].alpha_grad;
      double batch_loss = batch_grads[0].loss;
      for (std::size_t i = 1; i < batch; ++i) {
        for (std::size_t p = 0; p < mean_grads.size(); ++p) mean_grads[p] += batch_grads[i].grads[p];
        alpha_grad += batch_grads[i].alpha_grad;
        batch_loss += batch_grads[i].loss;
      }
      if (!std::isfinite(batch_loss)) {
        std::string ids;
        for (std::size_t i = start; i < end; ++i) {
          ids += (i == start ? "" : ",") + train_ds.groups[order[i]].query_id;
        }
        throw NumericalError("non-finite " + to_string(loss.kind) + " loss at step " +
                             std::to_string(step + 1) + " (epoch " + std::to_string(epoch) +
                             ", queries " + ids + ")");
      }
      const double inv = 1.0 / static_cast<double>(batch);
      for (Matrix& m : mean_grads) {
        for (double& v : m.data()) v *= inv;
      }

      std::vector<Matrix*> params = model.parameters();
      if (with_alpha) {
        params.push_back(&alpha_param);
        mean_grads.push_back(Matrix::scalar(alpha_grad * inv));
      }
      adam_step(params, mean_grads, adam, adam_options);
      if (with_alpha) {
        arf.alpha = alpha_param[0];
        arf.project();
        alpha_param[0] = arf.alpha;
      }
      if (!model.all_finite()) {
        throw NumericalError("non-finite model parameters after step " + std::to_string(step + 1));
      }
      ++step;
      window_loss += batch_loss;
      window_count += batch;
      epoch_loss += batch_loss;

      if (config.early_stop.eval_every > 0 && step % config.early_stop.eval_every == 0) {
        record_eval(epoch);
      }
    }
    history.epoch_train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    if (config.early_stop.eval_every == 0 && !stop) record_eval(epoch);
  }
  if (!stop && (history.records.empty() || last_eval_step != step)) {
    record_eval(history.epoch_train_loss.empty() ? 0 : history.epoch_train_loss.size() - 1);
    history.stop_reason = StopReason::kMaxEpochs;
  }

  if (loss.uses_tau() && mean_row_peak(result.model, valid_ds, loss.tau) < 2.0) {
    history.flags.push_back("near_uniform_relaxation(tau=" + format_double(loss.tau) + ")");
  }
  return result;
}

GridSearchResult grid_search_tau(const ModelFactory& make_model, const Dataset& train_ds,
                                 const Dataset& valid_ds, const LossSpec& loss,
                                 const TrainConfig& config) {
  if (!loss.uses_tau()) {
    throw ValidationError("grid search over tau needs a NeuralSort-based loss, got " +
                          to_string(loss.kind));
  }
  if (config.tau_grid.empty()) throw ValidationError("tau_grid is empty");
  GridSearchResult out;
  for (std::size_t i = 0; i < config.tau_grid.size(); ++i) {
    LossSpec trial_loss = loss;
    trial_loss.tau = config.tau_grid[i];
    TrainConfig trial_cfg = config;
    trial_cfg.seed = derive_seed(config.seed, 0x7A0 + i);
    ScorerModel model = make_model(derive_seed(config.seed, 0x30DE1 + i));
    out.trials.push_back({config.tau_grid[i],
                          train(std::move(model), train_ds, valid_ds, trial_loss, trial_cfg)});
  }
  for (std::size_t i = 1; i < out.trials.size(); ++i) {
    if (out.trials[i].result.history.best_val_recall() >
        out.trials[out.best_index].result.history.best_val_recall()) {
      out.best_index = i;
    }
  }
  out.best_tau = out.trials[out.best_index].tau;
  return out;
}

}  // namespace cascade_ltr
