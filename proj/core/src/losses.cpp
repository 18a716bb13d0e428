#include "cascade_ltr/losses.hpp"

#include <cmath>
#include <numbers>

#include "cascade_ltr/errors.hpp"

namespace cascade_ltr {

namespace {

void require_column(Var scores, std::span<const double> labels, std::size_t min_n) {
  if (scores.cols() != 1) {
    throw DimensionError("scores must be an n x 1 column, got " + scores.value().shape_string());
  }
  if (scores.rows() != labels.size()) {
    throw DimensionError("scores (" + std::to_string(scores.rows()) + ") and labels (" +
                         std::to_string(labels.size()) + ") differ in length");
  }
  if (labels.size() < min_n) {
    throw ValidationError("loss requires at least " + std::to_string(min_n) + " items, got " +
                          std::to_string(labels.size()));
  }
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError("temperature tau must be positive, got " + std::to_string(tau));
  }
}

void require_recall_params(std::size_t n, std::size_t m, std::size_t k) {
  if (!(1 <= k && k <= m && m <= n)) {
    throw ValidationError("requires 1 <= k <= m <= n, got m=" + std::to_string(m) +
                          ", k=" + std::to_string(k) + ", n=" + std::to_string(n));
  }
}

// Zero-valued loss that keeps the graph connected to the scores.
Var zero_loss(Var scores) { return scale(sum(scores), 0.0); }

// Weighted pairwise logistic loss shared by RankNet and the Lambda family.
Var pairwise_logistic(Var scores, const Matrix& weights, double sigma) {
  const std::size_t n = scores.rows();
  const Var diffs = pairwise_diff(scores);
  const Var logistic = softplus(scale(diffs, -sigma));
  const Var weighted = mul(scores.graph().constant(weights), logistic);
  const double norm = 2.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
  return scale(sum(weighted), norm / std::numbers::ln2);
}

Matrix apply_label_order(const Matrix& delta, std::span<const double> labels) {
  const std::size_t n = labels.size();
  Matrix w(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t h = 0; h < n; ++h) {
      if (labels[j] > labels[h]) w(j, h) = delta(j, h);
    }
  }
  return w;
}

double ideal_dcg(const std::vector<double>& g, std::span<const double> labels,
                 std::size_t cutoff) {
  const HardPermutation ideal = hard_perm_desc(labels);
  double total = 0.0;
  for (std::size_t pos = 0; pos < cutoff && pos < ideal.size(); ++pos) {
    total += g[ideal.order[pos]] / std::log2(static_cast<double>(pos) + 2.0);
  }
  return total;
}

Var global_from(const RelaxedPermutation& scored, const Matrix& label_p) {
  const Var target = scored.p_hat.graph().constant(label_p);
  return neg(sum(mul(target, log(scored.p_hat))));
}

Var relax_from(const RelaxedPermutation& scored, const Matrix& label_p, std::size_t m,
               std::size_t k) {
  const std::vector<double> relevant = topm_column_mass(label_p, k);
  const Var recalled = topm_column_mass(scored, m);
  // ln(max(mass, eps)) - ln(m): the floor applies before the 1/m scaling.
  const Var log_share = add_scalar(log(recalled), -std::log(static_cast<double>(m)));
  const Var weight = scored.p_hat.graph().constant(Matrix::column(relevant));
  return neg(sum(mul(weight, log_share)));
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kRankNet: return "ranknet";
    case LossKind::kApproxNdcg: return "approx_ndcg";
    case LossKind::kLambdaOpa: return "lambda_opa";
    case LossKind::kLambdaNdcg: return "lambda_ndcg";
    case LossKind::kLambdaNdcgAtK: return "lambda_ndcg_at_k";
    case LossKind::kLambdaRecall: return "lambda_recall";
    case LossKind::kNeuralSortCe: return "neuralsort_ce";
    case LossKind::kLRelax: return "l_relax";
    case LossKind::kArf: return "arf";
  }
  return "unknown";
}

LossKind parse_loss_kind(const std::string& name) {
  for (LossKind kind :
       {LossKind::kSoftmax, LossKind::kRankNet, LossKind::kApproxNdcg, LossKind::kLambdaOpa,
        LossKind::kLambdaNdcg, LossKind::kLambdaNdcgAtK, LossKind::kLambdaRecall,
        LossKind::kNeuralSortCe, LossKind::kLRelax, LossKind::kArf}) {
    if (to_string(kind) == name) return kind;
  }
  throw ValidationError("unknown loss '" + name + "'");
}

// ---- LossSpec --------------------------------------------------------------

bool LossSpec::uses_tau() const {
  return kind == LossKind::kNeuralSortCe || kind == LossKind::kLRelax || kind == LossKind::kArf;
}

bool LossSpec::uses_m() const {
  return kind == LossKind::kLambdaRecall || kind == LossKind::kLRelax || kind == LossKind::kArf;
}

bool LossSpec::uses_k() const { return uses_m() || kind == LossKind::kLambdaNdcgAtK; }

void LossSpec::validate() const {
  std::string problems;
  if (uses_tau() && !(tau > 0.0 && std::isfinite(tau))) problems += " tau must be positive;";
  if (uses_tau() && label_side.tau && !(*label_side.tau > 0.0)) {
    problems += " label_tau must be positive;";
  }
  if (uses_m() && m < 1) problems += " m must be >= 1;";
  if (uses_k() && k < 1) problems += " k must be >= 1;";
  if (uses_m() && k > m) problems += " k must not exceed m;";
  const bool lambda_family = kind == LossKind::kRankNet || kind == LossKind::kLambdaOpa ||
                             kind == LossKind::kLambdaNdcg || kind == LossKind::kLambdaNdcgAtK ||
                             kind == LossKind::kLambdaRecall;
  if (lambda_family && !(sigma > 0.0 && std::isfinite(sigma))) problems += " sigma must be positive;";
  if (kind == LossKind::kApproxNdcg && !(approx_temp > 0.0)) {
    problems += " approx_temp must be positive;";
  }
  if (kind == LossKind::kArf && !(std::isfinite(alpha_init) && alpha_init != 0.0)) {
    problems += " alpha_init must be finite and non-zero;";
  }
  if (!problems.empty()) {
    throw ValidationError("invalid " + to_string(kind) + " loss:" + problems);
  }
}

void LossSpec::validate_for(std::size_t n) const {
  validate();
  if (uses_m()) require_recall_params(n, m, k);
  if (kind == LossKind::kLambdaNdcgAtK && k > n) {
    throw ValidationError("NDCG@k loss requires k <= n, got k=" + std::to_string(k) +
                          ", n=" + std::to_string(n));
  }
}

void ArfState::project() {
  if (std::abs(alpha) < kMinAbsAlpha || !std::isfinite(alpha)) {
    alpha = std::signbit(alpha) && std::isfinite(alpha) ? -kMinAbsAlpha : kMinAbsAlpha;
  }
}

// ---- baselines -------------------------------------------------------------

Var softmax_ce_loss(Var scores, std::span<const double> labels, SoftmaxTarget target) {
  require_column(scores, labels, 2);
  const std::size_t n = labels.size();
  Matrix t(1, n);
  if (target == SoftmaxTarget::kOneHot) {
    t(0, hard_perm_desc(labels).order.front()) = 1.0;
  } else {
    double mx = labels[0];
    for (double v : labels) mx = std::max(mx, v);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      t(0, j) = std::exp(labels[j] - mx);
      total += t(0, j);
    }
    for (std::size_t j = 0; j < n; ++j) t(0, j) /= total;
  }
  const Var log_p = row_log_softmax(transpose(scores));
  return neg(sum(mul(scores.graph().constant(std::move(t)), log_p)));
}

Var ranknet_loss(Var scores, std::span<const double> labels, double sigma) {
  require_column(scores, labels, 2);
  const std::size_t n = labels.size();
  return pairwise_logistic(scores, apply_label_order(Matrix(n, n, 1.0), labels), sigma);
}

Matrix lambda_delta(std::span<const double> scores, std::span<const double> labels,
                    LambdaMetric metric, const LambdaParams& params) {
  const std::size_t n = labels.size();
  if (scores.size() != n) throw DimensionError("scores and labels differ in length");
  if (metric == LambdaMetric::kOpa) return Matrix(n, n, 1.0);

  const std::vector<std::size_t> model_rank = hard_perm_desc(scores).ranks();
  std::vector<double> gain(n, 0.0);
  std::vector<double> inv_discount(n, 0.0);
  switch (metric) {
    case LambdaMetric::kNdcg:
    case LambdaMetric::kNdcgAtK: {
      const std::size_t cutoff = metric == LambdaMetric::kNdcg ? n : params.k;
      if (cutoff < 1 || cutoff > n) {
        throw ValidationError("lambda NDCG@k requires 1 <= k <= n, got k=" +
                              std::to_string(cutoff) + ", n=" + std::to_string(n));
      }
      gain = gains(labels, params.gain);
      const double max_dcg = ideal_dcg(gain, labels, cutoff);
      if (max_dcg <= 0.0) return Matrix(n, n, 0.0);
      for (double& g : gain) g /= max_dcg;
      for (std::size_t j = 0; j < n; ++j) {
        if (model_rank[j] <= cutoff) {
          inv_discount[j] = 1.0 / std::log2(static_cast<double>(model_rank[j]) + 1.0);
        }
      }
      break;
    }
    case LambdaMetric::kRecall: {
      require_recall_params(n, params.m, params.k);
      const std::vector<std::size_t> truth_rank = hard_perm_desc(labels).ranks();
      for (std::size_t j = 0; j < n; ++j) {
        gain[j] = truth_rank[j] <= params.k ? 1.0 : 0.0;
        inv_discount[j] = model_rank[j] <= params.m ? 1.0 : 0.0;
      }
      break;
    }
    case LambdaMetric::kOpa: break;
  }
  Matrix delta(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t h = 0; h < n; ++h) {
      delta(j, h) = std::abs(gain[j] - gain[h]) * std::abs(inv_discount[j] - inv_discount[h]);
    }
  }
  return delta;
}

Var lambda_loss(Var scores, std::span<const double> labels, LambdaMetric metric,
                const LambdaParams& params) {
  require_column(scores, labels, 2);
  if (!(params.sigma > 0.0)) throw ValidationError("sigma must be positive");
  const auto& sv = scores.value().data();
  const Matrix delta = lambda_delta(sv, labels, metric, params);
  return pairwise_logistic(scores, apply_label_order(delta, labels), params.sigma);
}

Var approx_ranks(Var scores, double temp) {
  if (!(temp > 0.0)) throw ValidationError("approx_temp must be positive");
  // pairwise_diff gives s_j - s_h; the smoothed indicator needs s_h - s_j.
  const Var beaten = sigmoid(scale(pairwise_diff(scores), -1.0 / temp));
  // The row sum includes the diagonal sigmoid(0) = 0.5.
  return add_scalar(row_sum(beaten), 0.5);
}

Var approx_ndcg_loss(Var scores, std::span<const double> labels, double temp, GainMode gain) {
  require_column(scores, labels, 2);
  const std::vector<double> g = gains(labels, gain);
  const double max_dcg = ideal_dcg(g, labels, labels.size());
  if (max_dcg <= 0.0) return zero_loss(scores);
  const Var ranks = approx_ranks(scores, temp);
  const Var inv_log = reciprocal(log(add_scalar(ranks, 1.0)));
  const Var weighted = mul(scores.graph().constant(Matrix::column(g)), inv_log);
  return scale(sum(weighted), -std::numbers::ln2 / max_dcg);
}

// ---- NeuralSort losses -----------------------------------------------------

Matrix label_permutation(std::span<const double> labels, double tau,
                         const LabelSideOptions& options) {
  if (options.side == LabelSide::kHard) return hard_perm_desc(labels).matrix();
  const double label_tau = options.tau.value_or(tau);
  require_tau(label_tau);
  if (options.jitter) return neural_sort_matrix(deterministic_jitter(labels), label_tau);
  return neural_sort_matrix(labels, label_tau);
}

Var l_global(Var scores, std::span<const double> labels, double tau,
             const LabelSideOptions& options) {
  require_column(scores, labels, 1);
  require_tau(tau);
  return global_from(neural_sort(scores, tau), label_permutation(labels, tau, options));
}

Var l_relax(Var scores, std::span<const double> labels, double tau, std::size_t m, std::size_t k,
            const LabelSideOptions& options) {
  require_column(scores, labels, 1);
  require_tau(tau);
  require_recall_params(labels.size(), m, k);
  return relax_from(neural_sort(scores, tau), label_permutation(labels, tau, options), m, k);
}

Var arf_combine(Var relax, Var global, Var alpha) {
  if (alpha.rows() != 1 || alpha.cols() != 1) {
    throw DimensionError("alpha must be 1x1, got " + alpha.value().shape_string());
  }
  const Var inv_two_alpha_sq = scale(reciprocal(mul(alpha, alpha)), 0.5);
  return add(add(relax, mul(inv_two_alpha_sq, global)), log(abs(alpha)));
}

Var arf_total(Var scores, std::span<const double> labels, double tau, std::size_t m,
              std::size_t k, Var alpha, const LabelSideOptions& options) {
  require_column(scores, labels, 1);
  require_tau(tau);
  require_recall_params(labels.size(), m, k);
  const RelaxedPermutation scored = neural_sort(scores, tau);
  const Matrix label_p = label_permutation(labels, tau, options);
  return arf_combine(relax_from(scored, label_p, m, k), global_from(scored, label_p), alpha);
}

Var build_loss(Var scores, std::span<const double> labels, const LossSpec& spec,
               std::optional<Var> alpha) {
  const LambdaParams lp{spec.sigma, spec.m, spec.k, spec.gain};
  switch (spec.kind) {
    case LossKind::kSoftmax: return softmax_ce_loss(scores, labels, spec.softmax_target);
    case LossKind::kRankNet: return ranknet_loss(scores, labels, spec.sigma);
    case LossKind::kApproxNdcg: return approx_ndcg_loss(scores, labels, spec.approx_temp, spec.gain);
    case LossKind::kLambdaOpa: return lambda_loss(scores, labels, LambdaMetric::kOpa, lp);
    case LossKind::kLambdaNdcg: return lambda_loss(scores, labels, LambdaMetric::kNdcg, lp);
    case LossKind::kLambdaNdcgAtK: return lambda_loss(scores, labels, LambdaMetric::kNdcgAtK, lp);
    case LossKind::kLambdaRecall: return lambda_loss(scores, labels, LambdaMetric::kRecall, lp);
    case LossKind::kNeuralSortCe: return l_global(scores, labels, spec.tau, spec.label_side);
    case LossKind::kLRelax:
      return l_relax(scores, labels, spec.tau, spec.m, spec.k, spec.label_side);
    case LossKind::kArf:
      if (!alpha) throw ContractError("arf loss needs the alpha parameter");
      return arf_total(scores, labels, spec.tau, spec.m, spec.k, *alpha, spec.label_side);
  }
  throw ContractError("unhandled loss kind");
}

}  // namespace cascade_ltr
