#pragma once

// Per-query training objectives. Every loss takes the model scores as an
// n x 1 differentiable column and the labels as constants, and returns a
// 1 x 1 node.

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "cascade_ltr/diffsort.hpp"
#include "cascade_ltr/metrics.hpp"
#include "cascade_ltr/numgraph.hpp"

namespace cascade_ltr {

enum class LossKind {
  kSoftmax,
  kRankNet,
  kApproxNdcg,
  kLambdaOpa,
  kLambdaNdcg,
  kLambdaNdcgAtK,
  kLambdaRecall,
  kNeuralSortCe,  // L_Global on its own
  kLRelax,
  kArf,
};

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);

enum class SoftmaxTarget { kSoft, kOneHot };
enum class LabelSide { kRelaxed, kHard };

// How the constant label-side permutation of L_Relax / L_Global is built.
struct LabelSideOptions {
  LabelSide side = LabelSide::kRelaxed;
  std::optional<double> tau;  // defaults to the score-side temperature
  bool jitter = false;        // break label ties before relaxing
};

struct LossSpec {
  LossKind kind = LossKind::kLRelax;
  double tau = 1.0;
  std::size_t m = 0;
  std::size_t k = 0;
  double sigma = 1.0;
  double approx_temp = 0.1;
  double alpha_init = 1.0;
  GainMode gain = GainMode::kExponential;
  SoftmaxTarget softmax_target = SoftmaxTarget::kSoft;
  LabelSideOptions label_side;

  bool uses_tau() const;
  bool uses_m() const;
  bool uses_k() const;
  bool uses_alpha() const { return kind == LossKind::kArf; }

  // Checks that the hyperparameters needed by `kind` are present and valid.
  void validate() const;
  // Additionally checks k <= m <= n for a query of size n.
  void validate_for(std::size_t n) const;
};

struct ArfState {
  static constexpr double kMinAbsAlpha = 1e-3;

  double alpha = 1.0;

  // Pushes |alpha| back up to kMinAbsAlpha, keeping the sign (0 -> +).
  void project();
};

Var softmax_ce_loss(Var scores, std::span<const double> labels,
                    SoftmaxTarget target = SoftmaxTarget::kSoft);

Var ranknet_loss(Var scores, std::span<const double> labels, double sigma = 1.0);

enum class LambdaMetric { kOpa, kNdcg, kNdcgAtK, kRecall };

struct LambdaParams {
  double sigma = 1.0;
  std::size_t m = 0;
  std::size_t k = 0;
  GainMode gain = GainMode::kExponential;
};

// |Delta R(j, h)| for every pair, from the current (hard) model ranking.
// Entry [j, h] is the metric change when items j and h swap model positions.
Matrix lambda_delta(std::span<const double> scores, std::span<const double> labels,
                    LambdaMetric metric, const LambdaParams& params);

// (2 / (n (n - 1))) * sum over pairs with v_j > v_h of
//   |Delta R(j, h)| * log2(1 + exp(-sigma (s_j - s_h))).
Var lambda_loss(Var scores, std::span<const double> labels, LambdaMetric metric,
                const LambdaParams& params);

// ApproxNDCG smoothed ranks: 1 + sum_{h != j} sigmoid((s_h - s_j) / temp).
Var approx_ranks(Var scores, double temp);
Var approx_ndcg_loss(Var scores, std::span<const double> labels, double temp = 0.1,
                     GainMode gain = GainMode::kExponential);

// Constant label-side permutation matrix used by the NeuralSort losses.
Matrix label_permutation(std::span<const double> labels, double tau,
                         const LabelSideOptions& options = {});

// -sum_j sum_h Plabel[j, h] * ln(Pscore[j, h]).
Var l_global(Var scores, std::span<const double> labels, double tau,
             const LabelSideOptions& options = {});

// -sum_j mass_k(Plabel)_j * ln(mass_m(Pscore)_j / m).
Var l_relax(Var scores, std::span<const double> labels, double tau, std::size_t m, std::size_t k,
            const LabelSideOptions& options = {});

// relax + global / (2 alpha^2) + ln|alpha|.
Var arf_combine(Var relax, Var global, Var alpha);

Var arf_total(Var scores, std::span<const double> labels, double tau, std::size_t m,
              std::size_t k, Var alpha, const LabelSideOptions& options = {});

// Dispatches on spec.kind. `alpha` is required for kArf and ignored otherwise.
Var build_loss(Var scores, std::span<const double> labels, const LossSpec& spec,
               std::optional<Var> alpha = std::nullopt);

}  // namespace cascade_ltr
