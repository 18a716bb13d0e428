#include "cascade_ltr/cli/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "cascade_ltr/cli/commands.hpp"
#include "cascade_ltr/gradcheck.hpp"
#include "cascade_ltr/losses.hpp"
#include "cascade_ltr/metrics.hpp"
#include "cascade_ltr/model.hpp"

namespace cascade_ltr::cli {

namespace {

using Vec = std::vector<double>;

Vec distinct_values(std::mt19937_64& rng, std::size_t n, double min_gap) {
  std::normal_distribution<double> normal;
  for (;;) {
    Vec v(n);
    for (double& x : v) x = normal(rng);
    Vec sorted = v;
    std::sort(sorted.begin(), sorted.end());
    bool ok = true;
    for (std::size_t i = 1; i < n; ++i) ok = ok && sorted[i] - sorted[i - 1] >= min_gap;
    if (ok) return v;
  }
}

Vec permutation_labels(std::mt19937_64& rng, std::size_t n) {
  Vec labels(n);
  std::iota(labels.begin(), labels.end(), 1.0);
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

Vec graded_labels(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> grade(0, 4);
  Vec labels(n);
  for (double& l : labels) l = grade(rng);
  return labels;
}

std::string format(double v) {
  std::ostringstream out;
  out << std::setprecision(3) << v;
  return out.str();
}

class Suite {
 public:
  explicit Suite(const SelfCheckOptions& options) : options_(options), rng_(options.seed) {}

  // check returns an empty string on success, otherwise the failure detail.
  void add(const std::string& name, const std::function<std::string(std::mt19937_64&)>& check) {
    PropertyOutcome outcome{name, false, ""};
    try {
      outcome.detail = check(rng_);
      outcome.passed = outcome.detail.empty();
    } catch (const std::exception& e) {
      outcome.detail = std::string("exception: ") + e.what();
    }
    summary_.properties.push_back(outcome);
  }

  Matrix relaxed(const Vec& y, double tau) const {
    Graph g;
    return options_.sort(g.constant(Matrix::column(y)), tau).p_hat.value();
  }

  SelfCheckSummary take() { return std::move(summary_); }

 private:
  SelfCheckOptions options_;
  std::mt19937_64 rng_;
  SelfCheckSummary summary_;
};

void loss_gradients(Suite& suite) {
  for (LossKind kind : {LossKind::kSoftmax, LossKind::kRankNet, LossKind::kApproxNdcg, LossKind::kLambdaOpa,
                        LossKind::kLambdaNdcg, LossKind::kLambdaNdcgAtK, LossKind::kLambdaRecall,
                        LossKind::kNeuralSortCe, LossKind::kLRelax, LossKind::kArf}) {
    suite.add("gradient " + to_string(kind), [kind](std::mt19937_64& rng) {
      double worst = 0.0;
      for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 3 + static_cast<std::size_t>(trial) % 8;
        const Vec scores = distinct_values(rng, n, 1e-3);
        const Vec labels = trial % 2 ? graded_labels(rng, n) : permutation_labels(rng, n);
        LossSpec spec;
        spec.kind = kind;
        spec.m = 1 + rng() % n;
        spec.k = 1 + rng() % spec.m;
        spec.tau = 0.5 + trial % 3;
        spec.approx_temp = 0.5;
        std::vector<Matrix> inputs{Matrix::column(scores)};
        if (kind == LossKind::kArf) inputs.push_back(Matrix::scalar(0.3 + 0.1 * (trial % 5)));
        const auto build = [&](Graph&, std::span<const Var> in) {
          return build_loss(in[0], labels, spec, in.size() > 1 ? std::optional<Var>(in[1]) : std::nullopt);
        };
        worst = std::max(worst, check_gradients(build, inputs).rel_error);
      }
      return worst < 1e-4 ? "" : "max relative error " + format(worst);
    });
  }

  suite.add("gradient model parameters", [](std::mt19937_64& rng) {
    const ScorerModel model(3, {4}, Activation::kSelu, rng());
    const Vec labels = permutation_labels(rng, 5);
    std::normal_distribution<double> normal;
    Matrix features(5, 3);
    for (double& v : features.data()) v = normal(rng);
    std::vector<Matrix> inputs;
    for (const Matrix* p : model.parameters()) inputs.push_back(*p);
    const auto build = [&](Graph& g, std::span<const Var> in) {
      Var h = g.constant(features);
      for (std::size_t l = 0; l * 2 < in.size(); ++l) {
        h = add(matmul(h, in[2 * l]), broadcast_row(in[2 * l + 1], h.rows()));
        if (2 * l + 2 < in.size()) h = selu(h);
      }
      return l_relax(h, labels, 1.0, 3, 2);
    };
    const double err = check_gradients(build, inputs).rel_error;
    return err < 1e-4 ? "" : "relative error " + format(err);
  });
}

void neuralsort_properties(Suite& suite) {
  suite.add("neuralsort rows sum to one", [&suite](std::mt19937_64& rng) {
    for (std::size_t n = 2; n <= 50; n += 3) {
      const Matrix p = suite.relaxed(distinct_values(rng, n, 0.0), 0.5);
      for (std::size_t r = 0; r < n; ++r) {
        double total = 0.0;
        for (double v : p.row_span(r)) {
          if (!(v >= 0.0)) return "negative entry at n=" + std::to_string(n);
          total += v;
        }
        if (std::abs(total - 1.0) > 1e-9) return "row sum " + format(total) + " at n=" + std::to_string(n);
      }
    }
    return std::string();
  });

  suite.add("neuralsort argmax recovers the sort", [&suite](std::mt19937_64& rng) {
    for (std::size_t n = 2; n <= 50; n += 3) {
      const Vec y = distinct_values(rng, n, 1e-3);
      const HardPermutation hard = hard_perm_desc(y);
      const Matrix p = suite.relaxed(y, 1e-3);
      for (std::size_t r = 0; r < n; ++r) {
        const auto row = p.row_span(r);
        const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (arg != hard.order[r]) return "row " + std::to_string(r) + " at n=" + std::to_string(n);
      }
    }
    return std::string();
  });

  suite.add("neuralsort shift invariance", [&suite](std::mt19937_64& rng) {
    for (std::size_t n = 2; n <= 50; n += 3) {
      const Vec y = distinct_values(rng, n, 0.0);
      Vec shifted = y;
      for (double& v : shifted) v += 3.25;
      const double diff = max_abs_diff(suite.relaxed(y, 0.7), suite.relaxed(shifted, 0.7));
      if (diff > 1e-12) return "difference " + format(diff) + " at n=" + std::to_string(n);
    }
    return std::string();
  });

  suite.add("neuralsort joint scale invariance", [&suite](std::mt19937_64& rng) {
    for (std::size_t n = 2; n <= 50; n += 3) {
      const Vec y = distinct_values(rng, n, 0.0);
      Vec scaled = y;
      for (double& v : scaled) v *= 4.0;
      const double diff = max_abs_diff(suite.relaxed(y, 0.7), suite.relaxed(scaled, 2.8));
      if (diff > 1e-12) return "difference " + format(diff) + " at n=" + std::to_string(n);
    }
    return std::string();
  });

  suite.add("neuralsort converges to the hard sort", [&suite](std::mt19937_64& rng) {
    for (std::size_t n = 2; n <= 50; n += 3) {
      Vec y(n);
      std::iota(y.begin(), y.end(), 0.0);
      std::shuffle(y.begin(), y.end(), rng);
      const double diff = max_abs_diff(suite.relaxed(y, 0.01), hard_perm_desc(y).matrix());
      if (diff > 1e-6) return "difference " + format(diff) + " at n=" + std::to_string(n);
    }
    return std::string();
  });
}

void metric_properties(Suite& suite) {
  suite.add("recall permutation form equals set form", [](std::mt19937_64& rng) {
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng() % 30;
      // Coarse values so that ties occur.
      std::uniform_int_distribution<int> coarse(0, 5);
      Vec scores(n);
      Vec labels(n);
      for (double& s : scores) s = coarse(rng);
      for (double& l : labels) l = coarse(rng);
      const std::size_t m = 1 + rng() % n;
      const std::size_t k = 1 + rng() % m;
      if (recall_via_permutation(scores, labels, m, k) != recall_m_k(scores, labels, m, k)) {
        return "mismatch at n=" + std::to_string(n);
      }
    }
    return std::string();
  });

  const auto swap_oracle = [](LambdaMetric metric) {
    return [metric](std::mt19937_64& rng) {
      for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng() % 7;
        const Vec scores = distinct_values(rng, n, 1e-3);
        const Vec labels = metric == LambdaMetric::kNdcg ? graded_labels(rng, n) : permutation_labels(rng, n);
        const std::size_t m = 1 + rng() % n;
        const std::size_t k = 1 + rng() % m;
        const LambdaParams params{1.0, m, k, GainMode::kExponential};
        const Matrix delta = lambda_delta(scores, labels, metric, params);
        const auto value = [&](const Vec& s) {
          return metric == LambdaMetric::kNdcg ? ndcg(s, labels, GainMode::kExponential)
                                               : static_cast<double>(k) * recall_m_k(s, labels, m, k);
        };
        const double base = value(scores);
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t h = 0; h < n; ++h) {
            Vec swapped = scores;
            std::swap(swapped[j], swapped[h]);
            const double expected = std::abs(value(swapped) - base);
            if (std::abs(delta(j, h) - expected) > 1e-12) {
              return "pair (" + std::to_string(j) + "," + std::to_string(h) + ") at n=" + std::to_string(n);
            }
          }
        }
      }
      return std::string();
    };
  };
  suite.add("lambda ndcg swap oracle", swap_oracle(LambdaMetric::kNdcg));
  suite.add("lambda recall swap oracle", swap_oracle(LambdaMetric::kRecall));
}

void arf_properties(Suite& suite) {
  suite.add("arf alpha stationarity", [](std::mt19937_64&) {
    for (double global : {0.01, 1.0, 100.0}) {
      const auto slope = [&](double a) {
        Graph g;
        const Var alpha = g.parameter(Matrix::scalar(a));
        g.backward(arf_combine(g.constant(Matrix::scalar(2.0)), g.constant(Matrix::scalar(global)), alpha));
        return alpha.grad()[0];
      };
      double lo = 1e-3;
      double hi = 1e3;
      for (int i = 0; i < 200 && hi - lo > 0.0; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        (slope(mid) < 0.0 ? lo : hi) = mid;
      }
      const double alpha = 0.5 * (lo + hi);
      if (std::abs(alpha * alpha - global) > 1e-6) {
        return "alpha^2 = " + format(alpha * alpha) + " for global loss " + format(global);
      }
    }
    return std::string();
  });
}

}  // namespace

std::size_t SelfCheckSummary::passed() const {
  return static_cast<std::size_t>(
      std::count_if(properties.begin(), properties.end(), [](const PropertyOutcome& p) { return p.passed; }));
}

SelfCheckSummary run_selfcheck(const SelfCheckOptions& options) {
  Suite suite(options);
  loss_gradients(suite);
  neuralsort_properties(suite);
  metric_properties(suite);
  arf_properties(suite);
  return suite.take();
}

int cmd_selfcheck(std::ostream& out, std::ostream& err, const SelfCheckOptions& options) {
  return run_guarded(err, [&] {
    const SelfCheckSummary summary = run_selfcheck(options);
    std::size_t width = 0;
    for (const PropertyOutcome& p : summary.properties) width = std::max(width, p.name.size());
    for (const PropertyOutcome& p : summary.properties) {
      out << std::left << std::setw(static_cast<int>(width) + 2) << p.name << (p.passed ? "PASS" : "FAIL");
      if (!p.passed) out << "  " << p.detail;
      out << "\n";
    }
    out << "run " << summary.run() << ", passed " << summary.passed() << ", failed " << summary.failed() << "\n";
    for (const PropertyOutcome& p : summary.properties) {
      if (!p.passed) err << "property failed: " << p.name << "\n";
    }
    return summary.failed() == 0 ? kExitOk : kExitRuntime;
  });
}

}  // namespace cascade_ltr::cli
