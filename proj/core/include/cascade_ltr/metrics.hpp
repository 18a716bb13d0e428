#pragma once

// Hard ranking metrics: ordered pair accuracy, NDCG, NDCG@k and Recall@m@k,
// plus a dataset-level MetricReport. Every ordering uses hard_perm_desc with
// the default tie policy.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cascade_ltr {

enum class GainMode {
  kExponential,      // 2^label - 1
  kLinear,           // label
  kRankExponential,  // 2^r - 1, r = ascending rank of the label (n <= 30)
};

std::string to_string(GainMode mode);
GainMode parse_gain_mode(const std::string& name);

inline constexpr std::size_t kRankExponentialMaxItems = 30;

std::vector<double> gains(std::span<const double> labels, GainMode mode);
bool all_gains_zero(std::span<const double> labels, GainMode mode);

double opa(std::span<const double> scores, std::span<const double> labels);

// Returns 1.0 when every gain is zero.
double ndcg(std::span<const double> scores, std::span<const double> labels,
            GainMode mode = GainMode::kExponential);
double ndcg_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k,
                 GainMode mode = GainMode::kExponential);

// (1/k) |top-m by scores  intersect  top-k by labels|; requires 1 <= k <= m <= n.
double recall_m_k(std::span<const double> scores, std::span<const double> labels, std::size_t m,
                  std::size_t k);
// Same quantity through column masses of hard permutation matrices.
double recall_via_permutation(std::span<const double> scores, std::span<const double> labels,
                              std::size_t m, std::size_t k);

enum class MetricKind { kOpa, kNdcg, kNdcgAtK, kRecall };

struct MetricSpec {
  MetricKind kind = MetricKind::kRecall;
  std::size_t m = 0;
  std::size_t k = 0;
  GainMode gain = GainMode::kExponential;

  static MetricSpec opa_metric() { return {MetricKind::kOpa, 0, 0, GainMode::kExponential}; }
  static MetricSpec ndcg_metric(GainMode g) { return {MetricKind::kNdcg, 0, 0, g}; }
  static MetricSpec ndcg_at(std::size_t k, GainMode g) { return {MetricKind::kNdcgAtK, 0, k, g}; }
  static MetricSpec recall(std::size_t m, std::size_t k) {
    return {MetricKind::kRecall, m, k, GainMode::kExponential};
  }

  // Short name ("recall") and parameter string ("m=30;k=15").
  std::string name() const;
  std::string params() const;
  // Parses "opa", "ndcg", "ndcg@10", "recall@30@15".
  static MetricSpec parse(const std::string& text, GainMode gain);

  double evaluate(std::span<const double> scores, std::span<const double> labels) const;
};

struct MetricResult {
  MetricSpec spec;
  std::vector<double> per_query;
  double mean = 0.0;
  // Queries whose gains were all zero (NDCG reported as 1 by convention).
  std::size_t zero_gain_queries = 0;
};

struct MetricReport {
  std::vector<std::string> query_ids;
  std::vector<MetricResult> results;

  const MetricResult* find(MetricKind kind) const;
  // `query_id,metric,params,value` rows, then one `__mean__` row per metric.
  void write_csv(std::ostream& out) const;
};

// Per-query evaluation; scores[q] and labels[q] belong to query q.
MetricReport build_report(const std::vector<std::string>& query_ids,
                          const std::vector<std::vector<double>>& scores,
                          const std::vector<std::vector<double>>& labels,
                          const std::vector<MetricSpec>& specs);

}  // namespace cascade_ltr
