#include "cascade_ltr/metrics.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include "cascade_ltr/diffsort.hpp"
#include "cascade_ltr/errors.hpp"

namespace cascade_ltr {

namespace {

void require_same_length(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("scores and labels differ in length (" + std::to_string(scores.size()) +
                          " vs " + std::to_string(labels.size()) + ")");
  }
}

void check_recall_params(std::size_t n, std::size_t m, std::size_t k) {
  if (!(1 <= k && k <= m && m <= n)) {
    throw ValidationError("Recall@m@k requires 1 <= k <= m <= n, got m=" + std::to_string(m) +
                          ", k=" + std::to_string(k) + ", n=" + std::to_string(n));
  }
}

double discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

// Sum of gains over the first `cutoff` positions of `order`.
double dcg(const std::vector<std::size_t>& order, const std::vector<double>& g,
           std::size_t cutoff) {
  double total = 0.0;
  for (std::size_t pos = 0; pos < cutoff && pos < order.size(); ++pos) {
    total += g[order[pos]] * discount(pos + 1);
  }
  return total;
}

double truncated_ndcg(std::span<const double> scores, std::span<const double> labels,
                      std::size_t cutoff, GainMode mode) {
  const std::vector<double> g = gains(labels, mode);
  const double ideal = dcg(hard_perm_desc(labels).order, g, cutoff);
  if (ideal <= 0.0) return 1.0;
  return dcg(hard_perm_desc(scores).order, g, cutoff) / ideal;
}

}  // namespace

std::string to_string(GainMode mode) {
  switch (mode) {
    case GainMode::kExponential: return "exponential";
    case GainMode::kLinear: return "linear";
    case GainMode::kRankExponential: return "rank_exponential";
  }
  return "unknown";
}

GainMode parse_gain_mode(const std::string& name) {
  if (name == "exponential") return GainMode::kExponential;
  if (name == "linear") return GainMode::kLinear;
  if (name == "rank_exponential") return GainMode::kRankExponential;
  throw ValidationError("unknown gain mode '" + name + "'");
}

std::vector<double> gains(std::span<const double> labels, GainMode mode) {
  std::vector<double> g(labels.size());
  switch (mode) {
    case GainMode::kExponential:
      for (std::size_t i = 0; i < labels.size(); ++i) g[i] = std::exp2(labels[i]) - 1.0;
      break;
    case GainMode::kLinear:
      for (std::size_t i = 0; i < labels.size(); ++i) g[i] = labels[i];
      break;
    case GainMode::kRankExponential: {
      if (labels.size() > kRankExponentialMaxItems) {
        throw ValidationError("rank_exponential gain is limited to n <= 30, got n=" +
                              std::to_string(labels.size()));
      }
      // Ascending rank: the smallest label gets 1, the largest n.
      const std::vector<std::size_t> desc_rank = hard_perm_desc(labels).ranks();
      const std::size_t n = labels.size();
      for (std::size_t i = 0; i < n; ++i) {
        g[i] = std::exp2(static_cast<double>(n + 1 - desc_rank[i])) - 1.0;
      }
      break;
    }
  }
  return g;
}

bool all_gains_zero(std::span<const double> labels, GainMode mode) {
  for (double g : gains(labels, mode)) {
    if (g > 0.0) return false;
  }
  return true;
}

double opa(std::span<const double> scores, std::span<const double> labels) {
  require_same_length(scores, labels);
  const std::size_t n = scores.size();
  if (n < 2) throw ValidationError("OPA requires at least two items");
  std::size_t correct = 0;
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t h = j + 1; h < n; ++h) {
      if ((scores[j] - scores[h]) * (labels[j] - labels[h]) >= 0.0) ++correct;
    }
  }
  return 2.0 * static_cast<double>(correct) / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double ndcg(std::span<const double> scores, std::span<const double> labels, GainMode mode) {
  require_same_length(scores, labels);
  if (scores.empty()) throw ValidationError("NDCG of an empty list");
  return truncated_ndcg(scores, labels, scores.size(), mode);
}

double ndcg_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k,
                 GainMode mode) {
  require_same_length(scores, labels);
  if (k < 1 || k > scores.size()) {
    throw ValidationError("NDCG@k requires 1 <= k <= n, got k=" + std::to_string(k) +
                          ", n=" + std::to_string(scores.size()));
  }
  return truncated_ndcg(scores, labels, k, mode);
}

double recall_m_k(std::span<const double> scores, std::span<const double> labels, std::size_t m,
                  std::size_t k) {
  require_same_length(scores, labels);
  check_recall_params(scores.size(), m, k);
  const std::vector<std::size_t> model_rank = hard_perm_desc(scores).ranks();
  const HardPermutation truth = hard_perm_desc(labels);
  std::size_t hits = 0;
  for (std::size_t pos = 0; pos < k; ++pos) {
    if (model_rank[truth.order[pos]] <= m) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(k);
}

double recall_via_permutation(std::span<const double> scores, std::span<const double> labels,
                              std::size_t m, std::size_t k) {
  require_same_length(scores, labels);
  check_recall_params(scores.size(), m, k);
  const Matrix model_p = hard_perm_desc(scores).matrix();
  const Matrix truth_p = hard_perm_desc(labels).matrix();
  const std::vector<double> recalled = topm_column_mass(model_p, m);
  const std::vector<double> relevant = topm_column_mass(truth_p, k);
  double total = 0.0;
  for (std::size_t j = 0; j < recalled.size(); ++j) total += recalled[j] * relevant[j];
  return total / static_cast<double>(k);
}

// ---- MetricSpec / MetricReport ---------------------------------------------

std::string MetricSpec::name() const {
  switch (kind) {
    case MetricKind::kOpa: return "opa";
    case MetricKind::kNdcg: return "ndcg";
    case MetricKind::kNdcgAtK: return "ndcg_at_k";
    case MetricKind::kRecall: return "recall";
  }
  return "unknown";
}

std::string MetricSpec::params() const {
  switch (kind) {
    case MetricKind::kOpa: return "";
    case MetricKind::kNdcg: return "gain=" + to_string(gain);
    case MetricKind::kNdcgAtK: return "k=" + std::to_string(k) + ";gain=" + to_string(gain);
    case MetricKind::kRecall: return "m=" + std::to_string(m) + ";k=" + std::to_string(k);
  }
  return "";
}

namespace {

std::size_t parse_count(const std::string& text, const std::string& whole) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value == 0) {
    throw ValidationError("invalid metric '" + whole + "'");
  }
  return value;
}

}  // namespace

MetricSpec MetricSpec::parse(const std::string& text, GainMode gain) {
  if (text == "opa") return opa_metric();
  if (text == "ndcg") return ndcg_metric(gain);
  if (text.rfind("ndcg@", 0) == 0) return ndcg_at(parse_count(text.substr(5), text), gain);
  if (text.rfind("recall@", 0) == 0) {
    const std::string rest = text.substr(7);
    const auto at = rest.find('@');
    if (at == std::string::npos) throw ValidationError("invalid metric '" + text + "'");
    return recall(parse_count(rest.substr(0, at), text), parse_count(rest.substr(at + 1), text));
  }
  throw ValidationError("unknown metric '" + text + "'");
}

double MetricSpec::evaluate(std::span<const double> scores, std::span<const double> labels) const {
  switch (kind) {
    case MetricKind::kOpa: return opa(scores, labels);
    case MetricKind::kNdcg: return ndcg(scores, labels, gain);
    case MetricKind::kNdcgAtK: return ndcg_at_k(scores, labels, k, gain);
    case MetricKind::kRecall: return recall_m_k(scores, labels, m, k);
  }
  return 0.0;
}

const MetricResult* MetricReport::find(MetricKind kind) const {
  for (const MetricResult& r : results) {
    if (r.spec.kind == kind) return &r;
  }
  return nullptr;
}

namespace {

std::string format_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

void MetricReport::write_csv(std::ostream& out) const {
  out << "query_id,metric,params,value\n";
  for (const MetricResult& r : results) {
    for (std::size_t q = 0; q < r.per_query.size(); ++q) {
      out << query_ids[q] << ',' << r.spec.name() << ',' << r.spec.params() << ','
          << format_value(r.per_query[q]) << '\n';
    }
  }
  for (const MetricResult& r : results) {
    out << "__mean__," << r.spec.name() << ',' << r.spec.params() << ',' << format_value(r.mean)
        << '\n';
  }
}

MetricReport build_report(const std::vector<std::string>& query_ids,
                          const std::vector<std::vector<double>>& scores,
                          const std::vector<std::vector<double>>& labels,
                          const std::vector<MetricSpec>& specs) {
  if (scores.size() != labels.size() || scores.size() != query_ids.size()) {
    throw ValidationError("report inputs disagree on the number of queries");
  }
  MetricReport report;
  report.query_ids = query_ids;
  for (const MetricSpec& spec : specs) {
    MetricResult result;
    result.spec = spec;
    result.per_query.reserve(scores.size());
    double total = 0.0;
    for (std::size_t q = 0; q < scores.size(); ++q) {
      const double v = spec.evaluate(scores[q], labels[q]);
      if ((spec.kind == MetricKind::kNdcg || spec.kind == MetricKind::kNdcgAtK) &&
          all_gains_zero(labels[q], spec.gain)) {
        ++result.zero_gain_queries;
      }
      result.per_query.push_back(v);
      total += v;
    }
    result.mean = scores.empty() ? 0.0 : total / static_cast<double>(scores.size());
    report.results.push_back(std::move(result));
  }
  return report;
}

}  // namespace cascade_ltr
