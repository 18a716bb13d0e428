#include "cascade_ltr/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cascade_ltr/errors.hpp"
#include "oracles.hpp"

namespace cascade_ltr {
namespace {

using Vec = std::vector<double>;

TEST(OpaTest, Examples) {
  EXPECT_EQ(opa(Vec{3, 2, 1}, Vec{3, 2, 1}), 1.0);
  EXPECT_EQ(opa(Vec{1, 2, 3}, Vec{3, 2, 1}), 0.0);
  EXPECT_NEAR(opa(Vec{2, 1, 3}, Vec{3, 2, 1}), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(opa(Vec{1, 1}, Vec{2, 1}), 1.0);
  EXPECT_THROW(opa(Vec{1}, Vec{1}), ValidationError);
}

TEST(NdcgTest, Examples) {
  EXPECT_EQ(ndcg(Vec{3, 2, 1}, Vec{2, 1, 0}), 1.0);
  EXPECT_EQ(ndcg(Vec{0.3}, Vec{4}), 1.0);
  EXPECT_EQ(ndcg(Vec{1, 2}, Vec{0, 0}), 1.0);
}

TEST(NdcgTest, ReversedPairAgainstBruteForce) {
  const Vec labels{3, 2};
  const Vec scores{0, 1};
  const double dcg = 3.0 / std::log2(3.0) + 7.0;
  const double best = 7.0 + 3.0 / std::log2(3.0);
  const double reversed_dcg = 7.0 / std::log2(3.0) + 3.0;
  EXPECT_NEAR(dcg, best, 1e-12);
  const double expected = reversed_dcg / best;
  EXPECT_LT(expected, 1.0);
  EXPECT_NEAR(ndcg(scores, labels), expected, 1e-12);
  EXPECT_NEAR(ndcg(scores, labels),
              oracle::ndcg_brute(scores, {oracle::exp_gain(3), oracle::exp_gain(2)}, 2), 1e-12);
}

TEST(NdcgTest, RandomInstancesMatchBruteForce) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> grade(0, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 8;
    Vec labels(n);
    for (double& l : labels) l = grade(rng);
    const Vec scores = oracle::spread_values(rng, n, 0.0);
    Vec g;
    for (double l : labels) g.push_back(oracle::exp_gain(l));
    EXPECT_NEAR(ndcg(scores, labels), oracle::ndcg_brute(scores, g, n), 1e-12);
    for (std::size_t k = 1; k <= n; ++k) {
      EXPECT_NEAR(ndcg_at_k(scores, labels, k), oracle::ndcg_brute(scores, g, k), 1e-12);
    }
    EXPECT_EQ(ndcg_at_k(scores, labels, n), ndcg(scores, labels));
    Vec linear(labels);
    EXPECT_NEAR(ndcg(scores, labels, GainMode::kLinear), oracle::ndcg_brute(scores, linear, n), 1e-12);
  }
}

TEST(NdcgTest, TopOneCorrect) {
  EXPECT_EQ(ndcg_at_k(Vec{5, 1, 2, 3}, Vec{4, 3, 2, 1}, 1), 1.0);
}

TEST(GainsTest, Modes) {
  EXPECT_EQ(gains(Vec{0, 1, 3}, GainMode::kExponential), (Vec{0, 1, 7}));
  EXPECT_EQ(gains(Vec{0, 1, 3}, GainMode::kLinear), (Vec{0, 1, 3}));
  // Ascending rank: lowest label gets rank 1.
  EXPECT_EQ(gains(Vec{10, 30, 20}, GainMode::kRankExponential), (Vec{1, 7, 3}));
  EXPECT_THROW(gains(Vec(31, 1.0), GainMode::kRankExponential), ValidationError);
  EXPECT_EQ(parse_gain_mode("linear"), GainMode::kLinear);
  EXPECT_EQ(to_string(GainMode::kRankExponential), "rank_exponential");
  EXPECT_THROW(parse_gain_mode("cubic"), ValidationError);
}

TEST(RecallTest, Examples) {
  const Vec scores{0.9, 0.1, 0.8, 0.2};
  const Vec labels{4, 3, 2, 1};
  EXPECT_EQ(recall_m_k(scores, labels, 2, 2), 0.5);
  EXPECT_EQ(recall_via_permutation(scores, labels, 2, 2), 0.5);
  EXPECT_EQ(recall_m_k(scores, labels, 4, 2), 1.0);
  EXPECT_EQ(recall_via_permutation(scores, labels, 4, 3), 1.0);
  EXPECT_EQ(recall_m_k(labels, labels, 1, 1), 1.0);
}

TEST(RecallTest, ParameterOrderChecked) {
  const Vec v{1, 2, 3};
  EXPECT_THROW(recall_m_k(v, v, 1, 2), ValidationError);
  EXPECT_THROW(recall_m_k(v, v, 4, 1), ValidationError);
  EXPECT_THROW(recall_m_k(v, v, 2, 0), ValidationError);
  EXPECT_THROW(recall_via_permutation(v, v, 1, 2), ValidationError);
}

TEST(RecallTest, PermutationFormAgreesEverywhere) {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<int> grade(0, 3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng() % 50);
    Vec scores(n);
    Vec labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = (trial % 2 == 0) ? grade(rng) : std::normal_distribution<double>()(rng);
      labels[i] = grade(rng);
    }
    const std::size_t m = 1 + rng() % n;
    const std::size_t k = 1 + rng() % m;
    const double r = recall_m_k(scores, labels, m, k);
    EXPECT_EQ(r, recall_via_permutation(scores, labels, m, k));
    EXPECT_EQ(r, oracle::recall_sets(scores, labels, m, k));
  }
}

TEST(RecallTest, NonDecreasingInM) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 30;
    const Vec scores = oracle::spread_values(rng, n, 0.0);
    const Vec labels = oracle::random_permutation_labels(rng, n);
    const std::size_t k = 1 + rng() % n;
    double previous = 0.0;
    for (std::size_t m = k; m <= n; ++m) {
      const double r = recall_m_k(scores, labels, m, k);
      EXPECT_GE(r, previous);
      previous = r;
    }
    EXPECT_EQ(previous, 1.0);
  }
}

TEST(MetricPropertyTest, AffineInvarianceAndRange) {
  std::mt19937_64 rng(24);
  std::uniform_int_distribution<int> grade(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 20;
    Vec scores(n);
    Vec labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = grade(rng);  // many ties
      labels[i] = grade(rng);
    }
    Vec moved(scores);
    for (double& s : moved) s = 2.5 * s + 7.0;
    const std::size_t m = 1 + rng() % n;
    const std::size_t k = 1 + rng() % m;
    const std::vector<MetricSpec> specs{MetricSpec::opa_metric(), MetricSpec::ndcg_metric(GainMode::kExponential),
                                        MetricSpec::ndcg_at(k, GainMode::kLinear), MetricSpec::recall(m, k)};
    for (const auto& spec : specs) {
      const double v = spec.evaluate(scores, labels);
      EXPECT_EQ(v, spec.evaluate(moved, labels)) << spec.name();
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(MetricSpecTest, ParseAndNames) {
  const MetricSpec r = MetricSpec::parse("recall@30@15", GainMode::kLinear);
  EXPECT_EQ(r.kind, MetricKind::kRecall);
  EXPECT_EQ(r.params(), "m=30;k=15");
  EXPECT_EQ(MetricSpec::parse("ndcg@10", GainMode::kLinear).params(), "k=10;gain=linear");
  EXPECT_EQ(MetricSpec::parse("opa", GainMode::kLinear).name(), "opa");
  EXPECT_THROW(MetricSpec::parse("recall@3", GainMode::kLinear), ValidationError);
  EXPECT_THROW(MetricSpec::parse("map", GainMode::kLinear), ValidationError);
}

TEST(MetricReportTest, MeansAndCsv) {
  const std::vector<std::string> ids{"a", "b", "c"};
  const std::vector<Vec> scores{{1, 2, 3}, {3, 2, 1}, {2, 1, 3}};
  const std::vector<Vec> labels{{3, 2, 1}, {3, 2, 1}, {3, 2, 1}};
  const MetricReport report = build_report(ids, scores, labels, {MetricSpec::opa_metric()});
  const MetricResult* r = report.find(MetricKind::kOpa);
  ASSERT_NE(r, nullptr);
  EXPECT_EQ(r->per_query, (Vec{0.0, 1.0, 1.0 / 3.0}));
  EXPECT_NEAR(r->mean, (0.0 + 1.0 + 1.0 / 3.0) / 3.0, 1e-12);
  std::ostringstream csv;
  report.write_csv(csv);
  const std::string text = csv.str();
  EXPECT_EQ(text.rfind("query_id,metric,params,value\n", 0), 0u);
  EXPECT_NE(text.find("\n__mean__,opa,"), std::string::npos);
  EXPECT_EQ(report.find(MetricKind::kRecall), nullptr);
}

TEST(MetricReportTest, CountsZeroGainQueries) {
  const MetricReport report = build_report({"a", "b"}, {{1, 2}, {1, 2}}, {{0, 0}, {1, 0}},
                                           {MetricSpec::ndcg_metric(GainMode::kExponential)});
  EXPECT_EQ(report.results[0].zero_gain_queries, 1u);
  EXPECT_EQ(report.results[0].per_query[0], 1.0);
}

}  // namespace
}  // namespace cascade_ltr
