#include "cascade_ltr/diffsort.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cascade_ltr/errors.hpp"
#include "cascade_ltr/gradcheck.hpp"
#include "oracles.hpp"

namespace cascade_ltr {
namespace {

Matrix relaxed(const std::vector<double>& y, double tau) { return neural_sort_matrix(y, tau); }

std::vector<std::size_t> row_argmax(const Matrix& p) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, best)) best = c;
    }
    out.push_back(best);
  }
  return out;
}

// Unit-gap vector: a shuffled arithmetic progression with step `gap`.
std::vector<double> gapped(std::mt19937_64& rng, std::size_t n, double gap) {
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = gap * static_cast<double>(i);
  std::shuffle(y.begin(), y.end(), rng);
  return y;
}

TEST(HardPermTest, ExampleMatrixAndApply) {
  const std::vector<double> y{2, 1, 4, 3};
  const HardPermutation p = hard_perm_desc(y);
  EXPECT_EQ(p.matrix(), Matrix::from_rows({{0, 0, 1, 0}, {0, 0, 0, 1}, {1, 0, 0, 0}, {0, 1, 0, 0}}));
  EXPECT_EQ(p.apply(y), (std::vector<double>{4, 3, 2, 1}));
  EXPECT_EQ(p.ranks(), (std::vector<std::size_t>{3, 4, 1, 2}));
}

TEST(HardPermTest, SingletonAndTies) {
  EXPECT_EQ(hard_perm_desc(std::vector<double>{5}).matrix(), Matrix::from_rows({{1}}));
  EXPECT_EQ(hard_perm_desc(std::vector<double>{1, 1}).order, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(hard_perm_desc(std::vector<double>{1, 1}, TiePolicy::kHigherIndexFirst).order,
            (std::vector<std::size_t>{1, 0}));
}

TEST(HardPermTest, RejectsNaNAndEmpty) {
  EXPECT_THROW(hard_perm_desc(std::vector<double>{1, std::nan("")}), ContractError);
  EXPECT_THROW(hard_perm_desc(std::vector<double>{}), ContractError);
}

TEST(HardPermTest, AgreesWithSelectionSortOracle) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> small(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> y(1 + trial % 20);
    for (double& v : y) v = small(rng);
    EXPECT_EQ(hard_perm_desc(y).order, oracle::order_desc(y));
  }
}

TEST(HardPermTest, PermutationMatrixProperties) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = oracle::spread_values(rng, 1 + trial % 12, 0.0);
    const HardPermutation p = hard_perm_desc(y);
    const Matrix m = p.matrix();
    for (std::size_t i = 0; i < y.size(); ++i) {
      double row = 0.0;
      double col = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        row += m(i, j);
        col += m(j, i);
      }
      EXPECT_EQ(row, 1.0);
      EXPECT_EQ(col, 1.0);
    }
    const auto sorted = p.apply(y);
    EXPECT_TRUE(std::is_sorted(sorted.rbegin(), sorted.rend()));
    EXPECT_EQ(topm_column_mass(p, y.size()), std::vector<double>(y.size(), 1.0));
  }
}

TEST(NeuralSortTest, SingleItem) {
  EXPECT_EQ(relaxed({42.0}, 1.0), Matrix::from_rows({{1.0}}));
}

TEST(NeuralSortTest, TwoItemHandEvaluation) {
  const Matrix p = relaxed({2, 1}, 1.0);
  const double hi = std::exp(1.0) / (1.0 + std::exp(1.0));
  const double lo = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(p(0, 0), hi, 1e-15);
  EXPECT_NEAR(p(0, 1), lo, 1e-15);
  EXPECT_NEAR(p(1, 0), lo, 1e-15);
  EXPECT_NEAR(p(1, 1), hi, 1e-15);
  EXPECT_NEAR(p(0, 0), 0.7310585786300049, 1e-15);
}

TEST(NeuralSortTest, SmallTemperatureApproachesHardSort) {
  const std::vector<double> y{3, 1, 2};
  EXPECT_LT(max_abs_diff(relaxed(y, 0.01), hard_perm_desc(y).matrix()), 1e-6);
}

TEST(NeuralSortTest, RejectsNonPositiveTemperature) {
  EXPECT_THROW(relaxed({1, 2}, 0.0), ValidationError);
  EXPECT_THROW(relaxed({1, 2}, -1.0), ValidationError);
}

TEST(NeuralSortTest, RowStochasticAcrossTemperatures) {
  std::mt19937_64 rng(12);
  for (double tau : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto y = oracle::spread_values(rng, 2 + trial, 0.0, 3.0);
      const Matrix p = relaxed(y, tau);
      for (std::size_t r = 0; r < p.rows(); ++r) {
        double total = 0.0;
        for (double v : p.row_span(r)) {
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
          total += v;
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
}

TEST(NeuralSortTest, ArgmaxRecoversHardOrder) {
  std::mt19937_64 rng(13);
  for (double tau : {0.01, 0.1, 1.0, 10.0, 100.0}) {
    for (std::size_t n = 2; n <= 50; n += 3) {
      const auto y = oracle::spread_values(rng, n, 1e-3);
      EXPECT_EQ(row_argmax(relaxed(y, tau)), hard_perm_desc(y).order) << "n=" << n << " tau=" << tau;
    }
  }
}

TEST(NeuralSortTest, ShiftAndJointScaleInvariance) {
  std::mt19937_64 rng(14);
  for (std::size_t n = 2; n <= 50; n += 4) {
    const auto y = oracle::spread_values(rng, n, 0.0);
    const Matrix base = relaxed(y, 0.7);
    auto shifted = y;
    for (double& v : shifted) v += 3.25;
    EXPECT_LT(max_abs_diff(base, relaxed(shifted, 0.7)), 1e-12);
    auto scaled = y;
    for (double& v : scaled) v *= 4.0;
    EXPECT_LT(max_abs_diff(base, relaxed(scaled, 4.0 * 0.7)), 1e-12);
  }
}

TEST(NeuralSortTest, ConvergesMonotonicallyOnUnitGaps) {
  std::mt19937_64 rng(15);
  for (std::size_t n = 2; n <= 50; ++n) {
    const auto y = gapped(rng, n, 1.0);
    const Matrix hard = hard_perm_desc(y).matrix();
    double previous = std::numeric_limits<double>::infinity();
    for (double tau : {10.0, 1.0, 0.1, 0.01}) {
      const double err = max_abs_diff(relaxed(y, tau), hard);
      EXPECT_LE(err, previous);
      previous = err;
    }
    EXPECT_LT(previous, 1e-6);
  }
}

TEST(NeuralSortTest, GraphAndPlainPathsAgree) {
  std::mt19937_64 rng(16);
  const auto y = oracle::spread_values(rng, 7, 0.0);
  Graph g;
  const RelaxedPermutation p = neural_sort(g.constant(Matrix::column(y)), 0.5);
  EXPECT_LT(max_abs_diff(p.p_hat.value(), relaxed(y, 0.5)), 1e-15);
  EXPECT_EQ(p.tau, 0.5);
}

TEST(NeuralSortTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 3 + trial % 8;
    const auto y = oracle::spread_values(rng, n, 0.0);
    std::vector<double> weights(n * n);
    for (double& w : weights) w = std::normal_distribution<double>()(rng);
    const Matrix w(n, n, weights);
    const auto build = [&](Graph& g, std::span<const Var> in) {
      return sum(mul(g.constant(w), neural_sort(in[0], 0.8).p_hat));
    };
    EXPECT_LT(check_gradients(build, {Matrix::column(y)}).rel_error, 1e-4);
  }
}

TEST(ColumnMassTest, HardExample) {
  const HardPermutation p = hard_perm_desc(std::vector<double>{2, 1, 4, 3});
  EXPECT_EQ(topm_column_mass(p, 2), (std::vector<double>{0, 0, 1, 1}));
  EXPECT_EQ(topm_column_mass(p.matrix(), 2), (std::vector<double>{0, 0, 1, 1}));
}

TEST(ColumnMassTest, RelaxedFirstRow) {
  const auto mass = topm_column_mass(relaxed({2, 1}, 1.0), 1);
  EXPECT_NEAR(mass[0], 0.7310585786300049, 1e-15);
  EXPECT_NEAR(mass[1], 0.2689414213699951, 1e-15);
}

TEST(ColumnMassTest, RangeChecked) {
  const HardPermutation p = hard_perm_desc(std::vector<double>{2, 1});
  EXPECT_THROW(topm_column_mass(p, 0), ValidationError);
  EXPECT_THROW(topm_column_mass(p, 3), ValidationError);
}

TEST(ColumnMassTest, GraphVersionMatchesPlain) {
  Graph g;
  const std::vector<double> y{0.3, -1.0, 2.0, 0.1};
  const RelaxedPermutation p = neural_sort(g.constant(Matrix::column(y)), 1.0);
  const Matrix mass = topm_column_mass(p, 2).value();
  const auto plain = topm_column_mass(relaxed(y, 1.0), 2);
  ASSERT_EQ(mass.rows(), 4u);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(mass[j], plain[j], 1e-15);
}

TEST(JitterTest, BreaksTiesInPolicyOrder) {
  const auto j = deterministic_jitter(std::vector<double>{1, 1, 2});
  EXPECT_GT(j[0], j[1]);
  EXPECT_GT(j[2], j[0]);
  EXPECT_EQ(hard_perm_desc(j).order, hard_perm_desc(std::vector<double>{1, 1, 2}).order);
  const auto k = deterministic_jitter(std::vector<double>{1, 1}, TiePolicy::kHigherIndexFirst);
  EXPECT_GT(k[1], k[0]);
}

}  // namespace
}  // namespace cascade_ltr
