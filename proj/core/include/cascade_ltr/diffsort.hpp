#pragma once

// Hard descending-sort permutations and their NeuralSort relaxation.
//
// Convention: row i of a permutation matrix selects the item placed at
// position i of the descending order, so P * y is y sorted descending.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "cascade_ltr/numgraph.hpp"

namespace cascade_ltr {

enum class TiePolicy {
  kLowerIndexFirst,
  kHigherIndexFirst,
};

struct HardPermutation {
  // order[i] is the original index of the i-th largest element.
  std::vector<std::size_t> order;

  std::size_t size() const noexcept { return order.size(); }
  Matrix matrix() const;
  std::vector<double> apply(std::span<const double> values) const;
  // rank[j] is the 1-based position of item j in the descending order.
  std::vector<std::size_t> ranks() const;
};

HardPermutation hard_perm_desc(std::span<const double> values,
                               TiePolicy ties = TiePolicy::kLowerIndexFirst);

struct RelaxedPermutation {
  Var p_hat;  // n x n, row-stochastic
  double tau = 1.0;
};

// Row i (1-based) of the result is
//   softmax(((n + 1 - 2i) * y^T - (A_y 1)^T) / tau),  A_y[i, j] = |y_i - y_j|.
// y must be an n x 1 column; the result is differentiable w.r.t. y.
RelaxedPermutation neural_sort(Var y, double tau);

// Constant (gradient-free) relaxed permutation of a plain vector.
Matrix neural_sort_matrix(std::span<const double> values, double tau);

// Signature shared by relaxed-sort operators; neural_sort is the default.
using SortRelaxation = std::function<RelaxedPermutation(Var, double)>;

// Column sums of the first m rows: entry j is the mass of item j in the top m.
Var topm_column_mass(const RelaxedPermutation& p, std::size_t m);
std::vector<double> topm_column_mass(const Matrix& p, std::size_t m);
std::vector<double> topm_column_mass(const HardPermutation& p, std::size_t m);

// Subtracts 1e-9 * (stable descending position) so that tied values become
// distinct while keeping the tie-policy order.
std::vector<double> deterministic_jitter(std::span<const double> values,
                                         TiePolicy ties = TiePolicy::kLowerIndexFirst);

}  // namespace cascade_ltr
