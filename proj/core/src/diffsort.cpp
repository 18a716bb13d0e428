#include "cascade_ltr/diffsort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cascade_ltr/errors.hpp"

namespace cascade_ltr {

Matrix HardPermutation::matrix() const {
  const std::size_t n = order.size();
  Matrix p(n, n);
  for (std::size_t i = 0; i < n; ++i) p(i, order[i]) = 1.0;
  return p;
}

std::vector<double> HardPermutation::apply(std::span<const double> values) const {
  if (values.size() != order.size()) {
    throw DimensionError("permutation of size " + std::to_string(order.size()) +
                         " applied to vector of size " + std::to_string(values.size()));
  }
  std::vector<double> out(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[i] = values[order[i]];
  return out;
}

std::vector<std::size_t> HardPermutation::ranks() const {
  std::vector<std::size_t> rank(order.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = pos + 1;
  return rank;
}

HardPermutation hard_perm_desc(std::span<const double> values, TiePolicy ties) {
  if (values.empty()) throw ContractError("hard_perm_desc of an empty vector");
  for (double v : values) {
    if (std::isnan(v)) throw ContractError("hard_perm_desc input contains NaN");
  }
  HardPermutation p;
  p.order.resize(values.size());
  std::iota(p.order.begin(), p.order.end(), std::size_t{0});
  if (ties == TiePolicy::kHigherIndexFirst) std::reverse(p.order.begin(), p.order.end());
  std::stable_sort(p.order.begin(), p.order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return p;
}

RelaxedPermutation neural_sort(Var y, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ValidationError("neural_sort temperature must be positive, got " + std::to_string(tau));
  }
  if (y.cols() != 1 || y.rows() == 0) {
    throw DimensionError("neural_sort expects a non-empty column vector, got " +
                         y.value().shape_string());
  }
  Graph& g = y.graph();
  const std::size_t n = y.rows();
  Matrix coeff(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    // 1-based row index r = i + 1 gives n + 1 - 2r.
    coeff[i] = static_cast<double>(n) - 1.0 - 2.0 * static_cast<double>(i);
  }
  const Var spread = row_sum(abs_pairwise_diff(y));              // A_y 1, n x 1
  const Var scaled = matmul(g.constant(std::move(coeff)), transpose(y));
  const Var logits = sub(scaled, broadcast_row(transpose(spread), n));
  return RelaxedPermutation{row_softmax(scale(logits, 1.0 / tau)), tau};
}

Matrix neural_sort_matrix(std::span<const double> values, double tau) {
  Graph g;
  const Var y = g.constant(Matrix::column(values));
  return neural_sort(y, tau).p_hat.value();
}

Var topm_column_mass(const RelaxedPermutation& p, std::size_t m) {
  const std::size_t n = p.p_hat.rows();
  if (m < 1 || m > n) {
    throw ValidationError("top-m mass requires 1 <= m <= n, got m=" + std::to_string(m) +
                          ", n=" + std::to_string(n));
  }
  return transpose(col_sum(slice_rows(p.p_hat, m)));
}

std::vector<double> topm_column_mass(const Matrix& p, std::size_t m) {
  if (m < 1 || m > p.rows()) {
    throw ValidationError("top-m mass requires 1 <= m <= n, got m=" + std::to_string(m) +
                          ", n=" + std::to_string(p.rows()));
  }
  std::vector<double> mass(p.cols(), 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < p.cols(); ++c) mass[c] += p(r, c);
  }
  return mass;
}

std::vector<double> topm_column_mass(const HardPermutation& p, std::size_t m) {
  if (m < 1 || m > p.size()) {
    throw ValidationError("top-m mass requires 1 <= m <= n, got m=" + std::to_string(m) +
                          ", n=" + std::to_string(p.size()));
  }
  std::vector<double> mass(p.size(), 0.0);
  for (std::size_t r = 0; r < m; ++r) mass[p.order[r]] = 1.0;
  return mass;
}

std::vector<double> deterministic_jitter(std::span<const double> values, TiePolicy ties) {
  const HardPermutation p = hard_perm_desc(values, ties);
  std::vector<double> out(values.begin(), values.end());
  for (std::size_t pos = 0; pos < p.size(); ++pos) {
    out[p.order[pos]] -= 1e-9 * static_cast<double>(pos);
  }
  return out;
}

}  // namespace cascade_ltr
