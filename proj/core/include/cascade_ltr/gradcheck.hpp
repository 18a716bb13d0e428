#pragma once

// Central finite-difference verification of graph gradients.

#include <functional>
#include <span>
#include <vector>

#include "cascade_ltr/numgraph.hpp"

namespace cascade_ltr {

struct GradCheckResult {
  double rel_error = 0.0;  // over every input entry at once
  double max_abs_error = 0.0;
};

// Builds a scalar from leaf variables holding `inputs`.
using GraphBuilder = std::function<Var(Graph&, std::span<const Var>)>;

// ||a - n||_2 / max(||a||_2, ||n||_2, 1e-8).
double relative_error(const Matrix& analytic, const Matrix& numeric);

// Compares backward() against (f(x + h e_i) - f(x - h e_i)) / 2h for every
// entry of every input.
GradCheckResult check_gradients(const GraphBuilder& build, const std::vector<Matrix>& inputs,
                                double step = 1e-5);

}  // namespace cascade_ltr
