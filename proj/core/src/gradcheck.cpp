#include "cascade_ltr/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cascade_ltr {

namespace {

double evaluate(const GraphBuilder& build, const std::vector<Matrix>& inputs) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(g.constant(m));
  return build(g, leaves).value()[0];
}

}  // namespace

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

GradCheckResult check_gradients(const GraphBuilder& build, const std::vector<Matrix>& inputs,
                                double step) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Matrix& m : inputs) leaves.push_back(g.parameter(m));
  g.backward(build(g, leaves));

  // The relative error is taken over all inputs flattened into one vector,
  // so an input whose gradient is exactly zero (e.g. a bias the loss is
  // invariant to) does not turn finite-difference noise into a failure.
  GradCheckResult result;
  std::vector<double> all_analytic;
  std::vector<double> all_numeric;
  std::vector<Matrix> probe = inputs;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Matrix numeric(inputs[t].rows(), inputs[t].cols());
    for (std::size_t i = 0; i < inputs[t].size(); ++i) {
      const double original = probe[t][i];
      probe[t][i] = original + step;
      const double up = evaluate(build, probe);
      probe[t][i] = original - step;
      const double down = evaluate(build, probe);
      probe[t][i] = original;
      numeric[i] = (up - down) / (2.0 * step);
    }
    const Matrix& analytic = g.grad(leaves[t]);
    result.max_abs_error = std::max(result.max_abs_error, max_abs_diff(analytic, numeric));
    all_analytic.insert(all_analytic.end(), analytic.data().begin(), analytic.data().end());
    all_numeric.insert(all_numeric.end(), numeric.data().begin(), numeric.data().end());
  }
  const std::size_t total = all_analytic.size();
  result.rel_error = relative_error(Matrix(1, total, std::move(all_analytic)),
                                    Matrix(1, total, std::move(all_numeric)));
  return result;
}

}  // namespace cascade_ltr
