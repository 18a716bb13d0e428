#include "cascade_ltr/numgraph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "cascade_ltr/errors.hpp"

namespace cascade_ltr {

// ---- Matrix ----------------------------------------------------------------

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
  }
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged initializer for Matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix& Matrix::operator+=(const Matrix& other) {
  if (!same_shape(other)) {
    throw DimensionError("cannot add " + other.shape_string() + " into " + shape_string());
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul shape mismatch: " + a.shape_string() + " x " +
                         b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  const std::size_t inner = a.cols();
  const std::size_t cols = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = &out(i, 0);
    for (std::size_t p = 0; p < inner; ++p) {
      const double aip = a(i, p);
      if (aip == 0.0) continue;
      const double* b_row = &b(p, 0);
      for (std::size_t j = 0; j < cols; ++j) out_row[j] += aip * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("max_abs_diff shape mismatch: " + a.shape_string() + " vs " +
                         b.shape_string());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// ---- Var / Graph -----------------------------------------------------------

const Matrix& Var::value() const { return graph_->value(*this); }
const Matrix& Var::grad() const { return graph_->grad(*this); }

void Graph::check_owned(Var v) const {
  if (v.graph_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("variable does not belong to this graph");
  }
}

Var Graph::parameter(Matrix value) {
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Matrix value) {
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Matrix value, std::vector<Var> parents, Rule rule) {
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.parents.reserve(parents.size());
  for (Var p : parents) {
    check_owned(p);
    node.parents.push_back(p.id_);
    node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (node.requires_grad) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Graph::value(Var v) const {
  check_owned(v);
  return nodes_[v.id_].value;
}

const Matrix& Graph::grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].grad;
}

bool Graph::requires_grad(Var v) const {
  check_owned(v);
  return nodes_[v.id_].requires_grad;
}

void Graph::backward(Var loss) {
  check_owned(loss);
  const Matrix& lv = nodes_[loss.id_].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward requires a 1x1 loss, got " + lv.shape_string());
  }
  // Fresh adjoints for this pass; added into the persistent gradients at the
  // end so that repeated passes accumulate without double counting.
  std::vector<Matrix> adjoint(loss.id_ + 1);
  adjoint[loss.id_] = Matrix(1, 1, 1.0);
  std::vector<Matrix*> parent_ptrs;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (adjoint[id].empty() || !node.requires_grad) continue;
    if (node.rule) {
      parent_ptrs.assign(node.parents.size(), nullptr);
      for (std::size_t p = 0; p < node.parents.size(); ++p) {
        const std::size_t pid = node.parents[p];
        if (!nodes_[pid].requires_grad) continue;
        if (adjoint[pid].empty()) {
          adjoint[pid] = Matrix(nodes_[pid].value.rows(), nodes_[pid].value.cols());
        }
        parent_ptrs[p] = &adjoint[pid];
      }
      node.rule(*this, adjoint[id], parent_ptrs);
    }
    node.grad += adjoint[id];
  }
}

void Graph::zero_grad() {
  for (Node& node : nodes_) node.grad.fill(0.0);
}

// ---- primitives ------------------------------------------------------------

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + " shape mismatch: " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}

// Elementwise unary op: f computes the output, df the local derivative from
// (input, output).
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t in_id = a.id();
  Graph& g = a.graph();
  const std::size_t out_id = g.size();
  return g.record(std::move(out), {a},
                  [in_id, out_id, df](const Graph& graph, const Matrix& go,
                                      std::span<Matrix* const> adj) {
                    const Matrix& xin = graph.value(in_id);
                    const Matrix& yout = graph.value(out_id);
                    Matrix& ga = *adj[0];
                    for (std::size_t i = 0; i < go.size(); ++i) {
                      ga[i] += go[i] * df(xin[i], yout[i]);
                    }
                  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Matrix out = matmul(a.value(), b.value());
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return a.graph().record(
      std::move(out), {a, b},
      [a_id, b_id](const Graph& g, const Matrix& go, std::span<Matrix* const> adj) {
        if (adj[0]) *adj[0] += matmul(go, transpose(g.value(b_id)));
        if (adj[1]) *adj[1] += matmul(transpose(g.value(a_id)), go);
      });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Matrix out = a.value();
  out += b.value();
  return a.graph().record(std::move(out), {a, b},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            if (adj[0]) *adj[0] += go;
                            if (adj[1]) *adj[1] += go;
                          });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.graph().record(std::move(out), {a, b},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            if (adj[0]) *adj[0] += go;
                            if (adj[1]) {
                              Matrix& gb = *adj[1];
                              for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
                            }
                          });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t a_id = a.id();
  const std::size_t b_id = b.id();
  return a.graph().record(
      std::move(out), {a, b},
      [a_id, b_id](const Graph& g, const Matrix& go, std::span<Matrix* const> adj) {
        const Matrix& av = g.value(a_id);
        const Matrix& bv2 = g.value(b_id);
        if (adj[0]) {
          for (std::size_t i = 0; i < go.size(); ++i) (*adj[0])[i] += go[i] * bv2[i];
        }
        if (adj[1]) {
          for (std::size_t i = 0; i < go.size(); ++i) (*adj[1])[i] += go[i] * av[i];
        }
      });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; },
               [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var log(Var a, double floor) {
  return unary(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Var abs(Var a) {
  return unary(a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var reciprocal(Var a) {
  return unary(a, [](double x) { return 1.0 / x; },
               [](double, double y) { return -y * y; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

namespace {
constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kSeluScale = 1.0507009873554804934193349852946;
}  // namespace

Var selu(Var a) {
  return unary(
      a,
      [](double x) { return x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x); },
      [](double x, double y) { return x > 0.0 ? kSeluScale : y + kSeluScale * kSeluAlpha; });
}

Var row_softmax(Var a) {
  const Matrix& x = a.value();
  if (x.empty()) throw ContractError("row_softmax of an empty matrix");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = std::exp(row[c] - mx);
      total += out(r, c);
    }
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) /= total;
  }
  const std::size_t out_id = a.graph().size();
  return a.graph().record(
      std::move(out), {a},
      [out_id](const Graph& g, const Matrix& go, std::span<Matrix* const> adj) {
        const Matrix& p = g.value(out_id);
        Matrix& ga = *adj[0];
        for (std::size_t r = 0; r < p.rows(); ++r) {
          double dot = 0.0;
          for (std::size_t c = 0; c < p.cols(); ++c) dot += go(r, c) * p(r, c);
          for (std::size_t c = 0; c < p.cols(); ++c) ga(r, c) += p(r, c) * (go(r, c) - dot);
        }
      });
}

Var row_log_softmax(Var a) {
  const Matrix& x = a.value();
  if (x.empty()) throw ContractError("row_log_softmax of an empty matrix");
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row_span(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double v : row) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = row[c] - lse;
  }
  const std::size_t out_id = a.graph().size();
  return a.graph().record(
      std::move(out), {a},
      [out_id](const Graph& g, const Matrix& go, std::span<Matrix* const> adj) {
        const Matrix& lp = g.value(out_id);
        Matrix& ga = *adj[0];
        for (std::size_t r = 0; r < lp.rows(); ++r) {
          double total = 0.0;
          for (std::size_t c = 0; c < lp.cols(); ++c) total += go(r, c);
          for (std::size_t c = 0; c < lp.cols(); ++c) {
            ga(r, c) += go(r, c) - std::exp(lp(r, c)) * total;
          }
        }
      });
}

Var transpose(Var a) {
  return a.graph().record(transpose(a.value()), {a},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            *adj[0] += transpose(go);
                          });
}

Var slice_rows(Var a, std::size_t count) {
  const Matrix& x = a.value();
  if (count > x.rows()) {
    throw DimensionError("slice_rows(" + std::to_string(count) + ") of " + x.shape_string());
  }
  Matrix out(count, x.cols(),
             std::vector<double>(x.data().begin(), x.data().begin() + count * x.cols()));
  return a.graph().record(std::move(out), {a},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            Matrix& ga = *adj[0];
                            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
                          });
}

Var col_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
  }
  return a.graph().record(std::move(out), {a},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            Matrix& ga = *adj[0];
                            for (std::size_t r = 0; r < ga.rows(); ++r) {
                              for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += go(0, c);
                            }
                          });
}

Var row_sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, 0) += x(r, c);
  }
  return a.graph().record(std::move(out), {a},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            Matrix& ga = *adj[0];
                            for (std::size_t r = 0; r < ga.rows(); ++r) {
                              for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += go(r, 0);
                            }
                          });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().data()) total += v;
  return a.graph().record(Matrix::scalar(total), {a},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            Matrix& ga = *adj[0];
                            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[0];
                          });
}

Var broadcast_row(Var row, std::size_t rows) {
  const Matrix& x = row.value();
  if (x.rows() != 1) throw DimensionError("broadcast_row expects 1xc, got " + x.shape_string());
  Matrix out(rows, x.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(0, c);
  }
  return row.graph().record(std::move(out), {row},
                            [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                              Matrix& ga = *adj[0];
                              for (std::size_t r = 0; r < go.rows(); ++r) {
                                for (std::size_t c = 0; c < go.cols(); ++c) ga(0, c) += go(r, c);
                              }
                            });
}

Var broadcast_col(Var col, std::size_t cols) {
  const Matrix& x = col.value();
  if (x.cols() != 1) throw DimensionError("broadcast_col expects rx1, got " + x.shape_string());
  Matrix out(x.rows(), cols);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = x(r, 0);
  }
  return col.graph().record(std::move(out), {col},
                            [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                              Matrix& ga = *adj[0];
                              for (std::size_t r = 0; r < go.rows(); ++r) {
                                for (std::size_t c = 0; c < go.cols(); ++c) ga(r, 0) += go(r, c);
                              }
                            });
}

Var abs_pairwise_diff(Var y) {
  const Matrix& x = y.value();
  if (x.cols() != 1) {
    throw DimensionError("abs_pairwise_diff expects a column vector, got " + x.shape_string());
  }
  const std::size_t n = x.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) = std::abs(x[i] - x[j]);
  }
  const std::size_t in_id = y.id();
  return y.graph().record(
      std::move(out), {y},
      [in_id](const Graph& g, const Matrix& go, std::span<Matrix* const> adj) {
        const Matrix& v = g.value(in_id);
        Matrix& ga = *adj[0];
        const std::size_t count = v.rows();
        for (std::size_t i = 0; i < count; ++i) {
          for (std::size_t j = 0; j < count; ++j) {
            const double d = v[i] - v[j];
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
            ga[i] += go(i, j) * s;
            ga[j] -= go(i, j) * s;
          }
        }
      });
}

Var pairwise_diff(Var y) {
  const Matrix& x = y.value();
  if (x.cols() != 1) {
    throw DimensionError("pairwise_diff expects a column vector, got " + x.shape_string());
  }
  const std::size_t n = x.rows();
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out(i, j) = x[i] - x[j];
  }
  return y.graph().record(std::move(out), {y},
                          [](const Graph&, const Matrix& go, std::span<Matrix* const> adj) {
                            Matrix& ga = *adj[0];
                            const std::size_t count = go.rows();
                            for (std::size_t i = 0; i < count; ++i) {
                              for (std::size_t j = 0; j < count; ++j) {
                                ga[i] += go(i, j);
                                ga[j] -= go(i, j);
                              }
                            }
                          });
}

Var stop_gradient(Var a) { return a.graph().constant(a.value()); }

}  // namespace cascade_ltr
