#pragma once

// Dense row-major matrices and a define-by-run reverse-mode autodiff tape.
//
// A Graph owns every node created through it. Nodes are appended in creation
// order, which is a valid topological order, so backward() is a single reverse
// sweep. A Graph is confined to one thread.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cascade_ltr {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix column(std::span<const double> values);
  static Matrix row(std::span<const double> values);
  static Matrix scalar(double value) { return Matrix(1, 1, value); }
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<const double> row_span(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols_, cols_);
  }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;
  bool all_finite() const noexcept;

  void fill(double value);
  Matrix& operator+=(const Matrix& other);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

class Graph;

// Lightweight handle to a node of a Graph. Copyable; valid while the Graph lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  // Local adjoint rule: given dLoss/dOutput, accumulate into each parent's
  // adjoint. Entries of parent_adjoints are null for parents that do not
  // require a gradient.
  using Rule = std::function<void(const Graph& graph, const Matrix& out_grad,
                                  std::span<Matrix* const> parent_adjoints)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that receives gradients.
  Var parameter(Matrix value);
  // Leaf that never receives gradients.
  Var constant(Matrix value);

  // Appends an interior node. requires_grad is inherited from the parents.
  Var record(Matrix value, std::vector<Var> parents, Rule rule);

  const Matrix& value(Var v) const;
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Accumulates dLoss/dNode into every node reachable from loss. The loss
  // must be 1x1. Calling twice without zero_grad() doubles the gradients.
  void backward(Var loss);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> parents;
    Rule rule;
    bool requires_grad = false;
  };

  void check_owned(Var v) const;

  std::vector<Node> nodes_;
};

// ---- primitives ------------------------------------------------------------
// All binary elementwise ops require equal shapes.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var neg(Var a);

inline constexpr double kLogFloor = 1e-12;

// ln(max(x, floor)); gradient is zero where x <= floor.
Var log(Var a, double floor = kLogFloor);
Var exp(Var a);
Var abs(Var a);
Var reciprocal(Var a);
Var sigmoid(Var a);
// ln(1 + e^x), evaluated without overflow.
Var softplus(Var a);
Var relu(Var a);
Var selu(Var a);

Var row_softmax(Var a);
Var row_log_softmax(Var a);

Var transpose(Var a);
Var slice_rows(Var a, std::size_t count);
// Reduces over rows: (r x c) -> (1 x c).
Var col_sum(Var a);
// Reduces over columns: (r x c) -> (r x 1).
Var row_sum(Var a);
Var sum(Var a);
// (1 x c) -> (rows x c).
Var broadcast_row(Var row, std::size_t rows);
// (r x 1) -> (r x cols).
Var broadcast_col(Var col, std::size_t cols);
// (n x 1) -> (n x n) with entry [i, j] = |y_i - y_j|.
Var abs_pairwise_diff(Var y);
// (n x 1) -> (n x n) with entry [i, j] = y_i - y_j.
Var pairwise_diff(Var y);
// Copies the value into a new leaf with no gradient path.
Var stop_gradient(Var a);

}  // namespace cascade_ltr
