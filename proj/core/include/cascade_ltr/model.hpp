#pragma once

// Feedforward scorer: input d -> hidden layers -> 1 score per document.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cascade_ltr/dataio.hpp"
#include "cascade_ltr/numgraph.hpp"

namespace cascade_ltr {

enum class Activation { kRelu, kSelu };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

struct DenseLayer {
  Matrix weight;  // fan_in x fan_out
  Matrix bias;    // 1 x fan_out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

inline constexpr const char* kModelFormatHeader = "cascade-ltr-model v1";

class ScorerModel {
 public:
  ScorerModel() = default;
  // He-uniform (relu) or LeCun-normal (selu) weights, zero biases.
  ScorerModel(std::size_t input_dim, std::vector<std::size_t> hidden, Activation activation,
              std::uint64_t seed);

  std::size_t input_dim() const noexcept { return input_dim_; }
  const std::vector<std::size_t>& hidden() const noexcept { return hidden_; }
  Activation activation() const noexcept { return activation_; }
  std::uint64_t seed() const noexcept { return seed_; }

  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }

  // weight0, bias0, weight1, bias1, ...
  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
  bool all_finite() const;

  // Gradient-free scoring; same arithmetic as the graph forward pass.
  std::vector<double> score(const Matrix& features) const;
  std::vector<double> score(const QueryGroup& group) const;

  void save(std::ostream& out) const;
  static ScorerModel load(std::istream& in);
  void save_file(const std::string& path) const;
  static ScorerModel load_file(const std::string& path);

  friend bool operator==(const ScorerModel&, const ScorerModel&) = default;

 private:
  std::size_t input_dim_ = 0;
  std::vector<std::size_t> hidden_;
  Activation activation_ = Activation::kRelu;
  std::uint64_t seed_ = 0;
  std::vector<DenseLayer> layers_;
};

struct ForwardPass {
  Var scores;               // n x 1
  std::vector<Var> params;  // parallel to ScorerModel::parameters()
};

// Registers the model parameters as leaves of `graph` and scores every
// document of the group. Throws DimensionError on a feature-size mismatch.
ForwardPass forward(Graph& graph, const ScorerModel& model, const QueryGroup& group);
ForwardPass forward(Graph& graph, const ScorerModel& model, const Matrix& features);

}  // namespace cascade_ltr
