#include "cascade_ltr/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "cascade_ltr/errors.hpp"
#include "cascade_ltr/seeding.hpp"

namespace cascade_ltr {

namespace {

constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
constexpr double kSeluScale = 1.0507009873554804934193349852946;

void activate(Matrix& m, Activation act) {
  for (double& x : m.data()) {
    if (act == Activation::kRelu) {
      x = x > 0.0 ? x : 0.0;
    } else {
      x = x > 0.0 ? kSeluScale * x : kSeluScale * kSeluAlpha * std::expm1(x);
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size() || v == 0) {
      throw ValidationError("invalid layer size '" + item + "' in model file");
    }
    sizes.push_back(v);
  }
  return sizes;
}

}  // namespace

std::string to_string(Activation act) { return act == Activation::kRelu ? "relu" : "selu"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "selu") return Activation::kSelu;
  throw ValidationError("unknown activation '" + name + "'");
}

ScorerModel::ScorerModel(std::size_t input_dim, std::vector<std::size_t> hidden,
                         Activation activation, std::uint64_t seed)
    : input_dim_(input_dim), hidden_(std::move(hidden)), activation_(activation), seed_(seed) {
  if (input_dim_ == 0) throw ValidationError("model input dimension must be positive");
  std::vector<std::size_t> sizes{input_dim_};
  for (std::size_t h : hidden_) {
    if (h == 0) throw ValidationError("hidden layer sizes must be positive");
    sizes.push_back(h);
  }
  sizes.push_back(1);
  std::mt19937_64 rng(derive_seed(seed, 0x1417));
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const double fan_in = static_cast<double>(sizes[l]);
    DenseLayer layer{Matrix(sizes[l], sizes[l + 1]), Matrix(1, sizes[l + 1])};
    if (activation_ == Activation::kRelu) {
      const double limit = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (double& w : layer.weight.data()) w = dist(rng);
    } else {
      std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(fan_in));
      for (double& w : layer.weight.data()) w = dist(rng);
    }
    layers_.push_back(std::move(layer));
  }
}

std::vector<Matrix*> ScorerModel::parameters() {
  std::vector<Matrix*> out;
  for (DenseLayer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Matrix*> ScorerModel::parameters() const {
  std::vector<const Matrix*> out;
  for (const DenseLayer& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

bool ScorerModel::all_finite() const {
  for (const Matrix* p : parameters()) {
    if (!p->all_finite()) return false;
  }
  return true;
}

std::vector<double> ScorerModel::score(const Matrix& features) const {
  if (features.cols() != input_dim_) {
    throw DimensionError("model expects " + std::to_string(input_dim_) +
                         " features, got " + std::to_string(features.cols()));
  }
  Matrix h = features;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = matmul(h, layers_[l].weight);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      for (std::size_t c = 0; c < z.cols(); ++c) z(r, c) += layers_[l].bias(0, c);
    }
    if (l + 1 < layers_.size()) activate(z, activation_);
    h = std::move(z);
  }
  return std::vector<double>(h.data().begin(), h.data().end());
}

std::vector<double> ScorerModel::score(const QueryGroup& group) const {
  return score(group.feature_matrix());
}

void ScorerModel::save(std::ostream& out) const {
  out << kModelFormatHeader << '\n';
  out << "architecture input=" << input_dim_ << " hidden=";
  for (std::size_t i = 0; i < hidden_.size(); ++i) out << (i ? "," : "") << hidden_[i];
  out << " activation=" << to_string(activation_) << " seed=" << seed_ << '\n';
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto write = [&](const char* name, const Matrix& m) {
      out << "tensor layer" << l << '.' << name << ' ' << m.rows() << ' ' << m.cols();
      for (double v : m.data()) out << ' ' << format_double(v);
      out << '\n';
    };
    write("weight", layers_[l].weight);
    write("bias", layers_[l].bias);
  }
}

ScorerModel ScorerModel::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty model file");
  if (line != kModelFormatHeader) {
    if (line.rfind("cascade-ltr-model", 0) == 0) {
      throw ValidationError("unsupported model format version '" + line + "' (expected '" +
                            kModelFormatHeader + "')");
    }
    throw ValidationError("not a cascade-ltr model file");
  }
  if (!std::getline(in, line)) throw ValidationError("model file lacks an architecture line");
  std::istringstream arch(line);
  std::string word;
  arch >> word;
  if (word != "architecture") throw ValidationError("model file lacks an architecture line");
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  Activation act = Activation::kRelu;
  std::uint64_t seed = 0;
  while (arch >> word) {
    const auto eq = word.find('=');
    if (eq == std::string::npos) throw ValidationError("bad architecture field '" + word + "'");
    const std::string key = word.substr(0, eq);
    const std::string value = word.substr(eq + 1);
    if (key == "input") {
      input = std::stoull(value);
    } else if (key == "hidden") {
      hidden = parse_sizes(value);
    } else if (key == "activation") {
      act = parse_activation(value);
    } else if (key == "seed") {
      seed = std::stoull(value);
    } else {
      throw ValidationError("unknown architecture field '" + key + "'");
    }
  }
  ScorerModel model(input, hidden, act, seed);
  for (std::size_t l = 0; l < model.layers_.size(); ++l) {
    for (const char* name : {"weight", "bias"}) {
      Matrix& target = std::string(name) == "weight" ? model.layers_[l].weight
                                                     : model.layers_[l].bias;
      if (!std::getline(in, line)) throw ValidationError("model file truncated");
      std::istringstream ts(line);
      std::string tag;
      std::string tensor_name;
      std::size_t rows = 0;
      std::size_t cols = 0;
      ts >> tag >> tensor_name >> rows >> cols;
      const std::string expected = "layer" + std::to_string(l) + "." + name;
      if (tag != "tensor" || tensor_name != expected) {
        throw ValidationError("expected tensor " + expected + " in model file");
      }
      if (rows != target.rows() || cols != target.cols()) {
        throw ValidationError("tensor " + expected + " has shape " + std::to_string(rows) + "x" +
                              std::to_string(cols) + ", architecture needs " +
                              target.shape_string());
      }
      for (double& v : target.data()) {
        std::string token;
        if (!(ts >> token)) throw ValidationError("tensor " + expected + " is truncated");
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
        if (ec != std::errc() || ptr != token.data() + token.size()) {
          throw ValidationError("bad value '" + token + "' in tensor " + expected);
        }
      }
    }
  }
  return model;
}

void ScorerModel::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  save(out);
  if (!out) throw IoError("write failure on '" + path + "'");
}

ScorerModel ScorerModel::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return load(in);
}

ForwardPass forward(Graph& graph, const ScorerModel& model, const Matrix& features) {
  if (features.cols() != model.input_dim()) {
    throw DimensionError("model expects " + std::to_string(model.input_dim()) +
                         " features, got " + features.shape_string());
  }
  ForwardPass pass;
  const std::size_t n = features.rows();
  Var h = graph.constant(features);
  const auto& layers = model.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Var w = graph.parameter(layers[l].weight);
    const Var b = graph.parameter(layers[l].bias);
    pass.params.push_back(w);
    pass.params.push_back(b);
    Var z = add(matmul(h, w), broadcast_row(b, n));
    if (l + 1 < layers.size()) {
      z = model.activation() == Activation::kRelu ? relu(z) : selu(z);
    }
    h = z;
  }
  pass.scores = h;
  return pass;
}

ForwardPass forward(Graph& graph, const ScorerModel& model, const QueryGroup& group) {
  return forward(graph, model, group.feature_matrix());
}

}  // namespace cascade_ltr
