#include "cascade_ltr/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string_view>
#include <unordered_map>

#include "cascade_ltr/errors.hpp"
#include "cascade_ltr/seeding.hpp"

namespace cascade_ltr {

std::vector<double> QueryGroup::labels() const {
  std::vector<double> out;
  out.reserve(documents.size());
  for (const Document& d : documents) out.push_back(d.label);
  return out;
}

Matrix QueryGroup::feature_matrix() const {
  const std::size_t n = documents.size();
  const std::size_t d = n == 0 ? 0 : documents.front().features.size();
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(documents[i].features.begin(), documents[i].features.end(), &out(i, 0));
  }
  return out;
}

std::size_t Dataset::num_documents() const {
  std::size_t total = 0;
  for (const QueryGroup& g : groups) total += g.size();
  return total;
}

// ---- SVMLight --------------------------------------------------------------

namespace {

bool parse_double(std::string_view token, double& out) {
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  if (token.empty()) return false;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

bool parse_index(std::string_view token, std::size_t& out) {
  if (token.empty()) return false;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

struct SparseDoc {
  double label;
  std::vector<std::pair<std::size_t, double>> entries;
};

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

Dataset parse_svmlight(std::istream& in) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::size_t> group_index;
  std::vector<std::vector<SparseDoc>> sparse_groups;
  std::size_t max_index = 0;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    const auto tokens = split_ws(view);
    if (tokens.empty()) continue;

    SparseDoc doc{};
    if (!parse_double(tokens[0], doc.label)) {
      throw ParseError(line_no, "invalid label '" + std::string(tokens[0]) + "'");
    }
    if (tokens.size() < 2 || tokens[1].substr(0, 4) != "qid:" || tokens[1].size() == 4) {
      throw ParseError(line_no, "expected qid:<id> after the label");
    }
    const std::string qid(tokens[1].substr(4));

    std::size_t last_index = 0;
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      const auto colon = tokens[t].find(':');
      if (colon == std::string_view::npos) {
        throw ParseError(line_no, "expected <index>:<value>, got '" + std::string(tokens[t]) + "'");
      }
      std::size_t index = 0;
      double value = 0.0;
      if (!parse_index(tokens[t].substr(0, colon), index) || index == 0) {
        throw ParseError(line_no, "invalid feature index in '" + std::string(tokens[t]) + "'");
      }
      if (!parse_double(tokens[t].substr(colon + 1), value)) {
        throw ParseError(line_no, "invalid feature value in '" + std::string(tokens[t]) + "'");
      }
      if (index <= last_index) {
        throw ParseError(line_no, "feature indices must be strictly increasing");
      }
      last_index = index;
      max_index = std::max(max_index, index);
      doc.entries.emplace_back(index, value);
    }

    auto [it, inserted] = group_index.try_emplace(qid, sparse_groups.size());
    if (inserted) {
      order.push_back(qid);
      sparse_groups.emplace_back();
    }
    sparse_groups[it->second].push_back(std::move(doc));
  }
  if (in.bad()) throw IoError("read failure while parsing SVMLight input");
  if (sparse_groups.empty()) throw ValidationError("empty dataset");

  Dataset ds;
  ds.feature_dim = max_index;
  ds.groups.reserve(sparse_groups.size());
  for (std::size_t g = 0; g < sparse_groups.size(); ++g) {
    QueryGroup group;
    group.query_id = order[g];
    group.documents.reserve(sparse_groups[g].size());
    for (const SparseDoc& sd : sparse_groups[g]) {
      Document doc;
      doc.label = sd.label;
      doc.features.assign(max_index, 0.0);
      for (const auto& [index, value] : sd.entries) doc.features[index - 1] = value;
      group.documents.push_back(std::move(doc));
    }
    ds.groups.push_back(std::move(group));
  }
  ds.provenance = "svmlight";
  return ds;
}

Dataset load_svmlight(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  try {
    Dataset ds = parse_svmlight(in);
    ds.provenance = "svmlight:" + path;
    return ds;
  } catch (const ParseError& e) {
    throw ParseError(e.line(), std::string(path) + ": " + e.what());
  }
}

void write_svmlight(std::ostream& out, const Dataset& ds) {
  for (const QueryGroup& g : ds.groups) {
    for (const Document& d : g.documents) {
      out << format_double(d.label) << " qid:" << g.query_id;
      for (std::size_t i = 0; i < d.features.size(); ++i) {
        out << ' ' << (i + 1) << ':' << format_double(d.features[i]);
      }
      out << '\n';
    }
  }
}

void save_svmlight(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_svmlight(out, ds);
  if (!out) throw IoError("write failure on '" + path + "'");
}

// ---- preprocessing ---------------------------------------------------------

Dataset preprocess_public(const Dataset& ds, const PreprocessOptions& options,
                          PreprocessStats* stats) {
  if (options.max_docs < 2) throw ValidationError("max_docs must be at least 2");
  if (options.min_docs >= options.max_docs) {
    throw ValidationError("min_docs must be smaller than max_docs");
  }
  PreprocessStats local;
  local.input_queries = ds.groups.size();

  Dataset out;
  out.feature_dim = ds.feature_dim;
  std::mt19937_64 rng(derive_seed(options.seed, 0x5052));

  for (const QueryGroup& g : ds.groups) {
    const std::size_t n = g.size();
    if (n <= options.min_docs || n < 2) {
      ++local.dropped_too_few_docs;
      continue;
    }
    const auto positives = static_cast<std::size_t>(std::count_if(
        g.documents.begin(), g.documents.end(), [](const Document& d) { return d.label > 0.0; }));
    if (positives == 0) {
      ++local.dropped_no_positives;
      continue;
    }
    if (n <= options.max_docs) {
      out.groups.push_back(g);
      continue;
    }
    if (positives < options.min_positives) {
      ++local.dropped_insufficient_positives;
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    bool accepted = false;
    QueryGroup sample;
    sample.query_id = g.query_id;
    for (std::size_t attempt = 0; attempt < options.max_resample_attempts; ++attempt) {
      sample.documents.clear();
      std::size_t sampled_positives = 0;
      for (std::size_t i = 0; i < options.max_docs; ++i) {
        const Document& d = g.documents[pick(rng)];
        if (d.label > 0.0) ++sampled_positives;
        sample.documents.push_back(d);
      }
      if (sampled_positives >= options.min_positives) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      ++local.dropped_insufficient_positives;
      continue;
    }
    ++local.truncated;
    out.groups.push_back(std::move(sample));
  }
  local.kept = out.groups.size();
  out.provenance = ds.provenance + " | preprocess(min_docs=" + std::to_string(options.min_docs) +
                   ", max_docs=" + std::to_string(options.max_docs) +
                   ", min_positives=" + std::to_string(options.min_positives) +
                   ", seed=" + std::to_string(options.seed) + ")";
  if (stats) *stats = local;
  return out;
}

double signed_log1p(double x) {
  return std::copysign(std::log1p(std::abs(x)), x);
}

Dataset log1p_transform(const Dataset& ds) {
  Dataset out = ds;
  for (QueryGroup& g : out.groups) {
    for (Document& d : g.documents) {
      for (double& x : d.features) x = x == 0.0 ? 0.0 : signed_log1p(x);
    }
  }
  out.provenance = ds.provenance + " | log1p";
  return out;
}

// ---- synthetic data --------------------------------------------------------

void SyntheticSpec::validate() const {
  std::string problems;
  if (num_queries < 1) problems += " num_queries must be >= 1;";
  if (docs_per_query < 2) problems += " docs_per_query must be >= 2;";
  if (feature_dim < 1) problems += " feature_dim must be >= 1;";
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) problems += " noise_std must be >= 0;";
  if (!(teacher_weight_scale > 0.0) || !std::isfinite(teacher_weight_scale)) {
    problems += " teacher_weight_scale must be positive;";
  }
  if (teacher == TeacherKind::kMlp && teacher_hidden.empty()) {
    problems += " mlp teacher needs at least one hidden layer;";
  }
  for (std::size_t h : teacher_hidden) {
    if (h == 0) problems += " teacher hidden sizes must be positive;";
  }
  if (!problems.empty()) throw ValidationError("invalid synthetic spec:" + problems);
}

Teacher::Teacher(const SyntheticSpec& spec)
    : relu_(spec.teacher_activation == TeacherActivation::kRelu) {
  spec.validate();
  std::mt19937_64 rng(derive_seed(spec.seed, 0x7EAC));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::size_t> sizes{spec.feature_dim};
  if (spec.teacher == TeacherKind::kMlp) {
    sizes.insert(sizes.end(), spec.teacher_hidden.begin(), spec.teacher_hidden.end());
  }
  sizes.push_back(1);
  const bool linear = spec.teacher == TeacherKind::kLinear;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Matrix w(sizes[l], sizes[l + 1]);
    const double stddev =
        linear ? 1.0 : spec.teacher_weight_scale / std::sqrt(static_cast<double>(sizes[l]));
    for (double& v : w.data()) v = stddev * normal(rng);
    Matrix b(1, sizes[l + 1]);
    if (!linear) {
      for (double& v : b.data()) v = 0.5 * normal(rng);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

double Teacher::score(std::span<const double> features) const {
  std::vector<double> act(features.begin(), features.end());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Matrix& w = weights_[l];
    std::vector<double> next(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      for (std::size_t j = 0; j < w.cols(); ++j) next[j] += act[i] * w(i, j);
    }
    for (std::size_t j = 0; j < w.cols(); ++j) next[j] += biases_[l](0, j);
    if (l + 1 < weights_.size()) {
      for (double& v : next) v = relu_ ? std::max(v, 0.0) : std::tanh(v);
    }
    act = std::move(next);
  }
  return act[0];
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Teacher teacher(spec);
  std::mt19937_64 rng(derive_seed(spec.seed, 0xDA7A));
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.feature_dim = spec.feature_dim;
  ds.groups.reserve(spec.num_queries);
  const std::size_t n = spec.docs_per_query;
  std::vector<double> noisy(n);
  std::vector<std::size_t> order(n);
  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    QueryGroup g;
    g.query_id = std::to_string(q + 1);
    g.documents.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Document& d = g.documents[i];
      d.features.resize(spec.feature_dim);
      for (double& x : d.features) x = normal(rng);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double eps = normal(rng);
      noisy[i] = teacher.score(g.documents[i].features) + spec.noise_std * eps;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return noisy[a] > noisy[b]; });
    for (std::size_t pos = 0; pos < n; ++pos) {
      g.documents[order[pos]].label = static_cast<double>(n - pos);
    }
    ds.groups.push_back(std::move(g));
  }
  ds.provenance = std::string("synthetic(teacher=") +
                  (spec.teacher == TeacherKind::kLinear ? "linear" : "mlp") +
                  ", queries=" + std::to_string(spec.num_queries) + ", n=" + std::to_string(n) +
                  ", d=" + std::to_string(spec.feature_dim) +
                  ", noise=" + format_double(spec.noise_std) +
                  ", seed=" + std::to_string(spec.seed) + ")";
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ValidationError("train_fraction must lie strictly between 0 and 1");
  }
  const std::size_t total = ds.groups.size();
  const auto train_count =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(total)));
  if (train_count == 0 || train_count >= total) {
    throw ValidationError("split of " + std::to_string(total) + " queries at fraction " +
                          format_double(train_fraction) + " leaves one side empty");
  }
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, 0x5B17));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_count));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(train_count), idx.end());

  Dataset train;
  Dataset test;
  train.feature_dim = test.feature_dim = ds.feature_dim;
  for (std::size_t i = 0; i < total; ++i) {
    (i < train_count ? train : test).groups.push_back(ds.groups[idx[i]]);
  }
  train.provenance = ds.provenance + " | split(train)";
  test.provenance = ds.provenance + " | split(holdout)";
  return {std::move(train), std::move(test)};
}

}  // namespace cascade_ltr
