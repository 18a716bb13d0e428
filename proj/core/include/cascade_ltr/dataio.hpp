#pragma once

// Ranking datasets: SVMLight/LETOR text I/O, public-benchmark preprocessing,
// the signed log1p feature transform, synthetic teacher-labelled data, and
// query-level train/validation splits.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "cascade_ltr/numgraph.hpp"

namespace cascade_ltr {

struct Document {
  double label = 0.0;
  std::vector<double> features;

  friend bool operator==(const Document&, const Document&) = default;
};

struct QueryGroup {
  std::string query_id;
  std::vector<Document> documents;

  std::size_t size() const noexcept { return documents.size(); }
  std::vector<double> labels() const;
  // n x d feature matrix, one row per document.
  Matrix feature_matrix() const;

  friend bool operator==(const QueryGroup&, const QueryGroup&) = default;
};

struct Dataset {
  std::vector<QueryGroup> groups;
  std::size_t feature_dim = 0;
  std::string provenance;

  std::size_t num_documents() const;
  // Provenance is descriptive only and excluded from equality.
  friend bool operator==(const Dataset& a, const Dataset& b) {
    return a.feature_dim == b.feature_dim && a.groups == b.groups;
  }
};

// Lines look like `<label> qid:<id> <idx>:<val> ... [# comment]` with 1-based,
// possibly sparse, feature indices. Documents are grouped by qid value in
// order of first appearance; missing features are 0 and feature_dim is the
// largest index seen. Throws ParseError (with line number) on malformed
// lines and ValidationError("empty dataset") when no documents are found.
Dataset parse_svmlight(std::istream& in);
Dataset load_svmlight(const std::string& path);

// Canonical dense form: groups in stored order, every feature written
// (including zeros) with shortest round-trip decimal formatting.
void write_svmlight(std::ostream& out, const Dataset& ds);
void save_svmlight(const std::string& path, const Dataset& ds);

struct PreprocessOptions {
  std::size_t min_docs = 40;
  std::size_t max_docs = 200;
  std::size_t min_positives = 15;
  std::uint64_t seed = 0;
  std::size_t max_resample_attempts = 1000;
};

struct PreprocessStats {
  std::size_t input_queries = 0;
  std::size_t kept = 0;
  std::size_t dropped_too_few_docs = 0;
  std::size_t dropped_no_positives = 0;
  std::size_t dropped_insufficient_positives = 0;
  std::size_t truncated = 0;
};

// Drops queries with n <= min_docs and queries without any positive label
// (label > 0). Queries with n > max_docs are resampled with replacement down
// to max_docs until at least min_positives sampled documents are positive;
// queries with fewer than min_positives distinct positives, or where the
// attempts run out, are dropped.
Dataset preprocess_public(const Dataset& ds, const PreprocessOptions& options,
                          PreprocessStats* stats = nullptr);

// Replaces every feature x by sign(x) * ln(1 + |x|).
Dataset log1p_transform(const Dataset& ds);
double signed_log1p(double x);

enum class TeacherKind { kLinear, kMlp };
enum class TeacherActivation { kTanh, kRelu };

struct SyntheticSpec {
  std::size_t num_queries = 100;
  std::size_t docs_per_query = 40;
  std::size_t feature_dim = 16;
  TeacherKind teacher = TeacherKind::kLinear;
  std::vector<std::size_t> teacher_hidden;
  // MLP teacher weights are N(0, (teacher_weight_scale)^2 / fan_in); larger
  // values saturate the tanh units and make the teacher less linear.
  double teacher_weight_scale = 1.0;
  TeacherActivation teacher_activation = TeacherActivation::kTanh;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Random teacher drawn from the spec seed. Linear: score = w . x with
// w ~ N(0, 1). MLP: tanh hidden layers with N(0, scale^2/fan_in) weights,
// N(0, 0.25) biases and a linear read-out.
class Teacher {
 public:
  explicit Teacher(const SyntheticSpec& spec);
  double score(std::span<const double> features) const;

  const std::vector<Matrix>& weights() const noexcept { return weights_; }

 private:
  std::vector<Matrix> weights_;
  std::vector<Matrix> biases_;
  bool relu_ = false;
};

// Features ~ N(0, 1); labels are within-query descending rank indices of
// teacher score + N(0, noise_std^2), i.e. the best document gets n and the
// worst gets 1.
Dataset generate_synthetic(const SyntheticSpec& spec);

// Query-level split. The train side receives round(train_fraction * N)
// queries chosen by a seeded shuffle; either side being empty is an error.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, std::uint64_t seed);

}  // namespace cascade_ltr
