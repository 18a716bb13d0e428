#include "cascade_ltr/cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cascade_ltr/errors.hpp"
#include "cascade_ltr/seeding.hpp"

namespace cascade_ltr::cli {

namespace {

// Empty defaults are resolved from other keys after parsing.
const std::vector<std::pair<std::string, std::string>>& key_defaults() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"train_data", ""},
      {"valid_data", ""},
      {"test_data", ""},
      {"synthetic_queries", "600"},
      {"synthetic_docs", "40"},
      {"synthetic_dim", "16"},
      {"synthetic_teacher", "linear"},
      {"synthetic_teacher_hidden", "32,32"},
      {"synthetic_teacher_scale", "1"},
      {"synthetic_teacher_activation", "tanh"},
      {"synthetic_noise", "0"},
      {"synthetic_seed", ""},
      {"valid_queries", "0"},
      {"test_queries", "0"},
      {"valid_fraction", "0.2"},
      {"log1p", "false"},
      {"hidden", "64,32"},
      {"activation", "relu"},
      {"model_seed", ""},
      {"loss", "l_relax"},
      {"tau", "1"},
      {"m", "30"},
      {"k", "15"},
      {"sigma", "1"},
      {"approx_temp", "0.1"},
      {"alpha_init", "1"},
      {"gain", "auto"},
      {"softmax_target", "soft"},
      {"label_side", "relaxed"},
      {"label_tau", ""},
      {"label_jitter", "false"},
      {"learning_rate", "0.001"},
      {"max_epochs", "6"},
      {"batch_queries", "16"},
      {"eval_every", "0"},
      {"patience", "3"},
      {"min_delta", "1e-05"},
      {"eval_m", ""},
      {"eval_k", ""},
      {"eval_gain", ""},
      {"tau_grid", "0.1,0.3,1,3,10"},
      {"grid_search", "false"},
      {"seed", "0"},
      {"threads", "0"},
      {"metrics", ""},
      {"output_dir", ""},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  if (trim(value).empty()) return items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>) {
      out += format_number(items[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += items[i];
    } else {
      out += std::to_string(items[i]);
    }
  }
  return out;
}

std::string metric_text(const MetricSpec& spec) {
  switch (spec.kind) {
    case MetricKind::kOpa: return "opa";
    case MetricKind::kNdcg: return "ndcg";
    case MetricKind::kNdcgAtK: return "ndcg@" + std::to_string(spec.k);
    case MetricKind::kRecall:
      return "recall@" + std::to_string(spec.m) + "@" + std::to_string(spec.k);
  }
  return "";
}

// Collects conversion failures instead of stopping at the first one.
class Reader {
 public:
  explicit Reader(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  const std::string& raw(const std::string& key) const { return values_.at(key); }
  bool empty(const std::string& key) const { return trim(raw(key)).empty(); }

  double real(const std::string& key) {
    const std::string v = trim(raw(key));
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
      fail(key, "expected a finite number, got '" + v + "'");
    }
    return out;
  }

  std::uint64_t count(const std::string& key) { return parse_count(key, trim(raw(key))); }

  bool boolean(const std::string& key) {
    const std::string v = trim(raw(key));
    if (v == "true") return true;
    if (v != "false") fail(key, "expected true or false, got '" + v + "'");
    return false;
  }

  std::vector<std::size_t> counts(const std::string& key) {
    std::vector<std::size_t> out;
    for (const std::string& item : split_list(raw(key))) out.push_back(parse_count(key, item));
    return out;
  }

  std::vector<double> reals(const std::string& key) {
    std::vector<double> out;
    for (const std::string& item : split_list(raw(key))) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
        fail(key, "expected a list of numbers, got '" + raw(key) + "'");
        return {};
      }
      out.push_back(v);
    }
    return out;
  }

  // Runs a parser that reports problems by throwing ValidationError.
  template <typename F>
  auto guarded(const std::string& key, F&& parse) -> decltype(parse(std::string{})) {
    try {
      return parse(trim(raw(key)));
    } catch (const ValidationError& e) {
      fail(key, e.what());
      return {};
    }
  }

  void fail(const std::string& key, const std::string& message) {
    problems_.push_back(key.empty() ? message : key + ": " + message);
  }

  std::vector<std::string>& problems() { return problems_; }

 private:
  std::uint64_t parse_count(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
      fail(key, "expected a non-negative integer, got '" + v + "'");
    }
    return out;
  }

  std::map<std::string, std::string> values_;
  std::vector<std::string> problems_;
};

TeacherKind parse_teacher(const std::string& v) {
  if (v == "linear") return TeacherKind::kLinear;
  if (v == "mlp") return TeacherKind::kMlp;
  throw ValidationError("expected linear or mlp, got '" + v + "'");
}

TeacherActivation parse_teacher_activation(const std::string& v) {
  if (v == "tanh") return TeacherActivation::kTanh;
  if (v == "relu") return TeacherActivation::kRelu;
  throw ValidationError("expected tanh or relu, got '" + v + "'");
}

SoftmaxTarget parse_softmax_target(const std::string& v) {
  if (v == "soft") return SoftmaxTarget::kSoft;
  if (v == "one_hot") return SoftmaxTarget::kOneHot;
  throw ValidationError("expected soft or one_hot, got '" + v + "'");
}

LabelSide parse_label_side(const std::string& v) {
  if (v == "relaxed") return LabelSide::kRelaxed;
  if (v == "hard") return LabelSide::kHard;
  throw ValidationError("expected relaxed or hard, got '" + v + "'");
}

std::map<std::string, std::string> to_entries(const RunConfig& c) {
  const SyntheticSpec& s = c.data.synthetic;
  const LossSpec& l = c.loss;
  const TrainConfig& t = c.train;
  return {
      {"train_data", c.data.train_path},
      {"valid_data", c.data.valid_path},
      {"test_data", c.data.test_path},
      {"synthetic_queries", std::to_string(s.num_queries)},
      {"synthetic_docs", std::to_string(s.docs_per_query)},
      {"synthetic_dim", std::to_string(s.feature_dim)},
      {"synthetic_teacher", s.teacher == TeacherKind::kLinear ? "linear" : "mlp"},
      {"synthetic_teacher_hidden", join(s.teacher_hidden)},
      {"synthetic_teacher_scale", format_number(s.teacher_weight_scale)},
      {"synthetic_teacher_activation",
       s.teacher_activation == TeacherActivation::kTanh ? "tanh" : "relu"},
      {"synthetic_noise", format_number(s.noise_std)},
      {"synthetic_seed", std::to_string(s.seed)},
      {"valid_queries", std::to_string(c.data.valid_queries)},
      {"test_queries", std::to_string(c.data.test_queries)},
      {"valid_fraction", format_number(c.data.valid_fraction)},
      {"log1p", c.data.log1p ? "true" : "false"},
      {"hidden", join(c.model.hidden)},
      {"activation", to_string(c.model.activation)},
      {"model_seed", std::to_string(c.model.seed)},
      {"loss", to_string(l.kind)},
      {"tau", format_number(l.tau)},
      {"m", std::to_string(l.m)},
      {"k", std::to_string(l.k)},
      {"sigma", format_number(l.sigma)},
      {"approx_temp", format_number(l.approx_temp)},
      {"alpha_init", format_number(l.alpha_init)},
      {"gain", to_string(l.gain)},
      {"softmax_target", l.softmax_target == SoftmaxTarget::kSoft ? "soft" : "one_hot"},
      {"label_side", l.label_side.side == LabelSide::kRelaxed ? "relaxed" : "hard"},
      {"label_tau", l.label_side.tau ? format_number(*l.label_side.tau) : ""},
      {"label_jitter", l.label_side.jitter ? "true" : "false"},
      {"learning_rate", format_number(t.learning_rate)},
      {"max_epochs", std::to_string(t.max_epochs)},
      {"batch_queries", std::to_string(t.batch_queries)},
      {"eval_every", std::to_string(t.early_stop.eval_every)},
      {"patience", std::to_string(t.early_stop.patience)},
      {"min_delta", format_number(t.early_stop.min_delta)},
      {"eval_m", std::to_string(t.eval_m)},
      {"eval_k", std::to_string(t.eval_k)},
      {"eval_gain", to_string(t.eval_gain)},
      {"tau_grid", join(t.tau_grid)},
      {"grid_search", c.grid_search ? "true" : "false"},
      {"seed", std::to_string(t.seed)},
      {"threads", std::to_string(t.threads)},
      {"metrics", join(c.metrics)},
      {"output_dir", c.output_dir},
  };
}

}  // namespace

const std::vector<std::string>& run_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> out;
    for (const auto& [key, value] : key_defaults()) out.push_back(key);
    return out;
  }();
  return keys;
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  std::map<std::string, std::string> values;
  for (const auto& [key, value] : key_defaults()) values[key] = value;

  std::vector<std::string> syntax;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = "line " + std::to_string(number) + ": ";
    if (eq == std::string::npos) {
      syntax.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = trim(body.substr(0, eq));
    if (!values.contains(key)) {
      syntax.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (seen.contains(key)) {
      syntax.push_back(where + "duplicate key '" + key + "' (first set on line " +
                       std::to_string(seen[key]) + ")");
      continue;
    }
    seen[key] = number;
    values[key] = trim(body.substr(eq + 1));
  }

  Reader r(values);
  r.problems() = syntax;
  RunConfig c;

  c.data.train_path = trim(r.raw("train_data"));
  c.data.valid_path = trim(r.raw("valid_data"));
  c.data.test_path = trim(r.raw("test_data"));
  c.output_dir = trim(r.raw("output_dir"));
  c.train.seed = r.count("seed");

  SyntheticSpec& s = c.data.synthetic;
  s.num_queries = r.count("synthetic_queries");
  s.docs_per_query = r.count("synthetic_docs");
  s.feature_dim = r.count("synthetic_dim");
  s.teacher = r.guarded("synthetic_teacher", parse_teacher);
  s.teacher_hidden = r.counts("synthetic_teacher_hidden");
  s.teacher_weight_scale = r.real("synthetic_teacher_scale");
  s.teacher_activation = r.guarded("synthetic_teacher_activation", parse_teacher_activation);
  s.noise_std = r.real("synthetic_noise");
  s.seed = r.empty("synthetic_seed") ? c.train.seed : r.count("synthetic_seed");
  c.data.valid_queries = r.count("valid_queries");
  c.data.test_queries = r.count("test_queries");
  c.data.valid_fraction = r.real("valid_fraction");
  c.data.log1p = r.boolean("log1p");

  c.model.hidden = r.counts("hidden");
  c.model.activation = r.guarded("activation", [](const std::string& v) { return parse_activation(v); });
  c.model.seed = r.empty("model_seed") ? derive_seed(c.train.seed, 1) : r.count("model_seed");

  LossSpec& l = c.loss;
  l.kind = r.guarded("loss", [](const std::string& v) { return parse_loss_kind(v); });
  l.tau = r.real("tau");
  l.m = r.count("m");
  l.k = r.count("k");
  l.sigma = r.real("sigma");
  l.approx_temp = r.real("approx_temp");
  l.alpha_init = r.real("alpha_init");
  // Synthetic labels are rank indices up to n, so 2^label gains would explode.
  const GainMode auto_gain = c.data.synthetic_data() ? GainMode::kLinear : GainMode::kExponential;
  l.gain = trim(r.raw("gain")) == "auto"
               ? auto_gain
               : r.guarded("gain", [](const std::string& v) { return parse_gain_mode(v); });
  l.softmax_target = r.guarded("softmax_target", parse_softmax_target);
  l.label_side.side = r.guarded("label_side", parse_label_side);
  if (!r.empty("label_tau")) l.label_side.tau = r.real("label_tau");
  l.label_side.jitter = r.boolean("label_jitter");

  TrainConfig& t = c.train;
  t.learning_rate = r.real("learning_rate");
  t.max_epochs = r.count("max_epochs");
  t.batch_queries = r.count("batch_queries");
  t.early_stop.eval_every = r.count("eval_every");
  t.early_stop.patience = r.count("patience");
  t.early_stop.min_delta = r.real("min_delta");
  t.eval_m = r.empty("eval_m") ? l.m : r.count("eval_m");
  t.eval_k = r.empty("eval_k") ? l.k : r.count("eval_k");
  t.eval_gain = r.empty("eval_gain")
                    ? l.gain
                    : r.guarded("eval_gain", [](const std::string& v) { return parse_gain_mode(v); });
  t.tau_grid = r.reals("tau_grid");
  t.threads = r.count("threads");
  c.grid_search = r.boolean("grid_search");

  c.metrics = split_list(r.raw("metrics"));
  if (c.metrics.empty()) {
    c.metrics = {metric_text(MetricSpec::recall(t.eval_m, t.eval_k)), "ndcg", "opa"};
  }
  for (const std::string& m : c.metrics) {
    try {
      MetricSpec::parse(m, t.eval_gain);
    } catch (const ValidationError& e) {
      r.fail("metrics", e.what());
    }
  }

  // Semantic checks only make sense once every value converted.
  if (r.problems().empty()) {
    const auto check = [&](const std::string& key, auto&& fn) {
      try {
        fn();
      } catch (const ValidationError& e) {
        r.fail(key, e.what());
      }
    };
    check("", [&] { l.validate(); });
    check("", [&] { t.validate(); });
    if (c.data.synthetic_data()) {
      check("", [&] { s.validate(); });
      const std::size_t held_out = (c.data.valid_path.empty() ? c.data.valid_queries : 0) + c.data.test_queries;
      if (held_out >= s.num_queries) {
        r.fail("valid_queries", "valid_queries + test_queries must be smaller than synthetic_queries");
      }
    }
    if (c.data.test_queries > 0 && !c.data.test_path.empty()) {
      r.fail("test_queries", "cannot be combined with test_data");
    }
    if (c.data.valid_queries == 0 && !(c.data.valid_fraction > 0.0 && c.data.valid_fraction < 1.0)) {
      r.fail("valid_fraction", "must lie strictly between 0 and 1");
    }
    if (c.grid_search && !l.uses_tau()) {
      r.fail("grid_search", "loss '" + to_string(l.kind) + "' has no temperature to search");
    }
    if (c.grid_search && t.tau_grid.empty()) r.fail("tau_grid", "must not be empty");
  }

  if (!r.problems().empty()) {
    std::string message = "invalid config " + origin + ":";
    for (const std::string& p : r.problems()) message += "\n  " + p;
    throw ValidationError(message);
  }
  c.entries = to_entries(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), "'" + path + "'");
}

std::string format_run_config(const RunConfig& config) {
  const auto entries = to_entries(config);
  std::string out;
  for (const std::string& key : run_config_keys()) {
    out += key + " = " + entries.at(key) + "\n";
  }
  return out;
}

}  // namespace cascade_ltr::cli
