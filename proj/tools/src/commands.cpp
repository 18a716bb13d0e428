#include "cascade_ltr/cli/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cascade_ltr/errors.hpp"
#include "cascade_ltr/gradcheck.hpp"
#include "cascade_ltr/parallel.hpp"
#include "cascade_ltr/seeding.hpp"

namespace cascade_ltr::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

Json provenance_header(const std::string& command) {
  Json j;
  j["tool"] = "cascade_ltr";
  j["version"] = tool_version();
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  return j;
}

Json config_echo(const RunConfig& config) {
  Json j = Json::object();
  for (const std::string& key : run_config_keys()) j[key] = config.entries.at(key);
  return j;
}

void write_json(const std::string& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

// Adds the file path to parse errors so messages read `path: line N: ...`.
Dataset load_dataset(const std::string& path) {
  try {
    return load_svmlight(path);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// Sparse files may stop short of the highest feature index.
void pad_features(Dataset& ds, std::size_t dim) {
  if (ds.feature_dim == dim) return;
  if (ds.feature_dim > dim) {
    throw ValidationError("dataset has " + std::to_string(ds.feature_dim) +
                          " features but at most " + std::to_string(dim) + " are expected");
  }
  for (QueryGroup& g : ds.groups) {
    for (Document& d : g.documents) d.features.resize(dim, 0.0);
  }
  ds.feature_dim = dim;
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("input file '" + path + "' does not exist");
}

void prepare_output_dir(const std::string& dir) {
  if (dir.empty()) throw ValidationError("output_dir is required");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create output directory '" + dir + "'");
  }
}

std::vector<MetricSpec> parse_metrics(const std::vector<std::string>& names, GainMode gain) {
  std::vector<MetricSpec> out;
  for (const std::string& name : names) out.push_back(MetricSpec::parse(name, gain));
  return out;
}

std::string report_csv(const MetricReport& report) {
  std::ostringstream out;
  report.write_csv(out);
  return out.str();
}

void print_means(std::ostream& out, const MetricReport& report) {
  for (const MetricResult& r : report.results) {
    out << "  " << r.spec.name();
    if (!r.spec.params().empty()) out << " (" << r.spec.params() << ")";
    out << ": " << r.mean << "\n";
  }
}

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::size_t smallest_query(const Dataset& ds) {
  std::size_t n = ds.groups.empty() ? 0 : ds.groups.front().size();
  for (const QueryGroup& g : ds.groups) n = std::min(n, g.size());
  return n;
}

}  // namespace

const char* tool_version() { return CASCADE_LTR_VERSION; }

int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failure on '" + tmp + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

LoadedData load_data(const RunConfig& config) {
  const DataConfig& dc = config.data;
  LoadedData data;
  Dataset pool;
  if (dc.synthetic_data()) {
    pool = generate_synthetic(dc.synthetic);
  } else {
    pool = load_dataset(dc.train_path);
    if (dc.log1p) pool = log1p_transform(pool);
  }
  if (dc.test_queries > 0) {
    const double n = static_cast<double>(pool.groups.size());
    if (dc.test_queries >= pool.groups.size()) throw ValidationError("test_queries leaves no training data");
    auto [rest, test] = split(pool, (n - static_cast<double>(dc.test_queries)) / n, derive_seed(config.train.seed, 3));
    pool = std::move(rest);
    data.test = std::move(test);
  }
  if (dc.valid_path.empty()) {
    const double n = static_cast<double>(pool.groups.size());
    const double train_fraction = dc.valid_queries > 0
                                      ? (n - static_cast<double>(dc.valid_queries)) / n
                                      : 1.0 - dc.valid_fraction;
    auto [tr, va] = split(pool, train_fraction, derive_seed(config.train.seed, 2));
    data.train = std::move(tr);
    data.valid = std::move(va);
  } else {
    data.train = std::move(pool);
    data.valid = load_dataset(dc.valid_path);
    if (dc.log1p) data.valid = log1p_transform(data.valid);
  }
  if (!dc.test_path.empty()) {
    data.test = load_dataset(dc.test_path);
    if (dc.log1p) *data.test = log1p_transform(*data.test);
  }

  std::size_t dim = std::max(data.train.feature_dim, data.valid.feature_dim);
  if (data.test) dim = std::max(dim, data.test->feature_dim);
  pad_features(data.train, dim);
  pad_features(data.valid, dim);
  if (data.test) pad_features(*data.test, dim);

  const auto check_size = [&](const Dataset& ds, const std::string& name) {
    const std::size_t n = smallest_query(ds);
    if (config.loss.uses_m()) config.loss.validate_for(n);
    if (config.train.eval_m > n) {
      throw ValidationError(name + " has a query with " + std::to_string(n) +
                            " documents, fewer than eval_m = " + std::to_string(config.train.eval_m));
    }
  };
  check_size(data.train, "training data");
  check_size(data.valid, "validation data");
  return data;
}

TrainOutcome run_training(const RunConfig& config, const LoadedData& data) {
  const std::size_t dim = data.train.feature_dim;
  const ModelConfig& mc = config.model;
  TrainOutcome outcome;
  if (config.grid_search) {
    const auto factory = [&](std::uint64_t seed) {
      return ScorerModel(dim, mc.hidden, mc.activation, seed);
    };
    GridSearchResult grid = grid_search_tau(factory, data.train, data.valid, config.loss, config.train);
    outcome.tau = grid.best_tau;
    outcome.result = grid.trials[grid.best_index].result;
    outcome.grid = std::move(grid);
  } else {
    outcome.tau = config.loss.tau;
    outcome.result = train(ScorerModel(dim, mc.hidden, mc.activation, mc.seed), data.train,
                           data.valid, config.loss, config.train);
  }
  outcome.report = evaluate(outcome.result.model, data.report_set(),
                            parse_metrics(config.metrics, config.train.eval_gain), config.train.threads);
  return outcome;
}

int cmd_prepare(const PrepareArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    require_file(args.input);
    Dataset raw = load_dataset(args.input);
    PreprocessStats stats;
    Dataset prepared = preprocess_public(raw, args.options, &stats);
    if (prepared.groups.empty()) {
      throw ValidationError(args.input + ": empty dataset after preprocessing (" +
                            std::to_string(stats.input_queries) + " queries dropped)");
    }
    if (args.log1p) prepared = log1p_transform(prepared);

    std::ostringstream text;
    write_svmlight(text, prepared);
    write_file_atomic(args.output, text.str());

    Json j = provenance_header("prepare");
    j["input"] = args.input;
    j["output"] = args.output;
    j["options"] = {{"min_docs", args.options.min_docs},
                    {"max_docs", args.options.max_docs},
                    {"min_positives", args.options.min_positives},
                    {"log1p", args.log1p},
                    {"seed", args.options.seed}};
    j["counts"] = {{"input_queries", stats.input_queries},
                   {"kept", stats.kept},
                   {"dropped_too_few_docs", stats.dropped_too_few_docs},
                   {"dropped_no_positives", stats.dropped_no_positives},
                   {"dropped_insufficient_positives", stats.dropped_insufficient_positives},
                   {"truncated", stats.truncated}};
    write_json(args.output + ".provenance.json", j);

    out << "kept " << stats.kept << " of " << stats.input_queries << " queries ("
        << stats.truncated << " truncated) -> " << args.output << "\n";
    return kExitOk;
  });
}

int cmd_generate(const GenerateArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    args.spec.validate();
    const Dataset ds = generate_synthetic(args.spec);
    std::ostringstream text;
    write_svmlight(text, ds);
    write_file_atomic(args.output, text.str());

    const SyntheticSpec& s = args.spec;
    Json j = provenance_header("generate");
    j["output"] = args.output;
    j["spec"] = {{"queries", s.num_queries},
                 {"docs", s.docs_per_query},
                 {"dim", s.feature_dim},
                 {"teacher", s.teacher == TeacherKind::kLinear ? "linear" : "mlp"},
                 {"teacher_hidden", s.teacher_hidden},
                 {"teacher_scale", s.teacher_weight_scale},
                 {"teacher_activation", s.teacher_activation == TeacherActivation::kTanh ? "tanh" : "relu"},
                 {"noise", s.noise_std},
                 {"seed", s.seed}};
    write_json(args.output + ".provenance.json", j);
    out << "wrote " << ds.groups.size() << " queries -> " << args.output << "\n";
    return kExitOk;
  });
}

int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    require_file(config_path);
    const RunConfig config = load_run_config(config_path);
    for (const std::string& p : {config.data.train_path, config.data.valid_path, config.data.test_path}) {
      if (!p.empty()) require_file(p);
    }
    prepare_output_dir(config.output_dir);
    const fs::path dir(config.output_dir);

    const LoadedData data = load_data(config);
    const TrainOutcome outcome = run_training(config, data);
    const TrainResult& result = outcome.result;

    std::ostringstream model_text;
    result.model.save(model_text);
    write_file_atomic((dir / "model.txt").string(), model_text.str());

    std::ostringstream history;
    result.history.write_csv(history, config.loss.uses_alpha());
    write_file_atomic((dir / "history.csv").string(), history.str());
    write_file_atomic((dir / "report.csv").string(), report_csv(outcome.report));

    Json j = provenance_header("train");
    j["config"] = config_echo(config);
    j["data"] = {{"train_queries", data.train.groups.size()},
                 {"valid_queries", data.valid.groups.size()},
                 {"report_set", data.test ? "test" : "valid"},
                 {"feature_dim", data.train.feature_dim}};
    j["result"] = {{"tau", outcome.tau},
                   {"best_val_recall", result.history.best_val_recall()},
                   {"best_step", result.history.records[result.history.best_record].step},
                   {"evaluations", result.history.records.size()},
                   {"epochs", result.history.epoch_train_loss.size()},
                   {"stop_reason", to_string(result.history.stop_reason)},
                   {"flags", result.history.flags}};
    if (result.alpha) j["result"]["alpha"] = *result.alpha;
    Json means = Json::object();
    for (const MetricResult& r : outcome.report.results) {
      means[r.spec.name() + (r.spec.params().empty() ? "" : "[" + r.spec.params() + "]")] = r.mean;
    }
    j["report_means"] = means;

    if (outcome.grid) {
      std::ostringstream grid;
      grid << "tau,best_val_recall,stop_reason,flags\n";
      for (const TauTrial& t : outcome.grid->trials) {
        std::string flags;
        for (const std::string& f : t.result.history.flags) flags += (flags.empty() ? "" : ";") + f;
        grid << num(t.tau) << "," << num(t.result.history.best_val_recall()) << ","
             << to_string(t.result.history.stop_reason) << "," << flags << "\n";
      }
      write_file_atomic((dir / "tau_grid.csv").string(), grid.str());
    }
    j["outputs"] = Json::array({"model.txt", "history.csv", "report.csv"});
    if (outcome.grid) j["outputs"].push_back("tau_grid.csv");
    write_json((dir / "provenance.json").string(), j);

    out << "loss " << to_string(config.loss.kind) << ", tau " << outcome.tau << ": best validation recall "
        << result.history.best_val_recall() << " after " << result.history.epoch_train_loss.size()
        << " epochs (" << to_string(result.history.stop_reason) << ")\n";
    print_means(out, outcome.report);
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    require_file(args.model_path);
    require_file(args.data_path);
    const ScorerModel model = ScorerModel::load_file(args.model_path);
    Dataset ds = load_dataset(args.data_path);
    if (args.log1p) ds = log1p_transform(ds);
    pad_features(ds, model.input_dim());
    const MetricReport report = evaluate(model, ds, parse_metrics(args.metrics, args.gain), args.threads);
    if (!args.output.empty()) write_file_atomic(args.output, report_csv(report));
    out << ds.groups.size() << " queries\n";
    print_means(out, report);
    return kExitOk;
  });
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    LossSpec spec = args.loss;
    if (!spec.uses_m()) spec.m = spec.k = 0;
    spec.validate();
    spec.validate_for(args.items);
    if (args.trials == 0) throw ValidationError("trials must be >= 1");
    std::mt19937_64 rng(args.seed);
    std::normal_distribution<double> normal;
    double worst = 0.0;
    for (std::size_t t = 0; t < args.trials; ++t) {
      std::vector<double> scores(args.items);
      for (double& s : scores) s = normal(rng);
      std::vector<double> labels(args.items);
      for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<double>(i + 1);
      std::shuffle(labels.begin(), labels.end(), rng);
      std::vector<Matrix> inputs{Matrix::column(scores)};
      if (spec.uses_alpha()) inputs.push_back(Matrix::scalar(spec.alpha_init));
      const auto build = [&](Graph&, std::span<const Var> in) {
        return build_loss(in[0], labels, spec, in.size() > 1 ? std::optional<Var>(in[1]) : std::nullopt);
      };
      worst = std::max(worst, check_gradients(build, inputs).rel_error);
    }
    const bool ok = worst < args.tolerance;
    out << to_string(spec.kind) << ": max relative error " << worst << " over " << args.trials
        << " instances (n=" << args.items << ") " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kExitOk : kExitRuntime;
  });
}

std::vector<std::pair<std::size_t, std::size_t>> sweep_grid(const std::vector<std::size_t>& m_list,
                                                            const std::vector<std::size_t>& k_list) {
  std::vector<std::pair<std::size_t, std::size_t>> grid;
  for (std::size_t m : m_list) {
    for (std::size_t k : k_list) {
      if (k >= 1 && k <= m) grid.emplace_back(m, k);
    }
  }
  return grid;
}

double diagonal_consistency(const std::vector<std::pair<std::size_t, std::size_t>>& grid,
                            const std::vector<SweepCell>& cells) {
  if (grid.empty()) return 0.0;
  const std::size_t g = grid.size();
  if (cells.size() != g * g) throw ContractError("sweep cells do not cover the grid");
  std::size_t matches = 0;
  for (std::size_t e = 0; e < g; ++e) {
    double best = -1.0;
    for (std::size_t t = 0; t < g; ++t) best = std::max(best, cells[t * g + e].recall);
    if (cells[e * g + e].recall >= best) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(g);
}

SweepResult run_sweep(const RunConfig& config, const LoadedData& data,
                      const std::vector<std::pair<std::size_t, std::size_t>>& grid) {
  if (config.loss.kind != LossKind::kLRelax && config.loss.kind != LossKind::kLambdaRecall) {
    throw ValidationError("sweep needs loss l_relax or lambda_recall, got " + to_string(config.loss.kind));
  }
  SweepResult result;
  result.grid = grid;
  if (result.grid.empty()) throw ValidationError("sweep grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto [m, k] = grid[i];
    if (k < 1 || k > m) {
      throw ValidationError("sweep pair (" + std::to_string(m) + "," + std::to_string(k) + ") needs 1 <= k <= m");
    }
    if (std::find(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(i), grid[i]) != grid.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw ValidationError("sweep pair (" + std::to_string(m) + "," + std::to_string(k) + ") is repeated");
    }
  }
  const std::size_t n = std::min(smallest_query(data.train), smallest_query(data.report_set()));
  for (const auto& [m, k] : result.grid) {
    if (m > n) {
      throw ValidationError("sweep m = " + std::to_string(m) + " exceeds the smallest query (" +
                            std::to_string(n) + " documents)");
    }
  }

  const std::size_t g = result.grid.size();
  std::vector<MetricSpec> eval_specs;
  for (const auto& [m, k] : result.grid) eval_specs.push_back(MetricSpec::recall(m, k));

  // Every cell starts from the same seeds so that only (m, k) varies.
  const std::size_t threads = config.train.threads == 0 ? default_thread_count() : config.train.threads;
  const std::size_t inner = threads > 1 ? 1 : threads;
  std::vector<std::vector<double>> recalls(g);
  parallel_for(g, threads, [&](std::size_t t) {
    RunConfig cell = config;
    cell.loss.m = cell.train.eval_m = result.grid[t].first;
    cell.loss.k = cell.train.eval_k = result.grid[t].second;
    cell.train.threads = inner;
    const TrainOutcome trained = run_training(cell, data);
    const MetricReport report = evaluate(trained.result.model, data.report_set(), eval_specs, inner);
    for (const MetricResult& r : report.results) recalls[t].push_back(r.mean);
  });

  for (std::size_t t = 0; t < g; ++t) {
    for (std::size_t e = 0; e < g; ++e) {
      result.cells.push_back({result.grid[t].first, result.grid[t].second, result.grid[e].first,
                              result.grid[e].second, recalls[t][e]});
    }
  }
  result.consistency = diagonal_consistency(result.grid, result.cells);
  return result;
}

int cmd_sweep(const std::string& config_path, const std::vector<std::pair<std::size_t, std::size_t>>& grid,
              std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    require_file(config_path);
    const RunConfig config = load_run_config(config_path);
    for (const std::string& p : {config.data.train_path, config.data.valid_path, config.data.test_path}) {
      if (!p.empty()) require_file(p);
    }
    prepare_output_dir(config.output_dir);
    const fs::path dir(config.output_dir);

    const LoadedData data = load_data(config);
    const SweepResult sweep = run_sweep(config, data, grid);

    std::ostringstream csv;
    csv << "train_m,train_k,eval_m,eval_k,recall\n";
    for (const SweepCell& c : sweep.cells) {
      csv << c.train_m << "," << c.train_k << "," << c.eval_m << "," << c.eval_k << "," << num(c.recall) << "\n";
    }
    write_file_atomic((dir / "sweep.csv").string(), csv.str());

    Json j = provenance_header("sweep");
    j["config"] = config_echo(config);
    j["grid"] = Json::array();
    for (const auto& [m, k] : sweep.grid) j["grid"].push_back({m, k});
    j["consistency"] = sweep.consistency;
    j["outputs"] = Json::array({"sweep.csv"});
    write_json((dir / "provenance.json").string(), j);

    out << "trained " << sweep.grid.size() << " models; diagonal consistency " << sweep.consistency << "\n";
    return kExitOk;
  });
}

}  // namespace cascade_ltr::cli
