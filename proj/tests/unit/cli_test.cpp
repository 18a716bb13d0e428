#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cascade_ltr/cli/commands.hpp"
#include "cascade_ltr/cli/run_config.hpp"
#include "cascade_ltr/cli/selfcheck.hpp"
#include "cascade_ltr/errors.hpp"

namespace cascade_ltr::cli {
namespace {

namespace fs = std::filesystem;

// Fresh scratch directory per test.
fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  const fs::path dir =
      fs::temp_directory_path() / "cascade_ltr_cli_test" / (std::string(info->test_suite_name()) + "." + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Small synthetic run that trains in well under a second.
std::string tiny_config(const fs::path& out_dir, const std::string& loss) {
  return "synthetic_queries = 40\n"
         "synthetic_docs = 12\n"
         "synthetic_dim = 4\n"
         "valid_queries = 10\n"
         "loss = " + loss + "\n"
         "m = 6\n"
         "k = 3\n"
         "hidden = 8\n"
         "max_epochs = 3\n"
         "output_dir = " + out_dir.string() + "\n";
}

TEST(RunConfigTest, DefaultsResolveDerivedKeys) {
  const RunConfig c = parse_run_config("seed = 5\nm = 20\nk = 10\n");
  EXPECT_EQ(c.data.synthetic.seed, 5u);
  EXPECT_EQ(c.train.eval_m, 20u);
  EXPECT_EQ(c.train.eval_k, 10u);
  EXPECT_EQ(c.loss.gain, GainMode::kLinear);
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{64, 32}));
  EXPECT_EQ(c.metrics, (std::vector<std::string>{"recall@20@10", "ndcg", "opa"}));
  EXPECT_EQ(c.entries.size(), run_config_keys().size());
}

TEST(RunConfigTest, CommentsListsAndBooleans) {
  const RunConfig c = parse_run_config(
      "# header\n"
      "hidden = 16, 8   # two layers\n"
      "tau_grid = 0.5,2\n"
      "label_jitter = true\n"
      "train_data = x.txt\n");
  EXPECT_EQ(c.model.hidden, (std::vector<std::size_t>{16, 8}));
  EXPECT_EQ(c.train.tau_grid, (std::vector<double>{0.5, 2.0}));
  EXPECT_TRUE(c.loss.label_side.jitter);
  EXPECT_EQ(c.loss.gain, GainMode::kExponential);
  EXPECT_TRUE(parse_run_config("hidden =\n").model.hidden.empty());
}

TEST(RunConfigTest, ListsEveryProblemAtOnce) {
  try {
    parse_run_config("colour = blue\nlog1p = yes\ntau = fast\nm\nseed = 1\nseed = 2\n", "run.conf");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("run.conf"), std::string::npos) << msg;
    EXPECT_NE(msg.find("unknown key 'colour'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("log1p: expected true or false"), std::string::npos) << msg;
    EXPECT_NE(msg.find("tau: expected a finite number"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 4: expected 'key = value'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("duplicate key 'seed'"), std::string::npos) << msg;
  }
}

TEST(RunConfigTest, SemanticChecks) {
  EXPECT_THROW(parse_run_config("loss = l_relax\nm = 5\nk = 6\n"), ValidationError);
  EXPECT_THROW(parse_run_config("loss = ranknet\ngrid_search = true\n"), ValidationError);
  EXPECT_THROW(parse_run_config("loss = hinge\n"), ValidationError);
  EXPECT_THROW(parse_run_config("valid_queries = 600\n"), ValidationError);
  EXPECT_THROW(parse_run_config("learning_rate = -1\n"), ValidationError);
  EXPECT_THROW(parse_run_config("metrics = recall@5\n"), ValidationError);
}

TEST(RunConfigTest, LossSpecRoundTripsThroughText) {
  const RunConfig a = parse_run_config(
      "loss = arf\ntau = 0.37\nm = 12\nk = 4\nsigma = 2.5\napprox_temp = 0.05\nalpha_init = -0.3\n"
      "gain = rank_exponential\nsoftmax_target = one_hot\nlabel_side = hard\nlabel_tau = 0.2\n"
      "label_jitter = true\nlearning_rate = 3e-4\ntau_grid = 0.1,1e1\n");
  const RunConfig b = parse_run_config(format_run_config(a));
  EXPECT_EQ(a.entries, b.entries);
  EXPECT_EQ(b.loss.kind, LossKind::kArf);
  EXPECT_EQ(b.loss.tau, 0.37);
  EXPECT_EQ(b.loss.m, 12u);
  EXPECT_EQ(b.loss.k, 4u);
  EXPECT_EQ(b.loss.sigma, 2.5);
  EXPECT_EQ(b.loss.approx_temp, 0.05);
  EXPECT_EQ(b.loss.alpha_init, -0.3);
  EXPECT_EQ(b.loss.gain, GainMode::kRankExponential);
  EXPECT_EQ(b.loss.softmax_target, SoftmaxTarget::kOneHot);
  EXPECT_EQ(b.loss.label_side.side, LabelSide::kHard);
  EXPECT_EQ(b.loss.label_side.tau, 0.2);
  EXPECT_TRUE(b.loss.label_side.jitter);
  EXPECT_EQ(b.train.learning_rate, 3e-4);
}

TEST(PrepareTest, DefaultThresholds) {
  const PrepareArgs args;
  EXPECT_EQ(args.options.min_docs, 40u);
  EXPECT_EQ(args.options.max_docs, 200u);
  EXPECT_EQ(args.options.min_positives, 15u);
}

TEST(PrepareTest, Log1pSpotValueAndSidecar) {
  const fs::path dir = scratch_dir();
  std::string text;
  for (int i = 0; i < 5; ++i) text += std::to_string(i % 2) + " qid:1 1:" + std::to_string(std::exp(1.0) - 1.0) + " 2:0\n";
  write_text(dir / "in.txt", text);
  PrepareArgs args;
  args.input = (dir / "in.txt").string();
  args.output = (dir / "out.txt").string();
  args.options.min_docs = 2;
  args.options.min_positives = 1;
  args.log1p = true;
  std::ostringstream out, err;
  ASSERT_EQ(cmd_prepare(args, out, err), kExitOk) << err.str();
  const Dataset ds = load_svmlight(args.output);
  ASSERT_EQ(ds.groups.size(), 1u);
  EXPECT_NEAR(ds.groups[0].documents[0].features[0], 1.0, 1e-6);
  const std::string sidecar = read_text(dir / "out.txt.provenance.json");
  EXPECT_NE(sidecar.find("\"kept\": 1"), std::string::npos) << sidecar;
  EXPECT_NE(sidecar.find("\"dropped_too_few_docs\": 0"), std::string::npos) << sidecar;
}

TEST(PrepareTest, ErrorsMapToExitCodes) {
  const fs::path dir = scratch_dir();
  write_text(dir / "empty.txt", "# nothing here\n");
  write_text(dir / "bad.txt", "1 qid:1 1:0.5\n1 qid:1 x:y\n");
  std::ostringstream out, err;
  PrepareArgs args;
  args.output = (dir / "out.txt").string();

  args.input = (dir / "empty.txt").string();
  EXPECT_EQ(cmd_prepare(args, out, err), kExitValidation);
  EXPECT_NE(err.str().find("empty dataset"), std::string::npos) << err.str();

  err.str("");
  args.input = (dir / "bad.txt").string();
  EXPECT_EQ(cmd_prepare(args, out, err), kExitValidation);
  EXPECT_NE(err.str().find("bad.txt: line 2"), std::string::npos) << err.str();

  args.input = (dir / "missing.txt").string();
  EXPECT_EQ(cmd_prepare(args, out, err), kExitIo);
  EXPECT_FALSE(fs::exists(args.output));
}

TEST(GenerateTest, WritesParsableData) {
  const fs::path dir = scratch_dir();
  GenerateArgs args;
  args.spec.num_queries = 3;
  args.spec.docs_per_query = 5;
  args.spec.feature_dim = 2;
  args.output = (dir / "g.txt").string();
  std::ostringstream out, err;
  ASSERT_EQ(cmd_generate(args, out, err), kExitOk) << err.str();
  EXPECT_EQ(load_svmlight(args.output), generate_synthetic(args.spec));
  args.spec.docs_per_query = 1;
  EXPECT_EQ(cmd_generate(args, out, err), kExitValidation);
}

TEST(TrainCommandTest, ArfHistoryHasFiniteAlphaColumn) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", tiny_config(dir / "out", "arf"));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitOk) << err.str();
  std::istringstream history(read_text(dir / "out" / "history.csv"));
  std::string line;
  std::getline(history, line);
  EXPECT_EQ(line, "step,train_loss,val_recall,val_ndcg,alpha");
  std::size_t rows = 0;
  while (std::getline(history, line)) {
    const double alpha = std::stod(line.substr(line.rfind(',') + 1));
    EXPECT_TRUE(std::isfinite(alpha));
    EXPECT_GE(std::abs(alpha), 1e-3);
    ++rows;
  }
  EXPECT_EQ(rows, 3u);
  for (const char* name : {"model.txt", "report.csv", "provenance.json"}) {
    EXPECT_TRUE(fs::exists(dir / "out" / name)) << name;
  }
  EXPECT_FALSE(fs::exists(dir / "out" / "model.txt.tmp"));
}

TEST(TrainCommandTest, RankNetHistoryHasNoAlphaColumn) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", tiny_config(dir / "out", "ranknet"));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitOk) << err.str();
  const std::string history = read_text(dir / "out" / "history.csv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "step,train_loss,val_recall,val_ndcg");
}

TEST(TrainCommandTest, RepeatedRunsAreByteIdentical) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", tiny_config(dir / "out", "l_relax") + "grid_search = true\ntau_grid = 0.5,2\n");
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitOk) << err.str();
  std::vector<std::string> first;
  const std::vector<std::string> names{"model.txt", "history.csv", "report.csv", "tau_grid.csv", "provenance.json"};
  for (const std::string& name : names) first.push_back(read_text(dir / "out" / name));
  ASSERT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitOk) << err.str();
  for (std::size_t i = 0; i < names.size(); ++i) {
    EXPECT_FALSE(first[i].empty()) << names[i];
    EXPECT_EQ(read_text(dir / "out" / names[i]), first[i]) << names[i];
  }
}

TEST(TrainCommandTest, InvalidConfigFailsBeforeTraining) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", "loss = softmax\nmax_epochs = 0\npatience = 0\noutput_dir = " +
                                   (dir / "out").string() + "\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitValidation);
  EXPECT_NE(err.str().find("max_epochs"), std::string::npos) << err.str();
  EXPECT_NE(err.str().find("patience"), std::string::npos) << err.str();
  EXPECT_FALSE(fs::exists(dir / "out"));

  write_text(dir / "run2.conf", "train_data = " + (dir / "nope.txt").string() + "\noutput_dir = x\n");
  EXPECT_EQ(cmd_train((dir / "run2.conf").string(), out, err), kExitIo);
  EXPECT_EQ(cmd_train((dir / "absent.conf").string(), out, err), kExitIo);
}

TEST(TrainCommandTest, NonFiniteLossExitsWithRuntimeCode) {
  const fs::path dir = scratch_dir();
  std::string data;
  for (int q = 0; q < 4; ++q) {
    for (int d = 0; d < 6; ++d) {
      data += std::to_string(d) + " qid:" + std::to_string(q) + " 1:" + (d == 2 ? "1e308" : "0.5") + " 2:-1e308\n";
    }
  }
  write_text(dir / "train.txt", data);
  write_text(dir / "run.conf", "train_data = " + (dir / "train.txt").string() +
                                   "\nvalid_fraction = 0.5\nloss = ranknet\nm = 4\nk = 2\nhidden = 4\n"
                                   "output_dir = " + (dir / "out").string() + "\n");
  std::ostringstream out, err;
  EXPECT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitRuntime);
  EXPECT_NE(err.str().find("step"), std::string::npos) << err.str();
}

TEST(EvaluateCommandTest, ScoresSavedModel) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", tiny_config(dir / "out", "l_relax"));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_train((dir / "run.conf").string(), out, err), kExitOk) << err.str();
  SyntheticSpec spec;
  spec.num_queries = 5;
  spec.docs_per_query = 12;
  spec.feature_dim = 4;
  save_svmlight((dir / "eval.txt").string(), generate_synthetic(spec));
  EvaluateArgs args;
  args.model_path = (dir / "out" / "model.txt").string();
  args.data_path = (dir / "eval.txt").string();
  args.metrics = {"recall@6@3", "opa"};
  args.output = (dir / "report.csv").string();
  out.str("");
  ASSERT_EQ(cmd_evaluate(args, out, err), kExitOk) << err.str();
  EXPECT_NE(out.str().find("5 queries"), std::string::npos);
  const std::string report = read_text(args.output);
  EXPECT_NE(report.find("__mean__,recall,m=6;k=3,"), std::string::npos) << report;

  args.metrics = {"recall@20@3"};
  EXPECT_EQ(cmd_evaluate(args, out, err), kExitValidation);
}

TEST(GradcheckCommandTest, PrintsMaxRelativeError) {
  std::ostringstream out, err;
  GradcheckArgs args;
  args.loss.kind = LossKind::kLRelax;
  args.loss.m = 4;
  args.loss.k = 2;
  EXPECT_EQ(cmd_gradcheck(args, out, err), kExitOk) << err.str();
  EXPECT_NE(out.str().find("max relative error"), std::string::npos);
  args.loss.k = 5;
  EXPECT_EQ(cmd_gradcheck(args, out, err), kExitValidation);
}

TEST(SweepTest, GridSkipsInvalidPairs) {
  const auto grid = sweep_grid({10, 20, 30}, {5, 10, 15});
  EXPECT_EQ(grid.size(), 8u);
  EXPECT_EQ(grid.front(), (std::pair<std::size_t, std::size_t>{10, 5}));
  EXPECT_EQ(std::count(grid.begin(), grid.end(), std::pair<std::size_t, std::size_t>{10, 15}), 0);
}

TEST(SweepTest, ConsistencyCountsDiagonalWinsAndTies) {
  const std::vector<std::pair<std::size_t, std::size_t>> grid{{2, 1}, {4, 2}};
  // recall[t][e]: eval cell 0 is won by train 0; eval cell 1 by train 0 as well.
  const double recall[2][2] = {{0.9, 0.8}, {0.5, 0.7}};
  std::vector<SweepCell> cells;
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t e = 0; e < 2; ++e) {
      cells.push_back({grid[t].first, grid[t].second, grid[e].first, grid[e].second, recall[t][e]});
    }
  }
  EXPECT_DOUBLE_EQ(diagonal_consistency(grid, cells), 0.5);
  cells[3].recall = 0.8;  // tie with the best
  EXPECT_DOUBLE_EQ(diagonal_consistency(grid, cells), 1.0);
}

TEST(SweepCommandTest, SingleCellHasConsistencyOne) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", tiny_config(dir / "out", "l_relax"));
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep((dir / "run.conf").string(), {{6, 3}}, out, err), kExitOk) << err.str();
  const std::string csv = read_text(dir / "out" / "sweep.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "train_m,train_k,eval_m,eval_k,recall");
  EXPECT_NE(read_text(dir / "out" / "provenance.json").find("\"consistency\": 1.0"), std::string::npos);
}

TEST(SweepCommandTest, TwoPairsGiveFourRows) {
  const fs::path dir = scratch_dir();
  std::string config = tiny_config(dir / "out", "lambda_recall");
  config.replace(config.find("synthetic_docs = 12"), 19, "synthetic_docs = 24");
  write_text(dir / "run.conf", config);
  std::ostringstream out, err;
  ASSERT_EQ(cmd_sweep((dir / "run.conf").string(), {{10, 5}, {20, 10}}, out, err), kExitOk) << err.str();
  std::istringstream csv(read_text(dir / "out" / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].substr(0, 10), "10,5,10,5,");
  EXPECT_EQ(rows[3].substr(0, 12), "20,10,20,10,");
}

TEST(SweepCommandTest, RejectsUnsupportedLossAndOversizedPairs) {
  const fs::path dir = scratch_dir();
  write_text(dir / "run.conf", tiny_config(dir / "out", "ranknet"));
  write_text(dir / "ok.conf", tiny_config(dir / "out", "l_relax"));
  std::ostringstream out, err;
  EXPECT_EQ(cmd_sweep((dir / "run.conf").string(), {{6, 3}}, out, err), kExitValidation);
  EXPECT_EQ(cmd_sweep((dir / "ok.conf").string(), {{30, 3}}, out, err), kExitValidation);
  EXPECT_EQ(cmd_sweep((dir / "ok.conf").string(), {{3, 6}}, out, err), kExitValidation);
}

TEST(SelfCheckTest, FreshBuildPasses) {
  std::ostringstream out, err;
  EXPECT_EQ(cmd_selfcheck(out, err), kExitOk) << out.str();
  EXPECT_NE(out.str().find("failed 0"), std::string::npos);
}

// Sign error in the pairwise-difference term: rows still sum to one, but
// the largest entry of each row no longer picks the right item.
RelaxedPermutation flipped_sort(Var y, double tau) {
  const std::size_t n = y.rows();
  Graph& g = y.graph();
  Matrix coeff(n, 1);
  for (std::size_t i = 0; i < n; ++i) coeff[i] = static_cast<double>(n + 1) - 2.0 * static_cast<double>(i + 1);
  const Var spread = matmul(g.constant(coeff), transpose(y));
  const Var pairwise = broadcast_row(transpose(row_sum(abs_pairwise_diff(y))), n);
  return {row_softmax(scale(add(spread, pairwise), 1.0 / tau)), tau};
}

TEST(SelfCheckTest, InjectedSignErrorIsCaught) {
  SelfCheckOptions options;
  options.sort = flipped_sort;
  const SelfCheckSummary summary = run_selfcheck(options);
  EXPECT_GT(summary.failed(), 0u);
  for (const PropertyOutcome& p : summary.properties) {
    if (p.name == "neuralsort argmax recovers the sort") EXPECT_FALSE(p.passed);
    if (p.name == "neuralsort rows sum to one") EXPECT_TRUE(p.passed);
  }
  std::ostringstream out, err;
  EXPECT_NE(cmd_selfcheck(out, err, options), kExitOk);
  EXPECT_NE(err.str().find("property failed: neuralsort argmax recovers the sort"), std::string::npos);
  EXPECT_NE(out.str().find("run " + std::to_string(summary.run()) + ", passed " +
                           std::to_string(summary.passed()) + ", failed " + std::to_string(summary.failed())),
            std::string::npos);
}

}  // namespace
}  // namespace cascade_ltr::cli
