#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cascade_ltr/cli/commands.hpp"
#include "cascade_ltr/cli/selfcheck.hpp"
#include "cascade_ltr/errors.hpp"

using namespace cascade_ltr;
using namespace cascade_ltr::cli;

int main(int argc, char** argv) {
  CLI::App app{"Learning-to-rank training and evaluation for cascade ranking stages"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  PrepareArgs prepare;
  auto* prep = app.add_subcommand("prepare", "Filter and truncate an SVMLight ranking dataset");
  prep->add_option("input", prepare.input, "Input SVMLight file")->required();
  prep->add_option("output", prepare.output, "Output SVMLight file")->required();
  prep->add_option("--min-docs", prepare.options.min_docs, "Drop queries with at most this many documents")
      ->capture_default_str();
  prep->add_option("--max-docs", prepare.options.max_docs, "Resample larger queries down to this size")
      ->capture_default_str();
  prep->add_option("--min-positives", prepare.options.min_positives, "Positives required after resampling")
      ->capture_default_str();
  prep->add_option("--seed", prepare.options.seed, "Resampling seed")->capture_default_str();
  prep->add_flag("--log1p", prepare.log1p, "Apply sign(x) ln(1 + |x|) to every feature");

  GenerateArgs generate;
  std::string teacher = "linear";
  std::string teacher_activation = "tanh";
  auto* gen = app.add_subcommand("generate", "Write a synthetic teacher-labelled dataset");
  gen->add_option("output", generate.output, "Output SVMLight file")->required();
  gen->add_option("--queries", generate.spec.num_queries)->capture_default_str();
  gen->add_option("--docs", generate.spec.docs_per_query, "Documents per query")->capture_default_str();
  gen->add_option("--dim", generate.spec.feature_dim, "Feature dimension")->capture_default_str();
  gen->add_option("--teacher", teacher, "linear or mlp")->check(CLI::IsMember({"linear", "mlp"}))
      ->capture_default_str();
  gen->add_option("--teacher-hidden", generate.spec.teacher_hidden, "MLP teacher hidden sizes")->delimiter(',');
  gen->add_option("--teacher-scale", generate.spec.teacher_weight_scale)->capture_default_str();
  gen->add_option("--teacher-activation", teacher_activation, "tanh or relu")
      ->check(CLI::IsMember({"tanh", "relu"}))
      ->capture_default_str();
  gen->add_option("--noise", generate.spec.noise_std, "Std. dev. of label noise")->capture_default_str();
  gen->add_option("--seed", generate.spec.seed)->capture_default_str();

  std::string config_path;
  auto* trn = app.add_subcommand("train", "Train a scorer from a run config");
  trn->add_option("config", config_path, "key = value config file")->required();

  EvaluateArgs evaluate;
  std::string eval_gain = "exponential";
  auto* evl = app.add_subcommand("evaluate", "Score a dataset with a saved model");
  evl->add_option("model", evaluate.model_path)->required();
  evl->add_option("data", evaluate.data_path)->required();
  evl->add_option("--metrics", evaluate.metrics, "e.g. recall@30@15,ndcg@10,opa")->delimiter(',')
      ->capture_default_str();
  evl->add_option("--gain", eval_gain, "exponential, linear or rank_exponential")->capture_default_str();
  evl->add_flag("--log1p", evaluate.log1p);
  evl->add_option("--output", evaluate.output, "Per-query report CSV");
  evl->add_option("--threads", evaluate.threads);

  GradcheckArgs gradcheck;
  std::string loss_name = "l_relax";
  auto* grd = app.add_subcommand("gradcheck", "Finite-difference check of one loss");
  grd->add_option("--loss", loss_name)->capture_default_str();
  grd->add_option("--items", gradcheck.items, "Documents per instance")->capture_default_str();
  grd->add_option("--trials", gradcheck.trials)->capture_default_str();
  grd->add_option("--seed", gradcheck.seed)->capture_default_str();
  grd->add_option("--tau", gradcheck.loss.tau)->capture_default_str();
  gradcheck.loss.m = 4;
  gradcheck.loss.k = 2;
  grd->add_option("--m", gradcheck.loss.m)->capture_default_str();
  grd->add_option("--k", gradcheck.loss.k)->capture_default_str();
  grd->add_option("--alpha", gradcheck.loss.alpha_init, "ARF weight")->capture_default_str();
  grd->add_option("--tolerance", gradcheck.tolerance)->capture_default_str();

  std::vector<std::size_t> m_list{10, 20, 30};
  std::vector<std::size_t> k_list{5, 10, 15};
  auto* swp = app.add_subcommand("sweep", "Train over an (m, k) grid and cross-evaluate");
  swp->add_option("config", config_path, "key = value config file")->required();
  swp->add_option("--m-list", m_list)->delimiter(',')->capture_default_str();
  swp->add_option("--k-list", k_list)->delimiter(',')->capture_default_str();
  std::vector<std::string> pairs;
  swp->add_option("--pairs", pairs, "Explicit m:k pairs, e.g. 10:5,20:10 (overrides the lists)")
      ->delimiter(',');

  auto* chk = app.add_subcommand("selfcheck", "Run the built-in invariant suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
  if (*prep) return cmd_prepare(prepare, out, err);
  if (*gen) {
    generate.spec.teacher = teacher == "mlp" ? TeacherKind::kMlp : TeacherKind::kLinear;
    generate.spec.teacher_activation =
        teacher_activation == "relu" ? TeacherActivation::kRelu : TeacherActivation::kTanh;
    if (generate.spec.teacher == TeacherKind::kMlp && generate.spec.teacher_hidden.empty()) {
      generate.spec.teacher_hidden = {32, 32};
    }
    return cmd_generate(generate, out, err);
  }
  if (*trn) return cmd_train(config_path, out, err);
  if (*evl) {
    return run_guarded(err, [&] {
      evaluate.gain = parse_gain_mode(eval_gain);
      return cmd_evaluate(evaluate, out, err);
    });
  }
  if (*grd) {
    return run_guarded(err, [&] {
      gradcheck.loss.kind = parse_loss_kind(loss_name);
      return cmd_gradcheck(gradcheck, out, err);
    });
  }
  if (*swp) {
    std::vector<std::pair<std::size_t, std::size_t>> grid = sweep_grid(m_list, k_list);
    if (!pairs.empty()) {
      grid.clear();
      for (const std::string& p : pairs) {
        const auto colon = p.find(':');
        try {
          if (colon == std::string::npos) throw std::invalid_argument(p);
          grid.emplace_back(std::stoul(p.substr(0, colon)), std::stoul(p.substr(colon + 1)));
        } catch (const std::exception&) {
          err << "error: --pairs expects m:k entries, got '" << p << "'\n";
          return kExitValidation;
        }
      }
    }
    return cmd_sweep(config_path, grid, out, err);
  }
  if (*chk) return cmd_selfcheck(out, err);
  return kExitValidation;
}
