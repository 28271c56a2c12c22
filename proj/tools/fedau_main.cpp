#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedau/experiment.hpp"

namespace {

std::vector<double> parse_value_list(const std::string& csv) {
  std::vector<double> values;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t begin = item.find_first_not_of(" \t");
    std::size_t end = item.find_last_not_of(" \t");
    if (begin == std::string::npos) continue;
    item = item.substr(begin, end - begin + 1);
    if (item == "inf" || item == "iid") {
      values.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    try {
      std::size_t used = 0;
      double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      values.push_back(v);
    } catch (const std::exception&) {
      throw fedau::ConfigError("sweep: cannot parse value \"" + item + "\"");
    }
  }
  if (values.empty()) throw fedau::ConfigError("sweep: --values is empty");
  return values;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated unlearning with auxiliary classifier heads"};
  app.require_subcommand(1);

  fedau::TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "run federated training and store checkpoints");
  train->add_option("--config", train_args.config_path, "experiment config (JSON)");
  train->add_option("--preset", train_args.preset, "built-in preset name");
  train->add_option("--seed", train_args.seed, "seed override");
  train->add_option("--out", train_args.out_root, "output root (overrides FEDAU_OUT)");

  fedau::UnlearnArgs unlearn_args;
  CLI::App* unlearn =
      app.add_subcommand("unlearn", "combine stored heads into an unlearned checkpoint");
  unlearn->add_option("--ckpt", unlearn_args.checkpoint_dir, "run directory from `train`")
      ->required();
  unlearn->add_option("--scope", unlearn_args.scope, "samples, class, or client");
  unlearn->add_option("--alpha", unlearn_args.alpha, "sample/client blend weight");
  unlearn->add_option("--beta", unlearn_args.beta, "class subtraction weight");
  unlearn->add_flag("--strict-bounds", unlearn_args.strict_bounds,
                    "refuse coefficients outside the guaranteed-safe bounds");
  unlearn->add_flag("--verbose-report", unlearn_args.verbose_report,
                    "include per-example diagnostics in the report");

  fedau::EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a cached dataset");
  eval->add_option("--ckpt", eval_args.checkpoint, "run directory or .fauw file")->required();
  eval->add_option("--dataset", eval_args.dataset, "run directory or dataset cache stem")
      ->required();

  fedau::ExperimentArgs experiment_args;
  CLI::App* experiment =
      app.add_subcommand("experiment", "full pipeline: train, unlearn, baselines, report");
  experiment->add_option("--preset", experiment_args.preset, "built-in preset name");
  experiment->add_option("--config", experiment_args.config_path, "experiment config (JSON)");
  experiment->add_option("--seed", experiment_args.seed, "seed override");
  experiment->add_option("--out", experiment_args.out_root, "output root (overrides FEDAU_OUT)");

  fedau::SweepArgs sweep_args;
  std::string sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "vary one knob and tabulate ul/rm accuracy");
  sweep->add_option("--param", sweep_args.param, "alpha, beta, gamma, proportion, or aux_position")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")->required();
  sweep->add_option("--preset", sweep_args.preset, "base preset");
  sweep->add_option("--config", sweep_args.config_path, "base config (JSON)");
  sweep->add_option("--seed", sweep_args.seed, "seed override");
  sweep->add_option("--out", sweep_args.out_root, "output root (overrides FEDAU_OUT)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) return fedau::cmd_train(train_args);
    if (*unlearn) return fedau::cmd_unlearn(unlearn_args);
    if (*eval) return fedau::cmd_eval(eval_args);
    if (*experiment) return fedau::cmd_experiment(experiment_args);
    if (*sweep) {
      sweep_args.values = parse_value_list(sweep_values);
      return fedau::cmd_sweep(sweep_args);
    }
  } catch (const fedau::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const fedau::MissingArtifactError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const fedau::BoundRefusalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
