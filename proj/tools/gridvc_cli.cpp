// gridvc: generate cases, train and evaluate voltage-control agents.

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gridvc/experiment.hpp"

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "runs/default";
  std::vector<std::string> sets;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "Experiment config file (key = value)")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Master seed; stage seeds derive from it");
  app->add_option("--out", c.out, "Output directory");
  app->add_option("--set", c.sets, "Override a config key, e.g. --set sac.step_budget=5000");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Voltage-control agents on a steady-state grid model"};
  app.require_subcommand(1);
  Common common;
  gridvc::CommandOptions options;

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"gen", "Generate violating cases and the train/test split"},
      {"baseline", "Random-policy report on both splits"},
      {"train-sac", "Train a soft actor-critic agent"},
      {"train-il", "Collect successful steps and train the imitation agent"},
      {"eval", "Report for a checkpoint (stochastic and greedy where applicable)"},
      {"pca", "Solvability labels and PCA of initial states"},
      {"sweep", "Steps-to-objective over reward strategies and R+ values"},
  };
  std::vector<std::pair<std::string, std::string>> overrides;
  std::optional<int> strategy;
  std::optional<double> r_plus;
  std::optional<long long> budget;
  std::string collect_policy, strategies, r_plus_values;
  std::optional<int> sweep_seeds;

  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, common);
    const std::string name = s.name;
    if (name == "train-sac" || name == "sweep") {
      sub->add_option("--budget", budget, "Training-step budget (sac.step_budget)");
    }
    if (name == "train-sac") {
      sub->add_option("--strategy", strategy, "Reward strategy: 1 (penalty) or 2 (cartpole)");
      sub->add_option("--r-plus", r_plus, "Reward on reaching a secure state");
    }
    if (name == "train-il") {
      sub->add_option("--collect-policy", collect_policy, "random, or a SAC checkpoint path");
    }
    if (name == "eval") {
      sub->add_option("--checkpoint", options.checkpoint, "Checkpoint path, or 'random'")->required();
      sub->add_option("--split", options.split, "train, test or both")
          ->check(CLI::IsMember({"train", "test", "both"}))
          ->default_val("both");
    }
    if (name == "sweep") {
      sub->add_option("--strategies", strategies, "Comma list, e.g. 1,2");
      sub->add_option("--r-plus-values", r_plus_values, "Comma list, e.g. -1,0,1,1000");
      sub->add_option("--seeds", sweep_seeds, "Seeds per grid point");
    }
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    gridvc::ExperimentConfig config;
    if (!common.config_path.empty()) config = gridvc::ExperimentConfig::load(common.config_path);
    for (const auto& kv : common.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw gridvc::ConfigError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (common.seed) config.set("seed", std::to_string(*common.seed));
    if (strategy) config.set("reward.strategy", std::to_string(*strategy));
    if (r_plus) config.set("reward.r_plus", gridvc::format_double(*r_plus));
    if (budget) config.set("sac.step_budget", std::to_string(*budget));
    if (!collect_policy.empty()) config.set("il.collect_policy", collect_policy);
    if (!strategies.empty()) config.set("sweep.strategies", strategies);
    if (!r_plus_values.empty()) config.set("sweep.r_plus", r_plus_values);
    if (sweep_seeds) config.set("sweep.seeds", std::to_string(*sweep_seeds));
    config.validate();

    const auto start = std::chrono::steady_clock::now();
    const int status = gridvc::run_command(command, config, common.out, options, std::cout);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cerr << command << " finished in " << secs << " s\n";
    return status;
  } catch (const gridvc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
