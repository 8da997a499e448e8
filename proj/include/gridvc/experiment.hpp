#pragma once

// Experiment configuration and the subcommands behind the command-line driver.
//
// The config file is a key=value record file:
//
//   # gridvc-config v1
//   seed = 7
//   reward.strategy = 2
//   sac.step_budget = 5000
//
// Unknown keys are errors. Every artifact written by a subcommand carries the
// config hash and the resolved stage seeds.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gridvc/agents.hpp"
#include "gridvc/data.hpp"

namespace gridvc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExperimentConfig {
 public:
  // All keys at their defaults.
  ExperimentConfig();

  static ExperimentConfig parse(std::istream& in, const std::string& source_name);
  static ExperimentConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Sorted key=value lines; the input to hash().
  std::string canonical() const;
  // Hex SHA-256 of canonical().
  std::string hash() const;

  // Explicit seed for a stage: `seed.<stage>` if set, else derived from `seed`.
  std::uint64_t stage_seed(const std::string& stage) const;
  std::map<std::string, std::uint64_t> stage_seeds() const;

  // Typed views.
  std::string network_path() const;
  PowerFlowOptions solver() const;
  RewardConfig reward() const;
  PerturbationConfig perturbation() const;
  SacTrainConfig sac() const;
  IlConfig il() const;
  EvalConfig eval() const;

  // Throws ConfigError on values that fail range checks.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

inline const char* const kStageNames[] = {"gen", "split", "baseline", "sac", "collect",
                                          "il", "eval", "pca", "sweep"};

// Loaded network, cases and normalizer shared by the subcommands.
struct Workspace {
  ExperimentConfig config;
  std::filesystem::path out_dir;
  std::shared_ptr<const GridNetwork> network;
  DatasetManifest manifest;
  std::vector<Case> train;
  std::vector<Case> test;

  // Network only; cases are loaded on demand.
  static Workspace open(const ExperimentConfig& config, const std::filesystem::path& out_dir);
  void load_split(const std::string& split);
  // Context whose state normalizer is fitted on the train cases' initial states.
  RolloutContext context() const;
  StateNormalizer fit_normalizer() const;
};

struct CommandOptions {
  std::string checkpoint;  // eval: path, or "random"
  std::string split;       // eval: train, test or both
};

// Runs one subcommand; returns the process exit status. Progress goes to `log`.
int run_command(const std::string& command, const ExperimentConfig& config,
                const std::filesystem::path& out_dir, const CommandOptions& options,
                std::ostream& log);

int run_gen(Workspace& ws, std::ostream& log);
int run_baseline(Workspace& ws, std::ostream& log);
int run_train_sac(Workspace& ws, std::ostream& log);
int run_train_il(Workspace& ws, std::ostream& log);
int run_eval(Workspace& ws, const CommandOptions& options, std::ostream& log);
int run_pca(Workspace& ws, std::ostream& log);
int run_sweep(Workspace& ws, std::ostream& log);

// Text of a versioned record file with a provenance comment as its second line.
std::string with_provenance(const std::string& text, const ExperimentConfig& config);

}  // namespace gridvc
