#pragma once

// Policies (random, soft actor-critic, imitation), rollout procedures, and
// the training loops that produce them.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridvc/env.hpp"
#include "gridvc/nn.hpp"
#include "gridvc/random.hpp"

namespace gridvc {

class Policy {
 public:
  virtual ~Policy() = default;
  virtual ActionVec act(const StateVec& state, Rng& rng) = 0;
  virtual std::string name() const = 0;
};

// I.i.d. uniform on [0.9, 1.1] per plant.
ActionVec random_action(Rng& rng, int n_a);

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(int n_a) : n_a_(n_a) {}
  ActionVec act(const StateVec&, Rng& rng) override { return random_action(rng, n_a_); }
  std::string name() const override { return "random"; }

 private:
  int n_a_;
};

// Everything a rollout needs besides the policy.
struct RolloutContext {
  std::shared_ptr<const GridNetwork> network;
  MdpConfig mdp;
  PowerFlowOptions solver;
  RewardConfig reward;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalConfig {
  int n_episodes = 50;
  int t_limit = 50;
  double l_objective = 1.0;
};

// Mean episode length over n_episodes cases sampled with replacement. An
// episode counts its solve step, or t_limit if it never solves.
double evaluate_episode_length(const RolloutContext& ctx, const std::vector<Case>& cases,
                               Policy& policy, const EvalConfig& config, Rng& rng);

struct CaseEvaluation {
  std::string case_id;
  int trials = 0;
  int solved_trials = 0;
  // Mean solve step over solved trials; 0 when never solved.
  double mean_steps = 0.0;
  int min_steps = 0;
};

struct PolicyReport {
  std::vector<CaseEvaluation> cases;
  int unsolvable_count = 0;
  // Mean over solved cases of each case's mean solve step.
  double avg_steps_solved = 0.0;
  int solved_in_one_step = 0;
};

PolicyReport evaluate_policy(const RolloutContext& ctx, const std::vector<Case>& cases,
                             Policy& policy, int horizon, int trials, Rng& rng);

// ---------------------------------------------------------------------------
// Imitation dataset

struct DatasetEntry {
  StateVec state;
  ActionVec action;
  std::string case_id;
  int step = 0;  // t of the successful transition
  // Setpoints that produced `state`; lets the pair be replayed exactly.
  ActionVec prev_setpoints;
};

struct Dataset {
  std::vector<DatasetEntry> entries;
  std::string collect_policy;
  std::uint64_t seed = 0;
  int t_limit = 0;
  StateNormalizer normalizer;
  bool normalized = false;

  std::size_t size() const { return entries.size(); }
};

struct CollectResult {
  Dataset dataset;
  int episodes = 0;
  // False when the attempt cap stopped collection before n pairs.
  bool complete = true;
};

// Rolls out collect_policy from randomly sampled cases and keeps the final
// (s_t, a_t) of every episode whose s_{t+1} is terminal. The attempt cap
// defaults to 100 * n episodes.
CollectResult collect_successful_steps(const RolloutContext& ctx, const std::vector<Case>& cases,
                                       Policy& collect_policy, std::size_t n, int t_limit,
                                       Rng& rng, std::optional<int> attempt_cap = std::nullopt);

// Replays each pair on its case: applies the action and checks the next state
// is terminal, and that the stored state is the one the case network produces
// under the previous setpoints. Returns the number of pairs that fail.
std::size_t verify_dataset(const RolloutContext& ctx, const std::vector<Case>& cases,
                           const Dataset& dataset);

void write_dataset(std::ostream& out, const Dataset& dataset);
Dataset read_dataset(std::istream& in, const std::string& source_name);

// ---------------------------------------------------------------------------
// Replay buffer

struct Transition {
  StateVec state;
  ActionVec action;
  double reward = 0.0;
  StateVec next_state;
  // True only for true terminations (solved or diverged), not horizon cut-offs.
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(Transition t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& at(std::size_t i) const { return data_.at(i); }
  // Distinct indices, uniform without replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t next_ = 0;
  std::vector<Transition> data_;
};

// ---------------------------------------------------------------------------
// Soft actor-critic

enum class ActMode { stochastic, greedy };

struct SacConfig {
  std::vector<int> hidden{64, 64};
  double learning_rate = 3e-4;
  int batch_size = 256;
  double gamma = 0.99;
  double tau = 0.005;
  int target_update_period = 1;
  double initial_log_alpha = 1.0;
  // Measured on the squashed unit action in (-1, 1); NaN means -n_a.
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  std::size_t buffer_capacity = 100000;
};

struct SacLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double policy = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
};

class SacAgent {
 public:
  SacAgent(int n_state, int n_action, SacConfig config, Rng& init_rng);

  ActionVec act(const StateVec& state, ActMode mode, Rng& rng) const;

  // One gradient step on each critic, the policy and the temperature, then a
  // Polyak target update every target_update_period steps.
  SacLosses update(const std::vector<const Transition*>& batch, Rng& rng);

  // Soft Bellman target for one transition with a given next-action noise.
  double critic_target(const Transition& t, const Vector& next_noise) const;

  double alpha() const;
  int n_state() const { return n_state_; }
  int n_action() const { return n_action_; }
  std::int64_t update_count() const { return updates_; }
  const SacConfig& config() const { return config_; }
  double target_entropy() const;

  Mlp policy;
  Mlp q1, q2;
  Mlp q1_target, q2_target;
  double log_alpha = 1.0;
  StateNormalizer normalizer;

  void save(std::ostream& out) const;
  static SacAgent load(std::istream& in, const std::string& source_name);

  // Action normalized into (-1, 1) for critic inputs.
  static Vector unit_action(const ActionVec& action);
  // Log-density of a sample's unit action (setpoint log-density plus n_a log half-width).
  double unit_log_prob(const SquashedSample& s) const;

 private:
  SquashedSample sample_policy(const Vector& policy_out, const Vector& noise) const;
  Matrix critic_input(const StateVec& s, const ActionVec& a) const;

  int n_state_ = 0;
  int n_action_ = 0;
  SacConfig config_;
  AdamState policy_opt_, q1_opt_, q2_opt_, alpha_opt_;
  std::int64_t updates_ = 0;
};

class SacPolicy final : public Policy {
 public:
  SacPolicy(const SacAgent& agent, ActMode mode) : agent_(agent), mode_(mode) {}
  ActionVec act(const StateVec& state, Rng& rng) override { return agent_.act(state, mode_, rng); }
  std::string name() const override {
    return mode_ == ActMode::greedy ? "sac-greedy" : "sac-stochastic";
  }

 private:
  const SacAgent& agent_;
  ActMode mode_;
};

// A training step collects episodes_per_step full episodes with the
// stochastic policy, then takes one gradient step.
struct SacTrainConfig {
  SacConfig agent;
  std::int64_t step_budget = 20000;   // training steps
  int episodes_per_step = 1;
  std::int64_t warmup_steps = 1000;   // random-action environment steps before training
  std::int64_t eval_interval = 500;   // training steps between evaluations
  EvalConfig eval;
  bool stop_at_objective = true;
};

struct LearningCurvePoint {
  std::int64_t train_steps = 0;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  double eval_length = 0.0;
  SacLosses losses;
};

struct SacTrainResult {
  std::unique_ptr<SacAgent> agent;
  std::vector<LearningCurvePoint> curve;
  bool reached_objective = false;
  // Counters at the first evaluation that met the objective.
  std::int64_t train_steps_to_objective = -1;
  std::int64_t env_steps_to_objective = -1;
  std::int64_t episodes_to_objective = -1;
  std::int64_t train_steps = 0;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
};

using CurveCallback = std::function<void(const LearningCurvePoint&)>;

SacTrainResult sac_train(const RolloutContext& ctx, const std::vector<Case>& train_cases,
                         const std::vector<Case>& eval_cases, const SacTrainConfig& config,
                         std::uint64_t seed, const CurveCallback& on_eval = {});

// ---------------------------------------------------------------------------
// Imitation learning

struct IlConfig {
  std::vector<int> hidden{64, 64};
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 20;
};

class IlAgent final : public Policy {
 public:
  IlAgent(int n_state, int n_action, IlConfig config, Rng& init_rng);

  // Squashed network output; always greedy.
  ActionVec predict(const StateVec& state) const;
  ActionVec act(const StateVec& state, Rng&) override { return predict(state); }
  std::string name() const override { return "imitation"; }

  // One pass over the data in shuffled minibatches; returns the mean MSE.
  double train_epoch(const Dataset& data, Rng& rng);
  double dataset_mse(const Dataset& data) const;

  const IlConfig& config() const { return config_; }
  int n_state() const { return policy.input_size(); }
  int n_action() const { return policy.output_size(); }

  Mlp policy;
  StateNormalizer normalizer;

  void save(std::ostream& out) const;
  static IlAgent load(std::istream& in, const std::string& source_name);

 private:
  IlConfig config_;
  AdamState opt_;
};

struct IlEpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double eval_length = 0.0;
};

struct IlTrainResult {
  std::unique_ptr<IlAgent> agent;
  std::vector<IlEpochRecord> history;
  int epochs = 0;
  bool reached_objective = false;
};

IlTrainResult il_train(const RolloutContext& ctx, const Dataset& data,
                       const std::vector<Case>& test_cases, const IlConfig& config,
                       const EvalConfig& eval, std::uint64_t seed);

}  // namespace gridvc
