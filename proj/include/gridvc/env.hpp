#pragma once

// Episodic voltage-control MDP over the power flow solver.

#include <array>
#include <memory>
#include <string>

#include "gridvc/powerflow.hpp"
#include "gridvc/reward.hpp"

namespace gridvc {

// Flat observation: V_m | V_a | S_line | P_g | Q_g.
using StateVec = Eigen::VectorXd;

struct StateLayout {
  int n_bus = 0;
  int n_branch = 0;
  int n_gen = 0;

  static StateLayout of(const GridNetwork& network) {
    return {network.n_bus(), network.n_branch(), network.n_gen()};
  }
  int size() const { return 2 * n_bus + n_branch + 2 * n_gen; }
  // Start offsets and lengths of the five blocks, in concatenation order.
  std::array<int, 5> block_offsets() const;
  std::array<int, 5> block_sizes() const;
};

// One affine map per block: (x - offset) / scale.
struct StateNormalizer {
  std::array<double, 5> offset{0, 0, 0, 0, 0};
  std::array<double, 5> scale{1, 1, 1, 1, 1};

  // Per-block mean and standard deviation over every entry of every state.
  static StateNormalizer fit(const std::vector<StateVec>& raw_states, const StateLayout& layout);
  StateVec apply(const StateVec& raw, const StateLayout& layout) const;
  bool is_identity() const;
  bool operator==(const StateNormalizer&) const = default;
};

struct MdpConfig {
  double gamma = 0.99;
  int horizon = 50;
  bool normalize_state = false;
  StateNormalizer normalizer;

  void validate() const;
};

StateVec raw_state_vector(const PowerFlowSolution& solution);
StateVec state_vector(const PowerFlowSolution& solution, const MdpConfig& config);

// True iff the operating point has no bus violation and no line overflow.
bool is_terminal(const PowerFlowSolution& solution, const GridNetwork& network);

// One frozen operating condition used as an episode's initial state.
struct Case {
  std::string id;
  Vector p_load;
  Vector q_load;
  ActionVec setpoints;
  // Raw (unnormalized) initial state, filled by prepare_case.
  StateVec initial_state;
};

// Network with the case's loads applied.
GridNetwork network_for_case(const GridNetwork& base, const Case& c);

// Solves the initial operating point, caches its raw state, and checks that
// it is convergent and violating. Throws std::invalid_argument otherwise.
void prepare_case(const GridNetwork& base, Case& c, const PowerFlowOptions& options = {});

enum class DoneReason { none, solved, horizon, diverged };
const char* to_string(DoneReason reason);

struct StepResult {
  StateVec next_state;
  double reward = 0.0;
  bool done = false;
  DoneReason done_reason = DoneReason::none;
};

// Single-threaded and stateful; use one instance per concurrent rollout.
class VoltageControlEnv {
 public:
  VoltageControlEnv(std::shared_ptr<const GridNetwork> network, MdpConfig config,
                    PowerFlowOptions options = {});

  StateVec reset(const Case& c);
  // Clips the action into [0.9, 1.1], solves, and scores the result.
  StepResult step(const ActionVec& action, const RewardConfig& reward_config);

  bool episode_active() const { return active_; }
  int steps_taken() const { return steps_; }
  const StateVec& state() const { return state_; }
  const PowerFlowSolution& solution() const { return solution_; }
  const ActionVec& setpoints() const { return setpoints_; }
  const MdpConfig& config() const { return config_; }
  const GridNetwork& base_network() const { return *base_; }
  const GridNetwork& case_network() const { return case_net_; }
  int state_dim() const { return layout_.size(); }
  int action_dim() const { return base_->n_plant(); }

 private:
  std::shared_ptr<const GridNetwork> base_;
  MdpConfig config_;
  PowerFlowOptions options_;
  StateLayout layout_;
  ViolationLimits limits_;
  GridNetwork case_net_;
  PowerFlowSolution solution_;
  ActionVec setpoints_;
  StateVec state_;
  int steps_ = 0;
  bool active_ = false;
};

ActionVec clip_action(const ActionVec& action);

}  // namespace gridvc
