#include "gridvc/env.hpp"

#include <cmath>
#include <stdexcept>

namespace gridvc {

std::array<int, 5> StateLayout::block_offsets() const {
  const auto s = block_sizes();
  std::array<int, 5> off{};
  for (int b = 1; b < 5; ++b) off[b] = off[b - 1] + s[b - 1];
  return off;
}

std::array<int, 5> StateLayout::block_sizes() const {
  return {n_bus, n_bus, n_branch, n_gen, n_gen};
}

StateNormalizer StateNormalizer::fit(const std::vector<StateVec>& raw_states,
                                     const StateLayout& layout) {
  StateNormalizer norm;
  if (raw_states.empty()) return norm;
  const auto off = layout.block_offsets();
  const auto len = layout.block_sizes();
  for (int b = 0; b < 5; ++b) {
    if (len[b] == 0) continue;
    double sum = 0.0, sum_sq = 0.0;
    double count = 0.0;
    for (const auto& s : raw_states) {
      if (s.size() != layout.size()) throw std::invalid_argument("state has the wrong dimension");
      const auto seg = s.segment(off[b], len[b]);
      sum += seg.sum();
      count += static_cast<double>(len[b]);
    }
    const double mean = sum / count;
    for (const auto& s : raw_states)
      sum_sq += (s.segment(off[b], len[b]).array() - mean).square().sum();
    const double sd = std::sqrt(sum_sq / count);
    norm.offset[b] = mean;
    norm.scale[b] = sd > 1e-12 ? sd : 1.0;
  }
  return norm;
}

StateVec StateNormalizer::apply(const StateVec& raw, const StateLayout& layout) const {
  if (raw.size() != layout.size()) throw std::invalid_argument("state has the wrong dimension");
  StateVec out = raw;
  const auto off = layout.block_offsets();
  const auto len = layout.block_sizes();
  for (int b = 0; b < 5; ++b)
    out.segment(off[b], len[b]) = (raw.segment(off[b], len[b]).array() - offset[b]) / scale[b];
  return out;
}

bool StateNormalizer::is_identity() const {
  for (int b = 0; b < 5; ++b)
    if (offset[b] != 0.0 || scale[b] != 1.0) return false;
  return true;
}

void MdpConfig::validate() const {
  if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
}

StateVec raw_state_vector(const PowerFlowSolution& solution) {
  if (!solution.converged) throw std::invalid_argument("state_vector needs a converged solution");
  StateVec s(2 * solution.v_m.size() + solution.s_line.size() + 2 * solution.p_g.size());
  s << solution.v_m, solution.v_a, solution.s_line, solution.p_g, solution.q_g;
  return s;
}

StateVec state_vector(const PowerFlowSolution& solution, const MdpConfig& config) {
  StateVec raw = raw_state_vector(solution);
  if (!config.normalize_state) return raw;
  const StateLayout layout{static_cast<int>(solution.v_m.size()),
                           static_cast<int>(solution.s_line.size()),
                           static_cast<int>(solution.p_g.size())};
  return config.normalizer.apply(raw, layout);
}

bool is_terminal(const PowerFlowSolution& solution, const GridNetwork& network) {
  if (!solution.converged) return false;
  return has_no_violations(solution.v_m, solution.s_line, ViolationLimits::from(network));
}

GridNetwork network_for_case(const GridNetwork& base, const Case& c) {
  if (c.p_load.size() != base.n_bus() || c.q_load.size() != base.n_bus())
    throw std::invalid_argument("case " + c.id + ": load vectors do not match the network");
  GridNetwork net = base;
  for (int i = 0; i < net.n_bus(); ++i) {
    net.buses[i].p_load = c.p_load[i];
    net.buses[i].q_load = c.q_load[i];
  }
  return net;
}

void prepare_case(const GridNetwork& base, Case& c, const PowerFlowOptions& options) {
  if (c.setpoints.size() != base.n_plant())
    throw std::invalid_argument("case " + c.id + ": setpoint count does not match plants");
  const GridNetwork net = network_for_case(base, c);
  const PowerFlowSolution sol = solve_power_flow(net, c.setpoints, options);
  if (!sol.converged) throw std::invalid_argument("case " + c.id + ": initial power flow diverges");
  if (is_terminal(sol, net)) throw std::invalid_argument("case " + c.id + ": initial state has no violations");
  c.initial_state = raw_state_vector(sol);
}

const char* to_string(DoneReason reason) {
  switch (reason) {
    case DoneReason::none: return "none";
    case DoneReason::solved: return "solved";
    case DoneReason::horizon: return "horizon";
    case DoneReason::diverged: return "diverged";
  }
  return "unknown";
}

ActionVec clip_action(const ActionVec& action) {
  if (!action.allFinite()) throw std::invalid_argument("action has non-finite components");
  return action.cwiseMax(kSetpointMin).cwiseMin(kSetpointMax);
}

VoltageControlEnv::VoltageControlEnv(std::shared_ptr<const GridNetwork> network, MdpConfig config,
                                     PowerFlowOptions options)
    : base_(std::move(network)), config_(std::move(config)), options_(options) {
  if (!base_) throw std::invalid_argument("environment needs a network");
  config_.validate();
  layout_ = StateLayout::of(*base_);
  limits_ = ViolationLimits::from(*base_);
}

StateVec VoltageControlEnv::reset(const Case& c) {
  case_net_ = network_for_case(*base_, c);
  solution_ = solve_power_flow(case_net_, c.setpoints, options_);
  if (!solution_.converged) throw std::invalid_argument("case " + c.id + ": initial power flow diverges");
  if (is_terminal(solution_, case_net_))
    throw std::invalid_argument("case " + c.id + ": initial state has no violations");
  setpoints_ = c.setpoints;
  state_ = state_vector(solution_, config_);
  steps_ = 0;
  active_ = true;
  return state_;
}

StepResult VoltageControlEnv::step(const ActionVec& action, const RewardConfig& reward_config) {
  if (!active_) throw std::logic_error("step called without an active episode");
  if (action.size() != action_dim()) throw std::invalid_argument("action has the wrong dimension");
  const ActionVec clipped = clip_action(action);

  StepResult result;
  ++steps_;
  PowerFlowSolution next = solve_power_flow(case_net_, clipped, options_);
  if (!next.converged) {
    result.next_state = state_;
    result.reward = reward_config.divergence_penalty;
    result.done = true;
    result.done_reason = DoneReason::diverged;
    active_ = false;
    return result;
  }

  const bool terminal = has_no_violations(next.v_m, next.s_line, limits_);
  solution_ = std::move(next);
  setpoints_ = clipped;
  state_ = state_vector(solution_, config_);
  result.next_state = state_;
  result.reward = reward(solution_, terminal, limits_, reward_config);
  if (terminal) {
    result.done = true;
    result.done_reason = DoneReason::solved;
  } else if (steps_ >= config_.horizon) {
    result.done = true;
    result.done_reason = DoneReason::horizon;
  }
  active_ = !result.done;
  return result;
}

}  // namespace gridvc
