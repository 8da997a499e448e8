#pragma once

// Reward shaping for the voltage-control MDP. Rewards are functions of the
// post-action operating point only.

#include <stdexcept>
#include <string>

#include "gridvc/powerflow.hpp"

namespace gridvc {

enum class RewardStrategy {
  // Non-terminal steps are penalized by the violation magnitude.
  penalty = 1,
  // Constant -1 on every non-terminal step.
  cartpole = 2,
};

struct RewardConfig {
  RewardStrategy strategy = RewardStrategy::penalty;
  double alpha = -0.1;    // weight on summed line overflow
  double beta = -1000.0;  // weight on summed bus violation
  double r_plus = 1000.0;
  // Used by the environment when the solver diverges; never seen here.
  double divergence_penalty = -1000.0;

  void validate() const {
    if (alpha > 0) throw std::invalid_argument("reward alpha must be <= 0");
    if (beta > 0) throw std::invalid_argument("reward beta must be <= 0");
  }
};

RewardStrategy parse_strategy(const std::string& text);
int strategy_number(RewardStrategy s);

// max(s_line - s_max, 0)^2, elementwise.
Vector line_overflow(const Vector& s_line, const Vector& s_max);

// max((v - lower)(v - upper), 0), elementwise. Zero on and inside the limits.
Vector bus_violation(const Vector& v_m, const Vector& lower, const Vector& upper);

struct ViolationLimits {
  Vector v_lower;
  Vector v_upper;
  Vector s_max;

  static ViolationLimits from(const GridNetwork& network) {
    return {network.v_min(), network.v_max(), network.s_max()};
  }
};

double f_penalty(const Vector& v_m, const Vector& s_line, const ViolationLimits& limits,
                 const RewardConfig& config);

// True iff no bus violation and no line overflow.
bool has_no_violations(const Vector& v_m, const Vector& s_line, const ViolationLimits& limits);

double reward(const PowerFlowSolution& next_solution, bool is_terminal,
              const ViolationLimits& limits, const RewardConfig& config);

}  // namespace gridvc
