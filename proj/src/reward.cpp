#include "gridvc/reward.hpp"

namespace gridvc {

RewardStrategy parse_strategy(const std::string& text) {
  if (text == "1" || text == "penalty") return RewardStrategy::penalty;
  if (text == "2" || text == "cartpole") return RewardStrategy::cartpole;
  throw std::invalid_argument("unknown reward strategy '" + text + "'");
}

int strategy_number(RewardStrategy s) { return static_cast<int>(s); }

Vector line_overflow(const Vector& s_line, const Vector& s_max) {
  if (s_line.size() != s_max.size()) throw std::invalid_argument("line_overflow: length mismatch");
  return (s_line - s_max).cwiseMax(0.0).array().square().matrix();
}

Vector bus_violation(const Vector& v_m, const Vector& lower, const Vector& upper) {
  if (v_m.size() != lower.size() || v_m.size() != upper.size())
    throw std::invalid_argument("bus_violation: length mismatch");
  return ((v_m - lower).array() * (v_m - upper).array()).max(0.0).matrix();
}

double f_penalty(const Vector& v_m, const Vector& s_line, const ViolationLimits& limits,
                 const RewardConfig& config) {
  return config.alpha * line_overflow(s_line, limits.s_max).sum() +
         config.beta * bus_violation(v_m, limits.v_lower, limits.v_upper).sum();
}

bool has_no_violations(const Vector& v_m, const Vector& s_line, const ViolationLimits& limits) {
  return (line_overflow(s_line, limits.s_max).array() == 0.0).all() &&
         (bus_violation(v_m, limits.v_lower, limits.v_upper).array() == 0.0).all();
}

double reward(const PowerFlowSolution& next_solution, bool is_terminal,
              const ViolationLimits& limits, const RewardConfig& config) {
  if (!next_solution.converged)
    throw std::invalid_argument("reward is only defined on converged operating points");
  if (is_terminal) return config.r_plus;
  switch (config.strategy) {
    case RewardStrategy::penalty:
      return f_penalty(next_solution.v_m, next_solution.s_line, limits, config);
    case RewardStrategy::cartpole:
      return -1.0;
  }
  return 0.0;
}

}  // namespace gridvc
