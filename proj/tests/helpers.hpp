#pragma once

#include <memory>

#include "gridvc/agents.hpp"
#include "gridvc/data.hpp"

namespace testing {

inline gridvc::GridNetwork desk_network() {
  return gridvc::load_network(GRIDVC_DATA_DIR "/desk14.net");
}

inline std::shared_ptr<const gridvc::GridNetwork> shared_desk() {
  static const auto net = std::make_shared<const gridvc::GridNetwork>(desk_network());
  return net;
}

// Slack bus 0 at 1.0 pu feeding a PQ load over one lossless line.
inline gridvc::GridNetwork two_bus(double p_load, double q_load = 0.0, double x = 0.1) {
  gridvc::GridNetwork net;
  net.name = "two-bus";
  gridvc::Bus slack;
  slack.name = "1";
  slack.kind = gridvc::BusKind::slack;
  slack.v_set = 1.0;
  slack.v_min = 0.5;
  slack.v_max = 1.5;
  gridvc::Bus load = slack;
  load.name = "2";
  load.kind = gridvc::BusKind::pq;
  load.p_load = p_load;
  load.q_load = q_load;
  net.buses = {slack, load};
  net.branches = {{0, 1, 0.0, x, 0.0, 10.0}};
  net.generators = {{0, 0, 0.0, -10.0, 10.0}};
  net.plants = {{"slack"}};
  return net;
}

// Desk cases with their loads frozen, from a fixed seed.
inline const std::vector<gridvc::Case>& desk_cases() {
  static const std::vector<gridvc::Case> cases = gridvc::generate_cases(desk_network(), 40, 11).cases;
  return cases;
}

inline gridvc::RolloutContext desk_context() {
  gridvc::RolloutContext ctx;
  ctx.network = shared_desk();
  return ctx;
}

// A setpoint vector that solves `c` in one step, found by random search.
inline gridvc::ActionVec solving_action(const gridvc::GridNetwork& base, const gridvc::Case& c,
                                        std::uint64_t seed = 5) {
  gridvc::Rng rng(seed);
  const gridvc::GridNetwork net = gridvc::network_for_case(base, c);
  for (int i = 0; i < 20000; ++i) {
    const gridvc::ActionVec a = gridvc::random_action(rng, base.n_plant());
    if (gridvc::is_terminal(gridvc::solve_power_flow(net, a), net)) return a;
  }
  throw std::runtime_error("no solving action found for " + c.id);
}

// Solves known cases in one step (matching on the exact initial state) and
// otherwise holds the current setpoints.
class OraclePolicy final : public gridvc::Policy {
 public:
  struct Entry {
    gridvc::StateVec state;
    gridvc::ActionVec action;
  };
  std::vector<Entry> known;
  std::function<gridvc::ActionVec(const gridvc::StateVec&)> fallback;

  gridvc::ActionVec act(const gridvc::StateVec& s, gridvc::Rng&) override {
    for (const auto& e : known)
      if (e.state.size() == s.size() && e.state == s) return e.action;
    return fallback(s);
  }
  std::string name() const override { return "oracle"; }
};

}  // namespace testing
