#include <doctest.h>

#include "gridvc/env.hpp"
#include "helpers.hpp"

using namespace gridvc;

TEST_CASE("state layout of the desk network") {
  const GridNetwork net = testing::desk_network();
  const StateLayout layout = StateLayout::of(net);
  CHECK(layout.size() == 2 * 14 + 20 + 2 * 5);
  CHECK(layout.size() == 58);
  const auto off = layout.block_offsets();
  const auto size = layout.block_sizes();
  CHECK(off[0] == 0);
  CHECK(off[4] + size[4] == 58);
  const PowerFlowSolution sol = solve_power_flow(net, net.plant_setpoints());
  const StateVec s = raw_state_vector(sol);
  CHECK(s.size() == 58);
  CHECK(s.segment(off[0], size[0]) == sol.v_m);
  CHECK(s.segment(off[2], size[2]) == sol.s_line);
  CHECK(s.segment(off[4], size[4]) == sol.q_g);
}

TEST_CASE("terminal set boundary") {
  GridNetwork net = testing::two_bus(0.0);
  net.buses[0].v_min = net.buses[1].v_min = 0.97;
  net.buses[0].v_max = net.buses[1].v_max = 1.07;
  PowerFlowSolution s;
  s.v_m = Vector::Constant(2, 1.0);
  s.v_a = Vector::Zero(2);
  s.s_line = Vector::Constant(1, 0.5);
  s.converged = true;
  CHECK(is_terminal(s, net));
  s.v_m[1] = 1.07;
  CHECK(is_terminal(s, net));
  s.v_m[1] = 1.08;
  CHECK_FALSE(is_terminal(s, net));
  s.v_m[1] = 1.0;
  s.s_line[0] = 10.0 + 1e-9;
  CHECK_FALSE(is_terminal(s, net));
}

TEST_CASE("reset is deterministic and independent of earlier episodes") {
  const auto net = testing::shared_desk();
  const Case& c = testing::desk_cases()[0];
  VoltageControlEnv env(net, MdpConfig{});
  const StateVec s0 = env.reset(c);
  CHECK(s0 == c.initial_state);
  CHECK(env.steps_taken() == 0);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) env.step(random_action(rng, 4), RewardConfig{});
  CHECK(env.reset(c) == s0);
  CHECK(env.steps_taken() == 0);
  CHECK(env.episode_active());
}

TEST_CASE("holding the current setpoints is a fixed point") {
  const auto net = testing::shared_desk();
  const Case& c = testing::desk_cases()[1];
  VoltageControlEnv env(net, MdpConfig{});
  const StateVec s0 = env.reset(c);
  const StepResult r = env.step(c.setpoints, RewardConfig{});
  CHECK(r.next_state == s0);
  CHECK_FALSE(r.done);
  CHECK(r.done_reason == DoneReason::none);
  CHECK(r.reward < 0.0);
}

TEST_CASE("horizon ends the episode") {
  const auto net = testing::shared_desk();
  const Case& c = testing::desk_cases()[2];
  MdpConfig cfg;
  cfg.horizon = 50;
  VoltageControlEnv env(net, cfg);
  env.reset(c);
  StepResult r;
  for (int t = 0; t < 50; ++t) {
    REQUIRE_FALSE(r.done);
    r = env.step(c.setpoints, RewardConfig{});
  }
  CHECK(r.done);
  CHECK(r.done_reason == DoneReason::horizon);
  CHECK_FALSE(env.episode_active());
  CHECK_THROWS(env.step(c.setpoints, RewardConfig{}));
}

TEST_CASE("solving action ends the episode with R+") {
  const auto net = testing::shared_desk();
  const Case& c = testing::desk_cases()[3];
  const ActionVec a = testing::solving_action(*net, c);
  VoltageControlEnv env(net, MdpConfig{});
  env.reset(c);
  RewardConfig cfg;
  cfg.r_plus = 123.0;
  const StepResult r = env.step(a, cfg);
  CHECK(r.done);
  CHECK(r.done_reason == DoneReason::solved);
  CHECK(r.reward == 123.0);
}

TEST_CASE("divergence is penalized and terminal") {
  // Transfer limit is v^2 / (2x): 5.0 at v=1.0 but 4.05 at v=0.9.
  auto heavy = std::make_shared<GridNetwork>(testing::two_bus(4.5));
  heavy->buses[1].v_min = 0.97;
  heavy->buses[1].v_max = 1.07;
  Case c;
  c.id = "heavy";
  c.p_load = heavy->p_load();
  c.q_load = heavy->q_load();
  c.setpoints = ActionVec::Constant(1, 1.0);
  VoltageControlEnv env(heavy, MdpConfig{});
  env.reset(c);
  RewardConfig cfg;
  cfg.divergence_penalty = -1000;
  const StateVec s0 = env.state();
  const StepResult r = env.step(ActionVec::Constant(1, 0.9), cfg);
  CHECK(r.done);
  CHECK(r.done_reason == DoneReason::diverged);
  CHECK(r.next_state == s0);
  CHECK(r.reward == -1000.0);
}

TEST_CASE("actions are clipped into the setpoint box") {
  ActionVec a(3);
  a << 0.5, 1.0, 1.7;
  const ActionVec c = clip_action(a);
  CHECK(c[0] == 0.9);
  CHECK(c[1] == 1.0);
  CHECK(c[2] == 1.1);
  const auto net = testing::shared_desk();
  VoltageControlEnv env(net, MdpConfig{});
  env.reset(testing::desk_cases()[0]);
  env.step(ActionVec::Constant(4, 5.0), RewardConfig{});
  CHECK(env.setpoints() == ActionVec::Constant(4, 1.1));
}

TEST_CASE("normalizer standardizes each block") {
  std::vector<StateVec> states;
  for (const Case& c : testing::desk_cases()) states.push_back(c.initial_state);
  const StateLayout layout = StateLayout::of(testing::desk_network());
  const StateNormalizer norm = StateNormalizer::fit(states, layout);
  CHECK_FALSE(norm.is_identity());
  const auto off = layout.block_offsets();
  const auto size = layout.block_sizes();
  for (int k = 0; k < 5; ++k) {
    double sum = 0, sq = 0, n = 0;
    for (const StateVec& s : states) {
      const Vector z = norm.apply(s, layout).segment(off[k], size[k]);
      sum += z.sum();
      sq += z.squaredNorm();
      n += static_cast<double>(z.size());
    }
    CHECK(std::abs(sum / n) < 1e-9);
    CHECK(sq / n == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("prepare_case rejects secure operating points") {
  const GridNetwork base = testing::desk_network();
  Case c = testing::desk_cases()[0];
  c.setpoints = testing::solving_action(base, c);
  CHECK_THROWS_AS(prepare_case(base, c), std::invalid_argument);
}
