#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "gridvc/agents.hpp"
#include "gridvc/records.hpp"

namespace gridvc {

namespace {

MdpConfig with_horizon(MdpConfig mdp, int horizon) {
  mdp.horizon = horizon;
  return mdp;
}

// Steps to solve, or 0 if the episode ends unsolved.
int run_episode(VoltageControlEnv& env, const Case& c, Policy& policy, const RewardConfig& reward,
                Rng& rng) {
  StateVec s = env.reset(c);
  while (true) {
    const StepResult r = env.step(policy.act(s, rng), reward);
    if (r.done_reason == DoneReason::solved) return env.steps_taken();
    if (r.done) return 0;
    s = r.next_state;
  }
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

ActionVec random_action(Rng& rng, int n_a) {
  ActionVec a(n_a);
  for (int i = 0; i < n_a; ++i) a[i] = uniform(rng, kSetpointMin, kSetpointMax);
  return a;
}

double evaluate_episode_length(const RolloutContext& ctx, const std::vector<Case>& cases,
                               Policy& policy, const EvalConfig& config, Rng& rng) {
  if (config.n_episodes < 1) throw std::invalid_argument("n_episodes must be >= 1");
  if (config.t_limit < 1) throw std::invalid_argument("t_limit must be >= 1");
  if (cases.empty()) throw std::invalid_argument("evaluation needs at least one case");
  VoltageControlEnv env(ctx.network, with_horizon(ctx.mdp, config.t_limit), ctx.solver);
  double total = 0.0;
  for (int e = 0; e < config.n_episodes; ++e) {
    const Case& c = cases[uniform_index(rng, cases.size())];
    const int steps = run_episode(env, c, policy, ctx.reward, rng);
    total += steps > 0 ? steps : config.t_limit;
  }
  return total / config.n_episodes;
}

PolicyReport evaluate_policy(const RolloutContext& ctx, const std::vector<Case>& cases,
                             Policy& policy, int horizon, int trials, Rng& rng) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  VoltageControlEnv env(ctx.network, with_horizon(ctx.mdp, horizon), ctx.solver);
  PolicyReport report;
  double sum_means = 0.0;
  int solved_cases = 0;
  for (const Case& c : cases) {
    CaseEvaluation ev;
    ev.case_id = c.id;
    ev.trials = trials;
    double sum = 0.0;
    for (int t = 0; t < trials; ++t) {
      const int steps = run_episode(env, c, policy, ctx.reward, rng);
      if (steps == 0) continue;
      ++ev.solved_trials;
      sum += steps;
      ev.min_steps = ev.min_steps == 0 ? steps : std::min(ev.min_steps, steps);
    }
    if (ev.solved_trials > 0) {
      ev.mean_steps = sum / ev.solved_trials;
      sum_means += ev.mean_steps;
      ++solved_cases;
      if (ev.mean_steps == 1.0) ++report.solved_in_one_step;
    } else {
      ++report.unsolvable_count;
    }
    report.cases.push_back(std::move(ev));
  }
  report.avg_steps_solved = solved_cases > 0 ? sum_means / solved_cases : 0.0;
  return report;
}

CollectResult collect_successful_steps(const RolloutContext& ctx, const std::vector<Case>& cases,
                                       Policy& collect_policy, std::size_t n, int t_limit,
                                       Rng& rng, std::optional<int> attempt_cap) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (t_limit < 1) throw std::invalid_argument("t_limit must be >= 1");
  if (cases.empty()) throw std::invalid_argument("collection needs at least one case");
  const long long cap = attempt_cap ? *attempt_cap : 100LL * static_cast<long long>(n);

  CollectResult result;
  Dataset& d = result.dataset;
  d.collect_policy = collect_policy.name();
  d.t_limit = t_limit;
  d.normalized = ctx.mdp.normalize_state;
  d.normalizer = ctx.mdp.normalizer;

  VoltageControlEnv env(ctx.network, with_horizon(ctx.mdp, t_limit), ctx.solver);
  while (d.entries.size() < n) {
    if (result.episodes >= cap) {
      result.complete = false;
      break;
    }
    ++result.episodes;
    const Case& c = cases[uniform_index(rng, cases.size())];
    StateVec s = env.reset(c);
    while (true) {
      const ActionVec prev = env.setpoints();
      const ActionVec a = clip_action(collect_policy.act(s, rng));
      const StepResult r = env.step(a, ctx.reward);
      if (r.done_reason == DoneReason::solved) {
        d.entries.push_back({s, a, c.id, env.steps_taken() - 1, prev});
        break;
      }
      if (r.done) break;
      s = r.next_state;
    }
  }
  return result;
}

std::size_t verify_dataset(const RolloutContext& ctx, const std::vector<Case>& cases,
                           const Dataset& dataset) {
  std::unordered_map<std::string, const Case*> by_id;
  for (const Case& c : cases) by_id[c.id] = &c;
  MdpConfig state_cfg = ctx.mdp;
  state_cfg.normalize_state = dataset.normalized;
  state_cfg.normalizer = dataset.normalizer;

  std::size_t failures = 0;
  for (const DatasetEntry& e : dataset.entries) {
    auto it = by_id.find(e.case_id);
    if (it == by_id.end()) {
      ++failures;
      continue;
    }
    const GridNetwork net = network_for_case(*ctx.network, *it->second);
    const PowerFlowSolution before = solve_power_flow(net, e.prev_setpoints, ctx.solver);
    if (!before.converged) {
      ++failures;
      continue;
    }
    const StateVec s = state_vector(before, state_cfg);
    if (s.size() != e.state.size() || (s - e.state).cwiseAbs().maxCoeff() > 1e-9) {
      ++failures;
      continue;
    }
    const PowerFlowSolution after = solve_power_flow(net, e.action, ctx.solver);
    if (!is_terminal(after, net)) ++failures;
  }
  return failures;
}

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out << "# gridvc-dataset v1\n[dataset]\n";
  out << "collect_policy=" << dataset.collect_policy << " seed=" << dataset.seed
      << " t_limit=" << dataset.t_limit << " size=" << dataset.size()
      << " normalized=" << (dataset.normalized ? 1 : 0)
      << " norm_offset=" << format_hex_list(dataset.normalizer.offset.data(), 5)
      << " norm_scale=" << format_hex_list(dataset.normalizer.scale.data(), 5) << "\n[pair]\n";
  for (const DatasetEntry& e : dataset.entries) {
    out << "case=" << e.case_id << " step=" << e.step
        << " state=" << format_hex_list(e.state.data(), e.state.size())
        << " action=" << format_hex_list(e.action.data(), e.action.size())
        << " prev=" << format_hex_list(e.prev_setpoints.data(), e.prev_setpoints.size()) << "\n";
  }
}

Dataset read_dataset(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  require_header(file, "gridvc-dataset", 1, source_name);
  const Record& meta = file.single("dataset");
  Dataset d;
  d.collect_policy = meta.get("collect_policy");
  d.seed = static_cast<std::uint64_t>(std::stoull(meta.get("seed")));
  d.t_limit = static_cast<int>(meta.get_int("t_limit"));
  d.normalized = meta.get_int("normalized") != 0;
  const auto off = meta.get_doubles("norm_offset");
  const auto scale = meta.get_doubles("norm_scale");
  if (off.size() != 5 || scale.size() != 5)
    throw FormatError(source_name + ": normalizer needs five blocks");
  std::copy(off.begin(), off.end(), d.normalizer.offset.begin());
  std::copy(scale.begin(), scale.end(), d.normalizer.scale.begin());
  for (const Record* r : file.section("pair")) {
    DatasetEntry e;
    e.case_id = r->get("case");
    e.step = static_cast<int>(r->get_int("step"));
    e.state = to_vector(r->get_doubles("state"));
    e.action = to_vector(r->get_doubles("action"));
    e.prev_setpoints = to_vector(r->get_doubles("prev"));
    if (e.action.size() != e.prev_setpoints.size())
      throw FormatError(source_name + ":" + std::to_string(r->line) + ": action size mismatch");
    if (!d.entries.empty() && e.state.size() != d.entries.front().state.size())
      throw FormatError(source_name + ":" + std::to_string(r->line) + ": state size mismatch");
    d.entries.push_back(std::move(e));
  }
  const auto size = static_cast<std::size_t>(meta.get_int("size"));
  if (size != d.entries.size())
    throw FormatError(source_name + ": header says " + std::to_string(size) + " pairs, found " +
                      std::to_string(d.entries.size()));
  return d;
}

}  // namespace gridvc
