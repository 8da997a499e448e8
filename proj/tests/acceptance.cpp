// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
// Usage: acceptance [criterion numbers...]   (default: all)

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridvc/analysis.hpp"
#include "gridvc/experiment.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace gridvc;
namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

fs::path work_root() {
  const fs::path p = fs::temp_directory_path() / "gridvc_acceptance";
  fs::create_directories(p);
  return p;
}

fs::path fresh(const std::string& name) {
  const fs::path p = work_root() / name;
  fs::remove_all(p);
  return p;
}

void run(const std::string& cmd, const ExperimentConfig& c, const fs::path& out,
         const CommandOptions& opt = {"", "both"}) {
  std::ostringstream log;
  const int status = run_command(cmd, c, out, opt, log);
  if (status != 0) throw std::runtime_error(cmd + " exited with status " + std::to_string(status));
}

std::vector<Json> read_jsonl(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.string());
  std::vector<Json> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(Json::parse(line));
  return out;
}

Json find_record(const std::vector<Json>& records, const std::string& kind) {
  for (const auto& r : records)
    if (r["record"] == kind) return r;
  throw std::runtime_error("no '" + kind + "' record");
}

ExperimentConfig seeded(std::uint64_t seed) {
  ExperimentConfig c;
  c.set("seed", std::to_string(seed));
  return c;
}

// 1
Outcome power_flow() {
  const auto t0 = std::chrono::steady_clock::now();
  const GridNetwork net = testing::desk_network();
  const PowerFlowSolution sol = solve_power_flow(net, net.plant_setpoints());
  const double oracle = sol.converged ? testing::oracle_mismatch(net, sol) : INFINITY;

  const double p = 0.5, x = 0.1;
  const PowerFlowSolution two = solve_power_flow(testing::two_bus(p, 0.0, x), ActionVec::Constant(1, 1.0));
  const double v_closed = std::sqrt((1.0 + std::sqrt(1.0 - 4.0 * p * x * p * x)) / 2.0);
  const double a_closed = -0.5 * std::asin(2.0 * p * x);
  const double two_err = two.converged ? std::max(std::abs(two.v_m[1] - v_closed), std::abs(two.v_a[1] - a_closed))
                                       : INFINITY;
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = sol.converged && sol.iterations <= 10 && sol.max_mismatch < 1e-8 && oracle < 1e-8 &&
           two_err < 1e-8 && secs < 1.0;
  o.detail = "iterations " + std::to_string(sol.iterations) + ", mismatch " + fmt(sol.max_mismatch) +
             ", oracle mismatch " + fmt(oracle) + ", two-bus error " + fmt(two_err) + ", " + fmt(secs) + " s";
  return o;
}

// 2
Outcome reward_formulas() {
  const double eps = 1e-12;
  bool ok = true;
  Vector s_line(2), s_max = Vector::Ones(2), v(2);
  s_line << 1.2, 0.5;
  v << 1.08, 1.0;
  const ViolationLimits lim{Vector::Constant(2, 0.97), Vector::Constant(2, 1.07), s_max};
  RewardConfig s1;
  ok &= std::abs(line_overflow(s_line, s_max)[0] - 0.04) < eps;
  ok &= std::abs(bus_violation(v, lim.v_lower, lim.v_upper)[0] - 0.0011) < eps;
  ok &= std::abs(f_penalty(v, s_line, lim, s1) + 1.104) < eps;
  Vector edge(3);
  edge << 0.97, 1.07, 1.02;
  ok &= bus_violation(edge, Vector::Constant(3, 0.97), Vector::Constant(3, 1.07)).isZero(0.0);
  ok &= line_overflow(Vector::Ones(1), Vector::Ones(1))[0] == 0.0;

  PowerFlowSolution bad;
  bad.v_m = v;
  bad.s_line = s_line;
  bad.converged = true;
  PowerFlowSolution good = bad;
  good.v_m << 1.0, 1.07;
  good.s_line << 0.5, 1.0;
  RewardConfig s2;
  s2.strategy = RewardStrategy::cartpole;
  ok &= reward(good, true, lim, s1) == 1000.0;
  ok &= std::abs(reward(bad, false, lim, s1) + 1.104) < eps;
  ok &= reward(bad, false, lim, s2) == -1.0;
  ok &= reward(good, true, lim, s2) == s2.r_plus;

  // Same next action from a different prior state and action.
  const auto net = testing::shared_desk();
  const auto& cases = testing::desk_cases();
  Rng rng(2024);
  int trials = 0, mismatches = 0;
  while (trials < 1000) {
    const Case& c = cases[uniform_index(rng, cases.size())];
    const ActionVec a = random_action(rng, net->n_plant());
    const ActionVec detour = random_action(rng, net->n_plant());
    RewardConfig cfg;
    cfg.strategy = trials % 2 ? RewardStrategy::cartpole : RewardStrategy::penalty;
    VoltageControlEnv e1(net, MdpConfig{}), e2(net, MdpConfig{});
    e1.reset(c);
    e2.reset(c);
    if (e2.step(detour, cfg).done) continue;
    const StepResult r1 = e1.step(a, cfg);
    const StepResult r2 = e2.step(a, cfg);
    if (r1.reward != r2.reward) ++mismatches;
    ++trials;
  }
  Outcome o;
  o.pass = ok && mismatches == 0;
  o.detail = std::string("hand examples ") + (ok ? "exact" : "WRONG") + ", perturbation trials " +
             std::to_string(trials) + " with " + std::to_string(mismatches) + " reward mismatches";
  return o;
}

// 3
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::vector<int>> shapes = {{58, 64, 64, 8}, {62, 64, 64, 1}, {58, 64, 64, 4}};
  double worst = 0.0;
  int min_checked = 1 << 30;
  std::uint64_t seed = 31;
  for (const auto& s : shapes) {
    const testing::GradCheck g = testing::check_parameter_gradients(s, seed++, 150);
    worst = std::max(worst, g.worst);
    min_checked = std::min(min_checked, g.checked);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst < 1e-4 && min_checked >= 100 && secs < 30.0;
  o.detail = "policy/critic/imitation shapes, " + std::to_string(min_checked) +
             " parameters each, worst relative error " + fmt(worst) + ", " + fmt(secs) + " s";
  return o;
}

// 4
Outcome dataset_soundness() {
  const fs::path out = fresh("dataset");
  ExperimentConfig c = seeded(1);
  run("gen", c, out);
  Workspace ws = Workspace::open(c, out);
  ws.load_split("train");
  const RolloutContext ctx = ws.context();
  RandomPolicy random(ws.network->n_plant());
  Rng rng(c.stage_seed("collect"));
  const CollectResult col = collect_successful_steps(ctx, ws.train, random, 1500, 1000, rng);
  const std::size_t failures = verify_dataset(ctx, ws.train, col.dataset);
  std::size_t mid = 0;
  for (const auto& e : col.dataset.entries) mid += e.step > 0;
  Outcome o;
  o.pass = col.complete && col.dataset.size() >= 1000 && failures == 0;
  o.detail = std::to_string(col.dataset.size()) + " random-policy pairs (" + std::to_string(mid) +
             " from mid-episode), " + std::to_string(failures) + " replay failures";
  return o;
}

// 5
std::vector<fs::path> il_dirs;
Outcome imitation() {
  const auto t0 = std::chrono::steady_clock::now();
  int passed = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const fs::path out = fresh("il_seed" + std::to_string(seed));
    const ExperimentConfig c = seeded(seed);
    run("gen", c, out);
    run("train-il", c, out);
    il_dirs.push_back(out);
    const Json r = find_record(read_jsonl(out / "il_history.jsonl"), "outcome");
    const int epochs = r["epochs"];
    const double length = r["final_eval_length"];
    const double frac = r["one_step_fraction"];
    const bool ok = epochs <= 20 && length <= 1.2 && frac >= 0.9;
    passed += ok;
    detail += "seed " + std::to_string(seed) + ": " + std::to_string(epochs) + " epochs, length " + fmt(length) +
              ", one-step " + fmt(100 * frac) + "% of " + std::to_string(r["solvable_test_cases"].get<int>()) +
              " solvable; ";
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = passed == 3 && secs < 600.0;
  o.detail = detail + fmt(secs) + " s";
  return o;
}

// 6
std::vector<fs::path> sac_dirs;
Outcome sac_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Run {
    int strategy;
    double r_plus;
  };
  const std::vector<Run> grid = {{1, 1}, {1, 1000}, {2, -1}, {2, 0}, {2, 1}, {2, 1000}};
  int a_seeds = 0, b_seeds = 0;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const fs::path data = fresh("sac_seed" + std::to_string(seed));
    run("gen", seeded(seed), data);
    std::map<std::pair<int, double>, std::int64_t> steps;
    detail += "seed " + std::to_string(seed) + ":";
    for (const Run& g : grid) {
      ExperimentConfig c = seeded(seed);
      c.set("reward.strategy", std::to_string(g.strategy));
      c.set("reward.r_plus", format_double(g.r_plus));
      const fs::path out = data / ("s" + std::to_string(g.strategy) + "_r" + format_double(g.r_plus));
      fs::create_directories(out);
      for (const char* f : {"manifest.txt", "cases_train.txt", "cases_test.txt"})
        fs::copy_file(data / f, out / f, fs::copy_options::overwrite_existing);
      run("train-sac", c, out);
      const Json r = find_record(read_jsonl(out / "sac_curve.jsonl"), "outcome");
      const std::int64_t n = r["reached_objective"].get<bool>() ? r["train_steps_to_objective"].get<std::int64_t>() : -1;
      steps[{g.strategy, g.r_plus}] = n;
      detail += " S" + std::to_string(g.strategy) + "/" + format_double(g.r_plus) + "=" +
                (n < 0 ? std::string("fail") : std::to_string(n));
      if (g.strategy == 1 && g.r_plus == 1000) sac_dirs.push_back(out);
    }
    auto reached = [&](int s, double r) { return steps[{s, r}] >= 0; };
    const bool a = reached(1, 1000) && (!reached(1, 1) || steps[{1, 1000}] < steps[{1, 1}]);
    const bool b = reached(2, 1000) && !reached(2, -1) && !reached(2, 0) && !reached(2, 1);
    a_seeds += a;
    b_seeds += b;
    detail += std::string(" (a ") + (a ? "yes" : "no") + ", b " + (b ? "yes" : "no") + "); ";
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = a_seeds >= 2 && b_seeds >= 2 && secs < 1800.0;
  o.detail = detail + "(a) in " + std::to_string(a_seeds) + "/3, (b) in " + std::to_string(b_seeds) + "/3 seeds, " +
             fmt(secs, 4) + " s";
  return o;
}

// 7
Outcome greedy_contract() {
  if (sac_dirs.empty() || il_dirs.empty()) return {false, "needs the checkpoints from criteria 5 and 6"};
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < sac_dirs.size(); ++i) {
    const fs::path dir = sac_dirs[i];
    ExperimentConfig c = seeded(i + 1);
    c.set("reward.r_plus", "1000");
    run("eval", c, dir, {(dir / "sac.ckpt").string(), "test"});
    int greedy_solved = 0, greedy_multi = 0, stochastic_solved = 0;
    for (const Json& r : read_jsonl(dir / "eval_sac.jsonl")) {
      if (r["record"] != "report") continue;
      if (r["mode"] == "greedy") {
        greedy_solved = r["solved_count"];
        greedy_multi = r["solved_in_more_steps"];
      } else {
        stochastic_solved = r["solved_count"];
      }
    }
    const bool seed_ok = greedy_multi == 0 && stochastic_solved >= greedy_solved;
    ok &= seed_ok;
    detail += "sac seed " + std::to_string(i + 1) + ": greedy " + std::to_string(greedy_solved) + " solved (" +
              std::to_string(greedy_multi) + " multi-step), stochastic " + std::to_string(stochastic_solved) + "; ";
  }
  for (std::size_t i = 0; i < il_dirs.size(); ++i) {
    const fs::path dir = il_dirs[i];
    run("eval", seeded(i + 1), dir, {(dir / "il.ckpt").string(), "test"});
    const Json r = find_record(read_jsonl(dir / "eval_il.jsonl"), "report");
    const int multi = r["solved_in_more_steps"];
    ok &= multi == 0;
    detail += "il seed " + std::to_string(i + 1) + ": " + std::to_string(r["solved_count"].get<int>()) +
              " solved (" + std::to_string(multi) + " multi-step); ";
  }
  return {ok, detail};
}

// 8
Outcome pca_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(8);
  auto cloud = [&](int n, int d) { return Matrix(Matrix::NullaryExpr(n, d, [&] { return standard_normal(rng); })); };
  const PcaResult iso = pca(cloud(10000, 2));
  const bool isotropic = std::abs(iso.ratios[0] - 0.5) <= 0.02 && std::abs(iso.ratios[1] - 0.5) <= 0.02;

  Matrix data = cloud(600, 58);
  data.col(3) = 4 * data.col(3) + data.col(7);
  const PcaResult r = pca(data);
  const Eigen::Index d = r.components.rows();
  const double ortho = (r.components * r.components.transpose() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff();
  const double ratio_sum = std::abs(r.ratios.sum() - 1.0);
  const Matrix centered = data.rowwise() - data.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);
  double residual = 0;
  for (Eigen::Index k = 0; k < d; ++k) {
    const Vector v = r.components.row(k).transpose();
    residual = std::max(residual, (cov * v - r.eigenvalues[k] * v).norm() / cov.norm());
  }

  const RolloutContext ctx = testing::desk_context();
  const std::vector<Case> cases(testing::desk_cases().begin(), testing::desk_cases().begin() + 20);
  const bool labels = label_solvability(ctx, cases, 1000, 3, 5) == label_solvability(ctx, cases, 1000, 3, 5);
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = isotropic && ortho < 1e-9 && ratio_sum < 1e-12 && residual < 1e-9 && labels && secs < 60.0;
  o.detail = "isotropic ratios " + fmt(iso.ratios[0], 4) + "/" + fmt(iso.ratios[1], 4) + ", orthonormality " +
             fmt(ortho) + ", ratio sum error " + fmt(ratio_sum) + ", residual " + fmt(residual) + ", labels " +
             (labels ? "reproducible" : "DIFFER") + ", " + fmt(secs) + " s";
  return o;
}

// 9
Outcome determinism() {
  ExperimentConfig c = seeded(9);
  c.set("sac.step_budget", "300");
  c.set("sweep.strategies", "1,2");
  c.set("sweep.r_plus", "1,1000");
  c.set("sweep.seeds", "1");
  std::vector<fs::path> dirs = {fresh("determinism_a"), fresh("determinism_b")};
  for (const fs::path& out : dirs) {
    run("gen", c, out);
    run("baseline", c, out);
    run("train-il", c, out);
    run("train-sac", c, out);
    run("eval", c, out, {(out / "sac.ckpt").string(), "both"});
    run("eval", c, out, {(out / "il.ckpt").string(), "both"});
    run("pca", c, out);
    c.set("sac.step_budget", "100");
    run("sweep", c, out);
    c.set("sac.step_budget", "300");
  }
  int files = 0, differ = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    std::ifstream a(entry.path(), std::ios::binary), b(dirs[1] / entry.path().filename(), std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    ++files;
    if (!b || sa.str() != sb.str()) ++differ;
  }
  return {files >= 20 && differ == 0,
          std::to_string(files) + " artifacts compared across two runs, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"power flow correctness", power_flow},
      {"reward formulas", reward_formulas},
      {"gradient suite", gradients},
      {"dataset soundness", dataset_soundness},
      {"imitation headline", imitation},
      {"SAC reward-engineering ordering", sac_ordering},
      {"greedy vs stochastic contract", greedy_contract},
      {"PCA suite", pca_suite},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  // Criterion 7 reuses the checkpoints of 5 and 6.
  if (only.count(7)) only.insert({5, 6});

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " [" << criteria[i].first
              << "] " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
