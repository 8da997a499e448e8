#include "gridvc/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "gridvc/analysis.hpp"
#include "gridvc/records.hpp"

namespace gridvc {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"network", "builtin"},
      {"seed", "1"},
      {"data.n_cases", "600"},
      {"data.n_train", "500"},
      {"data.n_test", "100"},
      {"data.load_min", "0.7"},
      {"data.load_max", "1.4"},
      {"data.setpoint_min", "0.92"},
      {"data.setpoint_max", "1.08"},
      {"data.budget_factor", "20"},
      {"solver.tolerance", "1e-8"},
      {"solver.max_iterations", "20"},
      {"solver.enforce_q_limits", "true"},
      {"mdp.gamma", "0.99"},
      {"mdp.horizon", "50"},
      {"mdp.normalize_state", "true"},
      {"reward.strategy", "1"},
      {"reward.alpha", "-0.1"},
      {"reward.beta", "-1000"},
      {"reward.r_plus", "1000"},
      {"reward.divergence_penalty", "-1000"},
      {"sac.hidden", "64,64"},
      {"sac.learning_rate", "3e-4"},
      {"sac.batch_size", "256"},
      {"sac.tau", "0.005"},
      {"sac.target_update_period", "1"},
      {"sac.initial_log_alpha", "1"},
      {"sac.target_entropy", "auto"},
      {"sac.buffer_capacity", "100000"},
      {"sac.step_budget", "20000"},
      {"sac.episodes_per_step", "1"},
      {"sac.warmup_steps", "1000"},
      {"sac.eval_interval", "500"},
      {"il.hidden", "64,64"},
      {"il.learning_rate", "1e-3"},
      {"il.batch_size", "64"},
      {"il.max_epochs", "20"},
      {"il.dataset_size", "2000"},
      {"il.collect_t_limit", "1000"},
      {"il.collect_policy", "random"},
      {"eval.n_episodes", "50"},
      {"eval.t_limit", "50"},
      {"eval.l_objective", "1"},
      {"report.horizon", "1000"},
      {"report.trials", "3"},
      {"pca.horizon", "1000"},
      {"pca.trials", "3"},
      {"pca.state", "raw"},
      {"pca.split", "all"},
      {"sweep.strategies", "1,2"},
      {"sweep.r_plus", "-1,0,1,1000"},
      {"sweep.seeds", "3"},
  };
  return d;
}

std::string sha256_hex(const std::string& text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, text.data(), text.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw std::runtime_error("SHA-256 failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i)
    out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return out.str();
}

bool is_stage(const std::string& name) {
  for (const char* s : kStageNames)
    if (name == s) return true;
  return false;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json meta_record(const ExperimentConfig& config, const std::string& command) {
  Json seeds = Json::object();
  for (const auto& [stage, seed] : config.stage_seeds()) seeds[stage] = seed;
  return Json{{"record", "meta"},
              {"command", command},
              {"config_hash", config.hash()},
              {"seed", static_cast<std::uint64_t>(config.get_int("seed"))},
              {"stage_seeds", seeds},
              {"gamma", config.get_double("mdp.gamma")},
              {"network", config.get("network")},
              {"synthetic_cases", true}};
}

std::string csv_provenance(const ExperimentConfig& config) {
  std::string line = "# config_hash=" + config.hash() + " seed=" + config.get("seed");
  for (const auto& [stage, seed] : config.stage_seeds())
    line += " seed." + stage + "=" + std::to_string(seed);
  return line + "\n";
}

class JsonlFile {
 public:
  JsonlFile(const ExperimentConfig& config, const std::string& command) {
    add(meta_record(config, command));
  }
  void add(const Json& record) { text_ += record.dump() + "\n"; }
  void save(const fs::path& path) const { write_file(path, text_); }

 private:
  std::string text_;
};

std::string format_fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void finish_summary(Workspace& ws, const std::string& command, const std::string& body,
                    std::ostream& log) {
  std::string text = "gridvc " + command + "\nconfig_hash " + ws.config.hash() + "\n" + body;
  write_file(ws.out_dir / ("summary_" + command + ".txt"), text);
  log << text;
}

std::vector<Case> cases_for(Workspace& ws, const std::string& split) {
  if (split == "train") {
    ws.load_split("train");
    return ws.train;
  }
  if (split == "test") {
    ws.load_split("test");
    return ws.test;
  }
  throw ConfigError("unknown split '" + split + "'");
}

struct ReportRow {
  std::string split;
  std::string policy;
  std::string mode;
  PolicyReport report;
};

Json report_record(const ReportRow& row) {
  const auto& r = row.report;
  const int n = static_cast<int>(r.cases.size());
  int solved = n - r.unsolvable_count;
  int multi_step = 0;
  for (const auto& c : r.cases)
    if (c.solved_trials > 0 && c.mean_steps != 1.0) ++multi_step;
  return Json{{"record", "report"},
              {"split", row.split},
              {"policy", row.policy},
              {"mode", row.mode},
              {"n_cases", n},
              {"unsolvable_count", r.unsolvable_count},
              {"unsolvable_fraction", n > 0 ? static_cast<double>(r.unsolvable_count) / n : 0.0},
              {"solved_count", solved},
              {"avg_steps_solved", r.avg_steps_solved},
              {"solved_in_one_step", r.solved_in_one_step},
              {"solved_in_more_steps", multi_step}};
}

void add_case_records(JsonlFile& out, const ReportRow& row) {
  for (const auto& c : row.report.cases)
    out.add(Json{{"record", "case"},
                 {"split", row.split},
                 {"mode", row.mode},
                 {"case_id", c.case_id},
                 {"trials", c.trials},
                 {"solved_trials", c.solved_trials},
                 {"mean_steps", c.mean_steps},
                 {"min_steps", c.min_steps}});
}

// Per-case steps sorted ascending within each split and mode, for rank plots.
std::string case_table(const ExperimentConfig& config, const std::vector<ReportRow>& rows) {
  std::string out = csv_provenance(config) + "split,mode,rank,case_id,solved,mean_steps\n";
  for (const auto& row : rows) {
    std::vector<const CaseEvaluation*> order;
    for (const auto& c : row.report.cases) order.push_back(&c);
    std::stable_sort(order.begin(), order.end(), [](const CaseEvaluation* a, const CaseEvaluation* b) {
      const bool sa = a->solved_trials > 0, sb = b->solved_trials > 0;
      if (sa != sb) return sa;
      return a->mean_steps < b->mean_steps;
    });
    for (std::size_t i = 0; i < order.size(); ++i)
      out += row.split + "," + row.mode + "," + std::to_string(i + 1) + "," + order[i]->case_id + "," +
             (order[i]->solved_trials > 0 ? "1" : "0") + "," + format_double(order[i]->mean_steps) + "\n";
  }
  return out;
}

std::string report_summary(const std::vector<ReportRow>& rows) {
  std::ostringstream s;
  s << std::left << std::setw(7) << "split" << std::setw(12) << "policy" << std::setw(12) << "mode"
    << std::setw(8) << "cases" << std::setw(12) << "unsolvable" << std::setw(12) << "avg_steps"
    << "one_step\n";
  for (const auto& row : rows) {
    const auto& r = row.report;
    s << std::left << std::setw(7) << row.split << std::setw(12) << row.policy << std::setw(12) << row.mode
      << std::setw(8) << r.cases.size() << std::setw(12) << r.unsolvable_count << std::setw(12)
      << format_fixed(r.avg_steps_solved, 3) << r.solved_in_one_step << "\n";
  }
  return s.str();
}

std::vector<std::string> splits_of(const std::string& split) {
  if (split == "both" || split == "all" || split.empty()) return {"train", "test"};
  if (split == "train" || split == "test") return {split};
  throw ConfigError("split must be train, test or both, got '" + split + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig::ExperimentConfig() {
  for (const auto& [k, v] : defaults()) values_[k] = v;
}

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  if (!file.header.empty()) require_header(file, "gridvc-config", 1, source_name);
  ExperimentConfig cfg;
  for (const auto& rec : file.records) {
    if (!rec.section.empty())
      throw ConfigError(source_name + ":" + std::to_string(rec.line) + ": config files have no sections");
    for (const auto& [k, v] : rec.fields) {
      try {
        cfg.set(k, v);
      } catch (const ConfigError& e) {
        throw ConfigError(source_name + ":" + std::to_string(rec.line) + ": " + e.what());
      }
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse(in, path.string());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key.rfind("seed.", 0) == 0) {
    if (!is_stage(key.substr(5))) throw ConfigError("unknown seed stage '" + key + "'");
  } else if (!values_.count(key)) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  if (value.empty()) throw ConfigError("empty value for '" + key + "'");
  values_[key] = value;
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  try {
    return parse_double(get(key), key);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

std::int64_t ExperimentConfig::get_int(const std::string& key) const {
  try {
    return parse_int(get(key), key);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + v + "'");
}

std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  try {
    return parse_double_list(get(key), key);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
}

std::vector<int> ExperimentConfig::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& part : split(get(key), ',')) {
    try {
      out.push_back(static_cast<int>(parse_int(part, key)));
    } catch (const FormatError& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

std::string ExperimentConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()); }

std::uint64_t ExperimentConfig::stage_seed(const std::string& stage) const {
  if (!is_stage(stage)) throw ConfigError("unknown seed stage '" + stage + "'");
  auto it = values_.find("seed." + stage);
  if (it != values_.end()) return std::stoull(it->second);
  return derive_seed(static_cast<std::uint64_t>(get_int("seed")), stage);
}

std::map<std::string, std::uint64_t> ExperimentConfig::stage_seeds() const {
  std::map<std::string, std::uint64_t> out;
  for (const char* s : kStageNames) out[s] = stage_seed(s);
  return out;
}

std::string ExperimentConfig::network_path() const {
  const std::string& v = get("network");
  if (v != "builtin") return v;
  if (const char* dir = std::getenv("GRIDVC_DATA")) return std::string(dir) + "/desk14.net";
  return std::string(GRIDVC_DATA_DIR) + "/desk14.net";
}

PowerFlowOptions ExperimentConfig::solver() const {
  PowerFlowOptions o;
  o.tolerance = get_double("solver.tolerance");
  o.max_iterations = static_cast<int>(get_int("solver.max_iterations"));
  o.enforce_q_limits = get_bool("solver.enforce_q_limits");
  return o;
}

RewardConfig ExperimentConfig::reward() const {
  RewardConfig r;
  r.strategy = parse_strategy(get("reward.strategy"));
  r.alpha = get_double("reward.alpha");
  r.beta = get_double("reward.beta");
  r.r_plus = get_double("reward.r_plus");
  r.divergence_penalty = get_double("reward.divergence_penalty");
  return r;
}

PerturbationConfig ExperimentConfig::perturbation() const {
  PerturbationConfig p;
  p.load_min = get_double("data.load_min");
  p.load_max = get_double("data.load_max");
  p.setpoint_min = get_double("data.setpoint_min");
  p.setpoint_max = get_double("data.setpoint_max");
  p.budget_factor = static_cast<int>(get_int("data.budget_factor"));
  return p;
}

SacTrainConfig ExperimentConfig::sac() const {
  SacTrainConfig c;
  c.agent.hidden = get_ints("sac.hidden");
  c.agent.learning_rate = get_double("sac.learning_rate");
  c.agent.batch_size = static_cast<int>(get_int("sac.batch_size"));
  c.agent.gamma = get_double("mdp.gamma");
  c.agent.tau = get_double("sac.tau");
  c.agent.target_update_period = static_cast<int>(get_int("sac.target_update_period"));
  c.agent.initial_log_alpha = get_double("sac.initial_log_alpha");
  if (get("sac.target_entropy") != "auto") c.agent.target_entropy = get_double("sac.target_entropy");
  c.agent.buffer_capacity = static_cast<std::size_t>(get_int("sac.buffer_capacity"));
  c.step_budget = get_int("sac.step_budget");
  c.episodes_per_step = static_cast<int>(get_int("sac.episodes_per_step"));
  c.warmup_steps = get_int("sac.warmup_steps");
  c.eval_interval = get_int("sac.eval_interval");
  c.eval = eval();
  return c;
}

IlConfig ExperimentConfig::il() const {
  IlConfig c;
  c.hidden = get_ints("il.hidden");
  c.learning_rate = get_double("il.learning_rate");
  c.batch_size = static_cast<int>(get_int("il.batch_size"));
  c.max_epochs = static_cast<int>(get_int("il.max_epochs"));
  return c;
}

EvalConfig ExperimentConfig::eval() const {
  EvalConfig e;
  e.n_episodes = static_cast<int>(get_int("eval.n_episodes"));
  e.t_limit = static_cast<int>(get_int("eval.t_limit"));
  e.l_objective = get_double("eval.l_objective");
  return e;
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  try {
    get_int("seed");
    for (const char* s : kStageNames) stage_seed(s);
    const auto n_cases = get_int("data.n_cases");
    require(n_cases >= 2, "data.n_cases must be >= 2");
    require(get_int("data.n_train") >= 1 && get_int("data.n_test") >= 1, "split sizes must be >= 1");
    require(get_int("data.n_train") + get_int("data.n_test") == n_cases,
            "data.n_train + data.n_test must equal data.n_cases");
    perturbation().validate();
    require(solver().tolerance > 0 && solver().max_iterations >= 1, "bad solver settings");
    MdpConfig mdp;
    mdp.gamma = get_double("mdp.gamma");
    mdp.horizon = static_cast<int>(get_int("mdp.horizon"));
    get_bool("mdp.normalize_state");
    mdp.validate();
    reward().validate();
    const SacTrainConfig s = sac();
    require(s.agent.tau > 0 && s.agent.tau <= 1, "sac.tau must lie in (0, 1]");
    require(s.agent.batch_size >= 1 && s.agent.learning_rate >= 0, "bad SAC optimizer settings");
    require(s.agent.target_update_period >= 1, "sac.target_update_period must be >= 1");
    require(s.agent.buffer_capacity >= static_cast<std::size_t>(s.agent.batch_size),
            "sac.buffer_capacity must hold at least one batch");
    require(s.step_budget >= 1 && s.eval_interval >= 1 && s.episodes_per_step >= 1 && s.warmup_steps >= 0,
            "bad SAC schedule");
    const IlConfig il_cfg = il();
    require(il_cfg.batch_size >= 1 && il_cfg.max_epochs >= 1 && il_cfg.learning_rate >= 0,
            "bad IL settings");
    require(get_int("il.dataset_size") >= il_cfg.batch_size, "il.dataset_size must be >= il.batch_size");
    require(get_int("il.collect_t_limit") >= 1, "il.collect_t_limit must be >= 1");
    const EvalConfig e = eval();
    require(e.n_episodes >= 1 && e.t_limit >= 1, "eval.n_episodes and eval.t_limit must be >= 1");
    require(get_int("report.horizon") >= 1 && get_int("report.trials") >= 1, "bad report settings");
    require(get_int("pca.horizon") >= 1 && get_int("pca.trials") >= 1, "bad pca settings");
    require(get("pca.state") == "raw" || get("pca.state") == "normalized", "pca.state must be raw or normalized");
    splits_of(get("pca.split"));
    for (int s2 : get_ints("sweep.strategies")) parse_strategy(std::to_string(s2));
    get_doubles("sweep.r_plus");
    require(get_int("sweep.seeds") >= 1, "sweep.seeds must be >= 1");
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string with_provenance(const std::string& text, const ExperimentConfig& config) {
  const auto nl = text.find('\n');
  const std::string line = csv_provenance(config);
  if (nl == std::string::npos) return text + "\n" + line;
  return text.substr(0, nl + 1) + line + text.substr(nl + 1);
}

// ---------------------------------------------------------------------------
// Workspace

Workspace Workspace::open(const ExperimentConfig& config, const fs::path& out_dir) {
  Workspace ws;
  ws.config = config;
  ws.out_dir = out_dir;
  fs::create_directories(out_dir);
  ws.network = std::make_shared<const GridNetwork>(load_network(config.network_path()));
  return ws;
}

void Workspace::load_split(const std::string& split) {
  const fs::path manifest_path = out_dir / "manifest.txt";
  if (manifest.train_ids.empty()) {
    if (!fs::exists(manifest_path))
      throw ConfigError(manifest_path.string() + " not found; run `gridvc gen` with the same --out first");
    std::ifstream in(manifest_path);
    manifest = read_manifest(in, manifest_path.string());
    if (manifest.network != config.get("network"))
      throw ConfigError("manifest was generated for network '" + manifest.network + "', config says '" +
                        config.get("network") + "'");
  }
  auto load = [&](const std::string& file, const std::vector<std::string>& ids) {
    const fs::path path = out_dir / file;
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open case file " + path.string());
    std::vector<Case> cases = read_cases(in, path.string());
    std::vector<std::string> got;
    for (const auto& c : cases) got.push_back(c.id);
    if (got != ids) throw ConfigError(path.string() + " does not match the manifest ids");
    prepare_cases(*network, cases, config.solver());
    return cases;
  };
  if (split == "train" && train.empty()) train = load(manifest.train_file, manifest.train_ids);
  if (split == "test" && test.empty()) test = load(manifest.test_file, manifest.test_ids);
}

StateNormalizer Workspace::fit_normalizer() const {
  if (train.empty()) throw std::logic_error("normalizer needs the train split loaded");
  std::vector<StateVec> raw;
  raw.reserve(train.size());
  for (const auto& c : train) raw.push_back(c.initial_state);
  return StateNormalizer::fit(raw, StateLayout::of(*network));
}

RolloutContext Workspace::context() const {
  RolloutContext ctx;
  ctx.network = network;
  ctx.solver = config.solver();
  ctx.reward = config.reward();
  ctx.mdp.gamma = config.get_double("mdp.gamma");
  ctx.mdp.horizon = static_cast<int>(config.get_int("mdp.horizon"));
  ctx.mdp.normalize_state = config.get_bool("mdp.normalize_state");
  if (ctx.mdp.normalize_state) ctx.mdp.normalizer = fit_normalizer();
  return ctx;
}

// ---------------------------------------------------------------------------
// Subcommands

int run_gen(Workspace& ws, std::ostream& log) {
  const auto& cfg = ws.config;
  const int n_cases = static_cast<int>(cfg.get_int("data.n_cases"));
  const int n_train = static_cast<int>(cfg.get_int("data.n_train"));
  const int n_test = static_cast<int>(cfg.get_int("data.n_test"));
  const std::uint64_t gen_seed = cfg.stage_seed("gen");
  GenerateResult gen = generate_cases(*ws.network, n_cases, gen_seed, cfg.perturbation(), cfg.solver());

  JsonlFile metrics(cfg, "gen");
  const int converged = gen.samples - gen.rejected_diverged;
  metrics.add(Json{{"record", "generation"},
                   {"requested", n_cases},
                   {"emitted", gen.cases.size()},
                   {"samples", gen.samples},
                   {"rejected_diverged", gen.rejected_diverged},
                   {"rejected_secure", gen.rejected_secure},
                   {"violating_fraction",
                    converged > 0 ? static_cast<double>(gen.cases.size()) / converged : 0.0},
                   {"complete", gen.complete}});
  if (!gen.complete) {
    metrics.save(ws.out_dir / "gen.jsonl");
    log << "warning: sampling budget exhausted with " << gen.cases.size() << " of " << n_cases
        << " cases\n";
    log << "error: not enough cases for a " << n_train << "/" << n_test << " split\n";
    return 2;
  }

  DatasetManifest m = split_cases(gen.cases, n_train, n_test, cfg.stage_seed("split"));
  m.network = cfg.get("network");
  m.generation_seed = gen_seed;
  m.train_file = "cases_train.txt";
  m.test_file = "cases_test.txt";
  std::vector<std::string> all_ids;
  for (const auto& c : gen.cases) all_ids.push_back(c.id);
  m.validate(all_ids);

  auto save_cases = [&](const std::string& file, const std::vector<std::string>& ids) {
    std::ostringstream s;
    write_cases(s, select_cases(gen.cases, ids));
    write_file(ws.out_dir / file, with_provenance(s.str(), cfg));
  };
  save_cases(m.train_file, m.train_ids);
  save_cases(m.test_file, m.test_ids);
  std::ostringstream ms;
  write_manifest(ms, m);
  write_file(ws.out_dir / "manifest.txt", with_provenance(ms.str(), cfg));
  metrics.add(Json{{"record", "split"}, {"n_train", n_train}, {"n_test", n_test}, {"split_seed", m.split_seed}});
  metrics.save(ws.out_dir / "gen.jsonl");

  ws.manifest = m;
  ws.train.clear();
  ws.test.clear();

  std::ostringstream body;
  body << "cases " << gen.cases.size() << " from " << gen.samples << " samples (" << gen.rejected_diverged
       << " diverged, " << gen.rejected_secure << " without violations)\n"
       << "split train " << n_train << " test " << n_test << "\n";
  finish_summary(ws, "gen", body.str(), log);
  return 0;
}

int run_baseline(Workspace& ws, std::ostream& log) {
  ws.load_split("train");
  ws.load_split("test");
  const RolloutContext ctx = ws.context();
  const int horizon = static_cast<int>(ws.config.get_int("report.horizon"));
  const int trials = static_cast<int>(ws.config.get_int("report.trials"));
  RandomPolicy policy(ws.network->n_plant());

  JsonlFile metrics(ws.config, "baseline");
  std::vector<ReportRow> rows;
  for (const std::string split : {"train", "test"}) {
    Rng rng(derive_seed(ws.config.stage_seed("baseline"), split));
    rows.push_back({split, "random", "stochastic",
                    evaluate_policy(ctx, split == "train" ? ws.train : ws.test, policy, horizon, trials, rng)});
    add_case_records(metrics, rows.back());
    metrics.add(report_record(rows.back()));
  }
  metrics.save(ws.out_dir / "baseline.jsonl");
  write_file(ws.out_dir / "baseline_cases.csv", case_table(ws.config, rows));
  finish_summary(ws, "baseline",
                 "horizon " + std::to_string(horizon) + " trials " + std::to_string(trials) + "\n" +
                     report_summary(rows),
                 log);
  return 0;
}

namespace {

Json curve_record(const LearningCurvePoint& p) {
  return Json{{"record", "eval"},
              {"train_steps", p.train_steps},
              {"env_steps", p.env_steps},
              {"episodes", p.episodes},
              {"eval_length", p.eval_length},
              {"critic1_loss", p.losses.critic1},
              {"critic2_loss", p.losses.critic2},
              {"policy_loss", p.losses.policy},
              {"alpha", p.losses.alpha},
              {"mean_log_prob", p.losses.mean_log_prob}};
}

Json outcome_record(const SacTrainResult& r, const RewardConfig& reward, std::uint64_t seed) {
  return Json{{"record", "outcome"},
              {"strategy", strategy_number(reward.strategy)},
              {"r_plus", reward.r_plus},
              {"seed", seed},
              {"reached_objective", r.reached_objective},
              {"train_steps_to_objective", r.train_steps_to_objective},
              {"env_steps_to_objective", r.env_steps_to_objective},
              {"episodes_to_objective", r.episodes_to_objective},
              {"train_steps", r.train_steps},
              {"env_steps", r.env_steps},
              {"episodes", r.episodes},
              {"final_eval_length", r.curve.empty() ? 0.0 : r.curve.back().eval_length}};
}

std::string outcome_text(const SacTrainResult& r) {
  if (!r.reached_objective) return "fail to converge";
  return std::to_string(r.train_steps_to_objective) + " train steps";
}

}  // namespace

int run_train_sac(Workspace& ws, std::ostream& log) {
  ws.load_split("train");
  ws.load_split("test");
  const RolloutContext ctx = ws.context();
  const SacTrainConfig cfg = ws.config.sac();
  const std::uint64_t seed = ws.config.stage_seed("sac");
  JsonlFile metrics(ws.config, "train-sac");
  const SacTrainResult r = sac_train(ctx, ws.train, ws.test, cfg, seed, [&](const LearningCurvePoint& p) {
    metrics.add(curve_record(p));
    log << "  step " << p.train_steps << " env " << p.env_steps << " eval_length "
        << format_fixed(p.eval_length, 3) << "\n";
  });
  metrics.add(outcome_record(r, ctx.reward, seed));
  metrics.save(ws.out_dir / "sac_curve.jsonl");
  std::ostringstream ck;
  r.agent->save(ck);
  write_file(ws.out_dir / "sac.ckpt", with_provenance(ck.str(), ws.config));

  std::ostringstream body;
  body << "strategy " << strategy_number(ctx.reward.strategy) << " r_plus " << format_double(ctx.reward.r_plus)
       << " gamma " << format_double(cfg.agent.gamma) << "\n"
       << "outcome " << outcome_text(r) << " (budget " << cfg.step_budget << " train steps, "
       << r.env_steps << " env steps)\n";
  finish_summary(ws, "train-sac", body.str(), log);
  return 0;
}

int run_train_il(Workspace& ws, std::ostream& log) {
  ws.load_split("train");
  ws.load_split("test");
  const RolloutContext ctx = ws.context();
  const auto& cfg = ws.config;

  std::unique_ptr<Policy> collector;
  std::unique_ptr<SacAgent> sac_agent;
  const std::string& collect_name = cfg.get("il.collect_policy");
  if (collect_name == "random") {
    collector = std::make_unique<RandomPolicy>(ws.network->n_plant());
  } else {
    std::ifstream in(collect_name);
    if (!in) throw ConfigError("cannot open collect policy checkpoint " + collect_name);
    sac_agent = std::make_unique<SacAgent>(SacAgent::load(in, collect_name));
    if (!(sac_agent->normalizer == ctx.mdp.normalizer))
      throw ConfigError("collect policy was trained with a different state normalizer");
    collector = std::make_unique<SacPolicy>(*sac_agent, ActMode::stochastic);
  }

  const std::uint64_t collect_seed = cfg.stage_seed("collect");
  Rng collect_rng(collect_seed);
  CollectResult col = collect_successful_steps(ctx, ws.train, *collector,
                                               static_cast<std::size_t>(cfg.get_int("il.dataset_size")),
                                               static_cast<int>(cfg.get_int("il.collect_t_limit")), collect_rng);
  col.dataset.seed = collect_seed;
  const std::size_t failures = verify_dataset(ctx, ws.train, col.dataset);
  std::ostringstream ds;
  write_dataset(ds, col.dataset);
  write_file(ws.out_dir / "dataset.txt", with_provenance(ds.str(), cfg));
  if (!col.complete)
    log << "warning: collection attempt cap reached with " << col.dataset.size() << " pairs\n";

  JsonlFile metrics(cfg, "train-il");
  metrics.add(Json{{"record", "dataset"},
                   {"collect_policy", col.dataset.collect_policy},
                   {"size", col.dataset.size()},
                   {"episodes", col.episodes},
                   {"complete", col.complete},
                   {"replay_failures", failures}});
  if (col.dataset.size() < static_cast<std::size_t>(cfg.il().batch_size)) {
    metrics.save(ws.out_dir / "il_history.jsonl");
    log << "error: dataset smaller than one batch\n";
    return 2;
  }

  const EvalConfig eval = cfg.eval();
  IlTrainResult r = il_train(ctx, col.dataset, ws.test, cfg.il(), eval, cfg.stage_seed("il"));
  for (const auto& h : r.history)
    metrics.add(Json{{"record", "epoch"}, {"epoch", h.epoch}, {"train_mse", h.train_mse}, {"eval_length", h.eval_length}});

  // Per-case greedy check against random-policy solvability of the test cases.
  const std::vector<bool> solvable =
      label_solvability(ctx, ws.test, static_cast<int>(cfg.get_int("report.horizon")),
                        static_cast<int>(cfg.get_int("report.trials")), cfg.stage_seed("eval"));
  Rng eval_rng(derive_seed(cfg.stage_seed("eval"), "il-test"));
  const PolicyReport rep = evaluate_policy(ctx, ws.test, *r.agent, eval.t_limit, 1, eval_rng);
  int n_solvable = 0, one_step = 0;
  for (std::size_t i = 0; i < solvable.size(); ++i) {
    if (!solvable[i]) continue;
    ++n_solvable;
    if (rep.cases[i].solved_trials > 0 && rep.cases[i].mean_steps == 1.0) ++one_step;
  }
  const double final_length = r.history.back().eval_length;
  const double one_step_fraction = n_solvable > 0 ? static_cast<double>(one_step) / n_solvable : 0.0;
  metrics.add(Json{{"record", "outcome"},
                   {"epochs", r.epochs},
                   {"reached_objective", r.reached_objective},
                   {"final_eval_length", final_length},
                   {"solvable_test_cases", n_solvable},
                   {"one_step_solved", one_step},
                   {"one_step_fraction", one_step_fraction},
                   {"greedy_unsolved", rep.unsolvable_count}});
  metrics.save(ws.out_dir / "il_history.jsonl");
  std::ostringstream ck;
  r.agent->save(ck);
  write_file(ws.out_dir / "il.ckpt", with_provenance(ck.str(), cfg));

  std::ostringstream body;
  body << "dataset " << col.dataset.size() << " pairs from " << col.episodes << " episodes, replay failures "
       << failures << "\n"
       << "epochs " << r.epochs << (r.reached_objective ? " (objective reached)" : " (epoch cap)")
       << ", final eval length " << format_fixed(final_length, 3) << "\n"
       << "one-step solves " << one_step << "/" << n_solvable << " solvable test cases\n";
  finish_summary(ws, "train-il", body.str(), log);
  return 0;
}

int run_eval(Workspace& ws, const CommandOptions& options, std::ostream& log) {
  std::string ckpt = options.checkpoint;
  if (ckpt.empty()) throw ConfigError("eval needs --checkpoint <path|random>");
  const std::vector<std::string> splits = splits_of(options.split);

  std::unique_ptr<SacAgent> sac_agent;
  std::unique_ptr<IlAgent> il_agent;
  std::string policy_name = "random";
  std::optional<StateNormalizer> normalizer;
  if (ckpt != "random") {
    const std::string text = read_file(ckpt);
    std::istringstream in(text);
    if (text.rfind("# gridvc-sac", 0) == 0) {
      sac_agent = std::make_unique<SacAgent>(SacAgent::load(in, ckpt));
      normalizer = sac_agent->normalizer;
      policy_name = "sac";
    } else if (text.rfind("# gridvc-il", 0) == 0) {
      il_agent = std::make_unique<IlAgent>(IlAgent::load(in, ckpt));
      normalizer = il_agent->normalizer;
      policy_name = "imitation";
    } else {
      throw ConfigError(ckpt + " is not a gridvc checkpoint");
    }
  }

  const int horizon = static_cast<int>(ws.config.get_int("report.horizon"));
  const int trials = static_cast<int>(ws.config.get_int("report.trials"));
  JsonlFile metrics(ws.config, "eval");
  metrics.add(Json{{"record", "checkpoint"}, {"policy", policy_name}, {"horizon", horizon}, {"trials", trials}});
  std::vector<ReportRow> rows;
  for (const auto& split : splits) {
    const std::vector<Case> cases = cases_for(ws, split);
    RolloutContext ctx;
    ctx.network = ws.network;
    ctx.solver = ws.config.solver();
    ctx.reward = ws.config.reward();
    ctx.mdp.gamma = ws.config.get_double("mdp.gamma");
    if (normalizer) {
      ctx.mdp.normalize_state = true;
      ctx.mdp.normalizer = *normalizer;
    }
    std::vector<std::pair<std::string, Policy*>> modes;
    RandomPolicy random_policy(ws.network->n_plant());
    std::unique_ptr<SacPolicy> stochastic, greedy;
    if (sac_agent) {
      stochastic = std::make_unique<SacPolicy>(*sac_agent, ActMode::stochastic);
      greedy = std::make_unique<SacPolicy>(*sac_agent, ActMode::greedy);
      modes = {{"stochastic", stochastic.get()}, {"greedy", greedy.get()}};
    } else if (il_agent) {
      modes = {{"greedy", il_agent.get()}};
    } else {
      modes = {{"stochastic", &random_policy}};
    }
    for (auto& [mode, policy] : modes) {
      Rng rng(derive_seed(ws.config.stage_seed("eval"), split + "/" + mode));
      rows.push_back({split, policy_name, mode, evaluate_policy(ctx, cases, *policy, horizon, trials, rng)});
      add_case_records(metrics, rows.back());
      metrics.add(report_record(rows.back()));
    }
  }
  std::string contract;
  if (sac_agent) {
    for (const auto& split : splits) {
      const ReportRow *st = nullptr, *gr = nullptr;
      for (const auto& row : rows) {
        if (row.split != split) continue;
        (row.mode == "greedy" ? gr : st) = &row;
      }
      const int st_solved = static_cast<int>(st->report.cases.size()) - st->report.unsolvable_count;
      const int gr_solved = static_cast<int>(gr->report.cases.size()) - gr->report.unsolvable_count;
      const bool holds = st_solved >= gr_solved;
      metrics.add(Json{{"record", "mode_contract"},
                       {"split", split},
                       {"stochastic_solved", st_solved},
                       {"greedy_solved", gr_solved},
                       {"stochastic_at_least_greedy", holds}});
      contract += split + ": stochastic solves " + std::to_string(st_solved) + ", greedy solves " +
                  std::to_string(gr_solved) + "\n";
    }
  }
  const std::string stem = fs::path(ckpt).stem().string();
  metrics.save(ws.out_dir / ("eval_" + stem + ".jsonl"));
  write_file(ws.out_dir / ("eval_" + stem + "_cases.csv"), case_table(ws.config, rows));
  finish_summary(ws, "eval",
                 "checkpoint " + fs::path(ckpt).filename().string() + " horizon " + std::to_string(horizon) +
                     " trials " + std::to_string(trials) + "\n" + report_summary(rows) + contract,
                 log);
  return 0;
}

int run_pca(Workspace& ws, std::ostream& log) {
  const auto& cfg = ws.config;
  ws.load_split("train");
  std::vector<Case> cases;
  for (const auto& split : splits_of(cfg.get("pca.split"))) {
    const auto part = cases_for(ws, split);
    cases.insert(cases.end(), part.begin(), part.end());
  }
  const RolloutContext ctx = ws.context();
  const bool normalized = cfg.get("pca.state") == "normalized";
  const StateLayout layout = StateLayout::of(*ws.network);
  const StateNormalizer norm = normalized ? ws.fit_normalizer() : StateNormalizer{};
  Matrix data(static_cast<Eigen::Index>(cases.size()), layout.size());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    data.row(static_cast<Eigen::Index>(i)) = norm.apply(cases[i].initial_state, layout).transpose();
    ids.push_back(cases[i].id);
  }
  PcaResult result = pca(data);
  result.solvable = label_solvability(ctx, cases, static_cast<int>(cfg.get_int("pca.horizon")),
                                      static_cast<int>(cfg.get_int("pca.trials")), cfg.stage_seed("pca"));
  const auto n_unsolvable = std::count(result.solvable.begin(), result.solvable.end(), false);

  std::ostringstream plot, table;
  write_plot_data(plot, ids, result);
  write_variance_table(table, result);
  write_file(ws.out_dir / "pca_plot.csv", csv_provenance(cfg) + plot.str());
  write_file(ws.out_dir / "pca_variance.csv", csv_provenance(cfg) + table.str());

  JsonlFile metrics(cfg, "pca");
  std::vector<double> top(result.ratios.data(), result.ratios.data() + std::min<Eigen::Index>(5, result.ratios.size()));
  metrics.add(Json{{"record", "pca"},
                   {"n_cases", cases.size()},
                   {"n_features", data.cols()},
                   {"state", normalized ? "normalized" : "raw"},
                   {"preprocessing", "centered, not scaled"},
                   {"unsolvable_count", n_unsolvable},
                   {"top_ratios", top},
                   {"first_two_ratio", result.ratios.head(std::min<Eigen::Index>(2, result.ratios.size())).sum()}});
  metrics.save(ws.out_dir / "pca.jsonl");

  std::ostringstream body;
  body << "cases " << cases.size() << " (" << n_unsolvable << " unsolvable), state "
       << (normalized ? "normalized" : "raw") << ", centered only\n"
       << "explained variance PC1 " << format_fixed(result.ratios[0], 4);
  if (result.ratios.size() > 1) body << " PC2 " << format_fixed(result.ratios[1], 4);
  body << "\n";
  finish_summary(ws, "pca", body.str(), log);
  return 0;
}

int run_sweep(Workspace& ws, std::ostream& log) {
  ws.load_split("train");
  ws.load_split("test");
  const auto& cfg = ws.config;
  const RolloutContext base = ws.context();
  const SacTrainConfig sac_cfg = cfg.sac();
  const auto strategies = cfg.get_ints("sweep.strategies");
  const auto r_values = cfg.get_doubles("sweep.r_plus");
  const int n_seeds = static_cast<int>(cfg.get_int("sweep.seeds"));

  JsonlFile metrics(cfg, "sweep");
  std::string table = csv_provenance(cfg) + "strategy,r_plus,seed_index,seed,outcome,train_steps,env_steps,episodes\n";
  std::ostringstream body;
  for (int strategy : strategies) {
    body << "strategy " << strategy << "\n";
    for (double r_plus : r_values) {
      RolloutContext ctx = base;
      ctx.reward.strategy = parse_strategy(std::to_string(strategy));
      ctx.reward.r_plus = r_plus;
      body << "  r_plus " << std::setw(6) << format_double(r_plus) << ":";
      for (int k = 0; k < n_seeds; ++k) {
        const std::uint64_t seed = derive_seed(cfg.stage_seed("sweep"), "seed-" + std::to_string(k));
        log << "sweep strategy " << strategy << " r_plus " << format_double(r_plus) << " seed " << k << "\n";
        const SacTrainResult r = sac_train(ctx, ws.train, ws.test, sac_cfg, seed);
        Json rec = outcome_record(r, ctx.reward, seed);
        rec["seed_index"] = k;
        metrics.add(rec);
        table += std::to_string(strategy) + "," + format_double(r_plus) + "," + std::to_string(k) + "," +
                 std::to_string(seed) + "," + (r.reached_objective ? "converged" : "fail") + "," +
                 std::to_string(r.train_steps_to_objective) + "," + std::to_string(r.env_steps_to_objective) +
                 "," + std::to_string(r.episodes_to_objective) + "\n";
        body << "  " << (r.reached_objective ? std::to_string(r.train_steps_to_objective) : "fail");
      }
      body << "\n";
    }
  }
  metrics.save(ws.out_dir / "sweep.jsonl");
  write_file(ws.out_dir / "sweep_table.csv", table);
  finish_summary(ws, "sweep",
                 "train steps to objective per seed (budget " + std::to_string(sac_cfg.step_budget) + ")\n" +
                     body.str(),
                 log);
  return 0;
}

int run_command(const std::string& command, const ExperimentConfig& config, const fs::path& out_dir,
                const CommandOptions& options, std::ostream& log) {
  Workspace ws = Workspace::open(config, out_dir);
  if (command == "gen") return run_gen(ws, log);
  if (command == "baseline") return run_baseline(ws, log);
  if (command == "train-sac") return run_train_sac(ws, log);
  if (command == "train-il") return run_train_il(ws, log);
  if (command == "eval") return run_eval(ws, options, log);
  if (command == "pca") return run_pca(ws, log);
  if (command == "sweep") return run_sweep(ws, log);
  throw ConfigError("unknown subcommand '" + command + "'");
}

}  // namespace gridvc
