#include "gridvc/data.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "gridvc/random.hpp"
#include "gridvc/records.hpp"

namespace gridvc {

namespace {

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_ids(std::ostream& out, const char* set, const std::vector<std::string>& ids) {
  for (const auto& id : ids) out << "id=" << id << " set=" << set << "\n";
}

}  // namespace

void PerturbationConfig::validate() const {
  if (!(load_min > 0 && load_min <= load_max)) throw std::invalid_argument("bad load multiplier range");
  if (!(setpoint_min >= kSetpointMin && setpoint_min <= setpoint_max && setpoint_max <= kSetpointMax))
    throw std::invalid_argument("setpoint range must lie within [0.9, 1.1]");
  if (budget_factor < 1) throw std::invalid_argument("budget_factor must be >= 1");
}

std::string case_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "c%05d", index);
  return buf;
}

GenerateResult generate_cases(const GridNetwork& network, int n, std::uint64_t seed,
                              const PerturbationConfig& perturbation,
                              const PowerFlowOptions& solver) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  perturbation.validate();
  Rng rng(seed);
  GenerateResult result;
  const long long budget = static_cast<long long>(perturbation.budget_factor) * n;
  while (static_cast<int>(result.cases.size()) < n) {
    if (result.samples >= budget) {
      result.complete = false;
      break;
    }
    ++result.samples;
    Case c;
    c.p_load.resize(network.n_bus());
    c.q_load.resize(network.n_bus());
    for (int i = 0; i < network.n_bus(); ++i) {
      const double m = uniform(rng, perturbation.load_min, perturbation.load_max);
      c.p_load[i] = m * network.buses[i].p_load;
      c.q_load[i] = m * network.buses[i].q_load;
    }
    c.setpoints.resize(network.n_plant());
    for (int k = 0; k < network.n_plant(); ++k)
      c.setpoints[k] = uniform(rng, perturbation.setpoint_min, perturbation.setpoint_max);

    const GridNetwork net = network_for_case(network, c);
    const PowerFlowSolution sol = solve_power_flow(net, c.setpoints, solver);
    if (!sol.converged) {
      ++result.rejected_diverged;
      continue;
    }
    if (is_terminal(sol, net)) {
      ++result.rejected_secure;
      continue;
    }
    c.id = case_id(static_cast<int>(result.cases.size()));
    c.initial_state = raw_state_vector(sol);
    result.cases.push_back(std::move(c));
  }
  return result;
}

void DatasetManifest::validate(const std::vector<std::string>& all_ids) const {
  std::set<std::string> train(train_ids.begin(), train_ids.end());
  std::set<std::string> test(test_ids.begin(), test_ids.end());
  if (train.size() != train_ids.size() || test.size() != test_ids.size())
    throw std::invalid_argument("manifest lists a case twice within one split");
  for (const auto& id : test)
    if (train.count(id)) throw std::invalid_argument("case " + id + " is in both train and test");
  std::set<std::string> all(all_ids.begin(), all_ids.end());
  if (all.size() != train.size() + test.size())
    throw std::invalid_argument("manifest splits do not cover the case set");
  for (const auto& id : all)
    if (!train.count(id) && !test.count(id))
      throw std::invalid_argument("case " + id + " is in neither split");
}

DatasetManifest split_cases(const std::vector<Case>& cases, int n_train, int n_test,
                            std::uint64_t seed) {
  if (n_train < 0 || n_test < 0 || static_cast<std::size_t>(n_train + n_test) != cases.size())
    throw std::invalid_argument("split sizes " + std::to_string(n_train) + " + " +
                                std::to_string(n_test) + " do not match " +
                                std::to_string(cases.size()) + " cases");
  std::vector<std::size_t> order(cases.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  DatasetManifest m;
  m.split_seed = seed;
  for (int i = 0; i < n_train; ++i) m.train_ids.push_back(cases[order[i]].id);
  for (int i = n_train; i < n_train + n_test; ++i) m.test_ids.push_back(cases[order[i]].id);
  std::sort(m.train_ids.begin(), m.train_ids.end());
  std::sort(m.test_ids.begin(), m.test_ids.end());
  return m;
}

std::vector<Case> select_cases(const std::vector<Case>& cases, const std::vector<std::string>& ids) {
  std::vector<Case> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = std::find_if(cases.begin(), cases.end(), [&](const Case& c) { return c.id == id; });
    if (it == cases.end()) throw std::invalid_argument("unknown case id " + id);
    out.push_back(*it);
  }
  return out;
}

void write_cases(std::ostream& out, const std::vector<Case>& cases) {
  out << "# gridvc-cases v1\n[cases]\ncount=" << cases.size() << "\n[case]\n";
  for (const Case& c : cases) {
    out << "id=" << c.id << " p_load=" << format_hex_list(c.p_load.data(), c.p_load.size())
        << " q_load=" << format_hex_list(c.q_load.data(), c.q_load.size())
        << " setpoints=" << format_hex_list(c.setpoints.data(), c.setpoints.size()) << "\n";
  }
}

std::vector<Case> read_cases(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  require_header(file, "gridvc-cases", 1, source_name);
  const auto count = static_cast<std::size_t>(file.single("cases").get_int("count"));
  std::vector<Case> cases;
  std::set<std::string> seen;
  for (const Record* r : file.section("case")) {
    Case c;
    c.id = r->get("id");
    if (!seen.insert(c.id).second) throw FormatError(source_name + ": duplicate case id " + c.id);
    c.p_load = to_vector(r->get_doubles("p_load"));
    c.q_load = to_vector(r->get_doubles("q_load"));
    c.setpoints = to_vector(r->get_doubles("setpoints"));
    if (c.p_load.size() != c.q_load.size())
      throw FormatError(source_name + ":" + std::to_string(r->line) + ": load vectors differ in size");
    cases.push_back(std::move(c));
  }
  if (cases.size() != count)
    throw FormatError(source_name + ": header says " + std::to_string(count) + " cases, found " +
                      std::to_string(cases.size()));
  return cases;
}

void prepare_cases(const GridNetwork& network, std::vector<Case>& cases,
                   const PowerFlowOptions& solver) {
  for (Case& c : cases) prepare_case(network, c, solver);
}

void write_manifest(std::ostream& out, const DatasetManifest& m) {
  out << "# gridvc-manifest v1\n[manifest]\n";
  out << "network=" << m.network << " train_file=" << m.train_file << " test_file=" << m.test_file
      << " generation_seed=" << m.generation_seed << " split_seed=" << m.split_seed
      << " n_train=" << m.train_ids.size() << " n_test=" << m.test_ids.size() << "\n[split]\n";
  write_ids(out, "train", m.train_ids);
  write_ids(out, "test", m.test_ids);
}

DatasetManifest read_manifest(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  require_header(file, "gridvc-manifest", 1, source_name);
  const Record& h = file.single("manifest");
  DatasetManifest m;
  m.network = h.get("network");
  m.train_file = h.get("train_file");
  m.test_file = h.get("test_file");
  m.generation_seed = std::stoull(h.get("generation_seed"));
  m.split_seed = std::stoull(h.get("split_seed"));
  for (const Record* r : file.section("split")) {
    const std::string& set = r->get("set");
    if (set == "train") {
      m.train_ids.push_back(r->get("id"));
    } else if (set == "test") {
      m.test_ids.push_back(r->get("id"));
    } else {
      throw FormatError(source_name + ":" + std::to_string(r->line) + ": unknown split '" + set + "'");
    }
  }
  if (m.train_ids.size() != static_cast<std::size_t>(h.get_int("n_train")) ||
      m.test_ids.size() != static_cast<std::size_t>(h.get_int("n_test")))
    throw FormatError(source_name + ": split sizes disagree with the header");
  return m;
}

}  // namespace gridvc
