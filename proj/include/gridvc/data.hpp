#pragma once

// Synthetic operating cases, train/test split and their file formats.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridvc/env.hpp"

namespace gridvc {

struct PerturbationConfig {
  // Per-bus multiplier applied to both active and reactive load.
  double load_min = 0.7;
  double load_max = 1.4;
  double setpoint_min = 0.92;
  double setpoint_max = 1.08;
  // Sampling budget is budget_factor * n draws.
  int budget_factor = 20;

  void validate() const;
};

struct GenerateResult {
  std::vector<Case> cases;
  int samples = 0;
  int rejected_diverged = 0;
  int rejected_secure = 0;
  // False when the budget ran out before n cases.
  bool complete = true;
};

// Keeps a sample iff its power flow converges and it has a violation. Cases
// come back prepared (initial_state filled).
GenerateResult generate_cases(const GridNetwork& network, int n, std::uint64_t seed,
                              const PerturbationConfig& perturbation = {},
                              const PowerFlowOptions& solver = {});

struct DatasetManifest {
  std::string network;
  std::string train_file;
  std::string test_file;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t generation_seed = 0;
  std::uint64_t split_seed = 0;

  // Throws unless train and test are disjoint and cover exactly `all_ids`.
  void validate(const std::vector<std::string>& all_ids) const;
};

// Uniform random partition; n_train + n_test must equal cases.size().
DatasetManifest split_cases(const std::vector<Case>& cases, int n_train, int n_test,
                            std::uint64_t seed);

// Cases with the given ids, in id-list order. Throws on an unknown id.
std::vector<Case> select_cases(const std::vector<Case>& cases, const std::vector<std::string>& ids);

std::string case_id(int index);

void write_cases(std::ostream& out, const std::vector<Case>& cases);
// Reads loads and setpoints; initial states are left empty (see prepare_case).
std::vector<Case> read_cases(std::istream& in, const std::string& source_name);
void prepare_cases(const GridNetwork& network, std::vector<Case>& cases,
                   const PowerFlowOptions& solver = {});

void write_manifest(std::ostream& out, const DatasetManifest& manifest);
DatasetManifest read_manifest(std::istream& in, const std::string& source_name);

}  // namespace gridvc
