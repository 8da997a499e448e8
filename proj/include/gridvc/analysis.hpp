#pragma once

// Solvability labels and principal component analysis of initial states.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridvc/agents.hpp"

namespace gridvc {

// A case is solvable iff some random-policy trial reaches a terminal state
// within horizon steps. Each case draws from its own seed stream, so labels
// do not depend on case order.
std::vector<bool> label_solvability(const RolloutContext& ctx, const std::vector<Case>& cases,
                                    int horizon = 1000, int trials = 3, std::uint64_t seed = 0);

struct PcaResult {
  // Rows are principal axes, orthonormal, sorted by eigenvalue.
  Matrix components;
  Vector eigenvalues;
  // Explained-variance ratios; sum to one unless the data has zero variance.
  Vector ratios;
  Vector mean;
  // Rows are samples; first min(2, n_features) components.
  Matrix projections;
  std::vector<bool> solvable;
};

// Rows of `data` are samples. Columns are centered, not scaled.
PcaResult pca(const Matrix& data);

// Coordinates of each row of `data` along the first k components.
Matrix project(const PcaResult& result, const Matrix& data, int k);

// case_id,pc1,pc2,label with label in {solvable, unsolvable}.
void write_plot_data(std::ostream& out, const std::vector<std::string>& case_ids,
                     const PcaResult& result);
// component,eigenvalue,ratio,cumulative
void write_variance_table(std::ostream& out, const PcaResult& result);

}  // namespace gridvc
