#include "gridvc/analysis.hpp"

#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "gridvc/records.hpp"

namespace gridvc {

std::vector<bool> label_solvability(const RolloutContext& ctx, const std::vector<Case>& cases,
                                    int horizon, int trials, std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  MdpConfig mdp = ctx.mdp;
  mdp.horizon = horizon;
  VoltageControlEnv env(ctx.network, mdp, ctx.solver);
  std::vector<bool> labels;
  labels.reserve(cases.size());
  for (const Case& c : cases) {
    Rng rng(derive_seed(seed, c.id));
    bool solved = false;
    for (int t = 0; t < trials && !solved; ++t) {
      env.reset(c);
      while (true) {
        const StepResult r = env.step(random_action(rng, env.action_dim()), ctx.reward);
        if (r.done_reason == DoneReason::solved) solved = true;
        if (r.done) break;
      }
    }
    labels.push_back(solved);
  }
  return labels;
}

PcaResult pca(const Matrix& data) {
  if (data.rows() < 2) throw std::invalid_argument("pca needs at least two samples");
  if (data.cols() < 1) throw std::invalid_argument("pca needs at least one feature");
  const Eigen::Index d = data.cols();
  PcaResult out;
  out.mean = data.colwise().mean().transpose();
  const Matrix centered = data.rowwise() - out.mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(data.rows() - 1);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("covariance eigendecomposition failed");
  out.eigenvalues.resize(d);
  out.components.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    out.eigenvalues[i] = std::max(0.0, eig.eigenvalues()[d - 1 - i]);
    out.components.row(i) = eig.eigenvectors().col(d - 1 - i).transpose();
  }
  const double total = out.eigenvalues.sum();
  out.ratios = total > 0 ? Vector(out.eigenvalues / total) : Vector(Vector::Zero(d));
  out.projections = centered * out.components.topRows(std::min<Eigen::Index>(2, d)).transpose();
  return out;
}

Matrix project(const PcaResult& result, const Matrix& data, int k) {
  if (k < 0 || k > result.components.rows()) throw std::invalid_argument("bad component count");
  if (data.cols() != result.mean.size()) throw std::invalid_argument("data has the wrong width");
  return (data.rowwise() - result.mean.transpose()) * result.components.topRows(k).transpose();
}

void write_plot_data(std::ostream& out, const std::vector<std::string>& case_ids,
                     const PcaResult& result) {
  const Eigen::Index n = result.projections.rows();
  if (static_cast<Eigen::Index>(case_ids.size()) != n || static_cast<Eigen::Index>(result.solvable.size()) != n)
    throw std::invalid_argument("plot data needs one id and one label per projected case");
  out << "case_id,pc1,pc2,label\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pc2 = result.projections.cols() > 1 ? result.projections(i, 1) : 0.0;
    out << case_ids[i] << ',' << format_double(result.projections(i, 0)) << ',' << format_double(pc2)
        << ',' << (result.solvable[i] ? "solvable" : "unsolvable") << '\n';
  }
}

void write_variance_table(std::ostream& out, const PcaResult& result) {
  out << "component,eigenvalue,ratio,cumulative\n";
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < result.ratios.size(); ++i) {
    cumulative += result.ratios[i];
    out << i + 1 << ',' << format_double(result.eigenvalues[i]) << ',' << format_double(result.ratios[i])
        << ',' << format_double(cumulative) << '\n';
  }
}

}  // namespace gridvc
