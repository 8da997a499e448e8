#include <doctest.h>

#include <chrono>
#include <sstream>

#include "gridvc/analysis.hpp"
#include "helpers.hpp"

using namespace gridvc;

namespace {

Matrix gaussian_cloud(int n, int d, Rng& rng) {
  return Matrix::NullaryExpr(n, d, [&] { return standard_normal(rng); });
}

Matrix covariance(const Matrix& data) {
  const Matrix centered = data.rowwise() - data.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(data.rows() - 1);
}

}  // namespace

TEST_CASE("points on a line put all variance on one component") {
  Rng rng(1);
  Vector dir(5);
  dir << 1, -2, 0.5, 3, 1;
  dir.normalize();
  Matrix data(200, 5);
  for (int i = 0; i < 200; ++i) data.row(i) = (standard_normal(rng) * dir).transpose() + Vector::Ones(5).transpose();
  const PcaResult r = pca(data);
  CHECK(r.ratios[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(std::abs(r.components.row(0).dot(dir)) - 1.0) < 1e-10);
}

TEST_CASE("isotropic cloud splits variance evenly") {
  Rng rng(2);
  const PcaResult r = pca(gaussian_cloud(10000, 2, rng));
  CHECK(std::abs(r.ratios[0] - 0.5) <= 0.02);
  CHECK(std::abs(r.ratios[1] - 0.5) <= 0.02);
}

TEST_CASE("components are orthonormal eigenvectors with normalized ratios") {
  Rng rng(3);
  Matrix data = gaussian_cloud(500, 6, rng);
  data.col(1) = 3 * data.col(1) + data.col(0);
  data.col(4) *= 0.1;
  const PcaResult r = pca(data);
  const Eigen::Index d = r.components.rows();
  CHECK((r.components * r.components.transpose() - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(r.ratios.sum() == doctest::Approx(1.0).epsilon(1e-12));
  for (Eigen::Index k = 1; k < d; ++k) CHECK(r.eigenvalues[k] <= r.eigenvalues[k - 1]);
  CHECK(r.eigenvalues.minCoeff() >= -1e-12);
  const Matrix c = covariance(data);
  for (Eigen::Index k = 0; k < d; ++k) {
    const Vector v = r.components.row(k).transpose();
    CHECK((c * v - r.eigenvalues[k] * v).norm() <= 1e-9 * c.norm());
  }
  CHECK((r.mean - data.colwise().mean().transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("full projection reconstructs the data") {
  Rng rng(4);
  const Matrix data = gaussian_cloud(100, 7, rng) * 5.0;
  const PcaResult r = pca(data);
  const Matrix z = project(r, data, 7);
  const Matrix back = (z * r.components).rowwise() + r.mean.transpose();
  CHECK((back - data).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((r.projections - z.leftCols(2)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS(project(r, data, 8));
}

TEST_CASE("zero-variance data does not produce NaN ratios") {
  const Matrix data = Matrix::Constant(10, 3, 2.0);
  const PcaResult r = pca(data);
  CHECK(r.ratios.allFinite());
}

TEST_CASE("solvability labels are reproducible and order independent") {
  const auto start = std::chrono::steady_clock::now();
  const RolloutContext ctx = testing::desk_context();
  std::vector<Case> cases(testing::desk_cases().begin(), testing::desk_cases().begin() + 12);
  const auto a = label_solvability(ctx, cases, 200, 2, 42);
  const auto b = label_solvability(ctx, cases, 200, 2, 42);
  CHECK(a == b);
  std::vector<Case> reversed(cases.rbegin(), cases.rend());
  auto c = label_solvability(ctx, reversed, 200, 2, 42);
  std::reverse(c.begin(), c.end());
  CHECK(a == c);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() < 60.0);
}

TEST_CASE("labels follow the policy outcome") {
  const RolloutContext ctx = testing::desk_context();
  const auto& cases = testing::desk_cases();
  // One step from a random policy rarely solves; many steps usually do.
  const auto lots = label_solvability(ctx, {cases.begin(), cases.begin() + 10}, 1000, 3, 1);
  CHECK(std::count(lots.begin(), lots.end(), true) >= 9);
  CHECK_THROWS(label_solvability(ctx, cases, 0, 3, 1));
  CHECK_THROWS(label_solvability(ctx, cases, 10, 0, 1));
}

TEST_CASE("plot and variance tables") {
  Rng rng(5);
  PcaResult r = pca(gaussian_cloud(3, 4, rng));
  r.solvable = {true, false, true};
  std::ostringstream plot, table;
  write_plot_data(plot, {"a", "b", "c"}, r);
  write_variance_table(table, r);
  std::istringstream lines(plot.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "case_id,pc1,pc2,label");
  std::getline(lines, line);
  CHECK(line.rfind("a,", 0) == 0);
  CHECK(line.find(",solvable") != std::string::npos);
  std::getline(lines, line);
  CHECK(line.find(",unsolvable") != std::string::npos);
  CHECK(table.str().rfind("component,eigenvalue,ratio,cumulative\n", 0) == 0);
}
