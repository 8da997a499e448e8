#include <doctest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "gridvc/nn.hpp"
#include "oracles.hpp"

using namespace gridvc;
using testing::rel_error;

namespace {

// Plain-loop forward pass: ReLU hidden layers, linear output.
Matrix loop_forward(const Mlp& net, const Matrix& x) {
  Matrix h = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& L = layers[l];
    Matrix next(L.weight.rows(), h.cols());
    for (Eigen::Index b = 0; b < h.cols(); ++b)
      for (Eigen::Index o = 0; o < L.weight.rows(); ++o) {
        double acc = L.bias[o];
        for (Eigen::Index i = 0; i < L.weight.cols(); ++i) acc += L.weight(o, i) * h(i, b);
        next(o, b) = (l + 1 < layers.size()) ? std::max(acc, 0.0) : acc;
      }
    h = next;
  }
  return h;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  return Matrix::NullaryExpr(r, c, [&] { return standard_normal(rng); });
}

}  // namespace

TEST_CASE("forward pass matches a loop oracle") {
  Rng rng(1);
  const Mlp net({58, 64, 64, 8}, rng);
  const Matrix x = random_matrix(58, 4, rng);
  CHECK((net.forward(x) - loop_forward(net, x)).cwiseAbs().maxCoeff() < 1e-12);
  const Vector v = x.col(2);
  CHECK((net.forward(v) - loop_forward(net, x.col(2))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("glorot initialization bounds and zero biases") {
  Rng rng(2);
  const Mlp net({10, 20, 5}, rng);
  CHECK(net.parameter_count() == 10 * 20 + 20 + 20 * 5 + 5);
  const double limit = std::sqrt(6.0 / 30.0);
  CHECK(net.layers()[0].weight.cwiseAbs().maxCoeff() <= limit);
  CHECK(net.layers()[0].bias.isZero());
  Rng again(2);
  CHECK(Mlp({10, 20, 5}, again) == net);
}

TEST_CASE("parameter gradients match finite differences on every network shape") {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<std::vector<int>> shapes = {
      {58, 64, 64, 8},  // policy
      {62, 64, 64, 1},  // critic
      {58, 64, 64, 4},  // imitation
      {3, 5, 2},
  };
  std::uint64_t seed = 10;
  for (const auto& shape : shapes) {
    const testing::GradCheck g = testing::check_parameter_gradients(shape, seed++, 200);
    CAPTURE(shape.front());
    CAPTURE(shape.back());
    CHECK(g.checked >= 100);
    CHECK(g.worst < 1e-4);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(secs < 30.0);
}

TEST_CASE("input gradients match finite differences") {
  Rng rng(4);
  const Mlp net({62, 64, 64, 1}, rng);
  const Matrix x = random_matrix(62, 2, rng);
  const Matrix w = random_matrix(1, 2, rng);
  Mlp::Cache cache;
  net.forward(x, cache);
  const Matrix gi = net.input_gradient(cache, w);
  Matrix gi2;
  net.backward(cache, w, &gi2);
  CHECK((gi - gi2).cwiseAbs().maxCoeff() < 1e-14);
  const double h = 1e-5;
  double worst = 0;
  for (Eigen::Index b = 0; b < 2; ++b)
    for (Eigen::Index i = 0; i < 62; ++i) {
      Matrix xp = x, xm = x;
      xp(i, b) += h;
      xm(i, b) -= h;
      const double fd = ((net.forward(xp).array() - net.forward(xm).array()) * w.array()).sum() / (2 * h);
      worst = std::max(worst, rel_error(fd, gi(i, b)));
    }
  CHECK(worst < 1e-4);
}

TEST_CASE("squashed gaussian gradients match finite differences") {
  Rng rng(5);
  const int n = 4;
  const Vector mean = random_matrix(n, 1, rng) * 0.5;
  const Vector log_std = random_matrix(n, 1, rng) * 0.3 - Vector::Constant(n, 1.0);
  const Vector noise = random_matrix(n, 1, rng);
  const Vector c = random_matrix(n, 1, rng);
  const double k = 0.7;
  auto loss = [&](const Vector& m, const Vector& ls) {
    const SquashedSample s = gaussian_policy_sample(m, ls, 0.9, 1.1, noise);
    return c.dot(s.action) + k * s.log_prob;
  };
  const SquashedSample s = gaussian_policy_sample(mean, log_std, 0.9, 1.1, noise);
  Vector gm, gs;
  gaussian_policy_backward(s, 0.1, c, k, gm, gs);
  const double h = 1e-6;
  for (int i = 0; i < n; ++i) {
    Vector mp = mean, mm = mean, sp = log_std, sm = log_std;
    mp[i] += h;
    mm[i] -= h;
    sp[i] += h;
    sm[i] -= h;
    CHECK(rel_error((loss(mp, log_std) - loss(mm, log_std)) / (2 * h), gm[i]) < 1e-4);
    CHECK(rel_error((loss(mean, sp) - loss(mean, sm)) / (2 * h), gs[i]) < 1e-4);
  }
}

TEST_CASE("greedy sample is the squashed mean and log_std is clamped") {
  Vector mean(2), log_std(2);
  mean << 0.3, -2.0;
  log_std << 5.0, -30.0;
  const SquashedSample s = gaussian_policy_sample(mean, log_std, 0.9, 1.1, Vector::Zero(2));
  CHECK(s.action[0] == doctest::Approx(1.0 + 0.1 * std::tanh(0.3)).epsilon(1e-15));
  CHECK(s.action[1] == doctest::Approx(1.0 + 0.1 * std::tanh(-2.0)).epsilon(1e-15));
  CHECK(s.std_dev[0] == doctest::Approx(std::exp(kLogStdMax)));
  CHECK(s.std_dev[1] == doctest::Approx(std::exp(kLogStdMin)));
  CHECK(s.log_std_clamped[0]);
  CHECK(s.log_std_clamped[1]);
}

TEST_CASE("squashed density integrates to one over the setpoint box") {
  const double m = 0.3, ls = -0.5, sigma = std::exp(ls);
  const double mid = 1.0, half = 0.1;
  const int n = 200000;
  double total = 0.0;
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    // Midpoint rule over (0.9, 1.1).
    const double a = 0.9 + (k + 0.5) * (0.2 / n);
    const double u = std::atanh((a - mid) / half);
    const double eps = (u - m) / sigma;
    Vector noise(1);
    noise << eps;
    const SquashedSample s =
        gaussian_policy_sample(Vector::Constant(1, m), Vector::Constant(1, ls), 0.9, 1.1, noise);
    const double y = std::tanh(u);
    const double oracle = std::exp(-0.5 * eps * eps) / (sigma * std::sqrt(2 * std::numbers::pi)) /
                          (half * (1 - y * y));
    if (oracle > 1e-3) worst = std::max(worst, std::abs(std::exp(s.log_prob) - oracle) / oracle);
    total += std::exp(s.log_prob) * (0.2 / n);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(worst < 1e-9);
}

TEST_CASE("log(1 - tanh^2) is stable") {
  for (double u : {0.0, 0.5, -3.0, 10.0, -25.0})
    CHECK(log1m_tanh_sq(u) == doctest::Approx(-2.0 * std::log(std::cosh(u))).epsilon(1e-12));
  CHECK(log1m_tanh_sq(400.0) == doctest::Approx(2 * (std::numbers::ln2 - 400.0)));
  CHECK(std::isfinite(log1m_tanh_sq(-1e6)));
}

TEST_CASE("adam step matches the hand formula") {
  double p[2] = {1.0, 2.0};
  double g[2] = {0.5, -3.0};
  AdamState st;
  st.config.learning_rate = 0.01;
  adam_step(st, {ParamView{p, 2}}, {ParamView{g, 2}});
  // Step 1 with bias correction: m_hat = g, v_hat = g^2.
  CHECK(p[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(2.0 + 0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-15));

  // Step 2 with a new gradient.
  const double g2 = 1.5;
  g[0] = g2;
  const double before = p[0];
  adam_step(st, {ParamView{p, 2}}, {ParamView{g, 2}});
  const double m = 0.9 * (0.1 * 0.5) + 0.1 * g2;
  const double v = 0.999 * (0.001 * 0.25) + 0.001 * g2 * g2;
  const double mh = m / (1 - 0.9 * 0.9), vh = v / (1 - 0.999 * 0.999);
  CHECK(p[0] == doctest::Approx(before - 0.01 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
  CHECK(st.step == 2);
}

TEST_CASE("adam with zero learning rate leaves parameters unchanged") {
  Rng rng(6);
  Mlp net({4, 8, 2}, rng);
  const Mlp before = net;
  Mlp::Cache cache;
  net.forward(random_matrix(4, 5, rng), cache);
  MlpGradients g = net.backward(cache, random_matrix(2, 5, rng));
  AdamState st;
  st.config.learning_rate = 0.0;
  for (int i = 0; i < 3; ++i) adam_step(st, net, g);
  CHECK(net == before);
}

TEST_CASE("soft update interpolates") {
  Rng rng(7);
  const Mlp a({3, 4, 1}, rng);
  Mlp b({3, 4, 1}, rng);
  const Mlp b0 = b;
  b.soft_update_from(a, 0.25);
  CHECK((b.layers()[0].weight - (0.25 * a.layers()[0].weight + 0.75 * b0.layers()[0].weight))
            .cwiseAbs()
            .maxCoeff() < 1e-15);
  b.soft_update_from(a, 1.0);
  CHECK(b == a);
}

TEST_CASE("networks round-trip through a record stream exactly") {
  Rng rng(8);
  const Mlp net({58, 64, 64, 8}, rng);
  std::stringstream buf;
  buf << "# test-net v1\n";
  write_mlp(buf, "policy", net);
  const RecordFile file = parse_records(buf, "buf");
  CHECK(read_mlp(file, "policy") == net);
  CHECK_THROWS_AS(read_mlp(file, "critic"), FormatError);
}

TEST_CASE("backward rejects a foreign cache") {
  Rng rng(9);
  const Mlp a({3, 4, 1}, rng);
  const Mlp b({5, 4, 1}, rng);
  Mlp::Cache cache;
  a.forward(random_matrix(3, 1, rng), cache);
  CHECK_THROWS(b.backward(cache, Matrix::Ones(1, 1)));
}
