#pragma once

// Dense ReLU networks with hand-written reverse-mode gradients, Adam, and the
// tanh-squashed Gaussian used by the stochastic policies.
//
// Batches are stored column-wise: an input matrix is (features x batch).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridvc/random.hpp"
#include "gridvc/records.hpp"

namespace gridvc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out
};

// Flat view over one parameter tensor.
struct ParamView {
  double* data;
  Eigen::Index size;
};

struct MlpGradients {
  std::vector<DenseLayer> layers;

  std::vector<ParamView> views();
  MlpGradients& operator+=(const MlpGradients& other);
};

class Mlp {
 public:
  struct Cache {
    // Input to each layer; inputs[0] is the network input.
    std::vector<Matrix> inputs;
    // Pre-activation of each hidden layer.
    std::vector<Matrix> pre;
    bool empty() const { return inputs.empty(); }
  };

  Mlp() = default;
  // widths = {input, hidden..., output}; Glorot-uniform weights, zero biases.
  Mlp(std::vector<int> widths, Rng& rng);
  static Mlp zeros(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  int input_size() const { return widths_.front(); }
  int output_size() const { return widths_.back(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  Matrix forward(const Matrix& input) const;
  Matrix forward(const Matrix& input, Cache& cache) const;
  Vector forward(const Vector& input) const;

  // Gradients of a scalar loss given dLoss/dOutput. Optionally returns
  // dLoss/dInput. Throws if the cache does not come from a forward pass of a
  // network with this shape.
  MlpGradients backward(const Cache& cache, const Matrix& output_grad,
                        Matrix* input_grad = nullptr) const;

  // dLoss/dInput only; skips the parameter gradients.
  Matrix input_gradient(const Cache& cache, const Matrix& output_grad) const;

  MlpGradients zero_gradients() const;
  std::vector<ParamView> views();
  std::size_t parameter_count() const;
  bool all_finite() const;

  // this <- tau * online + (1 - tau) * this
  void soft_update_from(const Mlp& online, double tau);

  bool operator==(const Mlp& other) const;

 private:
  bool matches(const Cache& cache) const;

  std::vector<int> widths_;
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::int64_t step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
};

// Bias-corrected Adam. Moment accumulators are sized on first use and must
// keep mirroring the parameter list afterwards.
void adam_step(AdamState& state, const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads);
void adam_step(AdamState& state, Mlp& net, MlpGradients& grads);

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;

struct SquashedSample {
  Vector action;
  // Log density of `action` under the squashed, box-mapped distribution.
  double log_prob = 0.0;
  Vector pre_tanh;
  Vector squashed;  // tanh(pre_tanh), in (-1, 1)
  Vector std_dev;
  Vector noise;
  std::vector<bool> log_std_clamped;
};

// Reparameterized sample a = mid + half * tanh(mean + exp(log_std) * noise),
// with mid/half mapping (-1, 1) onto [low, high]. Zero noise gives the
// squashed mean.
SquashedSample gaussian_policy_sample(const Vector& mean, const Vector& log_std, double low,
                                      double high, const Vector& noise);

// Pulls dLoss/dAction and dLoss/dLogProb back onto the mean and log-std inputs.
void gaussian_policy_backward(const SquashedSample& sample, double half_width,
                              const Vector& action_grad, double log_prob_grad, Vector& mean_grad,
                              Vector& log_std_grad);

// Numerically stable log(1 - tanh(u)^2).
double log1m_tanh_sq(double u);

void write_mlp(std::ostream& out, const std::string& name, const Mlp& net);
// Reads the network called `name` from a record stream written by write_mlp.
Mlp read_mlp(const RecordFile& file, const std::string& name);

}  // namespace gridvc
