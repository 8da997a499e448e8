#include "gridvc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace gridvc {

std::vector<ParamView> MlpGradients::views() {
  std::vector<ParamView> out;
  for (auto& l : layers) {
    out.push_back({l.weight.data(), l.weight.size()});
    out.push_back({l.bias.data(), l.bias.size()});
  }
  return out;
}

MlpGradients& MlpGradients::operator+=(const MlpGradients& other) {
  if (other.layers.size() != layers.size()) throw std::invalid_argument("gradient shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += other.layers[i].weight;
    layers[i].bias += other.layers[i].bias;
  }
  return *this;
}

Mlp::Mlp(std::vector<int> widths, Rng& rng) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw std::invalid_argument("an Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    const int in = widths_[i];
    const int out = widths_[i + 1];
    const double limit = std::sqrt(6.0 / (in + out));
    DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
    for (Eigen::Index k = 0; k < layer.weight.size(); ++k)
      layer.weight.data()[k] = uniform(rng, -limit, limit);
    layers_.push_back(std::move(layer));
  }
}

Mlp Mlp::zeros(std::vector<int> widths) {
  Mlp net;
  net.widths_ = std::move(widths);
  if (net.widths_.size() < 2) throw std::invalid_argument("an Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < net.widths_.size(); ++i)
    net.layers_.push_back({Matrix::Zero(net.widths_[i + 1], net.widths_[i]),
                           Vector::Zero(net.widths_[i + 1])});
  return net;
}

Matrix Mlp::forward(const Matrix& input) const {
  if (input.rows() != input_size())
    throw std::invalid_argument("Mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                                std::to_string(input_size()));
  Matrix x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].weight * x;
    z.colwise() += layers_[i].bias;
    if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
    x = std::move(z);
  }
  return x;
}

Matrix Mlp::forward(const Matrix& input, Cache& cache) const {
  if (input.rows() != input_size())
    throw std::invalid_argument("Mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                                std::to_string(input_size()));
  cache.inputs.assign(1, input);
  cache.pre.clear();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = layers_[i].weight * cache.inputs.back();
    z.colwise() += layers_[i].bias;
    if (i + 1 == layers_.size()) return z;
    cache.inputs.push_back(z.cwiseMax(0.0));
    cache.pre.push_back(std::move(z));
  }
  return {};
}

Vector Mlp::forward(const Vector& input) const { return forward(Matrix(input)).col(0); }

bool Mlp::matches(const Cache& cache) const {
  if (cache.inputs.size() != layers_.size() || cache.pre.size() + 1 != layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k)
    if (cache.inputs[k].rows() != widths_[k]) return false;
  return true;
}

MlpGradients Mlp::backward(const Cache& cache, const Matrix& output_grad, Matrix* input_grad) const {
  if (!matches(cache))
    throw std::invalid_argument("Mlp::backward needs the cache of a forward pass on this network");
  const Eigen::Index batch = cache.inputs.front().cols();
  if (output_grad.rows() != output_size() || output_grad.cols() != batch)
    throw std::invalid_argument("Mlp::backward output gradient has the wrong shape");

  MlpGradients grads;
  grads.layers.resize(layers_.size());
  Matrix delta = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    grads.layers[k].weight = delta * cache.inputs[k].transpose();
    grads.layers[k].bias = delta.rowwise().sum();
    if (k == 0 && input_grad == nullptr) break;
    Matrix back = layers_[k].weight.transpose() * delta;
    if (k == 0) {
      *input_grad = std::move(back);
      break;
    }
    delta = (cache.pre[k - 1].array() > 0.0).select(back, 0.0);
  }
  return grads;
}

Matrix Mlp::input_gradient(const Cache& cache, const Matrix& output_grad) const {
  if (!matches(cache))
    throw std::invalid_argument("Mlp::input_gradient needs the cache of a forward pass on this network");
  if (output_grad.rows() != output_size() || output_grad.cols() != cache.inputs.front().cols())
    throw std::invalid_argument("Mlp::input_gradient output gradient has the wrong shape");
  Matrix delta = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    Matrix back = layers_[k].weight.transpose() * delta;
    if (k == 0) return back;
    delta = (cache.pre[k - 1].array() > 0.0).select(back, 0.0);
  }
  return {};
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const auto& l : layers_)
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()), Vector::Zero(l.bias.size())});
  return g;
}

std::vector<ParamView> Mlp::views() {
  std::vector<ParamView> out;
  for (auto& l : layers_) {
    out.push_back({l.weight.data(), l.weight.size()});
    out.push_back({l.bias.data(), l.bias.size()});
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

void Mlp::soft_update_from(const Mlp& online, double tau) {
  if (online.widths_ != widths_) throw std::invalid_argument("soft update between different shapes");
  if (tau == 1.0) {
    layers_ = online.layers_;
    return;
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight = tau * online.layers_[i].weight + (1.0 - tau) * layers_[i].weight;
    layers_[i].bias = tau * online.layers_[i].bias + (1.0 - tau) * layers_[i].bias;
  }
}

bool Mlp::operator==(const Mlp& other) const {
  if (widths_ != other.widths_) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].weight != other.layers_[i].weight || layers_[i].bias != other.layers_[i].bias)
      return false;
  return true;
}

void adam_step(AdamState& state, const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: params/grads mismatch");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(Vector::Zero(p.size));
      state.second_moment.push_back(Vector::Zero(p.size));
    }
  }
  if (state.first_moment.size() != params.size())
    throw std::invalid_argument("adam: moment accumulators do not mirror parameters");

  const auto& c = state.config;
  ++state.step;
  const double correction1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size != grads[i].size || state.first_moment[i].size() != params[i].size)
      throw std::invalid_argument("adam: tensor size mismatch");
    Eigen::Map<Vector> p(params[i].data, params[i].size);
    Eigen::Map<const Vector> g(grads[i].data, grads[i].size);
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
    p.array() -= c.learning_rate * (m.array() / correction1) /
                 ((v.array() / correction2).sqrt() + c.epsilon);
  }
}

void adam_step(AdamState& state, Mlp& net, MlpGradients& grads) {
  adam_step(state, net.views(), grads.views());
}

double log1m_tanh_sq(double u) {
  // 1 - tanh(u)^2 = 4 / (e^u + e^-u)^2, so log = 2 (log 2 - |u| - log1p(e^{-2|u|})).
  const double a = std::abs(u);
  return 2.0 * (std::numbers::ln2 - a - std::log1p(std::exp(-2.0 * a)));
}

SquashedSample gaussian_policy_sample(const Vector& mean, const Vector& log_std, double low,
                                      double high, const Vector& noise) {
  const Eigen::Index n = mean.size();
  if (log_std.size() != n || noise.size() != n)
    throw std::invalid_argument("gaussian_policy_sample: size mismatch");
  const double mid = 0.5 * (high + low);
  const double half = 0.5 * (high - low);
  SquashedSample s;
  s.noise = noise;
  s.pre_tanh.resize(n);
  s.squashed.resize(n);
  s.std_dev.resize(n);
  s.action.resize(n);
  s.log_std_clamped.resize(n);
  double log_prob = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double ls = log_std[i];
    s.log_std_clamped[i] = ls < kLogStdMin || ls > kLogStdMax;
    ls = std::clamp(ls, kLogStdMin, kLogStdMax);
    s.std_dev[i] = std::exp(ls);
    s.pre_tanh[i] = mean[i] + s.std_dev[i] * noise[i];
    s.squashed[i] = std::tanh(s.pre_tanh[i]);
    s.action[i] = std::clamp(mid + half * s.squashed[i], low, high);
    log_prob += -0.5 * noise[i] * noise[i] - ls - 0.5 * std::log(2.0 * std::numbers::pi) -
                log1m_tanh_sq(s.pre_tanh[i]) - std::log(half);
  }
  s.log_prob = log_prob;
  return s;
}

void gaussian_policy_backward(const SquashedSample& s, double half_width, const Vector& action_grad,
                              double log_prob_grad, Vector& mean_grad, Vector& log_std_grad) {
  const Eigen::Index n = s.action.size();
  mean_grad.resize(n);
  log_std_grad.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double y = s.squashed[i];
    // d action / d pre_tanh and d log_prob / d pre_tanh (noise held fixed).
    const double da_du = half_width * (1.0 - y * y);
    const double dlp_du = 2.0 * y;
    const double du = action_grad[i] * da_du + log_prob_grad * dlp_du;
    mean_grad[i] = du;
    // pre_tanh depends on log_std through std * noise; log_prob also has -log_std.
    const double g = du * s.std_dev[i] * s.noise[i] - log_prob_grad;
    log_std_grad[i] = s.log_std_clamped[i] ? 0.0 : g;
  }
}

void write_mlp(std::ostream& out, const std::string& name, const Mlp& net) {
  out << "[mlp]\nname=" << name << " widths=";
  for (std::size_t i = 0; i < net.widths().size(); ++i) out << (i ? "," : "") << net.widths()[i];
  out << "\n[layer]\n";
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    const auto& l = net.layers()[i];
    // Weights are stored column-major, matching Eigen's default layout.
    out << "mlp=" << name << " index=" << i << " weight=" << format_hex_list(l.weight.data(), l.weight.size())
        << " bias=" << format_hex_list(l.bias.data(), l.bias.size()) << "\n";
  }
}

Mlp read_mlp(const RecordFile& file, const std::string& name) {
  const Record* head = nullptr;
  for (const Record* r : file.section("mlp"))
    if (r->get("name") == name) head = r;
  if (!head) throw FormatError("checkpoint has no network named '" + name + "'");
  std::vector<int> widths;
  for (double w : head->get_doubles("widths")) widths.push_back(static_cast<int>(w));
  Mlp net = Mlp::zeros(widths);
  std::size_t loaded = 0;
  for (const Record* r : file.section("layer")) {
    if (r->get("mlp") != name) continue;
    const auto index = static_cast<std::size_t>(r->get_int("index"));
    if (index >= net.layers().size()) throw FormatError("layer index out of range for " + name);
    auto& l = net.layers()[index];
    const auto w = r->get_doubles("weight");
    const auto b = r->get_doubles("bias");
    if (static_cast<Eigen::Index>(w.size()) != l.weight.size() ||
        static_cast<Eigen::Index>(b.size()) != l.bias.size())
      throw FormatError("layer " + std::to_string(index) + " of " + name + " has the wrong size");
    std::copy(w.begin(), w.end(), l.weight.data());
    std::copy(b.begin(), b.end(), l.bias.data());
    ++loaded;
  }
  if (loaded != net.layers().size()) throw FormatError("checkpoint is missing layers of " + name);
  return net;
}

}  // namespace gridvc
