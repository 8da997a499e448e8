#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "gridvc/agents.hpp"
#include "gridvc/records.hpp"

namespace gridvc {

namespace {

constexpr double kMid = 0.5 * (kSetpointMin + kSetpointMax);
constexpr double kHalf = 0.5 * (kSetpointMax - kSetpointMin);

std::vector<int> widths_of(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

}  // namespace

IlAgent::IlAgent(int n_state, int n_action, IlConfig config, Rng& init_rng)
    : config_(std::move(config)) {
  if (n_state < 1 || n_action < 1) throw std::invalid_argument("IL needs positive state/action sizes");
  if (config_.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config_.max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  policy = Mlp(widths_of(n_state, config_.hidden, n_action), init_rng);
  opt_.config.learning_rate = config_.learning_rate;
}

ActionVec IlAgent::predict(const StateVec& state) const {
  if (state.size() != n_state()) throw std::invalid_argument("state has the wrong dimension");
  const Vector out = policy.forward(Vector(state));
  return (kMid + kHalf * out.array().tanh()).matrix();
}

double IlAgent::train_epoch(const Dataset& data, Rng& rng) {
  const std::size_t n = data.size();
  if (n == 0) throw std::invalid_argument("IL training needs a non-empty dataset");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const int ns = n_state(), na = n_action();
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += config_.batch_size) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(config_.batch_size));
    const Eigen::Index B = static_cast<Eigen::Index>(end - start);
    Matrix x(ns, B), target(na, B);
    for (Eigen::Index b = 0; b < B; ++b) {
      const DatasetEntry& e = data.entries[order[start + b]];
      x.col(b) = e.state;
      target.col(b) = e.action;
    }
    Mlp::Cache cache;
    const Matrix y = policy.forward(x, cache).array().tanh().matrix();
    const Matrix err = (kMid + kHalf * y.array()).matrix() - target;
    total += err.squaredNorm() / na;
    const double scale = 2.0 / static_cast<double>(B * na);
    const Matrix grad = (scale * kHalf * err.array() * (1.0 - y.array().square())).matrix();
    MlpGradients g = policy.backward(cache, grad);
    adam_step(opt_, policy, g);
  }
  return total / static_cast<double>(n);
}

double IlAgent::dataset_mse(const Dataset& data) const {
  if (data.size() == 0) return 0.0;
  double total = 0.0;
  for (const DatasetEntry& e : data.entries) total += (predict(e.state) - e.action).squaredNorm();
  return total / static_cast<double>(data.size() * n_action());
}

void IlAgent::save(std::ostream& out) const {
  out << "# gridvc-il v1\n[il]\n";
  out << "n_state=" << n_state() << " n_action=" << n_action() << " hidden=";
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) out << (i ? "," : "") << config_.hidden[i];
  out << " learning_rate=" << format_double(config_.learning_rate) << " batch_size=" << config_.batch_size
      << " max_epochs=" << config_.max_epochs
      << " norm_offset=" << format_hex_list(normalizer.offset.data(), 5)
      << " norm_scale=" << format_hex_list(normalizer.scale.data(), 5) << "\n";
  write_mlp(out, "policy", policy);
}

IlAgent IlAgent::load(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  require_header(file, "gridvc-il", 1, source_name);
  const Record& h = file.single("il");
  IlConfig cfg;
  cfg.hidden.clear();
  for (double w : h.get_doubles("hidden")) cfg.hidden.push_back(static_cast<int>(w));
  cfg.learning_rate = h.get_double("learning_rate");
  cfg.batch_size = static_cast<int>(h.get_int("batch_size"));
  cfg.max_epochs = static_cast<int>(h.get_int("max_epochs"));
  Rng unused(0);
  IlAgent agent(static_cast<int>(h.get_int("n_state")), static_cast<int>(h.get_int("n_action")), cfg,
                unused);
  Mlp net = read_mlp(file, "policy");
  if (net.widths() != agent.policy.widths())
    throw FormatError(source_name + ": policy network has the wrong shape");
  agent.policy = std::move(net);
  const auto off = h.get_doubles("norm_offset");
  const auto scale = h.get_doubles("norm_scale");
  if (off.size() != 5 || scale.size() != 5) throw FormatError(source_name + ": normalizer needs five blocks");
  std::copy(off.begin(), off.end(), agent.normalizer.offset.begin());
  std::copy(scale.begin(), scale.end(), agent.normalizer.scale.begin());
  return agent;
}

IlTrainResult il_train(const RolloutContext& ctx, const Dataset& data,
                       const std::vector<Case>& test_cases, const IlConfig& config,
                       const EvalConfig& eval, std::uint64_t seed) {
  if (data.size() < static_cast<std::size_t>(config.batch_size))
    throw std::invalid_argument("dataset is smaller than one batch");
  if (test_cases.empty()) throw std::invalid_argument("IL training needs test cases");
  Rng init_rng(derive_seed(seed, "il-init"));
  Rng shuffle_rng(derive_seed(seed, "il-shuffle"));

  IlTrainResult result;
  const int ns = static_cast<int>(data.entries.front().state.size());
  const int na = static_cast<int>(data.entries.front().action.size());
  result.agent = std::make_unique<IlAgent>(ns, na, config, init_rng);
  IlAgent& agent = *result.agent;
  agent.normalizer = data.normalizer;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    IlEpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = agent.train_epoch(data, shuffle_rng);
    Rng eval_rng(derive_seed(seed, "il-eval"));
    rec.eval_length = evaluate_episode_length(ctx, test_cases, agent, eval, eval_rng);
    result.history.push_back(rec);
    result.epochs = epoch;
    if (rec.eval_length <= eval.l_objective) {
      result.reached_objective = true;
      break;
    }
  }
  return result;
}

}  // namespace gridvc
