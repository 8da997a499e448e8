#include <algorithm>
#include <cmath>
#include <istream>
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

Vector standard_normal_vector(Rng& rng, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = standard_normal(rng);
  return v;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

SacAgent::SacAgent(int n_state, int n_action, SacConfig config, Rng& init_rng)
    : n_state_(n_state), n_action_(n_action), config_(std::move(config)) {
  if (n_state < 1 || n_action < 1) throw std::invalid_argument("SAC needs positive state/action sizes");
  if (!(config_.tau > 0 && config_.tau <= 1)) throw std::invalid_argument("tau must lie in (0, 1]");
  if (config_.target_update_period < 1) throw std::invalid_argument("target_update_period must be >= 1");
  if (config_.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (config_.learning_rate < 0) throw std::invalid_argument("learning rate must be >= 0");
  policy = Mlp(widths_of(n_state, config_.hidden, 2 * n_action), init_rng);
  q1 = Mlp(widths_of(n_state + n_action, config_.hidden, 1), init_rng);
  q2 = Mlp(widths_of(n_state + n_action, config_.hidden, 1), init_rng);
  q1_target = q1;
  q2_target = q2;
  log_alpha = config_.initial_log_alpha;
  for (AdamState* s : {&policy_opt_, &q1_opt_, &q2_opt_, &alpha_opt_})
    s->config.learning_rate = config_.learning_rate;
}

double SacAgent::alpha() const { return std::exp(log_alpha); }

double SacAgent::target_entropy() const {
  return std::isnan(config_.target_entropy) ? -static_cast<double>(n_action_) : config_.target_entropy;
}

Vector SacAgent::unit_action(const ActionVec& action) { return (action.array() - kMid) / kHalf; }

SquashedSample SacAgent::sample_policy(const Vector& policy_out, const Vector& noise) const {
  return gaussian_policy_sample(policy_out.head(n_action_), policy_out.tail(n_action_), kSetpointMin,
                                kSetpointMax, noise);
}

Matrix SacAgent::critic_input(const StateVec& s, const ActionVec& a) const {
  Matrix x(n_state_ + n_action_, 1);
  x.col(0) << s, unit_action(a);
  return x;
}

ActionVec SacAgent::act(const StateVec& state, ActMode mode, Rng& rng) const {
  if (state.size() != n_state_) throw std::invalid_argument("state has the wrong dimension");
  const Vector out = policy.forward(Vector(state));
  const Vector noise =
      mode == ActMode::greedy ? Vector::Zero(n_action_) : standard_normal_vector(rng, n_action_);
  return sample_policy(out, noise).action;
}

double SacAgent::unit_log_prob(const SquashedSample& s) const {
  return s.log_prob + n_action_ * std::log(kHalf);
}

double SacAgent::critic_target(const Transition& t, const Vector& next_noise) const {
  if (t.terminal) return t.reward;
  const SquashedSample next = sample_policy(policy.forward(Vector(t.next_state)), next_noise);
  const Matrix x = critic_input(t.next_state, next.action);
  const double q = std::min(q1_target.forward(x)(0, 0), q2_target.forward(x)(0, 0));
  return t.reward + config_.gamma * (q - alpha() * unit_log_prob(next));
}

SacLosses SacAgent::update(const std::vector<const Transition*>& batch, Rng& rng) {
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  if (B == 0) throw std::invalid_argument("SAC update needs a non-empty batch");
  const int ns = n_state_, na = n_action_;
  const double alpha_now = alpha();
  const double inv_b = 1.0 / static_cast<double>(B);

  Matrix x(ns + na, B), x_next(ns + na, B);
  Vector r(B), not_done(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const Transition& t = *batch[b];
    x.col(b) << t.state, unit_action(t.action);
    x_next.col(b).head(ns) = t.next_state;
    r[b] = t.reward;
    not_done[b] = t.terminal ? 0.0 : 1.0;
  }

  // Soft Bellman targets.
  const Matrix next_out = policy.forward(Matrix(x_next.topRows(ns)));
  Vector next_log_pi(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    const SquashedSample s = sample_policy(next_out.col(b), standard_normal_vector(rng, na));
    x_next.col(b).tail(na) = s.squashed;
    next_log_pi[b] = unit_log_prob(s);
  }
  const Matrix q1_next = q1_target.forward(x_next);
  const Matrix q2_next = q2_target.forward(x_next);
  const Vector y = r.array() + config_.gamma * not_done.array() *
                                   (q1_next.row(0).transpose().cwiseMin(q2_next.row(0).transpose()).array() -
                                    alpha_now * next_log_pi.array());

  SacLosses losses;
  auto critic_step = [&](Mlp& q, AdamState& opt) {
    Mlp::Cache cache;
    const Matrix pred = q.forward(x, cache);
    const Matrix err = pred - y.transpose();
    MlpGradients g = q.backward(cache, 2.0 * inv_b * err);
    adam_step(opt, q, g);
    return err.squaredNorm() * inv_b;
  };
  losses.critic1 = critic_step(q1, q1_opt_);
  losses.critic2 = critic_step(q2, q2_opt_);

  // Reparameterized policy step against the freshly updated critics.
  Mlp::Cache pcache;
  const Matrix out = policy.forward(Matrix(x.topRows(ns)), pcache);
  std::vector<SquashedSample> samples;
  samples.reserve(B);
  Matrix xp(ns + na, B);
  xp.topRows(ns) = x.topRows(ns);
  Vector log_pi(B);
  for (Eigen::Index b = 0; b < B; ++b) {
    samples.push_back(sample_policy(out.col(b), standard_normal_vector(rng, na)));
    xp.col(b).tail(na) = samples.back().squashed;
    log_pi[b] = unit_log_prob(samples.back());
  }
  Mlp::Cache c1, c2;
  const Matrix q1p = q1.forward(xp, c1);
  const Matrix q2p = q2.forward(xp, c2);
  Matrix g1 = Matrix::Zero(1, B), g2 = Matrix::Zero(1, B);
  double policy_loss = 0.0;
  for (Eigen::Index b = 0; b < B; ++b) {
    const bool first = q1p(0, b) <= q2p(0, b);
    (first ? g1 : g2)(0, b) = -inv_b;
    policy_loss += alpha_now * log_pi[b] - std::min(q1p(0, b), q2p(0, b));
  }
  const Matrix in1 = q1.input_gradient(c1, g1);
  const Matrix in2 = q2.input_gradient(c2, g2);
  const Matrix action_grad = (in1.bottomRows(na) + in2.bottomRows(na)) / kHalf;
  Matrix out_grad(2 * na, B);
  Vector mean_grad, log_std_grad;
  for (Eigen::Index b = 0; b < B; ++b) {
    gaussian_policy_backward(samples[b], kHalf, action_grad.col(b), alpha_now * inv_b, mean_grad,
                             log_std_grad);
    out_grad.col(b) << mean_grad, log_std_grad;
  }
  MlpGradients pg = policy.backward(pcache, out_grad);
  adam_step(policy_opt_, policy, pg);
  losses.policy = policy_loss * inv_b;

  // Temperature.
  const double mean_log_pi = log_pi.mean();
  double alpha_grad = -(mean_log_pi + target_entropy());
  adam_step(alpha_opt_, {ParamView{&log_alpha, 1}}, {ParamView{&alpha_grad, 1}});
  losses.alpha_loss = -log_alpha * (mean_log_pi + target_entropy());
  losses.mean_log_prob = mean_log_pi;
  losses.alpha = alpha();

  ++updates_;
  if (updates_ % config_.target_update_period == 0) {
    q1_target.soft_update_from(q1, config_.tau);
    q2_target.soft_update_from(q2, config_.tau);
  }
  return losses;
}

void SacAgent::save(std::ostream& out) const {
  out << "# gridvc-sac v1\n[sac]\n";
  out << "n_state=" << n_state_ << " n_action=" << n_action_ << " hidden=" << join_ints(config_.hidden)
      << " learning_rate=" << format_double(config_.learning_rate)
      << " batch_size=" << config_.batch_size << " gamma=" << format_double(config_.gamma)
      << " tau=" << format_double(config_.tau)
      << " target_update_period=" << config_.target_update_period
      << " target_entropy=" << format_double(target_entropy())
      << " log_alpha=" << format_hex_list(&log_alpha, 1) << " updates=" << updates_
      << " norm_offset=" << format_hex_list(normalizer.offset.data(), 5)
      << " norm_scale=" << format_hex_list(normalizer.scale.data(), 5) << "\n";
  write_mlp(out, "policy", policy);
  write_mlp(out, "q1", q1);
  write_mlp(out, "q2", q2);
  write_mlp(out, "q1_target", q1_target);
  write_mlp(out, "q2_target", q2_target);
}

SacAgent SacAgent::load(std::istream& in, const std::string& source_name) {
  const RecordFile file = parse_records(in, source_name);
  require_header(file, "gridvc-sac", 1, source_name);
  const Record& h = file.single("sac");
  SacConfig cfg;
  cfg.hidden.clear();
  for (double w : h.get_doubles("hidden")) cfg.hidden.push_back(static_cast<int>(w));
  cfg.learning_rate = h.get_double("learning_rate");
  cfg.batch_size = static_cast<int>(h.get_int("batch_size"));
  cfg.gamma = h.get_double("gamma");
  cfg.tau = h.get_double("tau");
  cfg.target_update_period = static_cast<int>(h.get_int("target_update_period"));
  cfg.target_entropy = h.get_double("target_entropy");
  Rng unused(0);
  SacAgent agent(static_cast<int>(h.get_int("n_state")), static_cast<int>(h.get_int("n_action")), cfg,
                 unused);
  agent.log_alpha = h.get_double("log_alpha");
  agent.updates_ = h.get_int("updates");
  const auto off = h.get_doubles("norm_offset");
  const auto scale = h.get_doubles("norm_scale");
  if (off.size() != 5 || scale.size() != 5) throw FormatError(source_name + ": normalizer needs five blocks");
  std::copy(off.begin(), off.end(), agent.normalizer.offset.begin());
  std::copy(scale.begin(), scale.end(), agent.normalizer.scale.begin());
  auto load_net = [&](Mlp& dst, const char* name) {
    Mlp net = read_mlp(file, name);
    if (net.widths() != dst.widths()) throw FormatError(source_name + ": network " + name + " has the wrong shape");
    dst = std::move(net);
  };
  load_net(agent.policy, "policy");
  load_net(agent.q1, "q1");
  load_net(agent.q2, "q2");
  load_net(agent.q1_target, "q1_target");
  load_net(agent.q2_target, "q2_target");
  return agent;
}

SacTrainResult sac_train(const RolloutContext& ctx, const std::vector<Case>& train_cases,
                         const std::vector<Case>& eval_cases, const SacTrainConfig& config,
                         std::uint64_t seed, const CurveCallback& on_eval) {
  if (train_cases.empty()) throw std::invalid_argument("SAC training needs training cases");
  if (eval_cases.empty()) throw std::invalid_argument("SAC training needs evaluation cases");
  if (config.eval_interval < 1) throw std::invalid_argument("eval_interval must be >= 1");
  if (config.episodes_per_step < 1) throw std::invalid_argument("episodes_per_step must be >= 1");

  VoltageControlEnv env(ctx.network, ctx.mdp, ctx.solver);
  Rng init_rng(derive_seed(seed, "sac-init"));
  Rng case_rng(derive_seed(seed, "sac-cases"));
  Rng act_rng(derive_seed(seed, "sac-act"));
  Rng update_rng(derive_seed(seed, "sac-update"));

  SacTrainResult result;
  result.agent = std::make_unique<SacAgent>(env.state_dim(), env.action_dim(), config.agent, init_rng);
  SacAgent& agent = *result.agent;
  agent.normalizer = ctx.mdp.normalizer;
  ReplayBuffer buffer(config.agent.buffer_capacity);
  const auto batch = static_cast<std::size_t>(config.agent.batch_size);

  auto run_episode = [&](bool random, std::int64_t step_cap) {
    StateVec s = env.reset(train_cases[uniform_index(case_rng, train_cases.size())]);
    ++result.episodes;
    while (step_cap-- > 0) {
      const ActionVec a = clip_action(random ? random_action(act_rng, env.action_dim())
                                             : agent.act(s, ActMode::stochastic, act_rng));
      StepResult step = env.step(a, ctx.reward);
      const bool terminal =
          step.done_reason == DoneReason::solved || step.done_reason == DoneReason::diverged;
      buffer.push({s, a, step.reward, step.next_state, terminal});
      s = std::move(step.next_state);
      ++result.env_steps;
      if (step.done) break;
    }
  };

  while (result.env_steps < config.warmup_steps)
    run_episode(true, config.warmup_steps - result.env_steps);

  SacLosses last;
  std::vector<const Transition*> picks(batch);
  while (result.train_steps < config.step_budget) {
    for (int e = 0; e < config.episodes_per_step; ++e)
      run_episode(false, std::numeric_limits<std::int64_t>::max());
    if (buffer.size() >= batch) {
      const auto idx = buffer.sample_indices(batch, update_rng);
      for (std::size_t i = 0; i < batch; ++i) picks[i] = &buffer.at(idx[i]);
      last = agent.update(picks, update_rng);
    }
    ++result.train_steps;

    if (result.train_steps % config.eval_interval == 0) {
      Rng eval_rng(derive_seed(seed, "sac-eval"));
      SacPolicy greedy(agent, ActMode::greedy);
      LearningCurvePoint p;
      p.train_steps = result.train_steps;
      p.env_steps = result.env_steps;
      p.episodes = result.episodes;
      p.eval_length = evaluate_episode_length(ctx, eval_cases, greedy, config.eval, eval_rng);
      p.losses = last;
      result.curve.push_back(p);
      if (on_eval) on_eval(p);
      if (!result.reached_objective && p.eval_length <= config.eval.l_objective) {
        result.reached_objective = true;
        result.train_steps_to_objective = p.train_steps;
        result.env_steps_to_objective = p.env_steps;
        result.episodes_to_objective = p.episodes;
        if (config.stop_at_objective) break;
      }
    }
  }
  return result;
}

}  // namespace gridvc
