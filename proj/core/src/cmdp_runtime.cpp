#include "guard/cmdp_runtime.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

namespace guard::rt {

namespace {

struct TrajectoryBuilder {
  std::vector<Vector> obs, actions, executed;
  std::vector<double> rewards, costs, log_probs, values, cost_values;

  bool empty() const { return rewards.empty(); }

  Trajectory finish(bool terminal, double bootstrap_value, double bootstrap_cost_value) {
    Trajectory t;
    const Index n = static_cast<Index>(rewards.size());
    auto stack_cols = [n](const std::vector<Vector>& cols) {
      Matrix m(cols.front().size(), n);
      for (Index i = 0; i < n; ++i) m.col(i) = cols[i];
      return m;
    };
    auto to_vec = [](const std::vector<double>& v) {
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
    };
    t.observations = stack_cols(obs);
    t.actions = stack_cols(actions);
    t.executed_actions = stack_cols(executed);
    t.rewards = to_vec(rewards);
    t.costs = to_vec(costs);
    t.log_probs = to_vec(log_probs);
    t.value_preds = to_vec(values);
    t.cost_value_preds = to_vec(cost_values);
    t.terminal = terminal;
    t.truncated = !terminal;
    t.bootstrap_value = terminal ? 0.0 : bootstrap_value;
    t.bootstrap_cost_value = terminal ? 0.0 : bootstrap_cost_value;
    *this = {};
    return t;
  }
};

std::vector<Trajectory> collect_instance(env::Env& env, const nn::GaussianPolicy& policy,
                                         const Critics& critics, const ShieldFn& shield,
                                         int steps, num::RngStream rng) {
  std::vector<Trajectory> out;
  if (steps <= 0) return out;
  auto value_of = [](const nn::ScalarNet* net, const Vector& obs) {
    return net != nullptr ? net->predict(obs) : 0.0;
  };

  Vector obs = env.reset();
  double prev_cost = 0.0;
  TrajectoryBuilder traj;
  for (int t = 0; t < steps; ++t) {
    const nn::GaussianPolicy::Sample sample = policy.sample(obs, rng);
    Vector executed = shield ? shield(obs, sample.action, prev_cost) : sample.action;
    traj.obs.push_back(obs);
    traj.actions.push_back(sample.action);
    traj.log_probs.push_back(sample.log_prob);
    traj.values.push_back(value_of(critics.value, obs));
    traj.cost_values.push_back(value_of(critics.cost_value, obs));

    const env::StepOutcome outcome = env.step(executed);
    traj.executed.push_back(std::move(executed));
    traj.rewards.push_back(outcome.reward);
    traj.costs.push_back(outcome.cost);
    num::require_finite(outcome.reward, "environment reward");
    prev_cost = outcome.cost;
    obs = outcome.observation;

    if (outcome.done) {
      out.push_back(traj.finish(true, 0.0, 0.0));
      prev_cost = 0.0;
      if (t + 1 < steps) obs = env.reset();
    }
  }
  if (!traj.empty()) {
    out.push_back(traj.finish(false, value_of(critics.value, obs), value_of(critics.cost_value, obs)));
  }
  return out;
}

}  // namespace

void Trajectory::validate() const {
  const Index n = rewards.size();
  if (observations.cols() != n || actions.cols() != n || executed_actions.cols() != n ||
      costs.size() != n || log_probs.size() != n || value_preds.size() != n ||
      cost_value_preds.size() != n) {
    throw std::invalid_argument("Trajectory: per-step arrays differ in length");
  }
  num::require_finite(log_probs, "trajectory log-probabilities");
}

Index Batch::total_steps() const {
  Index n = 0;
  for (const auto& t : trajectories) n += t.length();
  return n;
}

StackedBatch Batch::stack() const {
  StackedBatch s;
  const Index n = total_steps();
  if (n == 0) return s;
  const auto& first = trajectories.front();
  s.observations.resize(first.observations.rows(), n);
  s.actions.resize(first.actions.rows(), n);
  s.executed_actions.resize(first.executed_actions.rows(), n);
  s.rewards.resize(n);
  s.costs.resize(n);
  s.prev_costs.resize(n);
  s.log_probs.resize(n);
  Index at = 0;
  for (const auto& t : trajectories) {
    const Index len = t.length();
    s.observations.middleCols(at, len) = t.observations;
    s.actions.middleCols(at, len) = t.actions;
    s.executed_actions.middleCols(at, len) = t.executed_actions;
    s.rewards.segment(at, len) = t.rewards;
    s.costs.segment(at, len) = t.costs;
    s.log_probs.segment(at, len) = t.log_probs;
    s.prev_costs[at] = 0.0;
    if (len > 1) s.prev_costs.segment(at + 1, len - 1) = t.costs.head(len - 1);
    at += len;
  }
  return s;
}

Batch collect_rollouts(std::span<env::Env> envs, const nn::GaussianPolicy& policy,
                       const Critics& critics, const CollectOptions& options,
                       num::RngStream& rng) {
  if (options.steps < 1) throw std::invalid_argument("collect_rollouts: steps must be >= 1");
  if (envs.empty()) throw std::invalid_argument("collect_rollouts: no environment instances");
  for (const auto& e : envs) {
    if (e.obs_dim() != policy.obs_dim() || e.act_dim() != policy.act_dim()) {
      throw std::invalid_argument("collect_rollouts: policy and environment dimensions differ");
    }
  }

  const int k = static_cast<int>(envs.size());
  const num::RngStream base(rng.next_u64());
  std::vector<int> shares(k, options.steps / k);
  for (int i = 0; i < options.steps % k; ++i) ++shares[i];

  std::vector<std::vector<Trajectory>> parts(k);
  const int threads = std::clamp(options.max_threads, 1, k);
  if (threads == 1) {
    for (int i = 0; i < k; ++i) {
      parts[i] = collect_instance(envs[i], policy, critics, options.shield, shares[i], base.split(i));
    }
  } else {
    std::vector<std::exception_ptr> errors(k);
    for (int start = 0; start < k; start += threads) {
      std::vector<std::jthread> workers;
      for (int i = start; i < std::min(k, start + threads); ++i) {
        workers.emplace_back([&, i] {
          try {
            parts[i] = collect_instance(envs[i], policy, critics, options.shield, shares[i], base.split(i));
          } catch (...) {
            errors[i] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  Batch batch;
  for (auto& part : parts) {
    for (auto& t : part) batch.trajectories.push_back(std::move(t));
  }
  return batch;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw std::invalid_argument("discounted_return: gamma must lie in [0, 1)");
  }
  double total = 0.0;
  double weight = 1.0;
  for (double r : rewards) {
    total += weight * r;
    weight *= gamma;
  }
  return total;
}

Vector rewards_to_go(const Vector& rewards, double gamma, double bootstrap) {
  Vector out(rewards.size());
  double running = bootstrap;
  for (Index t = rewards.size() - 1; t >= 0; --t) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

Vector gae(const Vector& rewards, const Vector& values, double gamma, double lambda) {
  if (values.size() != rewards.size() + 1) {
    throw std::invalid_argument("gae: expected " + std::to_string(rewards.size() + 1) +
                                " value predictions (including bootstrap), got " +
                                std::to_string(values.size()));
  }
  Vector adv(rewards.size());
  double running = 0.0;
  for (Index t = rewards.size() - 1; t >= 0; --t) {
    const double delta = rewards[t] + gamma * values[t + 1] - values[t];
    running = delta + gamma * lambda * running;
    adv[t] = running;
  }
  return adv;
}

Vector normalize(const Vector& advantages) {
  if (advantages.size() < 2) throw std::invalid_argument("normalize: need at least two values");
  const double mean = advantages.mean();
  const Vector centered = advantages.array() - mean;
  const double std = std::sqrt(centered.squaredNorm() / static_cast<double>(advantages.size()));
  return centered / (std + 1e-8);
}

double estimate_constraint_value(const Batch& batch, double gamma) {
  if (batch.trajectories.empty()) {
    throw std::invalid_argument("estimate_constraint_value: batch has no trajectories");
  }
  double total = 0.0;
  for (const auto& t : batch.trajectories) {
    const auto& c = t.costs;
    double value = discounted_return(std::span<const double>(c.data(), c.size()), gamma);
    if (t.truncated) value += std::pow(gamma, static_cast<double>(t.length())) * t.bootstrap_cost_value;
    total += value;
  }
  return total / static_cast<double>(batch.trajectories.size());
}

AdvantageEstimates compute_advantages(const Batch& batch, const AdvantageOptions& options) {
  const Index n = batch.total_steps();
  if (n == 0) throw std::invalid_argument("compute_advantages: empty batch");
  AdvantageEstimates est;
  est.reward.values.resize(n);
  est.cost.values.resize(n);
  est.reward_returns.resize(n);
  est.cost_returns.resize(n);

  Index at = 0;
  for (const auto& t : batch.trajectories) {
    t.validate();
    const Index len = t.length();
    Vector values(len + 1), cost_values(len + 1);
    values << t.value_preds, t.bootstrap_value;
    cost_values << t.cost_value_preds, t.bootstrap_cost_value;
    est.reward.values.segment(at, len) = gae(t.rewards, values, options.gamma, options.lambda);
    est.cost.values.segment(at, len) = gae(t.costs, cost_values, options.gamma, options.lambda);
    est.reward_returns.segment(at, len) = rewards_to_go(t.rewards, options.gamma, t.bootstrap_value);
    est.cost_returns.segment(at, len) = rewards_to_go(t.costs, options.gamma, t.bootstrap_cost_value);
    at += len;
  }
  if (options.normalize_reward && n >= 2) est.reward.values = normalize(est.reward.values);
  est.cost_estimate = estimate_constraint_value(batch, options.gamma);
  return est;
}

}  // namespace guard::rt
