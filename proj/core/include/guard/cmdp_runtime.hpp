#pragma once

// On-policy data collection and the estimators built on it: discounted
// returns, GAE for reward and cost, and the constraint-value estimate.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "guard/env_suite.hpp"
#include "guard/policy_net.hpp"

namespace guard::rt {

using num::Index;
using num::Matrix;
using num::Vector;

/// One episode (or the leading part of one, when the step budget ran out).
struct Trajectory {
  Matrix observations;      // obs_dim x T
  Matrix actions;           // act_dim x T, as sampled from the policy
  Matrix executed_actions;  // act_dim x T, after the optional shield
  Vector rewards;
  Vector costs;
  Vector log_probs;
  Vector value_preds;
  Vector cost_value_preds;
  bool terminal = false;   // the environment reported done
  bool truncated = false;  // cut by the step budget
  // Critic values at the state after the last step; zero when terminal.
  double bootstrap_value = 0.0;
  double bootstrap_cost_value = 0.0;

  Index length() const { return rewards.size(); }
  /// Throws std::invalid_argument unless all per-step arrays agree in length.
  void validate() const;
};

/// All trajectories of one epoch concatenated column-wise.
struct StackedBatch {
  Matrix observations;
  Matrix actions;
  Matrix executed_actions;
  Vector rewards;
  Vector costs;
  Vector prev_costs;  // cost of the previous step in the same episode, 0 at t = 0
  Vector log_probs;

  Index size() const { return rewards.size(); }
};

struct Batch {
  std::vector<Trajectory> trajectories;
  int epoch = 0;

  Index total_steps() const;
  StackedBatch stack() const;
};

/// Shield hook: (observation, policy action, previous step cost) -> executed action.
using ShieldFn = std::function<Vector(const Vector& obs, const Vector& action, double prev_cost)>;

struct Critics {
  const nn::ScalarNet* value = nullptr;
  const nn::ScalarNet* cost_value = nullptr;  // predictions are 0 when absent
};

struct CollectOptions {
  int steps = 1;
  ShieldFn shield;
  int max_threads = 1;  // instances run concurrently when > 1
};

// Runs episodes on every environment instance (resetting each one first and
// again on done) until `steps` transitions are gathered in total. Instance k
// gathers a fixed share and samples with its own stream derived from `rng`;
// trajectories are merged in instance order so the result does not depend on
// scheduling.
Batch collect_rollouts(std::span<env::Env> envs, const nn::GaussianPolicy& policy,
                       const Critics& critics, const CollectOptions& options,
                       num::RngStream& rng);

/// sum_t gamma^t r_t; requires 0 <= gamma < 1.
double discounted_return(std::span<const double> rewards, double gamma);

/// Discounted returns-to-go with `bootstrap` appended after the last step.
Vector rewards_to_go(const Vector& rewards, double gamma, double bootstrap);

/// values holds len + 1 entries (bootstrap last). delta_t = r_t + gamma V_{t+1} - V_t,
/// A_t = sum_k (gamma lambda)^k delta_{t+k}.
Vector gae(const Vector& rewards, const Vector& values, double gamma, double lambda);

/// (A - mean) / (std + 1e-8) with the population standard deviation.
Vector normalize(const Vector& advantages);

/// Mean over trajectories of sum_t gamma^t c_t; truncated trajectories add
/// gamma^T times the cost critic at the cut state. Throws on an empty batch.
double estimate_constraint_value(const Batch& batch, double gamma);

// Reward and cost estimates are distinct types so one cannot be passed
// where the other is expected.
struct RewardAdvantages {
  Vector values;
};
struct CostAdvantages {
  Vector values;
};

struct AdvantageEstimates {
  RewardAdvantages reward;
  CostAdvantages cost;
  Vector reward_returns;
  Vector cost_returns;
  double cost_estimate = 0.0;  // J_C of the rollout policy
};

struct AdvantageOptions {
  double gamma = 0.99;
  double lambda = 0.97;
  bool normalize_reward = true;
};

AdvantageEstimates compute_advantages(const Batch& batch, const AdvantageOptions& options);

}  // namespace guard::rt
