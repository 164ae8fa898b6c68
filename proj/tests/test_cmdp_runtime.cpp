#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "support.hpp"

using namespace guard;
using num::Matrix;
using num::Vector;

namespace {

rt::CollectOptions steps(int n) {
  rt::CollectOptions o;
  o.steps = n;
  return o;
}

env::WorldConfig short_world(int max_steps, int hazards = 8) {
  env::WorldConfig c;
  c.max_episode_steps = max_steps;
  c.constraint.count = hazards;
  return c;
}

rt::Trajectory costs_only(std::vector<double> costs, bool terminal, double bootstrap_cost = 0.0) {
  rt::Trajectory t;
  const auto n = static_cast<num::Index>(costs.size());
  t.costs = Eigen::Map<Vector>(costs.data(), n);
  t.rewards = Vector::Zero(n);
  t.terminal = terminal;
  t.truncated = !terminal;
  t.bootstrap_cost_value = bootstrap_cost;
  return t;
}

}  // namespace

TEST_SUITE("cmdp_runtime") {

TEST_CASE("collect_rollouts: single full episode") {
  num::RngStream init(1);
  std::vector<env::Env> envs{env::Env(short_world(5))};
  nn::GaussianPolicy policy(envs[0].obs_dim(), 2, init, {8});
  num::RngStream rng(2);
  const auto batch = rt::collect_rollouts(envs, policy, {}, steps(5), rng);
  REQUIRE(batch.trajectories.size() == 1);
  CHECK(batch.trajectories[0].length() == 5);
  CHECK(batch.trajectories[0].terminal);
  CHECK_FALSE(batch.trajectories[0].truncated);
  CHECK_NOTHROW(batch.trajectories[0].validate());
}

TEST_CASE("collect_rollouts: step counting, truncation flag and bootstrap values") {
  num::RngStream init(1);
  std::vector<env::Env> envs{env::Env(short_world(7))};
  nn::GaussianPolicy policy(envs[0].obs_dim(), 2, init, {8});
  nn::ScalarNet value(envs[0].obs_dim(), init);
  value.set_flat(init.normal_vector(value.num_params()));
  num::RngStream rng(3);
  const auto batch = rt::collect_rollouts(envs, policy, {&value, nullptr}, steps(2 * 7 + 3), rng);
  CHECK(batch.total_steps() == 17);
  REQUIRE(batch.trajectories.size() == 3);
  CHECK(batch.trajectories[0].terminal);
  CHECK(batch.trajectories[1].terminal);
  const auto& last = batch.trajectories[2];
  CHECK(last.truncated);
  CHECK(last.length() == 3);
  CHECK(last.bootstrap_value != 0.0);
  CHECK(last.bootstrap_cost_value == 0.0);
  CHECK(batch.trajectories[0].bootstrap_value == 0.0);
  // Predictions were recorded at collection time.
  CHECK(last.value_preds[1] == value.predict(Vector(last.observations.col(1))));
}

TEST_CASE("collect_rollouts is deterministic and independent of thread count") {
  num::RngStream init(4);
  auto make_envs = [] {
    std::vector<env::Env> v;
    for (int k = 0; k < 3; ++k) {
      auto c = short_world(50);
      c.seed = 100 + k;
      v.emplace_back(c);
    }
    return v;
  };
  auto envs_a = make_envs();
  nn::GaussianPolicy policy(envs_a[0].obs_dim(), 2, init, {8});
  auto run = [&](int threads) {
    auto envs = make_envs();
    num::RngStream rng(9);
    auto opts = steps(181);
    opts.max_threads = threads;
    return rt::collect_rollouts(envs, policy, {}, opts, rng).stack();
  };
  const auto a = run(1), b = run(1), c = run(3);
  CHECK(a.size() == 181);
  CHECK(a.observations == b.observations);
  CHECK(a.actions == b.actions);
  CHECK(a.rewards == c.rewards);
  CHECK(a.log_probs == c.log_probs);
}

TEST_CASE("collect_rollouts routes actions through the shield") {
  num::RngStream init(5);
  std::vector<env::Env> envs{env::Env(short_world(20))};
  nn::GaussianPolicy policy(envs[0].obs_dim(), 2, init, {8});
  num::RngStream rng(6);
  std::vector<double> seen_prev;
  auto opts = steps(20);
  opts.shield = [&](const Vector&, const Vector& a, double prev) {
    seen_prev.push_back(prev);
    return Vector(0.5 * a);
  };
  const auto batch = rt::collect_rollouts(envs, policy, {}, opts, rng);
  const auto& t = batch.trajectories[0];
  CHECK(t.executed_actions == 0.5 * t.actions);
  const auto s = batch.stack();
  for (int i = 0; i < 20; ++i) CHECK(seen_prev[i] == s.prev_costs[i]);
  CHECK(s.prev_costs[0] == 0.0);
  CHECK(s.prev_costs.tail(19) == s.costs.head(19));
  CHECK_THROWS_AS(rt::collect_rollouts(envs, policy, {}, steps(0), rng), std::invalid_argument);
}

TEST_CASE("discounted returns") {
  const std::vector<double> ones{1, 1, 1};
  CHECK(rt::discounted_return(ones, 0.5) == 1.75);
  const std::vector<double> single{4.5};
  CHECK(rt::discounted_return(single, 0.9) == 4.5);
  const std::vector<double> zeros(6, 0.0);
  CHECK(rt::discounted_return(zeros, 0.99) == 0.0);
  CHECK_THROWS_AS(rt::discounted_return(ones, 1.0), std::invalid_argument);
  CHECK(rt::rewards_to_go(Vector{{1.0, 1.0, 1.0}}, 0.5, 8.0) == Vector{{2.75, 3.5, 5.0}});
}

TEST_CASE("GAE") {
  const Vector r{{1.0, -2.0, 0.5}};
  const Vector v{{0.3, -0.1, 0.8, 0.4}};
  const double g = 0.9, l = 0.8;
  const Vector delta{{r[0] + g * v[1] - v[0], r[1] + g * v[2] - v[1], r[2] + g * v[3] - v[2]}};
  CHECK(rt::gae(r, v, g, 0.0) == delta);
  const Vector by_hand{{delta[0] + g * l * (delta[1] + g * l * delta[2]), delta[1] + g * l * delta[2], delta[2]}};
  CHECK((rt::gae(r, v, g, l) - by_hand).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((rt::gae(r, Vector::Zero(4), g, 1.0) - rt::rewards_to_go(r, g, 0.0)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK_THROWS_AS(rt::gae(r, Vector::Zero(3), g, l), std::invalid_argument);
}

TEST_CASE("GAE with gamma = lambda = 1 and zero values is the undiscounted return-to-go") {
  num::RngStream rng(7);
  for (int k = 0; k < 100; ++k) {
    const int n = 1 + static_cast<int>(rng.uniform() * 20);
    const Vector r = rng.normal_vector(n);
    const Vector a = rt::gae(r, Vector::Zero(n + 1), 1.0, 1.0);
    for (int t = 0; t < n; ++t) {
      double brute = 0.0;
      for (int u = t; u < n; ++u) brute += r[u];
      CHECK(std::abs(a[t] - brute) < 1e-12);
    }
  }
}

TEST_CASE("normalize") {
  CHECK(rt::normalize(Vector::Constant(4, 3.0)).cwiseAbs().maxCoeff() < 1e-6);
  const Vector pm = rt::normalize(Vector{{-1.0, 1.0}});
  CHECK(pm[0] == doctest::Approx(-1.0).epsilon(1e-7));
  CHECK(pm[1] == doctest::Approx(1.0).epsilon(1e-7));
  num::RngStream rng(8);
  const Vector z = rt::normalize(3.0 * rng.normal_vector(500).array() + 2.0);
  CHECK(std::abs(z.mean()) < 1e-10);
  CHECK(std::abs(std::sqrt(z.squaredNorm() / 500.0) - 1.0) < 1e-6);
  CHECK_THROWS_AS(rt::normalize(Vector::Ones(1)), std::invalid_argument);
}

TEST_CASE("constraint value estimate") {
  rt::Batch zero;
  zero.trajectories = {costs_only({0, 0, 0}, true)};
  CHECK(rt::estimate_constraint_value(zero, 0.99) == 0.0);

  rt::Batch one;
  one.trajectories = {costs_only({1, 0, 0}, true)};
  CHECK(rt::estimate_constraint_value(one, 0.99) == 1.0);

  rt::Batch two;
  two.trajectories = {costs_only({2}, true), costs_only({4}, true)};
  CHECK(rt::estimate_constraint_value(two, 0.99) == 3.0);

  rt::Batch cut;
  cut.trajectories = {costs_only({1, 1}, false, 10.0)};
  CHECK(rt::estimate_constraint_value(cut, 0.5) == doctest::Approx(1.5 + 0.25 * 10.0));

  CHECK_THROWS_AS(rt::estimate_constraint_value(rt::Batch{}, 0.99), std::invalid_argument);
}

TEST_CASE("constraint value estimate ignores trajectory order") {
  num::RngStream rng(9);
  rt::Batch batch;
  for (int k = 0; k < 6; ++k) {
    std::vector<double> c;
    for (int i = 0; i < 5 + k; ++i) c.push_back(rng.uniform() < 0.3 ? 1.0 : 0.0);
    batch.trajectories.push_back(costs_only(c, k != 5, 0.7));
  }
  const double forward = rt::estimate_constraint_value(batch, 0.99);
  std::reverse(batch.trajectories.begin(), batch.trajectories.end());
  CHECK(rt::estimate_constraint_value(batch, 0.99) == doctest::Approx(forward).epsilon(1e-14));
}

TEST_CASE("compute_advantages keeps reward and cost estimates separate") {
  num::RngStream init(10);
  std::vector<env::Env> envs{env::Env(short_world(60))};
  nn::GaussianPolicy policy(envs[0].obs_dim(), 2, init, {8});
  nn::ScalarNet value(envs[0].obs_dim(), init), cost_value(envs[0].obs_dim(), init);
  value.set_flat(init.normal_vector(value.num_params()));
  cost_value.set_flat(init.normal_vector(cost_value.num_params()));
  num::RngStream rng(11);
  const auto batch = rt::collect_rollouts(envs, policy, {&value, &cost_value}, steps(150), rng);
  const auto est = rt::compute_advantages(batch, {0.99, 0.97, true});
  CHECK(est.reward.values.size() == 150);
  CHECK(est.cost.values.size() == 150);
  CHECK(std::abs(est.reward.values.mean()) < 1e-10);

  // Cost advantages are unnormalized GAE over the cost critic.
  const auto& t0 = batch.trajectories[0];
  Vector cv(t0.length() + 1);
  cv << t0.cost_value_preds, t0.bootstrap_cost_value;
  CHECK((est.cost.values.head(t0.length()) - rt::gae(t0.costs, cv, 0.99, 0.97)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(est.cost_estimate == rt::estimate_constraint_value(batch, 0.99));

  const auto raw = rt::compute_advantages(batch, {0.99, 0.97, false});
  Vector v0(t0.length() + 1);
  v0 << t0.value_preds, t0.bootstrap_value;
  CHECK((raw.reward.values.head(t0.length()) - rt::gae(t0.rewards, v0, 0.99, 0.97)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(raw.reward_returns.head(t0.length()) == rt::rewards_to_go(t0.rewards, 0.99, t0.bootstrap_value));
}

TEST_CASE("trajectory validation") {
  rt::Trajectory t = costs_only({1, 2}, true);
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
}

}  // TEST_SUITE
