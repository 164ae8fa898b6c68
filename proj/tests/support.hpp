#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include "guard/bench.hpp"
#include "guard/cmdp_runtime.hpp"
#include "guard/env_suite.hpp"
#include "guard/numerics.hpp"
#include "guard/policy_net.hpp"
#include "guard/safe_algos.hpp"

namespace guard::testing {

using num::Index;
using num::Matrix;
using num::Vector;

/// Norm-wise relative error, guarded against two near-zero vectors.
inline double rel_err(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

inline Matrix random_matrix(Index rows, Index cols, num::RngStream& rng) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

/// M^T M + I, comfortably positive definite.
inline Matrix random_spd(Index n, num::RngStream& rng) {
  const Matrix m = random_matrix(n, n, rng);
  return m.transpose() * m + Matrix::Identity(n, n);
}

/// Rollout-style batch for `policy`: gaussian observations, sampled actions.
inline algo::PolicyBatch sample_batch(const nn::GaussianPolicy& policy, Index n, num::RngStream& rng) {
  algo::PolicyBatch batch;
  batch.observations = random_matrix(policy.obs_dim(), n, rng);
  batch.actions.resize(policy.act_dim(), n);
  batch.old_log_probs.resize(n);
  for (Index j = 0; j < n; ++j) {
    const auto s = policy.sample(batch.observations.col(j), rng);
    batch.actions.col(j) = s.action;
    batch.old_log_probs[j] = s.log_prob;
  }
  return batch;
}

/// Scratch directory under the system temp dir, emptied on creation.
inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("guard_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace guard::testing
