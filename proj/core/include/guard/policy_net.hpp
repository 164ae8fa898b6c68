#pragma once

// MLP function approximators with explicit layer-by-layer backprop:
// the Gaussian policy, scalar critics, and the KL / Fisher machinery the
// trust-region updates need.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "guard/numerics.hpp"

namespace guard::nn {

using num::Index;
using num::Matrix;
using num::Vector;

inline const std::vector<int> kDefaultHidden = {64, 64};

/// Fully connected network, tanh on hidden layers, linear output.
/// Batched calls take inputs column-wise: one column per sample.
class Mlp {
 public:
  /// Activations cached by a forward pass; activations[0] is the input and
  /// activations.back() the (linear) output.
  struct Tape {
    std::vector<Matrix> activations;
  };

  Mlp() = default;

  /// Weights uniform in +-1/sqrt(fan_in), biases zero.
  Mlp(std::vector<int> layer_sizes, num::RngStream& rng);

  static Mlp zeros(std::vector<int> layer_sizes);

  /// Sizes in -> hidden... -> out.
  static std::vector<int> architecture(int in_dim, const std::vector<int>& hidden, int out_dim);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  const std::vector<int>& layer_sizes() const { return sizes_; }

  Matrix& weight(int layer) { return weights_[layer]; }
  const Matrix& weight(int layer) const { return weights_[layer]; }
  Vector& bias(int layer) { return biases_[layer]; }
  const Vector& bias(int layer) const { return biases_[layer]; }

  Index num_params() const;

  /// Flat layout per layer: W column-major (out x in), then b.
  Vector flat() const;
  void set_flat(const Eigen::Ref<const Vector>& params);

  Matrix forward(const Matrix& inputs) const;
  Matrix forward(const Matrix& inputs, Tape& tape) const;
  Vector forward(const Vector& input) const;

  // Reverse pass for the scalar sum_j <grad_out(:, j), output(:, j)>.
  // Adds the parameter gradient into `param_grad` (flat layout) and returns
  // the gradient with respect to the inputs (empty if !input_grad).
  Matrix backward(const Tape& tape, const Matrix& grad_out,
                  Eigen::Ref<Vector> param_grad, bool input_grad = true) const;

  /// Directional derivative of every output column along a flat parameter
  /// direction (forward-mode through the cached tape).
  Matrix jvp(const Tape& tape, const Eigen::Ref<const Vector>& direction) const;

 private:
  void check_input(Index rows) const;

  std::vector<int> sizes_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

/// Log density of a diagonal Gaussian.
double gaussian_log_density(const Vector& mean, const Vector& std, const Vector& x);

/// Diagonal Gaussian policy N(mean_net(s), exp(log_std)^2) with a
/// state-independent log standard deviation.
class GaussianPolicy {
 public:
  struct Output {
    Vector mean;
    Vector std;
  };
  struct Sample {
    Vector action;
    double log_prob = 0.0;
  };

  static constexpr double kInitLogStd = -0.5;

  GaussianPolicy() = default;
  GaussianPolicy(int obs_dim, int act_dim, num::RngStream& rng,
                 const std::vector<int>& hidden = kDefaultHidden, double init_log_std = kInitLogStd);
  GaussianPolicy(Mlp mean_net, Vector log_std);

  int obs_dim() const { return mean_net_.input_dim(); }
  int act_dim() const { return mean_net_.output_dim(); }
  const Mlp& mean_net() const { return mean_net_; }
  Mlp& mean_net() { return mean_net_; }
  const Vector& log_std() const { return log_std_; }
  Vector std() const { return log_std_.array().exp(); }

  /// Mean-network parameters followed by log_std.
  Index num_params() const { return mean_net_.num_params() + log_std_.size(); }
  Vector flat() const;
  void set_flat(const Eigen::Ref<const Vector>& params);

  Output forward(const Vector& obs) const;
  Matrix means(const Matrix& obs) const;

  Sample sample(const Vector& obs, num::RngStream& rng) const;
  double log_prob(const Vector& obs, const Vector& action) const;
  Vector log_probs(const Matrix& obs, const Matrix& actions) const;

 private:
  Mlp mean_net_;
  Vector log_std_;
};

/// Snapshot of pi_k at rollout time: per-state means and stds (columns).
struct OldPolicyStats {
  Matrix means;
  Matrix stds;

  static OldPolicyStats record(const GaussianPolicy& policy, const Matrix& obs);
  Index size() const { return means.cols(); }
};

/// Mean over states of KL(old || policy), closed form for diagonal Gaussians.
double mean_kl(const OldPolicyStats& old, const GaussianPolicy& policy, const Matrix& obs);

// Curvature of mean_kl at the rollout policy, applied matrix-free. For a
// diagonal Gaussian the KL Hessian at new == old is the Fisher information:
// J^T diag(1/sigma^2) J over the mean network, 2 I over log_std (per state,
// averaged). Construction caches the forward tape so repeated products (as in
// conjugate gradient) cost one JVP and one backward pass each.
class KlCurvature {
 public:
  KlCurvature(const GaussianPolicy& policy, const Matrix& obs);

  Index dim() const { return dim_; }
  Vector apply(const Eigen::Ref<const Vector>& v, double damping) const;
  num::LinearOperator as_operator(double damping) const;

 private:
  const GaussianPolicy* policy_;
  Mlp::Tape tape_;
  Vector inv_var_;
  Index dim_;
  Index num_states_;
};

/// H v + damping v with H the KL Hessian at the current (= rollout) policy.
Vector fisher_vector_product(const GaussianPolicy& policy, const OldPolicyStats& old,
                             const Matrix& obs, const Vector& v, double damping);

struct SurrogateResult {
  double value = 0.0;
  Vector grad;
};

/// Importance-weighted surrogate mean(exp(logp_new - logp_old) * A) and its
/// gradient in flat policy parameters.
SurrogateResult surrogate_and_gradient(const GaussianPolicy& policy, const Matrix& obs,
                                       const Matrix& actions, const Vector& old_log_probs,
                                       const Vector& advantages);

/// Surrogate value alone (no backward pass); used during line search.
double surrogate_value(const GaussianPolicy& policy, const Matrix& obs, const Matrix& actions,
                       const Vector& old_log_probs, const Vector& advantages);

enum class OutputHead { kLinear, kSoftplus };

/// MLP with a single output, optionally passed through softplus.
class ScalarNet {
 public:
  ScalarNet() = default;
  // The output layer starts at zero so an untrained critic predicts exactly
  // zero (linear head) or softplus(0) (softplus head).
  ScalarNet(int in_dim, num::RngStream& rng, OutputHead head = OutputHead::kLinear,
            const std::vector<int>& hidden = kDefaultHidden);
  ScalarNet(Mlp net, OutputHead head);

  int input_dim() const { return net_.input_dim(); }
  OutputHead head() const { return head_; }
  const Mlp& mlp() const { return net_; }
  Mlp& mlp() { return net_; }

  Index num_params() const { return net_.num_params(); }
  Vector flat() const { return net_.flat(); }
  void set_flat(const Eigen::Ref<const Vector>& p) { net_.set_flat(p); }

  double predict(const Vector& input) const;
  Vector predict(const Matrix& inputs) const;

  // Parameter gradient of sum_j weights[j] * output_j; also returns outputs.
  Vector weighted_output_gradient(const Matrix& inputs, const Vector& weights,
                                  Vector* outputs = nullptr) const;

  /// Gradient of mean (output - target)^2; the loss itself goes to `mse`.
  Vector mse_gradient(const Matrix& inputs, const Vector& targets, double* mse = nullptr) const;

  /// d output / d input at a single point, plus the output value.
  Vector input_gradient(const Vector& input, double* value = nullptr) const;

 private:
  Mlp net_;
  OutputHead head_ = OutputHead::kLinear;
};

using ValueNet = ScalarNet;

double softplus(double x);
double sigmoid(double x);

/// Adam with bias correction; `step` returns the descent increment.
class Adam {
 public:
  Adam(Index dim, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  Vector step(const Vector& grad);
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  long t_ = 0;
};

enum class Optimizer { kAdam, kSgd };

struct FitOptions {
  int iters = 80;
  double lr = 1e-3;
  Optimizer optimizer = Optimizer::kAdam;
};

struct ValueFit {
  ScalarNet net;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  bool warning = false;  // final_mse > initial_mse
};

double mean_squared_error(const ScalarNet& net, const Matrix& inputs, const Vector& targets);

/// Full-batch regression of net(inputs) onto targets for `iters` steps.
ValueFit fit_value(ScalarNet net, const Matrix& inputs, const Vector& targets,
                   const FitOptions& options = {});

// Checkpoint byte layout (all integers and reals little-endian):
//   8 bytes  magic "GRDCKPT1"
//   u32      number of layer sizes k
//   u32 x k  layer sizes in -> ... -> out
//   u32      action dimension (0 for scalar critics)
//   u32      output head (0 linear, 1 softplus; 0 for policies)
//   u64      parameter count n
//   f64 x n  flat parameters (policy: mean network then log_std)
void save_policy(std::ostream& out, const GaussianPolicy& policy);
GaussianPolicy load_policy(std::istream& in);
void save_scalar_net(std::ostream& out, const ScalarNet& net);
ScalarNet load_scalar_net(std::istream& in);

}  // namespace guard::nn
