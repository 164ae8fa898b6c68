#include "guard/policy_net.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace guard::nn {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_batch(const Matrix& obs, const Matrix& actions, const Vector& a, const Vector& b) {
  const Index n = obs.cols();
  if (actions.cols() != n || a.size() != n || b.size() != n) {
    throw std::invalid_argument("batch arrays are not aligned: " + std::to_string(n) +
                                " observations");
  }
  if (n == 0) throw std::invalid_argument("empty batch");
}

}  // namespace

double gaussian_log_density(const Vector& mean, const Vector& std, const Vector& x) {
  double total = 0.0;
  for (Index j = 0; j < mean.size(); ++j) {
    const double z = (x[j] - mean[j]) / std[j];
    total += -0.5 * z * z - std::log(std[j]) - 0.5 * kLog2Pi;
  }
  return total;
}

// ---------------------------------------------------------------- policy --

GaussianPolicy::GaussianPolicy(int obs_dim, int act_dim, num::RngStream& rng,
                               const std::vector<int>& hidden, double init_log_std)
    : mean_net_(Mlp::architecture(obs_dim, hidden, act_dim), rng),
      log_std_(Vector::Constant(act_dim, init_log_std)) {}

GaussianPolicy::GaussianPolicy(Mlp mean_net, Vector log_std)
    : mean_net_(std::move(mean_net)), log_std_(std::move(log_std)) {
  if (log_std_.size() != mean_net_.output_dim()) {
    throw std::invalid_argument("GaussianPolicy: log_std length must equal action dimension");
  }
  num::require_finite(log_std_, "GaussianPolicy log_std");
}

Vector GaussianPolicy::flat() const {
  Vector out(num_params());
  out.head(mean_net_.num_params()) = mean_net_.flat();
  out.tail(log_std_.size()) = log_std_;
  return out;
}

void GaussianPolicy::set_flat(const Eigen::Ref<const Vector>& params) {
  if (params.size() != num_params()) {
    throw std::invalid_argument("GaussianPolicy::set_flat: wrong parameter count");
  }
  mean_net_.set_flat(params.head(mean_net_.num_params()));
  log_std_ = params.tail(log_std_.size());
}

GaussianPolicy::Output GaussianPolicy::forward(const Vector& obs) const {
  return {mean_net_.forward(obs), std()};
}

Matrix GaussianPolicy::means(const Matrix& obs) const { return mean_net_.forward(obs); }

GaussianPolicy::Sample GaussianPolicy::sample(const Vector& obs, num::RngStream& rng) const {
  Output out = forward(obs);
  Sample s;
  s.action = out.mean + out.std.cwiseProduct(rng.normal_vector(act_dim()));
  s.log_prob = gaussian_log_density(out.mean, out.std, s.action);
  return s;
}

double GaussianPolicy::log_prob(const Vector& obs, const Vector& action) const {
  if (action.size() != act_dim()) throw std::invalid_argument("log_prob: action dimension");
  const Output out = forward(obs);
  return gaussian_log_density(out.mean, out.std, action);
}

Vector GaussianPolicy::log_probs(const Matrix& obs, const Matrix& actions) const {
  const Matrix mu = means(obs);
  const Vector sd = std();
  Vector out(obs.cols());
  for (Index i = 0; i < obs.cols(); ++i) out[i] = gaussian_log_density(mu.col(i), sd, actions.col(i));
  return out;
}

OldPolicyStats OldPolicyStats::record(const GaussianPolicy& policy, const Matrix& obs) {
  OldPolicyStats stats;
  stats.means = policy.means(obs);
  stats.stds = policy.std().replicate(1, obs.cols());
  return stats;
}

double mean_kl(const OldPolicyStats& old, const GaussianPolicy& policy, const Matrix& obs) {
  if (obs.cols() == 0) throw std::invalid_argument("mean_kl: empty batch");
  if (old.size() != obs.cols()) throw std::invalid_argument("mean_kl: stats/batch mismatch");
  const Matrix mu = policy.means(obs);
  const Vector log_sd = policy.log_std();
  const Vector var = (2.0 * log_sd).array().exp();
  double total = 0.0;
  for (Index i = 0; i < obs.cols(); ++i) {
    for (Index j = 0; j < mu.rows(); ++j) {
      const double so = old.stds(j, i);
      const double diff = old.means(j, i) - mu(j, i);
      total += log_sd[j] - std::log(so) + (so * so + diff * diff) / (2.0 * var[j]) - 0.5;
    }
  }
  const double kl = total / static_cast<double>(obs.cols());
  num::require_finite(kl, "mean_kl");
  return kl;
}

// ------------------------------------------------------------- curvature --

KlCurvature::KlCurvature(const GaussianPolicy& policy, const Matrix& obs)
    : policy_(&policy), dim_(policy.num_params()), num_states_(obs.cols()) {
  if (num_states_ == 0) throw std::invalid_argument("KlCurvature: empty batch");
  policy.mean_net().forward(obs, tape_);
  inv_var_ = (-2.0 * policy.log_std()).array().exp();
  num::require_finite(inv_var_, "KlCurvature inverse variance");
}

Vector KlCurvature::apply(const Eigen::Ref<const Vector>& v, double damping) const {
  if (v.size() != dim_) {
    throw std::invalid_argument("fisher_vector_product: vector length " +
                                std::to_string(v.size()) + " != parameter count " +
                                std::to_string(dim_));
  }
  const Mlp& net = policy_->mean_net();
  const Index n_mean = net.num_params();
  const Index act = policy_->act_dim();

  Matrix jv = net.jvp(tape_, v.head(n_mean));
  jv.array().colwise() *= inv_var_.array();
  jv /= static_cast<double>(num_states_);

  Vector out = Vector::Zero(dim_);
  net.backward(tape_, jv, out.head(n_mean), false);
  out.tail(act) = 2.0 * v.tail(act);
  out += damping * v;
  num::require_finite(out, "fisher_vector_product");
  return out;
}

num::LinearOperator KlCurvature::as_operator(double damping) const {
  return num::LinearOperator(dim_, [this, damping](const Vector& v) { return apply(v, damping); });
}

Vector fisher_vector_product(const GaussianPolicy& policy, const OldPolicyStats& old,
                             const Matrix& obs, const Vector& v, double damping) {
  if (old.size() != obs.cols()) throw std::invalid_argument("fisher_vector_product: stats/batch");
  return KlCurvature(policy, obs).apply(v, damping);
}

// ------------------------------------------------------------- surrogate --

SurrogateResult surrogate_and_gradient(const GaussianPolicy& policy, const Matrix& obs,
                                       const Matrix& actions, const Vector& old_log_probs,
                                       const Vector& advantages) {
  check_batch(obs, actions, old_log_probs, advantages);
  const Index n = obs.cols();
  const Mlp& net = policy.mean_net();
  Mlp::Tape tape;
  const Matrix mu = net.forward(obs, tape);
  const Vector sd = policy.std();
  const Vector inv_var = sd.array().square().inverse();

  Matrix grad_mean(mu.rows(), n);
  Vector grad_log_std = Vector::Zero(sd.size());
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double logp = gaussian_log_density(mu.col(i), sd, actions.col(i));
    const double ratio = std::exp(logp - old_log_probs[i]);
    num::require_finite(ratio, "surrogate ratio");
    total += ratio * advantages[i];
    const double w = ratio * advantages[i] / static_cast<double>(n);
    const Vector diff = actions.col(i) - mu.col(i);
    grad_mean.col(i) = w * diff.cwiseProduct(inv_var);
    grad_log_std.array() += w * (diff.array().square() * inv_var.array() - 1.0);
  }

  SurrogateResult result;
  result.value = total / static_cast<double>(n);
  result.grad = Vector::Zero(policy.num_params());
  net.backward(tape, grad_mean, result.grad.head(net.num_params()), false);
  result.grad.tail(sd.size()) = grad_log_std;
  num::require_finite(result.grad, "surrogate gradient");
  return result;
}

double surrogate_value(const GaussianPolicy& policy, const Matrix& obs, const Matrix& actions,
                       const Vector& old_log_probs, const Vector& advantages) {
  check_batch(obs, actions, old_log_probs, advantages);
  const Vector logp = policy.log_probs(obs, actions);
  const Vector ratio = (logp - old_log_probs).array().exp();
  const double value = ratio.dot(advantages) / static_cast<double>(obs.cols());
  num::require_finite(value, "surrogate value");
  return value;
}

// ------------------------------------------------------------ scalar net --

double softplus(double x) {
  // log(1 + e^x) without overflow for large x.
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ScalarNet::ScalarNet(int in_dim, num::RngStream& rng, OutputHead head,
                     const std::vector<int>& hidden)
    : net_(Mlp::architecture(in_dim, hidden, 1), rng), head_(head) {
  const int last = net_.num_layers() - 1;
  net_.weight(last).setZero();
  net_.bias(last).setZero();
}

ScalarNet::ScalarNet(Mlp net, OutputHead head) : net_(std::move(net)), head_(head) {
  if (net_.output_dim() != 1) throw std::invalid_argument("ScalarNet: output dimension must be 1");
}

double ScalarNet::predict(const Vector& input) const {
  const double z = net_.forward(input)[0];
  return head_ == OutputHead::kSoftplus ? softplus(z) : z;
}

Vector ScalarNet::predict(const Matrix& inputs) const {
  Vector z = net_.forward(inputs).row(0).transpose();
  if (head_ == OutputHead::kSoftplus) z = z.unaryExpr([](double v) { return softplus(v); });
  return z;
}

Vector ScalarNet::weighted_output_gradient(const Matrix& inputs, const Vector& weights,
                                           Vector* outputs) const {
  if (weights.size() != inputs.cols()) {
    throw std::invalid_argument("ScalarNet: weights must match the number of inputs");
  }
  Mlp::Tape tape;
  const Matrix z = net_.forward(inputs, tape);
  Matrix grad_out = weights.transpose();
  if (head_ == OutputHead::kSoftplus) {
    for (Index i = 0; i < z.cols(); ++i) grad_out(0, i) *= sigmoid(z(0, i));
  }
  if (outputs != nullptr) {
    *outputs = z.row(0).transpose();
    if (head_ == OutputHead::kSoftplus) {
      *outputs = outputs->unaryExpr([](double v) { return softplus(v); });
    }
  }
  Vector grad = Vector::Zero(net_.num_params());
  net_.backward(tape, grad_out, grad, false);
  return grad;
}

Vector ScalarNet::mse_gradient(const Matrix& inputs, const Vector& targets, double* mse) const {
  if (targets.size() != inputs.cols() || targets.size() == 0) {
    throw std::invalid_argument("ScalarNet::mse_gradient: targets not aligned with inputs");
  }
  const double n = static_cast<double>(targets.size());
  Mlp::Tape tape;
  const Matrix z = net_.forward(inputs, tape);
  Matrix grad_out(1, z.cols());
  double total = 0.0;
  for (Index i = 0; i < z.cols(); ++i) {
    const double pre = z(0, i);
    const double pred = head_ == OutputHead::kSoftplus ? softplus(pre) : pre;
    const double residual = pred - targets[i];
    total += residual * residual;
    grad_out(0, i) = (2.0 / n) * residual * (head_ == OutputHead::kSoftplus ? sigmoid(pre) : 1.0);
  }
  if (mse != nullptr) *mse = total / n;
  Vector grad = Vector::Zero(net_.num_params());
  net_.backward(tape, grad_out, grad, false);
  return grad;
}

Vector ScalarNet::input_gradient(const Vector& input, double* value) const {
  Mlp::Tape tape;
  const Matrix z = net_.forward(Matrix(input), tape);
  Matrix grad_out(1, 1);
  grad_out(0, 0) = head_ == OutputHead::kSoftplus ? sigmoid(z(0, 0)) : 1.0;
  if (value != nullptr) *value = head_ == OutputHead::kSoftplus ? softplus(z(0, 0)) : z(0, 0);
  Vector scratch = Vector::Zero(net_.num_params());
  return net_.backward(tape, grad_out, scratch).col(0);
}

// ------------------------------------------------------------- optimiser --

Adam::Adam(Index dim, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(Vector::Zero(dim)),
      v_(Vector::Zero(dim)) {}

Vector Adam::step(const Vector& grad) {
  if (grad.size() != m_.size()) throw std::invalid_argument("Adam: gradient length");
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  return (lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_)).matrix();
}

double mean_squared_error(const ScalarNet& net, const Matrix& inputs, const Vector& targets) {
  if (targets.size() != inputs.cols() || targets.size() == 0) {
    throw std::invalid_argument("mean_squared_error: targets not aligned with inputs");
  }
  const double mse = (net.predict(inputs) - targets).squaredNorm() / static_cast<double>(targets.size());
  num::require_finite(mse, "regression loss");
  return mse;
}

ValueFit fit_value(ScalarNet net, const Matrix& inputs, const Vector& targets,
                   const FitOptions& options) {
  if (targets.size() != inputs.cols() || targets.size() == 0) {
    throw std::invalid_argument("fit_value: targets not aligned with inputs");
  }
  if (options.iters < 0 || !(options.lr > 0.0)) throw std::invalid_argument("fit_value: options");

  ValueFit fit;
  Adam adam(net.num_params(), options.lr);
  Vector params = net.flat();
  for (int it = 0; it < options.iters; ++it) {
    double mse = 0.0;
    const Vector grad = net.mse_gradient(inputs, targets, &mse);
    num::require_finite(mse, "regression loss");
    if (it == 0) fit.initial_mse = mse;
    params -= options.optimizer == Optimizer::kAdam ? adam.step(grad) : Vector(options.lr * grad);
    net.set_flat(params);
  }
  fit.final_mse = mean_squared_error(net, inputs, targets);
  if (options.iters == 0) fit.initial_mse = fit.final_mse;
  fit.warning = fit.final_mse > fit.initial_mse;
  fit.net = std::move(net);
  return fit;
}

}  // namespace guard::nn
