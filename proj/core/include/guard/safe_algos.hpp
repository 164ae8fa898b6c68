#pragma once

// Policy-update rules sharing one trust-region backbone: TRPO, the
// Lagrangian and feasible-actor-critic relaxations, the log-barrier variant,
// CPO, PCPO, and the two rollout-time action shields.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "guard/cmdp_runtime.hpp"
#include "guard/policy_net.hpp"

namespace guard::algo {

using num::Index;
using num::Matrix;
using num::Vector;

struct TrustRegionConfig {
  double max_kl = 0.02;
  int cg_iters = 10;
  double cg_residual_tol = 1e-10;
  double damping = 0.1;
  int backtrack_steps = 100;
  double backtrack_coeff = 0.8;

  void validate() const;
};

struct ConstraintConfig {
  double target_cost = 0.0;     // d
  double cost_reduction = 0.0;  // CPO: extra margin below d
  double ipo_t = 0.01;
  // Weight on the cost advantage when the barrier is undefined (J_C >= d).
  double ipo_infeasible_weight = 1.0;
  double lagrangian_lr = 0.005;
  double fac_lr = 1e-4;
  double gamma = 0.99;

  void validate() const;
};

struct ShieldConfig {
  double warmup_ratio = 1.0 / 3.0;
  int usl_iters = 20;
  double usl_eta = 0.05;
  nn::FitOptions fit{};
  std::size_t replay_capacity = 12000;  // newest samples kept for the safety-layer fit

  void validate() const;
};

struct LagrangeState {
  double lambda = 0.0;
};

struct UpdateReport {
  double kl_after = 0.0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double constraint_estimate = 0.0;
  std::optional<int> accepted_exponent;  // backtracking exponent j of the accepted step
  bool rejected = false;                 // parameters left unchanged
  double multiplier = 0.0;
  std::string branch;  // which case of the update rule fired
  bool warning = false;
};

/// Per-sample data an update works on; columns align with advantages.
struct PolicyBatch {
  Matrix observations;
  Matrix actions;
  Vector old_log_probs;

  static PolicyBatch from(const rt::StackedBatch& batch);
  Index size() const { return old_log_probs.size(); }
};

/// Full natural-gradient step sqrt(2 delta / x^T H x) x with x = H^{-1} g by CG.
struct NaturalStep {
  Vector direction;  // x
  Vector step;       // scaled full step (zero when x^T H x <= 0)
  double xhx = 0.0;
};
NaturalStep natural_step(const num::LinearOperator& curvature, const Vector& g, double max_kl,
                         int cg_iters, double cg_tol = 1e-10);

// Evaluation context around the rollout policy: the batch, the old-policy
// snapshot for KL, and the cached curvature operator.
class TrustRegion {
 public:
  TrustRegion(const nn::GaussianPolicy& policy, const PolicyBatch& batch, TrustRegionConfig config);

  const TrustRegionConfig& config() const { return config_; }
  const nn::GaussianPolicy& policy() const { return *policy_; }
  const PolicyBatch& batch() const { return *batch_; }

  nn::SurrogateResult surrogate(const Vector& advantages) const;
  double surrogate_at(const nn::GaussianPolicy& candidate, const Vector& advantages) const;
  double kl(const nn::GaussianPolicy& candidate) const;

  /// (H + damping I) applied to v.
  Vector curvature(const Vector& v) const;
  num::LinearOperator curvature_operator() const;
  /// CG solve of (H + damping I) x = g; throws NumericError on non-finite output.
  Vector solve(const Vector& g) const;

  nn::GaussianPolicy with_step(const Vector& step) const;

  struct SearchResult {
    nn::GaussianPolicy policy;
    std::optional<int> exponent;
    double kl = 0.0;
    int trials = 0;
  };
  // Tries theta + coeff^j * full_step for j = 0, 1, ... < backtrack_steps and
  // returns the first candidate `accept` approves (kl is already measured).
  SearchResult line_search(const Vector& full_step,
                           const std::function<bool(const nn::GaussianPolicy&, double kl)>& accept) const;

 private:
  const nn::GaussianPolicy* policy_;
  const PolicyBatch* batch_;
  TrustRegionConfig config_;
  nn::OldPolicyStats old_;
  nn::KlCurvature curvature_;
  Vector theta_;
};

struct StepResult {
  nn::GaussianPolicy policy;
  UpdateReport report;
};

StepResult trpo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                     const Vector& advantages, const TrustRegionConfig& config);

/// (A - lambda A_C) / (1 + lambda).
Vector composite_advantage(const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                           double lambda);

struct LagrangianResult {
  nn::GaussianPolicy policy;
  LagrangeState state;
  UpdateReport report;
};

/// max(0, lambda + lr (J_C - d)).
LagrangeState lagrange_update(const LagrangeState& state, double cost_estimate,
                              const ConstraintConfig& config);

LagrangianResult lagrangian_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                                 const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                                 const LagrangeState& state, double cost_estimate,
                                 const TrustRegionConfig& tr, const ConstraintConfig& cc);

/// State-dependent multiplier lambda(s) = softplus(net(s)) and its optimizer.
struct MultiplierNet {
  nn::ScalarNet net;
  nn::Adam optimizer;

  MultiplierNet(int obs_dim, num::RngStream& rng, double lr);
  Vector multipliers(const Matrix& obs) const { return net.predict(obs); }
};

/// Gradient (in multiplier parameters) of mean_s[lambda(s) (cost_return(s) - d)].
Vector multiplier_ascent_gradient(const nn::ScalarNet& net, const Matrix& obs,
                                  const Vector& cost_returns, double target_cost);

struct FacResult {
  nn::GaussianPolicy policy;
  UpdateReport report;
};

/// Updates `multiplier` in place by one ascent step after the policy step.
FacResult fac_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                   const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                   const Vector& cost_returns, MultiplierNet& multiplier,
                   const TrustRegionConfig& tr, const ConstraintConfig& cc);

/// log(-x) / t; requires x < 0 and t > 0.
double ipo_barrier(double x, double t);
/// Weight on A_C implied by the barrier at x = J_C - d (or the fallback).
double ipo_cost_weight(double cost_estimate, const ConstraintConfig& config);

StepResult ipo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                    const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                    double cost_estimate, const TrustRegionConfig& tr, const ConstraintConfig& cc);

// Quantities of the linear-objective, linear-constraint, quadratic trust
// region problem  max g^T x  s.t.  b + c^T x <= 0,  0.5 x^T H x <= delta,
// with v = H^{-1} g, w = H^{-1} c, q = g^T v, r = g^T w, s = c^T w.
struct LolqcTerms {
  Vector v;
  Vector w;
  double q = 0.0;
  double r = 0.0;
  double s = 0.0;
  double b = 0.0;
};

enum class CpoCase { kRecovery, kConstraintActive, kBothActive, kTrustRegionOnly };
std::string_view to_string(CpoCase c);

struct CpoDirection {
  Vector step;
  CpoCase branch = CpoCase::kTrustRegionOnly;
  double lambda = 0.0;
  double nu = 0.0;
};

/// Dual solution of the LOLQC problem (or the recovery step when infeasible).
CpoDirection cpo_direction(const LolqcTerms& terms, double max_kl);

StepResult cpo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                    const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                    double cost_estimate, const TrustRegionConfig& tr, const ConstraintConfig& cc);

enum class Projection { kL2, kKL };

/// PCPO step: reward natural step followed by projection onto the
/// linearized constraint in the L2 or KL metric. w_l is L^{-1} c.
Vector pcpo_direction(const LolqcTerms& terms, const Vector& c, const Vector& w_l, double max_kl);

StepResult pcpo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                     const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                     double cost_estimate, const TrustRegionConfig& tr, const ConstraintConfig& cc,
                     Projection projection);

// ----------------------------------------------------------------- shields --

/// Per-state linear cost model: outputs a gradient vector over actions and a bias.
class SafetyLayerModel {
 public:
  SafetyLayerModel(int obs_dim, int act_dim, num::RngStream& rng,
                   const std::vector<int>& hidden = nn::kDefaultHidden);

  struct Prediction {
    Vector gradient;
    double bias = 0.0;
  };
  Prediction predict(const Vector& obs) const;

  int act_dim() const { return act_dim_; }
  const nn::Mlp& net() const { return net_; }
  nn::Mlp& net() { return net_; }

  /// Mean of (g(s)^T a + bias(s) - (c_next - c_prev))^2 and its parameter gradient.
  double loss(const Matrix& obs, const Matrix& actions, const Vector& cost_delta,
              Vector* grad = nullptr) const;

 private:
  nn::Mlp net_;
  int act_dim_;
};

struct SafetyDataset {
  Matrix observations;
  Matrix actions;
  Vector prev_costs;
  Vector next_costs;

  Index size() const { return prev_costs.size(); }
  /// Appends and keeps only the newest `capacity` samples.
  void append(const SafetyDataset& more, std::size_t capacity);
};

struct FitReport {
  std::vector<double> losses;  // before each iteration, then the final value
};

FitReport safety_layer_fit(SafetyLayerModel& model, const SafetyDataset& data,
                           const nn::FitOptions& options);

/// a_ref - max(0, (g^T a_ref + c_prev - d) / g^T g) g, clipped to [-1, 1].
Vector safety_layer_project(const Vector& a_ref, const Vector& g, double c_prev, double d);

struct UslResult {
  Vector action;
  int iterations = 0;
};

/// value_and_grad(a) returns Q_C(s, a) and writes d Q_C / d a.
using CostQFn = std::function<double(const Vector& action, Vector& grad)>;

UslResult usl_correct(const Vector& a_ref, const CostQFn& q_cost, double d, double eta, int iters);

/// Q_C(s, a) through a scalar net over the stacked input [s; a].
CostQFn cost_q_function(const nn::ScalarNet& qc_net, const Vector& obs);

/// Regresses Q_C([s; a]) onto the discounted cost-to-go targets.
FitReport usl_fit_qc(nn::ScalarNet& qc_net, const Matrix& obs, const Matrix& actions,
                     const Vector& targets, const nn::FitOptions& options);

// ---------------------------------------------------------- algorithm API --

struct AlgorithmConfig {
  TrustRegionConfig trust_region{};
  ConstraintConfig constraint{};
  ShieldConfig shield{};

  void validate() const;
};

struct UpdateInputs {
  const rt::Batch& batch;
  const rt::StackedBatch& stacked;
  const rt::AdvantageEstimates& estimates;
  int epoch = 0;  // 0-based
  int total_epochs = 1;
};

class Algorithm {
 public:
  virtual ~Algorithm() = default;

  virtual std::string_view name() const = 0;
  /// Whether the update reads cost advantages (and so needs a fitted cost critic).
  virtual bool uses_cost_critic() const { return true; }
  /// Applies one policy update in place.
  virtual UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) = 0;
  /// Rollout-time action filter for the given epoch; empty when not shielding.
  virtual rt::ShieldFn shield(int /*epoch*/, int /*total_epochs*/) const { return {}; }
  virtual double multiplier() const { return 0.0; }
};

const std::vector<std::string_view>& algorithm_names();

/// Throws std::invalid_argument for an unknown name.
std::unique_ptr<Algorithm> make_algorithm(std::string_view name, const AlgorithmConfig& config,
                                          int obs_dim, int act_dim, std::uint64_t seed);

/// First epoch (0-based) at which shields filter actions.
int shield_start_epoch(double warmup_ratio, int total_epochs);

}  // namespace guard::algo
