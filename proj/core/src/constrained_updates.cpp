#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "guard/safe_algos.hpp"

namespace guard::algo {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Below this g_c^T H^{-1} g_c the cost gradient carries no usable direction.
constexpr double kDegenerateCurvature = 1e-12;
constexpr int kMaxValveHalvings = 60;

double clamp_to(double x, double lo, double hi) { return std::max(lo, std::min(hi, x)); }

void check_lengths(const PolicyBatch& batch, const rt::RewardAdvantages& adv,
                   const rt::CostAdvantages& adv_c) {
  if (adv.values.size() != batch.size() || adv_c.values.size() != batch.size()) {
    throw std::invalid_argument("advantages do not match the batch size");
  }
}

// Gradients and CG solves shared by CPO and PCPO.
struct ConstrainedProblem {
  nn::SurrogateResult reward;
  nn::SurrogateResult cost;  // gradient already scaled by 1 / (1 - gamma)
  LolqcTerms terms;
};

ConstrainedProblem linearize(const TrustRegion& tr, const rt::RewardAdvantages& adv,
                             const rt::CostAdvantages& adv_c, double cost_estimate,
                             const ConstraintConfig& cc) {
  ConstrainedProblem p;
  p.reward = tr.surrogate(adv.values);
  p.cost = tr.surrogate(adv_c.values);
  p.cost.grad /= (1.0 - cc.gamma);
  p.terms.b = cost_estimate - (cc.target_cost - cc.cost_reduction);
  return p;
}

void solve_terms(const TrustRegion& tr, ConstrainedProblem& p) {
  LolqcTerms& t = p.terms;
  t.v = tr.solve(p.reward.grad);
  t.w = tr.solve(p.cost.grad);
  t.q = p.reward.grad.dot(t.v);
  t.r = p.reward.grad.dot(t.w);
  t.s = p.cost.grad.dot(t.w);
}

StepResult degenerate_fallback(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                               const rt::RewardAdvantages& adv, const TrustRegionConfig& tr,
                               double cost_estimate) {
  StepResult out = trpo_step(policy, batch, adv.values, tr);
  out.report.warning = true;
  out.report.branch = "degenerate-cost-gradient";
  out.report.constraint_estimate = cost_estimate;
  return out;
}

}  // namespace

// -------------------------------------------------------------- Lagrangian --

Vector composite_advantage(const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                           double lambda) {
  if (adv.values.size() != adv_c.values.size()) {
    throw std::invalid_argument("composite_advantage: length mismatch");
  }
  if (!(lambda >= 0.0)) throw std::invalid_argument("composite_advantage: lambda must be >= 0");
  return (adv.values - lambda * adv_c.values) / (1.0 + lambda);
}

LagrangeState lagrange_update(const LagrangeState& state, double cost_estimate,
                              const ConstraintConfig& config) {
  num::require_finite(cost_estimate, "constraint estimate");
  return {std::max(0.0, state.lambda + config.lagrangian_lr * (cost_estimate - config.target_cost))};
}

LagrangianResult lagrangian_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                                 const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                                 const LagrangeState& state, double cost_estimate,
                                 const TrustRegionConfig& tr, const ConstraintConfig& cc) {
  check_lengths(batch, adv, adv_c);
  StepResult step = trpo_step(policy, batch, composite_advantage(adv, adv_c, state.lambda), tr);
  LagrangianResult out{std::move(step.policy), lagrange_update(state, cost_estimate, cc),
                       std::move(step.report)};
  out.report.constraint_estimate = cost_estimate;
  out.report.multiplier = out.state.lambda;
  return out;
}

// --------------------------------------------------------------------- FAC --

MultiplierNet::MultiplierNet(int obs_dim, num::RngStream& rng, double lr)
    : net(obs_dim, rng, nn::OutputHead::kSoftplus), optimizer(net.num_params(), lr) {}

Vector multiplier_ascent_gradient(const nn::ScalarNet& net, const Matrix& obs,
                                  const Vector& cost_returns, double target_cost) {
  if (cost_returns.size() != obs.cols() || obs.cols() == 0) {
    throw std::invalid_argument("multiplier_ascent_gradient: returns not aligned with states");
  }
  const Vector weights =
      (cost_returns.array() - target_cost).matrix() / static_cast<double>(cost_returns.size());
  Vector grad = net.weighted_output_gradient(obs, weights);
  num::require_finite(grad, "multiplier gradient");
  return grad;
}

FacResult fac_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                   const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                   const Vector& cost_returns, MultiplierNet& multiplier,
                   const TrustRegionConfig& tr, const ConstraintConfig& cc) {
  check_lengths(batch, adv, adv_c);
  const Vector lambdas = multiplier.multipliers(batch.observations);
  const double scale = 1.0 + lambdas.mean();
  const Vector composite =
      (adv.values.array() - lambdas.array() * adv_c.values.array()).matrix() / scale;
  StepResult step = trpo_step(policy, batch, composite, tr);

  // Ascent on the statewise penalty; Adam returns a descent increment.
  const Vector grad = multiplier_ascent_gradient(multiplier.net, batch.observations, cost_returns,
                                                 cc.target_cost);
  multiplier.net.set_flat(multiplier.net.flat() - multiplier.optimizer.step(-grad));

  FacResult out{std::move(step.policy), std::move(step.report)};
  out.report.multiplier = multiplier.multipliers(batch.observations).mean();
  return out;
}

// --------------------------------------------------------------------- IPO --

double ipo_barrier(double x, double t) {
  if (!(t > 0.0)) throw std::invalid_argument("ipo_barrier: t must be > 0");
  if (!(x < 0.0)) throw std::domain_error("ipo_barrier: defined only for x < 0");
  return std::log(-x) / t;
}

double ipo_cost_weight(double cost_estimate, const ConstraintConfig& config) {
  const double x = cost_estimate - config.target_cost;
  // d/dx log(-x)/t = 1/(t x); the cost advantage enters with weight 1/(t |x|).
  if (x < 0.0) return 1.0 / (config.ipo_t * -x);
  return config.ipo_infeasible_weight;
}

StepResult ipo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                    const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                    double cost_estimate, const TrustRegionConfig& tr, const ConstraintConfig& cc) {
  check_lengths(batch, adv, adv_c);
  if (!(cc.ipo_t > 0.0)) throw std::invalid_argument("ipo_step: t must be > 0");
  const double weight = ipo_cost_weight(cost_estimate, cc);
  StepResult out = trpo_step(policy, batch, adv.values - weight * adv_c.values, tr);
  out.report.branch = cost_estimate < cc.target_cost ? "barrier" : "infeasible-penalty";
  out.report.constraint_estimate = cost_estimate;
  out.report.multiplier = weight;
  return out;
}

// --------------------------------------------------------------------- CPO --

std::string_view to_string(CpoCase c) {
  switch (c) {
    case CpoCase::kRecovery: return "recovery";
    case CpoCase::kConstraintActive: return "constraint-active";
    case CpoCase::kBothActive: return "both-active";
    case CpoCase::kTrustRegionOnly: return "trust-region-only";
  }
  return "?";
}

CpoDirection cpo_direction(const LolqcTerms& t, double max_kl) {
  if (!(t.s > 0.0)) throw std::invalid_argument("cpo_direction: s must be > 0");
  CpoDirection out;
  const double delta = max_kl;
  const double B = 2.0 * delta - t.b * t.b / t.s;

  if (t.b > 0.0 && B < 0.0) {
    out.branch = CpoCase::kRecovery;
    out.step = -std::sqrt(2.0 * delta / t.s) * t.w;
    return out;
  }
  if (t.b < 0.0 && B < 0.0) {
    // The whole trust region satisfies the linear constraint.
    out.branch = CpoCase::kTrustRegionOnly;
    if (!(t.q > 0.0)) {
      out.step = Vector::Zero(t.v.size());
      return out;
    }
    out.lambda = std::sqrt(t.q / (2.0 * delta));
    out.step = t.v / out.lambda;
    return out;
  }

  // Dual over lambda > 0 with nu*(lambda) = max(0, lambda b + r) / s.
  // nu > 0 on one side of lambda = -r/b; D_a applies there, D_b elsewhere.
  const double A = std::max(0.0, t.q - t.r * t.r / t.s);
  double split;
  if (t.b != 0.0) {
    split = -t.r / t.b;
  } else {
    split = t.r > 0.0 ? -kInf : kInf;
  }
  double la_lo, la_hi, lb_lo, lb_hi;
  if (t.b < 0.0) {
    la_lo = 0.0, la_hi = split, lb_lo = split, lb_hi = kInf;
  } else {
    la_lo = split, la_hi = kInf, lb_lo = 0.0, lb_hi = split;
  }
  const double lam_a = clamp_to(std::sqrt(A / B), la_lo, la_hi);
  const double lam_b = clamp_to(std::sqrt(t.q / (2.0 * delta)), lb_lo, lb_hi);
  auto f_a = [&](double lam) {
    if (!(lam > 0.0) || !std::isfinite(lam)) return -kInf;
    return -0.5 * (A / lam + B * lam) + t.r * t.b / t.s;
  };
  auto f_b = [&](double lam) {
    if (!(lam > 0.0) || !std::isfinite(lam)) return -kInf;
    return -0.5 * (t.q / lam + 2.0 * delta * lam);
  };
  const double fa = f_a(lam_a);
  const double fb = f_b(lam_b);
  if (fa == -kInf && fb == -kInf) {
    // g parallel to c in the H metric (A = 0) or g = 0: the limit of the
    // dual solution puts the iterate on the constraint boundary.
    out.branch = CpoCase::kConstraintActive;
    out.step = -(t.b / t.s) * t.w;
    return out;
  }
  const bool use_a = fa >= fb;
  out.lambda = use_a ? lam_a : lam_b;
  out.nu = std::max(0.0, out.lambda * t.b + t.r) / t.s;
  out.branch = out.nu > 0.0 ? (use_a ? CpoCase::kBothActive : CpoCase::kConstraintActive)
                            : CpoCase::kTrustRegionOnly;
  out.step = (t.v - out.nu * t.w) / out.lambda;
  return out;
}

StepResult cpo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                    const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                    double cost_estimate, const TrustRegionConfig& cfg, const ConstraintConfig& cc) {
  check_lengths(batch, adv, adv_c);
  const TrustRegion tr(policy, batch, cfg);
  ConstrainedProblem p = linearize(tr, adv, adv_c, cost_estimate, cc);
  if (p.cost.grad.squaredNorm() == 0.0) {
    return degenerate_fallback(policy, batch, adv, cfg, cost_estimate);
  }
  solve_terms(tr, p);
  if (!(p.terms.s > kDegenerateCurvature)) {
    return degenerate_fallback(policy, batch, adv, cfg, cost_estimate);
  }

  StepResult out{policy, {}};
  out.report.constraint_estimate = cost_estimate;
  out.report.surrogate_before = p.reward.value;
  out.report.surrogate_after = p.reward.value;

  const CpoDirection dir = cpo_direction(p.terms, cfg.max_kl);
  out.report.branch = std::string(to_string(dir.branch));
  out.report.multiplier = dir.nu;
  if (dir.step.squaredNorm() == 0.0) {
    out.report.rejected = true;
    return out;
  }

  const double slack = std::max(0.0, -p.terms.b);
  const double gamma_scale = 1.0 / (1.0 - cc.gamma);
  double accepted_value = p.reward.value;
  auto search = tr.line_search(dir.step, [&](const nn::GaussianPolicy& cand, double kl) {
    if (kl > cfg.max_kl) return false;
    const double cost_change = gamma_scale * (tr.surrogate_at(cand, adv_c.values) - p.cost.value);
    if (cost_change > slack) return false;
    accepted_value = tr.surrogate_at(cand, adv.values);
    return true;
  });
  if (!search.exponent) {
    out.report.rejected = true;
    return out;
  }
  out.policy = std::move(search.policy);
  out.report.accepted_exponent = search.exponent;
  out.report.kl_after = search.kl;
  out.report.surrogate_after = accepted_value;
  return out;
}

// -------------------------------------------------------------------- PCPO --

Vector pcpo_direction(const LolqcTerms& t, const Vector& c, const Vector& w_l, double max_kl) {
  const double denom = c.dot(w_l);
  if (!(denom > 0.0)) throw std::invalid_argument("pcpo_direction: c^T L^{-1} c must be > 0");
  const double alpha = t.q > 0.0 ? std::sqrt(2.0 * max_kl / t.q) : 0.0;
  const double coef = std::max(0.0, (alpha * t.r + t.b) / denom);
  return alpha * t.v - coef * w_l;
}

StepResult pcpo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                     const rt::RewardAdvantages& adv, const rt::CostAdvantages& adv_c,
                     double cost_estimate, const TrustRegionConfig& cfg, const ConstraintConfig& cc,
                     Projection projection) {
  check_lengths(batch, adv, adv_c);
  const TrustRegion tr(policy, batch, cfg);
  ConstrainedProblem p = linearize(tr, adv, adv_c, cost_estimate, cc);
  if (p.cost.grad.squaredNorm() == 0.0) {
    return degenerate_fallback(policy, batch, adv, cfg, cost_estimate);
  }
  solve_terms(tr, p);
  if (!(p.terms.s > kDegenerateCurvature)) {
    return degenerate_fallback(policy, batch, adv, cfg, cost_estimate);
  }

  const Vector& w_l = projection == Projection::kKL ? p.terms.w : p.cost.grad;
  Vector step = pcpo_direction(p.terms, p.cost.grad, w_l, cfg.max_kl);

  StepResult out{policy, {}};
  out.report.constraint_estimate = cost_estimate;
  out.report.surrogate_before = p.reward.value;
  const double alpha = p.terms.q > 0.0 ? std::sqrt(2.0 * cfg.max_kl / p.terms.q) : 0.0;
  const bool projected = alpha * p.terms.r + p.terms.b > 0.0;
  out.report.branch = projected ? "projected" : "unprojected";
  if (step.squaredNorm() == 0.0) {
    out.report.rejected = true;
    out.report.surrogate_after = p.reward.value;
    return out;
  }

  nn::GaussianPolicy candidate = tr.with_step(step);
  double kl = tr.kl(candidate);
  int halvings = 0;
  while (!(kl <= 4.0 * cfg.max_kl) && halvings < kMaxValveHalvings) {
    step *= 0.5;
    candidate = tr.with_step(step);
    kl = tr.kl(candidate);
    ++halvings;
  }
  if (!(kl <= 4.0 * cfg.max_kl)) {
    out.report.rejected = true;
    out.report.warning = true;
    out.report.surrogate_after = p.reward.value;
    return out;
  }
  if (halvings > 0) out.report.warning = true;
  out.report.accepted_exponent = halvings;
  out.report.kl_after = kl;
  out.report.surrogate_after = tr.surrogate_at(candidate, adv.values);
  out.policy = std::move(candidate);
  return out;
}

}  // namespace guard::algo
