#include <cmath>
#include <stdexcept>

#include "guard/safe_algos.hpp"

namespace guard::algo {

void TrustRegionConfig::validate() const {
  if (!(max_kl > 0.0)) throw std::invalid_argument("TrustRegionConfig: max_kl must be > 0");
  if (!(backtrack_coeff > 0.0 && backtrack_coeff < 1.0)) {
    throw std::invalid_argument("TrustRegionConfig: backtrack_coeff must lie in (0, 1)");
  }
  if (backtrack_steps < 1 || cg_iters < 1) {
    throw std::invalid_argument("TrustRegionConfig: backtrack_steps and cg_iters must be >= 1");
  }
  if (damping < 0.0) throw std::invalid_argument("TrustRegionConfig: damping must be >= 0");
}

PolicyBatch PolicyBatch::from(const rt::StackedBatch& batch) {
  return {batch.observations, batch.actions, batch.log_probs};
}

NaturalStep natural_step(const num::LinearOperator& curvature, const Vector& g, double max_kl,
                         int cg_iters, double cg_tol) {
  NaturalStep out;
  const num::CgResult cg = num::conjugate_gradient(curvature, g, cg_iters, cg_tol);
  num::require_finite(cg.x, "conjugate-gradient solution");
  out.direction = cg.x;
  out.xhx = cg.x.dot(curvature(cg.x));
  out.step = Vector::Zero(g.size());
  if (out.xhx > 0.0) out.step = std::sqrt(2.0 * max_kl / out.xhx) * cg.x;
  return out;
}

TrustRegion::TrustRegion(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                         TrustRegionConfig config)
    : policy_(&policy),
      batch_(&batch),
      config_(config),
      old_(nn::OldPolicyStats::record(policy, batch.observations)),
      curvature_(policy, batch.observations),
      theta_(policy.flat()) {
  config_.validate();
  if (batch.observations.cols() != batch.size() || batch.actions.cols() != batch.size()) {
    throw std::invalid_argument("TrustRegion: batch columns disagree");
  }
  if (batch.size() == 0) throw std::invalid_argument("TrustRegion: empty batch");
}

nn::SurrogateResult TrustRegion::surrogate(const Vector& advantages) const {
  if (advantages.size() != batch_->size()) {
    throw std::invalid_argument("TrustRegion: advantages do not match the batch");
  }
  nn::SurrogateResult r = nn::surrogate_and_gradient(*policy_, batch_->observations, batch_->actions,
                                                     batch_->old_log_probs, advantages);
  num::require_finite(r.grad, "surrogate gradient");
  return r;
}

double TrustRegion::surrogate_at(const nn::GaussianPolicy& candidate, const Vector& advantages) const {
  return nn::surrogate_value(candidate, batch_->observations, batch_->actions,
                             batch_->old_log_probs, advantages);
}

double TrustRegion::kl(const nn::GaussianPolicy& candidate) const {
  return nn::mean_kl(old_, candidate, batch_->observations);
}

Vector TrustRegion::curvature(const Vector& v) const { return curvature_.apply(v, config_.damping); }

num::LinearOperator TrustRegion::curvature_operator() const {
  return curvature_.as_operator(config_.damping);
}

Vector TrustRegion::solve(const Vector& g) const {
  const num::CgResult cg =
      num::conjugate_gradient(curvature_operator(), g, config_.cg_iters, config_.cg_residual_tol);
  num::require_finite(cg.x, "conjugate-gradient solution");
  return cg.x;
}

nn::GaussianPolicy TrustRegion::with_step(const Vector& step) const {
  nn::GaussianPolicy candidate = *policy_;
  candidate.set_flat(theta_ + step);
  return candidate;
}

TrustRegion::SearchResult TrustRegion::line_search(
    const Vector& full_step,
    const std::function<bool(const nn::GaussianPolicy&, double)>& accept) const {
  SearchResult result{*policy_, std::nullopt, 0.0, 0};
  double scale = 1.0;
  for (int j = 0; j < config_.backtrack_steps; ++j, scale *= config_.backtrack_coeff) {
    ++result.trials;
    nn::GaussianPolicy candidate = with_step(scale * full_step);
    const double kl_value = kl(candidate);
    if (std::isfinite(kl_value) && accept(candidate, kl_value)) {
      result.policy = std::move(candidate);
      result.exponent = j;
      result.kl = kl_value;
      return result;
    }
  }
  return result;
}

StepResult trpo_step(const nn::GaussianPolicy& policy, const PolicyBatch& batch,
                     const Vector& advantages, const TrustRegionConfig& config) {
  const TrustRegion tr(policy, batch, config);
  const nn::SurrogateResult sur = tr.surrogate(advantages);

  StepResult out{policy, {}};
  out.report.surrogate_before = sur.value;
  out.report.surrogate_after = sur.value;
  out.report.branch = "trpo";
  if (sur.grad.squaredNorm() == 0.0) {
    out.report.rejected = true;
    out.report.branch = "zero-gradient";
    return out;
  }

  const NaturalStep ns = natural_step(tr.curvature_operator(), sur.grad, config.max_kl,
                                      config.cg_iters, config.cg_residual_tol);
  if (!(ns.xhx > 0.0)) {
    out.report.rejected = true;
    out.report.branch = "non-positive-curvature";
    out.report.warning = true;
    return out;
  }

  double accepted_value = sur.value;
  auto search = tr.line_search(ns.step, [&](const nn::GaussianPolicy& cand, double kl) {
    const double value = tr.surrogate_at(cand, advantages);
    if (kl <= config.max_kl && value - sur.value > 0.0) {
      accepted_value = value;
      return true;
    }
    return false;
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

}  // namespace guard::algo
