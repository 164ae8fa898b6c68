#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "guard/safe_algos.hpp"

namespace guard::algo {

void ConstraintConfig::validate() const {
  if (!(ipo_t > 0.0)) throw std::invalid_argument("ConstraintConfig: ipo_t must be > 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("ConstraintConfig: gamma must lie in [0, 1)");
  if (lagrangian_lr < 0.0 || fac_lr < 0.0 || ipo_infeasible_weight < 0.0 || cost_reduction < 0.0) {
    throw std::invalid_argument("ConstraintConfig: rates, weights and cost_reduction must be >= 0");
  }
}

void ShieldConfig::validate() const {
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) {
    throw std::invalid_argument("ShieldConfig: warmup_ratio must lie in [0, 1]");
  }
  if (usl_iters < 1 || !(usl_eta > 0.0)) throw std::invalid_argument("ShieldConfig: usl_iters >= 1, usl_eta > 0");
  if (replay_capacity < 1) throw std::invalid_argument("ShieldConfig: replay_capacity must be >= 1");
}

void AlgorithmConfig::validate() const {
  trust_region.validate();
  constraint.validate();
  shield.validate();
}

int shield_start_epoch(double warmup_ratio, int total_epochs) {
  return static_cast<int>(std::ceil(warmup_ratio * total_epochs - 1e-9));
}

namespace {

class Trpo : public Algorithm {
 public:
  explicit Trpo(AlgorithmConfig cfg) : cfg_(std::move(cfg)) {}
  std::string_view name() const override { return "trpo"; }
  bool uses_cost_critic() const override { return false; }
  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    StepResult r = trpo_step(policy, PolicyBatch::from(in.stacked), in.estimates.reward.values,
                             cfg_.trust_region);
    policy = std::move(r.policy);
    r.report.constraint_estimate = in.estimates.cost_estimate;
    return r.report;
  }

 protected:
  AlgorithmConfig cfg_;
};

class Lagrangian : public Algorithm {
 public:
  explicit Lagrangian(AlgorithmConfig cfg) : cfg_(std::move(cfg)) {}
  std::string_view name() const override { return "trpo_lag"; }
  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    LagrangianResult r = lagrangian_step(policy, PolicyBatch::from(in.stacked), in.estimates.reward,
                                         in.estimates.cost, state_, in.estimates.cost_estimate,
                                         cfg_.trust_region, cfg_.constraint);
    policy = std::move(r.policy);
    state_ = r.state;
    return r.report;
  }
  double multiplier() const override { return state_.lambda; }

 private:
  AlgorithmConfig cfg_;
  LagrangeState state_;
};

class Fac : public Algorithm {
 public:
  Fac(AlgorithmConfig cfg, int obs_dim, num::RngStream rng)
      : cfg_(std::move(cfg)), multiplier_(obs_dim, rng, cfg_.constraint.fac_lr) {}
  std::string_view name() const override { return "trpo_fac"; }
  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    FacResult r = fac_step(policy, PolicyBatch::from(in.stacked), in.estimates.reward, in.estimates.cost,
                           in.estimates.cost_returns, multiplier_, cfg_.trust_region, cfg_.constraint);
    policy = std::move(r.policy);
    r.report.constraint_estimate = in.estimates.cost_estimate;
    last_ = r.report.multiplier;
    return r.report;
  }
  double multiplier() const override { return last_; }

 private:
  AlgorithmConfig cfg_;
  MultiplierNet multiplier_;
  double last_ = 0.0;
};

class Ipo : public Algorithm {
 public:
  explicit Ipo(AlgorithmConfig cfg) : cfg_(std::move(cfg)) {}
  std::string_view name() const override { return "trpo_ipo"; }
  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    StepResult r = ipo_step(policy, PolicyBatch::from(in.stacked), in.estimates.reward, in.estimates.cost,
                            in.estimates.cost_estimate, cfg_.trust_region, cfg_.constraint);
    policy = std::move(r.policy);
    last_ = r.report.multiplier;
    return r.report;
  }
  double multiplier() const override { return last_; }

 private:
  AlgorithmConfig cfg_;
  double last_ = 0.0;
};

class Cpo : public Algorithm {
 public:
  explicit Cpo(AlgorithmConfig cfg) : cfg_(std::move(cfg)) {}
  std::string_view name() const override { return "cpo"; }
  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    StepResult r = cpo_step(policy, PolicyBatch::from(in.stacked), in.estimates.reward, in.estimates.cost,
                            in.estimates.cost_estimate, cfg_.trust_region, cfg_.constraint);
    policy = std::move(r.policy);
    last_ = r.report.multiplier;
    return r.report;
  }
  double multiplier() const override { return last_; }

 private:
  AlgorithmConfig cfg_;
  double last_ = 0.0;
};

class Pcpo : public Algorithm {
 public:
  Pcpo(AlgorithmConfig cfg, Projection projection) : cfg_(std::move(cfg)), projection_(projection) {}
  std::string_view name() const override { return projection_ == Projection::kL2 ? "pcpo_l2" : "pcpo_kl"; }
  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    StepResult r = pcpo_step(policy, PolicyBatch::from(in.stacked), in.estimates.reward, in.estimates.cost,
                             in.estimates.cost_estimate, cfg_.trust_region, cfg_.constraint, projection_);
    policy = std::move(r.policy);
    return r.report;
  }

 private:
  AlgorithmConfig cfg_;
  Projection projection_;
};

// TRPO update plus a learned per-state linear cost model that projects
// actions once warmup is over.
class SafetyLayerAlgo : public Trpo {
 public:
  SafetyLayerAlgo(AlgorithmConfig cfg, int obs_dim, int act_dim, num::RngStream rng)
      : Trpo(std::move(cfg)), model_(obs_dim, act_dim, rng) {}
  std::string_view name() const override { return "trpo_sl"; }

  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    UpdateReport report = Trpo::update(policy, in);
    SafetyDataset fresh{in.stacked.observations, in.stacked.executed_actions, in.stacked.prev_costs,
                        in.stacked.costs};
    data_.append(fresh, cfg_.shield.replay_capacity);
    safety_layer_fit(model_, data_, cfg_.shield.fit);
    return report;
  }

  rt::ShieldFn shield(int epoch, int total_epochs) const override {
    if (epoch < shield_start_epoch(cfg_.shield.warmup_ratio, total_epochs)) return {};
    const double limit = cfg_.constraint.target_cost;
    return [this, limit](const Vector& obs, const Vector& action, double prev_cost) {
      const SafetyLayerModel::Prediction p = model_.predict(obs);
      return safety_layer_project(action, p.gradient, prev_cost + p.bias, limit);
    };
  }

 private:
  SafetyLayerModel model_;
  SafetyDataset data_;
};

// TRPO update plus a cost Q-function whose action gradient corrects
// actions iteratively once warmup is over.
class UnrolledSafetyLayerAlgo : public Trpo {
 public:
  UnrolledSafetyLayerAlgo(AlgorithmConfig cfg, int obs_dim, int act_dim, num::RngStream rng)
      : Trpo(std::move(cfg)), qc_(obs_dim + act_dim, rng, nn::OutputHead::kSoftplus) {}
  std::string_view name() const override { return "trpo_usl"; }

  UpdateReport update(nn::GaussianPolicy& policy, const UpdateInputs& in) override {
    UpdateReport report = Trpo::update(policy, in);
    usl_fit_qc(qc_, in.stacked.observations, in.stacked.executed_actions, in.estimates.cost_returns,
               cfg_.shield.fit);
    return report;
  }

  rt::ShieldFn shield(int epoch, int total_epochs) const override {
    if (epoch < shield_start_epoch(cfg_.shield.warmup_ratio, total_epochs)) return {};
    const ShieldConfig sc = cfg_.shield;
    const double limit = cfg_.constraint.target_cost;
    return [this, sc, limit](const Vector& obs, const Vector& action, double) {
      return usl_correct(action, cost_q_function(qc_, obs), limit, sc.usl_eta, sc.usl_iters).action;
    };
  }

 private:
  nn::ScalarNet qc_;
};

}  // namespace

const std::vector<std::string_view>& algorithm_names() {
  static const std::vector<std::string_view> names = {
      "trpo", "trpo_lag", "trpo_fac", "trpo_ipo", "cpo", "pcpo_l2", "pcpo_kl", "trpo_sl", "trpo_usl"};
  return names;
}

std::unique_ptr<Algorithm> make_algorithm(std::string_view name, const AlgorithmConfig& config,
                                          int obs_dim, int act_dim, std::uint64_t seed) {
  config.validate();
  const num::RngStream rng = num::RngStream(seed).split(0xA1);
  if (name == "trpo") return std::make_unique<Trpo>(config);
  if (name == "trpo_lag") return std::make_unique<Lagrangian>(config);
  if (name == "trpo_fac") return std::make_unique<Fac>(config, obs_dim, rng);
  if (name == "trpo_ipo") return std::make_unique<Ipo>(config);
  if (name == "cpo") return std::make_unique<Cpo>(config);
  if (name == "pcpo_l2") return std::make_unique<Pcpo>(config, Projection::kL2);
  if (name == "pcpo_kl") return std::make_unique<Pcpo>(config, Projection::kKL);
  if (name == "trpo_sl") return std::make_unique<SafetyLayerAlgo>(config, obs_dim, act_dim, rng);
  if (name == "trpo_usl") return std::make_unique<UnrolledSafetyLayerAlgo>(config, obs_dim, act_dim, rng);
  throw std::invalid_argument("unknown algorithm '" + std::string(name) +
                              "' (expected trpo, trpo_lag, trpo_fac, trpo_ipo, cpo, pcpo_l2, pcpo_kl, "
                              "trpo_sl or trpo_usl)");
}

}  // namespace guard::algo
