#include <cmath>
#include <limits>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace guard;
using guard::testing::random_matrix;
using guard::testing::rel_err;
using guard::testing::sample_batch;
using num::Matrix;
using num::Vector;

namespace {

struct Fixture {
  num::RngStream rng{17};
  nn::GaussianPolicy policy{3, 2, rng, {6}};
  algo::PolicyBatch batch = sample_batch(policy, 200, rng);
  Vector adv = rt::normalize(rng.normal_vector(200));
  Vector adv_c = rng.normal_vector(200).cwiseAbs();
  algo::TrustRegionConfig tr{};
  algo::ConstraintConfig cc{};
};

Vector delta(const nn::GaussianPolicy& after, const nn::GaussianPolicy& before) {
  return after.flat() - before.flat();
}

}  // namespace

TEST_SUITE("safe_algos") {

TEST_CASE("config validation") {
  algo::TrustRegionConfig tr;
  CHECK_NOTHROW(tr.validate());
  tr.max_kl = 0.0;
  CHECK_THROWS_AS(tr.validate(), std::invalid_argument);
  tr = {};
  tr.backtrack_coeff = 1.0;
  CHECK_THROWS_AS(tr.validate(), std::invalid_argument);
  algo::ConstraintConfig cc;
  cc.ipo_t = 0.0;
  CHECK_THROWS_AS(cc.validate(), std::invalid_argument);
  CHECK(algo::TrustRegionConfig{}.backtrack_steps == 100);
  CHECK(algo::TrustRegionConfig{}.backtrack_coeff == 0.8);
  CHECK(algo::TrustRegionConfig{}.max_kl == 0.02);
  CHECK(algo::ShieldConfig{}.usl_iters == 20);
  CHECK(algo::ShieldConfig{}.usl_eta == 0.05);
}

TEST_CASE("natural step on a one-parameter quadratic") {
  const double h = 3.0, g = 0.7, kl = 0.02;
  const auto op = num::LinearOperator::from_matrix(Matrix::Constant(1, 1, h));
  const auto ns = algo::natural_step(op, Vector::Constant(1, g), kl, 10);
  CHECK(ns.step[0] == doctest::Approx(std::sqrt(2.0 * kl / (g * g / h)) * g / h).epsilon(1e-14));
  CHECK(0.5 * ns.step[0] * h * ns.step[0] == doctest::Approx(kl).epsilon(1e-14));
}

TEST_CASE("TRPO step") {
  Fixture f;
  SUBCASE("zero advantages leave the policy unchanged") {
    const auto r = algo::trpo_step(f.policy, f.batch, Vector::Zero(200), f.tr);
    CHECK(r.report.rejected);
    CHECK(r.policy.flat() == f.policy.flat());
  }
  SUBCASE("accepted steps respect the trust region and improve the surrogate") {
    const auto r = algo::trpo_step(f.policy, f.batch, f.adv, f.tr);
    REQUIRE(r.report.accepted_exponent.has_value());
    CHECK(r.report.kl_after <= 0.02 + 1e-6);
    CHECK(r.report.surrogate_after > r.report.surrogate_before);
    const auto old = nn::OldPolicyStats::record(f.policy, f.batch.observations);
    CHECK(nn::mean_kl(old, r.policy, f.batch.observations) == doctest::Approx(r.report.kl_after).epsilon(1e-14));
  }
  SUBCASE("full step matches sqrt(2 delta / x^T H x) x") {
    const algo::TrustRegion tr(f.policy, f.batch, f.tr);
    const auto sur = tr.surrogate(f.adv);
    const Vector x = tr.solve(sur.grad);
    const auto ns = algo::natural_step(tr.curvature_operator(), sur.grad, 0.02, 10);
    CHECK(rel_err(ns.step, std::sqrt(0.04 / x.dot(tr.curvature(x))) * x) < 1e-12);
  }
}

TEST_CASE("line search scales by exactly 0.8 per trial and stops at 100") {
  Fixture f;
  const algo::TrustRegion tr(f.policy, f.batch, f.tr);
  const Vector full = 0.3 * f.rng.normal_vector(f.policy.num_params());
  std::vector<Vector> tried;
  const auto none = tr.line_search(full, [&](const nn::GaussianPolicy& cand, double) {
    tried.push_back(delta(cand, f.policy));
    return false;
  });
  CHECK_FALSE(none.exponent.has_value());
  CHECK(none.trials == 100);
  REQUIRE(tried.size() == 100);
  // Candidates are theta + 0.8^j full; compare in parameter space, where rounding is relative to |theta|.
  const double ulp_scale = 1e-14 * (f.policy.flat().norm() + full.norm());
  double coeff = 1.0;
  for (std::size_t j = 0; j < tried.size(); ++j, coeff *= 0.8) {
    CHECK((tried[j] - coeff * full).norm() <= ulp_scale);
  }

  int calls = 0;
  const auto third = tr.line_search(full, [&](const nn::GaussianPolicy&, double) { return ++calls == 3; });
  CHECK(third.exponent == 2);
  CHECK(rel_err(delta(third.policy, f.policy), 0.64 * full) < 1e-12);
}

TEST_CASE("Lagrangian update") {
  Fixture f;
  algo::ConstraintConfig cc;
  cc.target_cost = 0.0;
  cc.lagrangian_lr = 0.005;
  CHECK(algo::lagrange_update({0.1}, 2.0, cc).lambda == doctest::Approx(0.11).epsilon(1e-14));
  cc.target_cost = 1.5;
  CHECK(algo::lagrange_update({0.3}, 1.5, cc).lambda == 0.3);
  CHECK(algo::lagrange_update({0.001}, 0.0, cc).lambda == 0.0);

  const rt::RewardAdvantages a{f.adv};
  const rt::CostAdvantages ac{f.adv_c};
  CHECK((algo::composite_advantage(a, ac, 0.5) - (f.adv - 0.5 * f.adv_c) / 1.5).norm() < 1e-14);

  const auto lag = algo::lagrangian_step(f.policy, f.batch, a, ac, {0.0}, 3.0, f.tr, f.cc);
  const auto trpo = algo::trpo_step(f.policy, f.batch, f.adv, f.tr);
  CHECK((lag.policy.flat() - trpo.policy.flat()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(lag.state.lambda == doctest::Approx(0.015));
  CHECK(lag.report.multiplier == lag.state.lambda);

  algo::LagrangeState s{0.2};
  num::RngStream rng(3);
  for (int i = 0; i < 200; ++i) {
    s = algo::lagrange_update(s, 5.0 * rng.normal(), f.cc);
    CHECK(s.lambda >= 0.0);
  }
}

TEST_CASE("FAC") {
  Fixture f;
  const rt::RewardAdvantages a{f.adv};
  const rt::CostAdvantages ac{f.adv_c};
  num::RngStream rng(5);
  algo::MultiplierNet mult(3, rng, 1e-4);
  CHECK(mult.multipliers(f.batch.observations).isConstant(std::log(2.0)));

  SUBCASE("a multiplier that outputs zero reduces to TRPO") {
    Vector flat = mult.net.flat();
    flat[flat.size() - 1] = -800.0;  // output bias: softplus(-800) == 0
    mult.net.set_flat(flat);
    CHECK(mult.multipliers(f.batch.observations).isZero(0.0));
    const auto fac = algo::fac_step(f.policy, f.batch, a, ac, Vector::Zero(200), mult, f.tr, f.cc);
    const auto trpo = algo::trpo_step(f.policy, f.batch, f.adv, f.tr);
    CHECK((fac.policy.flat() - trpo.policy.flat()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("violation-free states give a nonpositive ascent signal") {
    const Vector zero_returns = Vector::Zero(200);
    CHECK(algo::multiplier_ascent_gradient(mult.net, f.batch.observations, zero_returns, 0.0).isZero(0.0));
    // With slack (d > 0) the multipliers shrink after the ascent step.
    algo::ConstraintConfig cc = f.cc;
    cc.target_cost = 1.0;
    cc.fac_lr = 1e-2;
    algo::MultiplierNet m2(3, rng, cc.fac_lr);
    const double before = m2.multipliers(f.batch.observations).mean();
    algo::fac_step(f.policy, f.batch, a, ac, zero_returns, m2, f.tr, cc);
    CHECK(m2.multipliers(f.batch.observations).mean() < before);
  }
  SUBCASE("violating states raise the multipliers") {
    algo::MultiplierNet m3(3, rng, 1e-2);
    const double before = m3.multipliers(f.batch.observations).mean();
    algo::fac_step(f.policy, f.batch, a, ac, Vector::Constant(200, 4.0), m3, f.tr, f.cc);
    CHECK(m3.multipliers(f.batch.observations).mean() > before);
  }
  SUBCASE("ascent gradient matches finite differences") {
    nn::ScalarNet small(nn::Mlp(nn::Mlp::architecture(3, {4}, 1), rng), nn::OutputHead::kSoftplus);
    small.set_flat(rng.normal_vector(small.num_params()));
    const Matrix obs = random_matrix(3, 9, rng);
    const Vector ret = rng.normal_vector(9);
    const Vector g = algo::multiplier_ascent_gradient(small, obs, ret, 0.3);
    auto objective = [&](const Vector& p) {
      nn::ScalarNet m = small;
      m.set_flat(p);
      return (m.predict(obs).array() * (ret.array() - 0.3)).mean();
    };
    CHECK(rel_err(num::finite_difference_gradient(objective, small.flat()), g) < 1e-4);
  }
  SUBCASE("multipliers are nonnegative on 1e4 random states") {
    mult.net.set_flat(2.0 * rng.normal_vector(mult.net.num_params()));
    CHECK(mult.multipliers(Matrix(5.0 * random_matrix(3, 10000, rng))).minCoeff() >= 0.0);
  }
}

TEST_CASE("IPO barrier") {
  CHECK(algo::ipo_barrier(-1.0, 0.01) == 0.0);
  CHECK(algo::ipo_barrier(-0.5, 0.01) == doctest::Approx(100.0 * std::log(0.5)).epsilon(1e-14));
  CHECK(algo::ipo_barrier(-0.5, 0.01) == doctest::Approx(-69.31).epsilon(1e-4));
  const double a = algo::ipo_barrier(-1e-1, 0.01), b = algo::ipo_barrier(-1e-3, 0.01),
               c = algo::ipo_barrier(-1e-6, 0.01);
  CHECK(a > b);
  CHECK(b > c);
  CHECK(c == doctest::Approx(100.0 * std::log(1e-6)));
  CHECK_THROWS_AS(algo::ipo_barrier(0.0, 0.01), std::domain_error);
  CHECK_THROWS_AS(algo::ipo_barrier(-1.0, 0.0), std::invalid_argument);

  algo::ConstraintConfig cc;
  cc.target_cost = 1.0;
  CHECK(algo::ipo_cost_weight(0.5, cc) == doctest::Approx(1.0 / (0.01 * 0.5)));
  CHECK(algo::ipo_cost_weight(1.0, cc) == cc.ipo_infeasible_weight);
  // The weight is the derivative of the barrier.
  const double x = -0.5, h = 1e-6;
  CHECK(-(algo::ipo_barrier(x + h, 0.01) - algo::ipo_barrier(x - h, 0.01)) / (2 * h) ==
        doctest::Approx(algo::ipo_cost_weight(0.5, cc)).epsilon(1e-6));

  Fixture f;
  const auto feasible = algo::ipo_step(f.policy, f.batch, {f.adv}, {f.adv_c}, 0.5, f.tr, cc);
  CHECK(feasible.report.branch == "barrier");
  const auto aug = algo::trpo_step(f.policy, f.batch, f.adv - 200.0 * f.adv_c, f.tr);
  CHECK((feasible.policy.flat() - aug.policy.flat()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(algo::ipo_step(f.policy, f.batch, {f.adv}, {f.adv_c}, 2.0, f.tr, cc).report.branch == "infeasible-penalty");
}

TEST_CASE("CPO direction against the primal oracle") {
  using guard::testing::LolqcInstance;
  SUBCASE("two parameters, H = I, hand-picked") {
    LolqcInstance p;
    p.H = Matrix::Identity(2, 2);
    p.g = Vector{{1.0, 0.0}};
    p.c = Vector{{1.0, 1.0}};
    p.b = -0.05;
    const auto d = algo::cpo_direction(p.terms(), p.max_kl);
    const auto ref = guard::testing::lolqc_primal_oracle(p);
    REQUIRE(ref.has_value());
    CHECK((d.step - *ref).norm() < 1e-6);
    CHECK(p.b + p.c.dot(d.step) <= 1e-8);
  }
  SUBCASE("random instances up to five parameters") {
    num::RngStream rng(31);
    int checked = 0;
    for (int k = 0; k < 300; ++k) {
      const auto p = guard::testing::random_lolqc(2 + k % 4, rng);
      if (p.infeasible()) continue;
      const auto d = algo::cpo_direction(p.terms(), p.max_kl);
      const auto ref = guard::testing::lolqc_primal_oracle(p);
      REQUIRE(ref.has_value());
      CHECK((d.step - *ref).norm() < 1e-6);
      CHECK(p.b + p.c.dot(d.step) <= 1e-8);
      CHECK(0.5 * d.step.dot(p.H * d.step) <= p.max_kl * (1 + 1e-8));
      ++checked;
    }
    CHECK(checked > 100);
  }
  SUBCASE("infeasible problems take the recovery step and decrease the cost") {
    LolqcInstance p;
    p.H = Matrix::Identity(2, 2);
    p.g = Vector{{1.0, 0.5}};
    p.c = Vector{{0.0, 1.0}};
    p.b = 0.5;  // b^2 / s = 0.25 > 2 delta
    const auto t = p.terms();
    const auto d = algo::cpo_direction(t, p.max_kl);
    CHECK(d.branch == algo::CpoCase::kRecovery);
    CHECK(rel_err(d.step, -std::sqrt(2 * p.max_kl / t.s) * t.w) < 1e-15);
    CHECK(p.c.dot(d.step) == doctest::Approx(-std::sqrt(2 * p.max_kl * t.s)));
  }
}

TEST_CASE("CPO step") {
  Fixture f;
  SUBCASE("zero cost gradient with slack is plain TRPO") {
    const auto cpo = algo::cpo_step(f.policy, f.batch, {f.adv}, {Vector::Zero(200)}, -1.0, f.tr, f.cc);
    const auto trpo = algo::trpo_step(f.policy, f.batch, f.adv, f.tr);
    CHECK((cpo.policy.flat() - trpo.policy.flat()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(cpo.report.warning);
  }
  SUBCASE("an infeasible start recovers and lowers the cost surrogate") {
    const auto r = algo::cpo_step(f.policy, f.batch, {f.adv}, {f.adv_c}, 50.0, f.tr, f.cc);
    CHECK(r.report.branch == "recovery");
    REQUIRE(r.report.accepted_exponent.has_value());
    const algo::TrustRegion tr(f.policy, f.batch, f.tr);
    CHECK(tr.surrogate_at(r.policy, f.adv_c) < tr.surrogate(f.adv_c).value);
    CHECK(r.report.kl_after <= 0.02);
  }
  SUBCASE("a feasible start keeps KL within the trust region") {
    const auto r = algo::cpo_step(f.policy, f.batch, {f.adv}, {f.adv_c - Vector::Constant(200, f.adv_c.mean())},
                                  -0.5, f.tr, f.cc);
    CHECK(r.report.branch != "recovery");
    if (r.report.accepted_exponent) CHECK(r.report.kl_after <= 0.02);
  }
}

TEST_CASE("PCPO") {
  using guard::testing::LolqcInstance;
  SUBCASE("no projection needed: pure TRPO step") {
    LolqcInstance p;
    p.H = Matrix::Identity(2, 2);
    p.g = Vector{{1.0, 0.0}};
    p.c = Vector{{0.0, 1.0}};
    p.b = -0.1;
    const auto t = p.terms();
    const Vector step = algo::pcpo_direction(t, p.c, t.w, p.max_kl);
    CHECK(rel_err(step, std::sqrt(2 * p.max_kl / t.q) * t.v) < 1e-15);
  }
  SUBCASE("KL projection lands on the linearized constraint") {
    LolqcInstance p;
    p.H = Matrix{{2.0, 0.3}, {0.3, 1.0}};
    p.g = Vector{{1.0, 1.0}};
    p.c = Vector{{1.0, 0.2}};
    p.b = 0.05;
    const auto t = p.terms();
    const Vector step = algo::pcpo_direction(t, p.c, t.w, p.max_kl);
    CHECK(std::abs(p.c.dot(step) + p.b) <= 1e-8);
    CHECK((step - guard::testing::pcpo_projection_oracle(p, p.H)).norm() < 1e-6);
  }
  SUBCASE("L2 and KL projections differ when H is not a multiple of I") {
    LolqcInstance p;
    p.H = Matrix{{1.0, 0.0}, {0.0, 4.0}};
    p.g = Vector{{1.0, 1.0}};
    p.c = Vector{{1.0, 1.0}};
    p.b = 0.0;
    const auto t = p.terms();
    const Vector kl = algo::pcpo_direction(t, p.c, t.w, p.max_kl);
    const Vector l2 = algo::pcpo_direction(t, p.c, p.c, p.max_kl);
    CHECK((kl - l2).norm() > 1e-3);
    CHECK((l2 - guard::testing::pcpo_projection_oracle(p, Matrix::Identity(2, 2))).norm() < 1e-6);
    CHECK(p.c.dot(l2) + p.b <= 1e-8);
  }
  SUBCASE("random instances against the KKT oracle") {
    num::RngStream rng(41);
    for (int k = 0; k < 100; ++k) {
      const auto p = guard::testing::random_lolqc(2 + k % 4, rng);
      const auto t = p.terms();
      const Vector kl = algo::pcpo_direction(t, p.c, t.w, p.max_kl);
      const Vector l2 = algo::pcpo_direction(t, p.c, p.c, p.max_kl);
      CHECK(p.b + p.c.dot(kl) <= 1e-8);
      CHECK(p.b + p.c.dot(l2) <= 1e-8);
      CHECK((kl - guard::testing::pcpo_projection_oracle(p, p.H)).norm() < 1e-6);
      CHECK((l2 - guard::testing::pcpo_projection_oracle(p, Matrix::Identity(p.g.size(), p.g.size()))).norm() <
            1e-6);
    }
  }
  SUBCASE("policy-level step respects the KL valve") {
    Fixture f;
    for (auto proj : {algo::Projection::kL2, algo::Projection::kKL}) {
      const auto r = algo::pcpo_step(f.policy, f.batch, {f.adv}, {f.adv_c}, 10.0, f.tr, f.cc, proj);
      CHECK(r.report.branch == "projected");
      REQUIRE(r.report.accepted_exponent.has_value());
      CHECK(r.report.kl_after <= 4 * 0.02);
    }
    const auto unconstrained =
        algo::pcpo_step(f.policy, f.batch, {f.adv}, {Vector::Zero(200)}, -1.0, f.tr, f.cc, algo::Projection::kKL);
    CHECK(unconstrained.report.branch == "degenerate-cost-gradient");
  }
}

TEST_CASE("safety layer projection") {
  const Vector a = algo::safety_layer_project(Vector{{0.5, 0.3}}, Vector{{1.0, 0.0}}, 0.0, 0.0);
  CHECK(a[0] == doctest::Approx(0.0));
  CHECK(a[1] == doctest::Approx(0.3));
  const Vector safe{{-0.4, 0.2}};
  CHECK(algo::safety_layer_project(safe, Vector{{1.0, 0.0}}, 0.1, 0.0) == safe);
  CHECK(algo::safety_layer_project(Vector{{2.0, -3.0}}, Vector::Zero(2), 5.0, 0.0) == Vector{{1.0, -1.0}});

  num::RngStream rng(51);
  for (int k = 0; k < 1000; ++k) {
    const int n = 2 + k % 2;
    const Vector a_ref = rng.normal_vector(n).cwiseMax(-1.0).cwiseMin(1.0);
    const Vector g = rng.normal_vector(n);
    const double c_prev = rng.normal(), d = rng.normal();
    const Vector oracle = num::solve_qp_projection_oracle(a_ref, g, c_prev, d).cwiseMax(-1.0).cwiseMin(1.0);
    CHECK((algo::safety_layer_project(a_ref, g, c_prev, d) - oracle).norm() < 1e-6);
  }
}

TEST_CASE("safety layer model and fit") {
  num::RngStream rng(61);
  algo::SafetyLayerModel model(4, 2, rng, {16});
  CHECK(model.net().input_dim() == 4);
  CHECK(model.net().output_dim() == 3);
  const auto zero = model.predict(Vector::Ones(4));
  CHECK(zero.gradient.isZero(0.0));
  CHECK(zero.bias == 0.0);

  algo::SafetyDataset data;
  data.observations = random_matrix(4, 400, rng);
  data.actions = random_matrix(2, 400, rng).cwiseMax(-1.0).cwiseMin(1.0);
  data.prev_costs = Vector::Zero(400);

  SUBCASE("zero-cost data keeps predictions at zero") {
    data.next_costs = Vector::Zero(400);
    algo::safety_layer_fit(model, data, {});
    CHECK(model.predict(Vector::Ones(4)).gradient.cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("linear costs recover the true gradient; the loss never rises") {
    const Vector w{{0.8, -0.4}};
    data.next_costs = data.actions.transpose() * w;
    const auto report = algo::safety_layer_fit(model, data, {});
    for (std::size_t i = 1; i < report.losses.size(); ++i) CHECK(report.losses[i] <= report.losses[i - 1]);
    algo::safety_layer_fit(model, data, {3000, 1e-2});
    for (int j = 0; j < 5; ++j) {
      const auto p = model.predict(Vector(data.observations.col(j)));
      CHECK((p.gradient - w).cwiseAbs().maxCoeff() < 1e-2);
      CHECK(std::abs(p.bias) < 1e-2);
    }
  }
  SUBCASE("loss gradient matches finite differences") {
    algo::SafetyLayerModel small(2, 2, rng, {4});  // 2*4+4+4*3+3 = 27 parameters
    small.net().set_flat(rng.normal_vector(small.net().num_params()));
    const Matrix obs = random_matrix(2, 8, rng), acts = random_matrix(2, 8, rng);
    const Vector target = rng.normal_vector(8);
    Vector grad;
    small.loss(obs, acts, target, &grad);
    auto loss = [&](const Vector& p) {
      algo::SafetyLayerModel m = small;
      m.net().set_flat(p);
      return m.loss(obs, acts, target);
    };
    CHECK(rel_err(num::finite_difference_gradient(loss, small.net().flat()), grad) < 1e-4);
  }
  SUBCASE("replay keeps only the newest samples") {
    data.next_costs = Vector::LinSpaced(400, 0.0, 399.0);
    algo::SafetyDataset replay;
    replay.append(data, 500);
    CHECK(replay.size() == 400);
    replay.append(data, 500);
    CHECK(replay.size() == 500);
    CHECK(replay.next_costs[0] == 300.0);
    CHECK(replay.next_costs[499] == 399.0);
    CHECK(replay.observations.col(100) == data.observations.col(0));
    replay.append(data, 100);
    CHECK(replay.size() == 100);
    CHECK(replay.next_costs[0] == 300.0);
  }
}

TEST_CASE("unrolled safety layer correction") {
  auto norm_sq = [](const Vector& a, Vector& grad) {
    grad = 2.0 * a;
    return a.squaredNorm();
  };
  SUBCASE("already safe: no iterations") {
    const auto r = algo::usl_correct(Vector{{0.1, 0.2}}, norm_sq, 0.25, 0.05, 20);
    CHECK(r.iterations == 0);
    CHECK(r.action == Vector{{0.1, 0.2}});
  }
  SUBCASE("walks against the gradient in steps of eta to the level set") {
    std::vector<Vector> path;
    auto recording = [&](const Vector& a, Vector& grad) {
      path.push_back(a);
      return norm_sq(a, grad);
    };
    const auto r = algo::usl_correct(Vector{{1.0, 0.0}}, recording, 0.25, 0.05, 20);
    // Ten steps of 0.05 land on the level set up to the 1e-8 guard in the step norm.
    CHECK(r.iterations >= 10);
    CHECK(r.iterations <= 11);
    CHECK(r.action[0] <= 0.5 + 1e-6);
    CHECK(r.action[0] >= 0.45 - 1e-6);
    CHECK(r.action[1] == 0.0);
    for (std::size_t i = 1; i < path.size(); ++i) {
      CHECK((path[i] - path[i - 1]).norm() == doctest::Approx(0.05).epsilon(1e-7));
    }
  }
  SUBCASE("iteration cap") {
    const auto r = algo::usl_correct(Vector{{1.0, 1.0}}, norm_sq, 0.0, 0.05, 20);
    CHECK(r.iterations == 20);
  }
  CHECK_THROWS_AS(algo::usl_correct(Vector::Ones(2), norm_sq, 0.0, 0.0, 20), std::invalid_argument);
  auto broken = [](const Vector&, Vector& grad) {
    grad = Vector::Constant(2, std::numeric_limits<double>::quiet_NaN());
    return 1.0;
  };
  CHECK_THROWS_AS(algo::usl_correct(Vector::Ones(2), broken, 0.0, 0.05, 20), num::NumericError);
}

TEST_CASE("cost Q-function: action gradient and fitting") {
  num::RngStream rng(71);
  nn::ScalarNet qc(nn::Mlp(nn::Mlp::architecture(5, {4}, 1), rng), nn::OutputHead::kSoftplus);  // 29 params
  qc.set_flat(rng.normal_vector(qc.num_params()));
  const Vector obs = rng.normal_vector(3);
  const auto q = algo::cost_q_function(qc, obs);
  const Vector a = rng.normal_vector(2);
  Vector grad;
  const double value = q(a, grad);
  Vector input(5);
  input << obs, a;
  CHECK(value == doctest::Approx(qc.predict(input)).epsilon(1e-14));
  auto at = [&](const Vector& act) {
    Vector g;
    return q(act, g);
  };
  CHECK(rel_err(num::finite_difference_gradient(at, a), grad) < 1e-4);

  const Matrix states = random_matrix(3, 60, rng), acts = random_matrix(2, 60, rng);
  SUBCASE("zero costs drive Q_C to zero") {
    nn::ScalarNet net(5, rng, nn::OutputHead::kSoftplus, {16});
    algo::usl_fit_qc(net, states, acts, Vector::Zero(60), {2000, 1e-2});
    Matrix in(5, 60);
    in << states, acts;
    CHECK(net.predict(in).maxCoeff() < 1e-2);
  }
  SUBCASE("Monte-Carlo target of a constant unit cost is learned; MSE never rises") {
    const Vector rtg = rt::rewards_to_go(Vector::Ones(3), 0.5, 0.0);
    CHECK(rtg[0] == 1.75);
    nn::ScalarNet net(5, rng, nn::OutputHead::kSoftplus, {16});
    const Matrix s1 = states.leftCols(1), a1 = acts.leftCols(1);
    const auto report = algo::usl_fit_qc(net, s1, a1, rtg.head(1), {});
    for (std::size_t i = 1; i < report.losses.size(); ++i) CHECK(report.losses[i] <= report.losses[i - 1]);
    algo::usl_fit_qc(net, s1, a1, rtg.head(1), {2000, 1e-2});
    Vector in(5);
    in << s1.col(0), a1.col(0);
    CHECK(net.predict(in) == doctest::Approx(1.75).epsilon(1e-2));
  }
  CHECK_THROWS_AS(algo::usl_fit_qc(qc, states, acts, Vector::Zero(3), {}), std::invalid_argument);
}

TEST_CASE("algorithm registry and shield timing") {
  const auto& names = algo::algorithm_names();
  CHECK(names.size() == 9);
  for (auto name : names) {
    const auto a = algo::make_algorithm(name, {}, 6, 2, 1);
    CHECK(a->name() == name);
    const bool shielded = name == "trpo_sl" || name == "trpo_usl";
    CHECK(static_cast<bool>(a->shield(29, 30)) == shielded);
    CHECK_FALSE(static_cast<bool>(a->shield(0, 30)));
    const bool cost_free = name == "trpo" || shielded;
    CHECK(a->uses_cost_critic() == !cost_free);
  }
  CHECK_THROWS_AS(algo::make_algorithm("sac", {}, 6, 2, 1), std::invalid_argument);
  CHECK(algo::shield_start_epoch(1.0 / 3.0, 30) == 10);
  CHECK(algo::shield_start_epoch(1.0 / 3.0, 3) == 1);
  CHECK(algo::shield_start_epoch(0.0, 30) == 0);
  const auto sl = algo::make_algorithm("trpo_sl", {}, 6, 2, 1);
  CHECK_FALSE(static_cast<bool>(sl->shield(9, 30)));
  CHECK(static_cast<bool>(sl->shield(10, 30)));
}

}  // TEST_SUITE
