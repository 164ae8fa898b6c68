#include <cmath>
#include <limits>

#include "doctest.h"
#include "support.hpp"

using namespace guard;
using guard::testing::random_spd;
using num::Matrix;
using num::Vector;

TEST_SUITE("numerics") {

TEST_CASE("conjugate gradient: identity and diagonal") {
  const auto id = num::LinearOperator::from_matrix(Matrix::Identity(3, 3));
  const Vector b = Vector::LinSpaced(3, 1.0, 3.0);
  const auto r = num::conjugate_gradient(id, b, 10, 1e-12);
  CHECK((r.x - b).norm() < 1e-14);
  CHECK(r.converged);

  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 2.0, 2.0;
  const auto r2 = num::conjugate_gradient(num::LinearOperator::from_matrix(d), Vector{{2.0, 4.0}}, 10, 1e-12);
  CHECK(r2.x[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(r2.x[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("conjugate gradient: random SPD against a dense solve") {
  num::RngStream rng(7);
  const Matrix a = random_spd(8, rng);
  const Vector b = rng.normal_vector(8);
  const auto r = num::conjugate_gradient(num::LinearOperator::from_matrix(a), b, 50, 1e-10);
  CHECK((a * r.x - b).norm() < 1e-8);
  CHECK((r.x - a.ldlt().solve(b)).norm() < 1e-8);
  CHECK(r.residual_norm == doctest::Approx((a * r.x - b).norm()));
}

TEST_CASE("conjugate gradient reaches 1e-8 within n iterations up to n = 20") {
  num::RngStream rng(11);
  for (int n = 1; n <= 20; ++n) {
    // Moderately conditioned so the exact-arithmetic bound survives rounding.
    const Matrix m = guard::testing::random_matrix(n, n, rng);
    const Matrix a = m.transpose() * m / n + Matrix::Identity(n, n);
    const Vector b = rng.normal_vector(n);
    const auto r = num::conjugate_gradient(num::LinearOperator::from_matrix(a), b, n, 1e-10);
    CHECK_MESSAGE(r.residual_norm <= 1e-8, "n = " << n);
    CHECK(r.iterations <= n);
  }
}

TEST_CASE("conjugate gradient: errors") {
  const auto id = num::LinearOperator::from_matrix(Matrix::Identity(3, 3));
  CHECK_THROWS_AS(num::conjugate_gradient(id, Vector::Ones(2), 5, 1e-10), std::invalid_argument);
  CHECK_THROWS_AS(num::conjugate_gradient(id, Vector::Ones(3), 0, 1e-10), std::invalid_argument);
  Vector bad = Vector::Ones(3);
  bad[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(num::conjugate_gradient(id, bad, 5, 1e-10), num::NumericError);
  const num::LinearOperator nan_op(3, [](const Vector& v) -> Vector {
    return v * std::numeric_limits<double>::infinity();
  });
  CHECK_THROWS_AS(num::conjugate_gradient(nan_op, Vector::Ones(3), 5, 1e-10), num::NumericError);
  CHECK_THROWS_AS(id(Vector::Ones(4)), std::invalid_argument);
}

TEST_CASE("conjugate gradient stops at the iteration cap and reports the residual") {
  num::RngStream rng(3);
  const Matrix a = random_spd(10, rng);
  const Vector b = rng.normal_vector(10);
  const auto r = num::conjugate_gradient(num::LinearOperator::from_matrix(a), b, 2, 1e-14);
  CHECK(r.iterations == 2);
  CHECK_FALSE(r.converged);
  CHECK(r.residual_norm == doctest::Approx((a * r.x - b).norm()));
}

TEST_CASE("finite differences") {
  auto square = [](const Vector& x) { return x[0] * x[0]; };
  CHECK(std::abs(num::finite_difference_gradient(square, Vector::Ones(1), 1e-5)[0] - 2.0) < 1e-8);
  auto sine = [](const Vector& x) { return std::sin(x[0]); };
  CHECK(num::finite_difference_gradient(sine, Vector::Zero(1))[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(num::finite_difference_gradient(square, Vector::Ones(1), 0.0), std::invalid_argument);
  auto blowup = [](const Vector& x) { return x[0] > 1.0 ? std::numeric_limits<double>::infinity() : 0.0; };
  CHECK_THROWS_AS(num::finite_difference_gradient(blowup, Vector::Ones(1)), num::NumericError);
}

TEST_CASE("finite differences match backprop of a 2-2-1 policy log-prob loss") {
  num::RngStream rng(5);
  nn::GaussianPolicy policy(2, 1, rng, {2});
  const Matrix obs = guard::testing::random_matrix(2, 6, rng);
  Matrix actions(1, 6);
  Vector old_lp(6);
  for (int j = 0; j < 6; ++j) {
    const auto s = policy.sample(obs.col(j), rng);
    actions.col(j) = s.action;
    old_lp[j] = s.log_prob;
  }
  const Vector adv = rng.normal_vector(6);
  const Vector theta = policy.flat();
  const auto analytic = nn::surrogate_and_gradient(policy, obs, actions, old_lp, adv);
  auto f = [&](const Vector& p) {
    nn::GaussianPolicy q = policy;
    q.set_flat(p);
    return nn::surrogate_value(q, obs, actions, old_lp, adv);
  };
  CHECK(guard::testing::rel_err(num::finite_difference_gradient(f, theta), analytic.grad) < 1e-4);
}

TEST_CASE("QP projection oracle: reference instances") {
  const Vector a = num::solve_qp_projection_oracle(Vector{{0.5, 0.3}}, Vector{{1.0, 0.0}}, 0.0, 0.0);
  CHECK(a[0] == doctest::Approx(0.0));
  CHECK(a[1] == doctest::Approx(0.3));

  const Vector feasible{{-0.5, 0.3}};
  CHECK(num::solve_qp_projection_oracle(feasible, Vector{{1.0, 0.0}}, 0.0, 0.0) == feasible);

  const Vector b = num::solve_qp_projection_oracle(Vector{{2.0, 2.0}}, Vector{{1.0, 1.0}}, 0.0, 1.0);
  CHECK(b[0] == doctest::Approx(0.5));
  CHECK(b[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(num::solve_qp_projection_oracle(Vector::Ones(2), Vector::Zero(2), 0.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(num::solve_qp_projection_oracle(Vector::Ones(2), Vector::Ones(3), 0.0, 0.0),
                  std::invalid_argument);
}

TEST_CASE("QP projection oracle: feasibility and distance bound on random instances") {
  num::RngStream rng(21);
  for (int k = 0; k < 500; ++k) {
    const int n = 1 + static_cast<int>(rng.uniform() * 5);
    const Vector a_ref = rng.normal_vector(n);
    const Vector g = rng.normal_vector(n);
    const double offset = rng.normal();
    const double limit = rng.normal();
    const Vector a = num::solve_qp_projection_oracle(a_ref, g, offset, limit);
    CHECK(g.dot(a) + offset <= limit + 1e-10);
    const double plane_gap = std::max(0.0, (g.dot(a_ref) + offset - limit) / g.norm());
    CHECK((a - a_ref).norm() <= plane_gap + 1e-10);
  }
}

TEST_CASE("RngStream determinism and known values") {
  num::RngStream a(42), b(42);
  bool same = true;
  for (int i = 0; i < 10000; ++i) same = same && a.next_u64() == b.next_u64();
  CHECK(same);
  // Reference SplitMix64 output for seed 0.
  num::RngStream zero(0);
  CHECK(zero.next_u64() == 0xE220A8397B1DCDAFULL);
  CHECK(zero.counter() == 1);

  num::RngStream u(9);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
  }
  const num::RngStream parent(1);
  CHECK(parent.split(1).seed() != parent.split(2).seed());
  CHECK(parent.split(1).seed() == num::RngStream(1).split(1).seed());
}

TEST_CASE("RngStream normal draws have unit moments") {
  num::RngStream rng(123);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sq / n - 1.0) < 0.02);
}

TEST_CASE("require_finite is loud") {
  CHECK_THROWS_AS(num::require_finite(std::nan(""), "x"), num::NumericError);
  Vector v = Vector::Ones(3);
  CHECK_NOTHROW(num::require_finite(v, "v"));
  v[2] = -std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(num::require_finite(v, "v"), num::NumericError);
}

}  // TEST_SUITE
