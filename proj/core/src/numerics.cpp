#include "guard/numerics.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <cmath>
#include <utility>

namespace guard::num {

void require_finite(double value, std::string_view what) {
  if (!std::isfinite(value)) {
    throw NumericError("non-finite value in " + std::string(what));
  }
}

LinearOperator::LinearOperator(Index dim, ApplyFn apply) : dim_(dim), apply_(std::move(apply)) {
  if (dim_ < 1) throw std::invalid_argument("LinearOperator: dimension must be positive");
  if (!apply_) throw std::invalid_argument("LinearOperator: empty apply function");
}

LinearOperator LinearOperator::from_matrix(Matrix m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("LinearOperator: matrix must be square");
  const Index n = m.rows();
  return LinearOperator(n, [m = std::move(m)](const Vector& v) -> Vector { return m * v; });
}

Vector LinearOperator::operator()(const Vector& v) const {
  if (v.size() != dim_) {
    throw std::invalid_argument("LinearOperator: expected length " + std::to_string(dim_) +
                                ", got " + std::to_string(v.size()));
  }
  Vector out = apply_(v);
  if (out.size() != dim_) throw std::invalid_argument("LinearOperator: apply changed dimension");
  return out;
}

CgResult conjugate_gradient(const LinearOperator& op, const Vector& b, int max_iters,
                            double residual_tol) {
  if (b.size() != op.dim()) {
    throw std::invalid_argument("conjugate_gradient: rhs length " + std::to_string(b.size()) +
                                " does not match operator dimension " +
                                std::to_string(op.dim()));
  }
  if (max_iters < 1) throw std::invalid_argument("conjugate_gradient: max_iters must be >= 1");
  require_finite(b, "conjugate_gradient rhs");

  CgResult result;
  result.x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  const double tol_sq = residual_tol * residual_tol;

  int it = 0;
  while (it < max_iters && rr > tol_sq) {
    const Vector ap = op(p);
    require_finite(ap, "conjugate_gradient operator output");
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) {
      // Curvature vanished along p (rank-deficient or exactly solved).
      break;
    }
    const double alpha = rr / pap;
    result.x += alpha * p;
    r -= alpha * ap;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++it;
  }
  require_finite(result.x, "conjugate_gradient iterate");

  result.iterations = it;
  result.residual_norm = (op(result.x) - b).norm();
  result.converged = result.residual_norm <= residual_tol;
  return result;
}

Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_gradient: eps must be > 0");
  Vector grad(x.size());
  Vector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = f(probe);
    probe[i] = x[i] - eps;
    const double down = f(probe);
    probe[i] = x[i];
    require_finite(up, "finite_difference_gradient f(x+eps)");
    require_finite(down, "finite_difference_gradient f(x-eps)");
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Vector solve_qp_projection_oracle(const Vector& a_ref, const Vector& g, double offset,
                                  double limit) {
  if (a_ref.size() != g.size()) {
    throw std::invalid_argument("solve_qp_projection_oracle: dimension mismatch");
  }
  if (g.squaredNorm() == 0.0) {
    throw std::invalid_argument("solve_qp_projection_oracle: zero constraint gradient");
  }

  // Inactive case: mu = 0, a = a_ref, valid if primal feasible.
  if (g.dot(a_ref) + offset <= limit) return a_ref;

  // Active case: stationarity a - a_ref + mu g = 0 with g^T a = limit - offset.
  const Index n = a_ref.size();
  Matrix kkt = Matrix::Zero(n + 1, n + 1);
  kkt.topLeftCorner(n, n).setIdentity();
  kkt.topRightCorner(n, 1) = g;
  kkt.bottomLeftCorner(1, n) = g.transpose();
  Vector rhs(n + 1);
  rhs.head(n) = a_ref;
  rhs[n] = limit - offset;
  const Vector sol = kkt.fullPivLu().solve(rhs);
  const double mu = sol[n];
  if (mu < 0.0) {
    // Cannot happen for an infeasible a_ref; kept so the KKT enumeration is total.
    throw NumericError("solve_qp_projection_oracle: negative multiplier in active case");
  }
  return sol.head(n);
}

void keep_large_allocations_on_heap() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace guard::num
