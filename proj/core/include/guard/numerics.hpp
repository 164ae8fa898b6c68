#pragma once

// Dense linear algebra helpers, the conjugate-gradient solver used by the
// trust-region updates, verification oracles, and the seeded random stream.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace guard::num {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when a NaN or Inf shows up where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& values) {
  return values.allFinite();
}

/// Throws NumericError naming `what` if any entry is non-finite.
template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& values, std::string_view what) {
  if (!values.allFinite()) {
    throw NumericError("non-finite values in " + std::string(what));
  }
}

void require_finite(double value, std::string_view what);

/// Matrix-free linear map R^n -> R^n.
class LinearOperator {
 public:
  using ApplyFn = std::function<Vector(const Vector&)>;

  LinearOperator(Index dim, ApplyFn apply);

  /// Wraps an explicit square matrix.
  static LinearOperator from_matrix(Matrix m);

  Index dim() const { return dim_; }

  /// Applies the operator; throws std::invalid_argument on a length mismatch.
  Vector operator()(const Vector& v) const;

 private:
  Index dim_;
  ApplyFn apply_;
};

struct CgResult {
  Vector x;
  double residual_norm = 0.0;  // ||op(x) - b||, recomputed from the final iterate
  int iterations = 0;
  bool converged = false;
};

// Solves op(x) = b for symmetric positive-definite op. Starts from x = 0 and
// stops when the residual drops to residual_tol or after max_iters; in the
// latter case the last iterate is returned with converged = false.
CgResult conjugate_gradient(const LinearOperator& op, const Vector& b, int max_iters,
                            double residual_tol);

inline constexpr double kDefaultFiniteDifferenceEps = 1e-5;

/// Central-difference gradient (f(x + eps e_i) - f(x - eps e_i)) / (2 eps).
Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                  const Vector& x, double eps = kDefaultFiniteDifferenceEps);

// argmin_a 0.5 ||a - a_ref||^2  s.t.  g^T a + offset <= limit, solved by
// enumerating the two KKT cases. The active case solves the bordered system
// [I g; g^T 0][a; mu] = [a_ref; limit - offset] with a dense LU factorisation
// and keeps it only when mu >= 0. Throws std::invalid_argument if g == 0.
Vector solve_qp_projection_oracle(const Vector& a_ref, const Vector& g, double offset,
                                  double limit);

/// Counter-based SplitMix64 stream. The output for a given (seed, draw index)
/// is fixed by integer arithmetic alone, so sequences match across platforms.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw (Box-Muller, both outputs used).
  double normal();

  Vector normal_vector(Index n);

  /// Independent child stream; children with different ids do not overlap in
  /// practice because their seeds are hashed apart.
  RngStream split(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Training reallocates multi-megabyte batch matrices every iteration; with
// glibc's defaults each one is a fresh mmap and pays page faults on first
// touch. Raising the mmap/trim thresholds keeps them on the heap. No-op
// elsewhere; safe to call more than once.
void keep_large_allocations_on_heap();

}  // namespace guard::num
