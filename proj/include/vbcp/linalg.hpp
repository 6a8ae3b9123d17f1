#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "vbcp/errors.hpp"

namespace vbcp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Sum over all positions of the elementwise product of d equal-shaped
/// matrices. For d = 2 this is the Frobenius inner product Tr{X^T Y}.
double multilinear_product(std::span<const Matrix> mats);
double multilinear_product(std::initializer_list<Matrix> mats);

/// Elementwise product; shapes must match.
Matrix hadamard(const Matrix& x, const Matrix& y);

/// (I_k (x) g^T) A (I_k (x) g) without materializing the Kronecker
/// factors: result(p, q) = g^T A_block(p, q) g, where A_block(p, q) is the
/// m x m sub-block of A at block coordinates (p, q) under the
/// column-stacking convention. A must be (m k) x (m k) with m = g.size().
/// The result is symmetrized.
Matrix sandwich(const Matrix& a, const Vector& g, Eigen::Index k);

/// w (x) g for the column-stacking convention:
/// result[j * m + i] = w[j] * g[i].
Vector kron_vec(const Vector& w, const Vector& g);

/// Trace of the j-th (0-based) diagonal m x m block of A.
double block_diag_trace(const Matrix& a, Eigen::Index j, Eigen::Index m);

/// Column-stacking vectorization and its inverse.
Vector vec_factor(const Matrix& u);
Matrix unvec_factor(const Vector& v, Eigen::Index rows, Eigen::Index cols);

/// Cholesky factor of a symmetric positive-definite matrix. If the plain
/// factorization fails, retries with jitter delta * mean(diag(B)) * I for
/// delta in {1e-12, 1e-10, 1e-8} before giving up.
class SpdFactor {
 public:
  /// Throws NumericalError (with the offending leading-minor index) if B is
  /// not positive definite after the jitter escalation.
  static SpdFactor factorize(const Matrix& b);

  Eigen::Index dim() const { return llt_.matrixLLT().rows(); }
  Matrix matrix_l() const { return llt_.matrixL(); }

  /// Solves B x = rhs; rhs may be a vector or a matrix.
  Vector solve(const Vector& rhs) const;
  Matrix solve(const Matrix& rhs) const;

  /// B^{-1}, symmetrized.
  Matrix inverse() const;

  /// L L^T (for reconstruction checks).
  Matrix reconstruct() const;

  /// Jitter that was actually added to the diagonal (0 if none).
  double jitter() const { return jitter_; }

 private:
  SpdFactor() = default;
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

Matrix spd_factorize_matrix_l(const Matrix& b);  // convenience for tests

/// (M + M^T) / 2.
inline Matrix symmetrized(const Matrix& m) {
  return 0.5 * (m + m.transpose());
}

}  // namespace vbcp
