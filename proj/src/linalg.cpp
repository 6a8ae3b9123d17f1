#include "vbcp/linalg.hpp"

#include <cmath>
#include <string>

namespace vbcp {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

double multilinear_product(std::span<const Matrix> mats) {
  if (mats.empty()) {
    throw ValidationError("multilinear_product: need at least one matrix");
  }
  const Eigen::Index rows = mats[0].rows();
  const Eigen::Index cols = mats[0].cols();
  for (const Matrix& m : mats) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ValidationError("multilinear_product: shape mismatch, " +
                            shape_of(mats[0]) + " vs " + shape_of(m));
    }
  }
  Matrix prod = mats[0];
  for (std::size_t i = 1; i < mats.size(); ++i) {
    prod = prod.cwiseProduct(mats[i]);
  }
  return prod.sum();
}

double multilinear_product(std::initializer_list<Matrix> mats) {
  std::vector<Matrix> v(mats);
  return multilinear_product(std::span<const Matrix>(v));
}

Matrix hadamard(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ValidationError("hadamard: shape mismatch, " + shape_of(x) +
                          " vs " + shape_of(y));
  }
  return x.cwiseProduct(y);
}

Matrix sandwich(const Matrix& a, const Vector& g, Eigen::Index k) {
  const Eigen::Index m = g.size();
  if (k < 1 || a.rows() != m * k || a.cols() != m * k) {
    throw ValidationError(
        "sandwich: A must be (m k) x (m k) with m = g.size(); got A " +
        shape_of(a) + ", m = " + std::to_string(m) +
        ", k = " + std::to_string(k));
  }
  // A symmetric => block(q,p) = block(p,q)^T and g^T M^T g = g^T M g,
  // so one triangle suffices and the result is exactly symmetric.
  Matrix out(k, k);
  for (Eigen::Index p = 0; p < k; ++p) {
    for (Eigen::Index q = p; q < k; ++q) {
      const double v = g.dot(a.block(p * m, q * m, m, m) * g);
      out(p, q) = v;
      out(q, p) = v;
    }
  }
  return out;
}

Vector kron_vec(const Vector& w, const Vector& g) {
  const Eigen::Index k = w.size();
  const Eigen::Index m = g.size();
  Vector out(m * k);
  for (Eigen::Index j = 0; j < k; ++j) {
    out.segment(j * m, m) = w[j] * g;
  }
  return out;
}

double block_diag_trace(const Matrix& a, Eigen::Index j, Eigen::Index m) {
  if (m < 1 || a.rows() != a.cols() || a.rows() % m != 0) {
    throw ValidationError("block_diag_trace: A must be square with dim "
                          "divisible by m");
  }
  const Eigen::Index k = a.rows() / m;
  if (j < 0 || j >= k) {
    throw ValidationError("block_diag_trace: block index " +
                          std::to_string(j) + " out of range [0, " +
                          std::to_string(k) + ")");
  }
  return a.block(j * m, j * m, m, m).trace();
}

Vector vec_factor(const Matrix& u) {
  return Eigen::Map<const Vector>(u.data(), u.size());
}

Matrix unvec_factor(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw ValidationError("unvec_factor: size mismatch");
  }
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

namespace {

/// Textbook Cholesky pass used only to report which leading minor failed.
Eigen::Index first_bad_minor(const Matrix& b) {
  const Eigen::Index n = b.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = b(j, j) - l.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) return j;
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      l(i, j) =
          (b(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / l(j, j);
    }
  }
  return n;  // unreachable when called on a failed factorization
}

}  // namespace

SpdFactor SpdFactor::factorize(const Matrix& b) {
  if (b.rows() != b.cols()) {
    throw ValidationError("spd_factorize: matrix must be square");
  }
  const double diag_mean = b.diagonal().mean();
  static constexpr double kJitterScales[] = {0.0, 1e-12, 1e-10, 1e-8};

  SpdFactor f;
  for (double scale : kJitterScales) {
    Matrix attempt = b;
    const double jitter = scale * diag_mean;
    if (scale > 0.0) {
      attempt.diagonal().array() += jitter;
    }
    f.llt_.compute(attempt);
    if (f.llt_.info() == Eigen::Success) {
      f.jitter_ = jitter;
      return f;
    }
    if (scale > 0.0 && jitter <= 0.0) break;  // jitter cannot help
  }
  throw NumericalError(
      "spd_factorize: not positive definite after jitter; leading minor " +
      std::to_string(first_bad_minor(b)) + " of " +
      std::to_string(b.rows()));
}

Vector SpdFactor::solve(const Vector& rhs) const {
  if (rhs.size() != dim()) {
    throw ValidationError("spd_solve: rhs size " +
                          std::to_string(rhs.size()) + " != dim " +
                          std::to_string(dim()));
  }
  return llt_.solve(rhs);
}

Matrix SpdFactor::solve(const Matrix& rhs) const {
  if (rhs.rows() != dim()) {
    throw ValidationError("spd_solve: rhs rows " +
                          std::to_string(rhs.rows()) + " != dim " +
                          std::to_string(dim()));
  }
  return llt_.solve(rhs);
}

Matrix SpdFactor::inverse() const {
  return symmetrized(llt_.solve(Matrix::Identity(dim(), dim())));
}

Matrix SpdFactor::reconstruct() const {
  Matrix l = llt_.matrixL();
  return l * l.transpose();
}

Matrix spd_factorize_matrix_l(const Matrix& b) {
  return SpdFactor::factorize(b).matrix_l();
}

}  // namespace vbcp
