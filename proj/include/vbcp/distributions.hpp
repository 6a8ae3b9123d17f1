#pragma once

#include <utility>
#include <vector>

#include "vbcp/linalg.hpp"

namespace vbcp {

/// Gamma distribution in shape/rate parametrization.
struct GammaPosterior {
  double shape = 0.0;
  double rate = 0.0;

  double mean() const { return shape / rate; }
  bool valid() const {
    return shape > 0.0 && rate > 0.0 && std::isfinite(mean());
  }
};

inline double gamma_mean(const GammaPosterior& g) { return g.mean(); }

/// Gaussian posterior over the column-stacked vectorization of an
/// m x k factor matrix.
struct GaussianVecPosterior {
  Vector mean;        // length m * k
  Matrix covariance;  // (m k) x (m k), symmetric positive definite
  Eigen::Index m = 0;
  Eigen::Index k = 0;

  Matrix mean_matrix() const { return unvec_factor(mean, m, k); }

  /// Symmetry violation plus a Cholesky probe; throws on failure.
  void check_valid() const;
};

/// Student's t with location, precision xi, and degrees of freedom.
struct StudentT {
  double location = 0.0;
  double precision = 1.0;
  double dof = 1.0;
};

/// Predictive law for one tensor entry: location is the posterior-mean
/// reconstruction, dof = 2 c0.
using PredictiveT = StudentT;

double student_t_log_pdf(const StudentT& t, double x);
double student_t_pdf(const StudentT& t, double x);

/// (mean, variance); variance = c0 / (xi (c0 - 1)) with c0 = dof / 2.
/// Throws ValidationError when dof <= 2 (variance undefined).
std::pair<double, double> student_t_moments(const StudentT& t);

/// Marginalizes the precision of N(x | mu, beta^{-1}) under
/// G(beta | a, b): the result is St(mu, a/b, 2a).
StudentT marginalize_gaussian_gamma(double mu, double a, double b);

}  // namespace vbcp
