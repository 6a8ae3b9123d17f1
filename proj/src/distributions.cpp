#include "vbcp/distributions.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vbcp {

void GaussianVecPosterior::check_valid() const {
  if (mean.size() != m * k) {
    throw ValidationError("GaussianVecPosterior: mean length " +
                          std::to_string(mean.size()) + " != m*k");
  }
  if (covariance.rows() != m * k || covariance.cols() != m * k) {
    throw ValidationError("GaussianVecPosterior: covariance must be (m k)^2");
  }
  const double asym = (covariance - covariance.transpose()).cwiseAbs().maxCoeff();
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if (asym > 1e-12 * scale) {
    throw NumericalError("GaussianVecPosterior: symmetry violation " +
                         std::to_string(asym));
  }
  SpdFactor::factorize(symmetrized(covariance));  // throws if not PD
}

double student_t_log_pdf(const StudentT& t, double x) {
  // Closed form with a = dof/2, b = a/precision:
  //   Gamma(a + 1/2)/Gamma(a) * (2 pi b)^{-1/2} * [1 + (x-mu)^2/(2b)]^{1/2 - a}
  // evaluated in log space so large dof does not overflow.
  const double a = 0.5 * t.dof;
  const double b = a / t.precision;
  const double z = x - t.location;
  return std::lgamma(a + 0.5) - std::lgamma(a) -
         0.5 * std::log(2.0 * std::numbers::pi * b) -
         (a + 0.5) * std::log1p(z * z / (2.0 * b));
}

double student_t_pdf(const StudentT& t, double x) {
  return std::exp(student_t_log_pdf(t, x));
}

std::pair<double, double> student_t_moments(const StudentT& t) {
  if (t.dof <= 2.0) {
    throw ValidationError("student_t_moments: variance undefined for dof <= 2"
                          " (dof = " + std::to_string(t.dof) + ")");
  }
  const double c0 = 0.5 * t.dof;
  return {t.location, c0 / (t.precision * (c0 - 1.0))};
}

StudentT marginalize_gaussian_gamma(double mu, double a, double b) {
  if (a <= 0.0 || b <= 0.0) {
    throw ValidationError("marginalize_gaussian_gamma: a, b must be > 0");
  }
  return StudentT{mu, a / b, 2.0 * a};
}

}  // namespace vbcp
