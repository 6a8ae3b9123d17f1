#include "vbcp/matrix_reference.hpp"

#include <string>

namespace vbcp {

Matrix dense_kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

namespace {

void check_two_mode(const CompletionProblem& problem, Eigen::Index k) {
  if (problem.dims() != 2) {
    throw ValidationError("matrix_reference: problem must have d = 2");
  }
  for (Eigen::Index l = 0; l < 2; ++l) {
    if (problem.mode_dim(l) * k > 64) {
      throw ValidationError(
          "matrix_reference: m * k > 64; this oracle materializes dense "
          "Kronecker products and is restricted to tiny problems");
    }
  }
}

Matrix literal_spd_inverse(const Matrix& p, const char* what) {
  Eigen::LLT<Matrix> llt(p);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string("matrix_reference: ") + what +
                         " is not positive definite");
  }
  return llt.solve(Matrix::Identity(p.rows(), p.cols()));
}

}  // namespace

MatrixState matrix_sweep(const CompletionProblem& problem,
                         const MatrixState& s) {
  const Eigen::Index k = static_cast<Eigen::Index>(s.lambda.size());
  check_two_mode(problem, k);
  const Matrix& g_mat = problem.side_info[0];  // n1 x m1, rows g_{i1}^T
  const Matrix& h_mat = problem.side_info[1];  // n2 x m2, rows h_{i2}^T
  const Eigen::Index m1 = g_mat.cols();
  const Eigen::Index m2 = h_mat.cols();
  const Matrix eye_k = Matrix::Identity(k, k);

  MatrixState out = s;
  const double a0 = problem.hyper.a_tau;
  const double b0 = problem.hyper.b_tau;

  Matrix lambda_mean_diag = Matrix::Zero(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    lambda_mean_diag(j, j) = s.lambda[static_cast<std::size_t>(j)].shape /
                             s.lambda[static_cast<std::size_t>(j)].rate;
  }
  const double tau_mean = s.tau.shape / s.tau.rate;

  // (1) covariance of u: B_u = sum (I_k (x) h^T)(mu_v mu_v^T + A_v)(I_k (x) h)
  //                               (x) g g^T
  const Matrix ev = out.v_posterior.mean * out.v_posterior.mean.transpose() +
                    out.v_posterior.covariance;
  Matrix b_u = Matrix::Zero(m1 * k, m1 * k);
  for (const Observation& obs : problem.observations) {
    const Matrix g = g_mat.row(obs.index[0]).transpose();  // m1 x 1
    const Matrix h = h_mat.row(obs.index[1]).transpose();  // m2 x 1
    const Matrix ikht = dense_kron(eye_k, h.transpose());  // k x (m2 k)
    b_u += dense_kron(ikht * ev * ikht.transpose(), g * g.transpose());
  }
  const Matrix prec_u =
      dense_kron(lambda_mean_diag, Matrix::Identity(m1, m1)) + tau_mean * b_u;
  out.u_posterior.covariance = literal_spd_inverse(prec_u, "A_u precision");
  out.u_posterior.m = m1;
  out.u_posterior.k = k;

  // (2) mean of u: mu_u = (c0/d0) A_u sum y ((I_k (x) h^T) mu_v) (x) g
  Vector lin_u = Vector::Zero(m1 * k);
  for (const Observation& obs : problem.observations) {
    const Matrix g = g_mat.row(obs.index[0]).transpose();
    const Matrix h = h_mat.row(obs.index[1]).transpose();
    const Matrix ikht = dense_kron(eye_k, h.transpose());
    lin_u += obs.value *
             dense_kron(ikht * out.v_posterior.mean, g).col(0);
  }
  out.u_posterior.mean = tau_mean * out.u_posterior.covariance * lin_u;

  // (3), (4): same for v, with the freshly updated u.
  const Matrix eu = out.u_posterior.mean * out.u_posterior.mean.transpose() +
                    out.u_posterior.covariance;
  Matrix b_v = Matrix::Zero(m2 * k, m2 * k);
  for (const Observation& obs : problem.observations) {
    const Matrix g = g_mat.row(obs.index[0]).transpose();
    const Matrix h = h_mat.row(obs.index[1]).transpose();
    const Matrix ikgt = dense_kron(eye_k, g.transpose());
    b_v += dense_kron(ikgt * eu * ikgt.transpose(), h * h.transpose());
  }
  const Matrix prec_v =
      dense_kron(lambda_mean_diag, Matrix::Identity(m2, m2)) + tau_mean * b_v;
  out.v_posterior.covariance = literal_spd_inverse(prec_v, "A_v precision");
  out.v_posterior.m = m2;
  out.v_posterior.k = k;

  Vector lin_v = Vector::Zero(m2 * k);
  for (const Observation& obs : problem.observations) {
    const Matrix g = g_mat.row(obs.index[0]).transpose();
    const Matrix h = h_mat.row(obs.index[1]).transpose();
    const Matrix ikgt = dense_kron(eye_k, g.transpose());
    lin_v += obs.value *
             dense_kron(ikgt * out.u_posterior.mean, h).col(0);
  }
  out.v_posterior.mean = tau_mean * out.v_posterior.covariance * lin_v;

  // (5), (6): component precisions.
  const Matrix eu2 = out.u_posterior.mean * out.u_posterior.mean.transpose() +
                     out.u_posterior.covariance;
  const Matrix ev2 = out.v_posterior.mean * out.v_posterior.mean.transpose() +
                     out.v_posterior.covariance;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double cj = problem.hyper.a_lambda[static_cast<std::size_t>(j)] +
                      static_cast<double>(m1 + m2) / 2.0;
    const double dj = problem.hyper.b_lambda[static_cast<std::size_t>(j)] +
                      0.5 * eu2.block(j * m1, j * m1, m1, m1).trace() +
                      0.5 * ev2.block(j * m2, j * m2, m2, m2).trace();
    out.lambda[static_cast<std::size_t>(j)] = GammaPosterior{cj, dj};
  }

  // (7), (8): noise precision, four-term rate.
  const Matrix mu_mat =
      Eigen::Map<const Matrix>(out.u_posterior.mean.data(), m1, k);
  const Matrix mv_mat =
      Eigen::Map<const Matrix>(out.v_posterior.mean.data(), m2, k);
  double rate = b0;
  for (const Observation& obs : problem.observations) {
    const Matrix g = g_mat.row(obs.index[0]).transpose();
    const Matrix h = h_mat.row(obs.index[1]).transpose();
    const Matrix ikh = dense_kron(eye_k, h);    // (m2 k) x k
    const Matrix ikg = dense_kron(eye_k, g);    // (m1 k) x k
    const double fit =
        obs.value - (g.transpose() * mu_mat * mv_mat.transpose() * h)(0, 0);
    const double term_v =
        (g.transpose() * mu_mat * ikh.transpose() *
         out.v_posterior.covariance * ikh * mu_mat.transpose() * g)(0, 0);
    const double term_u =
        (h.transpose() * mv_mat * ikg.transpose() *
         out.u_posterior.covariance * ikg * mv_mat.transpose() * h)(0, 0);
    const double cross =
        (out.v_posterior.covariance *
         dense_kron(eye_k, h * g.transpose()) * out.u_posterior.covariance *
         dense_kron(eye_k, g * h.transpose()))
            .trace();
    rate += 0.5 * (fit * fit + term_v + term_u + cross);
  }
  out.tau = GammaPosterior{
      a0 + static_cast<double>(problem.sample_count()) / 2.0, rate};
  return out;
}

PredictiveT matrix_predict(const CompletionProblem& problem,
                           const MatrixState& s, const Index& index) {
  const Eigen::Index k = static_cast<Eigen::Index>(s.lambda.size());
  check_two_mode(problem, k);
  if (index.size() != 2 || index[0] < 0 || index[0] >= problem.n[0] ||
      index[1] < 0 || index[1] >= problem.n[1]) {
    throw ValidationError("matrix_predict: index out of range");
  }
  const Eigen::Index m1 = problem.mode_dim(0);
  const Eigen::Index m2 = problem.mode_dim(1);
  const Matrix eye_k = Matrix::Identity(k, k);
  const Matrix g = problem.side_info[0].row(index[0]).transpose();
  const Matrix h = problem.side_info[1].row(index[1]).transpose();
  const Matrix mu_mat = Eigen::Map<const Matrix>(s.u_posterior.mean.data(), m1, k);
  const Matrix mv_mat = Eigen::Map<const Matrix>(s.v_posterior.mean.data(), m2, k);
  const Matrix ikg = dense_kron(eye_k, g);  // (m1 k) x k
  const Matrix ikh = dense_kron(eye_k, h);  // (m2 k) x k

  const double location =
      (g.transpose() * mu_mat * mv_mat.transpose() * h)(0, 0);
  const double term_u = (h.transpose() * mv_mat * ikg.transpose() *
                         s.u_posterior.covariance * ikg * mv_mat.transpose() *
                         h)(0, 0);
  const double term_v = (g.transpose() * mu_mat * ikh.transpose() *
                         s.v_posterior.covariance * ikh * mu_mat.transpose() *
                         g)(0, 0);
  const double xi_inv = s.tau.rate / s.tau.shape + term_u + term_v;

  PredictiveT t;
  t.location = location;
  t.precision = 1.0 / xi_inv;
  t.dof = 2.0 * s.tau.shape;
  return t;
}

MatrixState matrix_state_from_posterior(const PosteriorState& state) {
  if (state.dims() != 2) {
    throw ValidationError(
        "matrix_state_from_posterior: need a two-mode state");
  }
  MatrixState s;
  s.u_posterior = state.factors[0];
  s.v_posterior = state.factors[1];
  s.lambda = state.lambda;
  s.tau = state.tau;
  return s;
}

PosteriorState posterior_from_matrix_state(const MatrixState& s,
                                           const CompletionProblem& problem,
                                           std::int64_t iteration) {
  PosteriorState out;
  out.factors = {s.u_posterior, s.v_posterior};
  out.lambda = s.lambda;
  out.tau = s.tau;
  out.current_k = static_cast<Eigen::Index>(s.lambda.size());
  out.a_lambda = problem.hyper.a_lambda;
  out.b_lambda = problem.hyper.b_lambda;
  out.iteration = iteration;
  return out;
}

}  // namespace vbcp
