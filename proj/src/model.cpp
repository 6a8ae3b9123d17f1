#include "vbcp/model.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace vbcp {

Hyperpriors Hyperpriors::uniform(Eigen::Index k, double a, double b,
                                 double a0, double b0) {
  Hyperpriors h;
  h.a_lambda.assign(static_cast<std::size_t>(k), a);
  h.b_lambda.assign(static_cast<std::size_t>(k), b);
  h.a_tau = a0;
  h.b_tau = b0;
  return h;
}

bool CompletionProblem::trivial_side_info() const {
  for (const Matrix& g : side_info) {
    if (g.rows() != g.cols()) return false;
    if (!g.isIdentity(0.0)) return false;
  }
  return true;
}

namespace {

std::string index_to_string(const Index& idx) {
  std::string s = "(";
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(idx[i]);
  }
  return s + ")";
}

}  // namespace

CompletionProblem new_problem(std::vector<Matrix> side_info,
                              std::vector<Observation> observations,
                              Eigen::Index k, Hyperpriors hyper) {
  if (side_info.empty()) {
    throw ValidationError("new_problem: need at least one mode");
  }
  if (k < 1) {
    throw ValidationError("new_problem: rank prediction k must be >= 1");
  }

  CompletionProblem p;
  p.n.reserve(side_info.size());
  for (std::size_t l = 0; l < side_info.size(); ++l) {
    const Matrix& g = side_info[l];
    if (g.rows() < 1 || g.cols() < 1 || g.cols() > g.rows()) {
      throw ValidationError("new_problem: G_" + std::to_string(l) +
                            " must be n_l x m_l with 1 <= m_l <= n_l");
    }
    if (!g.allFinite()) {
      throw ValidationError("new_problem: G_" + std::to_string(l) +
                            " has non-finite entries");
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(g);
    qr.setThreshold(1e-10);  // relative to the largest pivot
    if (qr.rank() < g.cols()) {
      throw ValidationError("new_problem: side information for mode " +
                            std::to_string(l) +
                            " is rank-deficient (rank " +
                            std::to_string(qr.rank()) + " < " +
                            std::to_string(g.cols()) + ")");
    }
    p.n.push_back(g.rows());
  }
  p.side_info = std::move(side_info);

  const std::size_t d = p.side_info.size();
  for (const Observation& obs : observations) {
    if (obs.index.size() != d) {
      throw ValidationError("new_problem: observation index " +
                            index_to_string(obs.index) + " has arity " +
                            std::to_string(obs.index.size()) + ", expected " +
                            std::to_string(d));
    }
    for (std::size_t l = 0; l < d; ++l) {
      if (obs.index[l] < 0 || obs.index[l] >= p.n[l]) {
        throw ValidationError("new_problem: observation index " +
                              index_to_string(obs.index) +
                              " out of range in mode " + std::to_string(l));
      }
    }
    if (!std::isfinite(obs.value)) {
      throw ValidationError("new_problem: non-finite value at " +
                            index_to_string(obs.index));
    }
  }
  p.observations = std::move(observations);
  p.k = k;

  if (hyper.a_lambda.size() == 1 && k > 1) {
    hyper.a_lambda.assign(static_cast<std::size_t>(k), hyper.a_lambda[0]);
  }
  if (hyper.b_lambda.size() == 1 && k > 1) {
    hyper.b_lambda.assign(static_cast<std::size_t>(k), hyper.b_lambda[0]);
  }
  if (hyper.a_lambda.size() != static_cast<std::size_t>(k) ||
      hyper.b_lambda.size() != static_cast<std::size_t>(k)) {
    throw ValidationError("new_problem: hyperprior a_j/b_j must have length k");
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    if (hyper.a_lambda[j] <= 0.0 || hyper.b_lambda[j] <= 0.0) {
      throw ValidationError("new_problem: hyperprior a_j, b_j must be > 0");
    }
  }
  if (hyper.a_tau <= 0.0 || hyper.b_tau <= 0.0) {
    throw ValidationError("new_problem: hyperprior a0, b0 must be > 0");
  }
  p.hyper = std::move(hyper);
  return p;
}

std::vector<Matrix> identity_side_info(const std::vector<Eigen::Index>& n) {
  std::vector<Matrix> g;
  g.reserve(n.size());
  for (Eigen::Index nl : n) g.push_back(Matrix::Identity(nl, nl));
  return g;
}

CompletionProblem orthonormalize_side_info(const CompletionProblem& problem) {
  std::vector<Matrix> g;
  g.reserve(problem.side_info.size());
  for (const Matrix& gl : problem.side_info) {
    Eigen::HouseholderQR<Matrix> qr(gl);
    Matrix q = qr.householderQ() * Matrix::Identity(gl.rows(), gl.cols());
    g.push_back(std::move(q));
  }
  return new_problem(std::move(g), problem.observations, problem.k,
                     problem.hyper);
}

Vector PosteriorState::lambda_means() const {
  Vector v(current_k);
  for (Eigen::Index j = 0; j < current_k; ++j) v[j] = lambda[j].mean();
  return v;
}

Vector PosteriorState::lambda_variance_scales() const {
  Vector v(current_k);
  for (Eigen::Index j = 0; j < current_k; ++j) {
    v[j] = lambda[j].rate / lambda[j].shape;
  }
  return v;
}

void RunOptions::validate() const {
  if (max_iterations < 1) {
    throw ValidationError("RunOptions: max_iterations must be >= 1");
  }
  if (tolerance < 0.0) {
    throw ValidationError("RunOptions: tolerance must be >= 0");
  }
  if (prune && prune_threshold <= 0.0) {
    throw ValidationError("RunOptions: prune_threshold must be > 0");
  }
}

PosteriorState init_posterior(const CompletionProblem& problem,
                              std::uint64_t seed) {
  constexpr double kInitGamma = 1e-6;
  const Eigen::Index d = problem.dims();
  const Eigen::Index k = problem.k;

  PosteriorState s;
  s.current_k = k;
  s.a_lambda = problem.hyper.a_lambda;
  s.b_lambda = problem.hyper.b_lambda;
  s.lambda.assign(static_cast<std::size_t>(k),
                  GammaPosterior{kInitGamma, kInitGamma});
  s.tau = GammaPosterior{kInitGamma, kInitGamma};

  Rng rng = Rng(seed).fork("init_posterior");
  for (Eigen::Index l = 0; l < d; ++l) {
    const Eigen::Index m = problem.mode_dim(l);
    GaussianVecPosterior f;
    f.m = m;
    f.k = k;
    f.mean.resize(m * k);
    for (Eigen::Index i = 0; i < m * k; ++i) f.mean[i] = rng.normal();
    f.covariance = Matrix::Identity(m * k, m * k);
    s.factors.push_back(std::move(f));
  }
  return s;
}

}  // namespace vbcp
