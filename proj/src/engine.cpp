#include "vbcp/engine.hpp"

#include <algorithm>
#include <string>

namespace vbcp {

namespace {

std::string mode_label(Eigen::Index l) { return "mode " + std::to_string(l); }

void check_state_shapes(const CompletionProblem& problem,
                        const PosteriorState& state) {
  if (state.dims() != problem.dims()) {
    throw ValidationError("engine: state has " + std::to_string(state.dims()) +
                          " modes, problem has " +
                          std::to_string(problem.dims()));
  }
  for (Eigen::Index l = 0; l < problem.dims(); ++l) {
    const GaussianVecPosterior& f = state.factors[static_cast<std::size_t>(l)];
    if (f.m != problem.mode_dim(l) || f.k != state.current_k ||
        f.mean.size() != f.m * f.k) {
      throw ValidationError("engine: factor shape mismatch in " +
                            mode_label(l));
    }
  }
}

}  // namespace

Engine::Engine(const CompletionProblem& problem) : problem_(&problem) {
  const Eigen::Index d = problem.dims();
  groups_.resize(static_cast<std::size_t>(d));
  rows_with_data_.resize(static_cast<std::size_t>(d));
  for (Eigen::Index l = 0; l < d; ++l) {
    groups_[static_cast<std::size_t>(l)].resize(
        static_cast<std::size_t>(problem.n[static_cast<std::size_t>(l)]));
  }
  for (std::size_t id = 0; id < problem.observations.size(); ++id) {
    const Index& idx = problem.observations[id].index;
    for (Eigen::Index l = 0; l < d; ++l) {
      groups_[static_cast<std::size_t>(l)]
             [static_cast<std::size_t>(idx[static_cast<std::size_t>(l)])]
                 .push_back(id);
    }
  }
  for (Eigen::Index l = 0; l < d; ++l) {
    auto& rows = rows_with_data_[static_cast<std::size_t>(l)];
    const auto& g = groups_[static_cast<std::size_t>(l)];
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!g[i].empty()) rows.push_back(static_cast<Eigen::Index>(i));
    }
  }
  w_cache_.resize(static_cast<std::size_t>(d));
  s_cache_.resize(static_cast<std::size_t>(d));
}

void Engine::refresh_mode(const PosteriorState& state, Eigen::Index l) {
  const Matrix& g = problem_->side_info[static_cast<std::size_t>(l)];
  const GaussianVecPosterior& f = state.factors[static_cast<std::size_t>(l)];
  const Eigen::Index n = g.rows();
  const Eigen::Index m = g.cols();
  const Eigen::Index k = state.current_k;

  // w_l(i) for all rows at once: row i of G_l M_l.
  const Matrix w_all = g * f.mean_matrix();  // n x k

  // s_pq(i) = g_i^T A_block(p,q) g_i for all rows: diagonal of
  // G A_block G^T, computed as the row sums of (G A_block) .* G.
  auto& wc = w_cache_[static_cast<std::size_t>(l)];
  auto& sc = s_cache_[static_cast<std::size_t>(l)];
  wc.assign(static_cast<std::size_t>(n), Vector());
  sc.assign(static_cast<std::size_t>(n), Matrix::Zero(k, k));

  Matrix svals(n, k * k);  // column q*k+p holds s_pq for every row
  for (Eigen::Index p = 0; p < k; ++p) {
    for (Eigen::Index q = p; q < k; ++q) {
      const Vector col =
          (g * f.covariance.block(p * m, q * m, m, m)).cwiseProduct(g).rowwise().sum();
      svals.col(q * k + p) = col;
      svals.col(p * k + q) = col;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    wc[static_cast<std::size_t>(i)] = w_all.row(i).transpose();
    Matrix s(k, k);
    for (Eigen::Index p = 0; p < k; ++p) {
      for (Eigen::Index q = 0; q < k; ++q) s(p, q) = svals(i, q * k + p);
    }
    s += wc[static_cast<std::size_t>(i)] *
         wc[static_cast<std::size_t>(i)].transpose();
    sc[static_cast<std::size_t>(i)] = std::move(s);
  }
}

void Engine::refresh_all(const PosteriorState& state) {
  check_state_shapes(*problem_, state);
  for (Eigen::Index l = 0; l < problem_->dims(); ++l) refresh_mode(state, l);
}

GaussianVecPosterior Engine::factor_update(const PosteriorState& state,
                                           Eigen::Index l) const {
  const CompletionProblem& problem = *problem_;
  const Matrix& g = problem.side_info[static_cast<std::size_t>(l)];
  const Eigen::Index d = problem.dims();
  const Eigen::Index m = g.cols();
  const Eigen::Index k = state.current_k;
  const double tau_mean = state.tau.mean();

  Matrix b = Matrix::Zero(m * k, m * k);
  Vector rhs = Vector::Zero(m * k);
  Matrix fsum(k, k);
  Vector vsum(k), wprod(k);
  Matrix fobs(k, k);

  for (Eigen::Index i : rows_with_data_[static_cast<std::size_t>(l)]) {
    fsum.setZero();
    vsum.setZero();
    for (std::size_t id :
         groups_[static_cast<std::size_t>(l)][static_cast<std::size_t>(i)]) {
      const Observation& obs = problem.observations[id];
      fobs.setOnes();
      wprod.setOnes();
      for (Eigen::Index s = 0; s < d; ++s) {
        if (s == l) continue;
        const auto is = static_cast<std::size_t>(
            obs.index[static_cast<std::size_t>(s)]);
        fobs = fobs.cwiseProduct(s_cache_[static_cast<std::size_t>(s)][is]);
        wprod = wprod.cwiseProduct(w_cache_[static_cast<std::size_t>(s)][is]);
      }
      fsum += fobs;
      vsum += obs.value * wprod;
    }
    const Vector gi = g.row(i).transpose();
    const Matrix gg = gi * gi.transpose();
    for (Eigen::Index p = 0; p < k; ++p) {
      for (Eigen::Index q = 0; q < k; ++q) {
        b.block(p * m, q * m, m, m) += fsum(p, q) * gg;
      }
    }
    rhs += kron_vec(vsum, gi);
  }

  Matrix precision = tau_mean * b;
  for (Eigen::Index j = 0; j < k; ++j) {
    precision.block(j * m, j * m, m, m).diagonal().array() +=
        state.lambda[static_cast<std::size_t>(j)].mean();
  }

  GaussianVecPosterior out;
  out.m = m;
  out.k = k;
  const SpdFactor fac = SpdFactor::factorize(symmetrized(precision));
  out.covariance = fac.inverse();
  out.mean = tau_mean * fac.solve(rhs);
  return out;
}

std::vector<GammaPosterior> Engine::lambda_update(
    const PosteriorState& state) const {
  const CompletionProblem& problem = *problem_;
  const Eigen::Index k = state.current_k;
  double msum = 0.0;
  for (Eigen::Index l = 0; l < problem.dims(); ++l) {
    msum += static_cast<double>(problem.mode_dim(l));
  }

  std::vector<GammaPosterior> out(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < k; ++j) {
    double trace = 0.0;
    for (Eigen::Index l = 0; l < problem.dims(); ++l) {
      const GaussianVecPosterior& f =
          state.factors[static_cast<std::size_t>(l)];
      trace += f.mean.segment(j * f.m, f.m).squaredNorm() +
               block_diag_trace(f.covariance, j, f.m);
    }
    out[static_cast<std::size_t>(j)] =
        GammaPosterior{state.a_lambda[static_cast<std::size_t>(j)] + 0.5 * msum,
                       state.b_lambda[static_cast<std::size_t>(j)] + 0.5 * trace};
  }
  return out;
}

GammaPosterior Engine::tau_update(const PosteriorState& state) const {
  const CompletionProblem& problem = *problem_;
  const Eigen::Index d = problem.dims();
  const Eigen::Index k = state.current_k;

  double resid = 0.0;
  Matrix sprod(k, k);
  Vector wprod(k);
  for (const Observation& obs : problem.observations) {
    sprod.setOnes();
    wprod.setOnes();
    for (Eigen::Index l = 0; l < d; ++l) {
      const auto il =
          static_cast<std::size_t>(obs.index[static_cast<std::size_t>(l)]);
      sprod = sprod.cwiseProduct(s_cache_[static_cast<std::size_t>(l)][il]);
      wprod = wprod.cwiseProduct(w_cache_[static_cast<std::size_t>(l)][il]);
    }
    resid += obs.value * obs.value - 2.0 * obs.value * wprod.sum() +
             sprod.sum();
  }

  return GammaPosterior{
      problem.hyper.a_tau +
          0.5 * static_cast<double>(problem.sample_count()),
      problem.hyper.b_tau + 0.5 * resid};
}

SweepReport Engine::sweep(PosteriorState& state) {
  refresh_all(state);
  const Eigen::Index d = problem_->dims();

  double max_change = 0.0;
  for (Eigen::Index l = 0; l < d; ++l) {
    GaussianVecPosterior updated;
    try {
      updated = factor_update(state, l);
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(state.iteration + 1) +
                           ", " + mode_label(l) + ": " + e.what());
    }
    GaussianVecPosterior& f = state.factors[static_cast<std::size_t>(l)];
    const double denom = f.mean.norm() + 1e-15;
    max_change = std::max(max_change, (updated.mean - f.mean).norm() / denom);
    f = std::move(updated);
    refresh_mode(state, l);
  }

  state.lambda = lambda_update(state);
  state.tau = tau_update(state);
  state.iteration += 1;

  SweepReport report;
  report.iteration = state.iteration;
  report.residual_proxy = state.tau.rate - problem_->hyper.b_tau;
  report.max_rel_change = max_change;
  report.lambda_means = state.lambda_means();
  report.tau_mean = state.tau.mean();
  return report;
}

GaussianVecPosterior update_factor(const CompletionProblem& problem,
                                   const PosteriorState& state,
                                   Eigen::Index l) {
  if (l < 0 || l >= problem.dims()) {
    throw ValidationError("update_factor: mode index out of range");
  }
  Engine engine(problem);
  engine.refresh_all(state);
  return engine.factor_update(state, l);
}

std::vector<GammaPosterior> update_lambda(const CompletionProblem& problem,
                                          const PosteriorState& state) {
  Engine engine(problem);
  check_state_shapes(problem, state);
  return engine.lambda_update(state);
}

GammaPosterior update_tau(const CompletionProblem& problem,
                          const PosteriorState& state) {
  Engine engine(problem);
  engine.refresh_all(state);
  return engine.tau_update(state);
}

SweepReport sweep(const CompletionProblem& problem, PosteriorState& state) {
  Engine engine(problem);
  return engine.sweep(state);
}

void prune_ranks(PosteriorState& state, double threshold) {
  if (threshold <= 0.0) {
    throw ValidationError("prune_ranks: threshold must be > 0");
  }
  const Eigen::Index k = state.current_k;
  if (k <= 1) return;

  double min_mean = state.lambda[0].mean();
  std::size_t argmin = 0;
  for (std::size_t j = 1; j < state.lambda.size(); ++j) {
    if (state.lambda[j].mean() < min_mean) {
      min_mean = state.lambda[j].mean();
      argmin = j;
    }
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (state.lambda[static_cast<std::size_t>(j)].mean() <=
        threshold * min_mean) {
      keep.push_back(j);
    }
  }
  if (keep.empty()) keep.push_back(static_cast<Eigen::Index>(argmin));
  if (static_cast<Eigen::Index>(keep.size()) == k) return;

  const auto kept = static_cast<Eigen::Index>(keep.size());
  for (GaussianVecPosterior& f : state.factors) {
    const Eigen::Index m = f.m;
    Vector mean(m * kept);
    Matrix cov(m * kept, m * kept);
    for (Eigen::Index a = 0; a < kept; ++a) {
      mean.segment(a * m, m) = f.mean.segment(keep[static_cast<std::size_t>(a)] * m, m);
      for (Eigen::Index b = 0; b < kept; ++b) {
        cov.block(a * m, b * m, m, m) =
            f.covariance.block(keep[static_cast<std::size_t>(a)] * m,
                               keep[static_cast<std::size_t>(b)] * m, m, m);
      }
    }
    f.mean = std::move(mean);
    f.covariance = std::move(cov);
    f.k = kept;
  }

  std::vector<GammaPosterior> lambda;
  std::vector<double> a_lambda, b_lambda;
  for (Eigen::Index j : keep) {
    lambda.push_back(state.lambda[static_cast<std::size_t>(j)]);
    a_lambda.push_back(state.a_lambda[static_cast<std::size_t>(j)]);
    b_lambda.push_back(state.b_lambda[static_cast<std::size_t>(j)]);
  }
  state.lambda = std::move(lambda);
  state.a_lambda = std::move(a_lambda);
  state.b_lambda = std::move(b_lambda);
  state.current_k = kept;
}

Eigen::Index determine_rank(const PosteriorState& state, double epsilon) {
  if (epsilon <= 0.0 || epsilon > 1.0) {
    throw ValidationError("determine_rank: epsilon must be in (0, 1]");
  }
  const Vector scales = state.lambda_variance_scales();
  const double cutoff = epsilon * scales.maxCoeff();
  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < scales.size(); ++j) {
    if (scales[j] >= cutoff) ++r;
  }
  return r;
}

namespace {

void check_index(const CompletionProblem& problem, const Index& index,
                 const char* who) {
  if (static_cast<Eigen::Index>(index.size()) != problem.dims()) {
    throw ValidationError(std::string(who) + ": index arity mismatch");
  }
  for (Eigen::Index l = 0; l < problem.dims(); ++l) {
    if (index[static_cast<std::size_t>(l)] < 0 ||
        index[static_cast<std::size_t>(l)] >=
            problem.n[static_cast<std::size_t>(l)]) {
      throw ValidationError(std::string(who) + ": index out of range in " +
                            mode_label(l));
    }
  }
}

}  // namespace

PredictiveT predict_entry(const CompletionProblem& problem,
                          const PosteriorState& state, const Index& index) {
  check_index(problem, index, "predict_entry");
  check_state_shapes(problem, state);
  const Eigen::Index d = problem.dims();
  const Eigen::Index k = state.current_k;

  std::vector<Vector> w(static_cast<std::size_t>(d));
  for (Eigen::Index l = 0; l < d; ++l) {
    const Matrix& g = problem.side_info[static_cast<std::size_t>(l)];
    const GaussianVecPosterior& f = state.factors[static_cast<std::size_t>(l)];
    w[static_cast<std::size_t>(l)] =
        f.mean_matrix().transpose() *
        g.row(index[static_cast<std::size_t>(l)]).transpose();
  }

  Vector wprod = Vector::Ones(k);
  for (Eigen::Index l = 0; l < d; ++l) {
    wprod = wprod.cwiseProduct(w[static_cast<std::size_t>(l)]);
  }
  const double location = wprod.sum();

  double xi_inv = state.tau.rate / state.tau.shape;
  for (Eigen::Index l = 0; l < d; ++l) {
    Vector wnl = Vector::Ones(k);
    for (Eigen::Index s = 0; s < d; ++s) {
      if (s != l) wnl = wnl.cwiseProduct(w[static_cast<std::size_t>(s)]);
    }
    const Matrix s_l = sandwich(
        state.factors[static_cast<std::size_t>(l)].covariance,
        problem.side_info[static_cast<std::size_t>(l)]
            .row(index[static_cast<std::size_t>(l)])
            .transpose(),
        k);
    xi_inv += wnl.dot(s_l * wnl);
  }

  PredictiveT t;
  t.location = location;
  t.precision = 1.0 / xi_inv;
  t.dof = 2.0 * state.tau.shape;
  return t;
}

MeanEvaluator::MeanEvaluator(const CompletionProblem& problem,
                             const PosteriorState& state) {
  check_state_shapes(problem, state);
  const Eigen::Index k = state.current_k;
  w_.reserve(static_cast<std::size_t>(problem.dims()));
  // Column i holds M_l^T g_{l,i}, formed with the same mat-vec expression
  // predict_entry uses so the two reconstructions agree bit for bit.
  for (Eigen::Index l = 0; l < problem.dims(); ++l) {
    const Matrix& g = problem.side_info[static_cast<std::size_t>(l)];
    const Matrix m =
        state.factors[static_cast<std::size_t>(l)].mean_matrix();
    Matrix wt(k, g.rows());
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      wt.col(i) = m.transpose() * g.row(i).transpose();
    }
    w_.push_back(std::move(wt));
  }
}

double MeanEvaluator::operator()(const Index& index) const {
  if (index.size() != w_.size()) {
    throw ValidationError("MeanEvaluator: index arity mismatch");
  }
  Vector prod = Vector::Ones(w_[0].rows());
  for (std::size_t l = 0; l < w_.size(); ++l) {
    if (index[l] < 0 || index[l] >= w_[l].cols()) {
      throw ValidationError("MeanEvaluator: index out of range in mode " +
                            std::to_string(l));
    }
    prod = prod.cwiseProduct(w_[l].col(index[l]));
  }
  return prod.sum();
}

Eigen::Index DenseTensor::flat_index(const Index& idx) const {
  if (idx.size() != shape.size()) {
    throw ValidationError("DenseTensor: index arity mismatch");
  }
  Eigen::Index flat = 0;
  Eigen::Index stride = 1;
  for (std::size_t l = 0; l < shape.size(); ++l) {
    if (idx[l] < 0 || idx[l] >= shape[l]) {
      throw ValidationError("DenseTensor: index out of range in mode " +
                            std::to_string(l));
    }
    flat += idx[l] * stride;
    stride *= shape[l];
  }
  return flat;
}

DenseTensor reconstruct_mean(const CompletionProblem& problem,
                             const PosteriorState& state,
                             Eigen::Index max_entries) {
  check_state_shapes(problem, state);
  Eigen::Index total = 1;
  for (Eigen::Index nl : problem.n) {
    if (total > max_entries / std::max<Eigen::Index>(nl, 1)) {
      throw ValidationError(
          "reconstruct_mean: tensor exceeds the memory cap of " +
          std::to_string(max_entries) + " entries; stream via predict_entry");
    }
    total *= nl;
  }

  const MeanEvaluator at(problem, state);
  DenseTensor out;
  out.shape = problem.n;
  out.data.resize(total);

  Index idx(static_cast<std::size_t>(problem.dims()), 0);
  for (Eigen::Index flat = 0; flat < total; ++flat) {
    out.data[flat] = at(idx);
    for (std::size_t l = 0; l < idx.size(); ++l) {
      if (++idx[l] < problem.n[l]) break;
      idx[l] = 0;
    }
  }
  return out;
}

RunResult run(const CompletionProblem& problem, const RunOptions& options,
              const SweepCallback& on_sweep) {
  options.validate();
  RunResult result;
  result.state = init_posterior(problem, options.seed);
  Engine engine(problem);
  for (std::int64_t it = 0; it < options.max_iterations; ++it) {
    SweepReport report = engine.sweep(result.state);
    if (options.prune) prune_ranks(result.state, options.prune_threshold);
    if (on_sweep) on_sweep(result.state, report);
    const double change = report.max_rel_change;
    result.reports.push_back(std::move(report));
    if (change < options.tolerance) break;
  }
  return result;
}

}  // namespace vbcp
