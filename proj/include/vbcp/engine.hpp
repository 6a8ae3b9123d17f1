#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "vbcp/model.hpp"

namespace vbcp {

/// Per-iteration convergence record.
struct SweepReport {
  std::int64_t iteration = 0;
  double residual_proxy = 0.0;  // d_0 minus the prior rate b_0
  double max_rel_change = 0.0;  // max over modes of relative mean movement
  Vector lambda_means;          // current_k entries
  double tau_mean = 0.0;
};

/// One message-passing pass over a fixed problem. Precomputes the
/// per-mode grouping of observations and owns the per-row caches
///   w_l(i) = M_l^T g_{l,i}            (k-vector)
///   S_l(i) = sandwich(A_l, g_{l,i}, k) + w_l(i) w_l(i)^T
/// which every update consumes. The caches always reflect the state most
/// recently passed in; sweep() refreshes mode l immediately after updating
/// factor l so each update sees the freshest neighbors.
class Engine {
 public:
  explicit Engine(const CompletionProblem& problem);

  /// One full pass: factors in ascending mode order, then the component
  /// precisions, then the noise precision. Increments state.iteration.
  SweepReport sweep(PosteriorState& state);

  /// Individual updates (consume the caches; call refresh_all first when
  /// driving these directly rather than through sweep()).
  void refresh_all(const PosteriorState& state);
  GaussianVecPosterior factor_update(const PosteriorState& state,
                                     Eigen::Index l) const;
  std::vector<GammaPosterior> lambda_update(const PosteriorState& state) const;
  GammaPosterior tau_update(const PosteriorState& state) const;

  const CompletionProblem& problem() const { return *problem_; }

 private:
  void refresh_mode(const PosteriorState& state, Eigen::Index l);

  const CompletionProblem* problem_;
  // rows_with_data_[l] lists the i_l values that occur in omega;
  // groups_[l][i_l] lists observation ids with that mode-l index.
  std::vector<std::vector<Eigen::Index>> rows_with_data_;
  std::vector<std::vector<std::vector<std::size_t>>> groups_;
  // caches, indexed [mode][row]
  std::vector<std::vector<Vector>> w_cache_;
  std::vector<std::vector<Matrix>> s_cache_;
};

/// Free-standing forms of the three updates (spec of one message each);
/// each builds the caches it needs from the given state.
GaussianVecPosterior update_factor(const CompletionProblem& problem,
                                   const PosteriorState& state,
                                   Eigen::Index l);
std::vector<GammaPosterior> update_lambda(const CompletionProblem& problem,
                                          const PosteriorState& state);
GammaPosterior update_tau(const CompletionProblem& problem,
                          const PosteriorState& state);

/// One full sweep on a throwaway Engine (tests / single-shot callers).
SweepReport sweep(const CompletionProblem& problem, PosteriorState& state);

/// Removes components whose precision mean c_j/d_j exceeds
/// threshold * min_i(c_i/d_i): drops block j of every factor mean, the
/// corresponding rows/columns of every covariance, and the j-th Gamma.
/// Never prunes the last component.
void prune_ranks(PosteriorState& state, double threshold);

/// r_eps = |{j : d_j/c_j >= eps * max_i d_i/c_i}| (ties included).
Eigen::Index determine_rank(const PosteriorState& state, double epsilon);

/// Student's-t predictive for one entry (observed or not):
/// location = <M_1^T g_1, ..., M_d^T g_d>, dof = 2 c0, and
/// 1/xi = d0/c0 + sum_l w_(-l)^T sandwich(A_l, g_l, k) w_(-l).
PredictiveT predict_entry(const CompletionProblem& problem,
                          const PosteriorState& state, const Index& index);

/// Streaming posterior-mean reconstruction: forms the per-mode products
/// W_l = G_l M_l once, then evaluates entries on demand as
/// sum_j prod_l W_l(i_l, j) — the same value as predict_entry(...).location.
class MeanEvaluator {
 public:
  MeanEvaluator(const CompletionProblem& problem, const PosteriorState& state);
  double operator()(const Index& index) const;

 private:
  std::vector<Matrix> w_;
};

/// Dense tensor in first-index-fastest (generalized column-major) layout.
struct DenseTensor {
  std::vector<Eigen::Index> shape;
  Vector data;

  Eigen::Index size() const { return data.size(); }
  Eigen::Index flat_index(const Index& idx) const;
  double operator()(const Index& idx) const { return data[flat_index(idx)]; }
};

inline constexpr Eigen::Index kDefaultReconstructCap = Eigen::Index(1) << 27;

/// Posterior-mean reconstruction of every entry; equals
/// predict_entry(...).location pointwise. Refuses tensors larger than
/// max_entries (stream through predict_entry instead).
DenseTensor reconstruct_mean(const CompletionProblem& problem,
                             const PosteriorState& state,
                             Eigen::Index max_entries = kDefaultReconstructCap);

using SweepCallback =
    std::function<void(const PosteriorState&, const SweepReport&)>;

struct RunResult {
  PosteriorState state;
  std::vector<SweepReport> reports;
};

/// init_posterior + sweeps until options.max_iterations or
/// max_rel_change < options.tolerance (tolerance 0 never stops early);
/// prunes after each sweep when options.prune. The callback, if any,
/// observes the state after each sweep (post-pruning).
RunResult run(const CompletionProblem& problem, const RunOptions& options,
              const SweepCallback& on_sweep = {});

}  // namespace vbcp
