#pragma once

#include <cstdint>
#include <vector>

#include "vbcp/distributions.hpp"
#include "vbcp/linalg.hpp"
#include "vbcp/rng.hpp"

namespace vbcp {

/// Multi-index into a d-dimensional tensor, 0-based.
using Index = std::vector<Eigen::Index>;

/// One observed entry. Observations form a multiset: the sampling scheme
/// draws with replacement and duplicates contribute repeated terms to all
/// sums over the sample set.
struct Observation {
  Index index;
  double value = 0.0;
};

struct Hyperpriors {
  std::vector<double> a_lambda;  // per component, length k
  std::vector<double> b_lambda;
  double a_tau = 1e-6;
  double b_tau = 1e-6;

  static Hyperpriors uniform(Eigen::Index k, double a = 1e-6,
                             double b = 1e-6, double a0 = 1e-6,
                             double b0 = 1e-6);
};

/// Immutable definition of one completion problem: mode sizes, side
/// information, observed entries, rank prediction, hyperpriors.
struct CompletionProblem {
  std::vector<Eigen::Index> n;         // mode sizes, length d
  std::vector<Matrix> side_info;       // G_l, n_l x m_l, full column rank
  std::vector<Observation> observations;
  Eigen::Index k = 1;                  // rank prediction
  Hyperpriors hyper;

  Eigen::Index dims() const { return static_cast<Eigen::Index>(n.size()); }
  Eigen::Index mode_dim(Eigen::Index l) const {
    return side_info[static_cast<std::size_t>(l)].cols();
  }
  std::size_t sample_count() const { return observations.size(); }

  /// True when every G_l is an identity matrix (no side information).
  bool trivial_side_info() const;
};

/// Validates and assembles a problem: side-information matrices must have
/// full column rank (rank-revealing QR, pivots below 1e-10 of the largest
/// count as zero) and every observed multi-index must be in range.
CompletionProblem new_problem(std::vector<Matrix> side_info,
                              std::vector<Observation> observations,
                              Eigen::Index k, Hyperpriors hyper);

/// Convenience: identity side information of the given mode sizes.
std::vector<Matrix> identity_side_info(const std::vector<Eigen::Index>& n);

/// Replaces each G_l by an orthonormal basis of its column span (thin QR).
/// Optional preprocessing; the model itself only needs full column rank.
CompletionProblem orthonormalize_side_info(const CompletionProblem& problem);

/// The full variational posterior: one Gaussian per factor, one Gamma per
/// precision component, one Gamma for the noise precision. Component
/// hyperpriors are carried alongside so that pruning keeps them aligned.
struct PosteriorState {
  std::vector<GaussianVecPosterior> factors;  // length d
  std::vector<GammaPosterior> lambda;         // length current_k
  GammaPosterior tau;
  Eigen::Index current_k = 0;
  std::vector<double> a_lambda;  // priors for surviving components
  std::vector<double> b_lambda;
  std::int64_t iteration = 0;

  Eigen::Index dims() const {
    return static_cast<Eigen::Index>(factors.size());
  }
  Vector lambda_means() const;
  Vector lambda_variance_scales() const;  // d_j / c_j
};

struct RunOptions {
  std::int64_t max_iterations = 100;
  double tolerance = 0.0;  // 0 disables the relative-change stop
  bool prune = false;
  double prune_threshold = 1e3;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Initial posterior: all Gamma shapes and rates at 1e-6 (unit means),
/// factor means i.i.d. standard normal from the seeded generator (drawn in
/// mode order, column-stacked order within a mode), covariances identity.
/// Deterministic: a pure function of (problem shape, seed).
PosteriorState init_posterior(const CompletionProblem& problem,
                              std::uint64_t seed);

}  // namespace vbcp
