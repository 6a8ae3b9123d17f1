#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "vbcp/model.hpp"

namespace vbcp {

/// Recipe for one random low-rank instance. d is n.size(); when m is
/// absent the problem gets identity side information and the truth
/// factors have n_l rows (the no-side-information variant).
struct InstanceSpec {
  std::vector<Eigen::Index> n;
  Eigen::Index r = 1;
  std::optional<std::vector<Eigen::Index>> m;
  Eigen::Index k = 1;
  std::size_t omega_size = 1;
  std::optional<double> snr_db;  // absent => noiseless
  std::uint64_t seed = 0;
  Hyperpriors hyper = Hyperpriors::uniform(1);  // re-broadcast to k
};

/// A generated problem together with everything needed to score a
/// reconstruction: exact factors, a same-size independent test sample,
/// and the noise actually applied.
struct SyntheticInstance {
  CompletionProblem problem;
  std::vector<Matrix> truth_factors;    // m_l x r (or n_l x r)
  std::vector<Matrix> truth_products;   // G_l * U_l, n_l x r
  std::vector<Observation> test_set;    // clean values, |test_set| = |omega|
  std::optional<double> snr_db;
  double noise_sigma = 0.0;
  double overlap_fraction = 0.0;  // test draws whose index also lies in omega
  Eigen::Index r = 0;
  std::uint64_t seed = 0;

  /// Exact tensor entry, evaluated on demand from the per-mode products —
  /// the full tensor is never materialized.
  double ground_truth(const Index& index) const;
};

/// Draws factors, side information, the observation sample (uniform with
/// replacement, duplicates kept), an independent test sample of the same
/// size, and noise scaled so 10*log10(Var(clean at omega)/sigma^2) equals
/// snr_db. Pure function of its argument.
SyntheticInstance gen_instance(const InstanceSpec& spec);

/// ||X - Xhat||_F / ||X||_F over the test sample (with multiplicity),
/// clean values against reconstruction_at. Throws on zero test norm.
double relative_test_rmse(
    const SyntheticInstance& instance,
    const std::function<double(const Index&)>& reconstruction_at);

/// Problem file plus a "truth" section (factors, r, seed, snr_db, sigma,
/// overlap fraction) so the instance can be audited and regenerated.
void write_instance(const std::filesystem::path& path,
                    const SyntheticInstance& instance);

}  // namespace vbcp
