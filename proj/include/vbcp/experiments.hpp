#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vbcp/engine.hpp"
#include "vbcp/io.hpp"
#include "vbcp/synth.hpp"

namespace vbcp {

inline constexpr const char* kToolVersion = "0.1.0";

/// A run counts as a success when the relative test RMSE drops below this.
inline constexpr double kSuccessRmse = 1e-6;

/// One completion run inside a study. Runs that die with a numerical (or
/// generation) error are kept, flagged, and counted as non-successes.
struct RunRecord {
  int trial = 0;
  int init = 0;
  bool success = false;
  bool failed = false;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t instance_seed = 0;
  std::uint64_t run_seed = 0;
};

struct PhaseCell {
  double axis1 = 0.0;
  double axis2 = 0.0;
  std::vector<RunRecord> runs;

  int n_success() const;
  int n_runs() const { return static_cast<int>(runs.size()); }
  double frequency() const;
};

/// Success frequencies over a 2-d grid; cell (i1, i2) is
/// cells[i1 * axis2.size() + i2].
struct PhaseGrid {
  std::string axis1_name;
  std::string axis2_name;
  std::vector<double> axis1;
  std::vector<double> axis2;
  std::vector<PhaseCell> cells;
  int trials = 0;
  int init_conditions = 0;
  std::int64_t iterations = 0;
  std::string digest;

  const PhaseCell& cell(std::size_t i1, std::size_t i2) const {
    return cells.at(i1 * axis2.size() + i2);
  }
};

/// One plotted line: per-run traces over a shared x grid plus the
/// mean / 5th / 95th-percentile aggregate band. dash_group carries the
/// init-condition pairing for plots (same color, solid vs dashed).
struct CurveSeries {
  std::string name;
  std::string x_name;
  int dash_group = 0;
  std::vector<double> x;
  std::vector<std::vector<double>> per_run;   // [run][x index]
  std::vector<RunRecord> run_info;            // parallel to per_run
  // instance seed behind per_run[run][x index]; lets every CSV row be
  // reproduced in isolation
  std::vector<std::vector<std::uint64_t>> run_instance_seeds;
  std::vector<double> mean, p5, p95;
};

/// Nearest-rank percentile: the ceil(pct/100 * N)-th smallest value.
double nearest_rank_percentile(std::vector<double> values, double pct);

/// Fills mean/p5/p95 pointwise across runs, skipping NaN entries
/// (failed runs); a point with no finite samples aggregates to NaN.
void finalize_series(CurveSeries& series);

/// Parsed and validated study configuration. Defaults are resolved at
/// parse time; `canonical` is the fully resolved config used for the
/// digest, so files and overrides that mean the same thing hash the same.
struct StudyConfig {
  std::string study;  // phase | converge | noise | rank

  // sweep
  std::string axis1_name;             // phase: "n" or "r"
  std::vector<double> axis1;          // phase only
  std::vector<double> axis2;          // phase only (|omega| grid)
  std::vector<Eigen::Index> omega;    // converge/noise/rank
  std::vector<double> snr_db;         // noise/rank x axis; converge optional
  std::vector<double> epsilon;        // rank series
  std::vector<Eigen::Index> m_sweep;  // noise series; empty = model m only

  // model
  std::vector<Eigen::Index> n;
  Eigen::Index r = 1;
  Eigen::Index k = 1;
  std::optional<std::vector<Eigen::Index>> m;  // absent = identity side info
  Hyperpriors hyper = Hyperpriors::uniform(1);

  // algo
  std::int64_t max_iterations = 100;
  double tolerance = 0.0;
  bool prune = false;
  double prune_threshold = 1e3;
  double epsilon_default = 0.05;

  // exec
  int trials = 5;
  int init_conditions = 2;
  std::uint64_t base_seed = 0;
  int parallelism = 0;  // 0 = hardware concurrency

  // out
  std::string out_dir = "out";

  Json canonical;
  std::string digest;
  std::ostream* progress = nullptr;  // optional stderr-style reporting
};

/// Applies one dotted-path override (`section.key=value`) to a JSON tree,
/// creating intermediate objects as needed. The value is parsed as JSON
/// when possible and kept as a string otherwise. Throws ValidationError
/// on a malformed spec.
void apply_config_override(Json& root, const std::string& spec);

/// Parses a study config, applying `section.key=value` overrides on top of
/// the file and defaults underneath. Collects every unknown key, missing
/// required key, and invalid value into a single ValidationError. The
/// canonical form (and hence the digest) covers everything that shapes the
/// data; out.dir and exec.parallelism are excluded.
StudyConfig parse_study_config(const Json& file, const std::string& study,
                               const std::vector<std::string>& overrides = {});

/// Success-frequency grid over (axis1 in {n, r}) x (|omega|), noiseless,
/// N_trial x N_ic runs per cell. When axis1 is "r" the rank prediction k
/// tracks r cell by cell (perfect prediction); otherwise k is model.k.
PhaseGrid run_phase_sweep(const StudyConfig& config);

/// Per-iteration relative test RMSE traces, one series per init condition
/// (dash_group = init index), x = 0..max_iterations.
std::vector<CurveSeries> run_convergence_study(const StudyConfig& config);

/// Final relative test RMSE against SNR, one series per (m, |omega|).
std::vector<CurveSeries> run_noise_study(const StudyConfig& config);

/// Determined rank r_eps against SNR, one series per (epsilon, |omega|);
/// each completion run is scored once per epsilon.
std::vector<CurveSeries> run_rank_study(const StudyConfig& config);

struct StudyResult {
  std::string study;
  std::string digest;
  Json canonical_config;
  std::uint64_t base_seed = 0;
  std::optional<PhaseGrid> grid;
  std::vector<CurveSeries> curves;
};

/// Writes the study artifacts into out_dir:
///   <study>_data.csv   per-cell frequencies (phase) or per-run traces
///   <study>_runs.csv   per-run records (phase only; audit trail)
///   <study>_band.csv   mean/p5/p95 aggregates (curve studies)
///   <study>_meta.json  config digest, seeds, RNG id, tool version
///   <study>_plot.svg   heatmap (phase) or line-with-band plot
/// Returns the manifest: {"study", "digest", "files": [paths...]}.
/// Reruns with the same digest produce byte-identical files.
Json emit_outputs(const StudyResult& result,
                  const std::filesystem::path& out_dir);

}  // namespace vbcp
