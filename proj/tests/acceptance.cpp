// Acceptance gate: ten end-to-end criteria covering kernel correctness,
// matrix/tensor equivalence, Monte Carlo expectation checks, the Student's-t
// layer, recovery and rank experiments, timing behavior, and byte-level
// reproducibility of the CLI studies. Each criterion prints exactly one
// "C<n> <name>: PASS/FAIL" line; the process exits nonzero if any selected
// criterion fails. Run one criterion with --criterion <n> (the ctest
// registration) or everything with no arguments.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vbcp/distributions.hpp"
#include "vbcp/engine.hpp"
#include "vbcp/errors.hpp"
#include "vbcp/experiments.hpp"
#include "vbcp/io.hpp"
#include "vbcp/linalg.hpp"
#include "vbcp/matrix_reference.hpp"
#include "vbcp/model.hpp"
#include "vbcp/rng.hpp"
#include "vbcp/synth.hpp"

#include "oracles.hpp"

#ifndef VBCP_CLI_PATH
#error "VBCP_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

using vbcp::CompletionProblem;
using vbcp::GammaPosterior;
using vbcp::GaussianVecPosterior;
using vbcp::Hyperpriors;
using vbcp::Index;
using vbcp::Matrix;
using vbcp::Observation;
using vbcp::PosteriorState;
using vbcp::StudentT;
using vbcp::Vector;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// shared helpers (mirroring the unit-test constructions)

CompletionProblem random_problem(vbcp::Rng& rng,
                                 const std::vector<Eigen::Index>& n,
                                 const std::vector<Eigen::Index>& m,
                                 Eigen::Index k, std::size_t omega) {
  std::vector<Matrix> side;
  for (std::size_t l = 0; l < n.size(); ++l) {
    side.push_back(oracle::random_matrix(rng, n[l], m[l]));
  }
  std::vector<Observation> obs;
  for (std::size_t t = 0; t < omega; ++t) {
    Index idx;
    for (Eigen::Index nl : n) {
      idx.push_back(static_cast<Eigen::Index>(
          rng.below(static_cast<std::uint64_t>(nl))));
    }
    obs.push_back({idx, rng.normal()});
  }
  return vbcp::new_problem(side, obs, k, Hyperpriors::uniform(k));
}

double rel_gap(const Matrix& got, const Matrix& want) {
  return (got - want).cwiseAbs().maxCoeff() /
         (1.0 + want.cwiseAbs().maxCoeff());
}

double rel_gap(const Vector& got, const Vector& want) {
  return (got - want).cwiseAbs().maxCoeff() /
         (1.0 + want.cwiseAbs().maxCoeff());
}

double rel_gap(double got, double want) {
  return std::abs(got - want) / (1.0 + std::abs(want));
}

// ---------------------------------------------------------------------------
// C1: structured kernels against dense brute-force oracles

Outcome criterion_kernel_oracles() {
  vbcp::Rng rng(1001);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(5));

    const Matrix a = oracle::random_symmetric(rng, m * k);
    const Vector g = oracle::random_vector(rng, m);
    worst = std::max(worst, (vbcp::sandwich(a, g, k) -
                             oracle::sandwich_dense(a, g, k))
                                .cwiseAbs()
                                .maxCoeff());

    const Vector w = oracle::random_vector(rng, k);
    worst = std::max(worst, (vbcp::kron_vec(w, g) -
                             oracle::kron_vec_dense(w, g))
                                .cwiseAbs()
                                .maxCoeff());

    const Matrix a2 = oracle::random_symmetric(rng, m * k);
    const Eigen::Index j = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(k)));
    worst = std::max(worst, std::abs(vbcp::block_diag_trace(a2, j, m) -
                                     oracle::block_trace_loop(a2, j, m)));

    const std::size_t d = 2 + rng.below(3);
    std::vector<Matrix> mats;
    for (std::size_t l = 0; l < d; ++l) {
      mats.push_back(oracle::random_matrix(rng, m, k));
    }
    worst = std::max(
        worst,
        std::abs(vbcp::multilinear_product(
                     std::span<const Matrix>(mats.data(), mats.size())) -
                 oracle::multilinear_loop(mats)));
  }
  return {worst <= 1e-12,
          fmt("200 draws per kernel, max abs error %.2e (tol 1e-12)", worst)};
}

// ---------------------------------------------------------------------------
// C2: the d-dimensional engine against the dense matrix-case transcription

Outcome criterion_matrix_tensor_equivalence() {
  vbcp::Rng rng(1002);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(3));
    const Eigen::Index n1 = 4 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index n2 = 4 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index m1 = 1 + static_cast<Eigen::Index>(rng.below(4));
    const Eigen::Index m2 = 1 + static_cast<Eigen::Index>(rng.below(4));
    const std::size_t omega = 5 + rng.below(16);

    CompletionProblem p = random_problem(rng, {n1, n2}, {m1, m2}, k, omega);
    PosteriorState st = vbcp::init_posterior(p, 300 + rep);
    vbcp::MatrixState ms = vbcp::matrix_state_from_posterior(st);

    for (int it = 0; it < 5; ++it) {
      vbcp::sweep(p, st);
      ms = vbcp::matrix_sweep(p, ms);
      worst = std::max(worst, rel_gap(ms.u_posterior.mean,
                                      st.factors[0].mean));
      worst = std::max(worst, rel_gap(ms.u_posterior.covariance,
                                      st.factors[0].covariance));
      worst = std::max(worst, rel_gap(ms.v_posterior.mean,
                                      st.factors[1].mean));
      worst = std::max(worst, rel_gap(ms.v_posterior.covariance,
                                      st.factors[1].covariance));
      for (std::size_t c = 0; c < ms.lambda.size(); ++c) {
        worst = std::max(worst, rel_gap(ms.lambda[c].shape,
                                        st.lambda[c].shape));
        worst = std::max(worst, rel_gap(ms.lambda[c].rate,
                                        st.lambda[c].rate));
      }
      worst = std::max(worst, rel_gap(ms.tau.shape, st.tau.shape));
      worst = std::max(worst, rel_gap(ms.tau.rate, st.tau.rate));
    }

    // the noise-rate identity: the four-term expansion of E||y - <u, v>||^2
    // (with the explicit cross trace) equals the engine's Hadamard-sum form
    double rate = p.hyper.b_tau;
    for (const auto& ob : p.observations) {
      const Vector g = p.side_info[0].row(ob.index[0]).transpose();
      const Vector h = p.side_info[1].row(ob.index[1]).transpose();
      const Vector wu = st.factors[0].mean_matrix().transpose() * g;
      const Vector wv = st.factors[1].mean_matrix().transpose() * h;
      const Matrix su = oracle::sandwich_dense(st.factors[0].covariance, g, k);
      const Matrix sv = oracle::sandwich_dense(st.factors[1].covariance, h, k);
      const double fit = wu.dot(wv);
      rate += 0.5 * (ob.value * ob.value - 2.0 * ob.value * fit + fit * fit +
                     wu.dot(sv * wu) + wv.dot(su * wv) + (su * sv).trace());
    }
    worst = std::max(worst, rel_gap(vbcp::update_tau(p, st).rate, rate));
  }
  return {worst <= 1e-10,
          fmt("50 problems x 5 sweeps, max relative gap %.2e (tol 1e-10)",
              worst)};
}

// ---------------------------------------------------------------------------
// C3: analytic gamma rates against Monte Carlo under the posterior

Outcome criterion_expectation_mc() {
  double worst_sigma = 0.0;  // worst |analytic - mc| in units of the SE
  for (int rep = 0; rep < 10; ++rep) {
    vbcp::Rng rng(5000 + static_cast<std::uint64_t>(rep));
    const bool three_mode = rep % 2 == 1;
    const std::vector<Eigen::Index> n =
        three_mode ? std::vector<Eigen::Index>{3, 2, 3}
                   : std::vector<Eigen::Index>{3, 4};
    const std::vector<Eigen::Index> m =
        three_mode ? std::vector<Eigen::Index>{2, 1, 2}
                   : std::vector<Eigen::Index>{2, 2};
    const Eigen::Index k = 1 + rep % 2;
    const std::size_t omega = 5 + static_cast<std::size_t>(rep % 4);

    CompletionProblem p = random_problem(rng, n, m, k, omega);
    PosteriorState st = vbcp::init_posterior(p, 320 + rep);
    vbcp::sweep(p, st);
    vbcp::sweep(p, st);

    const auto lam = vbcp::update_lambda(p, st);
    const GammaPosterior tau = vbcp::update_tau(p, st);

    const int batches = 50;
    const int per_batch = 2000;  // 1e5 draws in total per state
    std::vector<std::vector<double>> lam_stats(
        static_cast<std::size_t>(k));
    std::vector<double> tau_stats;
    vbcp::Rng draw_rng(4242 + static_cast<std::uint64_t>(rep));
    for (int bi = 0; bi < batches; ++bi) {
      std::vector<double> lam_acc(static_cast<std::size_t>(k), 0.0);
      double tau_acc = 0.0;
      for (int t = 0; t < per_batch; ++t) {
        std::vector<Matrix> u;
        for (const auto& f : st.factors) {
          const Vector v =
              oracle::draw_gaussian(draw_rng, f.mean, f.covariance);
          u.push_back(Eigen::Map<const Matrix>(v.data(), f.m, f.k));
        }
        for (Eigen::Index j = 0; j < k; ++j) {
          double s = 0.0;
          for (const auto& mat : u) s += mat.col(j).squaredNorm();
          lam_acc[static_cast<std::size_t>(j)] += s;
        }
        double resid = 0.0;
        for (const auto& ob : p.observations) {
          double yhat = 0.0;
          for (Eigen::Index j = 0; j < k; ++j) {
            double term = 1.0;
            for (std::size_t l = 0; l < u.size(); ++l) {
              term *= p.side_info[l].row(ob.index[l]).dot(u[l].col(j));
            }
            yhat += term;
          }
          resid += (ob.value - yhat) * (ob.value - yhat);
        }
        tau_acc += resid;
      }
      for (Eigen::Index j = 0; j < k; ++j) {
        lam_stats[static_cast<std::size_t>(j)].push_back(
            lam_acc[static_cast<std::size_t>(j)] / per_batch);
      }
      tau_stats.push_back(tau_acc / per_batch);
    }

    for (Eigen::Index j = 0; j < k; ++j) {
      const auto mv = oracle::mean_var(lam_stats[static_cast<std::size_t>(j)]);
      const double want =
          2.0 * (lam[static_cast<std::size_t>(j)].rate -
                 st.b_lambda[static_cast<std::size_t>(j)]);
      worst_sigma = std::max(worst_sigma,
                             std::abs(mv.mean - want) / mv.sem());
    }
    const auto mv_tau = oracle::mean_var(tau_stats);
    const double want_tau = 2.0 * (tau.rate - p.hyper.b_tau);
    worst_sigma = std::max(worst_sigma,
                           std::abs(mv_tau.mean - want_tau) / mv_tau.sem());
  }
  return {worst_sigma <= 3.0,
          fmt("10 states x 1e5 draws, worst deviation %.2f standard errors "
              "(limit 3)",
              worst_sigma)};
}

// ---------------------------------------------------------------------------
// C4: the Student's-t marginal against quadrature and sampling

Outcome criterion_student_t_layer() {
  vbcp::Rng rng(404);
  double worst_pdf = 0.0;
  for (int setting = 0; setting < 20; ++setting) {
    const double a = 0.5 + 9.5 * rng.uniform();
    const double b = 0.5 + 9.5 * rng.uniform();
    const double mu = 4.0 * rng.normal();
    const StudentT t = vbcp::marginalize_gaussian_gamma(mu, a, b);
    const double spread = std::sqrt(b / a);
    for (int i = 0; i < 20; ++i) {
      const double x = mu + spread * (static_cast<double>(i) - 9.5) / 2.0;
      worst_pdf = std::max(
          worst_pdf, std::abs(vbcp::student_t_pdf(t, x) -
                              oracle::gauss_gamma_density_quadrature(
                                  x, mu, a, b)));
    }
  }
  if (worst_pdf > 1e-8) {
    return {false, fmt("density vs quadrature max error %.2e (tol 1e-8)",
                       worst_pdf)};
  }

  // variance formula against direct sampling of the scale mixture
  double worst_sigma = 0.0;
  const std::vector<std::array<double, 3>> settings = {
      {0.0, 5.0, 5.0}, {0.0, 2.0, 2.0}, {2.5, 4.0, 2.0}};
  std::uint64_t seed = 9091;
  for (const auto& [mu, a, b] : settings) {
    const StudentT t = vbcp::marginalize_gaussian_gamma(mu, a, b);
    const double want = vbcp::student_t_moments(t).second;
    vbcp::Rng draw(seed++);
    std::vector<double> batch_vars;
    for (int bi = 0; bi < 100; ++bi) {
      std::vector<double> xs(10000);
      for (double& x : xs) {
        const double beta = oracle::draw_gamma(draw, a, b);
        x = mu + draw.normal() / std::sqrt(beta);
      }
      batch_vars.push_back(oracle::mean_var(xs).var);
    }
    const auto agg = oracle::mean_var(batch_vars);
    worst_sigma = std::max(worst_sigma,
                           std::abs(agg.mean - want) / agg.sem());
  }
  return {worst_sigma <= 3.0,
          fmt("density max error %.2e; variance worst deviation %.2f "
              "standard errors (limit 3)",
              worst_pdf, worst_sigma)};
}

// ---------------------------------------------------------------------------
// C5: noiseless recovery at desk scale

Outcome criterion_noiseless_recovery() {
  // |omega| = 2000 was fixed by bisection: at this size recovery succeeds
  // with margin (the transition sits near |omega| = 500-1000 for this shape).
  int successes = 0;
  double worst_rmse = 0.0;
  for (int seed = 0; seed < 5; ++seed) {
    vbcp::InstanceSpec spec;
    spec.n = {40, 40, 40};
    spec.r = 2;
    spec.k = 2;
    spec.m = std::vector<Eigen::Index>{5, 5, 5};
    spec.omega_size = 2000;
    spec.seed = vbcp::Rng::derive(7, {static_cast<std::uint64_t>(seed)});
    const vbcp::SyntheticInstance inst = vbcp::gen_instance(spec);

    vbcp::RunOptions options;
    options.max_iterations = 150;
    options.tolerance = 1e-10;
    options.seed = vbcp::Rng::derive(spec.seed, {1});
    const vbcp::RunResult result = vbcp::run(inst.problem, options);

    const double rmse =
        vbcp::relative_test_rmse(inst, [&](const Index& idx) {
          return vbcp::predict_entry(inst.problem, result.state, idx)
              .location;
        });
    worst_rmse = std::max(worst_rmse, rmse);
    if (rmse < 1e-6) ++successes;
  }
  return {successes >= 4,
          fmt("%d/5 seeds below 1e-6 relative test error (needed 4), worst "
              "%.2e",
              successes, worst_rmse)};
}

// ---------------------------------------------------------------------------
// C6: the recovery threshold in |omega| moves by at most one grid step
//     when the tensor side length doubles

Outcome criterion_phase_horizontality() {
  vbcp::Json cfg{
      {"sweep",
       {{"axis1", {{"name", "n"}, {"values", {30.0, 60.0}}}},
        {"axis2",
         {{"name", "omega"},
          {"values", {250.0, 500.0, 1000.0, 2000.0, 4000.0}}}}}},
      {"model", {{"d", 3}, {"r", 2}, {"k", 2}, {"m", {5, 5, 5}}}},
      {"algo", {{"max_iterations", 150}, {"tolerance", 1e-10}}},
      {"exec",
       {{"trials", 5}, {"init_conditions", 2}, {"base_seed", 7},
        {"parallelism", 1}}},
  };
  const vbcp::PhaseGrid grid =
      vbcp::run_phase_sweep(vbcp::parse_study_config(cfg, "phase"));

  std::vector<int> threshold_index;
  for (std::size_t i1 = 0; i1 < grid.axis1.size(); ++i1) {
    int found = -1;
    for (std::size_t i2 = 0; i2 < grid.axis2.size(); ++i2) {
      if (grid.cell(i1, i2).frequency() >= 0.8) {
        found = static_cast<int>(i2);
        break;
      }
    }
    if (found < 0) {
      return {false, fmt("n=%g never reaches success frequency 0.8",
                         grid.axis1[i1])};
    }
    threshold_index.push_back(found);
  }
  const int step_gap = std::abs(threshold_index[0] - threshold_index[1]);
  return {step_gap <= 1,
          fmt("threshold |omega|: %g at n=30, %g at n=60 (%d grid step%s "
              "apart, allowed 1)",
              grid.axis2[static_cast<std::size_t>(threshold_index[0])],
              grid.axis2[static_cast<std::size_t>(threshold_index[1])],
              step_gap, step_gap == 1 ? "" : "s")};
}

// ---------------------------------------------------------------------------
// C7: automatic rank determination under noise

Outcome criterion_rank_determination() {
  int hits = 0;
  for (int seed = 0; seed < 10; ++seed) {
    vbcp::InstanceSpec spec;
    spec.n = {30, 30, 30};
    spec.r = 2;
    spec.k = 6;
    spec.m = std::vector<Eigen::Index>{5, 5, 5};
    spec.omega_size = 3000;
    spec.snr_db = 20.0;
    spec.seed = vbcp::Rng::derive(7, {static_cast<std::uint64_t>(seed)});
    const vbcp::SyntheticInstance inst = vbcp::gen_instance(spec);

    vbcp::RunOptions options;
    options.max_iterations = 1000;  // surplus components need time to decay
    options.tolerance = 1e-10;
    options.seed = vbcp::Rng::derive(spec.seed, {1});
    const vbcp::RunResult result = vbcp::run(inst.problem, options);
    if (vbcp::determine_rank(result.state, 0.05) == 2) ++hits;
  }
  return {hits >= 8, fmt("rank 2 recovered in %d/10 seeds (needed 8)", hits)};
}

// ---------------------------------------------------------------------------
// C8: reconstruction error scales with the noise floor and degrades
//     with unnecessary side-information columns

Outcome criterion_noise_proportionality() {
  vbcp::Json cfg{
      {"sweep",
       {{"omega", {3000.0}}, {"snr_db", {-6.0, 0.0}}, {"m", {5.0, 15.0}}}},
      {"model", {{"n", {20, 20, 20}}, {"r", 2}, {"k", 2}}},
      {"algo", {{"max_iterations", 80}, {"tolerance", 1e-8}}},
      {"exec",
       {{"trials", 10}, {"init_conditions", 1}, {"base_seed", 7},
        {"parallelism", 1}}},
  };
  const auto curves =
      vbcp::run_noise_study(vbcp::parse_study_config(cfg, "noise"));

  const vbcp::CurveSeries* m5 = nullptr;
  const vbcp::CurveSeries* m15 = nullptr;
  for (const auto& s : curves) {
    if (s.name == "m=5") m5 = &s;
    if (s.name == "m=15") m15 = &s;
  }
  if (m5 == nullptr || m15 == nullptr) {
    return {false, "expected series m=5 and m=15 in the study output"};
  }

  // x = {-6 dB, 0 dB}; the mean curve ratio should sit near the 2x noise
  // amplitude ratio, and fewer side-information columns should fit better
  const double ratio5 = m5->mean[0] / m5->mean[1];
  const double ratio15 = m15->mean[0] / m15->mean[1];
  const bool ratios_ok = ratio5 >= 1.3 && ratio5 <= 3.1 && ratio15 >= 1.3 &&
                         ratio15 <= 3.1;
  const bool order_ok =
      m5->mean[0] <= m15->mean[0] && m5->mean[1] <= m15->mean[1];
  return {ratios_ok && order_ok,
          fmt("-6dB/0dB error ratios %.2f (m=5) and %.2f (m=15) in "
              "[1.3, 3.1]: %s; m=5 curve at-or-below m=15: %s",
              ratio5, ratio15, ratios_ok ? "yes" : "no",
              order_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// C9: per-sweep cost tracks |omega| once the observation term dominates

Outcome criterion_complexity_scaling() {
  constexpr std::size_t kOmega = 80000;  // |omega| m^2 k^2 >> m^3 k^3 here
  constexpr int kSweeps = 10;

  const auto make = [](std::size_t omega) {
    vbcp::InstanceSpec spec;
    spec.n = {40, 40, 40};
    spec.r = 2;
    spec.k = 2;
    spec.m = std::vector<Eigen::Index>{5, 5, 5};
    spec.omega_size = omega;
    spec.snr_db = 10.0;
    spec.seed = 99;
    return vbcp::gen_instance(spec);
  };
  const vbcp::SyntheticInstance small = make(kOmega);
  const vbcp::SyntheticInstance big = make(2 * kOmega);

  const auto block_seconds = [](const CompletionProblem& problem,
                                PosteriorState& state) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < kSweeps; ++i) vbcp::sweep(problem, state);
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  };

  std::vector<double> ratios;
  for (int rep = 0; rep < 5; ++rep) {
    PosteriorState s1 = vbcp::init_posterior(small.problem, 17);
    PosteriorState s2 = vbcp::init_posterior(big.problem, 17);
    const double t1 = block_seconds(small.problem, s1);
    const double t2 = block_seconds(big.problem, s2);
    ratios.push_back(t2 / t1);
  }
  std::sort(ratios.begin(), ratios.end());
  const double median = ratios[2];
  return {median >= 1.5 && median <= 3.0,
          fmt("median per-sweep time ratio %.2f at doubled |omega| "
              "(window [1.5, 3.0])",
              median)};
}

// ---------------------------------------------------------------------------
// C10: CLI study reruns are byte-identical

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(VBCP_CLI_PATH) + " " + args + " > /dev/null 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome criterion_determinism() {
  const fs::path dir =
      fs::temp_directory_path() / ("vbcp_acceptance_" +
                                   std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);

  const std::vector<std::pair<std::string, vbcp::Json>> studies = {
      {"phase",
       {{"sweep",
         {{"axis1", {{"name", "n"}, {"values", {5.0}}}},
          {"axis2", {{"name", "omega"}, {"values", {12.0}}}}}},
        {"model", {{"d", 2}, {"r", 1}, {"k", 1}}},
        {"algo", {{"max_iterations", 6}}},
        {"exec",
         {{"trials", 2}, {"init_conditions", 1}, {"base_seed", 1}}}}},
      {"converge",
       {{"sweep", {{"omega", {30.0}}}},
        {"model", {{"n", {6, 6}}, {"r", 1}, {"k", 1}, {"m", {2, 2}}}},
        {"algo", {{"max_iterations", 12}}},
        {"exec",
         {{"trials", 2}, {"init_conditions", 2}, {"base_seed", 3}}}}},
      {"noise",
       {{"sweep", {{"omega", {60.0}}, {"snr_db", {10.0, 20.0}}}},
        {"model", {{"n", {8, 8}}, {"r", 1}, {"k", 1}, {"m", {2, 2}}}},
        {"algo", {{"max_iterations", 30}}},
        {"exec",
         {{"trials", 2}, {"init_conditions", 1}, {"base_seed", 6}}}}},
      {"rank",
       {{"sweep",
         {{"omega", {120.0}}, {"snr_db", {25.0}}, {"epsilon", {0.05}}}},
        {"model", {{"n", {8, 8}}, {"r", 1}, {"k", 2}, {"m", {2, 2}}}},
        {"algo", {{"max_iterations", 40}}},
        {"exec",
         {{"trials", 2}, {"init_conditions", 1}, {"base_seed", 2}}}}},
  };

  int files_compared = 0;
  for (const auto& [study, config] : studies) {
    const fs::path cfg = dir / (study + ".json");
    vbcp::write_json_file(cfg, config);
    const fs::path out_a = dir / (study + "_a");
    const fs::path out_b = dir / (study + "_b");
    for (const fs::path& out : {out_a, out_b}) {
      const int code = run_cli(study + " --config " + cfg.string() +
                               " --out " + out.string() + " --quiet");
      if (code != 0) {
        return {false, fmt("%s study exited with code %d", study.c_str(),
                           code)};
      }
    }
    for (const auto& entry : fs::directory_iterator(out_a)) {
      const fs::path name = entry.path().filename();
      if (!fs::exists(out_b / name)) {
        return {false, fmt("%s rerun did not produce %s", study.c_str(),
                           name.string().c_str())};
      }
      if (slurp(entry.path()) != slurp(out_b / name)) {
        return {false, fmt("%s rerun changed %s", study.c_str(),
                           name.string().c_str())};
      }
      ++files_compared;
    }
  }
  fs::remove_all(dir);
  return {true, fmt("4 studies rerun, %d files byte-identical",
                    files_compared)};
}

// ---------------------------------------------------------------------------

struct Criterion {
  const char* name;
  Outcome (*fn)();
};

constexpr Criterion kCriteria[] = {
    {"kernel_oracles", criterion_kernel_oracles},
    {"matrix_tensor_equivalence", criterion_matrix_tensor_equivalence},
    {"expectation_mc", criterion_expectation_mc},
    {"student_t_layer", criterion_student_t_layer},
    {"noiseless_recovery", criterion_noiseless_recovery},
    {"phase_horizontality", criterion_phase_horizontality},
    {"rank_determination", criterion_rank_determination},
    {"noise_proportionality", criterion_noise_proportionality},
    {"complexity_scaling", criterion_complexity_scaling},
    {"determinism", criterion_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  int selected = 0;  // 0 = run everything
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected = std::atoi(argv[++i]);
    } else if (arg.rfind("--criterion=", 0) == 0) {
      selected = std::atoi(arg.c_str() + 12);
    } else {
      std::fprintf(stderr, "usage: %s [--criterion <1..10>]\n", argv[0]);
      return 2;
    }
  }
  if (selected < 0 || selected > 10) {
    std::fprintf(stderr, "criterion number must be in 1..10\n");
    return 2;
  }

  bool all_ok = true;
  for (int num = 1; num <= 10; ++num) {
    if (selected != 0 && num != selected) continue;
    const Criterion& c = kCriteria[num - 1];
    Outcome outcome;
    try {
      outcome = c.fn();
    } catch (const std::exception& e) {
      outcome = {false, fmt("exception: %s", e.what())};
    }
    std::printf("C%d %s: %s (%s)\n", num, c.name,
                outcome.ok ? "PASS" : "FAIL", outcome.detail.c_str());
    std::fflush(stdout);
    all_ok = all_ok && outcome.ok;
  }
  return all_ok ? 0 : 1;
}
