#include <CLI11.hpp>

#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "vbcp/distributions.hpp"
#include "vbcp/engine.hpp"
#include "vbcp/errors.hpp"
#include "vbcp/experiments.hpp"
#include "vbcp/io.hpp"

namespace {

using vbcp::Json;

struct CommonArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::vector<std::string> overrides;
  bool quiet = false;
  CLI::Option* out_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "input JSON file")->required();
  args.out_opt = cmd->add_option("--out", args.out, "output directory");
  args.seed_opt = cmd->add_option(
      "--seed", args.seed,
      "RNG seed (studies: replaces exec.base_seed; otherwise the init seed)");
  cmd->add_option("--override", args.overrides,
                  "section.key=value applied on top of the file (repeatable)");
  cmd->add_flag("--quiet", args.quiet, "suppress progress output on stderr");
}

std::filesystem::path resolve_out_dir(const CommonArgs& args,
                                      const std::string& fallback) {
  return (args.out_opt && args.out_opt->count() > 0) ? args.out : fallback;
}

void make_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw vbcp::IoError("cannot create output directory " + dir.string() +
                        ": " + ec.message());
  }
}

/// Splits overrides between the run options ("algo.*") and the problem
/// document itself (everything else, checked by problem_from_json).
void apply_problem_overrides(const CommonArgs& args, Json& doc, Json& extra) {
  for (const std::string& o : args.overrides) {
    if (o.rfind("algo.", 0) == 0) {
      vbcp::apply_config_override(extra, o);
    } else {
      vbcp::apply_config_override(doc, o);
    }
  }
}

vbcp::RunOptions options_from_algo(const Json& algo) {
  vbcp::RunOptions options;
  std::vector<std::string> problems;
  for (auto it = algo.begin(); it != algo.end(); ++it) {
    const std::string& key = it.key();
    if (key != "max_iterations" && key != "tolerance" && key != "prune" &&
        key != "prune_threshold") {
      problems.push_back("unknown key 'algo." + key + "'");
    }
  }
  if (algo.contains("max_iterations")) {
    if (!algo["max_iterations"].is_number_integer()) {
      problems.push_back("'algo.max_iterations' must be an integer");
    } else {
      options.max_iterations = algo["max_iterations"].get<std::int64_t>();
    }
  }
  if (algo.contains("tolerance")) {
    if (!algo["tolerance"].is_number()) {
      problems.push_back("'algo.tolerance' must be a number");
    } else {
      options.tolerance = algo["tolerance"].get<double>();
    }
  }
  if (algo.contains("prune")) {
    if (!algo["prune"].is_boolean()) {
      problems.push_back("'algo.prune' must be true or false");
    } else {
      options.prune = algo["prune"].get<bool>();
    }
  }
  if (algo.contains("prune_threshold")) {
    if (!algo["prune_threshold"].is_number()) {
      problems.push_back("'algo.prune_threshold' must be a number");
    } else {
      options.prune_threshold = algo["prune_threshold"].get<double>();
    }
  }
  if (!problems.empty()) {
    std::string joined = "run options invalid:";
    for (const std::string& p : problems) joined += "\n  - " + p;
    throw vbcp::ValidationError(joined);
  }
  options.validate();
  return options;
}

int cmd_complete(const CommonArgs& args, std::int64_t snapshot_every,
                 bool reconstruct) {
  Json doc = vbcp::read_json_file(args.config);
  Json extra = Json::object();
  apply_problem_overrides(args, doc, extra);
  const vbcp::CompletionProblem problem = vbcp::problem_from_json(doc);
  vbcp::RunOptions options =
      options_from_algo(extra.value("algo", Json::object()));
  options.seed = args.seed;

  const std::filesystem::path out_dir = resolve_out_dir(args, "out");
  make_out_dir(out_dir);

  const Eigen::Index k = problem.k;
  std::vector<std::string> header = {"iteration", "residual_proxy",
                                     "max_rel_change", "tau_mean"};
  for (Eigen::Index j = 0; j < k; ++j) {
    header.push_back("lambda_mean_" + std::to_string(j));
  }
  const auto trace_path = out_dir / "trace.csv";
  vbcp::CsvWriter trace(trace_path, header);
  std::vector<std::string> files = {trace_path.string()};

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::int64_t rows = 0;
  const vbcp::RunResult result = vbcp::run(
      problem, options,
      [&](const vbcp::PosteriorState& state, const vbcp::SweepReport& rep) {
        auto row = trace.row();
        row << rep.iteration << rep.residual_proxy << rep.max_rel_change
            << rep.tau_mean;
        // pruning can shrink the live component count; absent columns
        // report NaN so the width stays fixed
        for (Eigen::Index j = 0; j < k; ++j) {
          row << (j < rep.lambda_means.size() ? rep.lambda_means[j] : nan);
        }
        ++rows;
        if (snapshot_every > 0 && rep.iteration % snapshot_every == 0) {
          char name[64];
          std::snprintf(name, sizeof(name), "snapshot_%06lld.json",
                        static_cast<long long>(rep.iteration));
          const auto p = out_dir / name;
          vbcp::write_json_file(p, vbcp::snapshot_to_json(state));
          files.push_back(p.string());
        }
        if (!args.quiet) {
          std::cerr << "iteration " << rep.iteration << "  max_rel_change "
                    << rep.max_rel_change << "  tau_mean " << rep.tau_mean
                    << "\n";
        }
      });

  const auto snapshot_path = out_dir / "snapshot.json";
  vbcp::write_json_file(snapshot_path, vbcp::snapshot_to_json(result.state));
  files.push_back(snapshot_path.string());

  if (reconstruct) {
    const vbcp::DenseTensor tensor =
        vbcp::reconstruct_mean(problem, result.state);
    Json shape = Json::array();
    for (Eigen::Index nl : tensor.shape) shape.push_back(nl);
    Json data = Json::array();
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      data.push_back(tensor.data[i]);
    }
    const auto p = out_dir / "reconstruction.json";
    vbcp::write_json_file(
        p, Json{{"shape", shape}, {"layout", "first-index-fastest"},
                {"data", data}});
    files.push_back(p.string());
  }

  Json lambda_means = Json::array();
  const vbcp::Vector lm = result.state.lambda_means();
  for (Eigen::Index j = 0; j < lm.size(); ++j) lambda_means.push_back(lm[j]);
  const Json manifest = {{"command", "complete"},
                         {"iterations", result.state.iteration},
                         {"trace_rows", rows},
                         {"current_k", result.state.current_k},
                         {"tau_mean", result.state.tau.mean()},
                         {"lambda_means", lambda_means},
                         {"files", files}};
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

vbcp::Index parse_entry_index(const std::string& spec,
                              const std::vector<Eigen::Index>& dims) {
  vbcp::Index idx;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = spec.find(',', start);
    const std::string part = spec.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
      idx.push_back(static_cast<Eigen::Index>(v));
    } catch (const std::exception&) {
      throw vbcp::ValidationError("--at '" + spec + "': bad integer '" +
                                  part + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (idx.size() != dims.size()) {
    throw vbcp::ValidationError(
        "--at '" + spec + "': expected " + std::to_string(dims.size()) +
        " comma-separated indices, got " + std::to_string(idx.size()));
  }
  for (std::size_t l = 0; l < dims.size(); ++l) {
    if (idx[l] < 0 || idx[l] >= dims[l]) {
      throw vbcp::ValidationError(
          "--at '" + spec + "': index out of range in mode " +
          std::to_string(l) + " (size " + std::to_string(dims[l]) + ")");
    }
  }
  return idx;
}

void check_snapshot_matches(const vbcp::CompletionProblem& problem,
                            const vbcp::PosteriorState& state) {
  if (state.dims() != problem.dims()) {
    throw vbcp::ValidationError(
        "snapshot has " + std::to_string(state.dims()) +
        " modes but the problem has " + std::to_string(problem.dims()));
  }
  for (Eigen::Index l = 0; l < problem.dims(); ++l) {
    const Eigen::Index want = problem.side_info[static_cast<std::size_t>(l)]
                                  .cols();
    const Eigen::Index got =
        state.factors[static_cast<std::size_t>(l)].m;
    if (want != got) {
      throw vbcp::ValidationError(
          "snapshot factor size " + std::to_string(got) + " in mode " +
          std::to_string(l) + " does not match the side-info width " +
          std::to_string(want));
    }
  }
}

int cmd_predict(const CommonArgs& args, const std::vector<std::string>& at,
                const std::string& snapshot_file) {
  Json doc = vbcp::read_json_file(args.config);
  Json extra = Json::object();
  apply_problem_overrides(args, doc, extra);
  const vbcp::CompletionProblem problem = vbcp::problem_from_json(doc);

  if (at.empty()) {
    throw vbcp::ValidationError("predict: no --at indices given");
  }
  std::vector<vbcp::Index> indices;
  indices.reserve(at.size());
  for (const std::string& spec : at) {
    indices.push_back(parse_entry_index(spec, problem.n));
  }

  vbcp::PosteriorState state;
  if (!snapshot_file.empty()) {
    state = vbcp::snapshot_from_json(vbcp::read_json_file(snapshot_file));
    check_snapshot_matches(problem, state);
  } else {
    vbcp::RunOptions options =
        options_from_algo(extra.value("algo", Json::object()));
    options.seed = args.seed;
    if (!args.quiet) {
      std::cerr << "no snapshot given; running inference first ("
                << options.max_iterations << " iterations max)\n";
    }
    state = vbcp::run(problem, options).state;
  }

  const std::filesystem::path out_dir = resolve_out_dir(args, "out");
  make_out_dir(out_dir);

  std::vector<std::string> header;
  for (std::size_t l = 0; l < problem.n.size(); ++l) {
    header.push_back("i" + std::to_string(l));
  }
  header.insert(header.end(), {"location", "precision", "dof", "variance"});
  const auto path = out_dir / "predictions.csv";
  vbcp::CsvWriter csv(path, header);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const vbcp::Index& idx : indices) {
    const vbcp::PredictiveT p = vbcp::predict_entry(problem, state, idx);
    const double variance =
        p.dof > 2.0 ? vbcp::student_t_moments(p).second : nan;
    auto row = csv.row();
    for (Eigen::Index i : idx) row << static_cast<std::int64_t>(i);
    row << p.location << p.precision << p.dof << variance;
  }

  const Json manifest = {{"command", "predict"},
                         {"count", indices.size()},
                         {"files", Json::array({path.string()})}};
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

int cmd_study(const std::string& kind, const CommonArgs& args) {
  const Json file = vbcp::read_json_file(args.config);
  std::vector<std::string> overrides = args.overrides;
  if (args.seed_opt && args.seed_opt->count() > 0) {
    overrides.push_back("exec.base_seed=" + std::to_string(args.seed));
  }
  vbcp::StudyConfig config = vbcp::parse_study_config(file, kind, overrides);
  if (args.out_opt && args.out_opt->count() > 0) config.out_dir = args.out;
  config.progress = args.quiet ? nullptr : &std::cerr;

  vbcp::StudyResult result;
  result.study = kind;
  result.digest = config.digest;
  result.canonical_config = config.canonical;
  result.base_seed = config.base_seed;
  if (kind == "phase") {
    result.grid = vbcp::run_phase_sweep(config);
  } else if (kind == "converge") {
    result.curves = vbcp::run_convergence_study(config);
  } else if (kind == "noise") {
    result.curves = vbcp::run_noise_study(config);
  } else {
    result.curves = vbcp::run_rank_study(config);
  }
  const Json manifest = vbcp::emit_outputs(result, config.out_dir);
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Bayesian low-rank tensor completion with subspace side information"};
  app.require_subcommand(1);

  CommonArgs complete_args;
  std::int64_t snapshot_every = 0;
  bool reconstruct = false;
  CLI::App* complete = app.add_subcommand(
      "complete", "infer the posterior for a problem file");
  add_common_flags(complete, complete_args);
  complete->add_option("--snapshot-every", snapshot_every,
                       "also write a posterior snapshot every N iterations");
  complete->add_flag("--reconstruct", reconstruct,
                     "write the posterior-mean tensor (dense JSON)");

  CommonArgs predict_args;
  std::vector<std::string> at;
  std::string snapshot_file;
  CLI::App* predict = app.add_subcommand(
      "predict", "predictive distributions at chosen entries");
  add_common_flags(predict, predict_args);
  predict->add_option("--at", at,
                      "0-based entry index i0,i1,... (repeatable)");
  predict->add_option(
      "--snapshot", snapshot_file,
      "posterior snapshot to predict from (otherwise inference runs first)");

  const std::array<const char*, 4> kinds = {"phase", "converge", "noise",
                                            "rank"};
  const std::array<const char*, 4> descs = {
      "success-frequency sweep over a (size or rank) x sample-count grid",
      "per-iteration error traces under repeated initializations",
      "final error against the signal-to-noise ratio",
      "automatically determined rank against the signal-to-noise ratio"};
  std::array<CommonArgs, 4> study_args;
  int rc = 0;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    CLI::App* cmd = app.add_subcommand(kinds[i], descs[i]);
    add_common_flags(cmd, study_args[i]);
    cmd->callback(
        [&, i]() { rc = cmd_study(kinds[i], study_args[i]); });
  }
  complete->callback(
      [&]() { rc = cmd_complete(complete_args, snapshot_every, reconstruct); });
  predict->callback(
      [&]() { rc = cmd_predict(predict_args, at, snapshot_file); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad usage is a validation failure
  } catch (const vbcp::ValidationError& e) {
    std::cerr << "error (validation): " << e.what() << "\n";
    return 2;
  } catch (const vbcp::NumericalError& e) {
    std::cerr << "error (numerical): " << e.what() << "\n";
    return 3;
  } catch (const vbcp::IoError& e) {
    std::cerr << "error (io): " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
