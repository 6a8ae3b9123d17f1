#include "vbcp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "vbcp/rng.hpp"
#include "vbcp/svg.hpp"

namespace vbcp {

int PhaseCell::n_success() const {
  int count = 0;
  for (const RunRecord& r : runs) count += r.success ? 1 : 0;
  return count;
}

double PhaseCell::frequency() const {
  return runs.empty() ? 0.0
                      : static_cast<double>(n_success()) /
                            static_cast<double>(runs.size());
}

double nearest_rank_percentile(std::vector<double> values, double pct) {
  if (values.empty()) {
    throw ValidationError("nearest_rank_percentile: empty sample");
  }
  if (pct < 0.0 || pct > 100.0) {
    throw ValidationError("nearest_rank_percentile: pct must be in [0, 100]");
  }
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  return values[rank - 1];
}

void finalize_series(CurveSeries& series) {
  const std::size_t nx = series.x.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  series.mean.assign(nx, nan);
  series.p5.assign(nx, nan);
  series.p95.assign(nx, nan);
  for (std::size_t i = 0; i < nx; ++i) {
    std::vector<double> vals;
    vals.reserve(series.per_run.size());
    for (const auto& run : series.per_run) {
      if (i < run.size() && std::isfinite(run[i])) vals.push_back(run[i]);
    }
    if (vals.empty()) continue;
    double sum = 0.0;
    for (double v : vals) sum += v;
    series.mean[i] = sum / static_cast<double>(vals.size());
    series.p5[i] = nearest_rank_percentile(vals, 5.0);
    series.p95[i] = nearest_rank_percentile(vals, 95.0);
  }
}

namespace {

constexpr const char* kSeedScheme =
    "instance_seed = derive(base_seed, [label_hash(study), coords..., "
    "trial]); run_seed = derive(instance_seed, [init])";

class ConfigErrors {
 public:
  void add(std::string msg) { msgs_.push_back(std::move(msg)); }
  bool any() const { return !msgs_.empty(); }
  void throw_if_any() const {
    if (msgs_.empty()) return;
    std::string joined = "config invalid:";
    for (const std::string& m : msgs_) joined += "\n  - " + m;
    throw ValidationError(joined);
  }

 private:
  std::vector<std::string> msgs_;
};

void check_keys(const Json& obj, const std::string& section,
                std::initializer_list<const char*> known,
                ConfigErrors& errs) {
  if (!obj.is_object()) return;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) errs.add("unknown key '" + section + "." + it.key() + "'");
  }
}

double get_number(const Json& obj, const std::string& section,
                  const char* key, double def, ConfigErrors& errs) {
  if (!obj.is_object() || !obj.contains(key)) return def;
  if (!obj[key].is_number()) {
    errs.add("'" + section + "." + key + "' must be a number");
    return def;
  }
  return obj[key].get<double>();
}

std::int64_t get_int(const Json& obj, const std::string& section,
                     const char* key, std::int64_t def, ConfigErrors& errs) {
  if (!obj.is_object() || !obj.contains(key)) return def;
  if (!obj[key].is_number_integer()) {
    errs.add("'" + section + "." + key + "' must be an integer");
    return def;
  }
  return obj[key].get<std::int64_t>();
}

bool get_bool(const Json& obj, const std::string& section, const char* key,
              bool def, ConfigErrors& errs) {
  if (!obj.is_object() || !obj.contains(key)) return def;
  if (!obj[key].is_boolean()) {
    errs.add("'" + section + "." + key + "' must be true or false");
    return def;
  }
  return obj[key].get<bool>();
}

std::vector<double> get_number_list(const Json& obj,
                                    const std::string& section,
                                    const char* key, ConfigErrors& errs) {
  std::vector<double> out;
  if (!obj.is_object() || !obj.contains(key)) return out;
  const Json& v = obj[key];
  if (v.is_number()) {
    out.push_back(v.get<double>());
    return out;
  }
  if (v.is_array()) {
    for (const Json& e : v) {
      if (!e.is_number()) {
        errs.add("'" + section + "." + key + "' must contain numbers only");
        return {};
      }
      out.push_back(e.get<double>());
    }
    return out;
  }
  errs.add("'" + section + "." + key + "' must be a number or a list");
  return out;
}

std::vector<Eigen::Index> to_index_list(const std::vector<double>& v,
                                        const std::string& what,
                                        ConfigErrors& errs,
                                        Eigen::Index min_value) {
  std::vector<Eigen::Index> out;
  for (double x : v) {
    const auto i = static_cast<Eigen::Index>(std::llround(x));
    if (static_cast<double>(i) != x || i < min_value) {
      errs.add("'" + what + "' entries must be integers >= " +
               std::to_string(min_value));
      return {};
    }
    out.push_back(i);
  }
  return out;
}

struct AxisIn {
  std::string name;
  std::vector<double> values;
};

std::optional<AxisIn> get_axis(const Json& sweep, const char* key,
                               ConfigErrors& errs) {
  if (!sweep.is_object() || !sweep.contains(key)) return std::nullopt;
  const Json& a = sweep[key];
  if (!a.is_object()) {
    errs.add(std::string("'sweep.") + key +
             "' must be an object {name, values}");
    return std::nullopt;
  }
  check_keys(a, std::string("sweep.") + key, {"name", "values"}, errs);
  AxisIn out;
  if (!a.contains("name") || !a["name"].is_string()) {
    errs.add(std::string("'sweep.") + key + ".name' must be a string");
  } else {
    out.name = a["name"].get<std::string>();
  }
  out.values = get_number_list(a, std::string("sweep.") + key, "values", errs);
  if (out.values.empty()) {
    errs.add(std::string("'sweep.") + key + ".values' must be nonempty");
  }
  return out;
}

Json index_list_json(const std::vector<Eigen::Index>& v) {
  Json out = Json::array();
  for (Eigen::Index x : v) out.push_back(x);
  return out;
}

Json double_list_json(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(x);
  return out;
}

}  // namespace

void apply_config_override(Json& root, const std::string& spec) {
  const std::size_t eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override '" + spec +
                          "' is not of the form section.key=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(raw);
  } catch (const Json::parse_error&) {
    value = raw;  // unquoted strings stay strings
  }
  Json* node = &root;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string part = path.substr(
        start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) {
      throw ValidationError("override '" + spec +
                            "' has an empty path segment");
    }
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part) || !(*node)[part].is_object()) {
      (*node)[part] = Json::object();
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

StudyConfig parse_study_config(const Json& file, const std::string& study,
                               const std::vector<std::string>& overrides) {
  if (study != "phase" && study != "converge" && study != "noise" &&
      study != "rank") {
    throw ValidationError("unknown study kind '" + study + "'");
  }
  ConfigErrors errs;
  Json root = file.is_null() ? Json::object() : file;
  if (!root.is_object()) {
    throw ValidationError("config: top level must be an object");
  }
  for (const std::string& o : overrides) {
    try {
      apply_config_override(root, o);
    } catch (const ValidationError& e) {
      errs.add(e.what());
    }
  }

  check_keys(root, "config", {"sweep", "model", "algo", "exec", "out"}, errs);
  const Json sweep = root.value("sweep", Json::object());
  const Json model = root.value("model", Json::object());
  const Json algo = root.value("algo", Json::object());
  const Json exec = root.value("exec", Json::object());
  const Json out = root.value("out", Json::object());
  for (const auto& [name, section] :
       std::initializer_list<std::pair<const char*, const Json*>>{
           {"sweep", &sweep},
           {"model", &model},
           {"algo", &algo},
           {"exec", &exec},
           {"out", &out}}) {
    if (!section->is_object()) {
      errs.add(std::string("section '") + name + "' must be an object");
    }
  }
  errs.throw_if_any();  // sections must be objects before reading them

  StudyConfig c;
  c.study = study;

  // --- sweep (per study) ---
  if (study == "phase") {
    check_keys(sweep, "sweep", {"axis1", "axis2"}, errs);
    const auto axis1 = get_axis(sweep, "axis1", errs);
    const auto axis2 = get_axis(sweep, "axis2", errs);
    if (!axis1) {
      errs.add("'sweep.axis1' is required for the phase study");
    } else {
      if (axis1->name != "n" && axis1->name != "r") {
        errs.add("'sweep.axis1.name' must be \"n\" or \"r\"");
      }
      c.axis1_name = axis1->name;
      c.axis1 = axis1->values;
      to_index_list(c.axis1, "sweep.axis1.values", errs, 1);
    }
    if (!axis2) {
      errs.add("'sweep.axis2' is required for the phase study");
    } else {
      if (axis2->name != "omega") {
        errs.add("'sweep.axis2.name' must be \"omega\"");
      }
      c.axis2 = axis2->values;
      to_index_list(c.axis2, "sweep.axis2.values", errs, 0);
    }
  } else if (study == "converge") {
    check_keys(sweep, "sweep", {"omega", "snr_db"}, errs);
    c.omega = to_index_list(get_number_list(sweep, "sweep", "omega", errs),
                            "sweep.omega", errs, 1);
    if (c.omega.size() != 1) {
      errs.add("'sweep.omega' must hold exactly one value for converge");
    }
    c.snr_db = get_number_list(sweep, "sweep", "snr_db", errs);
    if (c.snr_db.size() > 1) {
      errs.add("'sweep.snr_db' must hold at most one value for converge");
    }
  } else if (study == "noise") {
    check_keys(sweep, "sweep", {"snr_db", "omega", "m"}, errs);
    c.snr_db = get_number_list(sweep, "sweep", "snr_db", errs);
    if (c.snr_db.empty()) {
      errs.add("'sweep.snr_db' is required for the noise study");
    }
    c.omega = to_index_list(get_number_list(sweep, "sweep", "omega", errs),
                            "sweep.omega", errs, 1);
    if (c.omega.empty()) {
      errs.add("'sweep.omega' is required for the noise study");
    }
    c.m_sweep = to_index_list(get_number_list(sweep, "sweep", "m", errs),
                              "sweep.m", errs, 1);
  } else {  // rank
    check_keys(sweep, "sweep", {"epsilon", "snr_db", "omega"}, errs);
    c.epsilon = get_number_list(sweep, "sweep", "epsilon", errs);
    if (c.epsilon.empty()) {
      errs.add("'sweep.epsilon' is required for the rank study");
    }
    for (double e : c.epsilon) {
      if (e <= 0.0 || e > 1.0) {
        errs.add("'sweep.epsilon' values must be in (0, 1]");
        break;
      }
    }
    c.snr_db = get_number_list(sweep, "sweep", "snr_db", errs);
    if (c.snr_db.empty()) {
      errs.add("'sweep.snr_db' is required for the rank study");
    }
    c.omega = to_index_list(get_number_list(sweep, "sweep", "omega", errs),
                            "sweep.omega", errs, 1);
    if (c.omega.empty()) {
      errs.add("'sweep.omega' is required for the rank study");
    }
  }

  // --- model ---
  check_keys(model, "model", {"d", "n", "r", "k", "m", "hyper"}, errs);
  const std::int64_t d_given = get_int(model, "model", "d", 0, errs);
  std::vector<double> n_raw = get_number_list(model, "model", "n", errs);
  if (n_raw.empty()) {
    if (study == "phase" && c.axis1_name == "n" && !c.axis1.empty()) {
      // the axis supplies n cell by cell; only the mode count is needed
      if (d_given < 1) {
        errs.add("'model.d' is required when 'model.n' is omitted");
      } else {
        n_raw.assign(static_cast<std::size_t>(d_given), c.axis1[0]);
      }
    } else {
      errs.add("'model.n' is required");
    }
  } else if (n_raw.size() == 1) {
    if (d_given < 1) {
      errs.add("'model.d' is required when 'model.n' is a scalar");
    } else {
      n_raw.assign(static_cast<std::size_t>(d_given), n_raw[0]);
    }
  } else if (d_given > 0 &&
             static_cast<std::size_t>(d_given) != n_raw.size()) {
    errs.add("'model.d' disagrees with the length of 'model.n'");
  }
  c.n = to_index_list(n_raw, "model.n", errs, 1);

  c.r = static_cast<Eigen::Index>(get_int(model, "model", "r", 1, errs));
  c.k = static_cast<Eigen::Index>(get_int(model, "model", "k", c.r, errs));
  if (c.r < 1) errs.add("'model.r' must be >= 1");
  if (c.k < c.r) errs.add("'model.k' must be >= model.r");

  if (model.contains("m") && !model["m"].is_null()) {
    std::vector<double> m_raw = get_number_list(model, "model", "m", errs);
    if (m_raw.size() == 1 && !c.n.empty()) {
      m_raw.assign(c.n.size(), m_raw[0]);
    }
    if (!c.n.empty() && m_raw.size() != c.n.size()) {
      errs.add("'model.m' must be a scalar or match the number of modes");
    }
    c.m = to_index_list(m_raw, "model.m", errs, 1);
  }

  const Json hyper = model.value("hyper", Json::object());
  check_keys(hyper, "model.hyper", {"a_j", "b_j", "a0", "b0"}, errs);
  const double a_j = get_number(hyper, "model.hyper", "a_j", 1e-6, errs);
  const double b_j = get_number(hyper, "model.hyper", "b_j", 1e-6, errs);
  const double a0 = get_number(hyper, "model.hyper", "a0", 1e-6, errs);
  const double b0 = get_number(hyper, "model.hyper", "b0", 1e-6, errs);
  if (a_j <= 0 || b_j <= 0 || a0 <= 0 || b0 <= 0) {
    errs.add("'model.hyper' entries must be > 0");
  }
  c.hyper = Hyperpriors::uniform(1, a_j, b_j, a0, b0);

  // --- algo ---
  check_keys(algo, "algo",
             {"max_iterations", "tolerance", "prune", "prune_threshold",
              "epsilon"},
             errs);
  c.max_iterations = get_int(algo, "algo", "max_iterations", 100, errs);
  c.tolerance = get_number(algo, "algo", "tolerance", 0.0, errs);
  c.prune = get_bool(algo, "algo", "prune", false, errs);
  c.prune_threshold = get_number(algo, "algo", "prune_threshold", 1e3, errs);
  c.epsilon_default = get_number(algo, "algo", "epsilon", 0.05, errs);
  if (c.max_iterations < 1) errs.add("'algo.max_iterations' must be >= 1");
  if (c.tolerance < 0.0) errs.add("'algo.tolerance' must be >= 0");
  if (c.prune_threshold <= 0.0) errs.add("'algo.prune_threshold' must be > 0");
  if (c.epsilon_default <= 0.0 || c.epsilon_default > 1.0) {
    errs.add("'algo.epsilon' must be in (0, 1]");
  }

  // --- exec ---
  check_keys(exec, "exec",
             {"trials", "init_conditions", "base_seed", "parallelism"}, errs);
  c.trials = static_cast<int>(get_int(exec, "exec", "trials", 5, errs));
  c.init_conditions =
      static_cast<int>(get_int(exec, "exec", "init_conditions", 2, errs));
  if (c.trials < 1) errs.add("'exec.trials' must be >= 1");
  if (c.init_conditions < 1) errs.add("'exec.init_conditions' must be >= 1");
  if (exec.contains("base_seed")) {
    if (!exec["base_seed"].is_number_unsigned() &&
        !exec["base_seed"].is_number_integer()) {
      errs.add("'exec.base_seed' must be an integer");
    } else {
      c.base_seed = exec["base_seed"].get<std::uint64_t>();
    }
  }
  c.parallelism =
      static_cast<int>(get_int(exec, "exec", "parallelism", 0, errs));
  if (c.parallelism < 0) errs.add("'exec.parallelism' must be >= 0");

  // --- out ---
  check_keys(out, "out", {"dir"}, errs);
  if (out.contains("dir")) {
    if (!out["dir"].is_string()) {
      errs.add("'out.dir' must be a string");
    } else {
      c.out_dir = out["dir"].get<std::string>();
    }
  }

  errs.throw_if_any();

  // Fully resolved view; the digest is taken over this, so a file plus
  // overrides hashes identically to the equivalent flat file.
  Json sweep_out = Json::object();
  if (study == "phase") {
    sweep_out["axis1"] =
        Json{{"name", c.axis1_name}, {"values", double_list_json(c.axis1)}};
    sweep_out["axis2"] =
        Json{{"name", "omega"}, {"values", double_list_json(c.axis2)}};
  } else {
    sweep_out["omega"] = index_list_json(c.omega);
    if (!c.snr_db.empty() || study != "converge") {
      sweep_out["snr_db"] = double_list_json(c.snr_db);
    }
    if (study == "rank") sweep_out["epsilon"] = double_list_json(c.epsilon);
    if (study == "noise") sweep_out["m"] = index_list_json(c.m_sweep);
  }
  c.canonical = Json{
      {"study", study},
      {"sweep", std::move(sweep_out)},
      {"model",
       Json{{"n", index_list_json(c.n)},
            {"r", c.r},
            {"k", c.k},
            {"m", c.m ? index_list_json(*c.m) : Json(nullptr)},
            {"hyper",
             Json{{"a_j", a_j}, {"b_j", b_j}, {"a0", a0}, {"b0", b0}}}}},
      {"algo",
       Json{{"max_iterations", c.max_iterations},
            {"tolerance", c.tolerance},
            {"prune", c.prune},
            {"prune_threshold", c.prune_threshold},
            {"epsilon", c.epsilon_default}}},
      {"exec",
       Json{{"trials", c.trials},
            {"init_conditions", c.init_conditions},
            {"base_seed", c.base_seed}}}};
  // parallelism and out.dir affect neither the data nor the plots, so they
  // stay out of the digest
  c.digest = config_digest(c.canonical);
  return c;
}

namespace {

void parallel_run(std::size_t count, int parallelism, std::ostream* progress,
                  const std::function<void(std::size_t)>& fn) {
  unsigned workers = parallelism > 0
                         ? static_cast<unsigned>(parallelism)
                         : std::thread::hardware_concurrency();
  if (workers == 0) workers = 1;
  workers = static_cast<unsigned>(
      std::min<std::size_t>(workers, std::max<std::size_t>(count, 1)));

  std::mutex progress_mutex;
  std::atomic<std::size_t> done{0};
  auto report = [&]() {
    if (!progress) return;
    const std::size_t n = done.fetch_add(1) + 1;
    std::lock_guard<std::mutex> lock(progress_mutex);
    (*progress) << "run " << n << "/" << count << "\n";
  };

  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      fn(i);
      report();
    }
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto body = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
      report();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

InstanceSpec base_instance_spec(const StudyConfig& c) {
  InstanceSpec s;
  s.n = c.n;
  s.r = c.r;
  s.m = c.m;
  s.k = c.k;
  s.hyper = c.hyper;
  return s;
}

RunOptions base_options(const StudyConfig& c) {
  RunOptions o;
  o.max_iterations = c.max_iterations;
  o.tolerance = c.tolerance;
  o.prune = c.prune;
  o.prune_threshold = c.prune_threshold;
  return o;
}

/// Generates the instance, runs the completion, scores it. Numerical and
/// generation failures are recorded on the record, never thrown.
RunRecord execute_completion(InstanceSpec spec, RunOptions options,
                             std::uint64_t instance_seed, int trial, int init,
                             PosteriorState* final_state = nullptr) {
  RunRecord rec;
  rec.trial = trial;
  rec.init = init;
  rec.instance_seed = instance_seed;
  rec.run_seed =
      Rng::derive(instance_seed, {static_cast<std::uint64_t>(init)});
  try {
    spec.seed = instance_seed;
    const SyntheticInstance inst = gen_instance(spec);
    options.seed = rec.run_seed;
    RunResult res = run(inst.problem, options);
    rec.rmse = relative_test_rmse(inst, MeanEvaluator(inst.problem, res.state));
    rec.success = rec.rmse < kSuccessRmse;
    if (final_state) *final_state = std::move(res.state);
  } catch (const NumericalError&) {
    rec.failed = true;
  } catch (const ValidationError&) {
    rec.failed = true;
  }
  return rec;
}

}  // namespace

PhaseGrid run_phase_sweep(const StudyConfig& c) {
  if (c.axis1.empty() || c.axis2.empty()) {
    throw ValidationError("run_phase_sweep: missing sweep axes");
  }
  PhaseGrid grid;
  grid.axis1_name = c.axis1_name;
  grid.axis2_name = "omega";
  grid.axis1 = c.axis1;
  grid.axis2 = c.axis2;
  grid.trials = c.trials;
  grid.init_conditions = c.init_conditions;
  grid.iterations = c.max_iterations;
  grid.digest = c.digest;

  const std::size_t n1 = c.axis1.size();
  const std::size_t n2 = c.axis2.size();
  const std::size_t per_cell = static_cast<std::size_t>(c.trials) *
                               static_cast<std::size_t>(c.init_conditions);
  grid.cells.resize(n1 * n2);
  for (std::size_t i1 = 0; i1 < n1; ++i1) {
    for (std::size_t i2 = 0; i2 < n2; ++i2) {
      PhaseCell& cell = grid.cells[i1 * n2 + i2];
      cell.axis1 = c.axis1[i1];
      cell.axis2 = c.axis2[i2];
      cell.runs.resize(per_cell);
    }
  }

  const std::uint64_t tag = Rng::hash_label("phase");
  parallel_run(
      n1 * n2 * per_cell, c.parallelism, c.progress, [&](std::size_t t) {
        const std::size_t cell_id = t / per_cell;
        const std::size_t slot = t % per_cell;
        const int trial = static_cast<int>(slot) / c.init_conditions;
        const int init = static_cast<int>(slot) % c.init_conditions;
        const std::size_t i1 = cell_id / n2;
        const std::size_t i2 = cell_id % n2;

        InstanceSpec spec = base_instance_spec(c);
        if (c.axis1_name == "r") {
          // perfect rank prediction tracks the true rank cell by cell
          spec.r = static_cast<Eigen::Index>(std::llround(c.axis1[i1]));
          spec.k = spec.r;
        } else {
          const auto nv =
              static_cast<Eigen::Index>(std::llround(c.axis1[i1]));
          spec.n.assign(c.n.size(), nv);
        }
        spec.omega_size =
            static_cast<std::size_t>(std::llround(c.axis2[i2]));
        spec.snr_db.reset();  // phase protocol is noiseless

        const std::uint64_t seed =
            Rng::derive(c.base_seed, {tag, i1, i2,
                                      static_cast<std::uint64_t>(trial)});
        grid.cells[cell_id].runs[slot] =
            execute_completion(spec, base_options(c), seed, trial, init);
      });
  return grid;
}

std::vector<CurveSeries> run_convergence_study(const StudyConfig& c) {
  if (c.omega.size() != 1) {
    throw ValidationError("run_convergence_study: need exactly one omega");
  }
  const std::size_t points = static_cast<std::size_t>(c.max_iterations) + 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<CurveSeries> series(static_cast<std::size_t>(c.init_conditions));
  for (int ic = 0; ic < c.init_conditions; ++ic) {
    CurveSeries& s = series[static_cast<std::size_t>(ic)];
    s.name = "init " + std::to_string(ic);
    s.x_name = "iteration";
    s.dash_group = ic;
    s.x.resize(points);
    for (std::size_t i = 0; i < points; ++i) s.x[i] = static_cast<double>(i);
    s.per_run.assign(static_cast<std::size_t>(c.trials),
                     std::vector<double>(points, nan));
    s.run_info.resize(static_cast<std::size_t>(c.trials));
    s.run_instance_seeds.assign(
        static_cast<std::size_t>(c.trials),
        std::vector<std::uint64_t>(points, 0));
  }

  const std::uint64_t tag = Rng::hash_label("converge");
  const std::size_t total = static_cast<std::size_t>(c.trials) *
                            static_cast<std::size_t>(c.init_conditions);
  parallel_run(total, c.parallelism, c.progress, [&](std::size_t t) {
    const int trial = static_cast<int>(t) / c.init_conditions;
    const int init = static_cast<int>(t) % c.init_conditions;
    CurveSeries& s = series[static_cast<std::size_t>(init)];
    std::vector<double>& trace = s.per_run[static_cast<std::size_t>(trial)];

    RunRecord rec;
    rec.trial = trial;
    rec.init = init;
    rec.instance_seed = Rng::derive(
        c.base_seed, {tag, 0, 0, static_cast<std::uint64_t>(trial)});
    rec.run_seed = Rng::derive(rec.instance_seed,
                               {static_cast<std::uint64_t>(init)});
    std::fill(s.run_instance_seeds[static_cast<std::size_t>(trial)].begin(),
              s.run_instance_seeds[static_cast<std::size_t>(trial)].end(),
              rec.instance_seed);
    try {
      InstanceSpec spec = base_instance_spec(c);
      spec.omega_size = static_cast<std::size_t>(c.omega[0]);
      if (!c.snr_db.empty()) spec.snr_db = c.snr_db[0];
      spec.seed = rec.instance_seed;
      const SyntheticInstance inst = gen_instance(spec);

      PosteriorState state = init_posterior(inst.problem, rec.run_seed);
      Engine engine(inst.problem);
      trace[0] = relative_test_rmse(inst, MeanEvaluator(inst.problem, state));
      for (std::size_t it = 1; it < points; ++it) {
        const SweepReport rep = engine.sweep(state);
        if (c.prune) prune_ranks(state, c.prune_threshold);
        trace[it] =
            relative_test_rmse(inst, MeanEvaluator(inst.problem, state));
        if (c.tolerance > 0.0 && rep.max_rel_change < c.tolerance) {
          // converged early; the trace holds its last level
          for (std::size_t rest = it + 1; rest < points; ++rest) {
            trace[rest] = trace[it];
          }
          break;
        }
      }
      rec.rmse = trace.back();
      rec.success = std::isfinite(rec.rmse) && rec.rmse < kSuccessRmse;
    } catch (const NumericalError&) {
      rec.failed = true;
    } catch (const ValidationError&) {
      rec.failed = true;
    }
    s.run_info[static_cast<std::size_t>(trial)] = rec;
  });

  for (CurveSeries& s : series) finalize_series(s);
  return series;
}

std::vector<CurveSeries> run_noise_study(const StudyConfig& c) {
  if (c.snr_db.empty() || c.omega.empty()) {
    throw ValidationError("run_noise_study: need snr_db and omega lists");
  }
  // One series per (m, omega) combination; within a series x = snr_db.
  std::vector<std::optional<std::vector<Eigen::Index>>> m_values;
  if (c.m_sweep.empty()) {
    m_values.push_back(c.m);
  } else {
    for (Eigen::Index mv : c.m_sweep) {
      m_values.emplace_back(std::vector<Eigen::Index>(c.n.size(), mv));
    }
  }

  const std::size_t nm = m_values.size();
  const std::size_t nom = c.omega.size();
  const std::size_t nsnr = c.snr_db.size();
  const std::size_t runs = static_cast<std::size_t>(c.trials) *
                           static_cast<std::size_t>(c.init_conditions);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<CurveSeries> series(nm * nom);
  for (std::size_t im = 0; im < nm; ++im) {
    for (std::size_t io = 0; io < nom; ++io) {
      CurveSeries& s = series[im * nom + io];
      std::string name;
      if (nm > 1 || !c.m_sweep.empty()) {
        name += "m=" + (m_values[im]
                            ? std::to_string((*m_values[im])[0])
                            : std::string("none"));
      }
      if (nom > 1) {
        if (!name.empty()) name += " ";
        name += "omega=" + std::to_string(c.omega[io]);
      }
      if (name.empty()) name = "rmse";
      s.name = name;
      s.x_name = "snr_db";
      s.x = c.snr_db;
      s.per_run.assign(runs, std::vector<double>(nsnr, nan));
      s.run_info.resize(runs);
      s.run_instance_seeds.assign(runs,
                                  std::vector<std::uint64_t>(nsnr, 0));
      for (std::size_t r = 0; r < runs; ++r) {
        s.run_info[r].trial = static_cast<int>(r) / c.init_conditions;
        s.run_info[r].init = static_cast<int>(r) % c.init_conditions;
      }
    }
  }

  const std::uint64_t tag = Rng::hash_label("noise");
  const std::size_t total = nm * nom * nsnr * runs;
  parallel_run(total, c.parallelism, c.progress, [&](std::size_t t) {
    std::size_t rest = t;
    const std::size_t slot = rest % runs;
    rest /= runs;
    const std::size_t isnr = rest % nsnr;
    rest /= nsnr;
    const std::size_t io = rest % nom;
    const std::size_t im = rest / nom;
    const int trial = static_cast<int>(slot) / c.init_conditions;
    const int init = static_cast<int>(slot) % c.init_conditions;

    InstanceSpec spec = base_instance_spec(c);
    spec.m = m_values[im];
    spec.omega_size = static_cast<std::size_t>(c.omega[io]);
    spec.snr_db = c.snr_db[isnr];
    const std::uint64_t seed =
        Rng::derive(c.base_seed,
                    {tag, im, io, isnr, static_cast<std::uint64_t>(trial)});

    const RunRecord rec =
        execute_completion(spec, base_options(c), seed, trial, init);
    CurveSeries& s = series[im * nom + io];
    s.per_run[slot][isnr] = rec.failed ? nan : rec.rmse;
    s.run_instance_seeds[slot][isnr] = seed;
  });

  for (CurveSeries& s : series) finalize_series(s);
  return series;
}

std::vector<CurveSeries> run_rank_study(const StudyConfig& c) {
  if (c.epsilon.empty() || c.snr_db.empty() || c.omega.empty()) {
    throw ValidationError(
        "run_rank_study: need epsilon, snr_db, and omega lists");
  }
  const std::size_t neps = c.epsilon.size();
  const std::size_t nom = c.omega.size();
  const std::size_t nsnr = c.snr_db.size();
  const std::size_t runs = static_cast<std::size_t>(c.trials) *
                           static_cast<std::size_t>(c.init_conditions);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  // Each completion run is executed once and scored at every epsilon.
  std::vector<std::vector<double>> ranks(nom * nsnr * runs,
                                         std::vector<double>(neps, nan));
  std::vector<std::uint64_t> seeds(nom * nsnr * runs, 0);

  const std::uint64_t tag = Rng::hash_label("rank");
  parallel_run(nom * nsnr * runs, c.parallelism, c.progress,
               [&](std::size_t t) {
                 std::size_t rest = t;
                 const std::size_t slot = rest % runs;
                 rest /= runs;
                 const std::size_t isnr = rest % nsnr;
                 const std::size_t io = rest / nsnr;
                 const int trial = static_cast<int>(slot) / c.init_conditions;
                 const int init = static_cast<int>(slot) % c.init_conditions;

                 InstanceSpec spec = base_instance_spec(c);
                 spec.omega_size = static_cast<std::size_t>(c.omega[io]);
                 spec.snr_db = c.snr_db[isnr];
                 const std::uint64_t seed = Rng::derive(
                     c.base_seed, {tag, io, isnr,
                                   static_cast<std::uint64_t>(trial)});
                 seeds[t] = seed;

                 PosteriorState final_state;
                 const RunRecord rec = execute_completion(
                     spec, base_options(c), seed, trial, init, &final_state);
                 if (rec.failed) return;
                 for (std::size_t ie = 0; ie < neps; ++ie) {
                   ranks[t][ie] = static_cast<double>(
                       determine_rank(final_state, c.epsilon[ie]));
                 }
               });

  std::vector<CurveSeries> series(neps * nom);
  for (std::size_t ie = 0; ie < neps; ++ie) {
    for (std::size_t io = 0; io < nom; ++io) {
      CurveSeries& s = series[ie * nom + io];
      char label[64];
      std::snprintf(label, sizeof(label), "eps=%g", c.epsilon[ie]);
      s.name = label;
      if (nom > 1) {
        s.name += " omega=" + std::to_string(c.omega[io]);
      }
      s.x_name = "snr_db";
      s.x = c.snr_db;
      s.per_run.assign(runs, std::vector<double>(nsnr, nan));
      s.run_info.resize(runs);
      s.run_instance_seeds.assign(runs,
                                  std::vector<std::uint64_t>(nsnr, 0));
      for (std::size_t slot = 0; slot < runs; ++slot) {
        s.run_info[slot].trial = static_cast<int>(slot) / c.init_conditions;
        s.run_info[slot].init = static_cast<int>(slot) % c.init_conditions;
        for (std::size_t isnr = 0; isnr < nsnr; ++isnr) {
          const std::size_t t = (io * nsnr + isnr) * runs + slot;
          s.per_run[slot][isnr] = ranks[t][ie];
          s.run_instance_seeds[slot][isnr] = seeds[t];
        }
      }
      finalize_series(s);
    }
  }
  return series;
}

Json emit_outputs(const StudyResult& result,
                  const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create output directory " + out_dir.string() +
                  ": " + ec.message());
  }
  const std::string prefix = result.study + "_";
  std::vector<std::string> files;

  auto write_text = [&](const std::filesystem::path& p,
                        const std::string& text) {
    std::ofstream f(p);
    if (!f) throw IoError("cannot open for writing: " + p.string());
    f << text;
    if (!f) throw IoError("write failed: " + p.string());
    files.push_back(p.string());
  };

  if (result.grid) {
    const PhaseGrid& grid = *result.grid;
    {
      const auto p = out_dir / (prefix + "data.csv");
      CsvWriter w(p, {"axis1", "axis2", "success_freq", "n_success",
                      "n_runs"});
      for (std::size_t i1 = 0; i1 < grid.axis1.size(); ++i1) {
        for (std::size_t i2 = 0; i2 < grid.axis2.size(); ++i2) {
          const PhaseCell& cell = grid.cell(i1, i2);
          w.row() << cell.axis1 << cell.axis2 << cell.frequency()
                  << static_cast<std::int64_t>(cell.n_success())
                  << static_cast<std::int64_t>(cell.n_runs());
        }
      }
      files.push_back(p.string());
    }
    {
      const auto p = out_dir / (prefix + "runs.csv");
      CsvWriter w(p, {"axis1", "axis2", "trial", "init", "success", "failed",
                      "rmse", "instance_seed", "run_seed"});
      for (std::size_t i1 = 0; i1 < grid.axis1.size(); ++i1) {
        for (std::size_t i2 = 0; i2 < grid.axis2.size(); ++i2) {
          const PhaseCell& cell = grid.cell(i1, i2);
          for (const RunRecord& r : cell.runs) {
            w.row() << cell.axis1 << cell.axis2
                    << static_cast<std::int64_t>(r.trial)
                    << static_cast<std::int64_t>(r.init)
                    << static_cast<std::int64_t>(r.success ? 1 : 0)
                    << static_cast<std::int64_t>(r.failed ? 1 : 0) << r.rmse
                    << std::to_string(r.instance_seed)
                    << std::to_string(r.run_seed);
          }
        }
      }
      files.push_back(p.string());
    }
    {
      HeatmapSpec h;
      h.title = result.study + " study: success frequency";
      h.xlabel = grid.axis2_name;
      h.ylabel = grid.axis1_name;
      h.x = grid.axis2;
      h.y = grid.axis1;
      h.values.resize(static_cast<Eigen::Index>(grid.axis1.size()),
                      static_cast<Eigen::Index>(grid.axis2.size()));
      for (std::size_t i1 = 0; i1 < grid.axis1.size(); ++i1) {
        for (std::size_t i2 = 0; i2 < grid.axis2.size(); ++i2) {
          h.values(static_cast<Eigen::Index>(i1),
                   static_cast<Eigen::Index>(i2)) =
              grid.cell(i1, i2).frequency();
        }
      }
      write_text(out_dir / (prefix + "plot.svg"), render_heatmap(h));
    }
  } else {
    {
      const auto p = out_dir / (prefix + "data.csv");
      CsvWriter w(p, {"series", "x", "trial", "init", "y", "instance_seed"});
      for (const CurveSeries& s : result.curves) {
        for (std::size_t r = 0; r < s.per_run.size(); ++r) {
          for (std::size_t i = 0; i < s.x.size(); ++i) {
            const std::uint64_t seed =
                r < s.run_instance_seeds.size() &&
                        i < s.run_instance_seeds[r].size()
                    ? s.run_instance_seeds[r][i]
                    : 0;
            w.row() << s.name << s.x[i]
                    << static_cast<std::int64_t>(s.run_info[r].trial)
                    << static_cast<std::int64_t>(s.run_info[r].init)
                    << s.per_run[r][i] << std::to_string(seed);
          }
        }
      }
      files.push_back(p.string());
    }
    {
      const auto p = out_dir / (prefix + "band.csv");
      CsvWriter w(p, {"series", "x", "mean", "p5", "p95"});
      for (const CurveSeries& s : result.curves) {
        for (std::size_t i = 0; i < s.x.size(); ++i) {
          w.row() << s.name << s.x[i] << s.mean[i] << s.p5[i] << s.p95[i];
        }
      }
      files.push_back(p.string());
    }
    {
      CurvePlotSpec plot;
      plot.title = result.study + " study";
      plot.log_y = (result.study == "converge" || result.study == "noise");
      if (!result.curves.empty()) {
        const std::string& xn = result.curves.front().x_name;
        plot.xlabel = xn == "snr_db" ? "SNR (dB)" : xn;
      }
      plot.ylabel =
          result.study == "rank" ? "determined rank" : "relative test RMSE";
      std::size_t total_lines = 0;
      for (const CurveSeries& s : result.curves) {
        total_lines += s.per_run.size();
      }
      for (const CurveSeries& s : result.curves) {
        CurvePlotSpec::Series ps;
        ps.label = s.name;
        ps.dash_group = s.dash_group;
        ps.x = s.x;
        ps.mean = s.mean;
        ps.lo = s.p5;
        ps.hi = s.p95;
        if (total_lines <= 24) ps.lines = s.per_run;
        plot.series.push_back(std::move(ps));
      }
      write_text(out_dir / (prefix + "plot.svg"), render_curves(plot));
    }
  }

  {
    Json meta = Json{{"study", result.study},
                     {"config_digest", result.digest},
                     {"config", result.canonical_config},
                     {"tool_version", kToolVersion},
                     {"rng_algorithm", Rng::kAlgorithmId},
                     {"base_seed", result.base_seed},
                     {"seed_scheme", kSeedScheme},
                     {"success_threshold", kSuccessRmse}};
    const auto p = out_dir / (prefix + "meta.json");
    write_json_file(p, meta);
    files.push_back(p.string());
  }

  Json manifest = Json{{"study", result.study},
                       {"digest", result.digest},
                       {"out_dir", out_dir.string()},
                       {"files", files}};
  return manifest;
}

}  // namespace vbcp
