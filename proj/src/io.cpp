#include "vbcp/io.hpp"

#include <cstdio>
#include <exception>
#include <set>

#include "vbcp/errors.hpp"

namespace vbcp {

namespace {

Json matrix_to_rowmajor(const Matrix& a) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) out.push_back(a(r, c));
  }
  return out;
}

Matrix matrix_from_rowmajor(const Json& j, Eigen::Index rows,
                            Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols) {
    throw ValidationError(what + ": expected " + std::to_string(rows) + "x" +
                          std::to_string(cols) + " row-major list of " +
                          std::to_string(rows * cols) + " reals");
  }
  Matrix a(rows, cols);
  Eigen::Index p = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      a(r, c) = j[static_cast<std::size_t>(p++)].get<double>();
    }
  }
  return a;
}

Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vector vector_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + ": expected a list");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

std::vector<double> broadcast_hyper(const Json& j, Eigen::Index k,
                                    const std::string& what) {
  if (j.is_number()) {
    return std::vector<double>(static_cast<std::size_t>(k), j.get<double>());
  }
  if (j.is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != k) {
      throw ValidationError(what + ": list length " +
                            std::to_string(j.size()) + " != k = " +
                            std::to_string(k));
    }
    std::vector<double> v;
    v.reserve(j.size());
    for (const Json& e : j) v.push_back(e.get<double>());
    return v;
  }
  throw ValidationError(what + ": expected a number or a list of k numbers");
}

const Json& require(const Json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) {
    throw ValidationError(ctx + ": missing required field '" + key + "'");
  }
  return *it;
}

}  // namespace

Json problem_to_json(const CompletionProblem& problem) {
  Json j;
  j["d"] = problem.dims();
  j["n"] = problem.n;
  Json m = Json::array();
  Json g = Json::array();
  for (const Matrix& gl : problem.side_info) {
    m.push_back(gl.cols());
    g.push_back(matrix_to_rowmajor(gl));
  }
  j["m"] = std::move(m);
  j["G"] = std::move(g);
  Json omega = Json::array();
  for (const Observation& obs : problem.observations) {
    omega.push_back(Json{{"index", obs.index}, {"value", obs.value}});
  }
  j["omega"] = std::move(omega);
  j["k"] = problem.k;
  j["hyper"] = Json{{"a_j", problem.hyper.a_lambda},
                    {"b_j", problem.hyper.b_lambda},
                    {"a0", problem.hyper.a_tau},
                    {"b0", problem.hyper.b_tau}};
  return j;
}

CompletionProblem problem_from_json(const Json& j) {
  const std::string ctx = "problem";
  if (!j.is_object()) throw ValidationError(ctx + ": expected an object");

  static const std::set<std::string> known = {"d", "n",     "m",    "G",
                                              "omega", "k", "hyper", "truth",
                                              "meta"};
  std::string unknown;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      if (!unknown.empty()) unknown += ", ";
      unknown += it.key();
    }
  }
  if (!unknown.empty()) {
    throw ValidationError(ctx + ": unknown field(s): " + unknown);
  }

  const auto d = require(j, "d", ctx).get<Eigen::Index>();
  const auto n = require(j, "n", ctx).get<std::vector<Eigen::Index>>();
  const auto m = require(j, "m", ctx).get<std::vector<Eigen::Index>>();
  if (d < 1 || static_cast<Eigen::Index>(n.size()) != d ||
      static_cast<Eigen::Index>(m.size()) != d) {
    throw ValidationError(ctx + ": n and m must both have length d >= 1");
  }

  const Json& gj = require(j, "G", ctx);
  if (!gj.is_array() || static_cast<Eigen::Index>(gj.size()) != d) {
    throw ValidationError(ctx + ": G must be a list of d matrices");
  }
  std::vector<Matrix> side_info;
  side_info.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index l = 0; l < d; ++l) {
    side_info.push_back(matrix_from_rowmajor(
        gj[static_cast<std::size_t>(l)], n[static_cast<std::size_t>(l)],
        m[static_cast<std::size_t>(l)], ctx + ".G[" + std::to_string(l) + "]"));
  }

  const Json& oj = require(j, "omega", ctx);
  if (!oj.is_array()) throw ValidationError(ctx + ": omega must be a list");
  std::vector<Observation> observations;
  observations.reserve(oj.size());
  for (std::size_t i = 0; i < oj.size(); ++i) {
    const Json& e = oj[i];
    const std::string octx = ctx + ".omega[" + std::to_string(i) + "]";
    if (!e.is_object()) {
      throw ValidationError(octx + ": expected {\"index\": [...], \"value\": y}");
    }
    Observation obs;
    obs.index = require(e, "index", octx).get<Index>();
    obs.value = require(e, "value", octx).get<double>();
    observations.push_back(std::move(obs));
  }

  const auto k = require(j, "k", ctx).get<Eigen::Index>();
  const Json& hj = require(j, "hyper", ctx);
  Hyperpriors hyper;
  hyper.a_lambda = broadcast_hyper(require(hj, "a_j", ctx + ".hyper"), k,
                                   ctx + ".hyper.a_j");
  hyper.b_lambda = broadcast_hyper(require(hj, "b_j", ctx + ".hyper"), k,
                                   ctx + ".hyper.b_j");
  hyper.a_tau = require(hj, "a0", ctx + ".hyper").get<double>();
  hyper.b_tau = require(hj, "b0", ctx + ".hyper").get<double>();

  return new_problem(std::move(side_info), std::move(observations), k,
                     std::move(hyper));
}

Json snapshot_to_json(const PosteriorState& state) {
  Json j;
  j["current_k"] = state.current_k;
  j["iteration"] = state.iteration;
  Json mu = Json::array();
  Json a = Json::array();
  for (const GaussianVecPosterior& f : state.factors) {
    mu.push_back(vector_to_json(f.mean));
    a.push_back(matrix_to_rowmajor(f.covariance));
  }
  j["mu"] = std::move(mu);
  j["A"] = std::move(a);
  Json c = Json::array();
  Json dd = Json::array();
  for (const GammaPosterior& g : state.lambda) {
    c.push_back(g.shape);
    dd.push_back(g.rate);
  }
  j["c"] = std::move(c);
  j["d"] = std::move(dd);
  j["c0"] = state.tau.shape;
  j["d0"] = state.tau.rate;
  j["a_j"] = state.a_lambda;
  j["b_j"] = state.b_lambda;
  return j;
}

PosteriorState snapshot_from_json(const Json& j) {
  const std::string ctx = "snapshot";
  if (!j.is_object()) throw ValidationError(ctx + ": expected an object");

  PosteriorState s;
  s.current_k = require(j, "current_k", ctx).get<Eigen::Index>();
  s.iteration = require(j, "iteration", ctx).get<std::int64_t>();
  if (s.current_k < 1) throw ValidationError(ctx + ": current_k must be >= 1");

  const Json& mu = require(j, "mu", ctx);
  const Json& a = require(j, "A", ctx);
  if (!mu.is_array() || !a.is_array() || mu.size() != a.size() ||
      mu.empty()) {
    throw ValidationError(ctx + ": mu and A must be equal-length nonempty lists");
  }
  for (std::size_t l = 0; l < mu.size(); ++l) {
    const std::string fctx = ctx + ".mu[" + std::to_string(l) + "]";
    GaussianVecPosterior f;
    f.mean = vector_from_json(mu[l], fctx);
    f.k = s.current_k;
    if (f.mean.size() % s.current_k != 0 || f.mean.size() == 0) {
      throw ValidationError(fctx + ": length must be a positive multiple of current_k");
    }
    f.m = f.mean.size() / s.current_k;
    f.covariance =
        matrix_from_rowmajor(a[l], f.mean.size(), f.mean.size(),
                             ctx + ".A[" + std::to_string(l) + "]");
    s.factors.push_back(std::move(f));
  }

  const Json& c = require(j, "c", ctx);
  const Json& d = require(j, "d", ctx);
  if (!c.is_array() || !d.is_array() ||
      static_cast<Eigen::Index>(c.size()) != s.current_k ||
      static_cast<Eigen::Index>(d.size()) != s.current_k) {
    throw ValidationError(ctx + ": c and d must be lists of length current_k");
  }
  for (Eigen::Index i = 0; i < s.current_k; ++i) {
    s.lambda.push_back(GammaPosterior{
        c[static_cast<std::size_t>(i)].get<double>(),
        d[static_cast<std::size_t>(i)].get<double>()});
    if (!s.lambda.back().valid()) {
      throw ValidationError(ctx + ": c[" + std::to_string(i) + "], d[" +
                            std::to_string(i) + "] must be > 0");
    }
  }
  s.tau = GammaPosterior{require(j, "c0", ctx).get<double>(),
                         require(j, "d0", ctx).get<double>()};
  if (!s.tau.valid()) throw ValidationError(ctx + ": c0, d0 must be > 0");

  s.a_lambda = require(j, "a_j", ctx).get<std::vector<double>>();
  s.b_lambda = require(j, "b_j", ctx).get<std::vector<double>>();
  if (static_cast<Eigen::Index>(s.a_lambda.size()) != s.current_k ||
      static_cast<Eigen::Index>(s.b_lambda.size()) != s.current_k) {
    throw ValidationError(ctx + ": a_j and b_j must be lists of length current_k");
  }
  return s;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw IoError("parse error in " + path.string() + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

CompletionProblem read_problem(const std::filesystem::path& path) {
  return problem_from_json(read_json_file(path));
}

void write_problem(const std::filesystem::path& path,
                   const CompletionProblem& problem) {
  write_json_file(path, problem_to_json(problem));
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path,
                     const std::vector<std::string>& header)
    : out_(path), path_(path), columns_(header.size()) {
  if (!out_) throw IoError("cannot open for writing: " + path.string());
  write_row(header);
}

void CsvWriter::write_row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) {
    throw ValidationError("csv " + path_.string() + ": row has " +
                          std::to_string(cells.size()) + " cells, header has " +
                          std::to_string(columns_));
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out_ << ',';
    out_ << cells[i];
  }
  out_ << '\n';
  if (!out_) throw IoError("write failed: " + path_.string());
}

CsvWriter::Row& CsvWriter::Row::operator<<(double x) {
  cells_.push_back(format_double(x));
  return *this;
}

CsvWriter::Row& CsvWriter::Row::operator<<(std::int64_t x) {
  cells_.push_back(std::to_string(x));
  return *this;
}

CsvWriter::Row& CsvWriter::Row::operator<<(const std::string& s) {
  cells_.push_back(s);
  return *this;
}

CsvWriter::Row::~Row() noexcept(false) {
  if (!writer_) return;
  if (std::uncaught_exceptions() > 0) {
    try {
      writer_->write_row(cells_);
    } catch (...) {
      // Already unwinding; swallowing beats std::terminate.
    }
  } else {
    writer_->write_row(cells_);
  }
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string config_digest(const Json& config) {
  const std::string canonical = config.dump(-1, ' ', false,
                                            Json::error_handler_t::strict);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

}  // namespace vbcp
