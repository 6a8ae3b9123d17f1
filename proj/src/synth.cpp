#include "vbcp/synth.hpp"

#include <cmath>
#include <set>
#include <string>

#include "vbcp/io.hpp"
#include "vbcp/rng.hpp"

namespace vbcp {

namespace {

Matrix standard_normal_matrix(Rng& rng, Eigen::Index rows,
                              Eigen::Index cols) {
  Matrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = rng.normal();
  }
  return a;
}

Index draw_index(Rng& rng, const std::vector<Eigen::Index>& n) {
  Index idx(n.size());
  for (std::size_t l = 0; l < n.size(); ++l) {
    idx[l] = static_cast<Eigen::Index>(
        rng.below(static_cast<std::uint64_t>(n[l])));
  }
  return idx;
}

double evaluate_products(const std::vector<Matrix>& products,
                         const Index& idx) {
  const Eigen::Index r = products[0].cols();
  double total = 0.0;
  for (Eigen::Index j = 0; j < r; ++j) {
    double term = 1.0;
    for (std::size_t l = 0; l < products.size(); ++l) {
      term *= products[l](idx[l], j);
    }
    total += term;
  }
  return total;
}

}  // namespace

double SyntheticInstance::ground_truth(const Index& index) const {
  return evaluate_products(truth_products, index);
}

SyntheticInstance gen_instance(const InstanceSpec& spec) {
  const auto d = static_cast<Eigen::Index>(spec.n.size());
  if (d < 1) throw ValidationError("gen_instance: need at least one mode");
  if (spec.omega_size < 1) {
    throw ValidationError("gen_instance: omega_size must be >= 1");
  }
  if (spec.r < 1) throw ValidationError("gen_instance: r must be >= 1");
  if (spec.k < spec.r) {
    throw ValidationError("gen_instance: rank prediction k = " +
                          std::to_string(spec.k) + " below true rank r = " +
                          std::to_string(spec.r));
  }
  if (spec.m && static_cast<Eigen::Index>(spec.m->size()) != d) {
    throw ValidationError("gen_instance: m must have one entry per mode");
  }
  for (Eigen::Index l = 0; l < d; ++l) {
    const Eigen::Index nl = spec.n[static_cast<std::size_t>(l)];
    const Eigen::Index ml = spec.m ? (*spec.m)[static_cast<std::size_t>(l)] : nl;
    if (nl < 1 || ml < 1 || ml > nl) {
      throw ValidationError("gen_instance: need 1 <= m_l <= n_l in mode " +
                            std::to_string(l));
    }
    if (spec.r > ml) {
      throw ValidationError("gen_instance: r exceeds m in mode " +
                            std::to_string(l));
    }
  }

  Rng root(spec.seed);
  SyntheticInstance inst;
  inst.r = spec.r;
  inst.seed = spec.seed;
  inst.snr_db = spec.snr_db;

  std::vector<Matrix> side_info;
  for (Eigen::Index l = 0; l < d; ++l) {
    const Eigen::Index nl = spec.n[static_cast<std::size_t>(l)];
    if (spec.m) {
      Rng r_g = root.fork("side_info").fork(static_cast<std::uint64_t>(l));
      side_info.push_back(standard_normal_matrix(
          r_g, nl, (*spec.m)[static_cast<std::size_t>(l)]));
    } else {
      side_info.push_back(Matrix::Identity(nl, nl));
    }
    Rng r_u = root.fork("factors").fork(static_cast<std::uint64_t>(l));
    inst.truth_factors.push_back(
        standard_normal_matrix(r_u, side_info.back().cols(), spec.r));
    inst.truth_products.push_back(side_info.back() *
                                  inst.truth_factors.back());
  }

  Rng r_omega = root.fork("omega");
  std::vector<Observation> observations;
  observations.reserve(spec.omega_size);
  std::set<Index> omega_set;
  for (std::size_t s = 0; s < spec.omega_size; ++s) {
    Observation obs;
    obs.index = draw_index(r_omega, spec.n);
    obs.value = evaluate_products(inst.truth_products, obs.index);
    omega_set.insert(obs.index);
    observations.push_back(std::move(obs));
  }

  if (spec.snr_db) {
    double mean = 0.0;
    for (const Observation& o : observations) mean += o.value;
    mean /= static_cast<double>(observations.size());
    double var = 0.0;
    for (const Observation& o : observations) {
      var += (o.value - mean) * (o.value - mean);
    }
    var /= static_cast<double>(observations.size());
    inst.noise_sigma = std::sqrt(var / std::pow(10.0, *spec.snr_db / 10.0));
    Rng r_noise = root.fork("noise");
    for (Observation& o : observations) {
      o.value += inst.noise_sigma * r_noise.normal();
    }
  }

  Rng r_test = root.fork("omega_test");
  std::size_t overlap = 0;
  inst.test_set.reserve(spec.omega_size);
  for (std::size_t s = 0; s < spec.omega_size; ++s) {
    Observation obs;
    obs.index = draw_index(r_test, spec.n);
    obs.value = evaluate_products(inst.truth_products, obs.index);
    if (omega_set.count(obs.index)) ++overlap;
    inst.test_set.push_back(std::move(obs));
  }
  inst.overlap_fraction =
      static_cast<double>(overlap) / static_cast<double>(spec.omega_size);

  Hyperpriors hyper = spec.hyper;
  if (hyper.a_lambda.size() == 1) {
    hyper.a_lambda.assign(static_cast<std::size_t>(spec.k), hyper.a_lambda[0]);
  }
  if (hyper.b_lambda.size() == 1) {
    hyper.b_lambda.assign(static_cast<std::size_t>(spec.k), hyper.b_lambda[0]);
  }
  inst.problem = new_problem(std::move(side_info), std::move(observations),
                             spec.k, std::move(hyper));
  return inst;
}

double relative_test_rmse(
    const SyntheticInstance& instance,
    const std::function<double(const Index&)>& reconstruction_at) {
  if (instance.test_set.empty()) {
    throw ValidationError("relative_test_rmse: empty test set");
  }
  double err = 0.0;
  double ref = 0.0;
  for (const Observation& t : instance.test_set) {
    const double diff = t.value - reconstruction_at(t.index);
    err += diff * diff;
    ref += t.value * t.value;
  }
  if (ref <= 0.0) {
    throw ValidationError(
        "relative_test_rmse: degenerate instance, zero test norm");
  }
  return std::sqrt(err / ref);
}

void write_instance(const std::filesystem::path& path,
                    const SyntheticInstance& instance) {
  Json j = problem_to_json(instance.problem);
  Json factors = Json::array();
  for (const Matrix& u : instance.truth_factors) {
    Json flat = Json::array();
    for (Eigen::Index row = 0; row < u.rows(); ++row) {
      for (Eigen::Index col = 0; col < u.cols(); ++col) {
        flat.push_back(u(row, col));
      }
    }
    factors.push_back(std::move(flat));
  }
  j["truth"] = Json{{"factors", std::move(factors)},
                    {"r", instance.r},
                    {"seed", instance.seed},
                    {"snr_db", instance.snr_db ? Json(*instance.snr_db)
                                               : Json(nullptr)},
                    {"sigma", instance.noise_sigma},
                    {"overlap_fraction", instance.overlap_fraction}};
  write_json_file(path, j);
}

}  // namespace vbcp
