#include <doctest.h>

#include <cmath>
#include <vector>

#include "vbcp/errors.hpp"
#include "vbcp/linalg.hpp"
#include "vbcp/rng.hpp"

#include "oracles.hpp"

using vbcp::Matrix;
using vbcp::Vector;

TEST_CASE("multilinear product: two matrices give the Frobenius inner product") {
  vbcp::Rng rng(1);
  const Matrix x = oracle::random_matrix(rng, 4, 3);
  const Matrix y = oracle::random_matrix(rng, 4, 3);
  const double got = vbcp::multilinear_product({x, y});
  CHECK(got == doctest::Approx((x.transpose() * y).trace()).epsilon(1e-14));
}

TEST_CASE("multilinear product: single all-ones 2x2 sums to 4") {
  CHECK(vbcp::multilinear_product({Matrix::Ones(2, 2)}) ==
        doctest::Approx(4.0));
}

TEST_CASE("multilinear product: three random matrices vs nested-loop oracle") {
  vbcp::Rng rng(2);
  const std::vector<Matrix> mats = {oracle::random_matrix(rng, 2, 3),
                                    oracle::random_matrix(rng, 2, 3),
                                    oracle::random_matrix(rng, 2, 3)};
  CHECK(vbcp::multilinear_product(mats) ==
        doctest::Approx(oracle::multilinear_loop(mats)).epsilon(1e-14));
}

TEST_CASE("multilinear product rejects shape mismatches and empty input") {
  CHECK_THROWS_AS(
      vbcp::multilinear_product({Matrix::Ones(2, 2), Matrix::Ones(2, 3)}),
      vbcp::ValidationError);
  CHECK_THROWS_AS(vbcp::multilinear_product(std::span<const Matrix>{}),
                  vbcp::ValidationError);
}

TEST_CASE("multilinear squared-argument identity") {
  // <U1^T g1, ..., Ud^T gd>^2 == <U1^T g1 g1^T U1, ..., Ud^T gd gd^T Ud>
  vbcp::Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const Eigen::Index d = 2 + static_cast<Eigen::Index>(rng.below(3));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(4));
    std::vector<Matrix> vecs, grams;
    for (Eigen::Index l = 0; l < d; ++l) {
      const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(4));
      const Matrix u = oracle::random_matrix(rng, m, k);
      const Vector g = oracle::random_vector(rng, m);
      const Vector w = u.transpose() * g;
      vecs.push_back(w);
      grams.push_back(w * w.transpose());
    }
    const double lhs = vbcp::multilinear_product(vecs);
    const double rhs = vbcp::multilinear_product(grams);
    CHECK(lhs * lhs ==
          doctest::Approx(rhs).epsilon(1e-10).scale(std::abs(rhs) + 1.0));
  }
}

TEST_CASE("hadamard identities and loop oracle") {
  vbcp::Rng rng(4);
  const Matrix x = oracle::random_matrix(rng, 3, 3);
  CHECK(vbcp::hadamard(x, Matrix::Ones(3, 3)) == x);
  CHECK(vbcp::hadamard(x, Matrix::Zero(3, 3)) == Matrix::Zero(3, 3));
  const Matrix y = oracle::random_matrix(rng, 3, 3);
  const Matrix h = vbcp::hadamard(x, y);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      CHECK(h(i, j) == x(i, j) * y(i, j));
    }
  }
  CHECK_THROWS_AS(vbcp::hadamard(x, Matrix::Ones(2, 3)),
                  vbcp::ValidationError);
}

TEST_CASE("sandwich: identity matrix gives (g^T g) I_k") {
  vbcp::Rng rng(5);
  const Eigen::Index m = 3, k = 4;
  const Vector g = oracle::random_vector(rng, m);
  const Matrix got = vbcp::sandwich(Matrix::Identity(m * k, m * k), g, k);
  const Matrix want = g.squaredNorm() * Matrix::Identity(k, k);
  CHECK((got - want).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("sandwich: zero vector gives the zero matrix") {
  vbcp::Rng rng(6);
  const Matrix a = oracle::random_symmetric(rng, 6);
  const Matrix got = vbcp::sandwich(a, Vector::Zero(2), 3);
  CHECK(got == Matrix::Zero(3, 3));
}

TEST_CASE("sandwich matches the dense Kronecker-assembly oracle") {
  vbcp::Rng rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Matrix a = oracle::random_symmetric(rng, m * k);
    const Vector g = oracle::random_vector(rng, m);
    const Matrix got = vbcp::sandwich(a, g, k);
    const Matrix want = oracle::sandwich_dense(a, g, k);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got - got.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(vbcp::sandwich(Matrix::Identity(5, 5), Vector::Ones(2), 2),
                  vbcp::ValidationError);
}

TEST_CASE("kron_vec: unit selector, all-ones, and dense oracle") {
  vbcp::Rng rng(8);
  const Vector g = oracle::random_vector(rng, 3);
  Vector e1 = Vector::Zero(2);
  e1[0] = 1.0;
  const Vector sel = vbcp::kron_vec(e1, g);
  CHECK(sel.head(3) == g);
  CHECK(sel.tail(3) == Vector::Zero(3));

  CHECK(vbcp::kron_vec(Vector::Ones(2), Vector::Ones(3)) == Vector::Ones(6));

  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.below(5));
    const Vector w = oracle::random_vector(rng, k);
    const Vector gg = oracle::random_vector(rng, m);
    CHECK((vbcp::kron_vec(w, gg) - oracle::kron_vec_dense(w, gg))
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
}

TEST_CASE("block_diag_trace: identity, arithmetic diagonal, loop oracle") {
  CHECK(vbcp::block_diag_trace(Matrix::Identity(6, 6), 1, 3) ==
        doctest::Approx(3.0));

  Matrix diag = Matrix::Zero(4, 4);
  for (Eigen::Index i = 0; i < 4; ++i) diag(i, i) = static_cast<double>(i + 1);
  CHECK(vbcp::block_diag_trace(diag, 1, 2) == doctest::Approx(7.0));

  vbcp::Rng rng(9);
  const Matrix a = oracle::random_matrix(rng, 6, 6);
  CHECK(vbcp::block_diag_trace(a, 1, 3) ==
        doctest::Approx(oracle::block_trace_loop(a, 1, 3)).epsilon(1e-14));

  CHECK_THROWS_AS(vbcp::block_diag_trace(a, 2, 3), vbcp::ValidationError);
  CHECK_THROWS_AS(vbcp::block_diag_trace(a, -1, 3), vbcp::ValidationError);
}

TEST_CASE("vec/unvec round trip is exact and column-stacked") {
  vbcp::Rng rng(10);
  const Matrix u = oracle::random_matrix(rng, 4, 3);
  const Vector v = vbcp::vec_factor(u);
  for (Eigen::Index j = 0; j < 3; ++j) {
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(v[j * 4 + i] == u(i, j));
    }
  }
  CHECK(vbcp::unvec_factor(v, 4, 3) == u);
}

TEST_CASE("spd factorization: identity and the hand-checkable 2x2") {
  const auto fid = vbcp::SpdFactor::factorize(Matrix::Identity(3, 3));
  CHECK((fid.matrix_l() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() ==
        0.0);

  Matrix b(2, 2);
  b << 4, 2, 2, 3;
  const auto f = vbcp::SpdFactor::factorize(b);
  Matrix l_expected(2, 2);
  l_expected << 2, 0, 1, std::sqrt(2.0);
  CHECK((f.matrix_l() - l_expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("spd factorization reconstructs random SPD matrices") {
  vbcp::Rng rng(11);
  const Matrix b = oracle::random_spd(rng, 12);
  const auto f = vbcp::SpdFactor::factorize(b);
  CHECK((f.reconstruct() - b).norm() <= 1e-10 * b.norm());
  CHECK(f.jitter() == 0.0);
  CHECK(f.dim() == 12);
}

TEST_CASE("spd solve: identity, diagonal, and residual property") {
  vbcp::Rng rng(12);
  const auto fid = vbcp::SpdFactor::factorize(Matrix::Identity(4, 4));
  const Vector rhs = oracle::random_vector(rng, 4);
  CHECK((fid.solve(rhs) - rhs).cwiseAbs().maxCoeff() == 0.0);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  d(1, 1) = 4.0;
  Vector r2(2);
  r2 << 2, 4;
  CHECK((vbcp::SpdFactor::factorize(d).solve(r2) - Vector::Ones(2))
            .cwiseAbs()
            .maxCoeff() < 1e-15);

  const Matrix b = oracle::random_spd(rng, 10);
  const auto f = vbcp::SpdFactor::factorize(b);
  const Vector y = oracle::random_vector(rng, 10);
  const Vector x = f.solve(y);
  CHECK((b * x - y).norm() <= 1e-10 * y.norm());

  // matrix right-hand side, and the explicit inverse
  const Matrix ym = oracle::random_matrix(rng, 10, 3);
  CHECK((b * f.solve(ym) - ym).norm() <= 1e-10 * ym.norm());
  const Matrix inv = f.inverse();
  CHECK((b * inv - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((inv - inv.transpose()).cwiseAbs().maxCoeff() == 0.0);

  const Vector short_rhs = Vector::Ones(3);
  CHECK_THROWS_AS(f.solve(short_rhs), vbcp::ValidationError);
}

TEST_CASE("spd jitter path recovers nearly-PSD inputs and rejects indefinite ones") {
  // Exact zero pivot: plain Cholesky fails deterministically, jitter rescues.
  Matrix singular = Matrix::Identity(3, 3);
  singular(2, 2) = 0.0;
  const auto fz = vbcp::SpdFactor::factorize(singular);
  CHECK(fz.jitter() > 0.0);
  CHECK((fz.reconstruct() - singular).norm() <=
        1e-8 * (singular.norm() + 1.0));

  // Rank-deficient Gram matrix: PSD but singular; must factor within the
  // jitter policy either way.
  vbcp::Rng rng(13);
  const Matrix m = oracle::random_matrix(rng, 2, 6);
  const Matrix psd = m.transpose() * m;  // rank 2 of 6
  const auto f = vbcp::SpdFactor::factorize(psd);
  CHECK((f.reconstruct() - psd).norm() <= 1e-8 * (psd.norm() + 1.0));

  Matrix indef = Matrix::Identity(3, 3);
  indef(1, 1) = -5.0;
  CHECK_THROWS_AS(vbcp::SpdFactor::factorize(indef), vbcp::NumericalError);
  try {
    vbcp::SpdFactor::factorize(indef);
  } catch (const vbcp::NumericalError& e) {
    // the failing leading-minor index is part of the message
    CHECK(std::string(e.what()).find("minor") != std::string::npos);
  }
}
