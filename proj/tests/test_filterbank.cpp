#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "generators.hpp"
#include "oracle.hpp"
#include "stgcsn/error.hpp"
#include "stgcsn/filterbank.hpp"

using namespace stgcsn;

namespace {

std::vector<double> sorted_real_eigenvalues(const Matrix& m) {
  const Eigen::EigenSolver<Matrix> es(m);
  std::vector<double> v;
  for (Eigen::Index i = 0; i < m.rows(); ++i) v.push_back(es.eigenvalues()(i).real());
  std::sort(v.begin(), v.end());
  return v;
}

MarkovShift random_shift(gen::Rng& rng, int n, int j_max) {
  return dyadic_powers(lazy_random_walk(gen::connected_graph(n, rng)), j_max);
}

}  // namespace

TEST_CASE("idempotent shift gives all-zero wavelets") {
  Matrix k2(2, 2);
  k2 << 0.5, 0.5, 0.5, 0.5;
  const auto bank = build_wavelet_bank(dyadic_powers(MarkovShift{k2}, 4), 4);
  CHECK(bank.scale_count() == 4);
  for (const auto& h : bank.filters()) CHECK(h.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("bank sizes at the reference scales") {
  const auto s = build_wavelet_bank(dyadic_powers(lazy_random_walk(line_graph(21)), 20), 20);
  const auto t = build_wavelet_bank(dyadic_powers(lazy_random_walk(line_graph(67)), 5), 5);
  CHECK(s.scale_count() == 20);
  CHECK(t.scale_count() == 5);
}

TEST_CASE("bank needs enough powers") {
  const auto shift = dyadic_powers(lazy_random_walk(line_graph(4)), 2);
  CHECK_THROWS_AS(build_wavelet_bank(shift, 3), PreconditionError);
}

TEST_CASE("wavelets are Q_{j-1} - Q_j and match naive powers") {
  gen::Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen::uniform_int(rng, 2, 5);
    const auto shift = random_shift(rng, n, 4);
    const auto bank = build_wavelet_bank(shift, 4);
    const auto dp = oracle::from(shift.matrix());
    for (int j = 1; j <= 4; ++j) CHECK(oracle::max_diff(oracle::wavelet(dp, j), bank.filter(j)) < 1e-10);
  }
}

TEST_CASE("wavelet rows sum to zero, spectrum in [0, 1/4], and scales telescope") {
  gen::Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = gen::uniform_int(rng, 2, 8);
    const int j_max = gen::uniform_int(rng, 1, 8);
    const auto shift = random_shift(rng, n, j_max);
    const auto bank = build_wavelet_bank(shift, j_max);
    Matrix sum = Matrix::Zero(n, n);
    for (const auto& h : bank.filters()) {
      CHECK(h.rowwise().sum().cwiseAbs().maxCoeff() < 1e-10);
      const auto ev = sorted_real_eigenvalues(h);
      CHECK(ev.front() >= -1e-9);
      CHECK(ev.back() <= 0.25 + 1e-9);
      sum += h;
    }
    const Matrix tel = shift.matrix() - shift.powers()[static_cast<std::size_t>(j_max)];
    CHECK((sum - tel).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("spectral mapping of each wavelet") {
  gen::Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = gen::uniform_int(rng, 2, 8);
    const auto shift = random_shift(rng, n, 5);
    const auto bank = build_wavelet_bank(shift, 5);
    const auto lambda = sorted_real_eigenvalues(shift.matrix());
    for (int j = 1; j <= 5; ++j) {
      std::vector<double> expect;
      for (double l : lambda) expect.push_back(std::pow(l, 1 << (j - 1)) - std::pow(l, 1 << j));
      std::sort(expect.begin(), expect.end());
      const auto got = sorted_real_eigenvalues(bank.filter(j));
      for (int i = 0; i < n; ++i) CHECK(std::abs(got[static_cast<std::size_t>(i)] - expect[static_cast<std::size_t>(i)]) < 1e-7);
    }
  }
}

TEST_CASE("apply_st_filter identity and zero") {
  gen::Rng rng(24);
  const auto z = gen::signal(3, 4, 5, rng);
  const auto same = apply_st_filter(Matrix::Identity(4, 4), Matrix::Identity(5, 5), z);
  for (std::size_t c = 0; c < 3; ++c) CHECK(same[c] == z[c]);
  const auto zero = apply_st_filter(gen::matrix(4, 4, rng), gen::matrix(5, 5, rng), STSignal::zeros(3, 4, 5));
  for (std::size_t c = 0; c < 3; ++c) CHECK(zero[c].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply_st_filter matches the triple loop") {
  gen::Rng rng(25);
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = gen::matrix(4, 4, rng), g = gen::matrix(5, 5, rng);
    const auto z = gen::signal(2, 4, 5, rng);
    const auto y = apply_st_filter(h, g, z);
    // the oracle applies abs; compare against |y|
    const auto ref = oracle::filter_abs(oracle::from(h), oracle::from(g), oracle::from(z));
    for (std::size_t c = 0; c < 2; ++c) CHECK(oracle::max_diff(ref[c], y[c].cwiseAbs()) < 1e-12);
    Matrix direct = Matrix::Zero(4, 5);
    for (int i = 0; i < 4; ++i)
      for (int t = 0; t < 5; ++t)
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 5; ++b) direct(i, t) += h(i, a) * z[0](a, b) * g(t, b);
    CHECK((direct - y[0]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("apply_st_filter is linear") {
  gen::Rng rng(26);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = gen::matrix(4, 4, rng), g = gen::matrix(6, 6, rng);
    const auto z1 = gen::signal(3, 4, 6, rng), z2 = gen::signal(3, 4, 6, rng);
    const double alpha = std::normal_distribution<double>(0, 2)(rng);
    std::vector<Matrix> mix;
    for (std::size_t c = 0; c < 3; ++c) mix.push_back(alpha * z1[c] + z2[c]);
    const auto lhs = apply_st_filter(h, g, STSignal(mix));
    const auto f1 = apply_st_filter(h, g, z1), f2 = apply_st_filter(h, g, z2);
    for (std::size_t c = 0; c < 3; ++c) CHECK((lhs[c] - (alpha * f1[c] + f2[c])).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("apply_st_filter shape errors") {
  const auto z = STSignal::zeros(1, 4, 5);
  CHECK_THROWS_AS(apply_st_filter(Matrix::Identity(3, 3), Matrix::Identity(5, 5), z), ShapeError);
  CHECK_THROWS_AS(apply_st_filter(Matrix::Identity(4, 4), Matrix::Identity(4, 4), z), ShapeError);
}

TEST_CASE("polynomial filters") {
  gen::Rng rng(27);
  const auto shift_s = random_shift(rng, 5, 3);
  const auto shift_t = dyadic_powers(lazy_random_walk(line_graph(6)), 3);
  const auto z = gen::signal(2, 5, 6, rng);

  SUBCASE("degree zero is the identity") {
    const auto y = apply_polynomial_filter({{1.0}}, {{1.0}}, shift_s.matrix(), shift_t.matrix(), z);
    for (std::size_t c = 0; c < 2; ++c) CHECK((y[c] - z[c]).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("wavelet coefficients reproduce the bank") {
    const auto bank = build_wavelet_bank(shift_s, 3);
    for (int j = 1; j <= 3; ++j) {
      PolynomialFilter p{std::vector<double>(static_cast<std::size_t>((1 << j) + 1), 0.0)};
      p.coefficients[static_cast<std::size_t>(1 << (j - 1))] = 1.0;
      p.coefficients[static_cast<std::size_t>(1 << j)] = -1.0;
      const auto y = apply_polynomial_filter(p, {{1.0}}, shift_s.matrix(), shift_t.matrix(), z);
      const auto ref = apply_st_filter(bank.filter(j), Matrix::Identity(6, 6), z);
      for (std::size_t c = 0; c < 2; ++c) CHECK((y[c] - ref[c]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("first-order term on a basis signal picks a column of the shift") {
    auto e = STSignal::zeros(1, 5, 6);
    e[0].row(2).setOnes();
    const auto y = apply_polynomial_filter({{0.0, 1.0}}, {{1.0}}, shift_s.matrix(), shift_t.matrix(), e);
    for (int t = 0; t < 6; ++t) CHECK((y[0].col(t) - shift_s.matrix().col(2)).cwiseAbs().maxCoeff() < 1e-15);
  }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(apply_polynomial_filter({{1.0}}, {{1.0}}, shift_t.matrix(), shift_t.matrix(), z), ShapeError);
    CHECK_THROWS_AS(polynomial_matrix({{}}, shift_s.matrix()), PreconditionError);
  }
}
