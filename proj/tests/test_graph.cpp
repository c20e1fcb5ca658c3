#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "generators.hpp"
#include "oracle.hpp"
#include "stgcsn/error.hpp"
#include "stgcsn/graph.hpp"

using namespace stgcsn;

TEST_CASE("line_graph small cases") {
  Matrix a2(2, 2);
  a2 << 0, 1, 1, 0;
  CHECK(line_graph(2).adjacency() == a2);
  Matrix a3(3, 3);
  a3 << 0, 1, 0, 1, 0, 1, 0, 1, 0;
  CHECK(line_graph(3).adjacency() == a3);
}

TEST_CASE("line_graph of 67 frames has 132 nonzeros on the off-diagonals") {
  const auto g = line_graph(67);
  int nnz = 0;
  for (int i = 0; i < 67; ++i)
    for (int j = 0; j < 67; ++j)
      if (g.adjacency()(i, j) != 0.0) {
        ++nnz;
        CHECK(std::abs(i - j) == 1);
      }
  CHECK(nnz == 2 * (67 - 1));
}

TEST_CASE("line_graph rejects fewer than two frames") {
  CHECK_THROWS_AS(line_graph(1), InvalidSizeError);
  CHECK_THROWS_AS(line_graph(0), InvalidSizeError);
}

TEST_CASE("graph construction validates adjacency") {
  Matrix asym(2, 2);
  asym << 0, 1, 0, 0;
  CHECK_THROWS_AS(Graph{asym}, PreconditionError);
  Matrix loop(2, 2);
  loop << 1, 1, 1, 0;
  CHECK_THROWS_AS(Graph{loop}, PreconditionError);
  Matrix neg(2, 2);
  neg << 0, -1, -1, 0;
  CHECK_THROWS_AS(Graph{neg}, PreconditionError);
  CHECK_THROWS_AS(Graph{Matrix(2, 3)}, ShapeError);
}

TEST_CASE("lazy_random_walk hand-computed cases") {
  Matrix k2(2, 2);
  k2 << 0.5, 0.5, 0.5, 0.5;
  CHECK((lazy_random_walk(line_graph(2)).matrix() - k2).cwiseAbs().maxCoeff() == 0.0);
  Matrix p3(3, 3);
  p3 << 0.5, 0.5, 0, 0.25, 0.5, 0.25, 0, 0.5, 0.5;
  CHECK((lazy_random_walk(line_graph(3)).matrix() - p3).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("lazy_random_walk rejects isolated vertices") {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 1) = a(1, 0) = 1;
  CHECK_THROWS_AS(lazy_random_walk(Graph{a}), IsolatedVertexError);
}

TEST_CASE("lazy_random_walk matches the plain-loop transcription and is row-stochastic") {
  gen::Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = gen::uniform_int(rng, 2, 9);
    const auto g = gen::connected_graph(n, rng);
    const auto p = lazy_random_walk(g).matrix();
    CHECK(oracle::max_diff(oracle::lazy_walk(oracle::from(g.adjacency())), p) < 1e-15);
    for (int i = 0; i < n; ++i) {
      CHECK(std::abs(p.row(i).sum() - 1.0) < 1e-12);
      CHECK(p(i, i) >= 0.5);
    }
  }
}

TEST_CASE("lazy_random_walk eigenvalues are real and within [0, 1]") {
  gen::Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = gen::uniform_int(rng, 2, 8);
    const auto p = lazy_random_walk(gen::connected_graph(n, rng)).matrix();
    const Eigen::EigenSolver<Matrix> es(p);
    for (int i = 0; i < n; ++i) {
      const auto ev = es.eigenvalues()(i);
      CHECK(std::abs(ev.imag()) < 1e-8);
      CHECK(ev.real() >= -1e-8);
      CHECK(ev.real() <= 1.0 + 1e-8);
    }
  }
}

TEST_CASE("dyadic_powers special cases") {
  Matrix k2(2, 2);
  k2 << 0.5, 0.5, 0.5, 0.5;
  const auto idem = dyadic_powers(MarkovShift{k2}, 3);
  REQUIRE(idem.powers().size() == 4);
  for (const auto& q : idem.powers()) CHECK((q - k2).cwiseAbs().maxCoeff() < 1e-16);

  const auto id = dyadic_powers(MarkovShift{Matrix::Identity(4, 4)}, 5);
  for (const auto& q : id.powers()) CHECK(q == Matrix::Identity(4, 4));

  const auto path = dyadic_powers(lazy_random_walk(line_graph(3)), 20);
  const Matrix& q20 = path.powers()[20];
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(q20(i, 0) - 0.25) < 1e-9);
    CHECK(std::abs(q20(i, 1) - 0.5) < 1e-9);
    CHECK(std::abs(q20(i, 2) - 0.25) < 1e-9);
  }
  CHECK_THROWS_AS(dyadic_powers(lazy_random_walk(line_graph(3)), 0), PreconditionError);
}

TEST_CASE("repeated squaring equals naive multiplication") {
  gen::Rng rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen::uniform_int(rng, 2, 4);
    const auto p = lazy_random_walk(gen::connected_graph(n, rng));
    const auto shift = dyadic_powers(p, 4);
    const auto dp = oracle::from(p.matrix());
    for (int j = 0; j <= 4; ++j) {
      CHECK(oracle::max_diff(oracle::power(dp, 1L << j), shift.powers()[static_cast<std::size_t>(j)]) <
            1e-10);
    }
  }
}

TEST_CASE("dyadic powers stay row-stochastic through deep chains") {
  gen::Rng rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const auto shift = dyadic_powers(lazy_random_walk(gen::connected_graph(gen::uniform_int(rng, 2, 21), rng)), 20);
    for (const auto& q : shift.powers()) {
      CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    }
    for (std::size_t k = 0; k + 1 < shift.powers().size(); ++k) {
      const Matrix sq = shift.powers()[k] * shift.powers()[k];
      CHECK((sq - shift.powers()[k + 1]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("MarkovShift rejects non-stochastic matrices") {
  Matrix bad(2, 2);
  bad << 0.6, 0.6, 0.5, 0.5;
  CHECK_THROWS_AS(MarkovShift{bad}, PreconditionError);
  Matrix neg(2, 2);
  neg << 1.5, -0.5, 0.5, 0.5;
  CHECK_THROWS_AS(MarkovShift{neg}, PreconditionError);
}

TEST_CASE("frobenius_norm") {
  CHECK(frobenius_norm(STSignal::zeros(3, 4, 5)) == 0.0);
  Matrix m(1, 2);
  m << 3, 4;
  CHECK(frobenius_norm(m) == 5.0);
  gen::Rng rng(15);
  const auto z = gen::signal(2, 4, 5, rng);
  CHECK(std::abs(frobenius_norm(z) - oracle::frobenius(oracle::from(z))) < 1e-12);
}

TEST_CASE("hand skeleton has 21 joints and 20 bones forming a tree") {
  const auto e = hand_skeleton_edges();
  CHECK(e.size() == 20);
  const auto g = hand_skeleton_graph();
  CHECK(g.size() == 21);
  CHECK(g.degrees()(0) == 5.0);
  CHECK_NOTHROW(lazy_random_walk(g));
}

TEST_CASE("load_edge_list reads pairs and skips comments") {
  const auto path = std::filesystem::temp_directory_path() / "stgcsn_edges_test.txt";
  {
    std::ofstream out(path);
    out << "# triangle\n0 1\n\n1 2\n2 0\n";
  }
  const auto g = load_edge_list(path.string(), 3);
  CHECK(g.degrees() == Vector::Constant(3, 2.0));
  {
    std::ofstream out(path);
    out << "0 7\n";
  }
  CHECK_THROWS_AS(load_edge_list(path.string(), 3), DataError);
  std::filesystem::remove(path);
}
