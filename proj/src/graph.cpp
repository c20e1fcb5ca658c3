#include "stgcsn/graph.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "stgcsn/error.hpp"

namespace stgcsn {

namespace {

constexpr double kStochasticTol = 1e-12;

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw ShapeError(std::string(what) + ": expected a nonempty square matrix, got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

Graph::Graph(Matrix adjacency) : adjacency_(std::move(adjacency)) {
  require_square(adjacency_, "Graph");
  const auto n = adjacency_.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (adjacency_(i, i) != 0.0) {
      throw PreconditionError("Graph: nonzero diagonal at vertex " + std::to_string(i));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const double a = adjacency_(i, j);
      if (!std::isfinite(a) || a < 0.0) {
        throw PreconditionError("Graph: adjacency entries must be finite and >= 0");
      }
      if (a != adjacency_(j, i)) {
        throw PreconditionError("Graph: adjacency is not symmetric at (" + std::to_string(i) +
                                "," + std::to_string(j) + ")");
      }
    }
  }
}

Graph Graph::from_edges(std::size_t n_vertices, std::span<const std::pair<int, int>> edges) {
  if (n_vertices == 0) throw InvalidSizeError("Graph::from_edges: empty vertex set");
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(n_vertices),
                          static_cast<Eigen::Index>(n_vertices));
  for (const auto& [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= n_vertices ||
        static_cast<std::size_t>(v) >= n_vertices) {
      throw PreconditionError("Graph::from_edges: edge (" + std::to_string(u) + "," +
                              std::to_string(v) + ") out of range");
    }
    if (u == v) throw PreconditionError("Graph::from_edges: self-loop at " + std::to_string(u));
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return Graph(std::move(a));
}

Graph line_graph(int t) {
  if (t < 2) {
    throw InvalidSizeError("line_graph: need at least 2 temporal vertices, got " +
                           std::to_string(t));
  }
  Matrix a = Matrix::Zero(t, t);
  for (int i = 0; i + 1 < t; ++i) {
    a(i, i + 1) = 1.0;
    a(i + 1, i) = 1.0;
  }
  return Graph(std::move(a));
}

std::vector<std::pair<int, int>> hand_skeleton_edges() {
  std::vector<std::pair<int, int>> edges;
  // Joint layout: 0 wrist, 1..5 MCP (thumb..pinky), then for finger f the
  // PIP, DIP, TIP joints are 6+3f, 7+3f, 8+3f.
  for (int f = 0; f < 5; ++f) {
    const int mcp = 1 + f;
    const int pip = 6 + 3 * f;
    edges.emplace_back(0, mcp);
    edges.emplace_back(mcp, pip);
    edges.emplace_back(pip, pip + 1);
    edges.emplace_back(pip + 1, pip + 2);
  }
  return edges;
}

Graph hand_skeleton_graph() {
  const auto edges = hand_skeleton_edges();
  return Graph::from_edges(21, edges);
}

Graph load_edge_list(const std::string& path, std::size_t n_vertices) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list: " + path);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int u = 0;
    int v = 0;
    if (!(ss >> u)) continue;
    std::string rest;
    if (!(ss >> v) || (ss >> rest)) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected two vertex indices");
    }
    const auto n = static_cast<int>(n_vertices);
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": vertex index out of range");
    }
    edges.emplace_back(u, v);
  }
  return Graph::from_edges(n_vertices, edges);
}

MarkovShift::MarkovShift(Matrix p) {
  require_square(p, "MarkovShift");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double v = p(i, j);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw PreconditionError("MarkovShift: entry outside [0,1] at row " + std::to_string(i));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > kStochasticTol) {
      throw PreconditionError("MarkovShift: row " + std::to_string(i) + " sums to " +
                              std::to_string(sum));
    }
  }
  powers_.push_back(std::move(p));
}

MarkovShift lazy_random_walk(const Graph& g) {
  const Vector deg = g.degrees();
  const auto n = static_cast<Eigen::Index>(g.size());
  Matrix p(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(deg(i) > 0.0)) {
      throw IsolatedVertexError("lazy_random_walk: vertex " + std::to_string(i) +
                                " has zero degree");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      p(i, j) = 0.5 * g.adjacency()(i, j) / deg(i);
    }
    p(i, i) += 0.5;
  }
  return MarkovShift(std::move(p));
}

std::vector<Matrix> square_chain(const Matrix& p, int j_max) {
  if (j_max < 0) throw PreconditionError("square_chain: negative scale count");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(j_max) + 1);
  out.push_back(p);
  for (int k = 0; k < j_max; ++k) {
    Matrix next = out.back() * out.back();
    out.push_back(std::move(next));
  }
  return out;
}

MarkovShift dyadic_powers(MarkovShift shift, int j_max) {
  if (j_max < 1) throw PreconditionError("dyadic_powers: j_max must be >= 1");
  shift.powers_ = square_chain(shift.matrix(), j_max);
  return shift;
}

STSignal::STSignal(std::vector<Matrix> channels) : data_(std::move(channels)) {
  for (const auto& c : data_) {
    if (c.rows() != data_.front().rows() || c.cols() != data_.front().cols()) {
      throw ShapeError("STSignal: channels differ in shape");
    }
  }
}

STSignal STSignal::zeros(std::size_t channels, std::size_t rows, std::size_t cols) {
  std::vector<Matrix> data(channels, Matrix::Zero(static_cast<Eigen::Index>(rows),
                                                  static_cast<Eigen::Index>(cols)));
  return STSignal(std::move(data));
}

double frobenius_norm(const Matrix& m) {
  double sum = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) sum += m(i, j) * m(i, j);
  }
  return std::sqrt(sum);
}

double frobenius_norm(const STSignal& z) {
  double sum = 0.0;
  for (const auto& m : z.data()) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) sum += m(i, j) * m(i, j);
    }
  }
  return std::sqrt(sum);
}

}  // namespace stgcsn
