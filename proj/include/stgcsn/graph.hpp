#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace stgcsn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Undirected, unweighted-or-weighted graph stored as a dense adjacency.
///
/// Construction validates the invariants: square, symmetric, nonnegative,
/// zero diagonal. Isolated vertices are allowed in the graph itself but are
/// rejected by lazy_random_walk().
class Graph {
 public:
  explicit Graph(Matrix adjacency);

  static Graph from_edges(std::size_t n_vertices,
                          std::span<const std::pair<int, int>> edges);

  std::size_t size() const { return static_cast<std::size_t>(adjacency_.rows()); }
  const Matrix& adjacency() const { return adjacency_; }
  Vector degrees() const { return adjacency_.rowwise().sum(); }

 private:
  Matrix adjacency_;
};

/// Path graph on `t` vertices (frames connected sequentially).
Graph line_graph(int t);

/// The 21-joint hand skeleton: wrist (0) to five MCP joints, then
/// MCP-PIP-DIP-TIP chains. Joint order follows the FPHA annotation layout.
std::vector<std::pair<int, int>> hand_skeleton_edges();
Graph hand_skeleton_graph();

/// Reads "i j" pairs, one per line; blank lines and '#' comments skipped.
Graph load_edge_list(const std::string& path, std::size_t n_vertices);

/// A row-stochastic shift matrix together with its dyadic powers
/// powers()[k] = P^(2^k), k = 0..max_scale().
class MarkovShift {
 public:
  explicit MarkovShift(Matrix p);

  const Matrix& matrix() const { return powers_.front(); }
  std::span<const Matrix> powers() const { return powers_; }
  int max_scale() const { return static_cast<int>(powers_.size()) - 1; }
  std::size_t size() const { return static_cast<std::size_t>(matrix().rows()); }

  friend MarkovShift dyadic_powers(MarkovShift shift, int j_max);

 private:
  std::vector<Matrix> powers_;
};

/// P = (I + D^-1 A) / 2. Throws IsolatedVertexError on a zero-degree vertex.
MarkovShift lazy_random_walk(const Graph& g);

/// Populates P^(2^k) for k = 0..j_max by repeated squaring.
MarkovShift dyadic_powers(MarkovShift shift, int j_max);

/// [P, P^2, P^4, ..., P^(2^j_max)] via j_max squarings.
std::vector<Matrix> square_chain(const Matrix& p, int j_max);

/// Channels x rows (spatial vertices) x cols (time steps).
class STSignal {
 public:
  STSignal() = default;
  explicit STSignal(std::vector<Matrix> channels);

  static STSignal zeros(std::size_t channels, std::size_t rows, std::size_t cols);

  std::size_t channels() const { return data_.size(); }
  std::size_t rows() const { return data_.empty() ? 0 : static_cast<std::size_t>(data_[0].rows()); }
  std::size_t cols() const { return data_.empty() ? 0 : static_cast<std::size_t>(data_[0].cols()); }

  Matrix& operator[](std::size_t c) { return data_[c]; }
  const Matrix& operator[](std::size_t c) const { return data_[c]; }

  std::span<const Matrix> data() const { return data_; }

  bool same_shape(const STSignal& other) const {
    return channels() == other.channels() && rows() == other.rows() && cols() == other.cols();
  }

 private:
  std::vector<Matrix> data_;
};

double frobenius_norm(const Matrix& m);
/// Norm over all channels jointly.
double frobenius_norm(const STSignal& z);

}  // namespace stgcsn
