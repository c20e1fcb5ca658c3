#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stgcsn/filterbank.hpp"
#include "stgcsn/graph.hpp"

namespace stgcsn {

/// One (spatial scale j1, temporal scale j2) step in a tree path; 1-based.
struct ScalePair {
  int spatial = 1;
  int temporal = 1;
  auto operator<=>(const ScalePair&) const = default;
};

/// Sequence of scale pairs from the root; the empty path is the root.
class TreePath {
 public:
  TreePath() = default;
  explicit TreePath(std::vector<ScalePair> pairs) : pairs_(std::move(pairs)) {}

  bool is_root() const { return pairs_.empty(); }
  std::size_t depth() const { return pairs_.size(); }
  std::span<const ScalePair> pairs() const { return pairs_; }
  const ScalePair& last() const { return pairs_.back(); }

  TreePath parent() const;
  TreePath child(ScalePair step) const;

  /// "(3,2)/(1,5)"; the root is "()".
  std::string to_string() const;
  static TreePath parse(const std::string& text);

  auto operator<=>(const TreePath&) const = default;

 private:
  std::vector<ScalePair> pairs_;
};

/// Spatial and temporal shifts with their wavelet banks.
struct ScatterBanks {
  MarkovShift spatial_shift;
  MarkovShift temporal_shift;
  WaveletBank spatial;
  WaveletBank temporal;

  static ScatterBanks build(const Graph& spatial_graph, const Graph& temporal_graph, int js, int jt);

  int js() const { return spatial.scale_count(); }
  int jt() const { return temporal.scale_count(); }
  std::size_t n_vertices() const { return spatial_shift.size(); }
  std::size_t n_frames() const { return temporal_shift.size(); }
  std::size_t branching() const {
    return static_cast<std::size_t>(js()) * static_cast<std::size_t>(jt());
  }
};

struct ScatteringTree {
  std::map<TreePath, STSignal> nodes;
  int layer_count = 0;
};

/// Parent-closed set of preserved paths (always contains the root).
class PruneMask {
 public:
  PruneMask() : preserved_{TreePath{}} {}
  PruneMask(std::set<TreePath> preserved, double threshold, int layers);

  /// Every path of the full tree.
  static PruneMask full(int js, int jt, int layers);

  const std::set<TreePath>& preserved() const { return preserved_; }
  bool contains(const TreePath& p) const { return preserved_.contains(p); }
  std::size_t size() const { return preserved_.size(); }
  double threshold() const { return threshold_; }
  int layers() const { return layers_; }

  /// Preserved count per depth 0..layers().
  std::vector<std::size_t> layer_counts() const;
  bool has_preserved_child(const TreePath& p) const;

  /// One path per line, root included as "()".
  void write(std::ostream& out) const;
  static PruneMask read(std::istream& in, double threshold = 0.0);

 private:
  std::set<TreePath> preserved_;
  double threshold_ = 0.0;
  int layers_ = 0;
};

inline constexpr std::size_t kDefaultNodeCap = 20000;

/// sum_{l=0..layers} (js*jt)^l; saturates at SIZE_MAX.
std::size_t full_tree_size(int js, int jt, int layers);

/// All js*jt children abs(H_j1 z G_j2^T), ordered by (j1, j2).
std::vector<std::pair<ScalePair, STSignal>> scatter_children(const STSignal& z,
                                                             const ScatterBanks& banks);

ScatteringTree build_full_tree(const STSignal& x, const ScatterBanks& banks, int layers,
                               std::size_t node_cap = kDefaultNodeCap);

/// Mean energy-ratio pruning over a training set. A child survives iff its
/// parent survives and mean(||Z_c|| / ||Z_p||) >= tau.
PruneMask compute_prune_mask(std::span<const STSignal> training, const ScatterBanks& banks,
                             int layers, double tau);

ScatteringTree forward_pruned(const STSignal& x, const PruneMask& mask, const ScatterBanks& banks);

enum class NodeKind { fixed = 0, trainable = 1 };

struct TreeNode {
  NodeKind kind = NodeKind::fixed;
  TreePath path;
  STSignal signal;
};

/// Mean over the time axis; entry c*N + n.
Vector temporal_mean_pool(const STSignal& z);

/// Pools every node over time and concatenates them, fixed nodes first then
/// trainable ones, each group in lexicographic path order.
Vector assemble_features(std::span<const TreeNode> nodes);

/// Feature cache record: "STGF1", u32 sample index, u32 length, f64 values.
void write_feature_record(std::ostream& out, std::uint32_t index, std::span<const double> values);
std::vector<std::pair<std::uint32_t, std::vector<double>>> read_feature_records(std::istream& in);

/// Sidecar listing the feature layout: "<kind>\t<path>" per node.
void write_feature_manifest(std::ostream& out, std::span<const std::pair<NodeKind, TreePath>> layout);

}  // namespace stgcsn
