#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "stgcsn/graph.hpp"
#include "stgcsn/scattering.hpp"

namespace stgcsn {

/// Which node families feed the classifier.
///   full           fixed tree + complementary (I - H') nodes
///   fixed_only     pruned scattering tree alone
///   trainable_only root + complementary nodes
///   no_complement  fixed tree + trainable nodes using H' instead of I - H'
enum class Variant { full, fixed_only, trainable_only, no_complement };

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
inline bool has_trainable_nodes(Variant v) { return v != Variant::fixed_only; }

/// Row-wise softmax with per-row max subtraction.
Matrix row_softmax(const Matrix& m);

/// Adjoint of row_softmax: given P = row_softmax(M) and dL/dP, returns dL/dM.
Matrix row_softmax_backward(const Matrix& p, const Matrix& p_bar);

/// m = log(p + floor), so that row_softmax(m) reproduces p.
Matrix init_agent_from_markov(const Matrix& p, double floor = 1e-12);

/// P' = row_softmax(M) with dyadic powers P'^(2^k), k = 0..max_scale().
class TrainableShift {
 public:
  static TrainableShift from_agent(const Matrix& agent, int j_max);

  const Matrix& matrix() const { return powers_.front(); }
  std::span<const Matrix> powers() const { return powers_; }
  int max_scale() const { return static_cast<int>(powers_.size()) - 1; }

 private:
  std::vector<Matrix> powers_;
};

/// (I - H_j) for the dyadic wavelet at scale j of `powers`.
Matrix complement_filter(std::span<const Matrix> powers, int j);
/// H_j itself, from the same power chain.
Matrix wavelet_filter(std::span<const Matrix> powers, int j);

struct AgentPair {
  Matrix spatial;   // N x N
  Matrix temporal;  // T x T
};

/// One agent pair per preserved parent that has preserved children.
class AgentParams {
 public:
  static AgentParams initialize(const PruneMask& mask, const ScatterBanks& banks,
                                double floor = 1e-12);

  std::map<TreePath, AgentPair>& by_parent() { return agents_; }
  const std::map<TreePath, AgentPair>& by_parent() const { return agents_; }

  /// Throws ConfigError when the parent has no agent.
  const AgentPair& at(const TreePath& parent) const;
  std::size_t parameter_count() const;
  std::size_t size() const { return agents_.size(); }

 private:
  std::map<TreePath, AgentPair> agents_;
};

/// Preserved paths with at least one preserved child, in path order.
std::vector<TreePath> qualifying_parents(const PruneMask& mask);

/// abs(a * z_c * b^T) per channel.
STSignal filter_abs(const Matrix& a, const Matrix& b, const STSignal& z);

/// abs((I - H_j1(P'_s)) z (I - G_j2(P'_t))^T), per channel.
STSignal complementary_node(const STSignal& parent, ScalePair scales, const TrainableShift& spatial,
                            const TrainableShift& temporal);

/// abs(H_j1(P'_s) z G_j2(P'_t)^T); the no_complement ablation.
STSignal mirrored_node(const STSignal& parent, ScalePair scales, const TrainableShift& spatial,
                       const TrainableShift& temporal);

struct GcsnNodes {
  std::vector<TreeNode> fixed;
  std::vector<TreeNode> trainable;

  std::size_t total() const { return fixed.size() + trainable.size(); }
  std::vector<TreeNode> merged() const;
};

GcsnNodes gcsn_forward(const STSignal& x, const PruneMask& mask, const ScatterBanks& banks,
                       const AgentParams& agents, Variant variant);

/// Node layout of the concatenated feature for a variant: fixed paths then
/// trainable paths, each in path order.
std::vector<std::pair<NodeKind, TreePath>> feature_layout(const PruneMask& mask, Variant variant);

// ---- checkpoint tensors -----------------------------------------------------

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<double> values;  // row-major

  static NamedTensor from_matrix(std::string name, const Matrix& m);
  static NamedTensor from_vector(std::string name, const Vector& v);
  Matrix to_matrix() const;
  Vector to_vector() const;
};

/// "STGC1", u32 count, then per tensor: u32 name length, name bytes,
/// u32 rank, u32 dims, little-endian f64 payload.
void write_checkpoint(std::ostream& out, std::span<const NamedTensor> tensors);
std::vector<NamedTensor> read_checkpoint(std::istream& in);

}  // namespace stgcsn
