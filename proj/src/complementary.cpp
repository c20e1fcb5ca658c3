#include "stgcsn/complementary.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "binary_io.hpp"
#include "stgcsn/error.hpp"

namespace stgcsn {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::fixed_only: return "fixed_only";
    case Variant::trainable_only: return "trainable_only";
    case Variant::no_complement: return "no_complement";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "fixed_only") return Variant::fixed_only;
  if (name == "trainable_only") return Variant::trainable_only;
  if (name == "no_complement") return Variant::no_complement;
  throw ConfigError("unknown variant '" + name +
                    "' (expected full, fixed_only, trainable_only, no_complement)");
}

Matrix row_softmax(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double mx = m.row(i).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out(i, j) = std::exp(m(i, j) - mx);
      sum += out(i, j);
    }
    out.row(i) /= sum;
  }
  return out;
}

Matrix row_softmax_backward(const Matrix& p, const Matrix& p_bar) {
  if (p.rows() != p_bar.rows() || p.cols() != p_bar.cols()) {
    throw ShapeError("row_softmax_backward: adjoint shape does not match");
  }
  Matrix m_bar(p.rows(), p.cols());
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double dot = p_bar.row(i).dot(p.row(i));
    m_bar.row(i) = ((p_bar.row(i).array() - dot) * p.row(i).array()).matrix();
  }
  return m_bar;
}

Matrix init_agent_from_markov(const Matrix& p, double floor) {
  if (!(floor > 0.0)) throw PreconditionError("init_agent_from_markov: floor must be > 0");
  return (p.array() + floor).log().matrix();
}

TrainableShift TrainableShift::from_agent(const Matrix& agent, int j_max) {
  if (agent.rows() != agent.cols()) throw ShapeError("TrainableShift: agent matrix not square");
  TrainableShift s;
  s.powers_ = square_chain(row_softmax(agent), j_max);
  return s;
}

Matrix wavelet_filter(std::span<const Matrix> powers, int j) {
  if (j < 1 || static_cast<std::size_t>(j) >= powers.size()) {
    throw PreconditionError("wavelet scale " + std::to_string(j) + " not available");
  }
  return powers[static_cast<std::size_t>(j - 1)] - powers[static_cast<std::size_t>(j)];
}

Matrix complement_filter(std::span<const Matrix> powers, int j) {
  Matrix h = wavelet_filter(powers, j);
  return Matrix::Identity(h.rows(), h.cols()) - h;
}

const AgentPair& AgentParams::at(const TreePath& parent) const {
  auto it = agents_.find(parent);
  if (it == agents_.end()) {
    throw ConfigError("no agent parameters for parent " + parent.to_string());
  }
  return it->second;
}

std::size_t AgentParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [path, a] : agents_) {
    n += static_cast<std::size_t>(a.spatial.size() + a.temporal.size());
  }
  return n;
}

std::vector<TreePath> qualifying_parents(const PruneMask& mask) {
  std::vector<TreePath> out;
  for (const auto& p : mask.preserved()) {
    if (mask.has_preserved_child(p)) out.push_back(p);
  }
  return out;
}

AgentParams AgentParams::initialize(const PruneMask& mask, const ScatterBanks& banks, double floor) {
  AgentParams a;
  const Matrix ms = init_agent_from_markov(banks.spatial_shift.matrix(), floor);
  const Matrix mt = init_agent_from_markov(banks.temporal_shift.matrix(), floor);
  for (const auto& p : qualifying_parents(mask)) a.agents_.emplace(p, AgentPair{ms, mt});
  return a;
}

STSignal filter_abs(const Matrix& a, const Matrix& b, const STSignal& z) {
  if (static_cast<std::size_t>(a.cols()) != z.rows() || static_cast<std::size_t>(b.cols()) != z.cols()) {
    throw ShapeError("trainable node: filter shape does not match parent signal");
  }
  std::vector<Matrix> out;
  out.reserve(z.channels());
  for (const auto& zc : z.data()) {
    Matrix az = a * zc;
    out.push_back((az * b.transpose()).cwiseAbs());
  }
  return STSignal(std::move(out));
}

STSignal complementary_node(const STSignal& parent, ScalePair scales, const TrainableShift& spatial,
                            const TrainableShift& temporal) {
  return filter_abs(complement_filter(spatial.powers(), scales.spatial),
                    complement_filter(temporal.powers(), scales.temporal), parent);
}

STSignal mirrored_node(const STSignal& parent, ScalePair scales, const TrainableShift& spatial,
                       const TrainableShift& temporal) {
  return filter_abs(wavelet_filter(spatial.powers(), scales.spatial),
                    wavelet_filter(temporal.powers(), scales.temporal), parent);
}

std::vector<TreeNode> GcsnNodes::merged() const {
  std::vector<TreeNode> out = fixed;
  out.insert(out.end(), trainable.begin(), trainable.end());
  return out;
}

GcsnNodes gcsn_forward(const STSignal& x, const PruneMask& mask, const ScatterBanks& banks,
                       const AgentParams& agents, Variant variant) {
  auto tree = forward_pruned(x, mask, banks);
  GcsnNodes out;
  if (has_trainable_nodes(variant)) {
    std::map<TreePath, std::pair<TrainableShift, TrainableShift>> shifts;
    for (const auto& parent : qualifying_parents(mask)) {
      const auto& a = agents.at(parent);
      if (static_cast<std::size_t>(a.spatial.rows()) != banks.n_vertices() ||
          static_cast<std::size_t>(a.temporal.rows()) != banks.n_frames()) {
        throw ShapeError("agent for " + parent.to_string() + " does not match graph sizes");
      }
      shifts.emplace(parent, std::pair{TrainableShift::from_agent(a.spatial, banks.js()),
                                       TrainableShift::from_agent(a.temporal, banks.jt())});
    }
    for (const auto& [path, signal] : tree.nodes) {
      if (path.is_root()) continue;
      const auto parent = path.parent();
      const auto& [s, t] = shifts.at(parent);
      const auto& z = tree.nodes.at(parent);
      out.trainable.push_back({NodeKind::trainable, path,
                               variant == Variant::no_complement
                                   ? mirrored_node(z, path.last(), s, t)
                                   : complementary_node(z, path.last(), s, t)});
    }
  }
  for (auto& [path, signal] : tree.nodes) {
    if (variant == Variant::trainable_only && !path.is_root()) continue;
    out.fixed.push_back({NodeKind::fixed, path, std::move(signal)});
  }
  return out;
}

std::vector<std::pair<NodeKind, TreePath>> feature_layout(const PruneMask& mask, Variant variant) {
  std::vector<std::pair<NodeKind, TreePath>> out;
  for (const auto& p : mask.preserved()) {
    if (variant == Variant::trainable_only && !p.is_root()) continue;
    out.emplace_back(NodeKind::fixed, p);
  }
  if (has_trainable_nodes(variant)) {
    for (const auto& p : mask.preserved()) {
      if (!p.is_root()) out.emplace_back(NodeKind::trainable, p);
    }
  }
  return out;
}

NamedTensor NamedTensor::from_matrix(std::string name, const Matrix& m) {
  NamedTensor t{std::move(name),
                {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
                {}};
  t.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.values.push_back(m(i, j));
  }
  return t;
}

NamedTensor NamedTensor::from_vector(std::string name, const Vector& v) {
  return NamedTensor{std::move(name), {static_cast<std::uint32_t>(v.size())},
                     std::vector<double>(v.data(), v.data() + v.size())};
}

Matrix NamedTensor::to_matrix() const {
  if (dims.size() != 2) throw DataError("tensor " + name + " is not rank 2");
  Matrix m(dims[0], dims[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = values[k++];
  }
  return m;
}

Vector NamedTensor::to_vector() const {
  if (dims.size() != 1) throw DataError("tensor " + name + " is not rank 1");
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

void write_checkpoint(std::ostream& out, std::span<const NamedTensor> tensors) {
  out.write("STGC1", 5);
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    std::size_t expected = 1;
    for (auto d : t.dims) expected *= d;
    if (expected != t.values.size()) throw ShapeError("tensor " + t.name + ": dims/payload mismatch");
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_u32(out, d);
    for (double v : t.values) detail::put_f64(out, v);
  }
}

std::vector<NamedTensor> read_checkpoint(std::istream& in) {
  detail::expect_magic(in, "STGC1");
  const auto count = detail::get_u32(in);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(detail::get_u32(in));
    if (!in.read(t.name.data(), static_cast<std::streamsize>(t.name.size()))) {
      throw DataError("truncated checkpoint");
    }
    const auto rank = detail::get_u32(in);
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(detail::get_u32(in));
      n *= t.dims.back();
    }
    t.values.resize(n);
    for (auto& v : t.values) v = detail::get_f64(in);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace stgcsn
