#include "stgcsn/scattering.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "stgcsn/error.hpp"

namespace stgcsn {

TreePath TreePath::parent() const {
  if (is_root()) throw PreconditionError("TreePath::parent: root has no parent");
  return TreePath(std::vector<ScalePair>(pairs_.begin(), pairs_.end() - 1));
}

TreePath TreePath::child(ScalePair step) const {
  auto pairs = pairs_;
  pairs.push_back(step);
  return TreePath(std::move(pairs));
}

std::string TreePath::to_string() const {
  if (is_root()) return "()";
  std::string s;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    if (i != 0) s += '/';
    s += '(' + std::to_string(pairs_[i].spatial) + ',' + std::to_string(pairs_[i].temporal) + ')';
  }
  return s;
}

TreePath TreePath::parse(const std::string& text) {
  if (text == "()") return TreePath{};
  std::vector<ScalePair> pairs;
  std::size_t pos = 0;
  auto fail = [&] { throw ParseError("malformed tree path: '" + text + "'"); };
  auto read_int = [&](int& v) {
    const char* first = text.data() + pos;
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || v < 1) fail();
    pos += static_cast<std::size_t>(ptr - first);
  };
  while (pos < text.size()) {
    if (!pairs.empty()) {
      if (text[pos] != '/') fail();
      ++pos;
    }
    if (pos >= text.size() || text[pos] != '(') fail();
    ++pos;
    ScalePair sp;
    read_int(sp.spatial);
    if (pos >= text.size() || text[pos] != ',') fail();
    ++pos;
    read_int(sp.temporal);
    if (pos >= text.size() || text[pos] != ')') fail();
    ++pos;
    pairs.push_back(sp);
  }
  if (pairs.empty()) fail();
  return TreePath(std::move(pairs));
}

ScatterBanks ScatterBanks::build(const Graph& spatial_graph, const Graph& temporal_graph, int js,
                                 int jt) {
  auto ps = dyadic_powers(lazy_random_walk(spatial_graph), js);
  auto pt = dyadic_powers(lazy_random_walk(temporal_graph), jt);
  auto hs = build_wavelet_bank(ps, js);
  auto gt = build_wavelet_bank(pt, jt);
  return ScatterBanks{std::move(ps), std::move(pt), std::move(hs), std::move(gt)};
}

PruneMask::PruneMask(std::set<TreePath> preserved, double threshold, int layers)
    : preserved_(std::move(preserved)), threshold_(threshold), layers_(layers) {
  if (!preserved_.contains(TreePath{})) throw PreconditionError("PruneMask: root missing");
  for (const auto& p : preserved_) {
    if (static_cast<int>(p.depth()) > layers_) {
      throw PreconditionError("PruneMask: path " + p.to_string() + " deeper than layer count");
    }
    if (!p.is_root() && !preserved_.contains(p.parent())) {
      throw PreconditionError("PruneMask: parent of " + p.to_string() + " not preserved");
    }
  }
}

PruneMask PruneMask::full(int js, int jt, int layers) {
  std::set<TreePath> all{TreePath{}};
  std::vector<TreePath> frontier{TreePath{}};
  for (int l = 0; l < layers; ++l) {
    std::vector<TreePath> next;
    for (const auto& p : frontier) {
      for (int a = 1; a <= js; ++a) {
        for (int b = 1; b <= jt; ++b) next.push_back(p.child({a, b}));
      }
    }
    all.insert(next.begin(), next.end());
    frontier = std::move(next);
  }
  return PruneMask(std::move(all), 0.0, layers);
}

std::vector<std::size_t> PruneMask::layer_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(layers_) + 1, 0);
  for (const auto& p : preserved_) ++counts[p.depth()];
  return counts;
}

bool PruneMask::has_preserved_child(const TreePath& p) const {
  auto it = preserved_.upper_bound(p);
  return it != preserved_.end() && it->depth() == p.depth() + 1 &&
         std::equal(p.pairs().begin(), p.pairs().end(), it->pairs().begin());
}

void PruneMask::write(std::ostream& out) const {
  out << "# tau " << threshold_ << " layers " << layers_ << '\n';
  for (const auto& p : preserved_) out << p.to_string() << '\n';
}

PruneMask PruneMask::read(std::istream& in, double threshold) {
  std::set<TreePath> paths;
  std::string line;
  int layers = 0;
  int declared_layers = -1;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '#') {
      std::istringstream ss(line.substr(1));
      std::string key;
      while (ss >> key) {
        if (key == "tau") ss >> threshold;
        else if (key == "layers") ss >> declared_layers;
      }
      continue;
    }
    auto p = TreePath::parse(line);
    layers = std::max(layers, static_cast<int>(p.depth()));
    paths.insert(std::move(p));
  }
  if (declared_layers >= layers) layers = declared_layers;
  try {
    return PruneMask(std::move(paths), threshold, layers);
  } catch (const PreconditionError& e) {
    throw DataError(std::string("invalid mask file: ") + e.what());
  }
}

std::size_t full_tree_size(int js, int jt, int layers) {
  if (js < 1 || jt < 1 || layers < 0) throw PreconditionError("full_tree_size: bad arguments");
  constexpr auto kMax = std::numeric_limits<std::size_t>::max();
  const auto branching = static_cast<std::size_t>(js) * static_cast<std::size_t>(jt);
  std::size_t total = 1;
  std::size_t level = 1;
  for (int l = 1; l <= layers; ++l) {
    if (level > kMax / branching) return kMax;
    level *= branching;
    if (total > kMax - level) return kMax;
    total += level;
  }
  return total;
}

namespace {

void check_banks(const STSignal& z, const ScatterBanks& banks) {
  if (z.rows() != banks.n_vertices() || z.cols() != banks.n_frames()) {
    throw ShapeError("scattering: signal " + std::to_string(z.rows()) + "x" +
                     std::to_string(z.cols()) + " does not match banks " +
                     std::to_string(banks.n_vertices()) + "x" + std::to_string(banks.n_frames()));
  }
}

/// H_j1 z_c for every channel.
std::vector<Matrix> spatial_stage(const Matrix& h, const STSignal& z) {
  std::vector<Matrix> out;
  out.reserve(z.channels());
  for (const auto& zc : z.data()) out.push_back(h * zc);
  return out;
}

STSignal temporal_stage_abs(const std::vector<Matrix>& hz, const Matrix& g) {
  std::vector<Matrix> out;
  out.reserve(hz.size());
  for (const auto& m : hz) out.push_back((m * g.transpose()).cwiseAbs());
  return STSignal(std::move(out));
}

/// Expands every preserved child of `parent` that `keep` accepts.
template <typename Keep, typename Emit>
void expand(const TreePath& parent, const STSignal& z, const ScatterBanks& banks, Keep&& keep,
            Emit&& emit) {
  for (int a = 1; a <= banks.js(); ++a) {
    std::vector<Matrix> hz;
    for (int b = 1; b <= banks.jt(); ++b) {
      TreePath c = parent.child({a, b});
      if (!keep(c)) continue;
      if (hz.empty()) hz = spatial_stage(banks.spatial.filter(a), z);
      emit(std::move(c), temporal_stage_abs(hz, banks.temporal.filter(b)));
    }
  }
}

}  // namespace

std::vector<std::pair<ScalePair, STSignal>> scatter_children(const STSignal& z,
                                                             const ScatterBanks& banks) {
  check_banks(z, banks);
  std::vector<std::pair<ScalePair, STSignal>> out;
  out.reserve(banks.branching());
  expand(
      TreePath{}, z, banks, [](const TreePath&) { return true; },
      [&](TreePath p, STSignal s) { out.emplace_back(p.last(), std::move(s)); });
  return out;
}

ScatteringTree build_full_tree(const STSignal& x, const ScatterBanks& banks, int layers,
                               std::size_t node_cap) {
  if (layers < 1) throw PreconditionError("build_full_tree: layers must be >= 1");
  check_banks(x, banks);
  const auto count = full_tree_size(banks.js(), banks.jt(), layers);
  if (count > node_cap) {
    throw TreeTooLargeError("build_full_tree: " + std::to_string(count) +
                            " nodes exceeds cap " + std::to_string(node_cap));
  }
  ScatteringTree tree;
  tree.layer_count = layers;
  tree.nodes.emplace(TreePath{}, x);
  std::vector<TreePath> frontier{TreePath{}};
  for (int l = 0; l < layers; ++l) {
    std::vector<TreePath> next;
    for (const auto& p : frontier) {
      expand(
          p, tree.nodes.at(p), banks, [](const TreePath&) { return true; },
          [&](TreePath c, STSignal s) {
            next.push_back(c);
            tree.nodes.emplace(std::move(c), std::move(s));
          });
    }
    frontier = std::move(next);
  }
  return tree;
}

ScatteringTree forward_pruned(const STSignal& x, const PruneMask& mask, const ScatterBanks& banks) {
  check_banks(x, banks);
  for (const auto& p : mask.preserved()) {
    for (const auto& sp : p.pairs()) {
      if (sp.spatial > banks.js() || sp.temporal > banks.jt()) {
        throw ShapeError("forward_pruned: mask path " + p.to_string() + " exceeds bank scales " +
                         std::to_string(banks.js()) + "x" + std::to_string(banks.jt()));
      }
    }
  }
  ScatteringTree tree;
  tree.layer_count = mask.layers();
  tree.nodes.emplace(TreePath{}, x);
  std::vector<TreePath> frontier{TreePath{}};
  for (int l = 0; l < mask.layers(); ++l) {
    std::vector<TreePath> next;
    for (const auto& p : frontier) {
      if (!mask.has_preserved_child(p)) continue;
      expand(
          p, tree.nodes.at(p), banks, [&](const TreePath& c) { return mask.contains(c); },
          [&](TreePath c, STSignal s) {
            next.push_back(c);
            tree.nodes.emplace(std::move(c), std::move(s));
          });
    }
    frontier = std::move(next);
  }
  return tree;
}

PruneMask compute_prune_mask(std::span<const STSignal> training, const ScatterBanks& banks,
                             int layers, double tau) {
  if (training.empty()) throw PreconditionError("compute_prune_mask: empty training set");
  if (!(tau >= 0.0)) throw PreconditionError("compute_prune_mask: tau must be >= 0");
  if (layers < 1) throw PreconditionError("compute_prune_mask: layers must be >= 1");

  std::set<TreePath> preserved{TreePath{}};
  for (int l = 1; l <= layers; ++l) {
    const PruneMask current(preserved, tau, l - 1);
    std::map<TreePath, double> ratio_sum;
    for (const auto& x : training) {
      const auto tree = forward_pruned(x, current, banks);
      for (const auto& [path, signal] : tree.nodes) {
        if (static_cast<int>(path.depth()) != l - 1) continue;
        const double parent_norm = frobenius_norm(signal);
        expand(
            path, signal, banks, [](const TreePath&) { return true; },
            [&](TreePath c, STSignal s) {
              const double r = parent_norm > 0.0 ? frobenius_norm(s) / parent_norm : 0.0;
              ratio_sum[std::move(c)] += r;
            });
      }
    }
    const auto n = static_cast<double>(training.size());
    bool grew = false;
    for (const auto& [path, sum] : ratio_sum) {
      if (sum / n >= tau) {
        preserved.insert(path);
        grew = true;
      }
    }
    if (!grew) break;
  }
  return PruneMask(std::move(preserved), tau, layers);
}

Vector temporal_mean_pool(const STSignal& z) {
  const auto n = z.rows();
  const auto t = z.cols();
  Vector out(static_cast<Eigen::Index>(z.channels() * n));
  for (std::size_t c = 0; c < z.channels(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = 0.0;
      for (std::size_t k = 0; k < t; ++k) sum += z[c](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      out(static_cast<Eigen::Index>(c * n + i)) = sum / static_cast<double>(t);
    }
  }
  return out;
}

Vector assemble_features(std::span<const TreeNode> nodes) {
  if (nodes.empty()) throw PreconditionError("assemble_features: no nodes");
  std::vector<const TreeNode*> order;
  order.reserve(nodes.size());
  for (const auto& n : nodes) {
    if (!n.signal.same_shape(nodes.front().signal)) {
      throw ShapeError("assemble_features: node " + n.path.to_string() + " has a different shape");
    }
    order.push_back(&n);
  }
  std::sort(order.begin(), order.end(), [](const TreeNode* a, const TreeNode* b) {
    if (a->kind != b->kind) return a->kind < b->kind;
    return a->path < b->path;
  });
  const auto block = static_cast<Eigen::Index>(nodes.front().signal.channels() *
                                               nodes.front().signal.rows());
  Vector out(block * static_cast<Eigen::Index>(nodes.size()));
  Eigen::Index offset = 0;
  for (const auto* n : order) {
    out.segment(offset, block) = temporal_mean_pool(n->signal);
    offset += block;
  }
  return out;
}

void write_feature_record(std::ostream& out, std::uint32_t index, std::span<const double> values) {
  out.write("STGF1", 5);
  detail::put_u32(out, index);
  detail::put_u32(out, static_cast<std::uint32_t>(values.size()));
  for (double v : values) detail::put_f64(out, v);
}

std::vector<std::pair<std::uint32_t, std::vector<double>>> read_feature_records(std::istream& in) {
  std::vector<std::pair<std::uint32_t, std::vector<double>>> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    detail::expect_magic(in, "STGF1");
    const auto index = detail::get_u32(in);
    const auto len = detail::get_u32(in);
    std::vector<double> values(len);
    for (auto& v : values) v = detail::get_f64(in);
    out.emplace_back(index, std::move(values));
  }
  return out;
}

void write_feature_manifest(std::ostream& out,
                            std::span<const std::pair<NodeKind, TreePath>> layout) {
  for (const auto& [kind, path] : layout) {
    out << (kind == NodeKind::fixed ? "fixed" : "trainable") << '\t' << path.to_string() << '\n';
  }
}

}  // namespace stgcsn
