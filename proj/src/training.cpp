#include "stgcsn/training.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <numeric>
#include <ostream>

#include "stgcsn/error.hpp"

namespace stgcsn {

// ---- head, loss, normalization --------------------------------------------

MlpHead MlpHead::initialize(std::size_t features, std::size_t hidden, std::size_t classes,
                            std::mt19937_64& rng) {
  MlpHead h = zeros(features, hidden, classes);
  auto glorot = [&](Matrix& w) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  };
  glorot(h.w1);
  glorot(h.w2);
  return h;
}

MlpHead MlpHead::zeros(std::size_t features, std::size_t hidden, std::size_t classes) {
  const auto f = static_cast<Eigen::Index>(features);
  const auto hd = static_cast<Eigen::Index>(hidden);
  const auto c = static_cast<Eigen::Index>(classes);
  return MlpHead{Matrix::Zero(hd, f), Vector::Zero(hd), Matrix::Zero(c, hd), Vector::Zero(c)};
}

namespace {

void check_head(const Vector& feature, const MlpHead& head) {
  if (feature.size() != head.w1.cols() || head.b1.size() != head.w1.rows() ||
      head.w2.cols() != head.w1.rows() || head.b2.size() != head.w2.rows()) {
    throw ShapeError("mlp: feature length " + std::to_string(feature.size()) +
                     " does not match head with " + std::to_string(head.w1.cols()) + " inputs");
  }
}

Vector hidden_preactivation(const Vector& feature, const MlpHead& head) {
  Vector pre = head.w1 * feature;
  pre += head.b1;
  return pre;
}

Vector output_logits(const Vector& hidden, const MlpHead& head) {
  Vector logits = head.w2 * hidden;
  logits += head.b2;
  return logits;
}

Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

}  // namespace

Vector mlp_forward(const Vector& feature, const MlpHead& head) {
  check_head(feature, head);
  const Vector pre = hidden_preactivation(feature, head);
  return output_logits(pre.cwiseMax(0.0), head);
}

double cross_entropy(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size()) {
    throw PreconditionError("cross_entropy: label " + std::to_string(label) + " out of range [0," +
                            std::to_string(logits.size()) + ")");
  }
  const double mx = logits.maxCoeff();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) sum += std::exp(logits(i) - mx);
  return mx + std::log(sum) - logits(label);
}

FeatureNorm FeatureNorm::identity(std::size_t n) {
  const auto k = static_cast<Eigen::Index>(n);
  return FeatureNorm{Vector::Zero(k), Vector::Ones(k)};
}

FeatureNorm FeatureNorm::fit(std::span<const Vector> raw) {
  if (raw.empty()) throw PreconditionError("FeatureNorm::fit: no samples");
  const auto n = raw.front().size();
  Vector mean = Vector::Zero(n);
  for (const auto& v : raw) mean += v;
  mean /= static_cast<double>(raw.size());
  Vector var = Vector::Zero(n);
  for (const auto& v : raw) var += (v - mean).cwiseAbs2();
  var /= static_cast<double>(raw.size());
  Vector scale = var.cwiseSqrt().array() + 1e-8;
  return FeatureNorm{std::move(mean), std::move(scale)};
}

Vector FeatureNorm::apply(const Vector& raw) const {
  if (raw.size() != mean.size()) throw ShapeError("FeatureNorm: feature length mismatch");
  return ((raw - mean).array() / scale.array()).matrix();
}

// ---- gradient containers ----------------------------------------------------

GradientSet GradientSet::zeros_like(const Model& model) {
  GradientSet g;
  for (const auto& [path, a] : model.agents.by_parent()) {
    g.agents.by_parent().emplace(
        path, AgentPair{Matrix::Zero(a.spatial.rows(), a.spatial.cols()),
                        Matrix::Zero(a.temporal.rows(), a.temporal.cols())});
  }
  g.head = MlpHead::zeros(model.head.features(), model.head.hidden(), model.head.classes());
  return g;
}

void for_each_tensor(AgentParams& agents, MlpHead& head,
                     const std::function<void(const std::string&, double*, std::size_t)>& f) {
  for (auto& [path, a] : agents.by_parent()) {
    f("agent_s/" + path.to_string(), a.spatial.data(), static_cast<std::size_t>(a.spatial.size()));
    f("agent_t/" + path.to_string(), a.temporal.data(), static_cast<std::size_t>(a.temporal.size()));
  }
  f("mlp/w1", head.w1.data(), static_cast<std::size_t>(head.w1.size()));
  f("mlp/b1", head.b1.data(), static_cast<std::size_t>(head.b1.size()));
  f("mlp/w2", head.w2.data(), static_cast<std::size_t>(head.w2.size()));
  f("mlp/b2", head.b2.data(), static_cast<std::size_t>(head.b2.size()));
}

namespace {

struct TensorRef {
  std::string name;
  double* data;
  std::size_t size;
};

std::vector<TensorRef> tensor_refs(AgentParams& agents, MlpHead& head) {
  std::vector<TensorRef> refs;
  for_each_tensor(agents, head, [&](const std::string& name, double* data, std::size_t size) {
    refs.push_back({name, data, size});
  });
  return refs;
}

}  // namespace

void GradientSet::add(const GradientSet& other) {
  auto& o = const_cast<GradientSet&>(other);
  auto mine = tensor_refs(agents, head);
  auto theirs = tensor_refs(o.agents, o.head);
  if (mine.size() != theirs.size()) throw ShapeError("GradientSet::add: tensor count mismatch");
  for (std::size_t k = 0; k < mine.size(); ++k) {
    if (mine[k].size != theirs[k].size) throw ShapeError("GradientSet::add: " + mine[k].name);
    for (std::size_t i = 0; i < mine[k].size; ++i) mine[k].data[i] += theirs[k].data[i];
  }
}

void GradientSet::scale(double factor) {
  for (auto& r : tensor_refs(agents, head)) {
    for (std::size_t i = 0; i < r.size; ++i) r.data[i] *= factor;
  }
}

void GradientSet::check_finite() const {
  auto& self = const_cast<GradientSet&>(*this);
  for (const auto& r : tensor_refs(self.agents, self.head)) {
    for (std::size_t i = 0; i < r.size; ++i) {
      if (!std::isfinite(r.data[i])) throw NumericError("non-finite gradient in " + r.name);
    }
  }
}

// ---- forward / backward engine ----------------------------------------------

namespace {

struct ParentFilters {
  TrainableShift spatial;
  TrainableShift temporal;
  std::vector<Matrix> a;  // spatial filter per scale (index j-1)
  std::vector<Matrix> b;  // temporal filter per scale
};

using FilterMap = std::map<TreePath, ParentFilters>;

struct FilterAdjoint {
  std::vector<Matrix> a;
  std::vector<Matrix> b;
};

using AdjointMap = std::map<TreePath, FilterAdjoint>;

/// Pass-invariant pieces of one sample: pooled fixed features and the fixed
/// signals of every parent that spawns trainable nodes.
struct SampleCache {
  Vector fixed_pooled;
  std::map<TreePath, STSignal> parents;
  int label = 0;
};

class Engine {
 public:
  Engine(const ScatterBanks& banks, const Model& model) : banks_(banks), model_(model) {
    for (const auto& p : model.mask.preserved()) {
      if (!p.is_root() && has_trainable_nodes(model.variant)) trainable_paths_.push_back(p);
    }
    if (has_trainable_nodes(model.variant)) build_filters();
  }

  SampleCache cache(const STSignal& x, int label) const {
    SampleCache c;
    c.label = label;
    auto tree = forward_pruned(x, model_.mask, banks_);
    std::vector<TreeNode> fixed;
    for (auto& [path, signal] : tree.nodes) {
      if (model_.variant == Variant::trainable_only && !path.is_root()) continue;
      fixed.push_back({NodeKind::fixed, path, signal});
    }
    c.fixed_pooled = assemble_features(fixed);
    if (has_trainable_nodes(model_.variant)) {
      for (const auto& [path, f] : filters_) c.parents.emplace(path, tree.nodes.at(path));
    }
    return c;
  }

  struct PassOutput {
    double loss = 0.0;
    Vector logits;
  };

  /// Forward pass; with `grads`/`adjoints` set, also the backward pass.
  PassOutput run(const SampleCache& sample, GradientSet* grads, AdjointMap* adjoints,
                 std::vector<signed char>* signs = nullptr) const {
    const bool want_grad = grads != nullptr;
    const auto channels = sample.parents.empty() ? std::size_t{0}
                                                 : sample.parents.begin()->second.channels();
    const auto block = static_cast<Eigen::Index>(channels * banks_.n_vertices());
    const auto n_fixed = sample.fixed_pooled.size();

    Vector raw(n_fixed + block * static_cast<Eigen::Index>(trainable_paths_.size()));
    raw.head(n_fixed) = sample.fixed_pooled;

    // Per trainable node: U_c = A z_c and Y_c = U_c B^T, kept for backward.
    std::vector<std::vector<Matrix>> u_store;
    std::vector<std::vector<Matrix>> y_store;
    if (want_grad) {
      u_store.resize(trainable_paths_.size());
      y_store.resize(trainable_paths_.size());
    }
    for (std::size_t k = 0; k < trainable_paths_.size(); ++k) {
      const auto& path = trainable_paths_[k];
      const auto& f = filters_.at(path.parent());
      const auto& z = sample.parents.at(path.parent());
      const auto& a = f.a[static_cast<std::size_t>(path.last().spatial - 1)];
      const auto& b = f.b[static_cast<std::size_t>(path.last().temporal - 1)];
      std::vector<Matrix> out;
      out.reserve(channels);
      for (std::size_t c = 0; c < channels; ++c) {
        Matrix u = a * z[c];
        Matrix y = u * b.transpose();
        if (signs) {
          for (Eigen::Index i = 0; i < y.size(); ++i) signs->push_back(y.data()[i] > 0 ? 1 : (y.data()[i] < 0 ? -1 : 0));
        }
        out.push_back(y.cwiseAbs());
        if (want_grad) {
          u_store[k].push_back(std::move(u));
          y_store[k].push_back(std::move(y));
        }
      }
      raw.segment(n_fixed + block * static_cast<Eigen::Index>(k), block) =
          temporal_mean_pool(STSignal(std::move(out)));
    }

    const Vector feature = model_.norm.apply(raw);
    const auto& head = model_.head;
    check_head(feature, head);
    const Vector pre = hidden_preactivation(feature, head);
    const Vector hidden = pre.cwiseMax(0.0);
    PassOutput result;
    result.logits = output_logits(hidden, head);
    result.loss = cross_entropy(result.logits, sample.label);
    if (signs) {
      for (Eigen::Index i = 0; i < pre.size(); ++i) signs->push_back(pre(i) > 0 ? 1 : (pre(i) < 0 ? -1 : 0));
    }
    if (!want_grad) return result;

    Vector dlogits = softmax(result.logits);
    dlogits(sample.label) -= 1.0;
    grads->head.w2.noalias() += dlogits * hidden.transpose();
    grads->head.b2 += dlogits;
    Vector dpre = head.w2.transpose() * dlogits;
    for (Eigen::Index i = 0; i < dpre.size(); ++i) {
      if (!(pre(i) > 0.0)) dpre(i) = 0.0;
    }
    grads->head.w1.noalias() += dpre * feature.transpose();
    grads->head.b1 += dpre;
    if (trainable_paths_.empty()) return result;

    const Vector draw = ((head.w1.transpose() * dpre).array() / model_.norm.scale.array()).matrix();
    const auto n = static_cast<Eigen::Index>(banks_.n_vertices());
    const auto t = static_cast<Eigen::Index>(banks_.n_frames());
    const double inv_t = 1.0 / static_cast<double>(t);
    for (std::size_t k = 0; k < trainable_paths_.size(); ++k) {
      const auto& path = trainable_paths_[k];
      const auto ja = static_cast<std::size_t>(path.last().spatial - 1);
      const auto jb = static_cast<std::size_t>(path.last().temporal - 1);
      const auto& f = filters_.at(path.parent());
      const auto& z = sample.parents.at(path.parent());
      auto& adj = adjoints->at(path.parent());
      Matrix& abar = adj.a[ja];
      Matrix& bbar = adj.b[jb];
      if (abar.size() == 0) abar = Matrix::Zero(n, n);
      if (bbar.size() == 0) bbar = Matrix::Zero(t, t);
      const auto offset = n_fixed + block * static_cast<Eigen::Index>(k);
      for (std::size_t c = 0; c < channels; ++c) {
        const Matrix& y = y_store[k][c];
        Matrix ybar(n, t);
        for (Eigen::Index j = 0; j < t; ++j) {
          for (Eigen::Index i = 0; i < n; ++i) {
            const double s = y(i, j) > 0.0 ? 1.0 : (y(i, j) < 0.0 ? -1.0 : 0.0);
            ybar(i, j) = draw(offset + static_cast<Eigen::Index>(c) * n + i) * inv_t * s;
          }
        }
        // Y = A Z B^T  =>  Abar += Ybar B Z^T,  Bbar += Ybar^T (A Z)
        Matrix yb = ybar * f.b[jb];
        abar.noalias() += yb * z[c].transpose();
        bbar.noalias() += ybar.transpose() * u_store[k][c];
      }
    }
    return result;
  }

  AdjointMap zero_adjoints() const {
    AdjointMap m;
    for (const auto& [path, f] : filters_) {
      m.emplace(path, FilterAdjoint{std::vector<Matrix>(f.a.size()), std::vector<Matrix>(f.b.size())});
    }
    return m;
  }

  /// Pulls filter adjoints back through the wavelet differences, the
  /// squaring chain and the row softmax into the agent gradients.
  void agent_gradients(const AdjointMap& adjoints, GradientSet& grads) const {
    const double sign = model_.variant == Variant::no_complement ? 1.0 : -1.0;
    for (const auto& [path, adj] : adjoints) {
      const auto& f = filters_.at(path);
      auto& g = grads.agents.by_parent().at(path);
      g.spatial += pull_back(adj.a, f.spatial, sign);
      g.temporal += pull_back(adj.b, f.temporal, sign);
    }
  }

 private:
  void build_filters() {
    const bool complement = model_.variant != Variant::no_complement;
    for (const auto& parent : qualifying_parents(model_.mask)) {
      const auto& agent = model_.agents.at(parent);
      if (static_cast<std::size_t>(agent.spatial.rows()) != banks_.n_vertices() ||
          static_cast<std::size_t>(agent.temporal.rows()) != banks_.n_frames()) {
        throw ShapeError("agent for " + parent.to_string() + " does not match graph sizes");
      }
      ParentFilters pf{TrainableShift::from_agent(agent.spatial, banks_.js()),
                       TrainableShift::from_agent(agent.temporal, banks_.jt()),
                       {},
                       {}};
      for (int j = 1; j <= banks_.js(); ++j) {
        pf.a.push_back(complement ? complement_filter(pf.spatial.powers(), j)
                                  : wavelet_filter(pf.spatial.powers(), j));
      }
      for (int j = 1; j <= banks_.jt(); ++j) {
        pf.b.push_back(complement ? complement_filter(pf.temporal.powers(), j)
                                  : wavelet_filter(pf.temporal.powers(), j));
      }
      filters_.emplace(parent, std::move(pf));
    }
  }

  /// filter_j = c*I + sign*(Q_{j-1} - Q_j)  (c = 1 for I - H, 0 for H)
  static Matrix pull_back(const std::vector<Matrix>& filter_adj, const TrainableShift& shift,
                          double sign) {
    const auto powers = shift.powers();
    const auto n = powers.front().rows();
    std::vector<Matrix> qbar(powers.size(), Matrix::Zero(n, n));
    bool any = false;
    for (std::size_t j = 1; j <= filter_adj.size(); ++j) {
      const Matrix& fa = filter_adj[j - 1];
      if (fa.size() == 0) continue;
      any = true;
      qbar[j - 1] += sign * fa;
      qbar[j] -= sign * fa;
    }
    if (!any) return Matrix::Zero(n, n);
    // Q_k = Q_{k-1} Q_{k-1}
    for (std::size_t k = powers.size() - 1; k >= 1; --k) {
      const Matrix& q = powers[k - 1];
      qbar[k - 1].noalias() += qbar[k] * q.transpose();
      qbar[k - 1].noalias() += q.transpose() * qbar[k];
    }
    return row_softmax_backward(powers.front(), qbar.front());
  }

  const ScatterBanks& banks_;
  const Model& model_;
  std::vector<TreePath> trainable_paths_;
  FilterMap filters_;
};

}  // namespace

Vector raw_features(const STSignal& x, const ScatterBanks& banks, const Model& model) {
  const auto nodes = gcsn_forward(x, model.mask, banks, model.agents, model.variant);
  const auto merged = nodes.merged();
  return assemble_features(merged);
}

Vector model_logits(const STSignal& x, const ScatterBanks& banks, const Model& model) {
  return mlp_forward(model.norm.apply(raw_features(x, banks, model)), model.head);
}

BackwardResult backward(const STSignal& x, int label, const ScatterBanks& banks, const Model& model) {
  Engine engine(banks, model);
  const auto sample = engine.cache(x, label);
  BackwardResult r;
  r.grads = GradientSet::zeros_like(model);
  auto adjoints = engine.zero_adjoints();
  auto out = engine.run(sample, &r.grads, &adjoints);
  engine.agent_gradients(adjoints, r.grads);
  r.loss = out.loss;
  r.logits = std::move(out.logits);
  r.grads.check_finite();
  return r;
}

// ---- optimizers -------------------------------------------------------------

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void optimizer_step(Model& model, GradientSet& grads, OptimizerState& state,
                    const OptimizerConfig& config) {
  auto params = tensor_refs(model.agents, model.head);
  auto gs = tensor_refs(grads.agents, grads.head);
  if (params.size() != gs.size()) throw ShapeError("optimizer_step: tensor count mismatch");
  ++state.step;
  const double lr = config.learning_rate;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    const auto& g = gs[k];
    if (p.size != g.size) throw ShapeError("optimizer_step: shape mismatch for " + p.name);
    if (config.kind == OptimizerKind::sgd) {
      for (std::size_t i = 0; i < p.size; ++i) p.data[i] -= lr * g.data[i];
      continue;
    }
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    m.resize(p.size, 0.0);
    v.resize(p.size, 0.0);
    for (std::size_t i = 0; i < p.size; ++i) {
      const double gi = g.data[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + config.epsilon);
    }
  }
}

// ---- training loop ------------------------------------------------------------

namespace {

int infer_classes(std::span<const LabeledSignal> samples, int configured) {
  int mx = -1;
  for (const auto& s : samples) {
    if (s.label < 0) throw PreconditionError("negative label");
    mx = std::max(mx, s.label);
  }
  if (configured > 0) {
    if (mx >= configured) {
      throw ConfigError("label " + std::to_string(mx) + " exceeds class_count " +
                        std::to_string(configured));
    }
    return configured;
  }
  return mx + 1;
}

int argmax(const Vector& v) {
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

double cached_accuracy(const Engine& engine, std::span<const SampleCache> caches) {
  std::size_t correct = 0;
  for (const auto& c : caches) {
    if (argmax(engine.run(c, nullptr, nullptr).logits) == c.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(caches.size());
}

}  // namespace

Model initialize_model(std::span<const LabeledSignal> training, const PruneMask& mask,
                       const ScatterBanks& banks, const TrainConfig& config) {
  if (training.empty()) throw PreconditionError("initialize_model: empty training set");
  if (config.hidden < 1) throw ConfigError("hidden must be >= 1");
  const int classes = infer_classes(training, config.class_count);
  Model model;
  model.mask = mask;
  model.variant = config.variant;
  if (has_trainable_nodes(config.variant)) model.agents = AgentParams::initialize(mask, banks);
  const auto layout = feature_layout(mask, config.variant);
  const auto features = layout.size() * training.front().signal.channels() * banks.n_vertices();
  std::mt19937_64 rng(config.seed);
  model.head = MlpHead::initialize(features, static_cast<std::size_t>(config.hidden),
                                   static_cast<std::size_t>(classes), rng);
  model.norm = FeatureNorm::identity(features);
  if (config.standardize) {
    std::vector<Vector> raw;
    raw.reserve(training.size());
    for (const auto& s : training) raw.push_back(raw_features(s.signal, banks, model));
    model.norm = FeatureNorm::fit(raw);
  }
  return model;
}

TrainResult train(std::span<const LabeledSignal> training, std::span<const LabeledSignal> validation,
                  const PruneMask& mask, const ScatterBanks& banks, const TrainConfig& config) {
  if (training.empty()) throw PreconditionError("train: empty training set");
  if (config.epochs < 0 || config.batch_size < 1 || !(config.learning_rate >= 0.0)) {
    throw ConfigError("train: epochs >= 0, batch_size >= 1 and learning_rate >= 0 required");
  }
  TrainResult result;
  result.model = initialize_model(training, mask, banks, config);
  Model& model = result.model;

  std::vector<SampleCache> train_cache;
  std::vector<SampleCache> val_cache;
  {
    Engine engine(banks, model);
    for (const auto& s : training) train_cache.push_back(engine.cache(s.signal, s.label));
    for (const auto& s : validation) val_cache.push_back(engine.cache(s.signal, s.label));
  }

  OptimizerConfig opt{config.optimizer, config.learning_rate};
  OptimizerState state;
  std::mt19937_64 shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  std::vector<std::size_t> order(training.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(config.batch_size);

  Model best;
  double best_val = -1.0;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      Engine engine(banks, model);
      auto grads = GradientSet::zeros_like(model);
      auto adjoints = engine.zero_adjoints();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        batch_loss += engine.run(train_cache[order[i]], &grads, &adjoints).loss;
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged: non-finite loss in epoch " + std::to_string(epoch));
      }
      loss_sum += batch_loss;
      engine.agent_gradients(adjoints, grads);
      grads.scale(1.0 / static_cast<double>(stop - start));
      grads.check_finite();
      optimizer_step(model, grads, state, opt);
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(training.size());
    Engine engine(banks, model);
    entry.train_accuracy = cached_accuracy(engine, train_cache);
    if (!val_cache.empty()) entry.val_accuracy = cached_accuracy(engine, val_cache);
    result.log.push_back(entry);
    if (config.select_best && !val_cache.empty() && entry.val_accuracy > best_val) {
      best_val = entry.val_accuracy;
      best = model;
    }
    if (config.stop_train_accuracy > 0.0 && entry.train_accuracy >= config.stop_train_accuracy) break;
  }
  if (config.select_best && best_val >= 0.0) model = std::move(best);
  return result;
}

void write_train_log(std::ostream& out, std::span<const EpochLog> log) {
  char buf[160];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%d\t%.10g\t%.6f\t%.6f\n", e.epoch, e.loss, e.train_accuracy,
                  e.val_accuracy);
    out << buf;
  }
}

EvalResult evaluate(std::span<const LabeledSignal> samples, const ScatterBanks& banks,
                    const Model& model) {
  if (samples.empty()) throw PreconditionError("evaluate: empty dataset");
  const auto classes = model.head.classes();
  EvalResult r;
  r.confusion.assign(classes, std::vector<int>(classes, 0));
  Engine engine(banks, model);
  std::size_t correct = 0;
  for (const auto& s : samples) {
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= classes) {
      throw DataError("evaluate: label " + std::to_string(s.label) + " outside model classes");
    }
    const auto pred = argmax(engine.run(engine.cache(s.signal, s.label), nullptr, nullptr).logits);
    ++r.confusion[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(pred)];
    if (pred == s.label) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
  return r;
}

// ---- checkpoints ----------------------------------------------------------------

namespace {

constexpr std::array kVariants{Variant::full, Variant::fixed_only, Variant::trainable_only,
                               Variant::no_complement};

}  // namespace

std::vector<NamedTensor> model_tensors(const Model& model, const ScatterBanks& banks) {
  const auto layout = feature_layout(model.mask, model.variant);
  const auto per_node = model.head.features() / std::max<std::size_t>(layout.size(), 1);
  const auto channels = per_node / banks.n_vertices();
  double variant_id = 0;
  for (std::size_t i = 0; i < kVariants.size(); ++i) {
    if (kVariants[i] == model.variant) variant_id = static_cast<double>(i);
  }
  Vector meta(9);
  meta << banks.js(), banks.jt(), model.mask.layers(), variant_id,
      static_cast<double>(model.head.classes()), static_cast<double>(model.head.hidden()),
      static_cast<double>(channels), static_cast<double>(banks.n_vertices()),
      static_cast<double>(banks.n_frames());
  std::vector<NamedTensor> out;
  out.push_back(NamedTensor::from_vector("meta/shape", meta));
  for (const auto& [path, a] : model.agents.by_parent()) {
    out.push_back(NamedTensor::from_matrix("agent_s/" + path.to_string(), a.spatial));
    out.push_back(NamedTensor::from_matrix("agent_t/" + path.to_string(), a.temporal));
  }
  out.push_back(NamedTensor::from_matrix("mlp/w1", model.head.w1));
  out.push_back(NamedTensor::from_vector("mlp/b1", model.head.b1));
  out.push_back(NamedTensor::from_matrix("mlp/w2", model.head.w2));
  out.push_back(NamedTensor::from_vector("mlp/b2", model.head.b2));
  out.push_back(NamedTensor::from_vector("norm/mean", model.norm.mean));
  out.push_back(NamedTensor::from_vector("norm/scale", model.norm.scale));
  return out;
}

Model model_from_tensors(std::span<const NamedTensor> tensors, const PruneMask& mask,
                         const ScatterBanks& banks) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t;
  auto get = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ConfigError("checkpoint is missing tensor " + name);
    return *it->second;
  };
  const Vector meta = get("meta/shape").to_vector();
  if (meta.size() != 9) throw ConfigError("checkpoint meta/shape has wrong length");
  auto expect = [&](int idx, double want, const char* field) {
    if (meta(idx) != want) {
      throw ConfigError(std::string("checkpoint ") + field + " = " + std::to_string(meta(idx)) +
                        " but run uses " + std::to_string(want));
    }
  };
  expect(0, banks.js(), "js");
  expect(1, banks.jt(), "jt");
  expect(2, mask.layers(), "layers");
  expect(7, static_cast<double>(banks.n_vertices()), "n_vertices");
  expect(8, static_cast<double>(banks.n_frames()), "n_frames");
  const auto vid = static_cast<std::size_t>(meta(3));
  if (vid >= kVariants.size()) throw ConfigError("checkpoint has unknown variant id");

  Model model;
  model.mask = mask;
  model.variant = kVariants[vid];
  if (has_trainable_nodes(model.variant)) {
    for (const auto& parent : qualifying_parents(mask)) {
      model.agents.by_parent().emplace(
          parent, AgentPair{get("agent_s/" + parent.to_string()).to_matrix(),
                            get("agent_t/" + parent.to_string()).to_matrix()});
    }
  }
  model.head.w1 = get("mlp/w1").to_matrix();
  model.head.b1 = get("mlp/b1").to_vector();
  model.head.w2 = get("mlp/w2").to_matrix();
  model.head.b2 = get("mlp/b2").to_vector();
  model.norm.mean = get("norm/mean").to_vector();
  model.norm.scale = get("norm/scale").to_vector();
  const auto features =
      feature_layout(mask, model.variant).size() * static_cast<std::size_t>(meta(6)) * banks.n_vertices();
  if (model.head.features() != features || model.norm.mean.size() != static_cast<Eigen::Index>(features)) {
    throw ConfigError("checkpoint feature length " + std::to_string(model.head.features()) +
                      " does not match mask layout (" + std::to_string(features) + ")");
  }
  return model;
}

// ---- gradient check ---------------------------------------------------------------

namespace {

Graph random_connected_graph(int n, std::mt19937_64& rng) {
  Matrix a = Matrix::Zero(n, n);
  std::bernoulli_distribution extra(0.35);
  for (int i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = 1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 2; j < n; ++j) {
      if (extra(rng)) a(i, j) = a(j, i) = 1.0;
    }
  }
  return Graph(std::move(a));
}

STSignal random_signal(std::size_t c, std::size_t n, std::size_t t, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  auto z = STSignal::zeros(c, n, t);
  for (std::size_t k = 0; k < c; ++k) {
    for (Eigen::Index j = 0; j < z[k].cols(); ++j) {
      for (Eigen::Index i = 0; i < z[k].rows(); ++i) z[k](i, j) = dist(rng);
    }
  }
  return z;
}

}  // namespace

GradCheckReport gradient_check(const GradCheckConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  const auto banks = ScatterBanks::build(random_connected_graph(cfg.n_vertices, rng),
                                         line_graph(cfg.n_frames), cfg.js, cfg.jt);
  const auto mask = PruneMask::full(cfg.js, cfg.jt, cfg.layers);
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto n = static_cast<std::size_t>(cfg.n_vertices);
  const auto t = static_cast<std::size_t>(cfg.n_frames);

  std::vector<LabeledSignal> fit_set;
  for (int i = 0; i < 4; ++i) fit_set.push_back({random_signal(c, n, t, rng), i % cfg.classes});
  TrainConfig tc;
  tc.hidden = cfg.hidden;
  tc.variant = cfg.variant;
  tc.class_count = cfg.classes;
  tc.seed = cfg.seed;
  Model model = initialize_model(fit_set, mask, banks, tc);
  // Move agents away from the init point so every coordinate carries signal.
  std::normal_distribution<double> jitter(0.0, 0.5);
  for (auto& [path, a] : model.agents.by_parent()) {
    a.spatial = 4.0 * row_softmax(a.spatial);
    a.temporal = 4.0 * row_softmax(a.temporal);
    for (Eigen::Index i = 0; i < a.spatial.size(); ++i) a.spatial.data()[i] += jitter(rng);
    for (Eigen::Index i = 0; i < a.temporal.size(); ++i) a.temporal.data()[i] += jitter(rng);
  }
  const auto x = random_signal(c, n, t, rng);
  const int label = static_cast<int>(rng() % static_cast<std::uint64_t>(cfg.classes));

  auto analytic = backward(x, label, banks, model);

  auto loss_at = [&](const Model& m, std::vector<signed char>& signs) {
    Engine engine(banks, m);
    signs.clear();
    return engine.run(engine.cache(x, label), nullptr, nullptr, &signs).loss;
  };

  GradCheckReport report;
  report.tolerance = cfg.tolerance;
  Model probe = model;
  auto params = tensor_refs(probe.agents, probe.head);
  auto grads = tensor_refs(analytic.grads.agents, analytic.grads.head);
  std::vector<signed char> plus_signs;
  std::vector<signed char> minus_signs;
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (std::size_t i = 0; i < params[k].size; ++i) {
      const double saved = params[k].data[i];
      params[k].data[i] = saved + cfg.step;
      const double lp = loss_at(probe, plus_signs);
      params[k].data[i] = saved - cfg.step;
      const double lm = loss_at(probe, minus_signs);
      params[k].data[i] = saved;
      if (plus_signs != minus_signs) {
        ++report.skipped;
        continue;
      }
      const double numeric = (lp - lm) / (2.0 * cfg.step);
      const double a = grads[k].data[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst_tensor = params[k].name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace stgcsn
