#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stgcsn/complementary.hpp"
#include "stgcsn/scattering.hpp"

namespace stgcsn {

/// logits = w2 * relu(w1 * f + b1) + b2
struct MlpHead {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  /// Glorot-uniform weights, zero biases.
  static MlpHead initialize(std::size_t features, std::size_t hidden, std::size_t classes,
                            std::mt19937_64& rng);
  static MlpHead zeros(std::size_t features, std::size_t hidden, std::size_t classes);

  std::size_t features() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t hidden() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t classes() const { return static_cast<std::size_t>(w2.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + b2.size());
  }
};

Vector mlp_forward(const Vector& feature, const MlpHead& head);

/// -log softmax(logits)[label] via log-sum-exp.
double cross_entropy(const Vector& logits, int label);

/// Per-dimension standardization (raw - mean) / scale, frozen after fitting.
struct FeatureNorm {
  Vector mean;
  Vector scale;

  static FeatureNorm identity(std::size_t n);
  /// scale = std + 1e-8 so that constant dimensions stay bounded.
  static FeatureNorm fit(std::span<const Vector> raw);
  Vector apply(const Vector& raw) const;
};

/// Everything needed to map a signal to logits, given fixed banks.
struct Model {
  PruneMask mask;
  Variant variant = Variant::full;
  AgentParams agents;
  MlpHead head;
  FeatureNorm norm;
};

/// Same shapes as the trainable tensors of a Model.
struct GradientSet {
  AgentParams agents;
  MlpHead head;

  static GradientSet zeros_like(const Model& model);
  void add(const GradientSet& other);
  void scale(double factor);
  /// Throws NumericError naming the first tensor holding NaN/Inf.
  void check_finite() const;
};

/// Visits every trainable tensor as (name, data, size); agents first in path
/// order (spatial then temporal), then mlp/w1, mlp/b1, mlp/w2, mlp/b2.
void for_each_tensor(AgentParams& agents, MlpHead& head,
                     const std::function<void(const std::string&, double*, std::size_t)>& f);

struct LabeledSignal {
  STSignal signal;
  int label = 0;
};

/// Raw (unnormalized) feature of one sample, via gcsn_forward + assemble_features.
Vector raw_features(const STSignal& x, const ScatterBanks& banks, const Model& model);
Vector model_logits(const STSignal& x, const ScatterBanks& banks, const Model& model);

struct BackwardResult {
  double loss = 0.0;
  Vector logits;
  GradientSet grads;
};

/// Exact reverse-mode gradient of cross_entropy(model(x), label).
BackwardResult backward(const STSignal& x, int label, const ScatterBanks& banks, const Model& model);

// ---- optimizers ------------------------------------------------------------

enum class OptimizerKind { sgd, adam };
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
  std::int64_t step = 0;
};

void optimizer_step(Model& model, GradientSet& grads, OptimizerState& state,
                    const OptimizerConfig& config);

// ---- training loop ---------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
  int hidden = 512;
  Variant variant = Variant::full;
  double tau = 0.002;
  int js = 20;
  int jt = 5;
  int layers = 2;
  bool select_best = false;
  /// > 0: stop after the first epoch whose training accuracy reaches it.
  double stop_train_accuracy = 0.0;
  bool standardize = true;
  int class_count = 0;  // 0: infer from labels
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
};

/// Fresh model: agents from the fixed shifts, seeded MLP, norm fitted on
/// the training features at initialization.
Model initialize_model(std::span<const LabeledSignal> training, const PruneMask& mask,
                       const ScatterBanks& banks, const TrainConfig& config);

TrainResult train(std::span<const LabeledSignal> training, std::span<const LabeledSignal> validation,
                  const PruneMask& mask, const ScatterBanks& banks, const TrainConfig& config);

/// "epoch\tloss\ttrain_acc\tval_acc" per line.
void write_train_log(std::ostream& out, std::span<const EpochLog> log);

struct EvalResult {
  double accuracy = 0.0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]
};

EvalResult evaluate(std::span<const LabeledSignal> samples, const ScatterBanks& banks,
                    const Model& model);

// ---- checkpoints -----------------------------------------------------------

std::vector<NamedTensor> model_tensors(const Model& model, const ScatterBanks& banks);
/// Rebuilds a model against `mask`; throws ConfigError if the checkpoint
/// disagrees with the mask or banks.
Model model_from_tensors(std::span<const NamedTensor> tensors, const PruneMask& mask,
                         const ScatterBanks& banks);

// ---- gradient check ---------------------------------------------------------

struct GradCheckConfig {
  int n_vertices = 4;
  int n_frames = 5;
  int channels = 3;
  int js = 2;
  int jt = 2;
  int layers = 1;
  int hidden = 8;
  int classes = 3;
  double step = 1e-5;
  double tolerance = 1e-4;
  Variant variant = Variant::full;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t skipped = 0;  // sign of an abs / relu input flips inside the stencil
  double max_relative_error = 0.0;
  std::string worst_tensor;
  bool passed() const { return max_relative_error < tolerance; }
  double tolerance = 1e-4;
};

/// Compares backward() against central differences on a random tiny model.
GradCheckReport gradient_check(const GradCheckConfig& config);

}  // namespace stgcsn
