#include "stgcsn/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "stgcsn/data_io.hpp"
#include "stgcsn/error.hpp"
#include "stgcsn/training.hpp"

namespace stgcsn {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
  std::string data_root = ".";
  std::string train_manifest;
  std::string test_manifest;
  std::string edges;
  std::string out = "out";
  std::string mask;
  std::string checkpoint;
  double tau = 0.002;
  int js = 20;
  int jt = 5;
  int layers = 2;
  std::string variant = "full";
  std::uint64_t seed = 0;
  bool deterministic = false;
  int epochs = 100;
  double lr = 1e-3;
  int batch = 32;
  int hidden = 512;
  std::string optimizer = "adam";
  bool select_best = false;
  double stop_train_accuracy = 0.0;
  bool no_standardize = false;
  int clip_frames = kClipFrames;
  int sample_frames = kSampledFrames;
  bool center_wrist = false;
  std::size_t node_cap = kDefaultNodeCap;
  // synth
  std::string kind = "active_joints";
  int classes = 4;
  int per_class = 10;
  int test_per_class = 0;
  int frames = 32;
  double amplitude = 1.0;
  double noise = 0.1;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("invalid configuration: " + what);
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) throw ConfigError(flag + " is required for this command");
  if (!fs::exists(path)) throw DataError(flag + ": no such file: " + path);
}

std::string resolve(const std::string& explicit_path, const std::string& out, const char* name) {
  return explicit_path.empty() ? (fs::path(out) / name).string() : explicit_path;
}

void validate_common(const RunConfig& c) {
  require(c.js >= 1, "js must be >= 1");
  require(c.jt >= 1, "jt must be >= 1");
  require(c.layers >= 1, "layers must be >= 1");
  require(c.tau >= 0.0, "tau must be >= 0");
  require(c.epochs >= 0, "epochs must be >= 0");
  require(c.lr >= 0.0, "lr must be >= 0");
  require(c.batch >= 1, "batch must be >= 1");
  require(c.hidden >= 1, "hidden must be >= 1");
  require(c.stop_train_accuracy >= 0.0 && c.stop_train_accuracy <= 1.0,
          "stop-train-accuracy must be in [0, 1]");
  require(c.clip_frames >= 1, "clip-frames must be >= 1");
  require(c.sample_frames >= 2 && c.sample_frames <= c.clip_frames,
          "sample-frames must be in [2, clip-frames]");
  require(!c.out.empty(), "out must be set");
  parse_variant(c.variant);
  parse_optimizer(c.optimizer);
}

PreprocessConfig preprocess_config(const RunConfig& c) {
  return PreprocessConfig{c.clip_frames, c.sample_frames, c.center_wrist};
}

Graph spatial_graph(const RunConfig& c) {
  return c.edges.empty() ? hand_skeleton_graph() : load_edge_list(c.edges, kHandJoints);
}

ScatterBanks make_banks(const RunConfig& c) {
  return ScatterBanks::build(spatial_graph(c), line_graph(c.sample_frames), c.js, c.jt);
}

TrainConfig train_config(const RunConfig& c, Variant variant, int classes) {
  TrainConfig t;
  t.learning_rate = c.lr;
  t.epochs = c.epochs;
  t.batch_size = c.batch;
  t.seed = c.seed;
  t.optimizer = parse_optimizer(c.optimizer);
  t.hidden = c.hidden;
  t.variant = variant;
  t.tau = c.tau;
  t.js = c.js;
  t.jt = c.jt;
  t.layers = c.layers;
  t.select_best = c.select_best;
  t.stop_train_accuracy = c.stop_train_accuracy;
  t.standardize = !c.no_standardize;
  t.class_count = classes;
  return t;
}

struct LoadedSplit {
  Dataset data;
  std::vector<LabeledSignal> signals;
};

LoadedSplit load_split(const RunConfig& c, const std::string& manifest, const std::string& split) {
  LoadedSplit s;
  s.data = load_manifest(c.data_root, manifest, split, kHandJoints);
  s.signals = to_labeled_signals(s.data, preprocess_config(c));
  return s;
}

std::vector<STSignal> signals_only(std::span<const LabeledSignal> xs) {
  std::vector<STSignal> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back(x.signal);
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

std::string prune_report(const PruneMask& mask, int js, int jt) {
  std::ostringstream r;
  r << "nodes_before\t" << full_tree_size(js, jt, mask.layers()) << '\n';
  r << "nodes_after\t" << mask.size() << '\n';
  r << "layer\tbefore\tafter\n";
  const auto counts = mask.layer_counts();
  for (int l = 0; l <= mask.layers(); ++l) {
    r << l << '\t' << full_tree_size(js, jt, l) - (l == 0 ? 0 : full_tree_size(js, jt, l - 1)) << '\t'
      << counts[static_cast<std::size_t>(l)] << '\n';
  }
  return r.str();
}

PruneMask load_mask(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mask: " + path);
  return PruneMask::read(in);
}

PruneMask mask_for_training(const RunConfig& c, std::span<const LabeledSignal> training,
                            const ScatterBanks& banks, bool& computed) {
  computed = c.mask.empty();
  if (!computed) {
    auto mask = load_mask(c.mask);
    if (mask.layers() != c.layers) {
      throw ConfigError("mask has " + std::to_string(mask.layers()) + " layers but --layers is " +
                        std::to_string(c.layers));
    }
    return mask;
  }
  const auto xs = signals_only(training);
  return compute_prune_mask(xs, banks, c.layers, c.tau);
}

std::string mask_text(const PruneMask& mask) {
  std::ostringstream s;
  mask.write(s);
  return s.str();
}

std::string checkpoint_bytes(const Model& model, const ScatterBanks& banks) {
  std::ostringstream s(std::ios::binary);
  const auto tensors = model_tensors(model, banks);
  write_checkpoint(s, tensors);
  return s.str();
}

Model load_model(const std::string& path, const PruneMask& mask, const ScatterBanks& banks) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  const auto tensors = read_checkpoint(in);
  return model_from_tensors(tensors, mask, banks);
}

std::string parameter_summary(const Model& model) {
  std::ostringstream s;
  s << "parameters agents=" << model.agents.parameter_count()
    << " mlp=" << model.head.parameter_count()
    << " total=" << model.agents.parameter_count() + model.head.parameter_count() << '\n';
  return s.str();
}

// ---- commands ---------------------------------------------------------------

int cmd_prune(const RunConfig& c) {
  validate_common(c);
  require_file(c.train_manifest, "--train-manifest");
  const auto train = load_split(c, c.train_manifest, "train");
  const auto banks = make_banks(c);
  const auto xs = signals_only(train.signals);
  const auto mask = compute_prune_mask(xs, banks, c.layers, c.tau);
  fs::create_directories(c.out);
  write_text(resolve(c.mask, c.out, "mask.txt"), mask_text(mask));
  const auto report = prune_report(mask, c.js, c.jt);
  write_text(fs::path(c.out) / "prune_report.txt", report);
  std::cout << report;
  return kExitOk;
}

int cmd_train(const RunConfig& c) {
  validate_common(c);
  require_file(c.train_manifest, "--train-manifest");
  if (!c.mask.empty()) require_file(c.mask, "--mask");
  const auto variant = parse_variant(c.variant);
  const auto train_split = load_split(c, c.train_manifest, "train");
  std::optional<LoadedSplit> test_split;
  if (!c.test_manifest.empty()) {
    require_file(c.test_manifest, "--test-manifest");
    test_split = load_split(c, c.test_manifest, "test");
  }
  const auto banks = make_banks(c);
  bool computed = false;
  const auto mask = mask_for_training(c, train_split.signals, banks, computed);
  const int classes = std::max(train_split.data.class_count,
                               test_split ? test_split->data.class_count : 0);
  const std::span<const LabeledSignal> val =
      test_split ? std::span<const LabeledSignal>(test_split->signals) : std::span<const LabeledSignal>{};
  const auto result = train(train_split.signals, val, mask, banks, train_config(c, variant, classes));

  fs::create_directories(c.out);
  if (computed) write_text(fs::path(c.out) / "mask.txt", mask_text(mask));
  write_text(resolve(c.checkpoint, c.out, "checkpoint.stgc"), checkpoint_bytes(result.model, banks));
  std::ostringstream log;
  write_train_log(log, result.log);
  write_text(fs::path(c.out) / "train_log.tsv", log.str());
  std::cout << parameter_summary(result.model);
  if (!result.log.empty()) {
    const auto& last = result.log.back();
    std::cout << "final epoch " << last.epoch << " loss " << format_double("%.6f", last.loss)
              << " train_acc " << format_double("%.4f", last.train_accuracy) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& c) {
  validate_common(c);
  const auto manifest = c.test_manifest.empty() ? c.train_manifest : c.test_manifest;
  require_file(manifest, "--test-manifest");
  const auto mask_path = resolve(c.mask, c.out, "mask.txt");
  const auto ckpt_path = resolve(c.checkpoint, c.out, "checkpoint.stgc");
  require_file(mask_path, "--mask");
  require_file(ckpt_path, "--checkpoint");
  const auto split = load_split(c, manifest, "test");
  const auto banks = make_banks(c);
  const auto mask = load_mask(mask_path);
  const auto model = load_model(ckpt_path, mask, banks);
  const auto result = evaluate(split.signals, banks, model);
  std::ostringstream conf;
  conf << "# rows: true label, columns: predicted label\n";
  for (const auto& row : result.confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) conf << (j ? "\t" : "") << row[j];
    conf << '\n';
  }
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "confusion.tsv", conf.str());
  std::cout << "accuracy " << format_double("%.4f", result.accuracy) << '\n';
  return kExitOk;
}

int cmd_extract(const RunConfig& c) {
  validate_common(c);
  require_file(c.train_manifest, "--train-manifest");
  if (!c.mask.empty()) require_file(c.mask, "--mask");
  if (!c.checkpoint.empty()) require_file(c.checkpoint, "--checkpoint");
  const auto train_split = load_split(c, c.train_manifest, "train");
  std::optional<LoadedSplit> test_split;
  if (!c.test_manifest.empty()) {
    require_file(c.test_manifest, "--test-manifest");
    test_split = load_split(c, c.test_manifest, "test");
  }
  const auto banks = make_banks(c);
  bool computed = false;
  const auto mask = mask_for_training(c, train_split.signals, banks, computed);

  Model model;
  if (!c.checkpoint.empty()) {
    model = load_model(c.checkpoint, mask, banks);
  } else {
    // Standalone scattering features: fixed tree only, no classifier.
    model.mask = mask;
    model.variant = Variant::fixed_only;
  }
  fs::create_directories(c.out);
  if (computed) write_text(fs::path(c.out) / "mask.txt", mask_text(mask));
  auto dump = [&](const LoadedSplit& split, const char* name) {
    std::ofstream out(fs::path(c.out) / name, std::ios::binary);
    if (!out) throw DataError(std::string("cannot write ") + name);
    std::uint32_t index = 0;
    for (const auto& s : split.signals) {
      const Vector f = raw_features(s.signal, banks, model);
      write_feature_record(out, index++, std::span<const double>(f.data(), static_cast<std::size_t>(f.size())));
    }
  };
  dump(train_split, "features_train.stgf");
  if (test_split) dump(*test_split, "features_test.stgf");
  std::ofstream manifest(fs::path(c.out) / "features_paths.txt");
  const auto layout = feature_layout(mask, model.variant);
  write_feature_manifest(manifest, layout);
  std::cout << "extracted " << layout.size() << " nodes x " << 3 * banks.n_vertices()
            << " values per sample (" << to_string(model.variant) << ")\n";
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& c) {
  const auto variant = parse_variant(c.variant);
  bool ok = true;
  for (int layers : {1, 2}) {
    GradCheckConfig g;
    g.layers = layers;
    g.variant = variant;
    g.seed = c.seed + 7;
    const auto r = gradient_check(g);
    std::cout << "layers " << layers << " checked " << r.checked << " skipped " << r.skipped
              << " max_rel_err " << format_double("%.3e", r.max_relative_error) << " ("
              << r.worst_tensor << ") " << (r.passed() ? "PASS" : "FAIL") << '\n';
    ok = ok && r.passed();
  }
  return ok ? kExitOk : kExitNumeric;
}

int cmd_ablate(const RunConfig& c) {
  validate_common(c);
  require_file(c.train_manifest, "--train-manifest");
  if (!c.mask.empty()) require_file(c.mask, "--mask");
  const auto train_split = load_split(c, c.train_manifest, "train");
  std::optional<LoadedSplit> test_split;
  if (!c.test_manifest.empty()) {
    require_file(c.test_manifest, "--test-manifest");
    test_split = load_split(c, c.test_manifest, "test");
  }
  const auto banks = make_banks(c);
  bool computed = false;
  const auto mask = mask_for_training(c, train_split.signals, banks, computed);
  const auto& eval_set = test_split ? test_split->signals : train_split.signals;
  const int classes = std::max(train_split.data.class_count,
                               test_split ? test_split->data.class_count : 0);
  std::ostringstream table;
  table << "variant          accuracy\n";
  for (auto v : {Variant::fixed_only, Variant::trainable_only, Variant::no_complement, Variant::full}) {
    const auto result =
        train(train_split.signals, {}, mask, banks, train_config(c, v, classes));
    const auto acc = evaluate(eval_set, banks, result.model).accuracy;
    auto name = to_string(v);
    name.resize(17, ' ');
    table << name << format_double("%.4f", acc) << '\n';
  }
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "ablation.txt", table.str());
  std::cout << table.str();
  return kExitOk;
}

int cmd_synth(const RunConfig& c) {
  require(c.classes >= 1, "classes must be >= 1");
  require(c.per_class >= 1, "per-class must be >= 1");
  require(c.test_per_class >= 0, "test-per-class must be >= 0");
  require(c.frames >= 2, "frames must be >= 2");
  SynthSpec spec;
  spec.kind = parse_synth_kind(c.kind);
  spec.class_count = c.classes;
  spec.frames = c.frames;
  spec.amplitude = c.amplitude;
  spec.noise = c.noise;
  const int test_n = c.test_per_class > 0 ? c.test_per_class : c.per_class;
  const auto train_set = synth_generate(spec, c.per_class, c.seed);
  const auto test_set = synth_generate(spec, test_n, c.seed + 1000003);
  fs::create_directories(c.data_root);
  write_dataset(c.data_root, "train", (fs::path(c.data_root) / "train.tsv").string(), train_set);
  write_dataset(c.data_root, "test", (fs::path(c.data_root) / "test.tsv").string(), test_set);
  std::cout << "wrote " << train_set.sequences.size() << " train and " << test_set.sequences.size()
            << " test sequences (" << to_string(spec.kind) << ") to " << c.data_root << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Spatio-temporal graph complementary scattering networks"};
  app.set_config("--config", "", "key=value configuration file; flags override it");
  app.require_subcommand(1);
  RunConfig c;

  app.add_option("--data-root", c.data_root, "Root directory for manifest paths");
  app.add_option("--train-manifest", c.train_manifest, "Training split manifest");
  app.add_option("--test-manifest", c.test_manifest, "Test split manifest");
  app.add_option("--edges", c.edges, "Spatial skeleton edge list (default: 21-joint hand)");
  app.add_option("--out", c.out, "Output directory");
  app.add_option("--mask", c.mask, "Prune mask file");
  app.add_option("--checkpoint", c.checkpoint, "Checkpoint file");
  app.add_option("--tau", c.tau, "Pruning threshold");
  app.add_option("--js", c.js, "Spatial wavelet scales");
  app.add_option("--jt", c.jt, "Temporal wavelet scales");
  app.add_option("--layers", c.layers, "Scattering layers");
  app.add_option("--variant", c.variant, "full | fixed_only | trainable_only | no_complement");
  app.add_option("--seed", c.seed, "Random seed");
  app.add_flag("--deterministic", c.deterministic, "Byte-reproducible outputs");
  app.add_option("--epochs", c.epochs, "Training epochs");
  app.add_option("--lr", c.lr, "Learning rate");
  app.add_option("--batch", c.batch, "Batch size");
  app.add_option("--hidden", c.hidden, "MLP hidden width");
  app.add_option("--optimizer", c.optimizer, "adam | sgd");
  app.add_flag("--select-best", c.select_best, "Keep the best epoch by test accuracy");
  app.add_option("--stop-train-accuracy", c.stop_train_accuracy,
                 "Stop once training accuracy reaches this value (0 disables)");
  app.add_flag("--no-standardize", c.no_standardize, "Disable feature standardization");
  app.add_option("--clip-frames", c.clip_frames, "Clip/pad length");
  app.add_option("--sample-frames", c.sample_frames, "Uniformly sampled frames");
  app.add_flag("--center-wrist", c.center_wrist, "Subtract the wrist position per frame");
  app.add_option("--node-cap", c.node_cap, "Largest full tree allowed");
  app.add_option("--kind", c.kind, "Synthetic kind: active_joints | complement_band");
  app.add_option("--classes", c.classes, "Synthetic class count");
  app.add_option("--per-class", c.per_class, "Synthetic training sequences per class");
  app.add_option("--test-per-class", c.test_per_class, "Synthetic test sequences per class");
  app.add_option("--frames", c.frames, "Synthetic sequence length");
  app.add_option("--amplitude", c.amplitude, "Synthetic class-signal amplitude");
  app.add_option("--noise", c.noise, "Synthetic noise level");

  int (*handler)(const RunConfig&) = nullptr;
  auto sub = [&](const char* name, const char* help, int (*fn)(const RunConfig&)) {
    auto* s = app.add_subcommand(name, help);
    s->fallthrough();
    s->callback([&handler, fn] { handler = fn; });
  };
  sub("prune", "Compute the prune mask from the training split", cmd_prune);
  sub("train", "Train agents and classifier; writes checkpoint and log", cmd_train);
  sub("eval", "Evaluate a checkpoint on the test split", cmd_eval);
  sub("extract", "Write feature caches", cmd_extract);
  sub("gradcheck", "Finite-difference check of the analytic gradients", cmd_gradcheck);
  sub("ablate", "Train and evaluate all four variants", cmd_ablate);
  sub("synth", "Generate a synthetic dataset", cmd_synth);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    return handler(c);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace stgcsn
