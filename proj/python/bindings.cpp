#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stgcsn/cli.hpp"
#include "stgcsn/complementary.hpp"
#include "stgcsn/data_io.hpp"
#include "stgcsn/error.hpp"
#include "stgcsn/filterbank.hpp"
#include "stgcsn/scattering.hpp"
#include "stgcsn/training.hpp"

namespace py = pybind11;
using namespace stgcsn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

STSignal to_signal_array(const Array& a) {
  if (a.ndim() != 3) throw ShapeError("signal must have shape (channels, vertices, frames)");
  const auto c = static_cast<std::size_t>(a.shape(0));
  const auto n = static_cast<std::size_t>(a.shape(1));
  const auto t = static_cast<std::size_t>(a.shape(2));
  auto z = STSignal::zeros(c, n, t);
  const auto r = a.unchecked<3>();
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < t; ++j)
        z[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            r(static_cast<py::ssize_t>(k), static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j));
  return z;
}

Array from_signal(const STSignal& z) {
  Array a({z.channels(), z.rows(), z.cols()});
  auto w = a.mutable_unchecked<3>();
  for (std::size_t k = 0; k < z.channels(); ++k)
    for (std::size_t i = 0; i < z.rows(); ++i)
      for (std::size_t j = 0; j < z.cols(); ++j)
        w(static_cast<py::ssize_t>(k), static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(j)) =
            z[k](static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return a;
}

SkeletonSequence to_sequence(const Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("sequence must have shape (frames, joints, 3)");
  auto seq = SkeletonSequence::zeros(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), seq.coords.begin());
  return seq;
}

Array from_sequence(const SkeletonSequence& s) {
  Array a({s.frames, s.joints, 3});
  std::copy(s.coords.begin(), s.coords.end(), a.mutable_data());
  return a;
}

ScatterBanks banks_from(const Matrix& spatial, const Matrix& temporal, int js, int jt) {
  return ScatterBanks::build(Graph(spatial), Graph(temporal), js, jt);
}

PruneMask mask_from(const std::vector<std::string>& paths, int layers) {
  std::set<TreePath> preserved{TreePath{}};
  for (const auto& p : paths) preserved.insert(TreePath::parse(p));
  return PruneMask(std::move(preserved), 0.0, layers);
}

std::vector<std::string> mask_paths(const PruneMask& m) {
  std::vector<std::string> out;
  for (const auto& p : m.preserved()) out.push_back(p.to_string());
  return out;
}

}  // namespace

PYBIND11_MODULE(_stgcsn, m) {
  m.doc() = "Spatio-temporal graph scattering with trainable complementary nodes";

  const auto& base = py::register_exception<Error>(m, "Error", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  m.attr("HAND_JOINTS") = kHandJoints;

  m.def("line_graph", [](int t) { return line_graph(t).adjacency(); }, py::arg("frames"));
  m.def("hand_skeleton_adjacency", [] { return hand_skeleton_graph().adjacency(); });
  m.def("lazy_random_walk", [](const Matrix& adj) { return lazy_random_walk(Graph(adj)).matrix(); },
        py::arg("adjacency"));
  m.def(
      "wavelet_bank",
      [](const Matrix& adj, int j_max) {
        const auto bank = build_wavelet_bank(dyadic_powers(lazy_random_walk(Graph(adj)), j_max), j_max);
        return std::vector<Matrix>(bank.filters().begin(), bank.filters().end());
      },
      py::arg("adjacency"), py::arg("j_max"));
  m.def("row_softmax", &row_softmax, py::arg("m"));
  m.def("init_agent_from_markov", &init_agent_from_markov, py::arg("p"), py::arg("floor") = 1e-12);
  m.def("full_tree_size", &full_tree_size, py::arg("js"), py::arg("jt"), py::arg("layers"));

  m.def(
      "scattering_tree",
      [](const Array& x, const Matrix& spatial, const Matrix& temporal, int js, int jt, int layers) {
        const auto tree = build_full_tree(to_signal_array(x), banks_from(spatial, temporal, js, jt), layers);
        py::dict out;
        for (const auto& [path, z] : tree.nodes) out[py::str(path.to_string())] = from_signal(z);
        return out;
      },
      py::arg("signal"), py::arg("spatial_adjacency"), py::arg("temporal_adjacency"), py::arg("js"),
      py::arg("jt"), py::arg("layers"));

  m.def(
      "prune_mask",
      [](const std::vector<Array>& xs, const Matrix& spatial, const Matrix& temporal, int js, int jt,
         int layers, double tau) {
        std::vector<STSignal> signals;
        for (const auto& x : xs) signals.push_back(to_signal_array(x));
        return mask_paths(compute_prune_mask(signals, banks_from(spatial, temporal, js, jt), layers, tau));
      },
      py::arg("signals"), py::arg("spatial_adjacency"), py::arg("temporal_adjacency"), py::arg("js"),
      py::arg("jt"), py::arg("layers"), py::arg("tau"));

  m.def(
      "scattering_features",
      [](const Array& x, const std::vector<std::string>& paths, const Matrix& spatial, const Matrix& temporal,
         int js, int jt, int layers) {
        const auto banks = banks_from(spatial, temporal, js, jt);
        const auto tree = forward_pruned(to_signal_array(x), mask_from(paths, layers), banks);
        std::vector<TreeNode> nodes;
        for (const auto& [path, z] : tree.nodes) nodes.push_back({NodeKind::fixed, path, z});
        return assemble_features(nodes);
      },
      py::arg("signal"), py::arg("paths"), py::arg("spatial_adjacency"), py::arg("temporal_adjacency"),
      py::arg("js"), py::arg("jt"), py::arg("layers"));

  m.def(
      "gradient_check",
      [](int layers, const std::string& variant, std::uint64_t seed) {
        GradCheckConfig cfg;
        cfg.layers = layers;
        cfg.variant = parse_variant(variant);
        cfg.seed = seed;
        const auto r = gradient_check(cfg);
        py::dict d;
        d["checked"] = r.checked;
        d["skipped"] = r.skipped;
        d["max_relative_error"] = r.max_relative_error;
        d["worst_tensor"] = r.worst_tensor;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("layers") = 1, py::arg("variant") = "full", py::arg("seed") = 7);

  m.def(
      "synth",
      [](const std::string& kind, int classes, int per_class, int frames, std::uint64_t seed, double amplitude,
         double noise) {
        SynthSpec spec;
        spec.kind = parse_synth_kind(kind);
        spec.class_count = classes;
        spec.frames = frames;
        spec.amplitude = amplitude;
        spec.noise = noise;
        const auto data = synth_generate(spec, per_class, seed);
        std::vector<Array> seqs;
        std::vector<int> labels;
        for (const auto& s : data.sequences) {
          seqs.push_back(from_sequence(s));
          labels.push_back(s.label);
        }
        return py::make_tuple(seqs, labels);
      },
      py::arg("kind") = "active_joints", py::arg("classes") = 4, py::arg("per_class") = 10,
      py::arg("frames") = 32, py::arg("seed") = 0, py::arg("amplitude") = 1.0, py::arg("noise") = 0.1);

  m.def(
      "preprocess",
      [](const Array& seq, int clip_frames, int sample_frames, bool center_wrist) {
        return from_signal(preprocess(to_sequence(seq), PreprocessConfig{clip_frames, sample_frames, center_wrist}));
      },
      py::arg("sequence"), py::arg("clip_frames") = kClipFrames, py::arg("sample_frames") = kSampledFrames,
      py::arg("center_wrist") = false);

  m.def(
      "load_sequence", [](const std::string& path) { return from_sequence(load_sequence(path)); },
      py::arg("path"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "stgcsn");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"));
}
