#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stgcsn/graph.hpp"
#include "stgcsn/training.hpp"

namespace stgcsn {

inline constexpr int kHandJoints = 21;
inline constexpr int kClipFrames = 200;
inline constexpr int kSampledFrames = 67;

/// frames x joints x 3 coordinates, stored frame-major then joint-major.
struct SkeletonSequence {
  int frames = 0;
  int joints = kHandJoints;
  std::vector<double> coords;
  int label = 0;
  std::string id;

  double& at(int t, int joint, int axis) {
    return coords[(static_cast<std::size_t>(t) * static_cast<std::size_t>(joints) +
                   static_cast<std::size_t>(joint)) * 3 + static_cast<std::size_t>(axis)];
  }
  double at(int t, int joint, int axis) const {
    return coords[(static_cast<std::size_t>(t) * static_cast<std::size_t>(joints) +
                   static_cast<std::size_t>(joint)) * 3 + static_cast<std::size_t>(axis)];
  }
  static SkeletonSequence zeros(int frames, int joints = kHandJoints);
};

struct Dataset {
  std::vector<SkeletonSequence> sequences;
  int class_count = 0;
  std::string split;
};

/// Text sequence: one frame per line, an optional integer frame index then
/// joints*3 reals (joint 0 x y z, joint 1 x y z, ...).
SkeletonSequence load_sequence(const std::string& path, int joints = kHandJoints);
/// Writes "index x y z ..." lines with round-trip precision.
void write_sequence(const std::string& path, const SkeletonSequence& seq);

/// Keep the first target_len frames, or repeat the last frame up to it.
SkeletonSequence clip_pad(const SkeletonSequence& seq, int target_len = kClipFrames);
/// floor(k * length / count), k = 0..count-1.
std::vector<int> uniform_sample_indices(int length, int count);
SkeletonSequence uniform_sample(const SkeletonSequence& seq, int count = kSampledFrames);
/// Subtracts the wrist (joint 0) position from every joint, per frame.
SkeletonSequence center_on_wrist(const SkeletonSequence& seq);

/// Channel c = coordinate c; entry (joint, frame).
STSignal to_signal(const SkeletonSequence& seq, int joints = kHandJoints, int frames = kSampledFrames);

struct PreprocessConfig {
  int clip_frames = kClipFrames;
  int sample_frames = kSampledFrames;
  bool center_wrist = false;
};

STSignal preprocess(const SkeletonSequence& seq, const PreprocessConfig& config);
std::vector<LabeledSignal> to_labeled_signals(const Dataset& data, const PreprocessConfig& config);

/// Manifest lines: "relative/path<TAB>label". Paths resolve against root.
Dataset load_manifest(const std::string& root, const std::string& manifest_path,
                      const std::string& split, int joints = kHandJoints);
/// Writes each sequence as <root>/<subdir>/<id>.txt plus the manifest.
void write_dataset(const std::string& root, const std::string& subdir,
                   const std::string& manifest_path, const Dataset& data);

enum class SynthKind {
  /// Each class oscillates its own disjoint joint group.
  active_joints,
  /// Classes differ by a spatially constant, zero-temporal-mean oscillation
  /// added to shared base sequences. Constant vectors are fixed points of
  /// every row-stochastic shift, so every H_j annihilates the class term.
  complement_band,
};

std::string to_string(SynthKind k);
SynthKind parse_synth_kind(const std::string& name);

struct SynthSpec {
  SynthKind kind = SynthKind::active_joints;
  int class_count = 4;
  int frames = 32;
  int joints = kHandJoints;
  double noise = 0.1;
  double amplitude = 1.0;
};

/// Deterministic in (spec, n_per_class, seed); classes are balanced.
Dataset synth_generate(const SynthSpec& spec, int n_per_class, std::uint64_t seed);

}  // namespace stgcsn
