#include "stgcsn/data_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "stgcsn/error.hpp"

namespace stgcsn {

SkeletonSequence SkeletonSequence::zeros(int frames, int joints) {
  SkeletonSequence s;
  s.frames = frames;
  s.joints = joints;
  s.coords.assign(static_cast<std::size_t>(frames) * static_cast<std::size_t>(joints) * 3, 0.0);
  return s;
}

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

bool is_integer(const std::string& tok) {
  long long v = 0;
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), last, v);
  return ec == std::errc{} && ptr == last;
}

}  // namespace

SkeletonSequence load_sequence(const std::string& path, int joints) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sequence file: " + path);
  const auto width = static_cast<std::size_t>(joints) * 3;
  SkeletonSequence seq;
  seq.joints = joints;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::vector<std::string> tokens;
    for (std::string tok; ss >> tok;) tokens.push_back(std::move(tok));
    if (tokens.empty()) continue;
    std::size_t first = 0;
    if (tokens.size() == width + 1 && is_integer(tokens[0])) {
      first = 1;
    } else if (tokens.size() != width) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " coordinates (optionally preceded by a frame index), got " +
                       std::to_string(tokens.size()) + " fields");
    }
    for (std::size_t k = first; k < tokens.size(); ++k) {
      double v = 0.0;
      if (!parse_double(tokens[k], v) || !std::isfinite(v)) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": bad number '" + tokens[k] + "'");
      }
      seq.coords.push_back(v);
    }
    ++seq.frames;
  }
  if (seq.frames == 0) throw DataError("empty sequence file: " + path);
  seq.id = std::filesystem::path(path).stem().string();
  return seq;
}

void write_sequence(const std::string& path, const SkeletonSequence& seq) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write sequence file: " + path);
  char buf[40];
  for (int t = 0; t < seq.frames; ++t) {
    out << t;
    for (int j = 0; j < seq.joints; ++j) {
      for (int a = 0; a < 3; ++a) {
        std::snprintf(buf, sizeof buf, " %.17g", seq.at(t, j, a));
        out << buf;
      }
    }
    out << '\n';
  }
}

SkeletonSequence clip_pad(const SkeletonSequence& seq, int target_len) {
  if (seq.frames < 1) throw PreconditionError("clip_pad: empty sequence");
  if (target_len < 1) throw PreconditionError("clip_pad: target length must be >= 1");
  SkeletonSequence out = SkeletonSequence::zeros(target_len, seq.joints);
  out.label = seq.label;
  out.id = seq.id;
  const auto frame = static_cast<std::size_t>(seq.joints) * 3;
  for (int t = 0; t < target_len; ++t) {
    const int src = std::min(t, seq.frames - 1);
    std::copy_n(seq.coords.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(src) * frame),
                frame, out.coords.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(t) * frame));
  }
  return out;
}

std::vector<int> uniform_sample_indices(int length, int count) {
  if (count < 1) throw PreconditionError("uniform_sample: count must be >= 1");
  if (count > length) {
    throw PreconditionError("uniform_sample: cannot take " + std::to_string(count) +
                            " frames from " + std::to_string(length));
  }
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    idx[static_cast<std::size_t>(k)] = static_cast<int>(
        static_cast<long long>(k) * length / count);
  }
  return idx;
}

SkeletonSequence uniform_sample(const SkeletonSequence& seq, int count) {
  const auto idx = uniform_sample_indices(seq.frames, count);
  SkeletonSequence out = SkeletonSequence::zeros(count, seq.joints);
  out.label = seq.label;
  out.id = seq.id;
  for (int k = 0; k < count; ++k) {
    for (int j = 0; j < seq.joints; ++j) {
      for (int a = 0; a < 3; ++a) out.at(k, j, a) = seq.at(idx[static_cast<std::size_t>(k)], j, a);
    }
  }
  return out;
}

SkeletonSequence center_on_wrist(const SkeletonSequence& seq) {
  SkeletonSequence out = seq;
  for (int t = 0; t < seq.frames; ++t) {
    for (int j = 0; j < seq.joints; ++j) {
      for (int a = 0; a < 3; ++a) out.at(t, j, a) = seq.at(t, j, a) - seq.at(t, 0, a);
    }
  }
  return out;
}

STSignal to_signal(const SkeletonSequence& seq, int joints, int frames) {
  if (seq.joints != joints || seq.frames != frames) {
    throw ShapeError("to_signal: sequence " + seq.id + " is " + std::to_string(seq.frames) +
                     " frames x " + std::to_string(seq.joints) + " joints, expected " +
                     std::to_string(frames) + " x " + std::to_string(joints));
  }
  auto z = STSignal::zeros(3, static_cast<std::size_t>(joints), static_cast<std::size_t>(frames));
  for (int a = 0; a < 3; ++a) {
    for (int j = 0; j < joints; ++j) {
      for (int t = 0; t < frames; ++t) z[static_cast<std::size_t>(a)](j, t) = seq.at(t, j, a);
    }
  }
  return z;
}

STSignal preprocess(const SkeletonSequence& seq, const PreprocessConfig& config) {
  auto s = uniform_sample(clip_pad(seq, config.clip_frames), config.sample_frames);
  if (config.center_wrist) s = center_on_wrist(s);
  return to_signal(s, s.joints, config.sample_frames);
}

std::vector<LabeledSignal> to_labeled_signals(const Dataset& data, const PreprocessConfig& config) {
  std::vector<LabeledSignal> out;
  out.reserve(data.sequences.size());
  for (const auto& s : data.sequences) out.push_back({preprocess(s, config), s.label});
  return out;
}

Dataset load_manifest(const std::string& root, const std::string& manifest_path,
                      const std::string& split, int joints) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path);
  Dataset data;
  data.split = split;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.rfind('\t');
    int label = -1;
    if (tab == std::string::npos || !is_integer(line.substr(tab + 1)) ||
        (label = std::stoi(line.substr(tab + 1))) < 0) {
      throw ParseError(manifest_path + ":" + std::to_string(line_no) +
                       ": expected 'relative/path<TAB>label'");
    }
    const auto rel = line.substr(0, tab);
    auto seq = load_sequence((std::filesystem::path(root) / rel).string(), joints);
    seq.label = label;
    seq.id = rel;
    data.class_count = std::max(data.class_count, label + 1);
    data.sequences.push_back(std::move(seq));
  }
  if (data.sequences.empty()) throw DataError("manifest lists no sequences: " + manifest_path);
  return data;
}

void write_dataset(const std::string& root, const std::string& subdir,
                   const std::string& manifest_path, const Dataset& data) {
  const auto dir = std::filesystem::path(root) / subdir;
  std::filesystem::create_directories(dir);
  std::ofstream manifest(manifest_path);
  if (!manifest) throw DataError("cannot write manifest: " + manifest_path);
  for (const auto& s : data.sequences) {
    const auto rel = (std::filesystem::path(subdir) / (s.id + ".txt")).generic_string();
    write_sequence((std::filesystem::path(root) / rel).string(), s);
    manifest << rel << '\t' << s.label << '\n';
  }
}

std::string to_string(SynthKind k) {
  return k == SynthKind::active_joints ? "active_joints" : "complement_band";
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "active_joints") return SynthKind::active_joints;
  if (name == "complement_band") return SynthKind::complement_band;
  throw ConfigError("unknown synthetic kind '" + name + "' (expected active_joints or complement_band)");
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::mt19937_64 sample_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
  return std::mt19937_64(seq);
}

SkeletonSequence active_joints_sample(const SynthSpec& spec, int label, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::uniform_int_distribution<int> freq(1, 2);
  auto s = SkeletonSequence::zeros(spec.frames, spec.joints);
  for (int j = 0; j < spec.joints; ++j) {
    const bool active = j % spec.class_count == label;
    for (int a = 0; a < 3; ++a) {
      const double f = freq(rng);
      const double ph = phase(rng);
      for (int t = 0; t < spec.frames; ++t) {
        double v = noise(rng);
        if (active) v += spec.amplitude * std::sin(kTwoPi * f * t / spec.frames + ph);
        s.at(t, j, a) = v;
      }
    }
  }
  return s;
}

/// Class-independent part of a complement-band sample.
SkeletonSequence complement_base(const SynthSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  std::uniform_int_distribution<int> freq(1, 3);
  auto s = SkeletonSequence::zeros(spec.frames, spec.joints);
  for (int j = 0; j < spec.joints; ++j) {
    for (int a = 0; a < 3; ++a) {
      const double offset = 0.1 * gauss(rng);
      const double amp = 0.3 * std::abs(gauss(rng));
      const double f = freq(rng);
      const double ph = phase(rng);
      for (int t = 0; t < spec.frames; ++t) {
        s.at(t, j, a) = offset + amp * std::sin(kTwoPi * f * t / spec.frames + ph) +
                        spec.noise * gauss(rng);
      }
    }
  }
  return s;
}

}  // namespace

Dataset synth_generate(const SynthSpec& spec, int n_per_class, std::uint64_t seed) {
  if (spec.class_count < 1 || spec.frames < 2 || spec.joints < 2 || n_per_class < 1) {
    throw ConfigError("synth_generate: classes, frames, joints and n_per_class must be positive");
  }
  Dataset data;
  data.class_count = spec.class_count;
  data.split = "synthetic";
  char id[64];
  if (spec.kind == SynthKind::active_joints) {
    for (int k = 0; k < spec.class_count; ++k) {
      for (int i = 0; i < n_per_class; ++i) {
        auto rng = sample_rng(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i));
        auto s = active_joints_sample(spec, k, rng);
        s.label = k;
        std::snprintf(id, sizeof id, "c%02d_s%04d", k, i);
        s.id = id;
        data.sequences.push_back(std::move(s));
      }
    }
    return data;
  }

  // complement_band: base i is shared by every class. Class k > 0 adds
  // amplitude * (1 + (k - 1) / 3) * cos(2 pi f t / T + phase) to coordinate
  // (k - 1) % 3 of all joints; class 0 adds nothing. The oscillation has an
  // integer number of periods, so its temporal mean vanishes.
  const int f = std::max(1, spec.frames / 8);
  std::vector<SkeletonSequence> bases;
  std::vector<std::array<double, 3>> phases;
  for (int i = 0; i < n_per_class; ++i) {
    auto rng = sample_rng(seed, 0xBA5E, static_cast<std::uint64_t>(i));
    bases.push_back(complement_base(spec, rng));
    std::uniform_real_distribution<double> phase(0.0, kTwoPi);
    phases.push_back({phase(rng), phase(rng), phase(rng)});
  }
  for (int k = 0; k < spec.class_count; ++k) {
    for (int i = 0; i < n_per_class; ++i) {
      auto s = bases[static_cast<std::size_t>(i)];
      for (int a = 0; a < 3; ++a) {
        if (k == 0 || (k - 1) % 3 != a) continue;
        const double amp = spec.amplitude * (1 + (k - 1) / 3);
        const double ph = phases[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)];
        for (int t = 0; t < spec.frames; ++t) {
          const double w = amp * std::cos(kTwoPi * f * t / spec.frames + ph);
          for (int j = 0; j < spec.joints; ++j) s.at(t, j, a) += w;
        }
      }
      s.label = k;
      std::snprintf(id, sizeof id, "c%02d_s%04d", k, i);
      s.id = id;
      data.sequences.push_back(std::move(s));
    }
  }
  return data;
}

}  // namespace stgcsn
