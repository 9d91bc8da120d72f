// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/harness/tasks.hpp"
#include "ctmmcp/harness/world.hpp"
#include "ctmmcp/perception.hpp"

namespace ctmmcp {

/// Lowercased goal words, prefixed "goal:".
inline std::vector<std::string> goal_tokens(const std::string& goal) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back("goal:" + word);
    word.clear();
  };
  for (char ch : goal) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '_')
      word.push_back(static_cast<char>(std::tolower(c)));
    else
      flush();
  }
  flush();
  return out;
}

/// robot_at:<loc>, held:<obj> and at:<obj>:<loc> facts, in map order.
inline std::vector<std::string> world_tokens(const WorldState& w) {
  std::vector<std::string> out{"robot_at:" + w.robot_at};
  for (const auto& [name, o] : w.objects)
    out.push_back(o.held ? "held:" + name : "at:" + name + ":" + o.location);
  return out;
}

/// Adds +1 or -1 at fnv1a64(salt + token) % width; the sign is the hash's top bit.
inline void scatter_tokens(Vector& frame, const std::vector<std::string>& tokens, std::string_view salt) {
  for (const auto& t : tokens) {
    const std::uint64_t h = fnv1a64(std::string(salt) + t);
    frame[h % frame.size()] += (h >> 63) ? -1.0f : 1.0f;
  }
}

/// Sum of one unit sinusoid per token over `window` samples. Token hash bits
/// pick the bin (1..bins-1) and the phase.
inline std::vector<double> token_waveform(const std::vector<std::string>& tokens, std::size_t window,
                                          std::size_t bins) {
  std::vector<double> x(window, 0.0);
  if (tokens.empty() || bins < 2) return x;
  const double amp = 1.0 / static_cast<double>(tokens.size());
  for (const auto& t : tokens) {
    const std::uint64_t h = fnv1a64("a|" + t);
    const double bin = static_cast<double>(1 + h % (bins - 1));
    const double phase = 2.0 * std::numbers::pi * static_cast<double>((h >> 16) & 0xffff) / 65536.0;
    for (std::size_t n = 0; n < window; ++n)
      x[n] += amp * std::sin(2.0 * std::numbers::pi * bin * static_cast<double>(n) / static_cast<double>(window) + phase);
  }
  return x;
}

struct Frames {
  ModalityFrame vision, audio, proprio;
};

/// Vision carries goal and world tokens, proprio the world tokens only, audio
/// the spectrum of the token waveform.
inline Frames featurize(const TaskRecord& task, const WorldState& world, const PerceptionDims& dims) {
  const auto goal = goal_tokens(task.goal);
  const auto facts = world_tokens(world);
  std::vector<std::string> all = goal;
  all.insert(all.end(), facts.begin(), facts.end());

  Frames f{{Modality::Vision, Vector(dims.vision.input, 0.0f)},
           {Modality::Audio, Vector(dims.audio.input, 0.0f)},
           {Modality::Proprio, Vector(dims.proprio.input, 0.0f)}};
  scatter_tokens(f.vision.values, all, "v|");
  scatter_tokens(f.proprio.values, facts, "p|");
  const auto spec = spectrum(token_waveform(all, dims.audio_window, dims.audio.input), dims.audio.input);
  for (std::size_t k = 0; k < spec.size(); ++k) f.audio.values[k] = static_cast<float>(spec[k]);
  return f;
}

inline FusionVector perceive(const Frames& frames, const EncoderWeights& enc) {
  return fuse(encode_modality(frames.vision, enc), encode_modality(frames.audio, enc),
              encode_modality(frames.proprio, enc), enc);
}

}  // namespace ctmmcp
