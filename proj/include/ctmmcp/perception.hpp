// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"

namespace ctmmcp {

enum class Modality : std::uint8_t { Vision, Audio, Proprio };

constexpr std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Vision: return "vision";
    case Modality::Audio: return "audio";
    case Modality::Proprio: return "proprio";
  }
  return "?";
}

struct ModalityDims {
  std::size_t input = 0;
  std::size_t latent = 0;
};

/// Raw input sizes, latent split and fused width. The latents always
/// concatenate in vision, audio, proprio order.
struct PerceptionDims {
  ModalityDims vision{768, 128};
  ModalityDims audio{80, 64};
  ModalityDims proprio{64, 32};
  std::size_t fusion = 256;
  std::size_t audio_window = 256;  // waveform samples per spectrum frame

  const ModalityDims& of(Modality m) const {
    switch (m) {
      case Modality::Vision: return vision;
      case Modality::Audio: return audio;
      case Modality::Proprio: return proprio;
    }
    return vision;
  }
  std::size_t concat_width() const { return vision.latent + audio.latent + proprio.latent; }
};

struct ModalityFrame {
  Modality modality = Modality::Vision;
  Vector values;
};

struct ModalityLatent {
  Modality modality = Modality::Vision;
  Vector latent;
};

struct FusionVector {
  Vector f;
  friend bool operator==(const FusionVector&, const FusionVector&) = default;
};

struct EncoderWeights {
  Matrix vision;   // latent x input
  Matrix audio;
  Matrix proprio;
  Matrix fusion;   // fusion x concat_width

  const Matrix& of(Modality m) const {
    switch (m) {
      case Modality::Vision: return vision;
      case Modality::Audio: return audio;
      case Modality::Proprio: return proprio;
    }
    return vision;
  }

  static EncoderWeights seeded(const PerceptionDims& d, std::uint64_t seed) {
    return {Matrix::uniform(d.vision.latent, d.vision.input, derive_seed(seed, "enc.vision")),
            Matrix::uniform(d.audio.latent, d.audio.input, derive_seed(seed, "enc.audio")),
            Matrix::uniform(d.proprio.latent, d.proprio.input, derive_seed(seed, "enc.proprio")),
            Matrix::uniform(d.fusion, d.concat_width(), derive_seed(seed, "enc.fusion"))};
  }

  static EncoderWeights zeros(const PerceptionDims& d) {
    return {Matrix(d.vision.latent, d.vision.input), Matrix(d.audio.latent, d.audio.input),
            Matrix(d.proprio.latent, d.proprio.input), Matrix(d.fusion, d.concat_width())};
  }

  void validate(const PerceptionDims& d) const {
    for (auto m : {Modality::Vision, Modality::Audio, Modality::Proprio}) {
      const auto& w = of(m);
      require_dim(w.rows(), d.of(m).latent, std::string("encoder rows: ") + std::string(to_string(m)));
      require_dim(w.cols(), d.of(m).input, std::string("encoder cols: ") + std::string(to_string(m)));
      if (!w.all_finite()) throw Error(ErrorKind::NonFiniteInput, "encoder weights", std::string(to_string(m)));
    }
    require_dim(fusion.rows(), d.fusion, "fusion rows");
    require_dim(fusion.cols(), d.concat_width(), "fusion cols");
    if (!fusion.all_finite()) throw Error(ErrorKind::NonFiniteInput, "fusion weights");
  }

  void export_to(TensorMap& out) const {
    out["enc.vision"] = vision;
    out["enc.audio"] = audio;
    out["enc.proprio"] = proprio;
    out["enc.fusion"] = fusion;
  }
};

/// latent = tanh(W x) for the frame's modality.
inline ModalityLatent encode_modality(const ModalityFrame& frame, const EncoderWeights& weights) {
  const Matrix& w = weights.of(frame.modality);
  require_dim(frame.values.size(), w.cols(), "encode_modality input");
  if (!all_finite(frame.values)) throw Error(ErrorKind::NonFiniteInput, "frame values", std::string(to_string(frame.modality)));
  return {frame.modality, tanh_layer(w, frame.values, "encode_modality")};
}

/// Magnitudes of the first `n_bins` DFT coefficients of one rectangular
/// window, evaluated per bin with the Goertzel recurrence.
inline std::vector<double> spectrum(std::span<const double> samples, std::size_t n_bins = 80) {
  if (samples.size() < 2 * n_bins)
    throw Error(ErrorKind::WindowTooShort, "need " + std::to_string(2 * n_bins) + " samples, got " +
                                               std::to_string(samples.size()));
  const double n = static_cast<double>(samples.size());
  std::vector<double> out(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / n;
    const double coeff = 2.0 * std::cos(w);
    double s1 = 0.0, s2 = 0.0;
    for (double x : samples) {
      const double s0 = x + coeff * s1 - s2;
      s2 = s1;
      s1 = s0;
    }
    const double re = s1 - s2 * std::cos(w);
    const double im = s2 * std::sin(w);
    out[k] = std::hypot(re, im);
  }
  return out;
}

/// f = tanh(W_f [vis || aud || pro]).
inline FusionVector fuse(const ModalityLatent& vis, const ModalityLatent& aud,
                         const ModalityLatent& pro, const EncoderWeights& weights) {
  if (vis.modality != Modality::Vision || aud.modality != Modality::Audio ||
      pro.modality != Modality::Proprio)
    throw Error(ErrorKind::DimensionMismatch, "latents must be (vision, audio, proprio)");
  Vector concat;
  concat.reserve(vis.latent.size() + aud.latent.size() + pro.latent.size());
  concat.insert(concat.end(), vis.latent.begin(), vis.latent.end());
  concat.insert(concat.end(), aud.latent.begin(), aud.latent.end());
  concat.insert(concat.end(), pro.latent.begin(), pro.latent.end());
  return {tanh_layer(weights.fusion, concat, "fuse concat")};
}

}  // namespace ctmmcp
