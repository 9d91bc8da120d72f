// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>

#include "ctmmcp/core/error.hpp"
#include "ctmmcp/core/rng.hpp"
#include "ctmmcp/core/tensor.hpp"
#include "ctmmcp/core/weight_file.hpp"

namespace ctmmcp {

inline constexpr std::size_t kAffectHidden = 32;
inline constexpr std::size_t kAffectDims = 8;

struct AffectVector {
  std::array<float, kAffectDims> e{};

  double norm() const {
    double acc = 0.0;
    for (float v : e) acc += static_cast<double>(v) * v;
    return std::sqrt(acc);
  }
  friend bool operator==(const AffectVector&, const AffectVector&) = default;
};

struct AffectParams {
  Matrix w1;  // 32 x P
  Matrix w2;  // 8 x 32
  double epsilon0 = 0.75;
  double alpha = 0.5;

  static AffectParams seeded(std::size_t pairs, std::uint64_t seed, double epsilon0 = 0.75,
                             double alpha = 0.5) {
    return {Matrix::uniform(kAffectHidden, pairs, derive_seed(seed, "affect.w1")),
            Matrix::uniform(kAffectDims, kAffectHidden, derive_seed(seed, "affect.w2")), epsilon0,
            alpha};
  }

  static AffectParams zeros(std::size_t pairs, double epsilon0 = 0.75, double alpha = 0.5) {
    return {Matrix(kAffectHidden, pairs), Matrix(kAffectDims, kAffectHidden), epsilon0, alpha};
  }

  void validate(std::size_t pairs) const {
    require_dim(w1.rows(), kAffectHidden, "affect W1 rows");
    require_dim(w1.cols(), pairs, "affect W1 cols");
    require_dim(w2.rows(), kAffectDims, "affect W2 rows");
    require_dim(w2.cols(), kAffectHidden, "affect W2 cols");
    if (!(epsilon0 > 0.0)) throw Error(ErrorKind::ConfigError, "epsilon0 must be positive");
    if (!(alpha >= 0.0)) throw Error(ErrorKind::ConfigError, "alpha must be non-negative");
  }

  void export_to(TensorMap& out) const {
    out["affect.w1"] = w1;
    out["affect.w2"] = w2;
  }
};

/// e = tanh(W2 tanh(W1 S)).
inline AffectVector affect_decode(std::span<const float> sync, const AffectParams& params) {
  const Vector hidden = tanh_layer(params.w1, sync, "affect_decode input");
  const Vector out = tanh_layer(params.w2, hidden, "affect_decode hidden");
  AffectVector e;
  std::copy(out.begin(), out.end(), e.e.begin());
  return e;
}

/// epsilon = epsilon0 (1 + alpha ||e||_2). Not capped here; halting applies the cap.
inline double modulate_epsilon(const AffectVector& e, const AffectParams& params) {
  return params.epsilon0 * (1.0 + params.alpha * e.norm());
}

}  // namespace ctmmcp
