// garble/blur.hpp
//
// Copyright 2026 The garble authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

#include "garble/common.hpp"
#include "garble/signal.hpp"

namespace garble {

// Hyper-parameters of the spectrogram deformation. alpha attenuates the
// low mel bands, beta erases the lowest ones outright, gamma bounds the
// additive uniform noise. low_band_count selects how many bands alpha
// touches.
struct BlurParams {
  double alpha = 1.0;
  int beta = 0;
  double gamma = 0.0;
  int low_band_count = 30;

  std::string label() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "a%g_b%d_g%g", alpha, beta, gamma);
    return buf;
  }
};

inline void check_blur_params(const BlurParams& p, int n_mels) {
  if (!(p.alpha > 0.0 && p.alpha <= 1.0))
    throw std::invalid_argument("blur: alpha must lie in (0, 1]");
  if (p.beta < 0 || p.beta >= n_mels)
    throw std::invalid_argument("blur: beta must lie in [0, n_mels)");
  if (p.gamma < 0.0) throw std::invalid_argument("blur: gamma must be >= 0");
  if (p.low_band_count < 0 || p.low_band_count > n_mels)
    throw std::invalid_argument("blur: low_band_count must lie in [0, n_mels]");
}

// A pre-drawn noise layer. Freezing the draw lets an optimizer evaluate
// the same candidate twice and see the same loss surface.
struct NoiseLayer {
  Eigen::ArrayXXd values;  // [n_mels, n_frames]
};

inline NoiseLayer freeze_noise(const BlurParams& p, int n_mels, int n_frames,
                               std::uint64_t seed) {
  NoiseLayer layer;
  layer.values.resize(n_mels, n_frames);
  Rng rng(seed);
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < n_mels; ++b)
      layer.values(b, t) = rng.uniform(-p.gamma, p.gamma);
  return layer;
}

// Applies the three stages in order: attenuate the first low_band_count
// bands by alpha, zero the first beta bands, add the noise layer. Values
// are not clamped afterwards; negative entries are legal and downstream
// consumers clamp where needed.
inline MelSpectrogram blur(const MelSpectrogram& m, const BlurParams& p,
                           const NoiseLayer& noise) {
  const int n_mels = static_cast<int>(m.bands.rows());
  const int n_frames = static_cast<int>(m.bands.cols());
  check_blur_params(p, n_mels);
  if (noise.values.rows() != n_mels || noise.values.cols() != n_frames)
    throw std::invalid_argument("blur: noise layer shape mismatch");

  MelSpectrogram out;
  out.bands = m.bands;
  if (p.low_band_count > 0)
    out.bands.topRows(p.low_band_count) *= p.alpha;
  if (p.beta > 0)
    out.bands.topRows(p.beta) = 0.0;
  out.bands += noise.values;
  return out;
}

// Convenience overload that draws a fresh noise layer from `seed`.
inline MelSpectrogram blur(const MelSpectrogram& m, const BlurParams& p,
                           std::uint64_t seed) {
  NoiseLayer layer = freeze_noise(p, static_cast<int>(m.bands.rows()),
                                  static_cast<int>(m.bands.cols()), seed);
  return blur(m, p, layer);
}

}  // namespace garble
