// garble/tts.hpp
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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "garble/common.hpp"
#include "garble/signal.hpp"

namespace garble {

// Token rows in synthesis order. tokens holds the normalized text; each
// character (including spaces) owns one row of the matrix.
struct LinguisticEmbedding {
  Eigen::MatrixXd rows;  // [n_tokens, dim]
  std::string tokens;
};

struct GateLogits {
  Eigen::ArrayXd logits;  // [n_frames]
};

struct DecodeResult {
  MelSpectrogram mel;
  GateLogits gate;
};

// Synthesis backend contract used by the attack loops. decode must be
// deterministic; decode_vjp must map a cotangent on (mel, gate) back to a
// cotangent on the embedding. Backends without analytic gradients inherit
// the central finite-difference fallback.
class TtsBackend {
 public:
  virtual ~TtsBackend() = default;

  virtual LinguisticEmbedding encode(const std::string& text) const = 0;
  virtual DecodeResult decode(const Eigen::MatrixXd& emb) const = 0;
  virtual Waveform vocode(const MelSpectrogram& mel) const = 0;
  virtual int n_mels() const = 0;
  virtual int sample_rate_hz() const { return 22050; }

  // Default perturbation bound for this backend's embedding space.
  virtual double default_threshold() const = 0;

  virtual Eigen::MatrixXd decode_vjp(const Eigen::MatrixXd& emb,
                                     const Eigen::ArrayXXd& cot_mel,
                                     const Eigen::ArrayXd& cot_gate) const {
    return decode_vjp_fd(emb, cot_mel, cot_gate, fd_step_);
  }

  void set_fd_step(double h) { fd_step_ = h; }

 protected:
  // Central finite differences over every embedding entry. Quadratic in
  // the embedding size, intended for small external decoders only.
  Eigen::MatrixXd decode_vjp_fd(const Eigen::MatrixXd& emb,
                                const Eigen::ArrayXXd& cot_mel,
                                const Eigen::ArrayXd& cot_gate, double h) const {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(emb.rows(), emb.cols());
    Eigen::MatrixXd probe = emb;
    for (int i = 0; i < emb.rows(); ++i) {
      for (int j = 0; j < emb.cols(); ++j) {
        probe(i, j) = emb(i, j) + h;
        DecodeResult plus = decode(probe);
        probe(i, j) = emb(i, j) - h;
        DecodeResult minus = decode(probe);
        probe(i, j) = emb(i, j);
        double acc = ((plus.mel.bands - minus.mel.bands) * cot_mel).sum();
        acc += ((plus.gate.logits - minus.gate.logits) * cot_gate).sum();
        grad(i, j) = acc / (2.0 * h);
      }
    }
    return grad;
  }

 private:
  double fd_step_ = 1e-3;
};

// Configuration of the bundled deterministic synthesizer. Everything is
// derived from `seed`, so two profiles with equal fields produce
// bit-identical synthesis.
struct TtsProfile {
  int dim = 32;
  int frames_per_token = 5;
  int n_mels = 80;
  int smoothing_width = 3;    // odd; triangular kernel
  double table_scale = 6.0;   // embedding entries are uniform in +-table_scale
  double map_scale = 8.0;     // decoder map entries are gaussian * map_scale
  double gate_slope = 0.25;
  int vocoder_iters = 10;
  // Source spectral envelope in dB, interpolated linearly between anchors
  // at fixed band fractions. The voice concentrates its energy in two
  // formant-like regions: a low shelf (8%..25% of the bands) and a
  // presence peak (70%..82%), separated by a quiet valley, with rolled
  // off sub-bass and highs. Concentration matters: a peak-normalized
  // waveform has a fixed energy budget, and only bands well above the
  // playback-noise level carry usable temporal structure.
  double tilt_bass_db = -14.0;
  double tilt_shelf_db = 17.0;
  double tilt_presence_db = 14.0;
  double tilt_top_db = -24.0;
  std::uint64_t seed = 0x67617262u;  // arbitrary fixed default
};

inline const std::string& tts_charset() {
  static const std::string cs = "abcdefghijklmnopqrstuvwxyz0123456789 '";
  return cs;
}

// Deterministic character-level synthesizer. Each character looks up a
// fixed embedding row; decode expands every row into frames_per_token mel
// columns through per-offset linear maps and smooths along time. The gate
// is a fixed descending ramp hitting zero at the last frame; it does not
// depend on the embedding.
class ToyTts : public TtsBackend {
 public:
  explicit ToyTts(TtsProfile profile = {}) : profile_(profile) {
    if (profile_.dim <= 0 || profile_.frames_per_token <= 0 || profile_.n_mels <= 0)
      throw std::invalid_argument("ToyTts: bad profile sizes");
    if (profile_.smoothing_width < 1 || profile_.smoothing_width % 2 == 0)
      throw std::invalid_argument("ToyTts: smoothing_width must be odd and >= 1");
    const std::string& cs = tts_charset();
    table_ = Eigen::MatrixXd(static_cast<int>(cs.size()), profile_.dim);
    Rng table_rng(derive_seed(profile_.seed, "embedding-table"));
    for (int r = 0; r < table_.rows(); ++r)
      for (int c = 0; c < table_.cols(); ++c)
        table_(r, c) = table_rng.uniform(-profile_.table_scale, profile_.table_scale);

    maps_.resize(static_cast<std::size_t>(profile_.frames_per_token));
    for (int k = 0; k < profile_.frames_per_token; ++k) {
      Rng map_rng(derive_seed(profile_.seed, "frame-map-" + std::to_string(k)));
      Eigen::MatrixXd& a = maps_[static_cast<std::size_t>(k)];
      a.resize(profile_.n_mels, profile_.dim);
      for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c)
          a(r, c) = map_rng.gaussian() * profile_.map_scale;
    }

    // The envelope scales the map rows, so decode and its adjoint stay
    // consistent without any special casing.
    const double valley_db = -6.0;
    const double anchors_x[] = {0.0, 0.08, 0.22, 0.28, 0.60, 0.70, 0.82, 0.90, 1.0};
    const double anchors_db[] = {profile_.tilt_bass_db,     profile_.tilt_shelf_db,
                                 profile_.tilt_shelf_db,    valley_db,
                                 valley_db,                 profile_.tilt_presence_db,
                                 profile_.tilt_presence_db, profile_.tilt_top_db,
                                 profile_.tilt_top_db};
    constexpr int n_anchors = 9;
    for (int b = 0; b < profile_.n_mels; ++b) {
      const double x =
          profile_.n_mels > 1 ? static_cast<double>(b) / (profile_.n_mels - 1) : 0.0;
      double db = anchors_db[n_anchors - 1];
      for (int i = 0; i + 1 < n_anchors; ++i)
        if (x <= anchors_x[i + 1]) {
          const double t = (x - anchors_x[i]) / (anchors_x[i + 1] - anchors_x[i]);
          db = anchors_db[i] + (anchors_db[i + 1] - anchors_db[i]) * t;
          break;
        }
      const double gain = std::pow(10.0, db / 20.0);
      for (auto& a : maps_) a.row(b) *= gain;
    }

    const int half = profile_.smoothing_width / 2;
    kernel_.resize(profile_.smoothing_width);
    double total = 0.0;
    for (int j = -half; j <= half; ++j) {
      kernel_[static_cast<std::size_t>(j + half)] = half + 1 - std::abs(j);
      total += kernel_[static_cast<std::size_t>(j + half)];
    }
    for (double& v : kernel_) v /= total;

    fb_ = make_mel_filterbank(profile_.n_mels, stft_.n_fft, sample_rate_hz(), 0.0,
                              8000.0, FilterShape::partition);
  }

  const TtsProfile& profile() const { return profile_; }
  const Eigen::MatrixXd& embedding_table() const { return table_; }
  const MelFilterbank& filterbank() const { return fb_; }
  const StftParams& stft_params() const { return stft_; }

  LinguisticEmbedding encode(const std::string& text) const override {
    std::string norm = normalize_text(text);
    if (norm.empty())
      throw std::invalid_argument("encode: text normalizes to nothing");
    LinguisticEmbedding emb;
    emb.tokens = norm;
    emb.rows.resize(static_cast<int>(norm.size()), profile_.dim);
    const std::string& cs = tts_charset();
    for (std::size_t i = 0; i < norm.size(); ++i) {
      const std::size_t idx = cs.find(norm[i]);
      if (idx == std::string::npos)
        throw std::invalid_argument(std::string("encode: unsupported character '") +
                                    norm[i] + "'");
      emb.rows.row(static_cast<int>(i)) = table_.row(static_cast<int>(idx));
    }
    return emb;
  }

  DecodeResult decode(const Eigen::MatrixXd& emb) const override {
    if (emb.cols() != profile_.dim)
      throw std::invalid_argument("decode: embedding dim mismatch");
    if (emb.rows() < 1) throw std::invalid_argument("decode: empty embedding");
    const int fpt = profile_.frames_per_token;
    const int n_tokens = static_cast<int>(emb.rows());
    const int n_frames = n_tokens * fpt;

    Eigen::MatrixXd raw(profile_.n_mels, n_frames);
    for (int i = 0; i < n_tokens; ++i)
      for (int k = 0; k < fpt; ++k)
        raw.col(i * fpt + k).noalias() =
            maps_[static_cast<std::size_t>(k)] * emb.row(i).transpose();

    DecodeResult out;
    out.mel.bands = smooth_time(raw.array());
    out.gate.logits.resize(n_frames);
    for (int t = 0; t < n_frames; ++t)
      out.gate.logits(t) = profile_.gate_slope * (n_frames - 1 - t);
    return out;
  }

  // Analytic adjoint of decode: smoothing is symmetric so it is its own
  // adjoint; each frame cotangent folds back through its offset map. The
  // gate has no embedding dependence and contributes nothing.
  Eigen::MatrixXd decode_vjp(const Eigen::MatrixXd& emb,
                             const Eigen::ArrayXXd& cot_mel,
                             const Eigen::ArrayXd& cot_gate) const override {
    const int fpt = profile_.frames_per_token;
    const int n_tokens = static_cast<int>(emb.rows());
    const int n_frames = n_tokens * fpt;
    if (cot_mel.rows() != profile_.n_mels || cot_mel.cols() != n_frames)
      throw std::invalid_argument("decode_vjp: mel cotangent shape mismatch");
    if (cot_gate.size() != n_frames)
      throw std::invalid_argument("decode_vjp: gate cotangent shape mismatch");

    Eigen::MatrixXd g0 = smooth_time(cot_mel).matrix();
    Eigen::MatrixXd grad(n_tokens, profile_.dim);
    for (int i = 0; i < n_tokens; ++i) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(profile_.dim);
      for (int k = 0; k < fpt; ++k)
        acc.noalias() +=
            maps_[static_cast<std::size_t>(k)].transpose() * g0.col(i * fpt + k);
      grad.row(i) = acc.transpose();
    }
    return grad;
  }

  Waveform vocode(const MelSpectrogram& mel) const override {
    return vocode_with_iters(mel, profile_.vocoder_iters);
  }

  Waveform vocode_with_iters(const MelSpectrogram& mel, int iterations,
                             std::vector<double>* trace = nullptr) const {
    return griffin_lim(mel, fb_, iterations, stft_, sample_rate_hz(), trace);
  }

  int n_mels() const override { return profile_.n_mels; }

  // 0.8 times the RMS entry magnitude of the embedding table.
  double default_threshold() const override {
    const double ms = table_.array().square().mean();
    return 0.8 * std::sqrt(ms);
  }

 private:
  Eigen::ArrayXXd smooth_time(const Eigen::ArrayXXd& m) const {
    const int half = profile_.smoothing_width / 2;
    const int n_frames = static_cast<int>(m.cols());
    Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(m.rows(), n_frames);
    for (int t = 0; t < n_frames; ++t)
      for (int j = -half; j <= half; ++j) {
        const int s = t + j;
        if (s >= 0 && s < n_frames)
          out.col(t) += kernel_[static_cast<std::size_t>(j + half)] * m.col(s);
      }
    return out;
  }

  TtsProfile profile_;
  Eigen::MatrixXd table_;
  std::vector<Eigen::MatrixXd> maps_;
  std::vector<double> kernel_;
  MelFilterbank fb_;
  StftParams stft_;
};

}  // namespace garble
