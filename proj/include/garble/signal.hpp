// garble/signal.hpp
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
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "garble/common.hpp"

namespace garble {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 22050;
};

inline void check_waveform(const Waveform& w, const char* op) {
  if (w.samples.empty())
    throw std::invalid_argument(std::string(op) + ": empty waveform");
  if (w.sample_rate_hz <= 0)
    throw std::invalid_argument(std::string(op) + ": sample rate must be positive");
}

struct StftParams {
  int n_fft = 1024;
  int hop = 256;
  bool hann = true;  // false selects a rectangular window
};

// Magnitude plus retained phase, so istft(stft(x)) is lossless up to
// float error wherever the window overlap covers the signal.
struct Spectrogram {
  Eigen::ArrayXXd magnitude;  // [n_fft/2 + 1, n_frames]
  Eigen::ArrayXXd phase;      // radians, same shape
  int n_fft = 0;
  int hop = 0;
  int sample_rate_hz = 0;
};

struct MelSpectrogram {
  Eigen::ArrayXXd bands;  // [n_mels, n_frames], linear amplitude
};

namespace detail {

// One FFT object per thread; Eigen::FFT caches kissfft plans per size
// internally, so reuse avoids replanning in the Griffin-Lim loop.
inline Eigen::FFT<double>& cached_fft() {
  thread_local Eigen::FFT<double> fft;
  thread_local bool init = false;
  if (!init) {
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    init = true;
  }
  return fft;
}

inline std::vector<double> make_window(const StftParams& p) {
  std::vector<double> w(static_cast<std::size_t>(p.n_fft), 1.0);
  if (p.hann) {
    for (int n = 0; n < p.n_fft; ++n)  // periodic Hann
      w[n] = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / p.n_fft);
  }
  return w;
}

}  // namespace detail

inline Spectrogram stft(const Waveform& w, const StftParams& p = {}) {
  check_waveform(w, "stft");
  if (p.n_fft <= 0 || p.hop <= 0 || p.hop > p.n_fft)
    throw std::invalid_argument("stft: need 0 < hop <= n_fft");
  const int len = static_cast<int>(w.samples.size());
  if (len < p.n_fft)
    throw std::invalid_argument("stft: input shorter than one analysis window");
  const int n_frames = 1 + (len - p.n_fft) / p.hop;
  const int n_bins = p.n_fft / 2 + 1;
  const std::vector<double> win = detail::make_window(p);

  Spectrogram s;
  s.magnitude.resize(n_bins, n_frames);
  s.phase.resize(n_bins, n_frames);
  s.n_fft = p.n_fft;
  s.hop = p.hop;
  s.sample_rate_hz = w.sample_rate_hz;

  auto& fft = detail::cached_fft();
  std::vector<double> frame(static_cast<std::size_t>(p.n_fft));
  std::vector<std::complex<double>> spec;
  for (int t = 0; t < n_frames; ++t) {
    const double* src = w.samples.data() + static_cast<std::size_t>(t) * p.hop;
    for (int n = 0; n < p.n_fft; ++n) frame[n] = src[n] * win[n];
    fft.fwd(spec, frame);
    for (int k = 0; k < n_bins; ++k) {
      s.magnitude(k, t) = std::abs(spec[k]);
      s.phase(k, t) = std::arg(spec[k]);
    }
  }
  return s;
}

// Weighted overlap-add inverse. Uses the analysis window for synthesis and
// divides by the accumulated squared window, which makes interior samples
// an identity for any window/hop with full overlap coverage.
inline Waveform istft(const Spectrogram& s, const StftParams& p_in = {}) {
  if (s.magnitude.size() == 0) throw std::invalid_argument("istft: empty spectrogram");
  StftParams p = p_in;
  p.n_fft = s.n_fft;
  p.hop = s.hop;
  const int n_bins = s.n_fft / 2 + 1;
  if (s.magnitude.rows() != n_bins)
    throw std::invalid_argument("istft: bin count does not match n_fft");
  const int n_frames = static_cast<int>(s.magnitude.cols());
  const int out_len = s.n_fft + (n_frames - 1) * s.hop;
  const std::vector<double> win = detail::make_window(p);

  std::vector<double> acc(static_cast<std::size_t>(out_len), 0.0);
  std::vector<double> norm(static_cast<std::size_t>(out_len), 0.0);
  auto& fft = detail::cached_fft();
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(n_bins));
  std::vector<double> frame;
  for (int t = 0; t < n_frames; ++t) {
    for (int k = 0; k < n_bins; ++k)
      spec[k] = std::polar(s.magnitude(k, t), s.phase(k, t));
    fft.inv(frame, spec, s.n_fft);
    const std::size_t off = static_cast<std::size_t>(t) * s.hop;
    for (int n = 0; n < s.n_fft; ++n) {
      acc[off + n] += frame[n] * win[n];
      norm[off + n] += win[n] * win[n];
    }
  }
  // Samples carrying less than half the full overlapped window mass (the
  // first and last partial windows) have no reliable reconstruction; the
  // division there only amplifies phase-inconsistency noise, so they are
  // zeroed instead.
  double norm_peak = 0.0;
  for (double v : norm) norm_peak = std::max(norm_peak, v);
  const double norm_floor = norm_peak * 0.5;
  for (std::size_t i = 0; i < acc.size(); ++i)
    acc[i] = norm[i] >= norm_floor ? acc[i] / norm[i] : 0.0;

  Waveform out;
  out.samples = std::move(acc);
  out.sample_rate_hz = s.sample_rate_hz > 0 ? s.sample_rate_hz : 22050;
  return out;
}

struct MelFilterbank {
  Eigen::MatrixXd weights;  // [n_mels, n_bins]
  int n_fft = 0;
  int sample_rate_hz = 0;
  double f_min = 0.0;
  double f_max = 0.0;
};

namespace detail {
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
}  // namespace detail

// `triangular` is the classic 50%-overlapped bank with unit-peak filters.
// `partition` assigns every bin to exactly one band (mel-equal edges) and
// weighs it by 1/count, so a band value is the average magnitude of the
// bins it owns and a mel -> linear -> mel round trip is exact. Disjoint
// support means a per-band gain change stays in its own band instead of
// crossfading into neighbors.
enum class FilterShape { triangular, partition };

// Filters with centers equally spaced on the mel scale. Every row is
// guaranteed to have nonzero mass.
inline MelFilterbank make_mel_filterbank(int n_mels = 80, int n_fft = 1024,
                                         int sample_rate_hz = 22050,
                                         double f_min = 0.0, double f_max = 8000.0,
                                         FilterShape shape = FilterShape::triangular) {
  if (n_mels <= 0 || n_fft <= 0)
    throw std::invalid_argument("make_mel_filterbank: bad sizes");
  if (f_max <= f_min || f_max > sample_rate_hz / 2.0 + 1e-9)
    throw std::invalid_argument("make_mel_filterbank: bad band edges");
  const int n_bins = n_fft / 2 + 1;
  const double mel_lo = detail::hz_to_mel(f_min);
  const double mel_hi = detail::hz_to_mel(f_max);

  MelFilterbank fb;
  fb.weights = Eigen::MatrixXd::Zero(n_mels, n_bins);
  fb.n_fft = n_fft;
  fb.sample_rate_hz = sample_rate_hz;
  fb.f_min = f_min;
  fb.f_max = f_max;
  const double bin_hz = static_cast<double>(sample_rate_hz) / n_fft;

  if (shape == FilterShape::partition) {
    std::vector<double> edges(static_cast<std::size_t>(n_mels) + 1);
    for (int i = 0; i <= n_mels; ++i)
      edges[i] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / n_mels);
    for (int m = 0; m < n_mels; ++m) {
      int count = 0;
      for (int k = 0; k < n_bins; ++k) {
        const double f = k * bin_hz;
        if (f >= edges[m] && f < edges[m + 1]) {
          fb.weights(m, k) = 1.0;
          ++count;
        }
      }
      if (count > 0) {
        fb.weights.row(m) /= count;
      } else {
        int k = static_cast<int>(std::lround(0.5 * (edges[m] + edges[m + 1]) / bin_hz));
        k = std::min(std::max(k, 0), n_bins - 1);
        fb.weights(m, k) = 1.0;
      }
    }
    return fb;
  }

  std::vector<double> centers(static_cast<std::size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[i] = detail::mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double f = k * bin_hz;
      double v = 0.0;
      if (f > lo && f < mid) v = (f - lo) / (mid - lo);
      else if (f >= mid && f < hi) v = (hi - f) / (hi - mid);
      fb.weights(m, k) = v;
    }
    if (fb.weights.row(m).sum() <= 0.0) {
      // A band narrower than one bin: pin it to the nearest bin so no
      // row is all-zero.
      int k = static_cast<int>(std::lround(mid / bin_hz));
      k = std::min(std::max(k, 0), n_bins - 1);
      fb.weights(m, k) = 1.0;
    }
  }
  return fb;
}

inline MelSpectrogram mel_project(const Spectrogram& s, const MelFilterbank& fb) {
  if (fb.weights.cols() != s.magnitude.rows())
    throw std::invalid_argument("mel_project: filterbank bin count mismatch");
  MelSpectrogram m;
  m.bands = (fb.weights * s.magnitude.matrix()).array();
  return m;
}

// Approximate mel -> linear lift: transposed filterbank with each linear
// bin divided by the total filter mass covering it; negative mel values
// are clamped to zero first.
inline Eigen::ArrayXXd mel_to_linear(const MelSpectrogram& m, const MelFilterbank& fb) {
  if (m.bands.rows() != fb.weights.rows())
    throw std::invalid_argument("mel_to_linear: band count mismatch");
  Eigen::ArrayXXd clamped = m.bands.max(0.0);
  Eigen::VectorXd col_mass = fb.weights.colwise().sum();
  Eigen::MatrixXd lin = fb.weights.transpose() * clamped.matrix();
  for (int k = 0; k < lin.rows(); ++k) {
    const double mass = col_mass(k);
    if (mass > 1e-12) lin.row(k) /= mass;
    else lin.row(k).setZero();
  }
  return lin.array();
}

// Classic alternating-projection phase recovery. Starts from a fixed
// pseudo-random phase field (zero phase stacks every bin coherently at the
// frame onset, inflating the waveform crest); each iteration resynthesizes
// and re-analyzes once. The spectral error ||(|STFT(x_i)| - M)||_F / ||M||_F
// is non-increasing in i and can be recorded through `trace`.
inline Waveform griffin_lim(const MelSpectrogram& m, const MelFilterbank& fb,
                            int iterations, const StftParams& p = {},
                            int sample_rate_hz = 22050,
                            std::vector<double>* trace = nullptr) {
  if (iterations < 1) throw std::invalid_argument("griffin_lim: iterations must be >= 1");
  Eigen::ArrayXXd target = mel_to_linear(m, fb);
  const int n_frames = static_cast<int>(target.cols());
  Spectrogram s;
  s.magnitude = target;
  s.phase = Eigen::ArrayXXd::Zero(target.rows(), n_frames);
  for (int k = 0; k < target.rows(); ++k)
    for (int t = 0; t < n_frames; ++t) {
      // Stateless splitmix64 hash of the bin index: portable and
      // independent of evaluation order.
      std::uint64_t z = (static_cast<std::uint64_t>(k) * 0x9e3779b97f4a7c15ull) ^
                        (static_cast<std::uint64_t>(t) + 0xbf58476d1ce4e5b9ull);
      z ^= z >> 30; z *= 0xbf58476d1ce4e5b9ull;
      z ^= z >> 27; z *= 0x94d049bb133111ebull;
      z ^= z >> 31;
      s.phase(k, t) = 2.0 * M_PI * (static_cast<double>(z >> 11) * 0x1.0p-53);
    }
  s.n_fft = p.n_fft;
  s.hop = p.hop;
  s.sample_rate_hz = sample_rate_hz;

  const double target_norm = std::sqrt((target * target).sum());
  if (target_norm <= 0.0) {
    // All-zero magnitude has the all-zero signal as its exact preimage.
    Waveform out;
    out.samples.assign(static_cast<std::size_t>(p.n_fft + (n_frames - 1) * p.hop), 0.0);
    out.sample_rate_hz = sample_rate_hz;
    if (trace) trace->assign(static_cast<std::size_t>(iterations), 0.0);
    return out;
  }

  Waveform x = istft(s, p);
  for (int it = 1; it <= iterations; ++it) {
    Spectrogram a = stft(x, p);
    if (trace) {
      double err = std::sqrt((a.magnitude - target).square().sum()) / target_norm;
      trace->push_back(err);
    }
    if (it == iterations) break;
    s.phase = a.phase;
    x = istft(s, p);
  }
  return x;
}

// Windowed-sinc polyphase-free resampler. Kernel: sinc at the lower of the
// two Nyquist rates under a Blackman window with 32 zero crossings per
// side, renormalized per output sample so DC gain is exactly 1.
inline Waveform resample(const Waveform& w, int target_rate_hz) {
  check_waveform(w, "resample");
  if (target_rate_hz <= 0)
    throw std::invalid_argument("resample: target rate must be positive");
  if (target_rate_hz == w.sample_rate_hz) {
    return w;  // bit-exact pass-through
  }
  const double ratio = static_cast<double>(target_rate_hz) / w.sample_rate_hz;
  const double fc = 0.5 * std::min(1.0, ratio);  // cycles per input sample
  const double half_width = 32.0 / (2.0 * fc);
  const int in_len = static_cast<int>(w.samples.size());
  const int out_len = std::max<int>(1, static_cast<int>(std::llround(in_len * ratio)));

  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(out_len));
  for (int n = 0; n < out_len; ++n) {
    const double t = n / ratio;
    const int k_lo = static_cast<int>(std::ceil(t - half_width));
    const int k_hi = static_cast<int>(std::floor(t + half_width));
    double acc = 0.0, mass = 0.0;
    for (int k = k_lo; k <= k_hi; ++k) {
      const double u = k - t;
      const double x = 2.0 * fc * u;
      double sinc = x == 0.0 ? 1.0 : std::sin(M_PI * x) / (M_PI * x);
      const double v = M_PI * u / half_width;
      const double win = 0.42 + 0.5 * std::cos(v) + 0.08 * std::cos(2.0 * v);
      const double h = 2.0 * fc * sinc * win;
      mass += h;
      if (k >= 0 && k < in_len) acc += w.samples[static_cast<std::size_t>(k)] * h;
    }
    out.samples[static_cast<std::size_t>(n)] = mass != 0.0 ? acc / mass : 0.0;
  }
  return out;
}

enum class FilterKind { low_pass, high_pass };

namespace detail {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Butterworth cascade: second-order sections with the standard pole
// quality factors, plus one first-order section when the order is odd.
inline std::vector<Biquad> butterworth_sections(FilterKind kind, double cutoff_hz,
                                                int order, int sample_rate_hz) {
  if (order < 1) throw std::invalid_argument("biquad_filter: order must be >= 1");
  if (cutoff_hz <= 0.0 || cutoff_hz >= sample_rate_hz / 2.0)
    throw std::invalid_argument("biquad_filter: cutoff must lie inside (0, Nyquist)");
  const double w0 = 2.0 * M_PI * cutoff_hz / sample_rate_hz;
  std::vector<Biquad> sections;
  const int n_pairs = order / 2;
  for (int k = 0; k < n_pairs; ++k) {
    const double theta = M_PI * (2.0 * k + 1.0) / (2.0 * order);
    const double q = 1.0 / (2.0 * std::cos(theta));
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    Biquad s{};
    if (kind == FilterKind::low_pass) {
      s.b0 = (1.0 - cw) / 2.0 / a0;
      s.b1 = (1.0 - cw) / a0;
      s.b2 = s.b0;
    } else {
      s.b0 = (1.0 + cw) / 2.0 / a0;
      s.b1 = -(1.0 + cw) / a0;
      s.b2 = s.b0;
    }
    s.a1 = (-2.0 * cw) / a0;
    s.a2 = (1.0 - alpha) / a0;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    const double K = std::tan(w0 / 2.0);
    Biquad s{};
    if (kind == FilterKind::low_pass) {
      s.b0 = K / (K + 1.0);
      s.b1 = s.b0;
    } else {
      s.b0 = 1.0 / (K + 1.0);
      s.b1 = -s.b0;
    }
    s.b2 = 0.0;
    s.a1 = (K - 1.0) / (K + 1.0);
    s.a2 = 0.0;
    sections.push_back(s);
  }
  return sections;
}

}  // namespace detail

// Single-pass IIR filtering (direct form II transposed), zero initial state.
inline Waveform biquad_filter(const Waveform& w, FilterKind kind, double cutoff_hz,
                              int order = 4) {
  check_waveform(w, "biquad_filter");
  auto sections = detail::butterworth_sections(kind, cutoff_hz, order, w.sample_rate_hz);
  Waveform out = w;
  for (const auto& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    for (double& x : out.samples) {
      const double y = s.b0 * x + z1;
      z1 = s.b1 * x - s.a1 * y + z2;
      z2 = s.b2 * x - s.a2 * y;
      x = y;
    }
  }
  return out;
}

// Transmission-hardening step applied before a waveform leaves the tool:
// peak-normalize, add uniform white noise of amplitude eta, renormalize by
// the mixed peak, then scale to a fixed 10000.0 peak. With eta == 0 no RNG
// is consumed and the result is exactly the input shape times 10000/peak.
inline Waveform mix_noise_and_scale(const Waveform& w, double eta, std::uint64_t seed = 0) {
  check_waveform(w, "mix_noise_and_scale");
  if (eta < 0.0) throw std::invalid_argument("mix_noise_and_scale: eta must be >= 0");
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  if (peak <= 0.0)
    throw std::invalid_argument("mix_noise_and_scale: cannot normalize silence");

  Waveform out;
  out.sample_rate_hz = w.sample_rate_hz;
  out.samples.resize(w.samples.size());
  // Dividing by the peak before the 10000 multiply makes the extreme
  // sample exactly +-10000.0 (x/x == 1 in IEEE arithmetic).
  if (eta == 0.0) {
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      out.samples[i] = w.samples[i] / peak * 10000.0;
    return out;
  }
  Rng rng(seed);
  double mixed_peak = 0.0;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double v = w.samples[i] / peak + rng.uniform(-eta, eta);
    out.samples[i] = v;
    mixed_peak = std::max(mixed_peak, std::abs(v));
  }
  for (double& v : out.samples) v = v / mixed_peak * 10000.0;
  return out;
}

}  // namespace garble
