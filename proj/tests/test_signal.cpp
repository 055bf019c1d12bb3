// garble/tests/test_signal.cpp
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

#include <cmath>
#include <complex>
#include <filesystem>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "garble/common.hpp"
#include "garble/signal.hpp"
#include "garble/wav.hpp"

namespace {

garble::Waveform tone(double freq_hz, double seconds, int rate = 22050,
                      double amp = 0.8) {
  garble::Waveform w;
  w.sample_rate_hz = rate;
  const int n = static_cast<int>(seconds * rate);
  w.samples.resize(n);
  for (int i = 0; i < n; ++i) w.samples[i] = amp * std::sin(2.0 * M_PI * freq_hz * i / rate);
  return w;
}

garble::Waveform noise_wave(int n, std::uint64_t seed, int rate = 22050) {
  garble::Waveform w;
  w.sample_rate_hz = rate;
  w.samples.resize(n);
  garble::Rng rng(seed);
  for (double& v : w.samples) v = rng.uniform(-1.0, 1.0);
  return w;
}

double rms(const garble::Waveform& w, std::size_t lo, std::size_t hi) {
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += w.samples[i] * w.samples[i];
  return std::sqrt(acc / static_cast<double>(hi - lo));
}

// Normalized cross-correlation maximized over small lags, so filter and
// resampler group delay does not count against waveform similarity.
double best_correlation(const std::vector<double>& a, const std::vector<double>& b,
                        int max_lag) {
  double best = -1.0;
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + lag;
      if (j < 0 || j >= static_cast<std::ptrdiff_t>(b.size())) continue;
      dot += a[i] * b[static_cast<std::size_t>(j)];
      na += a[i] * a[i];
      nb += b[static_cast<std::size_t>(j)] * b[static_cast<std::size_t>(j)];
    }
    if (na > 0.0 && nb > 0.0) best = std::max(best, std::abs(dot) / std::sqrt(na * nb));
  }
  return best;
}

}  // namespace

TEST_CASE("stft matches a direct windowed DFT") {
  garble::StftParams p;  // 1024 / 256
  const garble::Waveform w = noise_wave(1024 + 256 * 4, 99);
  const garble::Spectrogram s = garble::stft(w, p);
  REQUIRE(s.magnitude.rows() == p.n_fft / 2 + 1);
  REQUIRE(s.magnitude.cols() == 1 + (static_cast<int>(w.samples.size()) - p.n_fft) / p.hop);

  const std::vector<double> win = garble::detail::make_window(p);
  for (int t : {0, 2}) {
    for (int k : {0, 1, 37, 256, 512}) {
      std::complex<double> acc(0.0, 0.0);
      for (int n = 0; n < p.n_fft; ++n) {
        const double x = w.samples[static_cast<std::size_t>(t) * p.hop + n] * win[n];
        const double ang = -2.0 * M_PI * k * n / p.n_fft;
        acc += x * std::complex<double>(std::cos(ang), std::sin(ang));
      }
      REQUIRE(s.magnitude(k, t) == Catch::Approx(std::abs(acc)).margin(1e-9));
      const std::complex<double> got =
          std::polar(s.magnitude(k, t), s.phase(k, t));
      REQUIRE(std::abs(got - acc) < 1e-9 * (1.0 + std::abs(acc)));
    }
  }
}

TEST_CASE("istft inverts stft on interior samples") {
  garble::StftParams p;
  const garble::Waveform w = noise_wave(1024 + 256 * 12, 7);
  const garble::Waveform back = garble::istft(garble::stft(w, p), p);
  REQUIRE(back.sample_rate_hz == w.sample_rate_hz);
  REQUIRE(back.samples.size() <= w.samples.size());
  REQUIRE(back.samples.size() >= static_cast<std::size_t>(3 * p.n_fft));
  for (std::size_t i = p.n_fft; i + p.n_fft < back.samples.size(); ++i)
    REQUIRE(back.samples[i] == Catch::Approx(w.samples[i]).margin(1e-10));
}

TEST_CASE("stft rejects malformed input") {
  garble::Waveform w = noise_wave(512, 1);
  REQUIRE_THROWS_AS(garble::stft(w), std::invalid_argument);  // shorter than n_fft
  garble::StftParams bad;
  bad.hop = 0;
  REQUIRE_THROWS_AS(garble::stft(noise_wave(2048, 1), bad), std::invalid_argument);
  garble::Waveform silent;
  silent.sample_rate_hz = 22050;
  REQUIRE_THROWS_AS(garble::stft(silent), std::invalid_argument);
}

TEST_CASE("partition filterbank assigns each covered bin to one band") {
  const garble::MelFilterbank fb = garble::make_mel_filterbank(
      80, 1024, 22050, 0.0, 11025.0, garble::FilterShape::partition);
  REQUIRE(fb.weights.rows() == 80);
  REQUIRE(fb.weights.cols() == 513);
  for (int m = 0; m < 80; ++m) {
    REQUIRE(fb.weights.row(m).sum() == Catch::Approx(1.0));
    REQUIRE(fb.weights.row(m).minCoeff() >= 0.0);
  }
  // Bands are disjoint: no bin carries weight in two rows.
  for (int k = 0; k < fb.weights.cols(); ++k) {
    int owners = 0;
    for (int m = 0; m < 80; ++m)
      if (fb.weights(m, k) > 0.0) ++owners;
    REQUIRE(owners <= 1);
  }

  // All-ones magnitude therefore projects to exactly one per band.
  garble::Spectrogram s;
  s.magnitude = Eigen::ArrayXXd::Ones(513, 3);
  s.phase = Eigen::ArrayXXd::Zero(513, 3);
  s.n_fft = 1024;
  s.hop = 256;
  s.sample_rate_hz = 22050;
  const garble::MelSpectrogram mel = garble::mel_project(s, fb);
  REQUIRE(mel.bands.rows() == 80);
  for (int m = 0; m < 80; ++m)
    for (int t = 0; t < 3; ++t) REQUIRE(mel.bands(m, t) == Catch::Approx(1.0));
}

TEST_CASE("triangular filterbank rows are nonnegative and nonzero") {
  const garble::MelFilterbank fb = garble::make_mel_filterbank(
      40, 1024, 22050, 0.0, 11025.0, garble::FilterShape::triangular);
  for (int m = 0; m < 40; ++m) {
    REQUIRE(fb.weights.row(m).minCoeff() >= 0.0);
    REQUIRE(fb.weights.row(m).sum() > 0.0);
  }
}

TEST_CASE("mel_to_linear clamps negative bands to silence") {
  const garble::MelFilterbank fb = garble::make_mel_filterbank(
      8, 64, 8000, 0.0, 4000.0, garble::FilterShape::partition);
  garble::MelSpectrogram m;
  m.bands = Eigen::ArrayXXd::Constant(8, 2, -5.0);
  const Eigen::ArrayXXd lin = garble::mel_to_linear(m, fb);
  REQUIRE(lin.maxCoeff() == 0.0);
  REQUIRE(lin.minCoeff() == 0.0);
}

TEST_CASE("griffin_lim error trace is non-increasing and tones survive") {
  const garble::MelFilterbank fb = garble::make_mel_filterbank(
      80, 1024, 22050, 0.0, 11025.0, garble::FilterShape::partition);
  garble::StftParams p;

  // Random nonnegative mel targets: every step of the projection pair
  // must keep the spectral error from growing.
  garble::Rng rng(31337);
  for (int trial = 0; trial < 3; ++trial) {
    garble::MelSpectrogram m;
    m.bands.resize(80, 24);
    for (int b = 0; b < 80; ++b)
      for (int t = 0; t < 24; ++t) m.bands(b, t) = rng.uniform(0.0, 4.0);
    std::vector<double> trace;
    garble::griffin_lim(m, fb, 12, p, 22050, &trace);
    REQUIRE(trace.size() == 12);
    for (std::size_t i = 1; i < trace.size(); ++i)
      REQUIRE(trace[i] <= trace[i - 1] + 1e-9);
  }

  // A pure tone's mel projection resynthesizes with its energy back in
  // the original band.
  const garble::Waveform src = tone(1200.0, 0.6);
  const garble::MelSpectrogram mel = garble::mel_project(garble::stft(src, p), fb);
  const garble::Waveform rec = garble::griffin_lim(mel, fb, 30, p, 22050);
  REQUIRE(rec.samples.size() > 4096);
  const garble::Spectrogram rs = garble::stft(rec, p);
  Eigen::ArrayXd profile = rs.magnitude.rowwise().mean();
  int peak_bin = 0;
  profile.maxCoeff(&peak_bin);
  const double peak_hz = peak_bin * 22050.0 / 1024.0;
  REQUIRE(std::abs(peak_hz - 1200.0) < 80.0);  // within ~4 bins
}

TEST_CASE("resample preserves in-band tones and removes out-of-band ones") {
  const garble::Waveform low = tone(400.0, 0.5);
  garble::Waveform down = garble::resample(low, 8000);
  REQUIRE(down.sample_rate_hz == 8000);
  const double expect = 0.5 * 8000;
  REQUIRE(std::abs(static_cast<double>(down.samples.size()) - expect) <= 2.0);
  garble::Waveform round = garble::resample(down, 22050);
  REQUIRE(round.sample_rate_hz == 22050);

  const std::size_t lo = 2000, hi = std::min(low.samples.size(), round.samples.size()) - 2000;
  std::vector<double> a(low.samples.begin() + lo, low.samples.begin() + hi);
  std::vector<double> b(round.samples.begin() + lo, round.samples.begin() + hi);
  REQUIRE(best_correlation(a, b, 4) > 0.98);

  // 5 kHz cannot survive an 8 kHz round trip (4 kHz Nyquist).
  const garble::Waveform high = tone(5000.0, 0.5);
  const garble::Waveform killed = garble::resample(garble::resample(high, 8000), 22050);
  const std::size_t n = std::min(high.samples.size(), killed.samples.size());
  REQUIRE(rms(killed, 1000, n - 1000) < 0.05 * rms(high, 1000, n - 1000));

  // Same-rate call is a bit-exact pass-through.
  const garble::Waveform same = garble::resample(low, 22050);
  REQUIRE(same.samples == low.samples);
  REQUIRE_THROWS_AS(garble::resample(low, 0), std::invalid_argument);
}

TEST_CASE("butterworth biquads separate pass and stop bands") {
  const garble::Waveform lo_tone = tone(200.0, 0.5);
  const garble::Waveform hi_tone = tone(3000.0, 0.5);
  const std::size_t a = 2000, b = 9000;

  const garble::Waveform lp_lo = garble::biquad_filter(lo_tone, garble::FilterKind::low_pass, 1000.0, 4);
  const garble::Waveform lp_hi = garble::biquad_filter(hi_tone, garble::FilterKind::low_pass, 1000.0, 4);
  REQUIRE(rms(lp_lo, a, b) > 0.7 * rms(lo_tone, a, b));
  REQUIRE(rms(lp_hi, a, b) < 0.1 * rms(hi_tone, a, b));

  const garble::Waveform hp_lo = garble::biquad_filter(lo_tone, garble::FilterKind::high_pass, 1000.0, 4);
  const garble::Waveform hp_hi = garble::biquad_filter(hi_tone, garble::FilterKind::high_pass, 1000.0, 4);
  REQUIRE(rms(hp_lo, a, b) < 0.1 * rms(lo_tone, a, b));
  REQUIRE(rms(hp_hi, a, b) > 0.7 * rms(hi_tone, a, b));

  REQUIRE(garble::detail::butterworth_sections(garble::FilterKind::low_pass, 1000.0, 4, 22050)
              .size() == 2);
}

TEST_CASE("mix_noise_and_scale hits an exact peak and freezes per seed") {
  const garble::Waveform w = tone(440.0, 0.3, 22050, 0.37);

  // eta == 0: pure rescale, extreme sample exactly +-10000.
  const garble::Waveform clean = garble::mix_noise_and_scale(w, 0.0);
  double peak = 0.0;
  for (double v : clean.samples) peak = std::max(peak, std::abs(v));
  REQUIRE(peak == 10000.0);
  double in_peak = 0.0;
  for (double v : w.samples) in_peak = std::max(in_peak, std::abs(v));
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    REQUIRE(clean.samples[i] == w.samples[i] / in_peak * 10000.0);

  // eta > 0: deterministic per seed, still an exact 10000 peak.
  const garble::Waveform n1 = garble::mix_noise_and_scale(w, 0.1, 5);
  const garble::Waveform n2 = garble::mix_noise_and_scale(w, 0.1, 5);
  const garble::Waveform n3 = garble::mix_noise_and_scale(w, 0.1, 6);
  REQUIRE(n1.samples == n2.samples);
  REQUIRE(n1.samples != n3.samples);
  peak = 0.0;
  for (double v : n1.samples) peak = std::max(peak, std::abs(v));
  REQUIRE(peak == 10000.0);
  REQUIRE(n1.samples != clean.samples);

  garble::Waveform silent;
  silent.sample_rate_hz = 22050;
  silent.samples.assign(100, 0.0);
  REQUIRE_THROWS_AS(garble::mix_noise_and_scale(silent, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(garble::mix_noise_and_scale(w, -0.1), std::invalid_argument);
}

TEST_CASE("wav float serialization round-trips to float precision") {
  garble::Waveform w = noise_wave(777, 3, 22050);
  w.samples[0] = 9999.25;
  w.samples[1] = -1.0e-7;
  const std::string bytes = garble::wav_bytes(w);
  REQUIRE(bytes.size() == 44 + 4 * w.samples.size());
  const garble::Waveform back = garble::parse_wav(bytes);
  REQUIRE(back.sample_rate_hz == 22050);
  REQUIRE(back.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    REQUIRE(back.samples[i] == static_cast<double>(static_cast<float>(w.samples[i])));

  // File round trip through write_wav / read_wav is byte-stable too.
  const auto path = std::filesystem::temp_directory_path() / "garble_wav_roundtrip.wav";
  garble::write_wav(path.string(), w);
  const garble::Waveform file_back = garble::read_wav(path.string());
  REQUIRE(file_back.samples == back.samples);
  std::filesystem::remove(path);
}

TEST_CASE("wav parser accepts external 16-bit PCM and rejects everything else") {
  // Hand-built 8 kHz mono PCM16 file with an extra chunk before data.
  std::string bytes;
  auto u16 = [&](std::uint16_t v) { garble::detail::put_u16(bytes, v); };
  auto u32 = [&](std::uint32_t v) { garble::detail::put_u32(bytes, v); };
  const std::vector<std::int16_t> pcm{0, 16384, -16384, 32767, -32768};
  bytes += "RIFF";
  u32(4 + 8 + 16 + 8 + 4 + 8 + static_cast<std::uint32_t>(pcm.size() * 2));
  bytes += "WAVE";
  bytes += "LIST";  // unknown chunk, must be skipped
  u32(4);
  bytes += "info";
  bytes += "fmt ";
  u32(16);
  u16(1);  // integer PCM
  u16(1);  // mono
  u32(8000);
  u32(16000);
  u16(2);
  u16(16);
  bytes += "data";
  u32(static_cast<std::uint32_t>(pcm.size() * 2));
  for (std::int16_t v : pcm) u16(static_cast<std::uint16_t>(v));

  const garble::Waveform w = garble::parse_wav(bytes);
  REQUIRE(w.sample_rate_hz == 8000);
  REQUIRE(w.samples.size() == pcm.size());
  for (std::size_t i = 0; i < pcm.size(); ++i)
    REQUIRE(w.samples[i] == static_cast<double>(pcm[i]));

  REQUIRE_THROWS(garble::parse_wav("not a wav"));
  std::string stereo = bytes;
  stereo[34] = 2;  // channel count inside fmt
  REQUIRE_THROWS(garble::parse_wav(stereo));
}
