// garble/tests/test_blur_tts.cpp
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

#include <catch2/catch_amalgamated.hpp>

#include "garble/blur.hpp"
#include "garble/common.hpp"
#include "garble/tts.hpp"

namespace {

garble::MelSpectrogram random_mel(int n_mels, int n_frames, std::uint64_t seed) {
  garble::MelSpectrogram m;
  m.bands.resize(n_mels, n_frames);
  garble::Rng rng(seed);
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < n_mels; ++b) m.bands(b, t) = rng.uniform(0.0, 3.0);
  return m;
}

}  // namespace

TEST_CASE("blur with neutral parameters is the identity") {
  const garble::MelSpectrogram m = random_mel(80, 7, 1);
  garble::BlurParams p;
  p.alpha = 1.0;
  p.beta = 0;
  p.gamma = 0.0;
  const garble::MelSpectrogram out = garble::blur(m, p, 99);
  REQUIRE((out.bands == m.bands).all());
}

TEST_CASE("blur stages act on the documented band ranges") {
  garble::MelSpectrogram m;
  m.bands = Eigen::ArrayXXd::Ones(80, 10);
  garble::BlurParams p;
  p.alpha = 0.25;
  p.beta = 2;
  p.gamma = 0.0;
  p.low_band_count = 30;
  const garble::MelSpectrogram out = garble::blur(m, p, 0);
  for (int t = 0; t < 10; ++t) {
    for (int b = 0; b < 2; ++b) REQUIRE(out.bands(b, t) == 0.0);
    for (int b = 2; b < 30; ++b) REQUIRE(out.bands(b, t) == Catch::Approx(0.25));
    for (int b = 30; b < 80; ++b) REQUIRE(out.bands(b, t) == 1.0);
  }
}

TEST_CASE("blur noise is bounded by gamma and frozen per layer") {
  const garble::MelSpectrogram m = random_mel(80, 12, 2);
  garble::BlurParams p;
  p.alpha = 0.3;
  p.beta = 1;
  p.gamma = 0.5;

  // Deterministic part for comparison.
  garble::BlurParams quiet = p;
  quiet.gamma = 0.0;
  const garble::MelSpectrogram base = garble::blur(m, quiet, 0);

  const garble::NoiseLayer layer = garble::freeze_noise(p, 80, 12, 42);
  REQUIRE(layer.values.abs().maxCoeff() <= p.gamma);
  const garble::MelSpectrogram o1 = garble::blur(m, p, layer);
  const garble::MelSpectrogram o2 = garble::blur(m, p, layer);
  REQUIRE((o1.bands == o2.bands).all());
  REQUIRE(((o1.bands - base.bands).abs() <= p.gamma).all());

  // Erased rows carry the noise alone.
  REQUIRE((o1.bands.topRows(1) == layer.values.topRows(1)).all());

  // A different seed draws a different layer.
  const garble::MelSpectrogram o3 = garble::blur(m, p, 43);
  REQUIRE(!(o1.bands == o3.bands).all());
  // Seeded overload equals the frozen layer from the same seed.
  const garble::MelSpectrogram o4 = garble::blur(m, p, 42);
  REQUIRE((o1.bands == o4.bands).all());
}

TEST_CASE("blur with a shared noise layer is affine in the spectrogram") {
  const garble::MelSpectrogram m1 = random_mel(80, 9, 3);
  const garble::MelSpectrogram m2 = random_mel(80, 9, 4);
  garble::BlurParams p;
  p.alpha = 0.3;
  p.beta = 1;
  p.gamma = 1.0;
  const garble::NoiseLayer layer = garble::freeze_noise(p, 80, 9, 7);
  const garble::MelSpectrogram b1 = garble::blur(m1, p, layer);
  const garble::MelSpectrogram b2 = garble::blur(m2, p, layer);
  for (double a : {0.0, 0.5, 1.0}) {
    garble::MelSpectrogram mix;
    mix.bands = a * m1.bands + (1.0 - a) * m2.bands;
    // Affine with weights summing to one: the shared noise term drops out
    // of the difference.
    const garble::MelSpectrogram got = garble::blur(mix, p, layer);
    const Eigen::ArrayXXd want = a * b1.bands + (1.0 - a) * b2.bands;
    REQUIRE(((got.bands - want).abs() < 1e-12).all());
  }
}

TEST_CASE("blur validates its parameters") {
  const garble::MelSpectrogram m = random_mel(80, 4, 5);
  garble::BlurParams p;
  p.alpha = 0.0;
  REQUIRE_THROWS_AS(garble::blur(m, p, 0), std::invalid_argument);
  p.alpha = 1.5;
  REQUIRE_THROWS_AS(garble::blur(m, p, 0), std::invalid_argument);
  p = {};
  p.beta = 80;
  REQUIRE_THROWS_AS(garble::blur(m, p, 0), std::invalid_argument);
  p = {};
  p.gamma = -0.1;
  REQUIRE_THROWS_AS(garble::blur(m, p, 0), std::invalid_argument);
  p = {};
  p.low_band_count = 81;
  REQUIRE_THROWS_AS(garble::blur(m, p, 0), std::invalid_argument);
  p = {};
  garble::NoiseLayer wrong;
  wrong.values = Eigen::ArrayXXd::Zero(80, 5);
  REQUIRE_THROWS_AS(garble::blur(m, p, wrong), std::invalid_argument);
  REQUIRE(garble::BlurParams{0.3, 1, 1.0, 30}.label() == "a0.3_b1_g1");
}

TEST_CASE("toy synthesizer encodes characters against its table") {
  const garble::ToyTts tts{garble::TtsProfile{}};
  const garble::LinguisticEmbedding e = tts.encode("Call 123!");
  REQUIRE(e.tokens == "call 123");
  REQUIRE(e.rows.rows() == 8);
  REQUIRE(e.rows.cols() == tts.profile().dim);

  // Repeated characters share a table row.
  const garble::LinguisticEmbedding aa = tts.encode("aa");
  REQUIRE(aa.rows.row(0) == aa.rows.row(1));

  REQUIRE_THROWS_AS(tts.encode("!!!"), std::invalid_argument);
  REQUIRE_THROWS_AS(tts.encode(""), std::invalid_argument);
}

TEST_CASE("toy synthesizer decode has fixed shapes and a countdown gate") {
  const garble::ToyTts tts{garble::TtsProfile{}};
  const garble::LinguisticEmbedding e = tts.encode("i need help");
  const garble::DecodeResult d = tts.decode(e.rows);
  const int n_frames = static_cast<int>(e.rows.rows()) * tts.profile().frames_per_token;
  REQUIRE(d.mel.bands.rows() == tts.n_mels());
  REQUIRE(d.mel.bands.cols() == n_frames);
  REQUIRE(d.gate.logits.size() == n_frames);
  for (int t = 1; t < n_frames; ++t)
    REQUIRE(d.gate.logits(t) < d.gate.logits(t - 1));
  REQUIRE(d.gate.logits(n_frames - 1) == 0.0);

  Eigen::MatrixXd bad(2, tts.profile().dim + 1);
  REQUIRE_THROWS_AS(tts.decode(bad), std::invalid_argument);
}

TEST_CASE("toy synthesizer is deterministic per profile seed") {
  garble::TtsProfile p;
  const garble::ToyTts a(p), b(p);
  const garble::DecodeResult da = a.decode(a.encode("unlock the door").rows);
  const garble::DecodeResult db = b.decode(b.encode("unlock the door").rows);
  REQUIRE((da.mel.bands == db.mel.bands).all());
  const garble::Waveform wa = a.vocode(da.mel);
  const garble::Waveform wb = b.vocode(db.mel);
  REQUIRE(wa.samples == wb.samples);

  garble::TtsProfile other = p;
  other.seed = p.seed + 1;
  const garble::ToyTts c(other);
  REQUIRE(!(a.embedding_table() == c.embedding_table()));
}

TEST_CASE("toy synthesizer vocode emits audio at the documented rate") {
  const garble::ToyTts tts{garble::TtsProfile{}};
  const garble::DecodeResult d = tts.decode(tts.encode("darn it").rows);
  const garble::Waveform w = tts.vocode(d.mel);
  REQUIRE(w.sample_rate_hz == tts.sample_rate_hz());
  const int n_frames = static_cast<int>(d.mel.bands.cols());
  REQUIRE(w.samples.size() ==
          static_cast<std::size_t>(tts.stft_params().n_fft +
                                   (n_frames - 1) * tts.stft_params().hop));
  double energy = 0.0;
  for (double v : w.samples) energy += v * v;
  REQUIRE(energy > 0.0);
}

TEST_CASE("default perturbation threshold follows the table magnitude") {
  const garble::ToyTts tts{garble::TtsProfile{}};
  const double want = 0.8 * std::sqrt(tts.embedding_table().array().square().mean());
  REQUIRE(tts.default_threshold() == Catch::Approx(want));
  REQUIRE(tts.default_threshold() > 0.0);
}

TEST_CASE("analytic decode adjoint matches finite differences") {
  const garble::ToyTts tts{garble::TtsProfile{}};
  const Eigen::MatrixXd emb = tts.encode("hi").rows;
  const int n_frames = static_cast<int>(emb.rows()) * tts.profile().frames_per_token;

  garble::Rng rng(17);
  Eigen::ArrayXXd cot_mel(tts.n_mels(), n_frames);
  for (int t = 0; t < n_frames; ++t)
    for (int b = 0; b < tts.n_mels(); ++b) cot_mel(b, t) = rng.uniform(-1.0, 1.0);
  Eigen::ArrayXd cot_gate(n_frames);
  for (int t = 0; t < n_frames; ++t) cot_gate(t) = rng.uniform(-1.0, 1.0);

  const Eigen::MatrixXd analytic = tts.decode_vjp(emb, cot_mel, cot_gate);

  // decode is linear in the embedding, so central differences are exact
  // up to rounding.
  const double h = 1e-4;
  Eigen::MatrixXd fd = Eigen::MatrixXd::Zero(emb.rows(), emb.cols());
  Eigen::MatrixXd probe = emb;
  for (int i = 0; i < emb.rows(); ++i)
    for (int j = 0; j < emb.cols(); ++j) {
      probe(i, j) = emb(i, j) + h;
      const garble::DecodeResult plus = tts.decode(probe);
      probe(i, j) = emb(i, j) - h;
      const garble::DecodeResult minus = tts.decode(probe);
      probe(i, j) = emb(i, j);
      double acc = ((plus.mel.bands - minus.mel.bands) * cot_mel).sum();
      acc += ((plus.gate.logits - minus.gate.logits) * cot_gate).sum();
      fd(i, j) = acc / (2.0 * h);
    }

  const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
  REQUIRE(((analytic - fd).cwiseAbs().maxCoeff() / scale) < 1e-6);

  // Shape mismatches are rejected.
  REQUIRE_THROWS_AS(tts.decode_vjp(emb, cot_mel.leftCols(3), cot_gate),
                    std::invalid_argument);
}
