// garble/attack.hpp
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
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "garble/asr.hpp"
#include "garble/blur.hpp"
#include "garble/common.hpp"
#include "garble/signal.hpp"
#include "garble/tts.hpp"

namespace garble {

inline double inf_norm(const Eigen::MatrixXd& delta) {
  if (delta.size() == 0) return 0.0;
  return delta.array().abs().maxCoeff();
}

// Negated spectrogram difference: sum over frames of the per-band mean
// squared difference, over the first min(T1, T2) frames. The optimizer
// DESCENDS this, so lower loss means a more deformed spectrogram.
inline double mel_loss(const MelSpectrogram& orig, const MelSpectrogram& adv_blurred) {
  if (orig.bands.rows() != adv_blurred.bands.rows())
    throw std::invalid_argument("mel_loss: band count mismatch");
  const int overlap =
      static_cast<int>(std::min(orig.bands.cols(), adv_blurred.bands.cols()));
  if (overlap <= 0) throw std::invalid_argument("mel_loss: no overlapping frames");
  const double acc = (adv_blurred.bands.leftCols(overlap) - orig.bands.leftCols(overlap))
                         .square()
                         .colwise()
                         .mean()
                         .sum();
  return acc == 0.0 ? 0.0 : -acc;
}

// Binary cross-entropy of the adversarial gate against the original
// gate's probabilities, in the numerically stable logits form, summed
// over the aligned frames.
inline double gate_loss(const GateLogits& orig, const GateLogits& adv) {
  const int overlap = static_cast<int>(std::min(orig.logits.size(), adv.logits.size()));
  if (overlap <= 0) throw std::invalid_argument("gate_loss: no overlapping frames");
  double acc = 0.0;
  for (int t = 0; t < overlap; ++t) {
    const double z = adv.logits(t);
    const double y = 1.0 / (1.0 + std::exp(-orig.logits(t)));
    acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  return acc;
}

struct LossEval {
  double mel = 0.0;
  double gate = 0.0;
  MelSpectrogram adv_mel;  // unblurred decoder output for emb + delta
  MelSpectrogram adv_blurred;
  GateLogits adv_gate;

  double total() const { return mel + gate; }
};

inline LossEval final_loss_eval(const TtsBackend& tts, const DecodeResult& orig,
                                const Eigen::MatrixXd& emb, const Eigen::MatrixXd& delta,
                                const BlurParams& hp, const NoiseLayer& noise) {
  DecodeResult adv = tts.decode(emb + delta);
  LossEval e;
  e.adv_blurred = blur(adv.mel, hp, noise);
  e.adv_mel = std::move(adv.mel);
  e.adv_gate = std::move(adv.gate);
  e.mel = mel_loss(orig.mel, e.adv_blurred);
  e.gate = gate_loss(orig.gate, e.adv_gate);
  return e;
}

inline double final_loss(const TtsBackend& tts, const Eigen::MatrixXd& emb,
                         const Eigen::MatrixXd& delta, const BlurParams& hp,
                         const NoiseLayer& noise) {
  DecodeResult orig = tts.decode(emb);
  return final_loss_eval(tts, orig, emb, delta, hp, noise).total();
}

// Loss plus its gradient with respect to delta. The blur stages have a
// diagonal Jacobian (0 on erased bands, alpha on attenuated ones, 1
// elsewhere); the rest flows through the backend's decode_vjp.
inline LossEval final_loss_grad(const TtsBackend& tts, const DecodeResult& orig,
                                const Eigen::MatrixXd& emb, const Eigen::MatrixXd& delta,
                                const BlurParams& hp, const NoiseLayer& noise,
                                Eigen::MatrixXd* grad) {
  LossEval e = final_loss_eval(tts, orig, emb, delta, hp, noise);
  const int n_bands = static_cast<int>(e.adv_blurred.bands.rows());
  const int t_adv = static_cast<int>(e.adv_blurred.bands.cols());
  const int overlap = std::min(static_cast<int>(orig.mel.bands.cols()), t_adv);

  Eigen::ArrayXXd cot_mel = Eigen::ArrayXXd::Zero(n_bands, t_adv);
  cot_mel.leftCols(overlap) =
      (-2.0 / n_bands) *
      (e.adv_blurred.bands.leftCols(overlap) - orig.mel.bands.leftCols(overlap));
  for (int b = 0; b < n_bands; ++b) {
    double factor = 1.0;
    if (b < hp.beta) factor = 0.0;
    else if (b < hp.low_band_count) factor = hp.alpha;
    cot_mel.row(b) *= factor;
  }

  const int gate_overlap =
      std::min(static_cast<int>(orig.gate.logits.size()),
               static_cast<int>(e.adv_gate.logits.size()));
  Eigen::ArrayXd cot_gate = Eigen::ArrayXd::Zero(e.adv_gate.logits.size());
  for (int t = 0; t < gate_overlap; ++t) {
    const double y = 1.0 / (1.0 + std::exp(-orig.gate.logits(t)));
    const double z = e.adv_gate.logits(t);
    cot_gate(t) = 1.0 / (1.0 + std::exp(-z)) - y;
  }

  *grad = tts.decode_vjp(emb + delta, cot_mel, cot_gate);
  return e;
}

enum class QueryPolicy { online, offline };

struct OtlConfig {
  int epoch_max = 50;
  int num_candidates = 10;
  double learning_rate = 0.05;  // step length per epoch, as a fraction of thr
  double thr = -1.0;  // <= 0 selects the backend default
  QueryPolicy policy = QueryPolicy::online;
  BlurParams hp{0.3, 1, 1.0, 30};
  std::uint64_t rng_seed = 1;
};

struct TranscriptEvent {
  int candidate = 0;  // candidate index (over-the-line) or particle index
  int step = 0;       // epoch / iteration
  std::string kind;   // "online", "offline", "clean", "noisy"
  std::string transcript;
  double loss = 0.0;
  bool matched = false;
};

struct AttackResult {
  std::string target;
  Waveform audio;
  Eigen::MatrixXd delta;
  double loss = std::numeric_limits<double>::infinity();
  double loss_mel = 0.0;
  double loss_gate = 0.0;
  std::uint64_t queries = 0;
  std::vector<std::uint64_t> queries_per_candidate;
  bool success = false;
  std::string final_transcript;
  int chosen_candidate = -1;
  std::vector<TranscriptEvent> history;
};

namespace detail {

struct CandidateState {
  bool valid = false;
  double loss = std::numeric_limits<double>::infinity();
  double loss_mel = 0.0;
  double loss_gate = 0.0;
  Eigen::MatrixXd delta;
  Waveform audio;
  std::string transcript;
};

}  // namespace detail

// Gradient-descent attack on the linguistic embedding. Each candidate
// owns a frozen blur-noise layer and walks delta downhill until the
// infinity norm of the next step would exceed thr. Online policy queries
// the oracle at every loss improvement; offline queries once per
// candidate after its loop. The returned result is the lowest-loss
// successful candidate, or the lowest-loss candidate overall when none
// succeeds.
inline AttackResult otl_generate(const std::string& target_text, const TtsBackend& tts,
                                 OracleSession& session, const OtlConfig& cfg) {
  if (cfg.epoch_max < 1 || cfg.num_candidates < 1)
    throw std::invalid_argument("otl_generate: epoch_max and num_candidates must be >= 1");
  const std::string target = normalize_text(target_text);
  if (target != target_text)
    throw std::invalid_argument("otl_generate: target text must be in normal form");

  const LinguisticEmbedding emb = tts.encode(target);
  const DecodeResult orig = tts.decode(emb.rows);
  const double thr = cfg.thr > 0.0 ? cfg.thr : tts.default_threshold();
  const int n_frames = static_cast<int>(orig.mel.bands.cols());

  AttackResult result;
  result.target = target;
  detail::CandidateState best_success, best_any;
  int best_success_idx = -1, best_any_idx = -1;

  for (int c = 0; c < cfg.num_candidates; ++c) {
    const std::uint64_t cand_seed =
        derive_seed(cfg.rng_seed, "otl-candidate-" + std::to_string(c));
    const NoiseLayer noise =
        freeze_noise(cfg.hp, tts.n_mels(), n_frames, derive_seed(cand_seed, "blur"));
    QueryLedger::BudgetScope budget(
        session.ledger(),
        cfg.policy == QueryPolicy::online ? static_cast<std::uint64_t>(cfg.epoch_max) : 1u);

    Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(emb.rows.rows(), emb.rows.cols());
    double best_loss = std::numeric_limits<double>::infinity();
    std::uint64_t cand_queries = 0;
    detail::CandidateState cand_success, cand_any, pending;

    for (int epoch = 1; epoch <= cfg.epoch_max; ++epoch) {
      Eigen::MatrixXd grad;
      LossEval eval = final_loss_grad(tts, orig, emb.rows, delta, cfg.hp, noise, &grad);
      if (eval.total() < best_loss) {
        best_loss = eval.total();
        pending.valid = true;
        pending.loss = eval.total();
        pending.loss_mel = eval.mel;
        pending.loss_gate = eval.gate;
        pending.delta = delta;
        if (cfg.policy == QueryPolicy::online) {
          Waveform audio = tts.vocode(eval.adv_blurred);
          Transcription t = session.transcribe(audio);
          ++cand_queries;
          const bool matched = t.normalized_text == target;
          result.history.push_back(
              {c, epoch, "online", t.raw_text, eval.total(), matched});
          pending.audio = audio;
          pending.transcript = t.raw_text;
          if (matched && eval.total() < cand_success.loss) cand_success = pending;
          if (eval.total() < cand_any.loss) cand_any = pending;
        } else {
          pending.audio = Waveform{};  // synthesized lazily at the final query
        }
      }
      // Steepest-descent step scaled to the search ball: learning_rate is
      // the fraction of thr moved per epoch, independent of loss scale.
      const double gscale = inf_norm(grad);
      if (gscale <= 0.0) break;
      Eigen::MatrixXd next = delta - (cfg.learning_rate * thr / gscale) * grad;
      if (inf_norm(next) > thr) break;
      delta = std::move(next);
    }

    if (cfg.policy == QueryPolicy::offline && pending.valid) {
      LossEval eval =
          final_loss_eval(tts, orig, emb.rows, pending.delta, cfg.hp, noise);
      Waveform audio = tts.vocode(eval.adv_blurred);
      Transcription t = session.transcribe(audio);
      cand_queries = 1;
      const bool matched = t.normalized_text == target;
      result.history.push_back(
          {c, cfg.epoch_max, "offline", t.raw_text, pending.loss, matched});
      pending.audio = std::move(audio);
      pending.transcript = t.raw_text;
      if (matched) cand_success = pending;
      cand_any = pending;
    }

    result.queries_per_candidate.push_back(cand_queries);
    result.queries += cand_queries;
    if (cand_success.valid && cand_success.loss < best_success.loss) {
      best_success = cand_success;
      best_success_idx = c;
    }
    if (cand_any.valid && cand_any.loss < best_any.loss) {
      best_any = cand_any;
      best_any_idx = c;
    }
  }

  result.success = best_success.valid;
  result.chosen_candidate = result.success ? best_success_idx : best_any_idx;
  const detail::CandidateState& chosen = result.success ? best_success : best_any;
  if (chosen.valid) {
    result.audio = chosen.audio;
    result.delta = chosen.delta;
    result.loss = chosen.loss;
    result.loss_mel = chosen.loss_mel;
    result.loss_gate = chosen.loss_gate;
    result.final_transcript = chosen.transcript;
  }
  return result;
}

struct Particle {
  Eigen::MatrixXd position;
  Eigen::MatrixXd velocity;
  Eigen::MatrixXd pbest;
  double ploss = std::numeric_limits<double>::infinity();
};

struct Swarm {
  std::vector<Particle> particles;
  Eigen::MatrixXd gbest;
  double gloss = std::numeric_limits<double>::infinity();
};

inline Swarm init_swarm(int k, int rows, int cols, double thr, Rng& rng) {
  if (k < 1) throw std::invalid_argument("init_swarm: k must be >= 1");
  Swarm s;
  s.particles.resize(static_cast<std::size_t>(k));
  for (auto& p : s.particles) {
    p.position = Eigen::MatrixXd::Zero(rows, cols);
    p.velocity = Eigen::MatrixXd(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        p.velocity(i, j) = rng.uniform(-thr / 10.0, thr / 10.0);
    p.pbest = p.position;
  }
  s.gbest = Eigen::MatrixXd::Zero(rows, cols);
  return s;
}

// One particle's velocity/position update. r1 and r2 are shared across
// all dimensions of the particle. The position moves only when the
// candidate stays strictly inside the threshold ball; the newly computed
// velocity is kept either way.
inline void particle_update(Particle& p, const Eigen::MatrixXd& gbest, double w,
                            double c1, double c2, double r1, double r2, double thr) {
  p.velocity = w * p.velocity + c1 * r1 * (p.pbest - p.position) +
               c2 * r2 * (gbest - p.position);
  Eigen::MatrixXd candidate = p.position + p.velocity;
  if (inf_norm(candidate) < thr) p.position = std::move(candidate);
}

inline void pso_step(Swarm& s, double w, double c1, double c2, double thr, Rng& rng) {
  for (auto& p : s.particles) {
    const double r1 = rng.uniform();
    const double r2 = rng.uniform();
    particle_update(p, s.gbest, w, c1, c2, r1, r2, thr);
  }
}

struct OtaConfig {
  int k = 20;
  int epoch_max = 10;
  double w = 0.5;
  double c1 = 2.0;
  double c2 = 2.0;
  double thr = -1.0;  // <= 0 selects the backend default
  double eta = 0.1;
  // In-loop noise checks run at eta * eta_margin so the returned sample
  // keeps passing under fresh draws at eta instead of overfitting the one
  // draw it was graded on.
  double eta_margin = 1.4;
  BlurParams hp{0.3, 1, 1.0, 30};
  std::uint64_t rng_seed = 1;
};

// Particle-swarm attack with a noise-robustness condition: a particle's
// loss is finite only when its candidate audio transcribes to the target
// both as-is and after fresh white playback noise of amplitude eta (with
// the eta_margin headroom). Blur shapes only the loss; the oracle hears
// the raw synthesized candidate. Blur noise is frozen per particle;
// playback noise is redrawn per evaluation.
inline AttackResult ota_generate(const std::string& target_text, const TtsBackend& tts,
                                 OracleSession& session, const OtaConfig& cfg) {
  if (cfg.k < 1 || cfg.epoch_max < 1)
    throw std::invalid_argument("ota_generate: k and epoch_max must be >= 1");
  if (cfg.w < 0.0 || cfg.c1 < 0.0 || cfg.c2 < 0.0)
    throw std::invalid_argument("ota_generate: w, c1, c2 must be >= 0");
  const std::string target = normalize_text(target_text);
  if (target != target_text)
    throw std::invalid_argument("ota_generate: target text must be in normal form");

  const LinguisticEmbedding emb = tts.encode(target);
  const DecodeResult orig = tts.decode(emb.rows);
  const double thr = cfg.thr > 0.0 ? cfg.thr : tts.default_threshold();
  const int n_frames = static_cast<int>(orig.mel.bands.cols());
  const int rows = static_cast<int>(emb.rows.rows());
  const int cols = static_cast<int>(emb.rows.cols());

  Rng init_rng(derive_seed(cfg.rng_seed, "swarm-init"));
  Swarm swarm = init_swarm(cfg.k, rows, cols, thr, init_rng);
  Rng step_rng(derive_seed(cfg.rng_seed, "swarm-step"));

  std::vector<NoiseLayer> noise(static_cast<std::size_t>(cfg.k));
  for (int i = 0; i < cfg.k; ++i)
    noise[static_cast<std::size_t>(i)] = freeze_noise(
        cfg.hp, tts.n_mels(), n_frames,
        derive_seed(cfg.rng_seed, "ota-blur-" + std::to_string(i)));

  QueryLedger::BudgetScope budget(
      session.ledger(),
      static_cast<std::uint64_t>(cfg.k) * static_cast<std::uint64_t>(cfg.epoch_max) * 2u);

  AttackResult result;
  result.target = target;
  double best_mel = 0.0, best_gate = 0.0;

  for (int iter = 1; iter <= cfg.epoch_max; ++iter) {
    for (int i = 0; i < cfg.k; ++i) {
      Particle& p = swarm.particles[static_cast<std::size_t>(i)];
      LossEval eval = final_loss_eval(tts, orig, emb.rows, p.position, cfg.hp,
                                      noise[static_cast<std::size_t>(i)]);
      double loss = std::numeric_limits<double>::infinity();
      Waveform clean;
      bool conditions = false;
      try {
        Waveform candidate = tts.vocode(eval.adv_mel);
        clean = mix_noise_and_scale(candidate, 0.0);
        Waveform noisy = mix_noise_and_scale(
            candidate, cfg.eta * cfg.eta_margin,
            derive_seed(cfg.rng_seed, "playback-" + std::to_string(iter) + "-" +
                                          std::to_string(i)));
        Transcription t_clean = session.transcribe(clean);
        result.queries += 1;
        Transcription t_noisy = session.transcribe(noisy);
        result.queries += 1;
        const bool m1 = t_clean.normalized_text == target;
        const bool m2 = t_noisy.normalized_text == target;
        conditions = m1 && m2;
        if (conditions) loss = eval.total();
        result.history.push_back({i, iter, "clean", t_clean.raw_text, loss, m1});
        result.history.push_back({i, iter, "noisy", t_noisy.raw_text, loss, m2});
      } catch (const std::invalid_argument&) {
        // Degenerate candidate (e.g. silent audio): conditions fail.
      }
      if (loss < p.ploss) {
        p.ploss = loss;
        p.pbest = p.position;
      }
      if (loss < swarm.gloss) {
        swarm.gloss = loss;
        swarm.gbest = p.position;
        result.audio = clean;
        result.delta = p.position;
        result.success = true;
        best_mel = eval.mel;
        best_gate = eval.gate;
        result.chosen_candidate = i;
        result.final_transcript = target;
      }
    }
    pso_step(swarm, cfg.w, cfg.c1, cfg.c2, thr, step_rng);
  }

  result.loss = swarm.gloss;
  result.loss_mel = best_mel;
  result.loss_gate = best_gate;
  if (!result.success) {
    // Nothing satisfied both conditions; attach the unperturbed rendering.
    DecodeResult base = tts.decode(emb.rows);
    result.audio = mix_noise_and_scale(tts.vocode(base.mel), 0.0);
    result.delta = Eigen::MatrixXd::Zero(rows, cols);
    result.final_transcript.clear();
  }
  return result;
}

}  // namespace garble
