// garble/asr.hpp
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
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "garble/common.hpp"
#include "garble/signal.hpp"
#include "garble/tts.hpp"

namespace garble {

struct Transcription {
  std::string raw_text;
  std::string normalized_text;
  bool matched = false;  // convenience flag, filled by callers against a target

  bool no_match() const { return normalized_text.empty(); }
};

inline Transcription make_transcription(std::string raw) {
  Transcription t;
  t.normalized_text = normalize_text(raw);
  t.raw_text = std::move(raw);
  return t;
}

// Speech-to-text service boundary. Implementations that perform their own
// transport-level retries account their physical requests directly into a
// ledger and report self_accounts() == true; for everything else the
// session wrapper counts one request per transcribe call.
class AsrOracle {
 public:
  virtual ~AsrOracle() = default;
  virtual std::string id() const = 0;
  virtual Transcription transcribe(const Waveform& w) = 0;
  virtual bool self_accounts() const { return false; }
};

class QueryBudgetExceeded : public std::runtime_error {
 public:
  explicit QueryBudgetExceeded(const std::string& what) : std::runtime_error(what) {}
};

struct LedgerEvent {
  std::string timestamp;
  std::string oracle_id;
  std::string audio_sha256;
  std::string transcript;
  bool cached = false;
};

// Central account of oracle usage: per-oracle request counters, an event
// log (one entry per logical transcription, cache hits flagged), and an
// optional stack of budget ceilings that throw when breached.
class QueryLedger {
 public:
  void count_request(const std::string& oracle_id) {
    std::lock_guard<std::mutex> lock(mu_);
    for (std::uint64_t& remaining : budgets_) {
      if (remaining == 0)
        throw QueryBudgetExceeded("query budget exceeded for oracle " + oracle_id);
      --remaining;
    }
    ++counts_[oracle_id];
  }

  void log_event(const std::string& oracle_id, const std::string& audio_sha256,
                 const std::string& transcript, bool cached) {
    std::lock_guard<std::mutex> lock(mu_);
    LedgerEvent e{iso8601_utc_now(), oracle_id, audio_sha256, transcript, cached};
    if (log_) {
      (*log_) << "{\"time\":\"" << e.timestamp << "\",\"oracle\":\"" << e.oracle_id
              << "\",\"audio_sha256\":\"" << e.audio_sha256 << "\",\"transcript\":\""
              << escape(e.transcript) << "\",\"cached\":" << (cached ? "true" : "false")
              << "}\n";
      log_->flush();
    }
    events_.push_back(std::move(e));
  }

  std::uint64_t count(const std::string& oracle_id) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = counts_.find(oracle_id);
    return it == counts_.end() ? 0 : it->second;
  }

  std::uint64_t total() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::uint64_t n = 0;
    for (const auto& [_, c] : counts_) n += c;
    return n;
  }

  std::vector<LedgerEvent> events() const {
    std::lock_guard<std::mutex> lock(mu_);
    return events_;
  }

  void open_log(const std::string& path) {
    std::lock_guard<std::mutex> lock(mu_);
    log_ = std::make_unique<std::ofstream>(path, std::ios::app);
    if (!*log_) {
      log_.reset();
      throw std::runtime_error("QueryLedger: cannot open log " + path);
    }
  }

  // Hard ceiling on the number of requests allowed while the scope is
  // alive. Scopes nest; the tightest one wins.
  class BudgetScope {
   public:
    BudgetScope(QueryLedger& ledger, std::uint64_t ceiling) : ledger_(ledger) {
      std::lock_guard<std::mutex> lock(ledger_.mu_);
      ledger_.budgets_.push_back(ceiling);
    }
    ~BudgetScope() {
      std::lock_guard<std::mutex> lock(ledger_.mu_);
      ledger_.budgets_.pop_back();
    }
    BudgetScope(const BudgetScope&) = delete;
    BudgetScope& operator=(const BudgetScope&) = delete;

   private:
    QueryLedger& ledger_;
  };

 private:
  static std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      if (static_cast<unsigned char>(c) >= 0x20) out.push_back(c);
    }
    return out;
  }

  mutable std::mutex mu_;
  std::map<std::string, std::uint64_t> counts_;
  std::vector<LedgerEvent> events_;
  std::vector<std::uint64_t> budgets_;
  std::unique_ptr<std::ofstream> log_;
};

inline std::string waveform_sha256(const Waveform& w) {
  std::string buf;
  buf.reserve(w.samples.size() * sizeof(double) + sizeof(int));
  buf.append(reinterpret_cast<const char*>(&w.sample_rate_hz), sizeof(int));
  buf.append(reinterpret_cast<const char*>(w.samples.data()),
             w.samples.size() * sizeof(double));
  return sha256_hex(buf.data(), buf.size());
}

// Caching and accounting wrapper around an oracle. Repeat audio (by
// content hash) is answered from the cache and logged with cached=true
// without touching the request counters.
class OracleSession {
 public:
  OracleSession(AsrOracle& oracle, QueryLedger& ledger)
      : oracle_(oracle), ledger_(ledger) {}

  Transcription transcribe(const Waveform& w) {
    const std::string key = waveform_sha256(w);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ledger_.log_event(oracle_.id(), key, it->second.raw_text, true);
      return it->second;
    }
    if (!oracle_.self_accounts()) ledger_.count_request(oracle_.id());
    Transcription t = oracle_.transcribe(w);
    ledger_.log_event(oracle_.id(), key, t.raw_text, false);
    cache_.emplace(key, t);
    return t;
  }

  AsrOracle& oracle() { return oracle_; }
  QueryLedger& ledger() { return ledger_; }

 private:
  AsrOracle& oracle_;
  QueryLedger& ledger_;
  std::unordered_map<std::string, Transcription> cache_;
};

struct MockAsrParams {
  double tau = 0.0;              // 0 selects automatic calibration
  double robustness_sigma = 1.0; // temporal smoothing of feature tracks, in frames
  double mel_floor = 1.0;        // mel floor, after waveform peak normalization
  int n_coeffs = 13;
  int feat_n_fft = 1024;
  int feat_hop = 512;            // 50% overlap
  std::uint64_t calibration_seed = 0xca11b;
};

class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

// Template matcher that stands in for a speech-to-text service. Each
// vocabulary entry is synthesized once and reduced to mean-normalized
// mel-cepstral feature tracks; transcription returns the nearest template
// under dynamic time warping, or nothing when the distance exceeds the
// decision threshold tau.
class MockAsr : public AsrOracle {
 public:
  using Features = Eigen::MatrixXd;  // [n_coeffs, n_frames]

  MockAsr(const std::vector<std::string>& vocabulary, const ToyTts& tts,
          MockAsrParams params = {})
      : params_(params) {
    if (vocabulary.empty()) throw std::invalid_argument("MockAsr: empty vocabulary");
    for (const std::string& phrase : vocabulary) {
      const std::string norm = normalize_text(phrase);
      if (norm.empty())
        throw std::invalid_argument("MockAsr: vocabulary entry normalizes to nothing");
      for (const auto& e : entries_)
        if (e.normalized == norm)
          throw std::invalid_argument("MockAsr: duplicate vocabulary entry '" + norm + "'");
      Entry e;
      e.raw = phrase;
      e.normalized = norm;
      Waveform audio = tts.vocode(tts.decode(tts.encode(phrase).rows).mel);
      e.audio_len = audio.samples.size();
      e.sample_rate_hz = audio.sample_rate_hz;
      auto feats = features(audio);
      if (!feats) throw CalibrationError("MockAsr: template audio yields no features");
      e.features = std::move(*feats);
      entries_.push_back(std::move(e));
    }
    if (params_.tau > 0.0) {
      tau_ = params_.tau;
    } else {
      calibrate();
    }
    self_test(tts);
  }

  std::string id() const override { return "mock"; }

  Transcription transcribe(const Waveform& w) override {
    auto feats = features(w);
    if (!feats) return make_transcription("");
    double best = std::numeric_limits<double>::infinity();
    const Entry* match = nullptr;
    for (const auto& e : entries_) {
      const double d = dtw_distance(*feats, e.features);
      if (d < best) {
        best = d;
        match = &e;
      }
    }
    if (match == nullptr || best > tau_) return make_transcription("");
    return make_transcription(match->raw);
  }

  double decision_threshold() const { return tau_; }

  // Distance of the waveform to every template, for diagnostics.
  std::vector<std::pair<std::string, double>> distances(const Waveform& w) const {
    std::vector<std::pair<std::string, double>> out;
    auto feats = features(w);
    for (const auto& e : entries_) {
      const double d =
          feats ? dtw_distance(*feats, e.features) : std::numeric_limits<double>::infinity();
      out.emplace_back(e.normalized, d);
    }
    return out;
  }

  // Feature extraction: peak-normalize, 80-band log-mel with a fixed
  // floor, orthonormal DCT keeping coefficients 1..n_coeffs, per-track
  // mean removal, then Gaussian smoothing along time. Mean removal makes
  // matching invariant to stationary per-band attenuation as long as the
  // band stays above the floor; a band forced under the floor flattens
  // and loses the temporal structure matching depends on.
  std::optional<Features> features(const Waveform& w) const {
    if (w.samples.empty() || static_cast<int>(w.samples.size()) < params_.feat_n_fft)
      return std::nullopt;
    double peak = 0.0;
    for (double v : w.samples) peak = std::max(peak, std::abs(v));
    if (peak <= 0.0) return std::nullopt;

    Waveform n;
    n.sample_rate_hz = w.sample_rate_hz;
    n.samples.resize(w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i) n.samples[i] = w.samples[i] / peak;

    StftParams p;
    p.n_fft = params_.feat_n_fft;
    p.hop = params_.feat_hop;
    Spectrogram s = stft(n, p);
    MelFilterbank fb = make_mel_filterbank(
        80, p.n_fft, w.sample_rate_hz, 0.0,
        std::min(8000.0, w.sample_rate_hz / 2.0), FilterShape::partition);
    MelSpectrogram mel = mel_project(s, fb);

    const double floor = std::max(params_.mel_floor, 1e-10);
    Eigen::ArrayXXd logmel = mel.bands.max(floor).log();

    const int n_bands = static_cast<int>(logmel.rows());
    const int n_frames = static_cast<int>(logmel.cols());
    Features f(params_.n_coeffs, n_frames);
    for (int t = 0; t < n_frames; ++t)
      for (int k = 1; k <= params_.n_coeffs; ++k) {
        double acc = 0.0;
        for (int b = 0; b < n_bands; ++b)
          acc += logmel(b, t) * std::cos(M_PI * k * (2.0 * b + 1.0) / (2.0 * n_bands));
        f(k - 1, t) = acc * std::sqrt(2.0 / n_bands);
      }

    Eigen::VectorXd mean = f.rowwise().mean();
    f.colwise() -= mean;

    if (params_.robustness_sigma > 0.0) f = smooth_tracks(f, params_.robustness_sigma);
    return f;
  }

  // Symmetric DTW with diagonal weight 2, normalized by the summed track
  // lengths so the score is comparable across durations.
  static double dtw_distance(const Features& a, const Features& b) {
    const int n = static_cast<int>(a.cols());
    const int m = static_cast<int>(b.cols());
    if (n == 0 || m == 0) return std::numeric_limits<double>::infinity();
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(static_cast<std::size_t>(m) + 1, inf), cur(prev);
    prev[0] = 0.0;
    for (int i = 1; i <= n; ++i) {
      cur[0] = inf;
      for (int j = 1; j <= m; ++j) {
        const double d = (a.col(i - 1) - b.col(j - 1)).norm();
        const double step =
            std::min({prev[static_cast<std::size_t>(j) - 1] + 2.0 * d,
                      prev[static_cast<std::size_t>(j)] + d,
                      cur[static_cast<std::size_t>(j) - 1] + d});
        cur[static_cast<std::size_t>(j)] = step;
      }
      std::swap(prev, cur);
    }
    return prev[static_cast<std::size_t>(m)] / (n + m);
  }

 private:
  struct Entry {
    std::string raw;
    std::string normalized;
    Features features;
    std::size_t audio_len = 0;
    int sample_rate_hz = 22050;
  };

  // tau sits at half the nearest cross-template distance (no waveform can
  // then be within tau of two templates at once) and strictly below the
  // seeded white-noise distance, leaving clean renderings a margin of
  // 3x or better, which self_test verifies.
  void calibrate() {
    double min_cross = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < entries_.size(); ++i)
      for (std::size_t j = i + 1; j < entries_.size(); ++j)
        min_cross = std::min(min_cross,
                             dtw_distance(entries_[i].features, entries_[j].features));

    Rng rng(params_.calibration_seed);
    Waveform noise;
    noise.sample_rate_hz = entries_.front().sample_rate_hz;
    noise.samples.resize(entries_.front().audio_len);
    for (double& v : noise.samples) v = rng.uniform(-1.0, 1.0);
    auto noise_feats = features(noise);
    double min_noise = std::numeric_limits<double>::infinity();
    if (noise_feats)
      for (const auto& e : entries_)
        min_noise = std::min(min_noise, dtw_distance(*noise_feats, e.features));

    if (!std::isfinite(min_cross) || min_cross <= 0.0)
      throw CalibrationError("MockAsr: degenerate distance between templates");
    tau_ = std::min(min_cross / 2.0, min_noise * 0.8);
  }

  void self_test(const ToyTts& tts) const {
    for (const auto& e : entries_) {
      Waveform audio = tts.vocode(tts.decode(tts.encode(e.raw).rows).mel);
      auto feats = features(audio);
      if (!feats) throw CalibrationError("MockAsr: self test produced no features");
      double best = std::numeric_limits<double>::infinity();
      const Entry* match = nullptr;
      for (const auto& other : entries_) {
        const double d = dtw_distance(*feats, other.features);
        if (d < best) {
          best = d;
          match = &other;
        }
      }
      // Clean renderings must land at three times the threshold or better.
      if (match == nullptr || match->normalized != e.normalized || best > tau_ / 3.0)
        throw CalibrationError("MockAsr: clean synthesis of '" + e.normalized +
                               "' does not transcribe to itself");
    }
  }

  static Features smooth_tracks(const Features& f, double sigma) {
    const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kern(static_cast<std::size_t>(2 * half) + 1);
    double total = 0.0;
    for (int j = -half; j <= half; ++j) {
      kern[static_cast<std::size_t>(j + half)] = std::exp(-0.5 * (j / sigma) * (j / sigma));
      total += kern[static_cast<std::size_t>(j + half)];
    }
    for (double& v : kern) v /= total;
    const int n_frames = static_cast<int>(f.cols());
    Features out = Features::Zero(f.rows(), n_frames);
    for (int t = 0; t < n_frames; ++t) {
      double used = 0.0;
      for (int j = -half; j <= half; ++j) {
        const int s = t + j;
        if (s < 0 || s >= n_frames) continue;
        const double kv = kern[static_cast<std::size_t>(j + half)];
        out.col(t) += kv * f.col(s);
        used += kv;
      }
      if (used > 0.0) out.col(t) /= used;
    }
    return out;
  }

  MockAsrParams params_;
  std::vector<Entry> entries_;
  double tau_ = 0.0;
};

}  // namespace garble
