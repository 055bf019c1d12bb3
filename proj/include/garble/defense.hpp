// garble/defense.hpp
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

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "garble/asr.hpp"
#include "garble/metrics.hpp"
#include "garble/signal.hpp"

namespace garble {

enum class DefenseKind { downsample_upsample, low_pass, high_pass };

struct DefenseSpec {
  DefenseKind kind = DefenseKind::downsample_upsample;
  double rate_hz = 8000.0;    // downsample_upsample target rate
  double cutoff_hz = 500.0;   // filter cutoff
  int order = 4;

  std::string label() const {
    char buf[64];
    switch (kind) {
      case DefenseKind::downsample_upsample:
        std::snprintf(buf, sizeof buf, "down%g", rate_hz);
        break;
      case DefenseKind::low_pass:
        std::snprintf(buf, sizeof buf, "lp%g", cutoff_hz);
        break;
      case DefenseKind::high_pass:
        std::snprintf(buf, sizeof buf, "hp%g", cutoff_hz);
        break;
    }
    return buf;
  }
};

inline Waveform apply_defense(const Waveform& w, const DefenseSpec& spec) {
  switch (spec.kind) {
    case DefenseKind::downsample_upsample: {
      const int low = static_cast<int>(spec.rate_hz);
      if (low <= 0) throw std::invalid_argument("apply_defense: bad downsample rate");
      Waveform down = resample(w, low);
      return resample(down, w.sample_rate_hz);
    }
    case DefenseKind::low_pass:
      return biquad_filter(w, FilterKind::low_pass, spec.cutoff_hz, spec.order);
    case DefenseKind::high_pass:
      return biquad_filter(w, FilterKind::high_pass, spec.cutoff_hz, spec.order);
  }
  throw std::logic_error("apply_defense: unknown kind");
}

struct StoredSample {
  std::string target;
  Waveform audio;
  std::string hp_label;  // carried through to the report rows
};

struct DefenseEvaluation {
  SuccessTable before;                 // one row per hp label, no defense
  std::vector<std::string> defense_labels;
  std::vector<SuccessTable> after;     // parallel to defense_labels
  std::vector<double> rate_drop;       // before minus after, pooled over rows
};

// Replays stored attack samples through the oracle with and without each
// defense. Queries run through the session, so they are ledgered and
// cached like any other.
inline DefenseEvaluation evaluate_defense(const std::vector<StoredSample>& samples,
                                          OracleSession& session,
                                          const std::vector<DefenseSpec>& specs) {
  DefenseEvaluation out;
  std::vector<AttackOutcome> base;
  for (const auto& s : samples) {
    Transcription t = session.transcribe(s.audio);
    AttackOutcome o;
    o.hp_label = s.hp_label.empty() ? "all" : s.hp_label;
    o.oracle_id = session.oracle().id();
    o.target = s.target;
    o.transcript = t.raw_text;
    o.queries = 1;
    o.success = t.normalized_text == normalize_text(s.target);
    base.push_back(std::move(o));
  }
  out.before = success_rate(base);

  auto pooled_rate = [](const std::vector<AttackOutcome>& v) {
    std::uint64_t ok = 0;
    for (const auto& o : v) ok += o.success ? 1 : 0;
    return v.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(v.size());
  };

  for (const auto& spec : specs) {
    std::vector<AttackOutcome> defended;
    for (const auto& s : samples) {
      Waveform guarded = apply_defense(s.audio, spec);
      Transcription t = session.transcribe(guarded);
      AttackOutcome o;
      o.hp_label = s.hp_label.empty() ? "all" : s.hp_label;
      o.oracle_id = session.oracle().id();
      o.target = s.target;
      o.transcript = t.raw_text;
      o.queries = 1;
      o.success = t.normalized_text == normalize_text(s.target);
      defended.push_back(std::move(o));
    }
    out.defense_labels.push_back(spec.label());
    out.after.push_back(success_rate(defended));
    out.rate_drop.push_back(pooled_rate(base) - pooled_rate(defended));
  }
  return out;
}

}  // namespace garble
