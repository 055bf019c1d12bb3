// garble/metrics.hpp
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

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "garble/common.hpp"

namespace garble {

// Levenshtein distance with unit costs over arbitrary token sequences.
template <typename Seq>
std::size_t edit_distance_seq(const Seq& a, const Seq& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  return edit_distance_seq(a, b);
}

// Character error rate over normalized text. The reference must not
// normalize to nothing; the hypothesis may.
inline double cer(const std::string& reference, const std::string& hypothesis) {
  const std::string ref = normalize_text(reference);
  const std::string hyp = normalize_text(hypothesis);
  if (ref.empty()) throw std::invalid_argument("cer: reference normalizes to nothing");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

inline double wer(const std::string& reference, const std::string& hypothesis) {
  const std::vector<std::string> ref = split_words(normalize_text(reference));
  const std::vector<std::string> hyp = split_words(normalize_text(hypothesis));
  if (ref.empty()) throw std::invalid_argument("wer: reference normalizes to nothing");
  return static_cast<double>(edit_distance_seq(ref, hyp)) / static_cast<double>(ref.size());
}

// One attack attempt as it lands in reports: which hyper-parameter cell
// and oracle produced it, what came back, and what it cost.
struct AttackOutcome {
  std::string hp_label;
  std::string oracle_id;
  std::string target;
  std::string transcript;
  std::uint64_t queries = 0;
  bool success = false;
};

struct SuccessCell {
  std::uint64_t successes = 0;
  std::uint64_t attempts = 0;
  std::uint64_t total_queries = 0;

  double rate() const {
    return attempts == 0 ? 0.0 : static_cast<double>(successes) / attempts;
  }
  double mean_queries() const {
    return attempts == 0 ? 0.0 : static_cast<double>(total_queries) / attempts;
  }
};

// Success table keyed by (hp row, oracle column) preserving first-seen
// order, so report layout follows configuration order.
struct SuccessTable {
  std::vector<std::string> hp_labels;
  std::vector<std::string> oracle_ids;
  std::map<std::pair<std::string, std::string>, SuccessCell> cells;

  const SuccessCell* find(const std::string& hp, const std::string& oracle) const {
    auto it = cells.find({hp, oracle});
    return it == cells.end() ? nullptr : &it->second;
  }
};

inline SuccessTable success_rate(const std::vector<AttackOutcome>& outcomes) {
  SuccessTable t;
  for (const auto& o : outcomes) {
    if (std::find(t.hp_labels.begin(), t.hp_labels.end(), o.hp_label) == t.hp_labels.end())
      t.hp_labels.push_back(o.hp_label);
    if (std::find(t.oracle_ids.begin(), t.oracle_ids.end(), o.oracle_id) ==
        t.oracle_ids.end())
      t.oracle_ids.push_back(o.oracle_id);
    SuccessCell& c = t.cells[{o.hp_label, o.oracle_id}];
    c.attempts += 1;
    c.successes += o.success ? 1 : 0;
    c.total_queries += o.queries;
  }
  return t;
}

}  // namespace garble
