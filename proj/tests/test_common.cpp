// garble/tests/test_common.cpp
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

#include <algorithm>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "garble/common.hpp"
#include "garble/metrics.hpp"

namespace {

// Textbook recursion, exponential but obviously correct. Serves as the
// oracle for the rolling-row implementation.
std::size_t lev_naive(std::string_view a, std::string_view b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  const std::size_t sub = a.front() == b.front() ? 0 : 1;
  return std::min({lev_naive(a.substr(1), b) + 1, lev_naive(a, b.substr(1)) + 1,
                   lev_naive(a.substr(1), b.substr(1)) + sub});
}

std::vector<std::string> all_strings_up_to_3() {
  const std::string alphabet = "abc";
  std::vector<std::string> out{""};
  std::vector<std::string> layer{""};
  for (int len = 1; len <= 3; ++len) {
    std::vector<std::string> next;
    for (const std::string& s : layer)
      for (char c : alphabet) next.push_back(s + c);
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

}  // namespace

TEST_CASE("rng streams repeat per seed and stay in range") {
  garble::Rng a(42), b(42), c(43);
  bool diverged = false;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t va = a.next_u64();
    REQUIRE(va == b.next_u64());
    if (va != c.next_u64()) diverged = true;
  }
  REQUIRE(diverged);

  garble::Rng r(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    const double v = r.uniform(-2.5, 3.5);
    REQUIRE(v >= -2.5);
    REQUIRE(v < 3.5);
    const int k = r.uniform_int(3, 5);
    REQUIRE(k >= 3);
    REQUIRE(k <= 5);
    REQUIRE(std::isfinite(r.gaussian()));
  }

  // Inclusive integer bounds are actually reachable.
  garble::Rng ri(11);
  std::set<int> seen;
  for (int i = 0; i < 200; ++i) seen.insert(ri.uniform_int(0, 2));
  REQUIRE(seen == std::set<int>{0, 1, 2});
}

TEST_CASE("derive_seed separates labels and bases") {
  const std::uint64_t s1 = garble::derive_seed(1, "candidate-0");
  REQUIRE(s1 == garble::derive_seed(1, "candidate-0"));
  REQUIRE(s1 != garble::derive_seed(1, "candidate-1"));
  REQUIRE(s1 != garble::derive_seed(2, "candidate-0"));

  // Streams from sibling labels should not collide pairwise.
  std::set<std::uint64_t> seeds;
  for (int i = 0; i < 64; ++i)
    seeds.insert(garble::derive_seed(99, "text-" + std::to_string(i)));
  REQUIRE(seeds.size() == 64);
}

TEST_CASE("sha256 matches published vectors") {
  REQUIRE(garble::sha256_hex(std::string_view{}) ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  REQUIRE(garble::sha256_hex(std::string_view{"abc"}) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

  // The vector<double> overload hashes raw little-endian bytes; same
  // content, same digest, and any bit flip changes it.
  const std::vector<double> x{0.0, 1.5, -2.25};
  std::vector<double> y = x;
  REQUIRE(garble::sha256_hex(x) == garble::sha256_hex(y));
  y[1] = std::nextafter(y[1], 2.0);
  REQUIRE(garble::sha256_hex(x) != garble::sha256_hex(y));
}

TEST_CASE("normalize_text folds case and punctuation") {
  REQUIRE(garble::normalize_text("What's the TIME?") == "what's the time");
  REQUIRE(garble::normalize_text("  Hello,   world!  ") == "hello world");
  REQUIRE(garble::normalize_text("call 123") == "call 123");
  REQUIRE(garble::normalize_text("semi-colon;test") == "semi colon test");
  REQUIRE(garble::normalize_text("!!!").empty());
  REQUIRE(garble::normalize_text("").empty());
  // Idempotent on its own output.
  const std::string once = garble::normalize_text("Turn ON the Light!");
  REQUIRE(garble::normalize_text(once) == once);
}

TEST_CASE("slugify produces file-safe names") {
  REQUIRE(garble::slugify("what's the time") == "whats-the-time");
  REQUIRE(garble::slugify("Call 123!") == "call-123");
  REQUIRE(garble::slugify("") == "empty");
  REQUIRE(garble::slugify("???") == "empty");
  for (char c : garble::slugify("I can't take it anymore"))
    REQUIRE((std::isalnum(static_cast<unsigned char>(c)) || c == '-'));
}

TEST_CASE("split_words drops empty tokens") {
  REQUIRE(garble::split_words("a b  c") == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(garble::split_words("  x ") == std::vector<std::string>{"x"});
  REQUIRE(garble::split_words("").empty());
  REQUIRE(garble::split_words("   ").empty());
}

TEST_CASE("edit distance agrees with a reference implementation") {
  // Exhaustive over every pair of strings of length <= 3 on {a,b,c}.
  const std::vector<std::string> all = all_strings_up_to_3();
  for (const std::string& a : all)
    for (const std::string& b : all)
      REQUIRE(garble::edit_distance(a, b) == lev_naive(a, b));

  // Random longer pairs against the oracle, still small enough to recurse.
  garble::Rng rng(123);
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    const int la = rng.uniform_int(0, 6), lb = rng.uniform_int(0, 6);
    for (int j = 0; j < la; ++j) a.push_back(static_cast<char>('a' + rng.uniform_int(0, 3)));
    for (int j = 0; j < lb; ++j) b.push_back(static_cast<char>('a' + rng.uniform_int(0, 3)));
    REQUIRE(garble::edit_distance(a, b) == lev_naive(a, b));
  }

  REQUIRE(garble::edit_distance("kitten", "sitting") == 3);
  REQUIRE(garble::edit_distance("flaw", "lawn") == 2);
  REQUIRE(garble::edit_distance("", "abc") == 3);

  // Word-level distance over sequences.
  const std::vector<std::string> r{"turn", "on", "the", "light"};
  const std::vector<std::string> h{"turn", "the", "light", "on"};
  REQUIRE(garble::edit_distance_seq(r, h) == 2);
  REQUIRE(garble::edit_distance_seq(r, r) == 0);
}

TEST_CASE("cer and wer score normalized text") {
  REQUIRE(garble::cer("abc", "abc") == 0.0);
  REQUIRE(garble::cer("ABC!", "abc") == 0.0);  // normalization first
  REQUIRE(garble::cer("abcd", "abc") == Catch::Approx(0.25));
  REQUIRE(garble::wer("turn on the light", "turn on the light") == 0.0);
  REQUIRE(garble::wer("turn on the light", "turn off the light") == Catch::Approx(0.25));
  REQUIRE(garble::wer("turn on the light", "") == Catch::Approx(1.0));
  REQUIRE_THROWS_AS(garble::cer("", "abc"), std::invalid_argument);
  REQUIRE_THROWS_AS(garble::wer("!!!", "abc"), std::invalid_argument);
}

TEST_CASE("success_rate pools outcomes per hp and oracle cell") {
  using garble::AttackOutcome;
  std::vector<AttackOutcome> v;
  v.push_back({"hpA", "mock", "t1", "t1", 10, true});
  v.push_back({"hpA", "mock", "t2", "", 30, false});
  v.push_back({"hpB", "mock", "t1", "t1", 5, true});
  const garble::SuccessTable t = garble::success_rate(v);
  REQUIRE(t.hp_labels == std::vector<std::string>{"hpA", "hpB"});
  REQUIRE(t.oracle_ids == std::vector<std::string>{"mock"});
  const garble::SuccessCell* a = t.find("hpA", "mock");
  REQUIRE(a != nullptr);
  REQUIRE(a->attempts == 2);
  REQUIRE(a->successes == 1);
  REQUIRE(a->rate() == Catch::Approx(0.5));
  REQUIRE(a->mean_queries() == Catch::Approx(20.0));
  const garble::SuccessCell* b = t.find("hpB", "mock");
  REQUIRE(b != nullptr);
  REQUIRE(b->rate() == Catch::Approx(1.0));
  REQUIRE(t.find("hpC", "mock") == nullptr);
}
