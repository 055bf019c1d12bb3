// garble/asr_external.hpp
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

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "garble/asr.hpp"
#include "garble/subprocess.hpp"
#include "garble/wav.hpp"

namespace garble {

// Transport problems (timeouts, refused connections, HTTP 429/5xx after
// retries) are retryable; protocol problems (unparseable payloads) are
// fatal and carry the offending payload for the log.
class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

class AdapterProtocolError : public std::runtime_error {
 public:
  AdapterProtocolError(const std::string& what, std::string payload)
      : std::runtime_error(what + "; payload: " + payload), payload_(std::move(payload)) {}

  const std::string& payload() const { return payload_; }

 private:
  std::string payload_;
};

// Name of the environment variable holding the path of an extra-headers
// file ("Header-Name: value" per line) merged into every HTTP request.
inline constexpr const char* kCredentialsFileEnv = "GARBLE_CREDENTIALS_FILE";

struct HttpAsrConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/transcribe
  std::vector<std::pair<std::string, std::string>> headers;
  bool base64_json = false;            // false: raw WAV body; true: JSON {"audio": b64}
  std::string text_field_path = "text";  // dot-separated path into the JSON response
  int rate_limit_per_min = 0;          // 0 = unlimited
  int timeout_ms = 5000;
  int max_retries = 3;                 // retries after the first attempt
  int backoff_base_ms = 200;           // doubles per retry
  std::string oracle_id = "http";
};

namespace detail {

inline std::string base64_encode(const std::string& in) {
  static const char* tbl = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= in.size()) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8) |
                       static_cast<unsigned char>(in[i + 2]);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
    i += 3;
  }
  const std::size_t rem = in.size() - i;
  if (rem == 1) {
    const unsigned v = static_cast<unsigned char>(in[i]) << 16;
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out += "==";
  } else if (rem == 2) {
    const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                       (static_cast<unsigned char>(in[i + 1]) << 8);
    out.push_back(tbl[(v >> 18) & 63]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out += "=";
  }
  return out;
}

// Walks a dot-separated path; purely numeric segments index arrays.
inline const nlohmann::json* walk_json_path(const nlohmann::json& root,
                                            const std::string& path) {
  const nlohmann::json* node = &root;
  std::size_t start = 0;
  while (start <= path.size()) {
    const std::size_t dot = path.find('.', start);
    const std::string seg =
        path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!seg.empty()) {
      if (node->is_array() && seg.find_first_not_of("0123456789") == std::string::npos) {
        const std::size_t idx = std::stoul(seg);
        if (idx >= node->size()) return nullptr;
        node = &(*node)[idx];
      } else if (node->is_object() && node->contains(seg)) {
        node = &(*node)[seg];
      } else {
        return nullptr;
      }
    }
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  return node;
}

inline std::vector<std::pair<std::string, std::string>> load_credential_headers() {
  std::vector<std::pair<std::string, std::string>> out;
  const char* path = std::getenv(kCredentialsFileEnv);
  if (path == nullptr || *path == '\0') return out;
  std::ifstream f(path);
  if (!f) throw std::runtime_error(std::string("cannot open credentials file ") + path);
  std::string line;
  while (std::getline(f, line)) {
    const std::size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string name = line.substr(0, colon);
    std::string value = line.substr(colon + 1);
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
      value.erase(value.begin());
    while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
    if (!name.empty()) out.emplace_back(std::move(name), std::move(value));
  }
  return out;
}

}  // namespace detail

// HTTP speech-to-text client. Counts every physical request into the
// ledger (so a retried call shows up as two requests), spaces requests to
// honor the per-minute rate limit, and backs off exponentially on 429 and
// transport errors.
class HttpAsr : public AsrOracle {
 public:
  explicit HttpAsr(HttpAsrConfig cfg, QueryLedger* ledger = nullptr)
      : cfg_(std::move(cfg)), ledger_(ledger) {
    const std::string& url = cfg_.endpoint;
    const std::string prefix = "http://";
    if (url.rfind(prefix, 0) != 0)
      throw std::invalid_argument("HttpAsr: endpoint must start with http://");
    const std::size_t slash = url.find('/', prefix.size());
    host_ = url.substr(0, slash == std::string::npos ? std::string::npos : slash);
    path_ = slash == std::string::npos ? "/" : url.substr(slash);
    for (auto& h : detail::load_credential_headers()) cfg_.headers.push_back(std::move(h));
  }

  std::string id() const override { return cfg_.oracle_id; }
  bool self_accounts() const override { return true; }

  Transcription transcribe(const Waveform& w) override {
    const std::string wav = wav_bytes(w);
    std::string body, content_type;
    if (cfg_.base64_json) {
      nlohmann::json j;
      j["audio"] = detail::base64_encode(wav);
      j["sample_rate_hz"] = w.sample_rate_hz;
      body = j.dump();
      content_type = "application/json";
    } else {
      body = wav;
      content_type = "audio/wav";
    }

    std::string last_error = "no attempts made";
    for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) {
        const int delay = cfg_.backoff_base_ms * (1 << (attempt - 1));
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      respect_rate_limit();
      if (ledger_) ledger_->count_request(cfg_.oracle_id);

      httplib::Client client(host_);
      client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
      client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
      client.set_write_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
      httplib::Headers headers;
      for (const auto& [k, v] : cfg_.headers) headers.emplace(k, v);

      auto res = client.Post(path_, headers, body, content_type);
      if (!res) {
        last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status == 429) {
        last_error = "rate limited (429)";
        continue;
      }
      if (res->status != 200)
        throw AdapterProtocolError(
            "HttpAsr: unexpected status " + std::to_string(res->status), res->body);
      return parse_body(res->body);
    }
    throw TransportError("HttpAsr: retries exhausted: " + last_error);
  }

 private:
  Transcription parse_body(const std::string& body) const {
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded())
      throw AdapterProtocolError("HttpAsr: response is not JSON", body);
    const nlohmann::json* node = detail::walk_json_path(j, cfg_.text_field_path);
    if (node == nullptr || !node->is_string())
      throw AdapterProtocolError(
          "HttpAsr: field path '" + cfg_.text_field_path + "' missing or not text", body);
    return make_transcription(node->get<std::string>());
  }

  void respect_rate_limit() {
    if (cfg_.rate_limit_per_min <= 0) return;
    using clock = std::chrono::steady_clock;
    const auto spacing = std::chrono::milliseconds(60000 / cfg_.rate_limit_per_min);
    const auto now = clock::now();
    if (last_request_ != clock::time_point{} && now - last_request_ < spacing)
      std::this_thread::sleep_for(spacing - (now - last_request_));
    last_request_ = clock::now();
  }

  HttpAsrConfig cfg_;
  QueryLedger* ledger_;
  std::string host_, path_;
  std::chrono::steady_clock::time_point last_request_{};
};

struct SubprocessAsrConfig {
  std::vector<std::string> argv;
  std::string workdir;
  int timeout_ms = 10000;
  std::string oracle_id = "subprocess";
};

// Spawns the configured command once per call, writes the WAV to its
// stdin and reads the transcript as the first stdout line. Guarded by the
// session wrapper for accounting, so one call is one counted request.
class SubprocessAsr : public AsrOracle {
 public:
  explicit SubprocessAsr(SubprocessAsrConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.argv.empty())
      throw std::invalid_argument("SubprocessAsr: argv must not be empty");
  }

  std::string id() const override { return cfg_.oracle_id; }

  Transcription transcribe(const Waveform& w) override {
    std::pair<int, std::string> r;
    try {
      r = run_subprocess(cfg_.argv, wav_bytes(w), cfg_.workdir, cfg_.timeout_ms);
    } catch (const SubprocessError& e) {
      throw TransportError(std::string("SubprocessAsr: ") + e.what());
    }
    if (r.first != 0)
      throw TransportError("SubprocessAsr: child exited with code " +
                           std::to_string(r.first));
    std::string line = r.second;
    const std::size_t nl = line.find('\n');
    if (nl != std::string::npos) line.resize(nl);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return make_transcription(line);
  }

 private:
  SubprocessAsrConfig cfg_;
};

}  // namespace garble
