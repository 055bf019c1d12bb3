// garble/tts_external.hpp
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

#include <cstdint>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "garble/subprocess.hpp"
#include "garble/tts.hpp"

// External decoder wire protocol, over the child's stdin/stdout.
//
// Every message is one frame: u32 little-endian payload length, then the
// payload. Integers are little-endian, floats IEEE-754 binary32.
//
// Request payload:
//   u8 version   -- 0x01
//   u8 kind      -- 0x01 text, 0x02 embedding matrix
//   kind 0x01: u32 text_len, text bytes (UTF-8)
//   kind 0x02: u32 n_tokens, u32 dim, then n_tokens*dim f32 row-major
//
// Response payload:
//   u8 version   -- 0x01
//   u8 status    -- 0x00 ok; anything else: remaining bytes are an error
//                   message
//   status 0x00: u32 n_mels, u32 n_frames, n_mels*n_frames f32 row-major
//                mel bands, u32 n_gate, n_gate f32 gate logits

namespace garble {

class DecoderProtocolError : public std::runtime_error {
 public:
  explicit DecoderProtocolError(const std::string& what) : std::runtime_error(what) {}
};

struct ExternalDecoderConfig {
  std::vector<std::string> argv;  // decoder process command line
  std::string workdir;
  int timeout_ms = 10000;
  TtsProfile local_profile;       // encoder/vocoder side stays local
};

namespace detail {

inline void frame_put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void frame_put_f32(std::string& s, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  s.append(buf, 4);
}

class FrameReader {
 public:
  explicit FrameReader(const std::string& payload) : payload_(payload) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(payload_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload_[pos_ + i]))
           << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() {
    need(4);
    float v;
    std::memcpy(&v, payload_.data() + pos_, 4);
    pos_ += 4;
    return v;
  }
  std::string rest() { return payload_.substr(pos_); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > payload_.size())
      throw DecoderProtocolError("external decoder: truncated response");
  }
  const std::string& payload_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Synthesis backend whose decoder runs out of process behind the framed
// protocol above. Encoding, vocoding and the perturbation threshold stay
// on the local toy profile; gradients fall back to finite differences
// since the decoder is a black box.
class ExternalDecoderTts : public TtsBackend {
 public:
  explicit ExternalDecoderTts(ExternalDecoderConfig cfg)
      : cfg_(std::move(cfg)), local_(cfg_.local_profile) {
    child_ = std::make_unique<ChildProcess>(cfg_.argv, cfg_.workdir);
  }

  LinguisticEmbedding encode(const std::string& text) const override {
    return local_.encode(text);
  }

  DecodeResult decode(const Eigen::MatrixXd& emb) const override {
    std::string payload;
    payload.push_back(0x01);  // version
    payload.push_back(0x02);  // kind: embedding
    detail::frame_put_u32(payload, static_cast<std::uint32_t>(emb.rows()));
    detail::frame_put_u32(payload, static_cast<std::uint32_t>(emb.cols()));
    for (int i = 0; i < emb.rows(); ++i)
      for (int j = 0; j < emb.cols(); ++j)
        detail::frame_put_f32(payload, static_cast<float>(emb(i, j)));
    return request(payload);
  }

  // Convenience for text-in/mel-out consumers of the protocol.
  DecodeResult decode_text(const std::string& text) const {
    std::string payload;
    payload.push_back(0x01);
    payload.push_back(0x01);
    detail::frame_put_u32(payload, static_cast<std::uint32_t>(text.size()));
    payload += text;
    return request(payload);
  }

  Waveform vocode(const MelSpectrogram& mel) const override { return local_.vocode(mel); }
  int n_mels() const override { return local_.n_mels(); }
  double default_threshold() const override { return local_.default_threshold(); }

 private:
  DecodeResult request(const std::string& payload) const {
    std::string frame;
    detail::frame_put_u32(frame, static_cast<std::uint32_t>(payload.size()));
    frame += payload;
    child_->write_all(frame.data(), frame.size());

    unsigned char len_buf[4];
    child_->read_all(len_buf, 4, cfg_.timeout_ms);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i)
      len |= static_cast<std::uint32_t>(len_buf[i]) << (8 * i);
    if (len > (64u << 20))
      throw DecoderProtocolError("external decoder: oversized response frame");
    std::string body(len, '\0');
    child_->read_all(body.data(), len, cfg_.timeout_ms);

    detail::FrameReader r(body);
    const std::uint8_t version = r.u8();
    if (version != 0x01)
      throw DecoderProtocolError("external decoder: unsupported protocol version");
    const std::uint8_t status = r.u8();
    if (status != 0x00)
      throw DecoderProtocolError("external decoder: error status " +
                                 std::to_string(status) + ": " + r.rest());
    const std::uint32_t n_mels = r.u32();
    const std::uint32_t n_frames = r.u32();
    DecodeResult out;
    out.mel.bands.resize(n_mels, n_frames);
    for (std::uint32_t b = 0; b < n_mels; ++b)
      for (std::uint32_t t = 0; t < n_frames; ++t)
        out.mel.bands(b, t) = static_cast<double>(r.f32());
    const std::uint32_t n_gate = r.u32();
    out.gate.logits.resize(n_gate);
    for (std::uint32_t t = 0; t < n_gate; ++t)
      out.gate.logits(t) = static_cast<double>(r.f32());
    return out;
  }

  ExternalDecoderConfig cfg_;
  ToyTts local_;
  std::unique_ptr<ChildProcess> child_;
};

}  // namespace garble
