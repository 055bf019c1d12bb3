// garble/tools/stub_decoder.cpp
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
//
// Reference decoder child process speaking the framed stdin/stdout
// protocol of tts_external.hpp, backed by the bundled toy synthesizer.
// `stub_decoder --error` answers every request with an error status, for
// protocol failure tests.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "garble/tts.hpp"
#include "garble/tts_external.hpp"

namespace {

bool read_exact(void* buf, std::size_t n) {
  return std::fread(buf, 1, n, stdin) == n;
}

void write_frame(const std::string& payload) {
  std::string frame;
  garble::detail::frame_put_u32(frame, static_cast<std::uint32_t>(payload.size()));
  frame += payload;
  std::fwrite(frame.data(), 1, frame.size(), stdout);
  std::fflush(stdout);
}

void respond_error(const std::string& message) {
  std::string payload;
  payload.push_back(0x01);
  payload.push_back(0x02);  // nonzero status
  payload += message;
  write_frame(payload);
}

void respond_decode(const garble::DecodeResult& r) {
  std::string payload;
  payload.push_back(0x01);
  payload.push_back(0x00);
  garble::detail::frame_put_u32(payload, static_cast<std::uint32_t>(r.mel.bands.rows()));
  garble::detail::frame_put_u32(payload, static_cast<std::uint32_t>(r.mel.bands.cols()));
  for (int b = 0; b < r.mel.bands.rows(); ++b)
    for (int t = 0; t < r.mel.bands.cols(); ++t)
      garble::detail::frame_put_f32(payload, static_cast<float>(r.mel.bands(b, t)));
  garble::detail::frame_put_u32(payload, static_cast<std::uint32_t>(r.gate.logits.size()));
  for (int t = 0; t < r.gate.logits.size(); ++t)
    garble::detail::frame_put_f32(payload, static_cast<float>(r.gate.logits(t)));
  write_frame(payload);
}

}  // namespace

int main(int argc, char** argv) {
  bool always_error = false;
  garble::TtsProfile profile;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--error")
      always_error = true;
    else if (arg == "--seed" && i + 1 < argc)
      profile.seed = std::stoull(argv[++i]);
  }
  garble::ToyTts tts(profile);

  for (;;) {
    unsigned char len_buf[4];
    if (!read_exact(len_buf, 4)) return 0;  // EOF: parent closed stdin
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i)
      len |= static_cast<std::uint32_t>(len_buf[i]) << (8 * i);
    std::string payload(len, '\0');
    if (!read_exact(payload.data(), len)) return 1;

    garble::detail::FrameReader r(payload);
    try {
      const std::uint8_t version = r.u8();
      const std::uint8_t kind = r.u8();
      if (version != 0x01) {
        respond_error("unsupported version");
        continue;
      }
      if (always_error) {
        respond_error("stub forced failure");
        continue;
      }
      if (kind == 0x01) {
        const std::uint32_t n = r.u32();
        std::string text(n, '\0');
        for (std::uint32_t i = 0; i < n; ++i) text[i] = static_cast<char>(r.u8());
        respond_decode(tts.decode(tts.encode(text).rows));
      } else if (kind == 0x02) {
        const std::uint32_t n_tokens = r.u32();
        const std::uint32_t dim = r.u32();
        Eigen::MatrixXd emb(n_tokens, dim);
        for (std::uint32_t i = 0; i < n_tokens; ++i)
          for (std::uint32_t j = 0; j < dim; ++j)
            emb(i, j) = static_cast<double>(r.f32());
        respond_decode(tts.decode(emb));
      } else {
        respond_error("unknown request kind");
      }
    } catch (const std::exception& e) {
      respond_error(e.what());
    }
  }
}
