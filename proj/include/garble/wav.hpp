// garble/wav.hpp
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
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "garble/signal.hpp"

namespace garble {

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_f32(std::string& s, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(s, bits);
}
inline float get_f32(const unsigned char* p) {
  const std::uint32_t bits = get_u32(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace detail

// Serializes to mono 32-bit IEEE float. Integer PCM quantization is
// enough to flip a decision-boundary attack sample on replay, so stored
// audio keeps float precision; sample values are written as-is.
inline std::string wav_bytes(const Waveform& w) {
  check_waveform(w, "wav_bytes");
  const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
  const std::uint32_t data_bytes = n * 4;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, 3);  // IEEE float
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz));
  detail::put_u32(out, static_cast<std::uint32_t>(w.sample_rate_hz) * 4);
  detail::put_u16(out, 4);   // block align
  detail::put_u16(out, 32);  // bits per sample
  out += "data";
  detail::put_u32(out, data_bytes);
  for (double v : w.samples) detail::put_f32(out, static_cast<float>(v));
  return out;
}

inline void write_wav(const std::string& path, const Waveform& w) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_wav: cannot open " + path);
  std::string bytes = wav_bytes(w);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("write_wav: write failed for " + path);
}

// Parses mono WAV, skipping unknown chunks; accepts 32-bit IEEE float
// (the tool's own format) and 16-bit integer PCM from external sources.
// Sample values are returned as-is; downstream consumers peak-normalize,
// so no range scaling is applied here.
inline Waveform parse_wav(const std::string& bytes) {
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw std::runtime_error("parse_wav: not a RIFF/WAVE file");

  Waveform w;
  std::uint16_t format = 0, bits = 0;
  bool have_fmt = false, have_data = false;
  std::size_t data_off = 0, data_len = 0;
  std::size_t off = 12;
  while (off + 8 <= size) {
    const char* tag = reinterpret_cast<const char*>(p + off);
    const std::uint32_t chunk_len = detail::get_u32(p + off + 4);
    const std::size_t body = off + 8;
    if (body + chunk_len > size)
      throw std::runtime_error("parse_wav: truncated chunk");
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw std::runtime_error("parse_wav: short fmt chunk");
      format = detail::get_u16(p + body);
      const std::uint16_t channels = detail::get_u16(p + body + 2);
      const std::uint32_t rate = detail::get_u32(p + body + 4);
      bits = detail::get_u16(p + body + 14);
      if (channels != 1) throw std::runtime_error("parse_wav: only mono is supported");
      if (!((format == 1 && bits == 16) || (format == 3 && bits == 32)))
        throw std::runtime_error("parse_wav: only 16-bit PCM or 32-bit float is supported");
      w.sample_rate_hz = static_cast<int>(rate);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data_off = body;
      data_len = chunk_len;
      have_data = true;
    }
    off = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (!have_fmt || !have_data)
    throw std::runtime_error("parse_wav: missing fmt or data chunk");
  if (format == 3) {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      w.samples[i] = static_cast<double>(detail::get_f32(p + data_off + 4 * i));
  } else {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int16_t v =
          static_cast<std::int16_t>(detail::get_u16(p + data_off + 2 * i));
      w.samples[i] = static_cast<double>(v);
    }
  }
  return w;
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_wav: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_wav(bytes);
}

}  // namespace garble
