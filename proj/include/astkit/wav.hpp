// astkit/wav.hpp

// Copyright 2026  astkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef ASTKIT_WAV_HPP_
#define ASTKIT_WAV_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace astkit {

// Minimal PCM16 mono WAV support; samples are exchanged as doubles in [-1, 1].

struct WavData {
  std::vector<double> samples;
  int sample_rate = 0;
};

namespace detail {

inline std::uint32_t read_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline std::uint16_t read_u16le(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline void write_u32le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

inline void write_u16le(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

}  // namespace detail

inline WavData read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  char tag[4];
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) throw std::runtime_error("read_wav: not a RIFF file: " + path);
  detail::read_u32le(in);
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) throw std::runtime_error("read_wav: not a WAVE file: " + path);

  WavData wav;
  int channels = 0, bits = 0;
  bool got_fmt = false, got_data = false;
  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = detail::read_u32le(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = detail::read_u16le(in);
      channels = detail::read_u16le(in);
      wav.sample_rate = static_cast<int>(detail::read_u32le(in));
      detail::read_u32le(in);  // byte rate
      detail::read_u16le(in);  // block align
      bits = detail::read_u16le(in);
      if (chunk_size > 16) in.ignore(chunk_size - 16);
      if (format != 1) throw std::runtime_error("read_wav: only PCM supported: " + path);
      got_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!got_fmt) throw std::runtime_error("read_wav: data chunk before fmt: " + path);
      if (channels != 1 || bits != 16)
        throw std::runtime_error("read_wav: only 16-bit mono supported: " + path);
      const std::size_t n = chunk_size / 2;
      wav.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint16_t raw = detail::read_u16le(in);
        wav.samples[i] = static_cast<std::int16_t>(raw) / 32768.0;
      }
      got_data = true;
      break;
    } else {
      in.ignore(chunk_size + (chunk_size & 1));
    }
  }
  if (!got_data) throw std::runtime_error("read_wav: missing data chunk: " + path);
  return wav;
}

inline void write_wav(const std::string& path, const std::vector<double>& samples, int sample_rate) {
  if (sample_rate <= 0) throw std::invalid_argument("write_wav: sample_rate must be positive");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  detail::write_u32le(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  detail::write_u32le(out, 16);
  detail::write_u16le(out, 1);  // PCM
  detail::write_u16le(out, 1);  // mono
  detail::write_u32le(out, static_cast<std::uint32_t>(sample_rate));
  detail::write_u32le(out, static_cast<std::uint32_t>(sample_rate * 2));
  detail::write_u16le(out, 2);
  detail::write_u16le(out, 16);
  out.write("data", 4);
  detail::write_u32le(out, data_bytes);
  for (double s : samples) {
    const double clipped = std::clamp(s, -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::lrint(clipped * 32767.0));
    detail::write_u16le(out, static_cast<std::uint16_t>(v));
  }
  if (!out) throw std::runtime_error("write_wav: write failed: " + path);
}

}  // namespace astkit

#endif  // ASTKIT_WAV_HPP_
