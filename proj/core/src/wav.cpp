// Copyright 2026 The vqse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vqse/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace vqse {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require_input(in.good(), "cannot open wav file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  require_input(bytes.size() >= 44 && std::memcmp(p, "RIFF", 4) == 0 &&
                    std::memcmp(p + 8, "WAVE", 4) == 0,
                "not a RIFF/WAVE file: " + path);

  std::size_t pos = 12;
  int channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = p + pos;
    std::uint32_t len = read_u32(hdr + 4);
    if (std::memcmp(hdr, "fmt ", 4) == 0 && pos + 8 + 16 <= bytes.size()) {
      std::uint16_t format = read_u16(hdr + 8);
      channels = read_u16(hdr + 10);
      rate = read_u32(hdr + 12);
      bits = read_u16(hdr + 22);
      require_input(format == 1, "wav is not PCM: " + path);
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = hdr + 8;
      data_len = len;
    }
    pos += 8 + len + (len & 1);
  }
  require_input(data != nullptr, "wav has no data chunk: " + path);
  require_input(channels == 1, "wav must be mono: " + path);
  require_input(bits == 16, "wav must be 16-bit PCM: " + path);
  require_input(rate == static_cast<std::uint32_t>(kSampleRate),
                "wav must be 16 kHz: " + path);

  Waveform w;
  std::size_t n = data_len / 2;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int16_t s = static_cast<std::int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
    w.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return w;
}

void write_wav(const std::string& path, const Waveform& w) {
  require_input(w.sample_rate == kSampleRate, "waveform must be 16 kHz");
  std::string payload;
  payload.reserve(w.samples.size() * 2);
  for (double x : w.samples) {
    double scaled = std::nearbyint(x * 32768.0);
    if (scaled > 32767.0) scaled = 32767.0;
    if (scaled < -32768.0) scaled = -32768.0;
    put_u16(payload, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }

  std::string out;
  out.reserve(44 + payload.size());
  out += "RIFF";
  put_u32(out, static_cast<std::uint32_t>(36 + payload.size()));
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(kSampleRate));
  put_u32(out, static_cast<std::uint32_t>(kSampleRate * 2));  // byte rate
  put_u16(out, 2);   // block align
  put_u16(out, 16);  // bits per sample
  out += "data";
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require_input(f.good(), "cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace vqse
