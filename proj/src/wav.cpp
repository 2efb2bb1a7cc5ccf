#include "preasp/wav.hpp"

#include "preasp/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace preasp {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xFF));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_tag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open for writing: " + path);
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) throw DataError("write failed: " + path);
}

std::vector<unsigned char> header(const Waveform& wave, std::uint16_t format,
                                  std::uint16_t bits, std::uint32_t data_bytes) {
  std::vector<unsigned char> out;
  out.reserve(44 + data_bytes);
  const std::uint32_t rate = static_cast<std::uint32_t>(wave.sample_rate);
  const std::uint16_t block = bits / 8;
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * block);
  put_u16(out, block);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  return out;
}

}  // namespace

void validate(const Waveform& wave) {
  if (wave.samples.size() == 0) throw InvalidInput("empty waveform");
  if (wave.sample_rate < 8000) {
    throw InvalidInput("sample rate " + std::to_string(wave.sample_rate) +
                       " Hz is below the 8000 Hz minimum");
  }
  if (wave.duration_ms() < 5.0) throw InvalidInput("waveform shorter than 5 ms");
  if (!wave.samples.allFinite()) throw InvalidInput("waveform contains non-finite samples");
}

Waveform read_wav(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw DataError("cannot open WAV file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path);
  }

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);

    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw FormatError("truncated fmt chunk: " + path);
      format = read_u16(bytes.data() + body);
      channels = read_u16(bytes.data() + body + 2);
      rate = read_u32(bytes.data() + body + 4);
      bits = read_u16(bytes.data() + body + 14);
      if (format == kFormatExtensible && avail >= 26) {
        format = read_u16(bytes.data() + body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk: " + path);
      if (channels != 1) {
        throw FormatError("only mono WAV is supported, got " + std::to_string(channels) +
                          " channels: " + path);
      }
      Waveform wave;
      wave.sample_rate = static_cast<int>(rate);
      const unsigned char* data = bytes.data() + body;
      if (format == kFormatPcm && bits == 16) {
        const Eigen::Index n = static_cast<Eigen::Index>(avail / 2);
        wave.samples.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto v = static_cast<std::int16_t>(read_u16(data + 2 * i));
          wave.samples[i] = static_cast<double>(v) / 32768.0;
        }
      } else if (format == kFormatFloat && bits == 32) {
        const Eigen::Index n = static_cast<Eigen::Index>(avail / 4);
        wave.samples.resize(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const std::uint32_t raw = read_u32(data + 4 * i);
          float v;
          std::memcpy(&v, &raw, sizeof v);
          wave.samples[i] = static_cast<double>(v);
        }
      } else {
        throw FormatError("unsupported WAV encoding (format " + std::to_string(format) +
                          ", " + std::to_string(bits) + " bits): " + path);
      }
      return wave;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError("no data chunk: " + path);
}

void write_wav(const std::string& path, const Waveform& wave) {
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  auto out = header(wave, kFormatPcm, 16, n * 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double clipped = std::clamp(wave.samples[i], -1.0, 1.0);
    const auto v = static_cast<std::int16_t>(std::clamp(std::lround(clipped * 32768.0), -32768L, 32767L));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  write_bytes(path, out);
}

void write_wav_float(const std::string& path, const Waveform& wave) {
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  auto out = header(wave, kFormatFloat, 32, n * 4);
  for (std::uint32_t i = 0; i < n; ++i) {
    const float v = static_cast<float>(wave.samples[i]);
    std::uint32_t raw;
    std::memcpy(&raw, &v, sizeof raw);
    put_u32(out, raw);
  }
  write_bytes(path, out);
}

}  // namespace preasp
