#include "fbkws/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "fbkws/error.hpp"

namespace fbkws::wav {

namespace {

uint32_t read_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), Error::Kind::kData, "cannot open wav file: " + path);
  std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
  require(raw.size() >= 44, Error::Kind::kFormat, "wav too short for a RIFF header: " + path);
  require(std::memcmp(raw.data(), "RIFF", 4) == 0 && std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
          Error::Kind::kFormat, "not a RIFF/WAVE file: " + path);

  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const uint8_t* data = nullptr;
  uint32_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const uint8_t* hdr = raw.data() + pos;
    uint32_t chunk_len = read_u32(hdr + 4);
    require(pos + 8 + chunk_len <= raw.size(), Error::Kind::kFormat,
            "truncated wav chunk in " + path);
    const uint8_t* body = hdr + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      require(chunk_len >= 16, Error::Kind::kFormat, "fmt chunk too short in " + path);
      audio_format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = body;
      data_len = chunk_len;
    }
    pos += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  require(have_fmt && data != nullptr, Error::Kind::kFormat,
          "missing fmt or data chunk in " + path);
  require(channels == 1, Error::Kind::kFormat,
          "wav must be mono, got " + std::to_string(channels) + " channels: " + path);
  require(rate == 16000, Error::Kind::kFormat,
          "wav must be 16000 Hz, got " + std::to_string(rate) + " Hz: " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (audio_format == 1) {
    require(bits == 16, Error::Kind::kFormat,
            "PCM wav must be 16-bit, got " + std::to_string(bits) + ": " + path);
    size_t n = data_len / 2;
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i) {
      int16_t v = static_cast<int16_t>(data[2 * i] | (data[2 * i + 1] << 8));
      clip.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (audio_format == 3) {
    require(bits == 32, Error::Kind::kFormat,
            "float wav must be 32-bit, got " + std::to_string(bits) + ": " + path);
    size_t n = data_len / 4;
    clip.samples.resize(n);
    std::memcpy(clip.samples.data(), data, n * 4);
  } else {
    throw Error(Error::Kind::kFormat,
                "unsupported wav sample format " + std::to_string(audio_format) + ": " + path);
  }
  return clip;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate,
               WavFormat format) {
  const bool pcm = format == WavFormat::kPcm16;
  const uint16_t bits = pcm ? 16 : 32;
  const uint32_t bytes = static_cast<uint32_t>(samples.size()) * (bits / 8);

  std::string out;
  out.reserve(44 + bytes);
  out += "RIFF";
  put_u32(out, 36 + bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, pcm ? 1 : 3);
  put_u16(out, 1);
  put_u32(out, static_cast<uint32_t>(sample_rate));
  put_u32(out, static_cast<uint32_t>(sample_rate) * (bits / 8));
  put_u16(out, bits / 8);
  put_u16(out, bits);
  out += "data";
  put_u32(out, bytes);
  if (pcm) {
    for (float s : samples) {
      float c = std::clamp(s, -1.0f, 1.0f);
      int v = static_cast<int>(std::lround(c * 32767.0f));
      put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
    }
  } else {
    size_t off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, samples.data(), bytes);
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), Error::Kind::kData, "cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), Error::Kind::kData, "short write to wav file: " + path);
}

std::vector<float> normalize_length(std::vector<float> samples, int target) {
  require(target > 0, Error::Kind::kConfig, "normalize_length target must be positive");
  const int n = static_cast<int>(samples.size());
  if (n == target) return samples;
  std::vector<float> out(static_cast<size_t>(target), 0.0f);
  if (n < target) {
    int lead = (target - n) / 2;
    std::copy(samples.begin(), samples.end(), out.begin() + lead);
  } else {
    int skip = (n - target) / 2;
    std::copy(samples.begin() + skip, samples.begin() + skip + target, out.begin());
  }
  return out;
}

}  // namespace fbkws::wav
