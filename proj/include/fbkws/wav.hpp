#pragma once

#include <string>
#include <vector>

namespace fbkws::wav {

// Mono 16 kHz audio in [-1, 1] floats (mixing may exceed the range; WAV
// writes clamp only for PCM16).
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;
};

// Parses RIFF/WAVE, PCM16 or IEEE float32, mono, 16 kHz. Any other rate,
// channel count or sample format is a format error naming the property.
AudioClip load_wav(const std::string& path);

enum class WavFormat { kPcm16, kFloat32 };

void write_wav(const std::string& path, const std::vector<float>& samples,
               int sample_rate = 16000, WavFormat format = WavFormat::kFloat32);

// Center-pads with zeros or center-trims to exactly `target` samples.
std::vector<float> normalize_length(std::vector<float> samples, int target);

}  // namespace fbkws::wav
