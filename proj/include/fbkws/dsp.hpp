#pragma once

#include <vector>

#include "fbkws/tensor.hpp"

namespace fbkws::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr int kWindowLen = 480;             // 30 ms analysis window
inline constexpr int kHop = 160;                   // 10 ms hop
inline constexpr int kBins = kWindowLen / 2 + 1;   // 241 one-sided bins
inline constexpr int kClipSamples = 16000;         // 1 s clips
inline constexpr int kFrames = 1 + (kClipSamples - kWindowLen) / kHop;  // 98

// Symmetric Hann window, w[n] = 0.5*(1 - cos(2*pi*n/(n_len-1))).
std::vector<double> hann_window(int n_len);

// HTK-style Mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// T x F one-sided power spectrogram |X(t,f)|^2 of a 16 kHz signal: Hann
// window of 480 samples, hop 160, DFT of length exactly 480, bins 0..240.
// Bins 1..239 are NOT doubled; the features only shift by a constant under
// the log, so the raw one-sided convention is kept. Tests that compare
// against Parseval's theorem must fold the doubling back in.
Tensor stft_power(const std::vector<float>& samples);

struct MelBank {
  Tensor weights;                 // F x K, triangles peaking at exactly 1.0
  std::vector<double> center_hz;  // strictly increasing channel centers
};

// K triangular filters with centers equally spaced on the Mel scale over
// [0, sample_rate/2]. The bin nearest each center is pinned to 1.0 so every
// column has a strictly positive entry even when K approaches F.
MelBank mel_filterbank(int k_channels, int bins = kBins, int sample_rate = kSampleRate);

// Element-wise log(max(y, eta)) with eta = e^-50; output values are >= -50.
// Negative inputs violate the nonnegative-power contract.
Tensor log_compress(const Tensor& y);

}  // namespace fbkws::dsp
