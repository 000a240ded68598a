#include "fbkws/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "fbkws/error.hpp"
#include "fbkws/graph.hpp"

namespace fbkws::dsp {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Trig tables for the fixed N=480 DFT, built once. All double so frame
// transforms accumulate at full precision before the float32 store.
struct DftTables {
  std::vector<double> window;
  std::vector<double> cos_t;  // kBins x kWindowLen
  std::vector<double> sin_t;

  DftTables() {
    window = hann_window(kWindowLen);
    cos_t.resize(static_cast<size_t>(kBins) * kWindowLen);
    sin_t.resize(static_cast<size_t>(kBins) * kWindowLen);
    for (int k = 0; k < kBins; ++k) {
      for (int n = 0; n < kWindowLen; ++n) {
        double ang = kTwoPi * k * n / kWindowLen;
        cos_t[static_cast<size_t>(k) * kWindowLen + n] = std::cos(ang);
        sin_t[static_cast<size_t>(k) * kWindowLen + n] = std::sin(ang);
      }
    }
  }
};

const DftTables& tables() {
  static const DftTables t;
  return t;
}

}  // namespace

std::vector<double> hann_window(int n_len) {
  require(n_len >= 2, Error::Kind::kConfig, "hann window needs at least 2 points");
  std::vector<double> w(static_cast<size_t>(n_len));
  for (int n = 0; n < n_len; ++n)
    w[static_cast<size_t>(n)] = 0.5 * (1.0 - std::cos(kTwoPi * n / (n_len - 1)));
  return w;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor stft_power(const std::vector<float>& samples) {
  require(static_cast<int>(samples.size()) >= kWindowLen, Error::Kind::kContract,
          "clip shorter than one analysis window; normalize length first");
  const int frames = 1 + (static_cast<int>(samples.size()) - kWindowLen) / kHop;
  const DftTables& tb = tables();

  Tensor out({frames, kBins});
  std::vector<double> frame(kWindowLen);
  for (int t = 0; t < frames; ++t) {
    const float* src = samples.data() + static_cast<size_t>(t) * kHop;
    for (int n = 0; n < kWindowLen; ++n)
      frame[static_cast<size_t>(n)] = tb.window[static_cast<size_t>(n)] * src[n];
    for (int k = 0; k < kBins; ++k) {
      const double* ct = tb.cos_t.data() + static_cast<size_t>(k) * kWindowLen;
      const double* st = tb.sin_t.data() + static_cast<size_t>(k) * kWindowLen;
      double re = 0.0, im = 0.0;
      for (int n = 0; n < kWindowLen; ++n) {
        re += frame[static_cast<size_t>(n)] * ct[n];
        im -= frame[static_cast<size_t>(n)] * st[n];
      }
      out.at(t, k) = static_cast<float>(re * re + im * im);
    }
  }
  return out;
}

MelBank mel_filterbank(int k_channels, int bins, int sample_rate) {
  require(k_channels >= 1 && k_channels <= bins, Error::Kind::kConfig,
          "mel filterbank channel count must be in [1, bins]");
  require(bins >= 2 && sample_rate > 0, Error::Kind::kConfig, "bad mel filterbank geometry");

  const double nyquist = sample_rate / 2.0;
  const double bin_hz = nyquist / (bins - 1);
  const double mel_max = hz_to_mel(nyquist);

  // K+2 edge points equally spaced in Mel; channel k spans edges k..k+2.
  std::vector<double> edge_hz(static_cast<size_t>(k_channels) + 2);
  for (int i = 0; i < k_channels + 2; ++i)
    edge_hz[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (k_channels + 1));
  edge_hz.front() = 0.0;       // kill mel round-trip drift at the band edges
  edge_hz.back() = nyquist;

  MelBank bank;
  bank.weights = Tensor({bins, k_channels});
  bank.center_hz.resize(static_cast<size_t>(k_channels));
  for (int k = 0; k < k_channels; ++k) {
    const double lo = edge_hz[static_cast<size_t>(k)];
    const double center = edge_hz[static_cast<size_t>(k) + 1];
    const double hi = edge_hz[static_cast<size_t>(k) + 2];
    bank.center_hz[static_cast<size_t>(k)] = center;
    for (int b = 0; b < bins; ++b) {
      const double f = nyquist * b / (bins - 1);  // exact at the edges
      double w = 0.0;
      if (f > lo && f < center) {
        w = (f - lo) / (center - lo);
      } else if (f >= center && f < hi) {
        w = (hi - f) / (hi - center);
      }
      bank.weights.at(b, k) = static_cast<float>(w);
    }
    // pin the peak so narrow triangles cannot fall between bins
    int peak = static_cast<int>(std::llround(center / bin_hz));
    peak = std::max(0, std::min(bins - 1, peak));
    bank.weights.at(peak, k) = 1.0f;
  }
  return bank;
}

Tensor log_compress(const Tensor& y) {
  Tensor out(y.shape());
  for (int64_t i = 0; i < y.numel(); ++i) {
    require(y[i] >= 0.0f, Error::Kind::kContract,
            "log_compress input must be a nonnegative power quantity");
    out[i] = std::log(std::max(y[i], kLogFloorEta));
  }
  return out;
}

}  // namespace fbkws::dsp
