#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fbkws/tensor.hpp"

namespace fbkws::data {

// One row of the dataset manifest. snr_db is an integer rendered as text, or
// the sentinel "clean" (paired with noise == "clean").
struct ManifestEntry {
  std::string path;    // wav path relative to the dataset root
  std::string label;
  std::string split;   // train | val | test
  std::string noise;   // noise name or "clean"
  std::string seen;    // seen | unseen | clean
  std::string snr_db;
  uint64_t seed = 0;   // per-entry mixing seed (noise offset)
};

// CSV with header path,label,split,noise,seen,snr_db,seed. Reading validates
// the SNR grids ({0,5,10,15,20} train/val, {-10..20} test, or clean) and that
// unseen noises never appear outside the test split.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
void validate_entry(const ManifestEntry& e);

struct MixResult {
  std::vector<float> mixed;         // speech + alpha * noise, not renormalized
  std::vector<float> scaled_noise;  // alpha * noise as stored float32
  double alpha = 0.0;
};

// Mean squared amplitude over the full clip, accumulated in double.
double signal_power(const std::vector<float>& x);

// 10*log10(P_speech / P_noise) of an already-scaled pair.
double measure_snr_db(const std::vector<float>& speech, const std::vector<float>& noise);

// alpha = sqrt(P_s / (P_n * 10^(snr/10))). Re-measuring from the returned
// (speech, scaled_noise) pair recovers snr_db to well within 1e-6 dB; the
// noise must never be re-derived by subtracting speech from the mix, which
// cancels catastrophically at high SNR.
MixResult mix_at_snr(const std::vector<float>& speech, const std::vector<float>& noise,
                     double snr_db);

struct NoiseBank {
  std::map<std::string, std::vector<float>> recordings;  // each >= 1 s at 16 kHz

  bool has(const std::string& name) const { return recordings.count(name) > 0; }
  const std::vector<float>& get(const std::string& name) const;
  std::vector<std::string> names() const;
};

// Loads <root>/_noise/*.wav; the file stem is the noise name.
NoiseBank load_noise_bank(const std::string& root);

struct ProtocolConfig {
  std::vector<std::string> train_noises;  // shared by train and val
  std::vector<std::string> test_seen;     // must be a subset of train_noises
  std::vector<std::string> test_unseen;   // must be disjoint from train_noises
  std::vector<int> train_snrs = {0, 5, 10, 15, 20};
  std::vector<int> test_snrs = {-10, -5, 0, 5, 10, 15, 20};
  bool include_clean = true;
  std::string assignment = "cross";  // cross: every utterance in every cell;
                                     // partition: disjoint utterances per cell
  // Utterances per (noise, SNR) cell; <= 0 means "whole split pool".
  int train_per_cell = 3699;
  int val_per_cell = 427;
  int test_per_cell = 497;
  uint64_t seed = 1;

  // The full protocol: 8 train/val noises, 4 seen + 4 unseen test noises.
  static ProtocolConfig paper_defaults();
};

// (path, label) utterance pools per split.
struct SplitPools {
  std::vector<std::pair<std::string, std::string>> train, val, test;
};

// Crosses split pools with the protocol's (noise, SNR) cells.
std::vector<ManifestEntry> build_manifest_from_pools(const SplitPools& pools,
                                                     const NoiseBank& bank,
                                                     const ProtocolConfig& cfg);

// Scans <root>/<label>/*.wav, splits utterances deterministically (balanced
// round-robin over labels), then crosses with the protocol cells.
std::vector<ManifestEntry> build_manifest(const std::string& root, const NoiseBank& bank,
                                          const ProtocolConfig& cfg);

struct SynthSpec {
  int keywords = 3;
  std::vector<double> base_hz;  // one per keyword; defaults spread 400..3200 Hz
  int harmonics = 4;
  int train_per_class = 20;
  int val_per_class = 5;
  int test_per_class = 5;
  double narrowband_hz = 2700.0;
  double noise_seconds = 30.0;
};

struct SynthClip {
  std::string label;
  std::string split;
  std::vector<float> samples;  // exactly 16000
};

struct SynthResult {
  std::vector<SynthClip> clips;
  std::map<std::string, std::vector<float>> noises;  // narrowband, pinklike, white
};

// Keyword classes are harmonic stacks at distinct base frequencies; filler is
// broadband bursts. Deterministic given (spec, seed).
SynthResult synth_dataset(const SynthSpec& spec, uint64_t seed);

// Writes clips as <root>/<label>/<split>_<idx>.wav and noises under
// <root>/_noise/, all float32 WAV. Returns the utterance pools.
SplitPools write_synth_dataset(const SynthResult& result, const std::string& root);

struct Example {
  Tensor spec;  // T x F power spectrogram
  int label = 0;
};

struct LoadedDataset {
  std::vector<std::string> label_names;  // sorted, "filler" forced last
  std::vector<Example> train, val, test;
  std::vector<ManifestEntry> test_entries;  // row-aligned with test examples
  int label_index(const std::string& name) const;
};

// Realizes the mixed waveform for one manifest row.
std::vector<float> realize_entry(const std::string& root, const ManifestEntry& e,
                                 const NoiseBank& bank);

// Loads every manifest row, mixes, and caches power spectrograms.
LoadedDataset load_dataset(const std::string& root, const std::vector<ManifestEntry>& manifest);

}  // namespace fbkws::data
