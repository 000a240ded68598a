#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fbkws/dataset.hpp"
#include "fbkws/dsp.hpp"
#include "fbkws/model.hpp"
#include "fbkws/stats.hpp"
#include "fbkws/tensor.hpp"

namespace fbkws::eval {

// Test cell identity. snr_db is the manifest string ("-10".."20" or "clean"),
// condition is seen | unseen | clean; the clean cell uses "clean" for both.
struct CellKey {
  std::string snr_db;
  std::string condition;
  auto operator<=>(const CellKey&) const = default;
};

struct CellCount {
  int64_t correct = 0;
  int64_t total = 0;
  double accuracy_pct() const;  // 100 * correct / total
};

using CellMap = std::map<CellKey, CellCount>;

// Per-cell tallies of one repetition's predictions, row-aligned with the test
// entries. Cells absent from the manifest are absent from the map: an empty
// cell is missing, never a zero-accuracy entry.
CellMap breakdown_one(const std::vector<int>& predicted, const std::vector<int>& labels,
                      const std::vector<data::ManifestEntry>& entries);

struct AccuracyTable {
  std::string arm;
  int k = 0;
  std::vector<CellMap> reps;

  // Mean over repetitions of the per-cell accuracy. The manifest is shared
  // across repetitions, so every rep holds the same cell set.
  std::map<CellKey, double> cell_average() const;
  std::vector<double> cell_series(const CellKey& key) const;  // one value per rep
  double overall_pct(size_t rep) const;
};

// Inference-mode argmax predictions, one per example.
std::vector<int> predict(model::KwsSystem& sys, const std::vector<data::Example>& examples,
                         int batch_size = 64);

// Runs every repetition checkpoint over the cached test split. The
// checkpoints must agree on arm and K; arm/k of the result come from them.
AccuracyTable accuracy_breakdown(const std::vector<std::string>& checkpoint_paths,
                                 const data::LoadedDataset& ds, int batch_size = 64);

// total_a / total_b of the acoustic-model multiplication totals.
double energy_ratio(const model::MultReport& a, const model::MultReport& b);

// 100 * (acc_ref - acc_new) / acc_ref.
double relative_accuracy_loss(double acc_ref, double acc_new);

struct SpectrumSummary {
  std::vector<double> mean_power;  // per-bin mean over frames, kBins entries
  std::vector<int> peak_bins;      // sorted by descending power
  double bin_hz = 0.0;             // sample_rate / window_len
};

// Mean power spectrum over all analysis frames of a recording (>= 1 s), plus
// the peaks: strict interior local maxima at least peak_threshold_db above
// the median bin. Silence is rejected as degenerate input.
SpectrumSummary long_term_spectrum(const std::vector<float>& samples,
                                   double peak_threshold_db = 10.0);

struct BandSpec {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

struct BandEnergy {
  BandSpec band;
  std::vector<double> learned_per_channel;  // K entries, integrated response in band
  std::vector<double> mel_per_channel;
  double learned_total = 0.0;     // per-channel sums
  double mel_total = 0.0;
  double learned_fraction = 0.0;  // band total / full-range total
  double mel_fraction = 0.0;
};

struct FilterbankReport {
  Tensor learned_response;  // F x K, relu(W_learned)
  Tensor mel_response;
  std::vector<BandEnergy> bands;
};

// Effective responses relu(W) of both filterbanks plus integrated band
// energies. Bin b sits at sample_rate/2 * b / (F - 1) Hz; a band [lo, hi]
// integrates every bin whose frequency falls inside inclusively.
FilterbankReport filterbank_response_report(const Tensor& w_learned, const Tensor& w_mel,
                                            const std::vector<BandSpec>& bands,
                                            int sample_rate = dsp::kSampleRate);

struct SignificanceRow {
  std::string arm_a, arm_b;
  CellKey cell;
  stats::TTestResult test;
};

// Welch test per cell between two arms' per-repetition accuracies. Both
// tables must hold the same cells with >= 2 repetitions each.
std::vector<SignificanceRow> significance_table(const AccuracyTable& a, const AccuracyTable& b,
                                                double alpha = 0.05);

// Plain-CSV writers for external plotting.
void write_accuracy_csv(const std::string& path, const std::vector<AccuracyTable>& tables);
void write_significance_csv(const std::string& path, const std::vector<SignificanceRow>& rows);
void write_filterbank_csv(const std::string& path, const Tensor& response,
                          int sample_rate = dsp::kSampleRate);
void write_noise_spectrum_csv(const std::string& path, const SpectrumSummary& s);

}  // namespace fbkws::eval
