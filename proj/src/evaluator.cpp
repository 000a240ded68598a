#include "fbkws/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "fbkws/checkpoint.hpp"
#include "fbkws/csv.hpp"
#include "fbkws/error.hpp"
#include "fbkws/frontend.hpp"
#include "fbkws/graph.hpp"

namespace fbkws::eval {

double CellCount::accuracy_pct() const {
  require(total > 0, Error::Kind::kContract, "accuracy of an empty cell is undefined");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

CellMap breakdown_one(const std::vector<int>& predicted, const std::vector<int>& labels,
                      const std::vector<data::ManifestEntry>& entries) {
  require(predicted.size() == entries.size() && labels.size() == entries.size(),
          Error::Kind::kContract, "predictions, labels and entries must be row-aligned");
  CellMap cells;
  for (size_t i = 0; i < entries.size(); ++i) {
    CellCount& c = cells[CellKey{entries[i].snr_db, entries[i].seen}];
    c.total += 1;
    if (predicted[i] == labels[i]) c.correct += 1;
  }
  return cells;
}

std::map<CellKey, double> AccuracyTable::cell_average() const {
  require(!reps.empty(), Error::Kind::kContract, "accuracy table holds no repetitions");
  std::map<CellKey, double> avg;
  for (const auto& [key, count] : reps.front()) {
    double sum = count.accuracy_pct();
    for (size_t r = 1; r < reps.size(); ++r) {
      auto it = reps[r].find(key);
      require(it != reps[r].end(), Error::Kind::kContract,
              "repetitions disagree on the test cell set");
      sum += it->second.accuracy_pct();
    }
    avg[key] = sum / static_cast<double>(reps.size());
  }
  return avg;
}

std::vector<double> AccuracyTable::cell_series(const CellKey& key) const {
  std::vector<double> out;
  out.reserve(reps.size());
  for (const auto& rep : reps) {
    auto it = rep.find(key);
    require(it != rep.end(), Error::Kind::kContract, "cell missing from a repetition");
    out.push_back(it->second.accuracy_pct());
  }
  return out;
}

double AccuracyTable::overall_pct(size_t rep) const {
  require(rep < reps.size(), Error::Kind::kContract, "repetition index out of range");
  int64_t correct = 0, total = 0;
  for (const auto& [key, count] : reps[rep]) {
    correct += count.correct;
    total += count.total;
  }
  require(total > 0, Error::Kind::kContract, "repetition holds no test rows");
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

std::vector<int> predict(model::KwsSystem& sys, const std::vector<data::Example>& examples,
                         int batch_size) {
  require(batch_size >= 1, Error::Kind::kContract, "batch size must be >= 1");
  require(!examples.empty(), Error::Kind::kContract, "no examples to predict");
  const int frames = static_cast<int>(examples.front().spec.shape()[0]);
  const int bins = static_cast<int>(examples.front().spec.shape()[1]);
  const int n = static_cast<int>(examples.size());

  std::vector<int> out;
  out.reserve(examples.size());
  for (int start = 0; start < n; start += batch_size) {
    const int bs = std::min(batch_size, n - start);
    Tensor batch({bs, frames, bins});
    for (int i = 0; i < bs; ++i) {
      const Tensor& spec = examples[static_cast<size_t>(start + i)].spec;
      require(spec.shape()[0] == frames && spec.shape()[1] == bins, Error::Kind::kShape,
              "examples disagree on spectrogram shape");
      std::memcpy(batch.data() + static_cast<size_t>(i) * spec.numel(), spec.data(),
                  static_cast<size_t>(spec.numel()) * sizeof(float));
    }
    Graph g;
    NodeId posteriors = sys.forward(g, batch, false, nullptr, nullptr);
    for (int d : model::decide_batch(g.value(posteriors))) out.push_back(d);
  }
  return out;
}

AccuracyTable accuracy_breakdown(const std::vector<std::string>& checkpoint_paths,
                                 const data::LoadedDataset& ds, int batch_size) {
  require(!checkpoint_paths.empty(), Error::Kind::kContract, "no checkpoints given");
  require(ds.test.size() == ds.test_entries.size(), Error::Kind::kContract,
          "test examples and manifest entries are not row-aligned");
  require(!ds.test.empty(), Error::Kind::kData, "test split is empty");

  std::vector<int> labels;
  labels.reserve(ds.test.size());
  for (const auto& ex : ds.test) labels.push_back(ex.label);

  AccuracyTable table;
  for (const auto& path : checkpoint_paths) {
    checkpoint::Meta meta = checkpoint::read_meta(path);
    if (table.reps.empty()) {
      table.arm = frontend::arm_to_string(meta.frontend.arm);
      table.k = meta.frontend.k;
    } else {
      require(frontend::arm_to_string(meta.frontend.arm) == table.arm &&
                  meta.frontend.k == table.k,
              Error::Kind::kContract, "checkpoints disagree on arm or K");
    }
    model::KwsSystem sys = checkpoint::load(path);
    table.reps.push_back(breakdown_one(predict(sys, ds.test, batch_size), labels,
                                       ds.test_entries));
  }
  return table;
}

double energy_ratio(const model::MultReport& a, const model::MultReport& b) {
  require(a.total > 0 && b.total > 0, Error::Kind::kContract,
          "energy ratio needs positive multiplication totals");
  return static_cast<double>(a.total) / static_cast<double>(b.total);
}

double relative_accuracy_loss(double acc_ref, double acc_new) {
  require(acc_ref > 0.0, Error::Kind::kContract, "reference accuracy must be positive");
  return 100.0 * (acc_ref - acc_new) / acc_ref;
}

SpectrumSummary long_term_spectrum(const std::vector<float>& samples,
                                   double peak_threshold_db) {
  require(static_cast<int>(samples.size()) >= dsp::kClipSamples, Error::Kind::kContract,
          "long-term spectrum needs at least one second of audio");

  Tensor spec = dsp::stft_power(samples);
  const int64_t frames = spec.shape()[0];
  const int64_t bins = spec.shape()[1];

  SpectrumSummary s;
  s.bin_hz = static_cast<double>(dsp::kSampleRate) / dsp::kWindowLen;
  s.mean_power.assign(static_cast<size_t>(bins), 0.0);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t f = 0; f < bins; ++f)
      s.mean_power[static_cast<size_t>(f)] += spec.at(t, f);
  double total = 0.0;
  for (double& p : s.mean_power) {
    p /= static_cast<double>(frames);
    total += p;
  }
  require(total > 0.0, Error::Kind::kData, "silent recording has no spectrum");

  std::vector<double> sorted = s.mean_power;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<int64_t>(sorted.size()) / 2,
                   sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double floor = median * std::pow(10.0, peak_threshold_db / 10.0);

  for (int64_t f = 1; f + 1 < bins; ++f) {
    const double p = s.mean_power[static_cast<size_t>(f)];
    if (p > s.mean_power[static_cast<size_t>(f - 1)] &&
        p > s.mean_power[static_cast<size_t>(f + 1)] && p > floor)
      s.peak_bins.push_back(static_cast<int>(f));
  }
  std::sort(s.peak_bins.begin(), s.peak_bins.end(), [&](int a, int b) {
    return s.mean_power[static_cast<size_t>(a)] > s.mean_power[static_cast<size_t>(b)];
  });
  return s;
}

FilterbankReport filterbank_response_report(const Tensor& w_learned, const Tensor& w_mel,
                                            const std::vector<BandSpec>& bands,
                                            int sample_rate) {
  require(w_learned.shape().size() == 2 && w_learned.shape() == w_mel.shape(),
          Error::Kind::kShape, "filterbanks must share an F x K shape");
  const int64_t f_bins = w_learned.shape()[0];
  const int64_t k = w_learned.shape()[1];
  require(f_bins >= 2, Error::Kind::kShape, "filterbank needs at least two bins");

  auto relu_copy = [](const Tensor& w) {
    Tensor r = w;
    for (int64_t i = 0; i < r.numel(); ++i) r[i] = std::max(r[i], 0.0f);
    return r;
  };

  FilterbankReport rep;
  rep.learned_response = relu_copy(w_learned);
  rep.mel_response = relu_copy(w_mel);

  double learned_all = 0.0, mel_all = 0.0;
  for (int64_t i = 0; i < rep.learned_response.numel(); ++i) {
    learned_all += rep.learned_response[i];
    mel_all += rep.mel_response[i];
  }

  const double nyquist = sample_rate / 2.0;
  for (const BandSpec& band : bands) {
    require(band.lo_hz >= 0.0 && band.lo_hz <= band.hi_hz && band.hi_hz <= nyquist,
            Error::Kind::kConfig, "band must satisfy 0 <= lo <= hi <= nyquist");
    BandEnergy be;
    be.band = band;
    be.learned_per_channel.assign(static_cast<size_t>(k), 0.0);
    be.mel_per_channel.assign(static_cast<size_t>(k), 0.0);
    for (int64_t f = 0; f < f_bins; ++f) {
      const double hz = nyquist * static_cast<double>(f) / static_cast<double>(f_bins - 1);
      if (hz < band.lo_hz || hz > band.hi_hz) continue;
      for (int64_t c = 0; c < k; ++c) {
        be.learned_per_channel[static_cast<size_t>(c)] += rep.learned_response.at(f, c);
        be.mel_per_channel[static_cast<size_t>(c)] += rep.mel_response.at(f, c);
      }
    }
    for (int64_t c = 0; c < k; ++c) {
      be.learned_total += be.learned_per_channel[static_cast<size_t>(c)];
      be.mel_total += be.mel_per_channel[static_cast<size_t>(c)];
    }
    be.learned_fraction = learned_all > 0.0 ? be.learned_total / learned_all : 0.0;
    be.mel_fraction = mel_all > 0.0 ? be.mel_total / mel_all : 0.0;
    rep.bands.push_back(std::move(be));
  }
  return rep;
}

std::vector<SignificanceRow> significance_table(const AccuracyTable& a, const AccuracyTable& b,
                                                double alpha) {
  require(a.reps.size() >= 2 && b.reps.size() >= 2, Error::Kind::kContract,
          "significance test needs >= 2 repetitions per arm");
  std::vector<SignificanceRow> rows;
  for (const auto& [key, avg] : a.cell_average()) {
    (void)avg;
    SignificanceRow row;
    row.arm_a = a.arm;
    row.arm_b = b.arm;
    row.cell = key;
    row.test = stats::welch_ttest(a.cell_series(key), b.cell_series(key), alpha);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_accuracy_csv(const std::string& path, const std::vector<AccuracyTable>& tables) {
  std::ostringstream out;
  out << csv::join_row({"arm", "K", "snr_db", "condition", "rep", "accuracy"});
  for (const auto& table : tables)
    for (size_t r = 0; r < table.reps.size(); ++r)
      for (const auto& [key, count] : table.reps[r])
        out << csv::join_row({table.arm, std::to_string(table.k), key.snr_db, key.condition,
                              std::to_string(r + 1), csv::fmt_float(count.accuracy_pct())});
  csv::write_atomic(path, out.str());
}

void write_significance_csv(const std::string& path, const std::vector<SignificanceRow>& rows) {
  std::ostringstream out;
  out << csv::join_row({"arm_a", "arm_b", "snr_db", "condition", "t", "df", "p", "significant"});
  for (const auto& row : rows)
    out << csv::join_row({row.arm_a, row.arm_b, row.cell.snr_db, row.cell.condition,
                          csv::fmt_float(row.test.t), csv::fmt_float(row.test.df),
                          csv::fmt_float(row.test.p), row.test.significant ? "1" : "0"});
  csv::write_atomic(path, out.str());
}

void write_filterbank_csv(const std::string& path, const Tensor& response, int sample_rate) {
  require(response.shape().size() == 2 && response.shape()[0] >= 2, Error::Kind::kShape,
          "filterbank response must be F x K with F >= 2");
  const int64_t f_bins = response.shape()[0];
  const int64_t k = response.shape()[1];
  const double nyquist = sample_rate / 2.0;
  std::ostringstream out;
  out << csv::join_row({"bin", "freq_hz", "channel", "response"});
  for (int64_t f = 0; f < f_bins; ++f) {
    const double hz = nyquist * static_cast<double>(f) / static_cast<double>(f_bins - 1);
    for (int64_t c = 0; c < k; ++c)
      out << csv::join_row({std::to_string(f), csv::fmt_float(hz), std::to_string(c),
                            csv::fmt_float(response.at(f, c))});
  }
  csv::write_atomic(path, out.str());
}

void write_noise_spectrum_csv(const std::string& path, const SpectrumSummary& s) {
  std::ostringstream out;
  out << csv::join_row({"bin", "freq_hz", "power", "power_db", "is_peak"});
  for (size_t f = 0; f < s.mean_power.size(); ++f) {
    const bool peak = std::find(s.peak_bins.begin(), s.peak_bins.end(), static_cast<int>(f)) !=
                      s.peak_bins.end();
    const double p = s.mean_power[f];
    out << csv::join_row({std::to_string(f), csv::fmt_float(s.bin_hz * static_cast<double>(f)),
                          csv::fmt_float(p), csv::fmt_float(10.0 * std::log10(std::max(p, 1e-300))),
                          peak ? "1" : "0"});
  }
  csv::write_atomic(path, out.str());
}

}  // namespace fbkws::eval
