#include "fbkws/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fbkws/csv.hpp"
#include "fbkws/dsp.hpp"
#include "fbkws/error.hpp"
#include "fbkws/rng.hpp"
#include "fbkws/wav.hpp"

namespace fs = std::filesystem;

namespace fbkws::data {

namespace {

constexpr int kClipLen = dsp::kClipSamples;
constexpr double kTwoPi = 6.283185307179586476925286766559;

const std::vector<int> kTrainSnrGrid = {0, 5, 10, 15, 20};
const std::vector<int> kTestSnrGrid = {-10, -5, 0, 5, 10, 15, 20};

int parse_int(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    int v = std::stoi(s, &used);
    require(used == s.size(), Error::Kind::kFormat, what + " is not an integer: " + s);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(Error::Kind::kFormat, what + " is not an integer: " + s);
  }
}

uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    uint64_t v = std::stoull(s, &used);
    require(used == s.size(), Error::Kind::kFormat, what + " is not an integer: " + s);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    throw Error(Error::Kind::kFormat, what + " is not an integer: " + s);
  }
}

bool in_grid(int v, const std::vector<int>& grid) {
  return std::find(grid.begin(), grid.end(), v) != grid.end();
}

}  // namespace

void validate_entry(const ManifestEntry& e) {
  require(!e.path.empty() && !e.label.empty(), Error::Kind::kFormat,
          "manifest entry missing path or label");
  require(e.split == "train" || e.split == "val" || e.split == "test", Error::Kind::kFormat,
          "bad split in manifest entry: " + e.split);
  const bool clean = e.noise == "clean";
  if (clean) {
    require(e.snr_db == "clean" && e.seen == "clean", Error::Kind::kFormat,
            "clean entries must have noise=snr_db=seen=clean: " + e.path);
    return;
  }
  require(e.seen == "seen" || e.seen == "unseen", Error::Kind::kFormat,
          "bad seen flag in manifest entry: " + e.seen);
  require(!(e.seen == "unseen" && e.split != "test"), Error::Kind::kFormat,
          "unseen noise '" + e.noise + "' outside the test split");
  int snr = parse_int(e.snr_db, "snr_db");
  const auto& grid = e.split == "test" ? kTestSnrGrid : kTrainSnrGrid;
  require(in_grid(snr, grid), Error::Kind::kFormat,
          "snr " + e.snr_db + " not allowed in split " + e.split);
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  auto rows = csv::read(path);
  require(!rows.empty(), Error::Kind::kFormat, "empty manifest: " + path);
  const std::vector<std::string> header = {"path", "label",  "split", "noise",
                                           "seen", "snr_db", "seed"};
  require(rows[0] == header, Error::Kind::kFormat, "bad manifest header in " + path);
  std::vector<ManifestEntry> out;
  out.reserve(rows.size() - 1);
  for (size_t i = 1; i < rows.size(); ++i) {
    require(rows[i].size() == 7, Error::Kind::kFormat,
            "manifest row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                " fields, want 7");
    ManifestEntry e;
    e.path = rows[i][0];
    e.label = rows[i][1];
    e.split = rows[i][2];
    e.noise = rows[i][3];
    e.seen = rows[i][4];
    e.snr_db = rows[i][5];
    e.seed = parse_u64(rows[i][6], "seed");
    validate_entry(e);
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::string out = "path,label,split,noise,seen,snr_db,seed\n";
  for (const auto& e : entries) {
    out += csv::join_row(
        {e.path, e.label, e.split, e.noise, e.seen, e.snr_db, std::to_string(e.seed)});
  }
  csv::write_atomic(path, out);
}

double signal_power(const std::vector<float>& x) {
  require(!x.empty(), Error::Kind::kData, "signal_power of an empty signal");
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return acc / static_cast<double>(x.size());
}

double measure_snr_db(const std::vector<float>& speech, const std::vector<float>& noise) {
  double ps = signal_power(speech);
  double pn = signal_power(noise);
  require(ps > 0.0 && pn > 0.0, Error::Kind::kData,
          "snr undefined for zero-power speech or noise");
  return 10.0 * std::log10(ps / pn);
}

MixResult mix_at_snr(const std::vector<float>& speech, const std::vector<float>& noise,
                     double snr_db) {
  require(speech.size() == noise.size(), Error::Kind::kContract,
          "mix_at_snr needs equal-length speech and noise segments");
  double ps = signal_power(speech);
  double pn = signal_power(noise);
  require(ps > 0.0, Error::Kind::kData, "mix_at_snr: speech has zero power");
  require(pn > 0.0, Error::Kind::kData, "mix_at_snr: noise has zero power");

  MixResult r;
  r.alpha = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  r.scaled_noise.resize(noise.size());
  r.mixed.resize(noise.size());
  for (size_t i = 0; i < noise.size(); ++i) {
    r.scaled_noise[i] = static_cast<float>(r.alpha * noise[i]);
    r.mixed[i] = speech[i] + r.scaled_noise[i];
  }
  return r;
}

const std::vector<float>& NoiseBank::get(const std::string& name) const {
  auto it = recordings.find(name);
  require(it != recordings.end(), Error::Kind::kData, "unknown noise: " + name);
  return it->second;
}

std::vector<std::string> NoiseBank::names() const {
  std::vector<std::string> out;
  for (const auto& [name, rec] : recordings) out.push_back(name);
  return out;
}

NoiseBank load_noise_bank(const std::string& root) {
  NoiseBank bank;
  fs::path dir = fs::path(root) / "_noise";
  if (!fs::is_directory(dir)) return bank;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto clip = wav::load_wav(f.string());
    require(static_cast<int>(clip.samples.size()) >= kClipLen, Error::Kind::kData,
            "noise recording shorter than 1 s: " + f.string());
    bank.recordings[f.stem().string()] = std::move(clip.samples);
  }
  return bank;
}

ProtocolConfig ProtocolConfig::paper_defaults() {
  ProtocolConfig cfg;
  cfg.train_noises = {"vehicle_interior", "factory1",    "bus",         "pedestrian_street",
                      "white",            "babble",      "machine_gun", "f16_cockpit"};
  cfg.test_seen = {"vehicle_interior", "factory1", "bus", "pedestrian_street"};
  cfg.test_unseen = {"factory2", "buccaneer_jet", "cafe", "street_junction"};
  return cfg;
}

namespace {

void check_protocol(const NoiseBank& bank, const ProtocolConfig& cfg) {
  require(cfg.assignment == "cross" || cfg.assignment == "partition", Error::Kind::kConfig,
          "assignment mode must be cross or partition, got " + cfg.assignment);
  require(!cfg.train_noises.empty() || cfg.include_clean, Error::Kind::kConfig,
          "no train noises configured and the clean cell is disabled");
  require(!cfg.train_snrs.empty() && !cfg.test_snrs.empty(), Error::Kind::kConfig,
          "empty SNR grid");
  for (int s : cfg.train_snrs)
    require(in_grid(s, kTrainSnrGrid), Error::Kind::kConfig,
            "train SNR " + std::to_string(s) + " outside {0,5,10,15,20}");
  for (int s : cfg.test_snrs)
    require(in_grid(s, kTestSnrGrid), Error::Kind::kConfig,
            "test SNR " + std::to_string(s) + " outside {-10,-5,0,5,10,15,20}");

  std::set<std::string> train_set(cfg.train_noises.begin(), cfg.train_noises.end());
  for (const auto& n : cfg.test_seen)
    require(train_set.count(n) > 0, Error::Kind::kConfig,
            "test seen noise '" + n + "' is not a train noise");
  for (const auto& n : cfg.test_unseen)
    require(train_set.count(n) == 0, Error::Kind::kConfig,
            "unseen noise '" + n + "' also appears in the train noises");

  std::vector<std::string> missing;
  auto check = [&](const std::vector<std::string>& names) {
    for (const auto& n : names)
      if (!bank.has(n)) missing.push_back(n);
  };
  check(cfg.train_noises);
  check(cfg.test_seen);
  check(cfg.test_unseen);
  if (!missing.empty()) {
    std::string list;
    for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
    throw Error(Error::Kind::kData, "noises missing from the bank: " + list);
  }
}

}  // namespace

std::vector<ManifestEntry> build_manifest_from_pools(const SplitPools& pools,
                                                     const NoiseBank& bank,
                                                     const ProtocolConfig& cfg) {
  check_protocol(bank, cfg);
  Rng seeder(cfg.seed);
  uint64_t index = 0;
  std::vector<ManifestEntry> out;

  std::set<std::string> unseen_set(cfg.test_unseen.begin(), cfg.test_unseen.end());
  auto emit = [&](const std::vector<std::pair<std::string, std::string>>& pool,
                  const std::string& split, int per_cell,
                  const std::vector<std::string>& noises, const std::vector<int>& snrs) {
    // (noise, snr) cells plus an optional trailing clean cell
    std::vector<std::pair<std::string, std::string>> cells;
    for (const auto& n : noises)
      for (int s : snrs) cells.emplace_back(n, std::to_string(s));
    if (cfg.include_clean) cells.emplace_back("clean", "clean");
    require(!cells.empty(), Error::Kind::kConfig, "no cells configured for split " + split);

    size_t n = 0;
    if (cfg.assignment == "cross") {
      n = per_cell > 0 ? static_cast<size_t>(per_cell) : pool.size();
      require(n > 0 && pool.size() >= n, Error::Kind::kData,
              "split " + split + " needs " + std::to_string(n) + " utterances, have " +
                  std::to_string(pool.size()));
    } else {
      n = per_cell > 0 ? static_cast<size_t>(per_cell) : pool.size() / cells.size();
      require(n > 0 && pool.size() >= n * cells.size(), Error::Kind::kData,
              "split " + split + " needs " + std::to_string(n * cells.size()) +
                  " utterances for partition mode, have " + std::to_string(pool.size()));
    }

    size_t cursor = 0;
    for (const auto& [noise, snr] : cells) {
      for (size_t i = 0; i < n; ++i) {
        const auto& [path, label] =
            cfg.assignment == "cross" ? pool[i] : pool[cursor + i];
        ManifestEntry e;
        e.path = path;
        e.label = label;
        e.split = split;
        e.noise = noise;
        e.snr_db = snr;
        if (noise == "clean") {
          e.seen = "clean";
        } else if (split == "test" && unseen_set.count(noise) > 0) {
          e.seen = "unseen";
        } else {
          e.seen = "seen";
        }
        e.seed = seeder.fork(index++).seed();
        validate_entry(e);
        out.push_back(std::move(e));
      }
      if (cfg.assignment == "partition") cursor += n;
    }
  };

  emit(pools.train, "train", cfg.train_per_cell, cfg.train_noises, cfg.train_snrs);
  emit(pools.val, "val", cfg.val_per_cell, cfg.train_noises, cfg.train_snrs);
  std::vector<std::string> test_noises = cfg.test_seen;
  test_noises.insert(test_noises.end(), cfg.test_unseen.begin(), cfg.test_unseen.end());
  emit(pools.test, "test", cfg.test_per_cell, test_noises, cfg.test_snrs);
  return out;
}

std::vector<ManifestEntry> build_manifest(const std::string& root, const NoiseBank& bank,
                                          const ProtocolConfig& cfg) {
  std::vector<std::string> labels;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename().string().front() != '_')
      labels.push_back(entry.path().filename().string());
  }
  std::sort(labels.begin(), labels.end());
  require(!labels.empty(), Error::Kind::kData, "no class directories under " + root);

  Rng base(cfg.seed);
  std::vector<std::vector<std::pair<std::string, std::string>>> per_label(labels.size());
  for (size_t li = 0; li < labels.size(); ++li) {
    std::vector<std::string> files;
    for (const auto& f : fs::directory_iterator(fs::path(root) / labels[li])) {
      if (f.is_regular_file() && f.path().extension() == ".wav")
        files.push_back(f.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), Error::Kind::kData, "class has no wav files: " + labels[li]);
    Rng shuf = base.fork(100 + li);
    for (size_t i = files.size(); i > 1; --i)
      std::swap(files[i - 1], files[shuf.uniform_int(i)]);
    for (const auto& f : files)
      per_label[li].emplace_back(labels[li] + "/" + f, labels[li]);
  }

  // balanced round-robin so any prefix stays class-balanced
  std::vector<std::pair<std::string, std::string>> all;
  for (size_t i = 0;; ++i) {
    bool any = false;
    for (auto& pl : per_label) {
      if (i < pl.size()) {
        all.push_back(pl[i]);
        any = true;
      }
    }
    if (!any) break;
  }

  auto cells_for = [&](const std::vector<std::string>& noises, const std::vector<int>& snrs) {
    return noises.size() * snrs.size() + (cfg.include_clean ? 1 : 0);
  };
  size_t test_noise_count = cfg.test_seen.size() + cfg.test_unseen.size();
  std::vector<std::string> dummy_test(test_noise_count, "x");

  auto need = [&](int per_cell, size_t n_cells) -> size_t {
    if (per_cell <= 0) return 0;  // sentinel: take a fraction instead
    return cfg.assignment == "cross" ? static_cast<size_t>(per_cell)
                                     : static_cast<size_t>(per_cell) * n_cells;
  };
  size_t need_train = need(cfg.train_per_cell, cells_for(cfg.train_noises, cfg.train_snrs));
  size_t need_val = need(cfg.val_per_cell, cells_for(cfg.train_noises, cfg.train_snrs));
  size_t need_test = need(cfg.test_per_cell, cells_for(dummy_test, cfg.test_snrs));

  SplitPools pools;
  if (need_train == 0 || need_val == 0 || need_test == 0) {
    // any sentinel: split the whole set 70/15/15
    size_t n_train = all.size() * 70 / 100;
    size_t n_val = all.size() * 15 / 100;
    require(n_train > 0 && n_val > 0 && all.size() > n_train + n_val, Error::Kind::kData,
            "too few utterances to split 70/15/15");
    pools.train.assign(all.begin(), all.begin() + n_train);
    pools.val.assign(all.begin() + n_train, all.begin() + n_train + n_val);
    pools.test.assign(all.begin() + n_train + n_val, all.end());
  } else {
    require(all.size() >= need_train + need_val + need_test, Error::Kind::kData,
            "dataset has " + std::to_string(all.size()) + " utterances but the protocol needs " +
                std::to_string(need_train + need_val + need_test));
    pools.train.assign(all.begin(), all.begin() + need_train);
    pools.val.assign(all.begin() + need_train, all.begin() + need_train + need_val);
    pools.test.assign(all.begin() + need_train + need_val,
                      all.begin() + need_train + need_val + need_test);
  }
  return build_manifest_from_pools(pools, bank, cfg);
}

namespace {

void add_keyword_clip(std::vector<float>& out, double base_hz, int harmonics, Rng& rng) {
  const double dur = 0.55 + 0.3 * rng.uniform();
  const double start = rng.uniform() * (1.0 - dur);
  const int s0 = static_cast<int>(start * kClipLen);
  const int s1 = std::min(kClipLen, s0 + static_cast<int>(dur * kClipLen));
  const int ramp = std::max(1, (s1 - s0) / 10);
  const double f0 = base_hz * (1.0 + 0.01 * (2.0 * rng.uniform() - 1.0));

  std::vector<double> amp, phase, freq;
  for (int h = 1; h <= harmonics; ++h) {
    double f = f0 * h;
    if (f > 7600.0) break;
    freq.push_back(f);
    amp.push_back((1.0 / h) * (0.75 + 0.5 * rng.uniform()));
    phase.push_back(kTwoPi * rng.uniform());
  }

  double peak = 0.0;
  for (int i = s0; i < s1; ++i) {
    double t = static_cast<double>(i) / dsp::kSampleRate;
    double env = 1.0;
    if (i - s0 < ramp) env = 0.5 * (1.0 - std::cos(kTwoPi * 0.5 * (i - s0) / ramp));
    if (s1 - 1 - i < ramp) env = std::min(env, 0.5 * (1.0 - std::cos(kTwoPi * 0.5 * (s1 - 1 - i) / ramp)));
    double v = 0.0;
    for (size_t h = 0; h < freq.size(); ++h)
      v += amp[h] * std::sin(kTwoPi * freq[h] * t + phase[h]);
    out[static_cast<size_t>(i)] = static_cast<float>(env * v);
    peak = std::max(peak, std::abs(env * v));
  }
  if (peak > 0.0) {
    float scale = static_cast<float>((0.3 + 0.4 * rng.uniform()) / peak);
    for (int i = s0; i < s1; ++i) out[static_cast<size_t>(i)] *= scale;
  }
}

void add_filler_clip(std::vector<float>& out, Rng& rng) {
  const int bursts = 2 + static_cast<int>(rng.uniform_int(3));
  for (int b = 0; b < bursts; ++b) {
    int len = static_cast<int>((0.05 + 0.15 * rng.uniform()) * kClipLen);
    int start = static_cast<int>(rng.uniform() * (kClipLen - len));
    double amp = 0.2 + 0.4 * rng.uniform();
    for (int i = 0; i < len; ++i) {
      double env = 0.5 * (1.0 - std::cos(kTwoPi * i / (len - 1)));
      out[static_cast<size_t>(start + i)] +=
          static_cast<float>(amp * env * rng.normal() * 0.3);
    }
  }
  double peak = 0.0;
  for (float v : out) peak = std::max(peak, static_cast<double>(std::abs(v)));
  if (peak > 0.0) {
    float scale = static_cast<float>((0.3 + 0.4 * rng.uniform()) / peak);
    for (auto& v : out) v *= scale;
  }
}

std::vector<float> make_narrowband(double center_hz, int len, Rng& rng) {
  const int half = 10;
  std::vector<double> amp, phase, freq;
  for (int j = -half; j <= half; ++j) {
    freq.push_back(center_hz + 4.0 * j);
    amp.push_back(1.0 - std::abs(j) / static_cast<double>(half + 1));
    phase.push_back(kTwoPi * rng.uniform());
  }
  std::vector<float> out(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) {
    double t = static_cast<double>(i) / dsp::kSampleRate;
    double v = 0.0;
    for (size_t h = 0; h < freq.size(); ++h)
      v += amp[h] * std::sin(kTwoPi * freq[h] * t + phase[h]);
    out[static_cast<size_t>(i)] = static_cast<float>(v + 0.15 * rng.normal());
  }
  return out;
}

std::vector<float> make_pinklike(int len, Rng& rng) {
  std::vector<float> out(static_cast<size_t>(len));
  double y = 0.0;
  for (int i = 0; i < len; ++i) {
    y = 0.85 * y + 0.15 * rng.normal();
    out[static_cast<size_t>(i)] = static_cast<float>(y);
  }
  return out;
}

void normalize_rms(std::vector<float>& x, double target) {
  double p = signal_power(x);
  if (p <= 0.0) return;
  float scale = static_cast<float>(target / std::sqrt(p));
  for (auto& v : x) v *= scale;
}

}  // namespace

SynthResult synth_dataset(const SynthSpec& spec, uint64_t seed) {
  require(spec.keywords >= 1, Error::Kind::kConfig, "synth needs at least one keyword class");
  require(spec.harmonics >= 1, Error::Kind::kConfig, "synth harmonics must be >= 1");
  require(spec.train_per_class + spec.val_per_class + spec.test_per_class > 0,
          Error::Kind::kConfig, "synth per-class counts are all zero");
  require(spec.narrowband_hz > 100.0 && spec.narrowband_hz < 7900.0, Error::Kind::kConfig,
          "narrowband center must lie inside (100, 7900) Hz");
  require(spec.noise_seconds >= 1.0, Error::Kind::kConfig, "noise recordings must be >= 1 s");

  std::vector<double> base = spec.base_hz;
  if (base.empty()) {
    base.resize(static_cast<size_t>(spec.keywords));
    for (int i = 0; i < spec.keywords; ++i) {
      base[static_cast<size_t>(i)] =
          spec.keywords == 1
              ? 800.0
              : 400.0 * std::pow(8.0, static_cast<double>(i) / (spec.keywords - 1));
    }
  }
  require(static_cast<int>(base.size()) == spec.keywords, Error::Kind::kConfig,
          "base_hz must list one frequency per keyword");
  std::vector<double> sorted = base;
  std::sort(sorted.begin(), sorted.end());
  for (size_t i = 1; i < sorted.size(); ++i)
    require(sorted[i] - sorted[i - 1] >= 100.0, Error::Kind::kConfig,
            "overlapping class frequencies: " + std::to_string(sorted[i - 1]) + " vs " +
                std::to_string(sorted[i]) + " Hz");
  for (double f : base)
    require(f >= 100.0 && f <= 7600.0, Error::Kind::kConfig,
            "keyword base frequency out of range: " + std::to_string(f));

  Rng root(seed);
  uint64_t counter = 0;
  SynthResult result;

  const std::vector<std::pair<std::string, int>> split_counts = {
      {"train", spec.train_per_class}, {"val", spec.val_per_class}, {"test", spec.test_per_class}};

  for (int c = 0; c <= spec.keywords; ++c) {
    const bool is_filler = c == spec.keywords;
    const std::string label = is_filler ? "filler" : "kw" + std::to_string(c);
    for (const auto& [split, count] : split_counts) {
      for (int i = 0; i < count; ++i) {
        Rng rng = root.fork(counter++);
        SynthClip clip;
        clip.label = label;
        clip.split = split;
        clip.samples.assign(kClipLen, 0.0f);
        if (is_filler) {
          add_filler_clip(clip.samples, rng);
        } else {
          add_keyword_clip(clip.samples, base[static_cast<size_t>(c)], spec.harmonics, rng);
        }
        result.clips.push_back(std::move(clip));
      }
    }
  }

  const int noise_len = static_cast<int>(spec.noise_seconds * dsp::kSampleRate);
  Rng nb = root.fork(1000000);
  Rng pk = root.fork(1000001);
  Rng wh = root.fork(1000002);
  result.noises["narrowband"] = make_narrowband(spec.narrowband_hz, noise_len, nb);
  result.noises["pinklike"] = make_pinklike(noise_len, pk);
  std::vector<float> white(static_cast<size_t>(noise_len));
  for (auto& v : white) v = static_cast<float>(wh.normal());
  result.noises["white"] = std::move(white);
  for (auto& [name, rec] : result.noises) normalize_rms(rec, 0.1);
  return result;
}

SplitPools write_synth_dataset(const SynthResult& result, const std::string& root) {
  SplitPools pools;
  std::map<std::string, int> counters;
  for (const auto& clip : result.clips) {
    fs::create_directories(fs::path(root) / clip.label);
    int idx = counters[clip.label + "/" + clip.split]++;
    std::string rel = clip.label + "/" + clip.split + "_" + std::to_string(idx) + ".wav";
    wav::write_wav((fs::path(root) / rel).string(), clip.samples);
    auto& pool = clip.split == "train" ? pools.train
                                       : (clip.split == "val" ? pools.val : pools.test);
    pool.emplace_back(rel, clip.label);
  }
  fs::create_directories(fs::path(root) / "_noise");
  for (const auto& [name, rec] : result.noises)
    wav::write_wav((fs::path(root) / "_noise" / (name + ".wav")).string(), rec);
  return pools;
}

namespace {

std::vector<float> mix_entry(const std::vector<float>& utt, const ManifestEntry& e,
                             const NoiseBank& bank) {
  if (e.noise == "clean") return utt;
  const auto& rec = bank.get(e.noise);
  require(rec.size() >= utt.size(), Error::Kind::kData,
          "noise recording shorter than the clip: " + e.noise);
  Rng rng(e.seed);
  size_t offset = rng.uniform_int(rec.size() - utt.size() + 1);
  std::vector<float> segment(rec.begin() + static_cast<ptrdiff_t>(offset),
                             rec.begin() + static_cast<ptrdiff_t>(offset + utt.size()));
  double snr = parse_int(e.snr_db, "snr_db");
  return mix_at_snr(utt, segment, snr).mixed;
}

}  // namespace

std::vector<float> realize_entry(const std::string& root, const ManifestEntry& e,
                                 const NoiseBank& bank) {
  auto clip = wav::load_wav((fs::path(root) / e.path).string());
  auto utt = wav::normalize_length(std::move(clip.samples), kClipLen);
  return mix_entry(utt, e, bank);
}

int LoadedDataset::label_index(const std::string& name) const {
  for (size_t i = 0; i < label_names.size(); ++i)
    if (label_names[i] == name) return static_cast<int>(i);
  throw Error(Error::Kind::kData, "unknown label: " + name);
}

LoadedDataset load_dataset(const std::string& root, const std::vector<ManifestEntry>& manifest) {
  require(!manifest.empty(), Error::Kind::kData, "empty manifest");
  LoadedDataset ds;

  std::set<std::string> label_set;
  for (const auto& e : manifest) label_set.insert(e.label);
  for (const auto& l : label_set)
    if (l != "filler") ds.label_names.push_back(l);
  if (label_set.count("filler") > 0) ds.label_names.push_back("filler");

  NoiseBank bank = load_noise_bank(root);
  std::map<std::string, std::vector<float>> cache;
  for (const auto& e : manifest) {
    validate_entry(e);
    auto it = cache.find(e.path);
    if (it == cache.end()) {
      auto clip = wav::load_wav((fs::path(root) / e.path).string());
      it = cache.emplace(e.path, wav::normalize_length(std::move(clip.samples), kClipLen))
               .first;
    }
    Example ex;
    ex.spec = dsp::stft_power(mix_entry(it->second, e, bank));
    ex.label = ds.label_index(e.label);
    if (e.split == "train") {
      ds.train.push_back(std::move(ex));
    } else if (e.split == "val") {
      ds.val.push_back(std::move(ex));
    } else {
      ds.test.push_back(std::move(ex));
      ds.test_entries.push_back(e);
    }
  }
  return ds;
}

}  // namespace fbkws::data
