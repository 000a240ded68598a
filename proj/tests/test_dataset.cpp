#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "fbkws/dataset.hpp"
#include "fbkws/dsp.hpp"
#include "fbkws/error.hpp"
#include "fbkws/rng.hpp"
#include "fbkws/wav.hpp"

namespace fs = std::filesystem;
using namespace fbkws;
using data::ManifestEntry;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::path("tmp_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

// Hand-rolled writer so the reader is tested against independent bytes.
void write_pcm16_raw(const fs::path& p, const std::vector<int16_t>& samples,
                     uint32_t rate = 16000, uint16_t channels = 1) {
  std::string out = "RIFF";
  put_u32(out, 36 + 2 * static_cast<uint32_t>(samples.size()));
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, channels);
  put_u32(out, rate);
  put_u32(out, rate * 2 * channels);
  put_u16(out, static_cast<uint16_t>(2 * channels));
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * static_cast<uint32_t>(samples.size()));
  for (int16_t s : samples) put_u16(out, static_cast<uint16_t>(s));
  std::ofstream f(p, std::ios::binary);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<float> tone(double hz, int n, double amp = 0.5) {
  std::vector<float> x(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    x[static_cast<size_t>(i)] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * i / 16000.0));
  return x;
}

}  // namespace

TEST_CASE("pcm16 scaling convention") {
  TempDir dir("wav_pcm");
  auto p = dir.path / "a.wav";
  write_pcm16_raw(p, {-32768, 0, 16384, 32767});
  auto clip = wav::load_wav(p.string());
  REQUIRE(clip.samples.size() == 4);
  CHECK(clip.samples[0] == -1.0f);
  CHECK(clip.samples[1] == 0.0f);
  CHECK(clip.samples[2] == 0.5f);
  CHECK(clip.samples[3] == doctest::Approx(32767.0f / 32768.0f));
}

TEST_CASE("float32 wav round trip is exact") {
  TempDir dir("wav_f32");
  auto p = dir.path / "a.wav";
  auto x = tone(700.0, 1234);
  wav::write_wav(p.string(), x);
  auto clip = wav::load_wav(p.string());
  REQUIRE(clip.samples.size() == x.size());
  for (size_t i = 0; i < x.size(); ++i) CHECK(clip.samples[i] == x[i]);
}

TEST_CASE("wav format errors name the property") {
  TempDir dir("wav_bad");
  auto rate = dir.path / "rate.wav";
  write_pcm16_raw(rate, {0, 0}, 44100);
  CHECK_THROWS_WITH_AS(wav::load_wav(rate.string()),
                       doctest::Contains("44100"), Error);

  auto stereo = dir.path / "stereo.wav";
  write_pcm16_raw(stereo, {0, 0}, 16000, 2);
  CHECK_THROWS_WITH_AS(wav::load_wav(stereo.string()), doctest::Contains("mono"), Error);

  auto garbage = dir.path / "garbage.wav";
  std::ofstream(garbage) << "this is not a wav file at all, not even close!";
  CHECK_THROWS_AS(wav::load_wav(garbage.string()), Error);

  CHECK_THROWS_AS(wav::load_wav((dir.path / "missing.wav").string()), Error);
}

TEST_CASE("normalize_length pads and trims centrally") {
  std::vector<float> shorter = {1.0f, 2.0f, 3.0f, 4.0f};
  auto padded = wav::normalize_length(shorter, 10);
  REQUIRE(padded.size() == 10);
  CHECK(padded[2] == 0.0f);
  CHECK(padded[3] == 1.0f);
  CHECK(padded[6] == 4.0f);
  CHECK(padded[7] == 0.0f);

  std::vector<float> longer = {1, 2, 3, 4, 5, 6, 7, 8};
  auto trimmed = wav::normalize_length(longer, 4);
  REQUIRE(trimmed.size() == 4);
  CHECK(trimmed[0] == 3.0f);
  CHECK(trimmed[3] == 6.0f);
}

TEST_CASE("mix_at_snr closed form") {
  std::vector<float> speech(1000, 1.0f);  // P_s = 1
  std::vector<float> noise(1000);
  for (size_t i = 0; i < noise.size(); ++i) noise[i] = (i % 2 == 0) ? 2.0f : -2.0f;  // P_n = 4

  auto r = data::mix_at_snr(speech, noise, 10.0);
  CHECK(r.alpha == doctest::Approx(0.15811388300841897).epsilon(1e-12));

  auto r0 = data::mix_at_snr(speech, noise, 0.0);
  CHECK(data::signal_power(r0.scaled_noise) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("re-measured SNR is exact to 1e-6 dB") {
  Rng rng(3);
  for (int rep = 0; rep < 5; ++rep) {
    std::vector<float> speech(16000), noise(16000);
    for (auto& v : speech) v = static_cast<float>(rng.normal() * 0.2);
    for (auto& v : noise) v = static_cast<float>(rng.normal() * 0.7);
    for (double snr : {-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0}) {
      auto r = data::mix_at_snr(speech, noise, snr);
      CHECK(std::abs(data::measure_snr_db(speech, r.scaled_noise) - snr) < 1e-6);
    }
  }
}

TEST_CASE("mixing degenerate inputs") {
  std::vector<float> zeros(100, 0.0f);
  std::vector<float> ones(100, 1.0f);
  std::vector<float> short_sig(50, 1.0f);
  CHECK_THROWS_AS(data::mix_at_snr(zeros, ones, 0.0), Error);
  CHECK_THROWS_AS(data::mix_at_snr(ones, zeros, 0.0), Error);
  CHECK_THROWS_AS(data::mix_at_snr(ones, short_sig, 0.0), Error);
}

TEST_CASE("manifest round trip and validation") {
  TempDir dir("manifest");
  std::vector<ManifestEntry> entries = {
      {"kw0/a.wav", "kw0", "train", "white", "seen", "5", 42},
      {"kw0/a.wav", "kw0", "train", "clean", "clean", "clean", 43},
      {"kw1/b.wav", "kw1", "test", "cafe", "unseen", "-10", 44},
  };
  auto p = (dir.path / "manifest.csv").string();
  data::write_manifest(p, entries);
  auto back = data::read_manifest(p);
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(back[i].path == entries[i].path);
    CHECK(back[i].label == entries[i].label);
    CHECK(back[i].split == entries[i].split);
    CHECK(back[i].noise == entries[i].noise);
    CHECK(back[i].seen == entries[i].seen);
    CHECK(back[i].snr_db == entries[i].snr_db);
    CHECK(back[i].seed == entries[i].seed);
  }

  CHECK_THROWS_AS(data::validate_entry({"p", "l", "train", "cafe", "unseen", "5", 1}), Error);
  CHECK_THROWS_AS(data::validate_entry({"p", "l", "train", "white", "seen", "7", 1}), Error);
  CHECK_THROWS_AS(data::validate_entry({"p", "l", "test", "white", "seen", "-20", 1}), Error);
  CHECK_THROWS_AS(data::validate_entry({"p", "l", "dev", "white", "seen", "5", 1}), Error);
  CHECK_THROWS_AS(data::validate_entry({"p", "l", "train", "clean", "seen", "clean", 1}), Error);
}

namespace {

data::NoiseBank two_noise_bank() {
  data::NoiseBank bank;
  Rng rng(9);
  std::vector<float> a(32000), b(32000);
  for (auto& v : a) v = static_cast<float>(rng.normal() * 0.1);
  for (auto& v : b) v = static_cast<float>(rng.normal() * 0.1);
  bank.recordings["noise_a"] = std::move(a);
  bank.recordings["noise_b"] = std::move(b);
  return bank;
}

data::SplitPools tiny_pools(int train_n, int val_n, int test_n) {
  data::SplitPools pools;
  for (int i = 0; i < train_n; ++i)
    pools.train.emplace_back("kw0/t" + std::to_string(i) + ".wav", "kw0");
  for (int i = 0; i < val_n; ++i)
    pools.val.emplace_back("kw0/v" + std::to_string(i) + ".wav", "kw0");
  for (int i = 0; i < test_n; ++i)
    pools.test.emplace_back("kw0/s" + std::to_string(i) + ".wav", "kw0");
  return pools;
}

}  // namespace

TEST_CASE("build_manifest_from_pools cross mode counts") {
  auto bank = two_noise_bank();
  data::ProtocolConfig cfg;
  cfg.train_noises = {"noise_a", "noise_b"};
  cfg.test_seen = {"noise_a"};
  cfg.test_unseen = {};
  cfg.train_snrs = {0, 5};
  cfg.test_snrs = {-5, 5};
  cfg.include_clean = false;
  cfg.train_per_cell = 10;
  cfg.val_per_cell = 4;
  cfg.test_per_cell = 6;

  auto pools = tiny_pools(12, 4, 8);
  auto entries = data::build_manifest_from_pools(pools, bank, cfg);
  int train_count = 0, val_count = 0, test_count = 0;
  for (const auto& e : entries) {
    if (e.split == "train") ++train_count;
    if (e.split == "val") ++val_count;
    if (e.split == "test") ++test_count;
  }
  CHECK(train_count == 40);  // 10 per cell x 2 noises x 2 SNRs
  CHECK(val_count == 16);
  CHECK(test_count == 12);  // 6 per cell x 1 noise x 2 SNRs

  cfg.include_clean = true;
  auto with_clean = data::build_manifest_from_pools(pools, bank, cfg);
  int train_clean = 0;
  for (const auto& e : with_clean)
    if (e.split == "train" && e.noise == "clean") ++train_clean;
  CHECK(train_clean == 10);

  // determinism: same inputs, identical entry list including seeds
  auto again = data::build_manifest_from_pools(pools, bank, cfg);
  REQUIRE(again.size() == with_clean.size());
  for (size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i].path == with_clean[i].path);
    CHECK(again[i].seed == with_clean[i].seed);
  }
}

TEST_CASE("build_manifest_from_pools partition mode uses disjoint utterances") {
  auto bank = two_noise_bank();
  data::ProtocolConfig cfg;
  cfg.train_noises = {"noise_a"};
  cfg.test_seen = {"noise_a"};
  cfg.test_unseen = {};
  cfg.train_snrs = {0, 5};
  cfg.test_snrs = {5};
  cfg.include_clean = false;
  cfg.assignment = "partition";
  cfg.train_per_cell = 3;
  cfg.val_per_cell = 1;
  cfg.test_per_cell = 2;

  auto pools = tiny_pools(6, 2, 2);
  auto entries = data::build_manifest_from_pools(pools, bank, cfg);
  std::vector<std::string> train_paths;
  for (const auto& e : entries)
    if (e.split == "train") train_paths.push_back(e.path);
  CHECK(train_paths.size() == 6);
  std::sort(train_paths.begin(), train_paths.end());
  CHECK(std::unique(train_paths.begin(), train_paths.end()) == train_paths.end());

  cfg.train_per_cell = 4;  // 4 x 2 cells > 6 available
  CHECK_THROWS_AS(data::build_manifest_from_pools(pools, bank, cfg), Error);
}

TEST_CASE("protocol guards") {
  auto bank = two_noise_bank();
  auto pools = tiny_pools(4, 2, 2);
  data::ProtocolConfig cfg;
  cfg.train_noises = {"noise_a"};
  cfg.test_seen = {"noise_a"};
  cfg.test_unseen = {"noise_a"};  // overlaps train
  cfg.train_per_cell = cfg.val_per_cell = cfg.test_per_cell = 1;
  CHECK_THROWS_AS(data::build_manifest_from_pools(pools, bank, cfg), Error);

  cfg.test_unseen = {};
  cfg.test_seen = {"noise_b", "noise_a"};
  cfg.train_noises = {"noise_a"};  // seen noise not trained on
  CHECK_THROWS_AS(data::build_manifest_from_pools(pools, bank, cfg), Error);

  cfg.test_seen = {"noise_a"};
  cfg.train_noises = {"noise_a", "missing_one"};
  try {
    data::build_manifest_from_pools(pools, bank, cfg);
    FAIL("expected missing-noise error");
  } catch (const Error& e) {
    CHECK(e.kind() == Error::Kind::kData);
    CHECK(std::string(e.what()).find("missing_one") != std::string::npos);
  }

  cfg.train_noises = {"noise_a"};
  cfg.train_snrs = {7};  // off-grid
  CHECK_THROWS_AS(data::build_manifest_from_pools(pools, bank, cfg), Error);
}

TEST_CASE("synth dataset determinism, balance, and clip geometry") {
  data::SynthSpec spec;
  spec.keywords = 3;
  spec.train_per_class = 4;
  spec.val_per_class = 2;
  spec.test_per_class = 2;
  spec.noise_seconds = 2.0;

  auto a = data::synth_dataset(spec, 7);
  auto b = data::synth_dataset(spec, 7);
  REQUIRE(a.clips.size() == b.clips.size());
  CHECK(a.clips.size() == 4 * 8);  // 3 keywords + filler, 8 clips each
  for (size_t i = 0; i < a.clips.size(); ++i) {
    CHECK(a.clips[i].samples.size() == 16000);
    CHECK(a.clips[i].samples == b.clips[i].samples);
  }
  auto c = data::synth_dataset(spec, 8);
  CHECK(a.clips[0].samples != c.clips[0].samples);

  std::map<std::string, int> per_label;
  for (const auto& clip : a.clips) per_label[clip.label]++;
  for (const auto& [label, count] : per_label) CHECK(count == 8);

  CHECK(a.noises.count("narrowband") == 1);
  CHECK(a.noises.count("pinklike") == 1);
  for (const auto& [name, rec] : a.noises) CHECK(rec.size() == 32000);
}

TEST_CASE("synth rejects overlapping class frequencies") {
  data::SynthSpec spec;
  spec.keywords = 2;
  spec.base_hz = {900.0, 950.0};
  CHECK_THROWS_AS(data::synth_dataset(spec, 1), Error);
}

TEST_CASE("narrowband noise peaks at the configured bin") {
  data::SynthSpec spec;
  spec.keywords = 1;
  spec.train_per_class = 1;
  spec.val_per_class = 0;
  spec.test_per_class = 0;
  spec.noise_seconds = 2.0;
  spec.narrowband_hz = 2700.0;
  auto result = data::synth_dataset(spec, 5);

  Tensor spec_nb = dsp::stft_power(result.noises["narrowband"]);
  std::vector<double> mean(241, 0.0);
  for (int t = 0; t < spec_nb.dim(0); ++t)
    for (int k = 0; k < 241; ++k) mean[static_cast<size_t>(k)] += spec_nb.at(t, k);
  int argmax = 0;
  for (int k = 1; k < 241; ++k)
    if (mean[static_cast<size_t>(k)] > mean[static_cast<size_t>(argmax)]) argmax = k;
  CHECK(argmax == 81);
}

TEST_CASE("end-to-end synth -> manifest -> load_dataset") {
  TempDir dir("e2e");
  data::SynthSpec spec;
  spec.keywords = 2;
  spec.train_per_class = 4;
  spec.val_per_class = 2;
  spec.test_per_class = 2;
  spec.noise_seconds = 2.0;
  auto result = data::synth_dataset(spec, 11);
  auto pools = data::write_synth_dataset(result, dir.path.string());
  CHECK(pools.train.size() == 12);
  CHECK(pools.val.size() == 6);
  CHECK(pools.test.size() == 6);

  auto bank = data::load_noise_bank(dir.path.string());
  CHECK(bank.has("narrowband"));
  CHECK(bank.has("pinklike"));
  CHECK(bank.has("white"));

  data::ProtocolConfig cfg;
  cfg.train_noises = {"narrowband"};
  cfg.test_seen = {"narrowband"};
  cfg.test_unseen = {"pinklike"};
  cfg.train_snrs = {5};
  cfg.test_snrs = {5};
  cfg.include_clean = true;
  cfg.train_per_cell = cfg.val_per_cell = cfg.test_per_cell = 0;  // whole pools
  auto manifest = data::build_manifest_from_pools(pools, bank, cfg);

  auto ds = data::load_dataset(dir.path.string(), manifest);
  REQUIRE(ds.label_names.size() == 3);
  CHECK(ds.label_names.back() == "filler");
  CHECK(ds.train.size() == 24);                  // 12 utts x (1 noise cell + clean)
  CHECK(ds.val.size() == 12);
  CHECK(ds.test.size() == 18);                   // 6 x (2 noise cells + clean)
  REQUIRE(ds.test_entries.size() == ds.test.size());
  for (const auto& ex : ds.train) {
    CHECK(ex.spec.dim(0) == 98);
    CHECK(ex.spec.dim(1) == 241);
    CHECK(ex.label >= 0);
    CHECK(ex.label < 3);
  }

  // realize_entry is reproducible from the manifest row alone
  auto w1 = data::realize_entry(dir.path.string(), manifest[0], bank);
  auto w2 = data::realize_entry(dir.path.string(), manifest[0], bank);
  CHECK(w1 == w2);
}

TEST_CASE("build_manifest over a directory tree is deterministic") {
  TempDir dir("scan");
  data::SynthSpec spec;
  spec.keywords = 2;
  spec.train_per_class = 6;
  spec.val_per_class = 0;
  spec.test_per_class = 0;
  spec.noise_seconds = 2.0;
  auto result = data::synth_dataset(spec, 21);
  data::write_synth_dataset(result, dir.path.string());

  auto bank = data::load_noise_bank(dir.path.string());
  data::ProtocolConfig cfg;
  cfg.train_noises = {"white"};
  cfg.test_seen = {"white"};
  cfg.test_unseen = {"pinklike"};
  cfg.train_snrs = {0};
  cfg.test_snrs = {0};
  cfg.train_per_cell = cfg.val_per_cell = cfg.test_per_cell = 0;
  cfg.seed = 77;

  auto m1 = data::build_manifest(dir.path.string(), bank, cfg);
  auto m2 = data::build_manifest(dir.path.string(), bank, cfg);
  REQUIRE(m1.size() == m2.size());
  REQUIRE(!m1.empty());
  for (size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].path == m2[i].path);
    CHECK(m1[i].split == m2[i].split);
    CHECK(m1[i].seed == m2[i].seed);
  }

  // splits are disjoint in utterances
  std::set<std::string> train_set, other;
  for (const auto& e : m1) {
    if (e.split == "train") train_set.insert(e.path);
    else other.insert(e.path);
  }
  for (const auto& p : other) CHECK(train_set.count(p) == 0);
}
