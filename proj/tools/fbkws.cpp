// fbkws: one entry point for dataset synthesis, training, evaluation,
// multiplication counting, and filterbank export. Exit codes: 0 success,
// 1 runtime failure, 2 configuration/validation failure.

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fbkws/checkpoint.hpp"
#include "fbkws/csv.hpp"
#include "fbkws/dataset.hpp"
#include "fbkws/dsp.hpp"
#include "fbkws/error.hpp"
#include "fbkws/evaluator.hpp"
#include "fbkws/model.hpp"
#include "fbkws/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using fbkws::Error;
using fbkws::require;
using nlohmann::json;

namespace {

json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Error::Kind::kConfig, "cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Error::Kind::kConfig, "config " + path + " is not valid JSON: " + e.what());
  }
}

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  require(obj.is_object(), Error::Kind::kConfig, where + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    require(allowed.count(key) > 0, Error::Kind::kConfig,
            "unknown key '" + key + "' in " + where);
}

template <typename T>
T get_as(const json& obj, const std::string& key, const T& fallback,
         const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Error::Kind::kConfig, "key '" + key + "' in " + where + " has the wrong type");
  }
}

std::optional<uint64_t> env_seed() {
  const char* raw = std::getenv("FBKWS_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  unsigned long long v = std::strtoull(raw, &end, 10);
  require(end != raw && *end == '\0', Error::Kind::kConfig,
          std::string("FBKWS_SEED is not an unsigned integer: ") + raw);
  return static_cast<uint64_t>(v);
}

fbkws::model::ModelConfig model_preset(const std::string& variant, int k, int frames) {
  if (variant == "res15-like") return fbkws::model::ModelConfig::res15_like(k, frames);
  if (variant == "res8-narrow-like")
    return fbkws::model::ModelConfig::res8_narrow_like(k, frames);
  throw Error(Error::Kind::kConfig,
              "unknown model variant '" + variant + "', want res15-like | res8-narrow-like");
}

// ---------------------------------------------------------------- synth ----

fbkws::data::ProtocolConfig protocol_from_json(const json& obj, const std::string& where) {
  check_keys(obj, {"train_noises", "test_seen", "test_unseen", "train_snrs", "test_snrs",
                   "include_clean", "assignment", "train_per_cell", "val_per_cell",
                   "test_per_cell", "seed"},
             where);
  fbkws::data::ProtocolConfig cfg;
  cfg.train_noises = get_as<std::vector<std::string>>(obj, "train_noises", cfg.train_noises, where);
  cfg.test_seen = get_as<std::vector<std::string>>(obj, "test_seen", cfg.test_seen, where);
  cfg.test_unseen = get_as<std::vector<std::string>>(obj, "test_unseen", cfg.test_unseen, where);
  cfg.train_snrs = get_as<std::vector<int>>(obj, "train_snrs", cfg.train_snrs, where);
  cfg.test_snrs = get_as<std::vector<int>>(obj, "test_snrs", cfg.test_snrs, where);
  cfg.include_clean = get_as<bool>(obj, "include_clean", cfg.include_clean, where);
  cfg.assignment = get_as<std::string>(obj, "assignment", cfg.assignment, where);
  cfg.train_per_cell = get_as<int>(obj, "train_per_cell", cfg.train_per_cell, where);
  cfg.val_per_cell = get_as<int>(obj, "val_per_cell", cfg.val_per_cell, where);
  cfg.test_per_cell = get_as<int>(obj, "test_per_cell", cfg.test_per_cell, where);
  cfg.seed = get_as<uint64_t>(obj, "seed", cfg.seed, where);
  return cfg;
}

int cmd_synth(const std::string& cfg_path, const std::string& out_dir) {
  json cfg = parse_json_file(cfg_path);
  check_keys(cfg, {"keywords", "base_hz", "harmonics", "train_per_class", "val_per_class",
                   "test_per_class", "narrowband_hz", "noise_seconds", "seed", "protocol"},
             "synth config");

  fbkws::data::SynthSpec spec;
  spec.keywords = get_as<int>(cfg, "keywords", spec.keywords, "synth config");
  spec.base_hz = get_as<std::vector<double>>(cfg, "base_hz", spec.base_hz, "synth config");
  spec.harmonics = get_as<int>(cfg, "harmonics", spec.harmonics, "synth config");
  spec.train_per_class =
      get_as<int>(cfg, "train_per_class", spec.train_per_class, "synth config");
  spec.val_per_class = get_as<int>(cfg, "val_per_class", spec.val_per_class, "synth config");
  spec.test_per_class = get_as<int>(cfg, "test_per_class", spec.test_per_class, "synth config");
  spec.narrowband_hz = get_as<double>(cfg, "narrowband_hz", spec.narrowband_hz, "synth config");
  spec.noise_seconds = get_as<double>(cfg, "noise_seconds", spec.noise_seconds, "synth config");
  uint64_t seed = get_as<uint64_t>(cfg, "seed", 1, "synth config");

  // Default desk protocol: train on narrowband+pinklike, hold white out as
  // the unseen test noise, use every pooled utterance per cell.
  fbkws::data::ProtocolConfig protocol;
  protocol.train_noises = {"narrowband", "pinklike"};
  protocol.test_seen = {"narrowband", "pinklike"};
  protocol.test_unseen = {"white"};
  protocol.train_per_cell = -1;
  protocol.val_per_cell = -1;
  protocol.test_per_cell = -1;
  if (cfg.contains("protocol")) {
    json merged = cfg.at("protocol");
    fbkws::data::ProtocolConfig base = protocol;
    protocol = protocol_from_json(merged, "synth config protocol");
    if (!merged.contains("train_noises")) protocol.train_noises = base.train_noises;
    if (!merged.contains("test_seen")) protocol.test_seen = base.test_seen;
    if (!merged.contains("test_unseen")) protocol.test_unseen = base.test_unseen;
    if (!merged.contains("train_per_cell")) protocol.train_per_cell = base.train_per_cell;
    if (!merged.contains("val_per_cell")) protocol.val_per_cell = base.val_per_cell;
    if (!merged.contains("test_per_cell")) protocol.test_per_cell = base.test_per_cell;
  }
  if (auto s = env_seed()) {
    seed = *s;
    protocol.seed = *s;
  }

  fbkws::data::SynthResult result = fbkws::data::synth_dataset(spec, seed);
  fbkws::data::SplitPools pools = fbkws::data::write_synth_dataset(result, out_dir);

  fbkws::data::NoiseBank bank;
  bank.recordings = result.noises;
  std::vector<fbkws::data::ManifestEntry> entries =
      fbkws::data::build_manifest_from_pools(pools, bank, protocol);
  fbkws::data::write_manifest(out_dir + "/manifest.csv", entries);

  size_t train_rows = 0, val_rows = 0, test_rows = 0;
  for (const auto& e : entries) {
    if (e.split == "train") ++train_rows;
    else if (e.split == "val") ++val_rows;
    else ++test_rows;
  }
  std::printf("synth: %zu clips, %zu noises -> %s\n", result.clips.size(),
              result.noises.size(), out_dir.c_str());
  std::printf("manifest: %zu train / %zu val / %zu test rows\n", train_rows, val_rows,
              test_rows);
  return 0;
}

// ---------------------------------------------------------------- train ----

struct ExperimentConfig {
  std::string arm = "learned";
  int k = 8;
  std::string model = "res15-like";
  std::string dataset;
  std::string out;
  std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};
  float dropout_rate = 0.4f;
  std::string dropout_mode = "element";
  fbkws::trainer::TrainConfig train;
};

ExperimentConfig load_experiment(const std::string& cfg_path, const std::string& profile) {
  ExperimentConfig ec;
  require(profile == "paper" || profile == "desk", Error::Kind::kConfig,
          "unknown profile '" + profile + "', want paper | desk");
  if (profile == "desk") {
    ec.model = "res8-narrow-like";
    ec.train.batch_size = 16;
    ec.train.max_epochs = 30;
  }

  json cfg = parse_json_file(cfg_path);
  check_keys(cfg, {"arm", "k", "model", "dataset", "out", "seeds", "dropout_rate",
                   "dropout_mode", "train"},
             "experiment config");
  ec.arm = get_as<std::string>(cfg, "arm", ec.arm, "experiment config");
  ec.k = get_as<int>(cfg, "k", ec.k, "experiment config");
  ec.model = get_as<std::string>(cfg, "model", ec.model, "experiment config");
  ec.dataset = get_as<std::string>(cfg, "dataset", ec.dataset, "experiment config");
  ec.out = get_as<std::string>(cfg, "out", ec.out, "experiment config");
  ec.seeds = get_as<std::vector<uint64_t>>(cfg, "seeds", ec.seeds, "experiment config");
  ec.dropout_rate = get_as<float>(cfg, "dropout_rate", ec.dropout_rate, "experiment config");
  ec.dropout_mode =
      get_as<std::string>(cfg, "dropout_mode", ec.dropout_mode, "experiment config");
  if (cfg.contains("train")) {
    const json& tr = cfg.at("train");
    check_keys(tr, {"lr", "batch_size", "patience", "max_epochs"}, "experiment config train");
    ec.train.lr = get_as<double>(tr, "lr", ec.train.lr, "train");
    ec.train.batch_size = get_as<int>(tr, "batch_size", ec.train.batch_size, "train");
    ec.train.patience = get_as<int>(tr, "patience", ec.train.patience, "train");
    ec.train.max_epochs = get_as<int>(tr, "max_epochs", ec.train.max_epochs, "train");
  }
  return ec;
}

int cmd_train(const std::string& cfg_path, const std::string& profile,
              const std::string& out_override, int jobs) {
  ExperimentConfig ec = load_experiment(cfg_path, profile);
  if (!out_override.empty()) ec.out = out_override;
  if (auto s = env_seed()) ec.seeds = {*s};
  require(!ec.dataset.empty(), Error::Kind::kConfig, "experiment config needs 'dataset'");
  require(!ec.out.empty(), Error::Kind::kConfig,
          "experiment config needs 'out' (or pass --out)");

  // everything checkable without touching the dataset is validated up front
  fbkws::trainer::RepetitionPlan plan;
  plan.frontend.arm = fbkws::frontend::arm_from_string(ec.arm);
  plan.frontend.k = ec.k;
  plan.frontend.dropout_rate = ec.dropout_rate;
  if (ec.dropout_mode == "element") {
    plan.frontend.dropout_mode = fbkws::DropoutMode::kElement;
  } else if (ec.dropout_mode == "channel") {
    plan.frontend.dropout_mode = fbkws::DropoutMode::kChannel;
  } else {
    throw Error(Error::Kind::kConfig,
                "unknown dropout_mode '" + ec.dropout_mode + "', want element | channel");
  }
  plan.model = model_preset(ec.model, ec.k, 98);
  plan.train = ec.train;
  plan.train.validate();
  plan.seeds = ec.seeds;

  std::vector<fbkws::data::ManifestEntry> entries =
      fbkws::data::read_manifest(ec.dataset + "/manifest.csv");
  fbkws::data::LoadedDataset ds = fbkws::data::load_dataset(ec.dataset, entries);
  require(!ds.train.empty() && !ds.val.empty(), Error::Kind::kData,
          "dataset has no train or no val rows");

  plan.frontend.bins = static_cast<int>(ds.train.front().spec.shape()[1]);
  plan.model.frames = static_cast<int>(ds.train.front().spec.shape()[0]);

  std::printf("train: arm=%s K=%d model=%s dataset=%s out=%s seeds=%zu jobs=%d\n",
              ec.arm.c_str(), ec.k, ec.model.c_str(), ec.dataset.c_str(), ec.out.c_str(),
              ec.seeds.size(), jobs);
  std::vector<fbkws::trainer::RunRecord> records =
      fbkws::trainer::run_repetitions(plan, ds, ec.out, jobs);
  for (const auto& rec : records)
    std::printf("seed %" PRIu64 ": %zu epochs, best val loss %.6f at epoch %d -> %s\n",
                rec.seed, rec.epochs.size(), rec.best_val_loss, rec.best_epoch + 1,
                rec.checkpoint_path.c_str());
  return 0;
}

// ----------------------------------------------------------------- eval ----

std::vector<std::string> run_checkpoints(const std::string& dir) {
  require(fs::is_directory(dir), Error::Kind::kData, "run directory not found: " + dir);
  std::vector<std::pair<uint64_t, std::string>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("seed", 0) != 0) continue;
    const std::string digits = name.substr(4);
    char* end = nullptr;
    unsigned long long seed = std::strtoull(digits.c_str(), &end, 10);
    require(end != digits.c_str() && *end == '\0', Error::Kind::kData,
            "run directory entry is not seed<N>: " + name);
    fs::path ckpt = entry.path() / "checkpoint.fbkws";
    require(fs::exists(ckpt), Error::Kind::kData, "missing checkpoint: " + ckpt.string());
    found.emplace_back(seed, ckpt.string());
  }
  require(!found.empty(), Error::Kind::kData, "no seed<N>/checkpoint.fbkws under " + dir);
  std::sort(found.begin(), found.end());
  std::vector<std::string> paths;
  for (auto& [seed, path] : found) paths.push_back(std::move(path));
  return paths;
}

struct EvalRun {
  std::string name;
  std::string dir;
  std::string arm;  // optional pin
  int k = 0;        // optional pin, 0 = unpinned
};

int cmd_eval(const std::string& cfg_path, const std::string& out_override, int jobs) {
  (void)jobs;  // evaluation is already batched; kept for interface stability
  json cfg = parse_json_file(cfg_path);
  check_keys(cfg, {"dataset", "out", "runs", "alpha", "batch_size"}, "eval config");
  const std::string dataset = get_as<std::string>(cfg, "dataset", "", "eval config");
  std::string out_dir = get_as<std::string>(cfg, "out", "results", "eval config");
  const double alpha = get_as<double>(cfg, "alpha", 0.05, "eval config");
  const int batch_size = get_as<int>(cfg, "batch_size", 64, "eval config");
  if (!out_override.empty()) out_dir = out_override;
  require(!dataset.empty(), Error::Kind::kConfig, "eval config needs 'dataset'");
  require(cfg.contains("runs") && cfg.at("runs").is_array() && !cfg.at("runs").empty(),
          Error::Kind::kConfig, "eval config needs a non-empty 'runs' array");

  std::vector<EvalRun> runs;
  for (const json& r : cfg.at("runs")) {
    check_keys(r, {"name", "dir", "arm", "k"}, "eval config runs[]");
    EvalRun run;
    run.name = get_as<std::string>(r, "name", "", "runs[]");
    run.dir = get_as<std::string>(r, "dir", "", "runs[]");
    run.arm = get_as<std::string>(r, "arm", "", "runs[]");
    run.k = get_as<int>(r, "k", 0, "runs[]");
    require(!run.name.empty() && !run.dir.empty(), Error::Kind::kConfig,
            "every runs[] entry needs 'name' and 'dir'");
    runs.push_back(std::move(run));
  }

  std::vector<fbkws::data::ManifestEntry> entries =
      fbkws::data::read_manifest(dataset + "/manifest.csv");
  fbkws::data::LoadedDataset ds = fbkws::data::load_dataset(dataset, entries);

  fs::create_directories(out_dir);
  std::vector<fbkws::eval::AccuracyTable> tables;
  std::vector<double> mean_acc;
  std::vector<fbkws::model::MultReport> mults;
  for (const EvalRun& run : runs) {
    std::vector<std::string> paths = run_checkpoints(run.dir);
    fbkws::checkpoint::Meta meta = fbkws::checkpoint::read_meta(paths.front());
    const std::string arm = fbkws::frontend::arm_to_string(meta.frontend.arm);
    if (!run.arm.empty())
      require(arm == run.arm, Error::Kind::kConfig,
              "run '" + run.name + "' trained arm " + arm + ", config requests " + run.arm);
    if (run.k != 0)
      require(meta.frontend.k == run.k, Error::Kind::kConfig,
              "run '" + run.name + "' trained K=" + std::to_string(meta.frontend.k) +
                  ", config requests K=" + std::to_string(run.k));
    fbkws::eval::AccuracyTable table = fbkws::eval::accuracy_breakdown(paths, ds, batch_size);

    double acc = 0.0;
    for (size_t r = 0; r < table.reps.size(); ++r) acc += table.overall_pct(r);
    acc /= static_cast<double>(table.reps.size());
    mean_acc.push_back(acc);

    fbkws::model::MultReport mult = fbkws::model::count_multiplications(meta.model);
    fbkws::csv::write_atomic(out_dir + "/mult_" + run.name + ".csv", mult.to_csv());
    mults.push_back(mult);

    std::printf("run %s: arm=%s K=%d reps=%zu mean accuracy %.2f%%\n", run.name.c_str(),
                table.arm.c_str(), table.k, table.reps.size(), acc);
    tables.push_back(std::move(table));
  }

  fbkws::eval::write_accuracy_csv(out_dir + "/accuracy_table.csv", tables);

  if (runs.size() >= 2) {
    std::vector<fbkws::eval::SignificanceRow> rows;
    for (size_t i = 0; i < tables.size(); ++i)
      for (size_t j = i + 1; j < tables.size(); ++j) {
        auto pair_rows = fbkws::eval::significance_table(tables[i], tables[j], alpha);
        rows.insert(rows.end(), pair_rows.begin(), pair_rows.end());
      }
    fbkws::eval::write_significance_csv(out_dir + "/significance.csv", rows);
  } else {
    std::printf("significance skipped: only one run given\n");
  }

  std::ostringstream ratios;
  ratios << fbkws::csv::join_row({"run_a", "run_b", "mult_total_a", "mult_total_b",
                                  "energy_ratio", "mean_acc_a", "mean_acc_b",
                                  "relative_accuracy_loss"});
  for (size_t i = 0; i < runs.size(); ++i)
    for (size_t j = i + 1; j < runs.size(); ++j)
      ratios << fbkws::csv::join_row(
          {runs[i].name, runs[j].name, std::to_string(mults[i].total),
           std::to_string(mults[j].total),
           fbkws::csv::fmt_float(fbkws::eval::energy_ratio(mults[i], mults[j])),
           fbkws::csv::fmt_float(mean_acc[i]), fbkws::csv::fmt_float(mean_acc[j]),
           fbkws::csv::fmt_float(fbkws::eval::relative_accuracy_loss(mean_acc[i],
                                                                     mean_acc[j]))});
  if (runs.size() >= 2) fbkws::csv::write_atomic(out_dir + "/energy_ratios.csv", ratios.str());

  std::printf("eval: wrote %s/accuracy_table.csv (+%zu mult reports)\n", out_dir.c_str(),
              runs.size());
  return 0;
}

// ---------------------------------------------------------------- count ----

int cmd_count(const std::string& variant, int k, int frames, bool as_csv,
              const std::string& out_path) {
  fbkws::model::ModelConfig mc = model_preset(variant, k, frames);
  fbkws::model::MultReport rep = fbkws::model::count_multiplications(mc);

  std::string body;
  if (as_csv) {
    body = rep.to_csv();
  } else {
    std::ostringstream out;
    out << "variant " << variant << ", K=" << k << ", T=" << frames << "\n";
    for (const auto& layer : rep.layers)
      out << "  " << layer.name << ": " << layer.count << "\n";
    out << "  total (acoustic model): " << rep.total << "\n";
    out << "  filterbank matmul (reported separately): " << rep.filterbank << "\n";
    body = out.str();
  }
  if (out_path.empty()) {
    std::fputs(body.c_str(), stdout);
  } else {
    fbkws::csv::write_atomic(out_path, body);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

// ------------------------------------------------------------- export-fb ----

int cmd_export_fb(const std::string& input, const std::string& out_path, bool avg_seeds,
                  bool mel_overlay) {
  std::vector<std::string> paths;
  if (fs::is_directory(input)) {
    paths = run_checkpoints(input);
  } else {
    require(fs::exists(input), Error::Kind::kData, "checkpoint not found: " + input);
    paths = {input};
  }
  require(avg_seeds || paths.size() == 1, Error::Kind::kConfig,
          "multiple checkpoints found; pass --avg-seeds to average them");

  std::vector<double> acc;
  int f_bins = 0, k = 0;
  for (const std::string& path : paths) {
    fbkws::model::KwsSystem sys = fbkws::checkpoint::load(path);
    const fbkws::Tensor& w = sys.front().weights();
    if (acc.empty()) {
      f_bins = static_cast<int>(w.shape()[0]);
      k = static_cast<int>(w.shape()[1]);
      acc.assign(static_cast<size_t>(w.numel()), 0.0);
    }
    require(w.shape()[0] == f_bins && w.shape()[1] == k, Error::Kind::kShape,
            "checkpoints disagree on filterbank shape");
    for (int64_t i = 0; i < w.numel(); ++i)
      acc[static_cast<size_t>(i)] += std::max(w[i], 0.0f);
  }
  for (double& v : acc) v /= static_cast<double>(paths.size());

  fbkws::Tensor mel;
  if (mel_overlay) mel = fbkws::dsp::mel_filterbank(k, f_bins).weights;

  const double nyquist = fbkws::dsp::kSampleRate / 2.0;
  std::ostringstream out;
  std::vector<std::string> header = {"bin", "freq_hz", "channel", "response"};
  if (mel_overlay) header.push_back("mel");
  out << fbkws::csv::join_row(header);
  for (int f = 0; f < f_bins; ++f) {
    const double hz = nyquist * static_cast<double>(f) / static_cast<double>(f_bins - 1);
    for (int c = 0; c < k; ++c) {
      std::vector<std::string> row = {
          std::to_string(f), fbkws::csv::fmt_float(hz), std::to_string(c),
          fbkws::csv::fmt_float(acc[static_cast<size_t>(f) * static_cast<size_t>(k) +
                                    static_cast<size_t>(c)])};
      if (mel_overlay) row.push_back(fbkws::csv::fmt_float(mel.at(f, c)));
      out << fbkws::csv::join_row(row);
    }
  }
  fbkws::csv::write_atomic(out_path, out.str());
  std::printf("export-fb: %zu checkpoint(s), F=%d K=%d -> %s\n", paths.size(), f_bins, k,
              out_path.c_str());
  return 0;
}

template <typename F>
int run_guarded(F&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.kind() == Error::Kind::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fbkws: keyword spotting with a learnable filterbank front-end"};
  app.require_subcommand(1);

  std::string cfg_path, out_path, profile = "paper";
  int jobs = 1;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset + manifest");
  synth->add_option("--config", cfg_path, "synth spec JSON")->required();
  synth->add_option("--out", out_path, "dataset output directory")->required();

  CLI::App* train = app.add_subcommand("train", "train all repetitions of one experiment");
  train->add_option("--config", cfg_path, "experiment JSON")->required();
  train->add_option("--out", out_path, "override the run output directory");
  train->add_option("--jobs", jobs, "parallel seeds")->check(CLI::PositiveNumber);
  train->add_option("--profile", profile, "defaults profile: paper | desk");

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate runs on the test split");
  eval_cmd->add_option("--config", cfg_path, "eval JSON")->required();
  eval_cmd->add_option("--out", out_path, "override the results directory");
  eval_cmd->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);

  std::string variant = "res15-like";
  int k = 8, frames = 98;
  bool as_csv = false;
  CLI::App* count = app.add_subcommand("count", "multiplication counts per 1 s input");
  count->add_option("--variant", variant, "res15-like | res8-narrow-like");
  count->add_option("--k", k, "filterbank channels")->check(CLI::PositiveNumber);
  count->add_option("--frames", frames, "input frames T")->check(CLI::PositiveNumber);
  count->add_flag("--csv", as_csv, "machine-readable output");
  count->add_option("--out", out_path, "write to a file instead of stdout");

  std::string fb_input;
  bool avg_seeds = false, mel_overlay = false;
  CLI::App* export_fb = app.add_subcommand("export-fb", "export g(W) for plotting");
  export_fb->add_option("input", fb_input, "checkpoint file or run directory")->required();
  export_fb->add_option("--out", out_path, "output CSV path")->required();
  export_fb->add_flag("--avg-seeds", avg_seeds, "average g(W) across a run's seeds");
  export_fb->add_flag("--mel-overlay", mel_overlay, "add the Mel-initialized response column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (*synth) return run_guarded([&] { return cmd_synth(cfg_path, out_path); });
  if (*train) return run_guarded([&] { return cmd_train(cfg_path, profile, out_path, jobs); });
  if (*eval_cmd) return run_guarded([&] { return cmd_eval(cfg_path, out_path, jobs); });
  if (*count)
    return run_guarded([&] { return cmd_count(variant, k, frames, as_csv, out_path); });
  if (*export_fb)
    return run_guarded([&] { return cmd_export_fb(fb_input, out_path, avg_seeds, mel_overlay); });
  return 2;
}
