#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbkws/dataset.hpp"
#include "fbkws/frontend.hpp"
#include "fbkws/graph.hpp"
#include "fbkws/model.hpp"

namespace fbkws::trainer {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 64;
  int patience = 5;    // epochs without val-loss improvement before stopping
  int max_epochs = 100;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;  // 0-based; rendered 1-based in record.csv
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct RunRecord {
  uint64_t seed = 0;
  std::vector<EpochStats> epochs;
  int best_epoch = -1;  // 0-based index of the minimum validation loss
  double best_val_loss = 0.0;
  std::string checkpoint_path;  // empty for in-memory runs

  std::string to_csv() const;  // header epoch,train_loss,train_acc,val_loss,val_acc
};

RunRecord record_from_csv(const std::string& path, uint64_t seed);

// Adam with bias correction. Moments are float32 like the parameters; the
// per-element update arithmetic runs in double. State is keyed by bind
// order, which is stable across steps of the same model.
class AdamState {
 public:
  void step(const Graph& g, const frontend::ParamBinds& binds, const TrainConfig& cfg);
  int64_t steps() const { return t_; }

 private:
  std::vector<std::vector<float>> m_, v_;
  int64_t t_ = 0;
};

// Stop once `epoch - best_epoch >= patience`; improvement is a strict
// decrease of validation loss.
struct EarlyStopper {
  int patience = 5;
  double best = 0.0;
  int best_epoch = -1;

  bool observe(int epoch, double val_loss);  // true if this epoch improved
  bool should_stop(int epoch) const { return best_epoch >= 0 && epoch - best_epoch >= patience; }
};

// One optimization run. Trains in place, restores the best-epoch weights
// (parameters and batch-norm statistics) before returning, and, when
// run_dir is non-empty, writes run_dir/{record.csv, checkpoint.fbkws}.
// Streams of `seed`: 1 = model init (inside KwsSystem), 2 = shuffling,
// 3 = dropout masks.
RunRecord train_run(model::KwsSystem& sys, const data::LoadedDataset& ds,
                    const TrainConfig& cfg, uint64_t seed, const std::string& run_dir);

struct RepetitionPlan {
  frontend::FrontendConfig frontend;
  model::ModelConfig model;
  TrainConfig train;
  std::vector<uint64_t> seeds;  // distinct; one system per seed, W re-Mel'd
};

// Runs one independent system per seed under run_root/seed<seed>/. A seed
// whose record.csv and checkpoint.fbkws already exist is loaded, not
// retrained. jobs > 1 trains seeds in parallel threads; results are
// ordered by the seeds list either way.
std::vector<RunRecord> run_repetitions(const RepetitionPlan& plan,
                                       const data::LoadedDataset& ds,
                                       const std::string& run_root, int jobs);

}  // namespace fbkws::trainer
