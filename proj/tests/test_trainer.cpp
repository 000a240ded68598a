#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fbkws/checkpoint.hpp"
#include "fbkws/error.hpp"
#include "fbkws/csv.hpp"
#include "fbkws/trainer.hpp"

using namespace fbkws;
using trainer::AdamState;
using trainer::EarlyStopper;
using trainer::RunRecord;
using trainer::TrainConfig;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path("tmp_" + name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string dir(const std::string& n) const { return (path / n).string(); }
};

// Tiny separable task: class c concentrates power in spectrogram column c.
data::Example make_example(int label, int classes, Rng& rng) {
  data::Example ex;
  ex.label = label;
  ex.spec = Tensor({4, 8});
  for (int t = 0; t < 4; ++t)
    for (int f = 0; f < 8; ++f) {
      double v = rng.uniform(0.01, 0.1);
      if (f == label * 2) v += 2.0;
      ex.spec.at(t, f) = static_cast<float>(v);
    }
  (void)classes;
  return ex;
}

data::LoadedDataset make_dataset(int classes, int train_per_class, int val_per_class,
                                 uint64_t seed) {
  data::LoadedDataset ds;
  for (int c = 0; c < classes; ++c) ds.label_names.push_back("cls" + std::to_string(c));
  Rng rng(seed);
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < train_per_class; ++i) ds.train.push_back(make_example(c, classes, rng));
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < val_per_class; ++i) ds.val.push_back(make_example(c, classes, rng));
  ds.test = ds.val;
  return ds;
}

trainer::RepetitionPlan toy_plan(frontend::Arm arm = frontend::Arm::kLearned) {
  trainer::RepetitionPlan plan;
  plan.frontend.arm = arm;
  plan.frontend.k = 3;
  plan.frontend.bins = 8;
  plan.model.variant = "toy";
  plan.model.channels = 4;
  plan.model.blocks = 1;
  plan.model.dilations = {1};
  plan.model.frames = 4;
  plan.model.k = 3;
  plan.train.batch_size = 4;
  plan.train.lr = 2e-3;
  plan.train.max_epochs = 30;
  plan.train.patience = 5;
  plan.seeds = {1};
  return plan;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.beta2 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.patience = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  TrainConfig{}.validate();
}

TEST_CASE("early stopper follows the patience counting rule") {
  // val losses 3.0 2.5 2.6 2.7 2.8 2.9 3.0 with patience 5: best is the
  // second epoch, stop right after the seventh
  EarlyStopper st{5};
  std::vector<double> losses = {3.0, 2.5, 2.6, 2.7, 2.8, 2.9, 3.0};
  std::vector<bool> improved, stop;
  for (int e = 0; e < static_cast<int>(losses.size()); ++e) {
    improved.push_back(st.observe(e, losses[static_cast<size_t>(e)]));
    stop.push_back(st.should_stop(e));
  }
  CHECK(improved == std::vector<bool>{true, true, false, false, false, false, false});
  CHECK(stop == std::vector<bool>{false, false, false, false, false, false, true});
  CHECK(st.best_epoch == 1);
  CHECK(st.best == 2.5);

  // an exact tie is not an improvement
  EarlyStopper tie{2};
  tie.observe(0, 1.0);
  CHECK(!tie.observe(1, 1.0));
  CHECK(tie.best_epoch == 0);
}

TEST_CASE("adam first step moves a unit-gradient parameter by about lr") {
  TrainConfig cfg;
  Tensor w({1}, 0.5f);
  Graph g;
  frontend::ParamBinds binds;
  NodeId wn = g.param(w);
  binds.emplace_back(&w, wn);
  NodeId loss = g.sum(g.relu(wn));
  g.backward(loss);
  AdamState adam;
  adam.step(g, binds, cfg);
  CHECK(std::abs((0.5 - w[0]) - cfg.lr) < 1e-6);
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam leaves dead parameters untouched") {
  TrainConfig cfg;
  Tensor w({2}, -0.5f);  // relu-dead: gradient exactly zero
  Graph g;
  frontend::ParamBinds binds;
  NodeId wn = g.param(w);
  binds.emplace_back(&w, wn);
  NodeId loss = g.sum(g.relu(wn));
  g.backward(loss);
  AdamState adam;
  adam.step(g, binds, cfg);
  CHECK(w[0] == -0.5f);
  CHECK(w[1] == -0.5f);
}

TEST_CASE("adam rejects a changed parameter list") {
  TrainConfig cfg;
  Tensor w({2}, 0.5f), u({3}, 0.5f);
  AdamState adam;
  {
    Graph g;
    frontend::ParamBinds binds;
    NodeId wn = g.param(w);
    binds.emplace_back(&w, wn);
    g.backward(g.sum(g.relu(wn)));
    adam.step(g, binds, cfg);
  }
  Graph g;
  frontend::ParamBinds binds;
  NodeId wn = g.param(w);
  NodeId un = g.param(u);
  binds.emplace_back(&w, wn);
  binds.emplace_back(&u, un);
  g.backward(g.sum(g.relu(g.add(wn, wn))));
  CHECK_THROWS_AS(adam.step(g, binds, cfg), Error);
}

TEST_CASE("training overfits the separable toy task") {
  auto plan = toy_plan();
  auto ds = make_dataset(3, 30, 3, 42);
  model::KwsSystem sys(plan.frontend, plan.model, 1);
  RunRecord rec = trainer::train_run(sys, ds, plan.train, 1, "");

  REQUIRE(!rec.epochs.empty());
  CHECK(rec.epochs.back().train_acc >= 0.99);
  CHECK(rec.best_val_loss < 0.1 * rec.epochs.front().train_loss);

  // best_val_loss is the minimum of the recorded epochs
  double min_val = rec.epochs.front().val_loss;
  for (const auto& e : rec.epochs) min_val = std::min(min_val, e.val_loss);
  CHECK(rec.best_val_loss == min_val);
  CHECK(rec.epochs[static_cast<size_t>(rec.best_epoch)].val_loss == min_val);

  // the restored system reproduces the best validation loss exactly
  model::KwsSystem fresh(plan.frontend, plan.model, 1);
  RunRecord again = trainer::train_run(fresh, ds, plan.train, 1, "");
  CHECK(again.to_csv() == rec.to_csv());

  // early stopping, when it fires before the cap, stops exactly at patience
  if (static_cast<int>(rec.epochs.size()) < plan.train.max_epochs)
    CHECK(static_cast<int>(rec.epochs.size()) - 1 - rec.best_epoch == plan.train.patience);
}

TEST_CASE("logmel arm keeps W frozen through training") {
  auto plan = toy_plan(frontend::Arm::kLogmel);
  plan.train.max_epochs = 5;
  auto ds = make_dataset(3, 6, 3, 7);
  model::KwsSystem sys(plan.frontend, plan.model, 3);
  Tensor mel_init = sys.front().weights();
  trainer::train_run(sys, ds, plan.train, 3, "");
  for (int64_t i = 0; i < mel_init.numel(); ++i)
    CHECK(sys.front().weights()[i] == mel_init[i]);

  // the learned arm does move W
  auto plan2 = toy_plan(frontend::Arm::kLearned);
  plan2.train.max_epochs = 5;
  model::KwsSystem sys2(plan2.frontend, plan2.model, 3);
  trainer::train_run(sys2, ds, plan2.train, 3, "");
  bool moved = false;
  for (int64_t i = 0; i < mel_init.numel(); ++i)
    moved = moved || sys2.front().weights()[i] != mel_init[i];
  CHECK(moved);
}

TEST_CASE("record csv round trip") {
  TempDir tmp("trainer_record");
  auto plan = toy_plan();
  plan.train.max_epochs = 4;
  auto ds = make_dataset(3, 6, 3, 9);
  model::KwsSystem sys(plan.frontend, plan.model, 2);
  RunRecord rec = trainer::train_run(sys, ds, plan.train, 2, tmp.dir("run"));

  CHECK(fs::exists(tmp.dir("run") + "/record.csv"));
  CHECK(fs::exists(tmp.dir("run") + "/checkpoint.fbkws"));
  RunRecord back = trainer::record_from_csv(tmp.dir("run") + "/record.csv", 2);
  REQUIRE(back.epochs.size() == rec.epochs.size());
  CHECK(back.best_epoch == rec.best_epoch);
  for (size_t i = 0; i < back.epochs.size(); ++i) {
    CHECK(back.epochs[i].epoch == rec.epochs[i].epoch);
    CHECK(back.epochs[i].val_loss ==
          doctest::Approx(rec.epochs[i].val_loss).epsilon(1e-7));
  }
  CHECK_THROWS_AS(trainer::record_from_csv(tmp.dir("run") + "/missing.csv", 2), Error);
}

TEST_CASE("training is deterministic and parallel jobs match serial") {
  TempDir tmp("trainer_jobs");
  auto plan = toy_plan();
  plan.train.max_epochs = 6;
  plan.seeds = {1, 2};
  auto ds = make_dataset(3, 6, 3, 11);

  auto serial = trainer::run_repetitions(plan, ds, tmp.dir("serial"), 1);
  auto parallel = trainer::run_repetitions(plan, ds, tmp.dir("parallel"), 2);
  REQUIRE(serial.size() == 2);
  REQUIRE(parallel.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(serial[i].seed == plan.seeds[i]);
    CHECK(serial[i].to_csv() == parallel[i].to_csv());
  }
  // artifacts are bit-identical, checkpoints included
  for (uint64_t s : plan.seeds) {
    const std::string a = tmp.dir("serial") + "/seed" + std::to_string(s);
    const std::string b = tmp.dir("parallel") + "/seed" + std::to_string(s);
    CHECK(slurp(a + "/record.csv") == slurp(b + "/record.csv"));
    CHECK(slurp(a + "/checkpoint.fbkws") == slurp(b + "/checkpoint.fbkws"));
  }
}

TEST_CASE("finished runs resume from disk instead of retraining") {
  TempDir tmp("trainer_resume");
  auto plan = toy_plan();
  plan.train.max_epochs = 4;
  auto ds = make_dataset(3, 6, 3, 13);

  auto first = trainer::run_repetitions(plan, ds, tmp.dir("runs"), 1);
  const std::string marker = "epoch,train_loss,train_acc,val_loss,val_acc\n1,9,9,9,9\n";
  csv::write_atomic(tmp.dir("runs") + "/seed1/record.csv", marker);
  auto second = trainer::run_repetitions(plan, ds, tmp.dir("runs"), 1);
  REQUIRE(second.size() == 1);
  // the tampered record came back verbatim: nothing was retrained
  CHECK(second[0].epochs.size() == 1);
  CHECK(second[0].epochs[0].val_loss == 9.0);
  CHECK(first[0].epochs.size() > 1);
}

TEST_CASE("trainer validates its inputs") {
  auto plan = toy_plan();
  auto ds = make_dataset(3, 4, 2, 15);
  data::LoadedDataset empty_train = ds;
  empty_train.train.clear();
  model::KwsSystem sys(plan.frontend, plan.model, 1);
  CHECK_THROWS_AS(trainer::train_run(sys, empty_train, plan.train, 1, ""), Error);
  data::LoadedDataset empty_val = ds;
  empty_val.val.clear();
  CHECK_THROWS_AS(trainer::train_run(sys, empty_val, plan.train, 1, ""), Error);

  plan.seeds = {1, 1};
  CHECK_THROWS_AS(trainer::run_repetitions(plan, ds, "", 1), Error);
  plan.seeds = {};
  CHECK_THROWS_AS(trainer::run_repetitions(plan, ds, "", 1), Error);
}
