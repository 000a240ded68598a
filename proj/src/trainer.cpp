#include "fbkws/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <filesystem>
#include <mutex>
#include <numeric>
#include <thread>
#include <utility>

#include "fbkws/checkpoint.hpp"
#include "fbkws/csv.hpp"
#include "fbkws/error.hpp"

namespace fbkws::trainer {

namespace {

// Every float that defines the system state: parameters plus batch-norm
// running statistics. Used to snapshot/restore the best epoch in memory.
std::vector<std::pair<float*, int64_t>> state_views(model::KwsSystem& sys) {
  std::vector<std::pair<float*, int64_t>> views;
  auto add_tensor = [&](Tensor& t) { views.emplace_back(t.data(), t.numel()); };
  auto add_vec = [&](std::vector<float>& v) {
    views.emplace_back(v.data(), static_cast<int64_t>(v.size()));
  };
  add_tensor(sys.front().weights());
  add_tensor(sys.front().gamma());
  add_tensor(sys.front().beta());
  add_vec(sys.front().bn_state().running_mean);
  add_vec(sys.front().bn_state().running_var);
  for (auto& [name, t] : sys.back().parameters()) add_tensor(*t);
  for (auto* bn : sys.back().bn_states()) {
    add_vec(bn->running_mean);
    add_vec(bn->running_var);
  }
  return views;
}

std::vector<std::vector<float>> snapshot(const std::vector<std::pair<float*, int64_t>>& views) {
  std::vector<std::vector<float>> out;
  out.reserve(views.size());
  for (auto& [ptr, n] : views) out.emplace_back(ptr, ptr + n);
  return out;
}

void restore(const std::vector<std::pair<float*, int64_t>>& views,
             const std::vector<std::vector<float>>& saved) {
  require(saved.size() == views.size(), Error::Kind::kContract, "state snapshot size mismatch");
  for (size_t i = 0; i < views.size(); ++i)
    std::memcpy(views[i].first, saved[i].data(), saved[i].size() * sizeof(float));
}

struct Batch {
  Tensor specs;
  std::vector<int> labels;
};

Batch gather(const std::vector<data::Example>& pool, const std::vector<int>& order,
             int start, int count) {
  const Tensor& first = pool[static_cast<size_t>(order[static_cast<size_t>(start)])].spec;
  Batch b{Tensor({count, first.dim(0), first.dim(1)}), {}};
  b.labels.resize(static_cast<size_t>(count));
  const int64_t stride = first.numel();
  for (int i = 0; i < count; ++i) {
    const auto& ex = pool[static_cast<size_t>(order[static_cast<size_t>(start + i)])];
    require(ex.spec.numel() == stride, Error::Kind::kShape,
            "examples disagree on spectrogram shape");
    std::memcpy(b.specs.data() + i * stride, ex.spec.data(),
                static_cast<size_t>(stride) * sizeof(float));
    b.labels[static_cast<size_t>(i)] = ex.label;
  }
  return b;
}

struct SplitMetrics {
  double loss = 0.0;
  double acc = 0.0;
};

SplitMetrics evaluate(model::KwsSystem& sys, const std::vector<data::Example>& pool,
                      int batch_size) {
  const int n = static_cast<int>(pool.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  double loss_sum = 0.0;
  int correct = 0;
  for (int start = 0; start < n; start += batch_size) {
    const int bs = std::min(batch_size, n - start);
    Batch b = gather(pool, order, start, bs);
    Graph g;
    NodeId out = sys.forward(g, b.specs, false, nullptr, nullptr);
    NodeId loss = g.cross_entropy(out, b.labels);
    loss_sum += static_cast<double>(g.value(loss)[0]) * bs;
    auto dec = model::decide_batch(g.value(out));
    for (int i = 0; i < bs; ++i)
      correct += dec[static_cast<size_t>(i)] == b.labels[static_cast<size_t>(i)] ? 1 : 0;
  }
  return {loss_sum / n, static_cast<double>(correct) / n};
}

}  // namespace

void TrainConfig::validate() const {
  require(lr > 0.0, Error::Kind::kConfig, "learning rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, Error::Kind::kConfig,
          "Adam betas must lie in [0, 1)");
  require(eps > 0.0, Error::Kind::kConfig, "Adam epsilon must be positive");
  require(batch_size >= 1, Error::Kind::kConfig, "batch size must be >= 1");
  require(patience >= 1, Error::Kind::kConfig, "patience must be >= 1");
  require(max_epochs >= 1, Error::Kind::kConfig, "max epochs must be >= 1");
}

std::string RunRecord::to_csv() const {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : epochs)
    out += csv::join_row({std::to_string(e.epoch + 1), csv::fmt_float(e.train_loss),
                          csv::fmt_float(e.train_acc), csv::fmt_float(e.val_loss),
                          csv::fmt_float(e.val_acc)});
  return out;
}

RunRecord record_from_csv(const std::string& path, uint64_t seed) {
  auto rows = csv::read(path);
  require(!rows.empty() && rows[0] ==
              std::vector<std::string>{"epoch", "train_loss", "train_acc", "val_loss", "val_acc"},
          Error::Kind::kFormat, "record csv '" + path + "' has an unexpected header");
  RunRecord rec;
  rec.seed = seed;
  for (size_t i = 1; i < rows.size(); ++i) {
    require(rows[i].size() == 5, Error::Kind::kFormat,
            "record csv '" + path + "' row " + std::to_string(i) + " is malformed");
    EpochStats e;
    try {
      e.epoch = std::stoi(rows[i][0]) - 1;
      e.train_loss = std::stod(rows[i][1]);
      e.train_acc = std::stod(rows[i][2]);
      e.val_loss = std::stod(rows[i][3]);
      e.val_acc = std::stod(rows[i][4]);
    } catch (const std::exception&) {
      throw Error(Error::Kind::kFormat,
                  "record csv '" + path + "' row " + std::to_string(i) + " is not numeric");
    }
    rec.epochs.push_back(e);
  }
  require(!rec.epochs.empty(), Error::Kind::kFormat, "record csv '" + path + "' has no epochs");
  for (size_t i = 0; i < rec.epochs.size(); ++i)
    if (rec.best_epoch < 0 || rec.epochs[i].val_loss < rec.best_val_loss) {
      rec.best_epoch = static_cast<int>(i);
      rec.best_val_loss = rec.epochs[i].val_loss;
    }
  return rec;
}

void AdamState::step(const Graph& g, const frontend::ParamBinds& binds,
                     const TrainConfig& cfg) {
  if (t_ == 0) {
    m_.resize(binds.size());
    v_.resize(binds.size());
    for (size_t i = 0; i < binds.size(); ++i) {
      m_[i].assign(static_cast<size_t>(binds[i].first->numel()), 0.0f);
      v_[i].assign(static_cast<size_t>(binds[i].first->numel()), 0.0f);
    }
  }
  require(binds.size() == m_.size(), Error::Kind::kContract,
          "optimizer sees a different parameter list than step 1");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < binds.size(); ++i) {
    Tensor* param = binds[i].first;
    const Tensor& grad = g.grad(binds[i].second);
    require(grad.numel() == param->numel() &&
                static_cast<size_t>(param->numel()) == m_[i].size(),
            Error::Kind::kContract, "optimizer moment shape mismatch");
    float* p = param->data();
    for (int64_t j = 0; j < grad.numel(); ++j) {
      const double gval = grad[j];
      const double m = cfg.beta1 * m_[i][static_cast<size_t>(j)] + (1.0 - cfg.beta1) * gval;
      const double v =
          cfg.beta2 * v_[i][static_cast<size_t>(j)] + (1.0 - cfg.beta2) * gval * gval;
      m_[i][static_cast<size_t>(j)] = static_cast<float>(m);
      v_[i][static_cast<size_t>(j)] = static_cast<float>(v);
      p[j] = static_cast<float>(p[j] - cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps));
    }
    param->check_finite("adam-updated parameter");
  }
}

bool EarlyStopper::observe(int epoch, double val_loss) {
  if (best_epoch < 0 || val_loss < best) {
    best = val_loss;
    best_epoch = epoch;
    return true;
  }
  return false;
}

RunRecord train_run(model::KwsSystem& sys, const data::LoadedDataset& ds,
                    const TrainConfig& cfg, uint64_t seed, const std::string& run_dir) {
  cfg.validate();
  require(!ds.train.empty(), Error::Kind::kData, "training split is empty");
  require(!ds.val.empty(), Error::Kind::kData, "validation split is empty");

  Rng shuffle_rng = Rng(seed).fork(2);
  Rng dropout_rng = Rng(seed).fork(3);
  AdamState adam;
  EarlyStopper stopper{cfg.patience};
  RunRecord rec;
  rec.seed = seed;

  auto views = state_views(sys);
  std::vector<std::vector<float>> best_state;

  const int n = static_cast<int>(ds.train.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<uint64_t>(i + 1)));
      std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      Batch b = gather(ds.train, order, start, bs);
      Graph g;
      frontend::ParamBinds binds;
      NodeId out = sys.forward(g, b.specs, true, &dropout_rng, &binds);
      NodeId loss = g.cross_entropy(out, b.labels);
      g.backward(loss);
      adam.step(g, binds, cfg);
    }
    // both splits measured in inference mode at epoch end, so the recorded
    // metrics reflect the deployable model, not mid-epoch batch statistics
    SplitMetrics train_m = evaluate(sys, ds.train, cfg.batch_size);
    SplitMetrics val = evaluate(sys, ds.val, cfg.batch_size);
    EpochStats es;
    es.epoch = epoch;
    es.train_loss = train_m.loss;
    es.train_acc = train_m.acc;
    es.val_loss = val.loss;
    es.val_acc = val.acc;
    rec.epochs.push_back(es);

    if (stopper.observe(epoch, val.loss)) best_state = snapshot(views);
    if (stopper.should_stop(epoch)) break;
  }

  restore(views, best_state);
  rec.best_epoch = stopper.best_epoch;
  rec.best_val_loss = stopper.best;

  if (!run_dir.empty()) {
    rec.checkpoint_path = run_dir + "/checkpoint.fbkws";
    checkpoint::save(rec.checkpoint_path, sys);
    csv::write_atomic(run_dir + "/record.csv", rec.to_csv());
  }
  return rec;
}

std::vector<RunRecord> run_repetitions(const RepetitionPlan& plan,
                                       const data::LoadedDataset& ds,
                                       const std::string& run_root, int jobs) {
  require(!plan.seeds.empty(), Error::Kind::kConfig, "repetition plan needs at least one seed");
  for (size_t i = 0; i < plan.seeds.size(); ++i)
    for (size_t j = i + 1; j < plan.seeds.size(); ++j)
      require(plan.seeds[i] != plan.seeds[j], Error::Kind::kConfig,
              "repetition seeds must be distinct");
  require(jobs >= 1, Error::Kind::kConfig, "jobs must be >= 1");

  namespace fs = std::filesystem;
  std::vector<RunRecord> records(plan.seeds.size());

  auto run_one = [&](size_t idx) {
    const uint64_t seed = plan.seeds[idx];
    const std::string dir = run_root + "/seed" + std::to_string(seed);
    const std::string record_path = dir + "/record.csv";
    const std::string ckpt_path = dir + "/checkpoint.fbkws";
    if (fs::exists(record_path) && fs::exists(ckpt_path)) {
      (void)checkpoint::read_meta(ckpt_path);  // reject corrupt leftovers
      RunRecord rec = record_from_csv(record_path, seed);
      rec.checkpoint_path = ckpt_path;
      records[idx] = std::move(rec);
      return;
    }
    model::KwsSystem sys(plan.frontend, plan.model, seed);
    records[idx] = train_run(sys, ds, plan.train, seed, dir);
  };

  if (jobs <= 1 || plan.seeds.size() <= 1) {
    for (size_t i = 0; i < plan.seeds.size(); ++i) run_one(i);
    return records;
  }

  std::mutex mu;
  std::exception_ptr first_error;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t idx;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (first_error || next >= plan.seeds.size()) return;
        idx = next++;
      }
      try {
        run_one(idx);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const size_t n_threads = std::min(static_cast<size_t>(jobs), plan.seeds.size());
  for (size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return records;
}

}  // namespace fbkws::trainer
