#include "fbkws/model.hpp"

#include <cmath>

#include "fbkws/csv.hpp"
#include "fbkws/dsp.hpp"
#include "fbkws/error.hpp"

namespace fbkws::model {

ModelConfig ModelConfig::res15_like(int k, int frames) {
  ModelConfig cfg;
  cfg.variant = "res15-like";
  cfg.channels = 45;
  cfg.blocks = 6;
  cfg.dilations.resize(6);
  for (int i = 0; i < 6; ++i) cfg.dilations[static_cast<size_t>(i)] = 1 << (i / 3);
  cfg.frames = frames;
  cfg.k = k;
  return cfg;
}

ModelConfig ModelConfig::res8_narrow_like(int k, int frames) {
  ModelConfig cfg;
  cfg.variant = "res8-narrow-like";
  cfg.channels = 19;
  cfg.blocks = 3;
  cfg.dilations = {1, 1, 1};
  cfg.frames = frames;
  cfg.k = k;
  return cfg;
}

void ModelConfig::validate() const {
  require(channels >= 1, Error::Kind::kConfig, "model channels must be >= 1");
  require(blocks >= 0, Error::Kind::kConfig, "model blocks must be >= 0");
  require(static_cast<int>(dilations.size()) == blocks, Error::Kind::kConfig,
          "dilation schedule length must equal the block count");
  for (int d : dilations)
    require(d >= 1, Error::Kind::kConfig, "dilations must be >= 1");
  require(frames >= 1 && k >= 1, Error::Kind::kConfig, "model input shape must be positive");
  require(classes == kClasses, Error::Kind::kConfig,
          "class count is fixed at " + std::to_string(kClasses));
}

namespace {

Tensor he_conv(int c_out, int c_in, Rng& rng) {
  double stddev = std::sqrt(2.0 / (static_cast<double>(c_in) * 9.0));
  return Tensor::randn({c_out, c_in, 3, 3}, rng, stddev);
}

}  // namespace

CnnBackend::CnnBackend(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.channels;
  conv0_ = he_conv(c, 1, rng);
  for (int i = 0; i < 2 * cfg_.blocks; ++i) convs_.push_back(he_conv(c, c, rng));
  dense_w_ = Tensor::randn({c, cfg_.classes}, rng, std::sqrt(2.0 / c));
  dense_b_ = Tensor({cfg_.classes}, 0.0f);
  const int n_convs = 2 * cfg_.blocks + 1;
  for (int i = 0; i < n_convs; ++i) {
    gammas_.emplace_back(std::vector<int>{c}, 1.0f);
    betas_.emplace_back(std::vector<int>{c}, 0.0f);
    bns_.emplace_back(c);
  }
}

NodeId CnnBackend::forward(Graph& g, NodeId features, bool training,
                           frontend::ParamBinds* binds) {
  const Tensor& f = g.value(features);
  require(f.ndim() == 3, Error::Kind::kShape, "backend expects [B, T, K] features");
  require(f.dim(1) == cfg_.frames && f.dim(2) == cfg_.k, Error::Kind::kShape,
          "backend input " + f.shape_str() + " does not match configured T=" +
              std::to_string(cfg_.frames) + ", K=" + std::to_string(cfg_.k));
  const int b = f.dim(0);

  auto bind = [&](Tensor& t) {
    NodeId id = g.param(t);
    if (binds) binds->emplace_back(&t, id);
    return id;
  };
  int bn_index = 0;
  auto conv_bn_relu = [&](NodeId x, Tensor& kernel, int dil) {
    NodeId c = g.conv2d(x, bind(kernel), dil, dil);
    NodeId ga = bind(gammas_[static_cast<size_t>(bn_index)]);
    NodeId be = bind(betas_[static_cast<size_t>(bn_index)]);
    NodeId n = g.batch_norm(c, ga, be, &bns_[static_cast<size_t>(bn_index)], 1, training);
    ++bn_index;
    return g.relu(n);
  };

  NodeId x = g.reshape(features, {b, 1, cfg_.frames, cfg_.k});
  x = conv_bn_relu(x, conv0_, 1);
  for (int i = 0; i < cfg_.blocks; ++i) {
    int dil = cfg_.dilations[static_cast<size_t>(i)];
    NodeId h = conv_bn_relu(x, convs_[static_cast<size_t>(2 * i)], dil);
    NodeId c2 = g.conv2d(h, bind(convs_[static_cast<size_t>(2 * i + 1)]), dil, dil);
    NodeId ga = bind(gammas_[static_cast<size_t>(bn_index)]);
    NodeId be = bind(betas_[static_cast<size_t>(bn_index)]);
    NodeId n2 = g.batch_norm(c2, ga, be, &bns_[static_cast<size_t>(bn_index)], 1, training);
    ++bn_index;
    x = g.relu(g.add(n2, x));  // identity skip, relu after the sum
  }
  NodeId pooled = g.global_avg_pool(x);
  NodeId logits = g.add_row_vec(g.matmul(pooled, bind(dense_w_)), bind(dense_b_));
  return g.softmax(logits);
}

std::vector<std::pair<std::string, Tensor*>> CnnBackend::parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("conv0", &conv0_);
  for (size_t i = 0; i < convs_.size(); ++i)
    out.emplace_back("conv" + std::to_string(i + 1), &convs_[i]);
  out.emplace_back("dense_w", &dense_w_);
  out.emplace_back("dense_b", &dense_b_);
  for (size_t i = 0; i < gammas_.size(); ++i)
    out.emplace_back("bn" + std::to_string(i) + "_gamma", &gammas_[i]);
  for (size_t i = 0; i < betas_.size(); ++i)
    out.emplace_back("bn" + std::to_string(i) + "_beta", &betas_[i]);
  return out;
}

std::vector<BatchNormState*> CnnBackend::bn_states() {
  std::vector<BatchNormState*> out;
  for (auto& bn : bns_) out.push_back(&bn);
  return out;
}

int decide(const Tensor& posteriors, int row) {
  require(posteriors.ndim() == 2 && row >= 0 && row < posteriors.dim(0),
          Error::Kind::kContract, "decide: bad posterior row");
  int best = 0;
  for (int j = 1; j < posteriors.dim(1); ++j)
    if (posteriors.at(row, j) > posteriors.at(row, best)) best = j;
  return best;
}

std::vector<int> decide_batch(const Tensor& posteriors) {
  std::vector<int> out(static_cast<size_t>(posteriors.dim(0)));
  for (int i = 0; i < posteriors.dim(0); ++i) out[static_cast<size_t>(i)] = decide(posteriors, i);
  return out;
}

MultReport count_multiplications(const ModelConfig& cfg) {
  cfg.validate();
  MultReport report;
  report.k = cfg.k;
  const int64_t hw = static_cast<int64_t>(cfg.frames) * cfg.k;

  auto conv_count = [&](int c_in, int c_out) {
    return hw * c_out * (9LL * c_in);
  };
  report.layers.push_back({"conv0", conv_count(1, cfg.channels)});
  for (int i = 0; i < 2 * cfg.blocks; ++i)
    report.layers.push_back(
        {"conv" + std::to_string(i + 1), conv_count(cfg.channels, cfg.channels)});
  report.layers.push_back({"dense", static_cast<int64_t>(cfg.channels) * cfg.classes});

  for (const auto& l : report.layers) report.total += l.count;
  report.filterbank = static_cast<int64_t>(cfg.frames) * dsp::kBins * cfg.k;
  return report;
}

std::string MultReport::to_csv() const {
  std::string out = "layer,multiplications\n";
  for (const auto& l : layers) out += csv::join_row({l.name, std::to_string(l.count)});
  out += csv::join_row({"total", std::to_string(total)});
  out += csv::join_row({"filterbank_matmul", std::to_string(filterbank)});
  return out;
}

KwsSystem::KwsSystem(const frontend::FrontendConfig& fc, const ModelConfig& mc, uint64_t seed)
    : front_(fc), init_rng_(Rng(seed).fork(1)), back_(mc, init_rng_) {
  require(fc.k == mc.k, Error::Kind::kConfig,
          "frontend K and model K must match: " + std::to_string(fc.k) + " vs " +
              std::to_string(mc.k));
}

NodeId KwsSystem::forward(Graph& g, const Tensor& batch, bool training, Rng* dropout_rng,
                          frontend::ParamBinds* binds) {
  NodeId feat = front_.forward(g, batch, training, dropout_rng, binds);
  return back_.forward(g, feat, training, binds);
}

}  // namespace fbkws::model
