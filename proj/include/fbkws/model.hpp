#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbkws/frontend.hpp"
#include "fbkws/graph.hpp"
#include "fbkws/tensor.hpp"

namespace fbkws::model {

inline constexpr int kClasses = 11;  // 10 keywords + filler

struct ModelConfig {
  std::string variant = "res15-like";
  int channels = 45;           // C feature maps
  int blocks = 6;              // R residual blocks
  std::vector<int> dilations;  // per block, applied to both convs
  int frames = 98;             // T
  int k = 8;                   // feature channels entering the model
  int classes = kClasses;

  static ModelConfig res15_like(int k, int frames = 98);
  static ModelConfig res8_narrow_like(int k, int frames = 98);
  void validate() const;
};

// Residual CNN: initial bias-free 3x3 conv (1 -> C), R blocks of two 3x3
// bias-free convs with identity skip (conv -> bn -> relu; add before the
// final relu), global average pooling, dense C -> 11, softmax in-model.
class CnnBackend {
 public:
  CnnBackend(const ModelConfig& cfg, Rng& rng);  // He-initialized

  // features: [B, T, K] node; returns [B, classes] probabilities.
  NodeId forward(Graph& g, NodeId features, bool training, frontend::ParamBinds* binds);

  const ModelConfig& config() const { return cfg_; }
  // Stable order: conv0, block convs, dense w/b, then all gammas and betas.
  std::vector<std::pair<std::string, Tensor*>> parameters();
  std::vector<BatchNormState*> bn_states();

 private:
  ModelConfig cfg_;
  Tensor conv0_;               // C x 1 x 3 x 3
  std::vector<Tensor> convs_;  // 2R tensors, C x C x 3 x 3
  Tensor dense_w_;             // C x classes
  Tensor dense_b_;             // classes
  std::vector<Tensor> gammas_, betas_;  // one per conv (2R + 1)
  std::vector<BatchNormState> bns_;
};

// Argmax with ties broken toward the lowest class id.
int decide(const Tensor& posteriors, int row);
std::vector<int> decide_batch(const Tensor& posteriors);

struct MultReport {
  struct Layer {
    std::string name;
    int64_t count = 0;
  };
  std::vector<Layer> layers;
  int64_t total = 0;       // acoustic model only
  int64_t filterbank = 0;  // T*F*K, reported separately from the total
  int k = 0;

  std::string to_csv() const;
};

// Multiplications per 1 s input: each conv T*K*C_out*(9*C_in), dense
// C*classes; batch norm, pooling and softmax are excluded.
MultReport count_multiplications(const ModelConfig& cfg);

// Front-end plus back-end under one seed: model init uses stream 1 of the
// run seed so repetitions differ only via their base seed.
class KwsSystem {
 public:
  KwsSystem(const frontend::FrontendConfig& fc, const ModelConfig& mc, uint64_t seed);

  // batch: [B, T, F] spectrograms. Returns [B, classes] probabilities.
  NodeId forward(Graph& g, const Tensor& batch, bool training, Rng* dropout_rng,
                 frontend::ParamBinds* binds);

  frontend::FilterbankFrontend& front() { return front_; }
  CnnBackend& back() { return back_; }
  const frontend::FilterbankFrontend& front() const { return front_; }

 private:
  frontend::FilterbankFrontend front_;
  Rng init_rng_;  // must precede back_ so the member initializer can use it
  CnnBackend back_;
};

}  // namespace fbkws::model
