#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fbkws/graph.hpp"
#include "fbkws/tensor.hpp"

namespace fbkws::frontend {

// Experiment arms: fixed Mel filterbank, learned filterbank, learned with
// dropout regularization. All three share one forward code path; the arms
// differ only in whether W is trainable and whether dropout is active.
enum class Arm { kLogmel, kLearned, kLearnedDropout };

Arm arm_from_string(const std::string& s);
std::string arm_to_string(Arm arm);

struct FrontendConfig {
  Arm arm = Arm::kLearned;
  int k = 8;                  // filterbank channels
  int bins = 241;             // F
  float dropout_rate = 0.4f;  // used by the dropout arm only
  DropoutMode dropout_mode = DropoutMode::kElement;

  void validate() const;
};

// Bindings between persistent parameter storage and the param nodes of the
// current step's graph; the optimizer walks these after backward().
using ParamBinds = std::vector<std::pair<Tensor*, NodeId>>;

// Filterbank layer: Y = X * max(W, 0), optional inverted dropout on Y,
// log floor at e^-50, then per-channel batch norm over (batch x time).
class FilterbankFrontend {
 public:
  explicit FilterbankFrontend(const FrontendConfig& cfg);  // W = Mel init

  // batch: [B, T, F] power spectrograms. Returns a [B, T, K] feature node.
  // dropout_rng must be non-null when the dropout arm trains.
  NodeId forward(Graph& g, const Tensor& batch, bool training, Rng* dropout_rng,
                 ParamBinds* binds);

  const FrontendConfig& config() const { return cfg_; }
  Tensor& weights() { return w_; }
  const Tensor& weights() const { return w_; }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  BatchNormState& bn_state() { return bn_; }
  const BatchNormState& bn_state() const { return bn_; }

  // CSV with header bin_hz,ch0..ch{K-1}; raw W values (pre-ReLU).
  void export_weights_csv(const std::string& path) const;
  void import_weights_csv(const std::string& path);

 private:
  FrontendConfig cfg_;
  Tensor w_;      // F x K
  Tensor gamma_;  // K
  Tensor beta_;   // K
  BatchNormState bn_;
};

}  // namespace fbkws::frontend
