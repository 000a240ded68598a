#pragma once

#include <cstdint>
#include <vector>

#include "fbkws/rng.hpp"
#include "fbkws/tensor.hpp"

namespace fbkws {

// Per-channel batch normalization state that lives outside any single graph.
// Running statistics are updated by training-mode forwards and are the only
// statistics consulted in inference mode.
struct BatchNormState {
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float momentum = 0.9f;
  float eps = 1e-5f;

  BatchNormState() = default;
  explicit BatchNormState(int channels)
      : running_mean(channels, 0.0f), running_var(channels, 1.0f) {}
  int channels() const { return static_cast<int>(running_mean.size()); }
};

enum class DropoutMode { kElement, kChannel };

using NodeId = int;

enum class Op : uint8_t {
  kLeaf,
  kMatmul,
  kRelu,
  kConv2d,
  kAdd,
  kAddRowVec,
  kLogFloor,
  kBatchNorm,
  kDropout,
  kReshape,
  kGlobalAvgPool,
  kSoftmax,
  kCrossEntropy,
  kSum,
};

struct Node {
  Op op = Op::kLeaf;
  std::vector<NodeId> in;
  Tensor val;
  Tensor grad;  // allocated by backward()
  bool needs_grad = false;
  bool is_param = false;

  // op-specific extras
  int iarg0 = 0;  // conv: dil_h; batch norm / dropout: channel axis
  int iarg1 = 0;  // conv: dil_w
  float farg0 = 0.0f;          // dropout: 1/(1-rate)
  bool flag = false;           // batch norm: training mode
  Tensor aux;                  // dropout mask; batch norm: normalized x
  std::vector<float> aux_vec;  // batch norm: gamma*inv_std per channel
  std::vector<int> labels;     // cross entropy
  BatchNormState* bn = nullptr;
};

// Define-by-run reverse-mode tape. Values are computed eagerly when an op is
// recorded; node order is the topological order. Every forward output is
// checked finite. backward() recomputes gradients from scratch each call.
class Graph {
 public:
  NodeId leaf(Tensor t);   // constant input
  NodeId param(Tensor t);  // learnable leaf

  NodeId matmul(NodeId a, NodeId b);
  NodeId relu(NodeId x);
  NodeId conv2d(NodeId x, NodeId kernel, int dil_h, int dil_w);
  NodeId add(NodeId a, NodeId b);
  NodeId add_row_vec(NodeId x, NodeId v);
  NodeId log_floor(NodeId x);
  NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState* state,
                    int channel_axis, bool training);
  NodeId dropout(NodeId x, float rate, DropoutMode mode, Rng& rng);
  NodeId reshape(NodeId x, std::vector<int> shape);
  NodeId global_avg_pool(NodeId x);  // B x C x H x W -> B x C
  NodeId softmax(NodeId x);          // row-wise on B x C
  NodeId cross_entropy(NodeId probs, std::vector<int> labels);
  NodeId sum(NodeId x);

  const Tensor& value(NodeId id) const { return nodes_[id].val; }
  const Tensor& grad(NodeId id) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse pass from a scalar loss node; each node visited exactly once.
  void backward(NodeId loss);

 private:
  NodeId push(Node n);
  Node& at(NodeId id) { return nodes_[id]; }
  void backward_node(Node& n);

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

// Floor applied before every log in the pipeline; keeps features >= -50.
extern const float kLogFloorEta;

}  // namespace fbkws
