#include "fbkws/graph.hpp"

#include <cmath>
#include <cstring>

#include "fbkws/error.hpp"
#include "fbkws/kernels.hpp"

namespace fbkws {

const float kLogFloorEta = static_cast<float>(std::exp(-50.0));  // 1.9287e-22

namespace {

void check_2d(const Tensor& t, const char* what) {
  require(t.ndim() == 2, Error::Kind::kShape, std::string(what) + " expects a 2-D tensor");
}

// (outer, channels, inner) decomposition around `axis` for channel-wise ops.
struct AxisSplit {
  int64_t outer = 1;
  int channels = 1;
  int64_t inner = 1;
};

AxisSplit split_axis(const Tensor& t, int axis) {
  require(axis >= 0 && axis < t.ndim(), Error::Kind::kShape, "channel axis out of range");
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= t.dim(i);
  s.channels = t.dim(axis);
  for (int i = axis + 1; i < t.ndim(); ++i) s.inner *= t.dim(i);
  return s;
}

}  // namespace

NodeId Graph::push(Node n) {
  for (NodeId i : n.in) n.needs_grad = n.needs_grad || nodes_[i].needs_grad;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::leaf(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(t);
  return push(std::move(n));
}

NodeId Graph::param(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(t);
  n.needs_grad = true;
  n.is_param = true;
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  check_2d(ta, "matmul lhs");
  check_2d(tb, "matmul rhs");
  require(ta.dim(1) == tb.dim(0), Error::Kind::kShape,
          "matmul inner dimensions differ: " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.op = Op::kMatmul;
  n.in = {a, b};
  n.val = Tensor({ta.dim(0), tb.dim(1)});
  kernels::matmul(ta.data(), tb.data(), n.val.data(), ta.dim(0), ta.dim(1), tb.dim(1),
                  false, false, false);
  n.val.check_finite("matmul");
  return push(std::move(n));
}

NodeId Graph::relu(NodeId x) {
  const Tensor& tx = nodes_[x].val;
  Node n;
  n.op = Op::kRelu;
  n.in = {x};
  n.val = Tensor(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) n.val[i] = tx[i] > 0.0f ? tx[i] : 0.0f;
  return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId kernel, int dil_h, int dil_w) {
  const Tensor& tx = nodes_[x].val;
  const Tensor& tk = nodes_[kernel].val;
  require(dil_h >= 1 && dil_w >= 1, Error::Kind::kConfig, "conv2d dilation must be >= 1");
  require(tx.ndim() == 4, Error::Kind::kShape, "conv2d input must be BxCxHxW");
  require(tk.ndim() == 4, Error::Kind::kShape, "conv2d kernel must be OxIxKhxKw");
  require(tk.dim(2) == tk.dim(3) && tk.dim(2) % 2 == 1, Error::Kind::kConfig,
          "conv2d kernel must be square with odd size");
  require(tk.dim(1) == tx.dim(1), Error::Kind::kShape,
          "conv2d channel mismatch: input " + tx.shape_str() + " kernel " + tk.shape_str());
  int ks = tk.dim(2);
  int pad_h = dil_h * (ks - 1) / 2, pad_w = dil_w * (ks - 1) / 2;
  require(dil_h * (ks - 1) + 1 <= tx.dim(2) + 2 * pad_h &&
              dil_w * (ks - 1) + 1 <= tx.dim(3) + 2 * pad_w,
          Error::Kind::kShape, "dilated kernel extent exceeds padded input");

  Node n;
  n.op = Op::kConv2d;
  n.in = {x, kernel};
  n.iarg0 = dil_h;
  n.iarg1 = dil_w;
  n.val = Tensor({tx.dim(0), tk.dim(0), tx.dim(2), tx.dim(3)});
  kernels::Conv2dShape s{tx.dim(0), tx.dim(1), tk.dim(0), tx.dim(2), tx.dim(3),
                         ks,        dil_h,     dil_w};
  kernels::conv2d_forward(s, tx.data(), tk.data(), n.val.data());
  n.val.check_finite("conv2d");
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = nodes_[a].val;
  const Tensor& tb = nodes_[b].val;
  require(ta.same_shape(tb), Error::Kind::kShape,
          "add shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.in = {a, b};
  n.val = Tensor(ta.shape());
  for (int64_t i = 0; i < ta.numel(); ++i) n.val[i] = ta[i] + tb[i];
  n.val.check_finite("add");
  return push(std::move(n));
}

NodeId Graph::add_row_vec(NodeId x, NodeId v) {
  const Tensor& tx = nodes_[x].val;
  const Tensor& tv = nodes_[v].val;
  check_2d(tx, "add_row_vec lhs");
  require(tv.ndim() == 1 && tv.dim(0) == tx.dim(1), Error::Kind::kShape,
          "add_row_vec vector length mismatch: " + tx.shape_str() + " vs " + tv.shape_str());
  Node n;
  n.op = Op::kAddRowVec;
  n.in = {x, v};
  n.val = Tensor(tx.shape());
  for (int i = 0; i < tx.dim(0); ++i)
    for (int j = 0; j < tx.dim(1); ++j) n.val.at(i, j) = tx.at(i, j) + tv[j];
  n.val.check_finite("add_row_vec");
  return push(std::move(n));
}

NodeId Graph::log_floor(NodeId x) {
  const Tensor& tx = nodes_[x].val;
  Node n;
  n.op = Op::kLogFloor;
  n.in = {x};
  n.val = Tensor(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) {
    require(tx[i] >= 0.0f, Error::Kind::kContract, "log_floor input must be nonnegative");
    n.val[i] = std::log(std::max(tx[i], kLogFloorEta));
  }
  return push(std::move(n));
}

NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState* state,
                         int channel_axis, bool training) {
  const Tensor& tx = nodes_[x].val;
  AxisSplit s = split_axis(tx, channel_axis);
  const Tensor& tg = nodes_[gamma].val;
  const Tensor& tb = nodes_[beta].val;
  require(state != nullptr && state->channels() == s.channels, Error::Kind::kShape,
          "batch_norm state channel count mismatch");
  require(tg.numel() == s.channels && tb.numel() == s.channels, Error::Kind::kShape,
          "batch_norm gamma/beta length must equal channel count");

  Node n;
  n.op = Op::kBatchNorm;
  n.in = {x, gamma, beta};
  n.iarg0 = channel_axis;
  n.flag = training;
  n.bn = state;
  n.val = Tensor(tx.shape());
  n.aux = Tensor(tx.shape());  // normalized input, saved for backward
  n.aux_vec.assign(s.channels, 0.0f);

  const int64_t m = s.outer * s.inner;
  for (int c = 0; c < s.channels; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0, sq = 0.0;
      for (int64_t o = 0; o < s.outer; ++o) {
        const float* base = tx.data() + (o * s.channels + c) * s.inner;
        for (int64_t i = 0; i < s.inner; ++i) {
          sum += base[i];
          sq += static_cast<double>(base[i]) * base[i];
        }
      }
      mean = sum / static_cast<double>(m);
      var = sq / static_cast<double>(m) - mean * mean;
      if (var < 0.0) var = 0.0;  // guard fp cancellation
      state->running_mean[c] = state->momentum * state->running_mean[c] +
                               (1.0f - state->momentum) * static_cast<float>(mean);
      state->running_var[c] = state->momentum * state->running_var[c] +
                              (1.0f - state->momentum) * static_cast<float>(var);
    } else {
      mean = state->running_mean[c];
      var = state->running_var[c];
    }
    double inv_std = 1.0 / std::sqrt(var + state->eps);
    n.aux_vec[c] = static_cast<float>(inv_std);
    for (int64_t o = 0; o < s.outer; ++o) {
      const float* src = tx.data() + (o * s.channels + c) * s.inner;
      float* xh = n.aux.data() + (o * s.channels + c) * s.inner;
      float* dst = n.val.data() + (o * s.channels + c) * s.inner;
      for (int64_t i = 0; i < s.inner; ++i) {
        xh[i] = static_cast<float>((src[i] - mean) * inv_std);
        dst[i] = tg[c] * xh[i] + tb[c];
      }
    }
  }
  n.val.check_finite("batch_norm");
  return push(std::move(n));
}

NodeId Graph::dropout(NodeId x, float rate, DropoutMode mode, Rng& rng) {
  require(rate >= 0.0f && rate < 1.0f, Error::Kind::kConfig, "dropout rate must be in [0,1)");
  const Tensor& tx = nodes_[x].val;
  Node n;
  n.op = Op::kDropout;
  n.in = {x};
  n.farg0 = 1.0f / (1.0f - rate);
  n.aux = Tensor(tx.shape());
  if (mode == DropoutMode::kElement) {
    for (int64_t i = 0; i < tx.numel(); ++i)
      n.aux[i] = rng.bernoulli(rate) ? 0.0f : 1.0f;
  } else {
    // whole-channel masks: one draw per (batch item, channel) of B x T x K
    require(tx.ndim() == 3, Error::Kind::kShape, "channel dropout expects B x T x K input");
    int B = tx.dim(0), T = tx.dim(1), K = tx.dim(2);
    for (int b = 0; b < B; ++b) {
      for (int k = 0; k < K; ++k) {
        float keep = rng.bernoulli(rate) ? 0.0f : 1.0f;
        for (int t = 0; t < T; ++t) n.aux.at(b, t, k) = keep;
      }
    }
  }
  n.val = Tensor(tx.shape());
  for (int64_t i = 0; i < tx.numel(); ++i) n.val[i] = tx[i] * n.aux[i] * n.farg0;
  n.val.check_finite("dropout");
  return push(std::move(n));
}

NodeId Graph::reshape(NodeId x, std::vector<int> shape) {
  const Tensor& tx = nodes_[x].val;
  require(Tensor::numel_of(shape) == tx.numel(), Error::Kind::kShape,
          "reshape element count mismatch for " + tx.shape_str());
  Node n;
  n.op = Op::kReshape;
  n.in = {x};
  n.val = Tensor(std::move(shape), tx.vec());
  return push(std::move(n));
}

NodeId Graph::global_avg_pool(NodeId x) {
  const Tensor& tx = nodes_[x].val;
  require(tx.ndim() == 4, Error::Kind::kShape, "global_avg_pool expects B x C x H x W");
  int B = tx.dim(0), C = tx.dim(1);
  int64_t hw = static_cast<int64_t>(tx.dim(2)) * tx.dim(3);
  Node n;
  n.op = Op::kGlobalAvgPool;
  n.in = {x};
  n.val = Tensor({B, C});
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const float* base = tx.data() + (static_cast<int64_t>(b) * C + c) * hw;
      double acc = 0.0;
      for (int64_t i = 0; i < hw; ++i) acc += base[i];
      n.val.at(b, c) = static_cast<float>(acc / static_cast<double>(hw));
    }
  }
  n.val.check_finite("global_avg_pool");
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId x) {
  const Tensor& tx = nodes_[x].val;
  check_2d(tx, "softmax");
  Node n;
  n.op = Op::kSoftmax;
  n.in = {x};
  n.val = Tensor(tx.shape());
  for (int i = 0; i < tx.dim(0); ++i) {
    float mx = tx.at(i, 0);
    for (int j = 1; j < tx.dim(1); ++j) mx = std::max(mx, tx.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < tx.dim(1); ++j) {
      float e = std::exp(tx.at(i, j) - mx);
      n.val.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < tx.dim(1); ++j)
      n.val.at(i, j) = static_cast<float>(n.val.at(i, j) / sum);
  }
  n.val.check_finite("softmax");
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId probs, std::vector<int> labels) {
  const Tensor& tp = nodes_[probs].val;
  check_2d(tp, "cross_entropy");
  require(static_cast<int>(labels.size()) == tp.dim(0), Error::Kind::kShape,
          "cross_entropy needs one label per row");
  for (int lab : labels)
    require(lab >= 0 && lab < tp.dim(1), Error::Kind::kContract,
            "cross_entropy label out of range");
  Node n;
  n.op = Op::kCrossEntropy;
  n.in = {probs};
  n.labels = std::move(labels);
  double acc = 0.0;
  for (int b = 0; b < tp.dim(0); ++b)
    acc -= std::log(std::max(static_cast<double>(tp.at(b, n.labels[b])),
                             static_cast<double>(kLogFloorEta)));
  n.val = Tensor({1}, {static_cast<float>(acc / tp.dim(0))});
  n.val.check_finite("cross_entropy");
  return push(std::move(n));
}

NodeId Graph::sum(NodeId x) {
  const Tensor& tx = nodes_[x].val;
  Node n;
  n.op = Op::kSum;
  n.in = {x};
  double acc = 0.0;
  for (int64_t i = 0; i < tx.numel(); ++i) acc += tx[i];
  n.val = Tensor({1}, {static_cast<float>(acc)});
  n.val.check_finite("sum");
  return push(std::move(n));
}

const Tensor& Graph::grad(NodeId id) const {
  require(ran_backward_, Error::Kind::kContract, "gradient requested before backward()");
  require(nodes_[id].needs_grad, Error::Kind::kContract,
          "gradient requested for a node that does not require gradients");
  return nodes_[id].grad;
}

void Graph::backward(NodeId loss) {
  require(loss >= 0 && loss < size(), Error::Kind::kContract, "backward: bad loss node");
  require(nodes_[loss].val.numel() == 1, Error::Kind::kContract,
          "backward requires a scalar loss node");
  for (Node& n : nodes_) {
    if (n.needs_grad) {
      n.grad = Tensor(n.val.shape());
    } else {
      n.grad = Tensor();
    }
  }
  if (!nodes_[loss].needs_grad) {
    // loss independent of all parameters; gradients stay empty
    ran_backward_ = true;
    return;
  }
  nodes_[loss].grad[0] = 1.0f;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.op == Op::kLeaf) continue;
    backward_node(n);
  }
  ran_backward_ = true;
}

void Graph::backward_node(Node& n) {
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::kMatmul: {
      Node& a = at(n.in[0]);
      Node& b = at(n.in[1]);
      int M = a.val.dim(0), N = a.val.dim(1), P = b.val.dim(1);
      if (a.needs_grad)  // dA += dC * B^T
        kernels::matmul(g.data(), b.val.data(), a.grad.data(), M, P, N, false, true, true);
      if (b.needs_grad)  // dB += A^T * dC
        kernels::matmul(a.val.data(), g.data(), b.grad.data(), N, M, P, true, false, true);
      break;
    }
    case Op::kRelu: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      for (int64_t i = 0; i < g.numel(); ++i)
        if (x.val[i] > 0.0f) x.grad[i] += g[i];  // subgradient at 0 is 0
      break;
    }
    case Op::kConv2d: {
      Node& x = at(n.in[0]);
      Node& k = at(n.in[1]);
      kernels::Conv2dShape s{x.val.dim(0), x.val.dim(1), k.val.dim(0), x.val.dim(2),
                             x.val.dim(3), k.val.dim(2), n.iarg0,      n.iarg1};
      if (x.needs_grad) {
        Tensor tmp(x.val.shape());
        kernels::conv2d_grad_input(s, g.data(), k.val.data(), tmp.data());
        for (int64_t i = 0; i < tmp.numel(); ++i) x.grad[i] += tmp[i];
      }
      if (k.needs_grad) {
        Tensor tmp(k.val.shape());
        kernels::conv2d_grad_kernel(s, g.data(), x.val.data(), tmp.data());
        for (int64_t i = 0; i < tmp.numel(); ++i) k.grad[i] += tmp[i];
      }
      break;
    }
    case Op::kAdd: {
      for (int which = 0; which < 2; ++which) {
        Node& x = at(n.in[which]);
        if (!x.needs_grad) continue;
        for (int64_t i = 0; i < g.numel(); ++i) x.grad[i] += g[i];
      }
      break;
    }
    case Op::kAddRowVec: {
      Node& x = at(n.in[0]);
      Node& v = at(n.in[1]);
      int B = n.val.dim(0), C = n.val.dim(1);
      if (x.needs_grad)
        for (int64_t i = 0; i < g.numel(); ++i) x.grad[i] += g[i];
      if (v.needs_grad) {
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          for (int b = 0; b < B; ++b) acc += g.at(b, c);
          v.grad[c] += static_cast<float>(acc);
        }
      }
      break;
    }
    case Op::kLogFloor: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      for (int64_t i = 0; i < g.numel(); ++i)
        if (x.val[i] > kLogFloorEta) x.grad[i] += g[i] / x.val[i];  // 0 where floored
      break;
    }
    case Op::kBatchNorm: {
      Node& x = at(n.in[0]);
      Node& ga = at(n.in[1]);
      Node& be = at(n.in[2]);
      AxisSplit s = split_axis(n.val, n.iarg0);
      const int64_t m = s.outer * s.inner;
      for (int c = 0; c < s.channels; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int64_t o = 0; o < s.outer; ++o) {
          const float* gp = g.data() + (o * s.channels + c) * s.inner;
          const float* xh = n.aux.data() + (o * s.channels + c) * s.inner;
          for (int64_t i = 0; i < s.inner; ++i) {
            sum_g += gp[i];
            sum_gx += static_cast<double>(gp[i]) * xh[i];
          }
        }
        if (be.needs_grad) be.grad[c] += static_cast<float>(sum_g);
        if (ga.needs_grad) ga.grad[c] += static_cast<float>(sum_gx);
        if (x.needs_grad) {
          double gamma = ga.val[c];
          double inv_std = n.aux_vec[c];
          if (n.flag) {
            double mg = sum_g / static_cast<double>(m);
            double mgx = sum_gx / static_cast<double>(m);
            for (int64_t o = 0; o < s.outer; ++o) {
              const float* gp = g.data() + (o * s.channels + c) * s.inner;
              const float* xh = n.aux.data() + (o * s.channels + c) * s.inner;
              float* dx = x.grad.data() + (o * s.channels + c) * s.inner;
              for (int64_t i = 0; i < s.inner; ++i)
                dx[i] += static_cast<float>(gamma * inv_std * (gp[i] - mg - xh[i] * mgx));
            }
          } else {
            for (int64_t o = 0; o < s.outer; ++o) {
              const float* gp = g.data() + (o * s.channels + c) * s.inner;
              float* dx = x.grad.data() + (o * s.channels + c) * s.inner;
              for (int64_t i = 0; i < s.inner; ++i)
                dx[i] += static_cast<float>(gamma * inv_std * gp[i]);
            }
          }
        }
      }
      break;
    }
    case Op::kDropout: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      for (int64_t i = 0; i < g.numel(); ++i) x.grad[i] += g[i] * n.aux[i] * n.farg0;
      break;
    }
    case Op::kReshape: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      for (int64_t i = 0; i < g.numel(); ++i) x.grad[i] += g[i];
      break;
    }
    case Op::kGlobalAvgPool: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      int B = x.val.dim(0), C = x.val.dim(1);
      int64_t hw = static_cast<int64_t>(x.val.dim(2)) * x.val.dim(3);
      float scale = 1.0f / static_cast<float>(hw);
      for (int b = 0; b < B; ++b) {
        for (int c = 0; c < C; ++c) {
          float gv = g.at(b, c) * scale;
          float* dst = x.grad.data() + (static_cast<int64_t>(b) * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) dst[i] += gv;
        }
      }
      break;
    }
    case Op::kSoftmax: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      int B = n.val.dim(0), C = n.val.dim(1);
      for (int b = 0; b < B; ++b) {
        double dot = 0.0;
        for (int j = 0; j < C; ++j) dot += static_cast<double>(g.at(b, j)) * n.val.at(b, j);
        for (int j = 0; j < C; ++j)
          x.grad.at(b, j) +=
              static_cast<float>(n.val.at(b, j) * (static_cast<double>(g.at(b, j)) - dot));
      }
      break;
    }
    case Op::kCrossEntropy: {
      Node& p = at(n.in[0]);
      if (!p.needs_grad) break;
      int B = p.val.dim(0);
      float gv = g[0];
      for (int b = 0; b < B; ++b) {
        float pv = p.val.at(b, n.labels[b]);
        if (pv > kLogFloorEta)  // floored probabilities contribute no gradient
          p.grad.at(b, n.labels[b]) += -gv / (static_cast<float>(B) * pv);
      }
      break;
    }
    case Op::kSum: {
      Node& x = at(n.in[0]);
      if (!x.needs_grad) break;
      float gv = g[0];
      for (int64_t i = 0; i < x.grad.numel(); ++i) x.grad[i] += gv;
      break;
    }
    case Op::kLeaf:
      break;
  }
}

}  // namespace fbkws
