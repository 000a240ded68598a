#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "fbkws/graph.hpp"
#include "fbkws/rng.hpp"
#include "fbkws/tensor.hpp"
#include "oracles.hpp"

using fbkws::BatchNormState;
using fbkws::DropoutMode;
using fbkws::Error;
using fbkws::Graph;
using fbkws::NodeId;
using fbkws::Rng;
using fbkws::Tensor;

namespace {

// Builds the graph from a flat parameter vector; returns (loss node, param node).
using Builder = std::function<std::pair<NodeId, NodeId>(Graph&, const std::vector<float>&)>;

void check_grads(const Builder& build, const std::vector<float>& x0, float h = 1e-3f) {
  Graph g;
  auto [loss, param] = build(g, x0);
  g.backward(loss);
  const Tensor& analytic = g.grad(param);
  auto fd = oracle::fd_gradient(
      [&](const std::vector<float>& x) {
        Graph g2;
        auto [l2, p2] = build(g2, x);
        (void)p2;
        return static_cast<double>(g2.value(l2)[0]);
      },
      x0, h);
  REQUIRE(analytic.numel() == static_cast<int64_t>(fd.size()));
  for (int64_t i = 0; i < analytic.numel(); ++i) {
    INFO("entry ", i, ": analytic ", analytic[i], " fd ", fd[i]);
    CHECK(oracle::grad_close(analytic[i], fd[i]));
  }
}

std::vector<float> random_vec(int n, uint64_t seed, double stddev = 1.0) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return v;
}

}  // namespace

TEST_CASE("matmul gradients (both operands)") {
  Tensor b_fixed({4, 2}, random_vec(8, 11, 0.7));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId a = g.param(Tensor({3, 4}, x));
        NodeId b = g.leaf(b_fixed);
        return std::make_pair(g.sum(g.relu(g.matmul(a, b))), a);
      },
      random_vec(12, 12));

  Tensor a_fixed({3, 4}, random_vec(12, 13));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId a = g.leaf(a_fixed);
        NodeId b = g.param(Tensor({4, 2}, x));
        return std::make_pair(g.sum(g.relu(g.matmul(a, b))), b);
      },
      random_vec(8, 14, 0.7));
}

TEST_CASE("conv2d gradients, dilation 1") {
  Tensor k_fixed({2, 2, 3, 3}, random_vec(36, 21, 0.5));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId in = g.param(Tensor({1, 2, 4, 4}, x));
        NodeId k = g.leaf(k_fixed);
        return std::make_pair(g.sum(g.relu(g.conv2d(in, k, 1, 1))), in);
      },
      random_vec(32, 22));

  Tensor x_fixed({1, 2, 4, 4}, random_vec(32, 23));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId in = g.leaf(x_fixed);
        NodeId k = g.param(Tensor({2, 2, 3, 3}, x));
        return std::make_pair(g.sum(g.relu(g.conv2d(in, k, 1, 1))), k);
      },
      random_vec(36, 24, 0.5));
}

TEST_CASE("conv2d gradients, dilation 2") {
  Tensor x_fixed({1, 1, 6, 5}, random_vec(30, 31));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId in = g.leaf(x_fixed);
        NodeId k = g.param(Tensor({2, 1, 3, 3}, x));
        return std::make_pair(g.sum(g.relu(g.conv2d(in, k, 2, 2))), k);
      },
      random_vec(18, 32, 0.5));

  Tensor k_fixed({2, 1, 3, 3}, random_vec(18, 33, 0.5));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId in = g.param(Tensor({1, 1, 6, 5}, x));
        NodeId k = g.leaf(k_fixed);
        return std::make_pair(g.sum(g.relu(g.conv2d(in, k, 2, 2))), in);
      },
      random_vec(30, 34));
}

TEST_CASE("add fan-out accumulates gradients") {
  Graph g;
  NodeId x = g.param(Tensor({3}, {1.0f, -2.0f, 3.0f}));
  NodeId loss = g.sum(g.add(x, x));
  g.backward(loss);
  for (int i = 0; i < 3; ++i) CHECK(g.grad(x)[i] == 2.0f);
}

TEST_CASE("add_row_vec gradients") {
  Tensor x_fixed({5, 3}, random_vec(15, 41));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId m = g.leaf(x_fixed);
        NodeId v = g.param(Tensor({3}, x));
        return std::make_pair(g.sum(g.relu(g.add_row_vec(m, v))), v);
      },
      random_vec(3, 42, 0.5));
}

TEST_CASE("log_floor gradients and floor semantics") {
  std::vector<float> pos(8);
  Rng rng(51);
  for (auto& v : pos) v = static_cast<float>(0.5 + rng.uniform() * 1.5);
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId n = g.param(Tensor({2, 4}, x));
        return std::make_pair(g.sum(g.log_floor(n)), n);
      },
      pos, 1e-4f);

  // an entry below the floor produces the floor value and exactly zero gradient
  Graph g;
  NodeId x = g.param(Tensor({2}, {1e-30f, 1.0f}));
  NodeId y = g.log_floor(x);
  CHECK(g.value(y)[0] == doctest::Approx(-50.0f).epsilon(1e-6));
  CHECK(g.value(y)[1] == 0.0f);
  g.backward(g.sum(y));
  CHECK(g.grad(x)[0] == 0.0f);
  CHECK(g.grad(x)[1] == doctest::Approx(1.0f));

  Graph g2;
  NodeId neg = g2.param(Tensor({1}, {-0.5f}));
  CHECK_THROWS_AS(g2.log_floor(neg), Error);
}

TEST_CASE("batch_norm training gradients") {
  Tensor gamma({3}, {1.5f, 0.8f, 1.1f});
  Tensor beta({3}, {-0.2f, 0.3f, 0.0f});
  auto build_x = [&](Graph& g, const std::vector<float>& x) {
    BatchNormState* st = new BatchNormState(3);  // leaked; fine in a test closure
    NodeId in = g.param(Tensor({4, 3}, x));
    NodeId ga = g.leaf(gamma);
    NodeId be = g.leaf(beta);
    NodeId y = g.batch_norm(in, ga, be, st, 1, true);
    return std::make_pair(g.sum(g.relu(y)), in);
  };
  check_grads(build_x, random_vec(12, 61));

  Tensor x_fixed({4, 3}, random_vec(12, 62));
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        BatchNormState* st = new BatchNormState(3);
        NodeId in = g.leaf(x_fixed);
        NodeId ga = g.param(Tensor({3}, x));
        NodeId be = g.leaf(beta);
        NodeId y = g.batch_norm(in, ga, be, st, 1, true);
        return std::make_pair(g.sum(g.relu(y)), ga);
      },
      {1.2f, 0.9f, 1.4f});

  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        BatchNormState* st = new BatchNormState(3);
        NodeId in = g.leaf(x_fixed);
        NodeId ga = g.leaf(gamma);
        NodeId be = g.param(Tensor({3}, x));
        NodeId y = g.batch_norm(in, ga, be, st, 1, true);
        return std::make_pair(g.sum(g.relu(y)), be);
      },
      {0.1f, -0.3f, 0.2f});
}

TEST_CASE("batch_norm updates running statistics") {
  BatchNormState st(2);
  st.running_mean = {1.0f, -1.0f};
  st.running_var = {2.0f, 0.5f};
  Graph g;
  NodeId x = g.leaf(Tensor({2, 2}, {1.0f, 3.0f, 3.0f, 7.0f}));
  NodeId ga = g.leaf(Tensor({2}, 1.0f));
  NodeId be = g.leaf(Tensor({2}, 0.0f));
  g.batch_norm(x, ga, be, &st, 1, true);
  // channel 0 samples {1,3}: mean 2, biased var 1
  CHECK(st.running_mean[0] == doctest::Approx(0.9f * 1.0f + 0.1f * 2.0f));
  CHECK(st.running_var[0] == doctest::Approx(0.9f * 2.0f + 0.1f * 1.0f));
  // channel 1 samples {3,7}: mean 5, biased var 4
  CHECK(st.running_mean[1] == doctest::Approx(0.9f * -1.0f + 0.1f * 5.0f));
  CHECK(st.running_var[1] == doctest::Approx(0.9f * 0.5f + 0.1f * 4.0f));
}

TEST_CASE("batch_norm inference uses running stats only") {
  BatchNormState st(2);
  st.running_mean = {0.5f, -0.25f};
  st.running_var = {1.5f, 0.7f};
  BatchNormState before = st;

  Tensor gamma({2}, {1.3f, 0.9f});
  Tensor beta({2}, {0.1f, -0.1f});
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        BatchNormState* st = new BatchNormState(before);  // leaked; test closure
        NodeId in = g.param(Tensor({4, 2}, x));
        NodeId ga = g.leaf(gamma);
        NodeId be = g.leaf(beta);
        NodeId y = g.batch_norm(in, ga, be, st, 1, false);
        return std::make_pair(g.sum(g.relu(y)), in);
      },
      random_vec(8, 71));

  // inference must not touch the running statistics
  Graph g;
  NodeId x = g.leaf(Tensor({4, 2}, random_vec(8, 72)));
  NodeId y = g.batch_norm(x, g.leaf(gamma), g.leaf(beta), &st, 1, false);
  (void)y;
  CHECK(st.running_mean == before.running_mean);
  CHECK(st.running_var == before.running_var);

  // and the output must follow the stored statistics exactly
  Graph g2;
  NodeId x2 = g2.leaf(Tensor({1, 2}, {2.0f, 1.0f}));
  NodeId y2 = g2.batch_norm(x2, g2.leaf(gamma), g2.leaf(beta), &st, 1, false);
  float expect0 = 1.3f * (2.0f - 0.5f) / std::sqrt(1.5f + 1e-5f) + 0.1f;
  CHECK(g2.value(y2)[0] == doctest::Approx(expect0).epsilon(1e-5));
}

TEST_CASE("dropout gradients flow through the mask") {
  Tensor x0({2, 4, 3}, random_vec(24, 81));
  SUBCASE("element mode") {
    check_grads(
        [&](Graph& g, const std::vector<float>& x) {
          Rng rng(99);  // same mask on every rebuild
          NodeId in = g.param(Tensor({2, 4, 3}, x));
          NodeId y = g.dropout(in, 0.4f, DropoutMode::kElement, rng);
          return std::make_pair(g.sum(g.relu(y)), in);
        },
        x0.vec());
  }
  SUBCASE("channel mode zeroes whole channels") {
    Rng rng(123);
    Graph g;
    NodeId in = g.param(x0);
    NodeId y = g.dropout(in, 0.5f, DropoutMode::kChannel, rng);
    const Tensor& v = g.value(y);
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) {
        bool dropped = v.at(b, 0, k) == 0.0f && x0.at(b, 0, k) != 0.0f;
        for (int t = 0; t < 4; ++t) {
          if (dropped) {
            CHECK(v.at(b, t, k) == 0.0f);
          } else {
            CHECK(v.at(b, t, k) == doctest::Approx(x0.at(b, t, k) * 2.0f));
          }
        }
      }
    }
  }
  SUBCASE("rate validation") {
    Graph g;
    NodeId in = g.leaf(x0);
    Rng rng(1);
    CHECK_THROWS_AS(g.dropout(in, 1.0f, DropoutMode::kElement, rng), Error);
    CHECK_THROWS_AS(g.dropout(in, -0.1f, DropoutMode::kElement, rng), Error);
  }
}

TEST_CASE("global_avg_pool and reshape gradients") {
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId in = g.param(Tensor({2, 3, 2, 2}, x));
        NodeId pooled = g.global_avg_pool(in);
        NodeId flat = g.reshape(pooled, {6});
        return std::make_pair(g.sum(g.relu(flat)), in);
      },
      random_vec(24, 91));

  Graph g;
  NodeId x = g.leaf(Tensor({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 6.0f}));
  CHECK(g.value(g.global_avg_pool(x))[0] == doctest::Approx(3.0f));
  CHECK_THROWS_AS(g.reshape(x, {5}), Error);
}

TEST_CASE("softmax rows sum to one; cross_entropy matches hand value") {
  Graph g;
  NodeId z = g.leaf(Tensor({2, 4}, random_vec(8, 101, 2.0)));
  NodeId p = g.softmax(z);
  for (int i = 0; i < 2; ++i) {
    double s = 0.0;
    for (int j = 0; j < 4; ++j) s += g.value(p).at(i, j);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }

  Graph g2;
  NodeId u = g2.leaf(Tensor({1, 4}, {0.25f, 0.25f, 0.25f, 0.25f}));
  NodeId ce = g2.cross_entropy(u, {2});
  CHECK(g2.value(ce)[0] == doctest::Approx(std::log(4.0)).epsilon(1e-6));

  CHECK_THROWS_AS(g2.cross_entropy(u, {4}), Error);
  CHECK_THROWS_AS(g2.cross_entropy(u, {-1}), Error);
  CHECK_THROWS_AS(g2.cross_entropy(u, {0, 1}), Error);
}

TEST_CASE("softmax + cross_entropy gradients on logits") {
  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        NodeId z = g.param(Tensor({3, 5}, x));
        NodeId p = g.softmax(z);
        return std::make_pair(g.cross_entropy(p, {1, 4, 0}), z);
      },
      random_vec(15, 111, 1.5));
}

TEST_CASE("relu of filterbank weights: negative entries get exactly zero gradient") {
  std::vector<float> w0 = random_vec(24, 121);  // 8x3, mixed signs
  Tensor spec({4, 8});
  Rng rng(122);
  for (int64_t i = 0; i < spec.numel(); ++i)
    spec[i] = static_cast<float>(rng.uniform(0.1, 2.0));

  Graph g;
  NodeId w = g.param(Tensor({8, 3}, w0));
  NodeId y = g.matmul(g.leaf(spec), g.relu(w));
  NodeId loss = g.sum(g.log_floor(y));
  g.backward(loss);
  for (int i = 0; i < 24; ++i) {
    if (w0[static_cast<size_t>(i)] < 0.0f) CHECK(g.grad(w)[i] == 0.0f);
  }
}

TEST_CASE("composed front-end style graph matches finite differences") {
  // spectrogram -> matmul with relu(W) -> log floor -> batch norm -> head -> CE
  const int T = 4, F = 8, K = 3;
  Tensor spec({T, F});
  Rng rng(131);
  for (int64_t i = 0; i < spec.numel(); ++i)
    spec[i] = static_cast<float>(rng.uniform(0.05, 2.0));
  Tensor head({K, 2}, random_vec(K * 2, 132, 0.8));

  check_grads(
      [&](Graph& g, const std::vector<float>& x) {
        BatchNormState* st = new BatchNormState(K);
        NodeId w = g.param(Tensor({F, K}, x));
        NodeId y = g.matmul(g.leaf(spec), g.relu(w));
        NodeId feat = g.log_floor(y);
        NodeId bn = g.batch_norm(feat, g.leaf(Tensor({K}, 1.0f)), g.leaf(Tensor({K}, 0.0f)),
                                 st, 1, true);
        NodeId logits = g.matmul(bn, g.leaf(head));
        NodeId p = g.softmax(logits);
        return std::make_pair(g.cross_entropy(p, {0, 1, 0, 1}), w);
      },
      random_vec(F * K, 133, 0.6), 3e-4f);
}

TEST_CASE("backward contract checks") {
  Graph g;
  NodeId x = g.param(Tensor({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}));
  NodeId y = g.relu(x);
  CHECK_THROWS_AS(g.backward(y), Error);  // non-scalar loss
  CHECK_THROWS_AS(g.grad(x), Error);      // before a successful backward

  NodeId loss = g.sum(y);
  g.backward(loss);
  Tensor first = g.grad(x);
  g.backward(loss);  // re-running must be bit-identical
  for (int64_t i = 0; i < first.numel(); ++i) CHECK(g.grad(x)[i] == first[i]);

  Graph g2;
  NodeId cst = g2.leaf(Tensor({2}, {1.0f, 2.0f}));
  NodeId l2 = g2.sum(cst);
  g2.backward(l2);
  CHECK_THROWS_AS(g2.grad(cst), Error);  // constants carry no gradient
}

TEST_CASE("shape validation") {
  Graph g;
  NodeId a = g.leaf(Tensor({2, 3}));
  NodeId b = g.leaf(Tensor({4, 2}));
  CHECK_THROWS_AS(g.matmul(a, b), Error);
  CHECK_THROWS_AS(g.add(a, b), Error);

  NodeId img = g.leaf(Tensor({1, 1, 4, 4}));
  NodeId ker = g.leaf(Tensor({1, 1, 3, 3}));
  CHECK_THROWS_AS(g.conv2d(img, ker, 0, 1), Error);
  NodeId ker2 = g.leaf(Tensor({1, 2, 3, 3}));
  CHECK_THROWS_AS(g.conv2d(img, ker2, 1, 1), Error);
  NodeId even = g.leaf(Tensor({1, 1, 2, 2}));
  CHECK_THROWS_AS(g.conv2d(img, even, 1, 1), Error);
}
