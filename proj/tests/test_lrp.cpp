#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/lrp_oracle.hpp"
#include "xcap/lrp.hpp"
#include "xcap/rng.hpp"

using namespace xcap;
using namespace xcap::lrp;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("epsilon rule hand cases") {
  SUBCASE("single contributor takes everything") {
    Tensor r = epsilon_rule(Tensor({1}, {3.0}), Tensor({1}, {2.0}), Tensor({1, 1}, {0.5}),
                            Tensor({1}, {0.0}), 0.0);
    CHECK(r[0] == doctest::Approx(3.0).epsilon(1e-12));
  }
  SUBCASE("y=[2,1], W=[[1,-1]], eps=0") {
    Tensor r = epsilon_rule(Tensor({1}, {1.0}), Tensor({2}, {2.0, 1.0}),
                            Tensor({1, 2}, {1.0, -1.0}), Tensor({1}, {0.0}), 0.0);
    CHECK(r[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("same case, eps=0.01") {
    Tensor r = epsilon_rule(Tensor({1}, {1.0}), Tensor({2}, {2.0, 1.0}),
                            Tensor({1, 2}, {1.0, -1.0}), Tensor({1}, {0.0}), 0.01);
    CHECK(r[0] == doctest::Approx(2.0 / 1.01).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(-1.0 / 1.01).epsilon(1e-12));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(epsilon_rule(Tensor({1}, {1.0}), Tensor({3}), Tensor({1, 2}, {1.0, -1.0}),
                                 Tensor({1}), 0.0),
                    DimensionError);
  }
}

TEST_CASE("alpha rule hand cases") {
  SUBCASE("all-positive contributions at alpha=0 equal the eps=0 epsilon rule") {
    Tensor y({2}, {1.0, 2.0});
    Tensor w({1, 2}, {0.5, 0.25});
    Tensor b({1}, {0.0});
    Tensor r0 = alpha_rule(Tensor({1}, {1.5}), y, w, b, 0.0);
    Tensor r1 = epsilon_rule(Tensor({1}, {1.5}), y, w, b, 0.0);
    CHECK(r0[0] == doctest::Approx(r1[0]).epsilon(1e-12));
    CHECK(r0[1] == doctest::Approx(r1[1]).epsilon(1e-12));
  }
  SUBCASE("y=[2,1], W=[[1,-1]], alpha=0 keeps the positive branch") {
    Tensor r = alpha_rule(Tensor({1}, {1.0}), Tensor({2}, {2.0, 1.0}),
                          Tensor({1, 2}, {1.0, -1.0}), Tensor({1}, {0.0}), 0.0);
    CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("alpha=1 doubles positive share and subtracts the negative one") {
    Tensor r = alpha_rule(Tensor({1}, {1.0}), Tensor({2}, {2.0, 1.0}),
                          Tensor({1, 2}, {1.0, -1.0}), Tensor({1}, {0.0}), 1.0);
    CHECK(r[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("zero denominators contribute exactly zero and stay finite") {
    Rng rng(3);
    for (int rep = 0; rep < 50; ++rep) {
      Tensor y = random_tensor(rng, {4});
      Tensor w = random_tensor(rng, {2, 4});
      if (rep % 3 == 0) {
        for (double& v : w.vec()) v = std::fabs(v);  // no negative branch
      }
      Tensor r = alpha_rule(random_tensor(rng, {2}), y, w, Tensor({2}), rng.uniform(0, 2));
      CHECK(r.all_finite());
    }
  }
}

TEST_CASE("signal-take-all redistribution") {
  SUBCASE("one-hot weights send everything to the selected row") {
    Tensor values({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor r = attention_signal_take_all(Tensor({2}, {1.0, 1.0}), Tensor({2}, {0.0, 1.0}),
                                         values, 0.0);
    CHECK(r.at2(0, 0) == 0.0);
    CHECK(r.at2(0, 1) == 0.0);
    CHECK(r.at2(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.at2(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("equal values and uniform weights split evenly") {
    Tensor values({2, 2}, {2.0, 6.0, 2.0, 6.0});
    Tensor r = attention_signal_take_all(Tensor({2}, {1.0, 1.0}), Tensor({2}, {0.5, 0.5}),
                                         values, 0.0);
    for (int k = 0; k < 2; ++k) {
      CHECK(r.at2(k, 0) == doctest::Approx(0.5).epsilon(1e-12));
      CHECK(r.at2(k, 1) == doctest::Approx(0.5).epsilon(1e-12));
    }
  }
  SUBCASE("weights [0.75, 0.25] on equal-magnitude rows split 3:1") {
    Tensor values({2, 1}, {4.0, 4.0});
    Tensor r = attention_signal_take_all(Tensor({1}, {1.0}), Tensor({2}, {0.75, 0.25}),
                                         values, 0.0);
    CHECK(r.at2(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.at2(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("count mismatch is an error") {
    CHECK_THROWS_AS(attention_signal_take_all(Tensor({2}), Tensor({3}), Tensor({2, 2}), 0.0),
                    DimensionError);
  }
}

namespace {

LstmSaved make_lstm_saved(Rng& rng, int dx, int dh) {
  LstmSaved s;
  s.x = random_tensor(rng, {dx});
  s.h_prev = random_tensor(rng, {dh});
  s.m_prev = random_tensor(rng, {dh});
  s.W = random_tensor(rng, {4 * dh, dx + dh});
  s.b = random_tensor(rng, {4 * dh});
  // Forward pass of the fused-gate cell.
  Tensor cat({dx + dh});
  for (int i = 0; i < dx; ++i) cat[i] = s.x[i];
  for (int i = 0; i < dh; ++i) cat[dx + i] = s.h_prev[i];
  auto seg = [&](int which, int j) {
    double z = s.b[which * dh + j];
    for (int i = 0; i < dx + dh; ++i) z += s.W.at2(which * dh + j, i) * cat[i];
    return z;
  };
  s.gate_i = Tensor({dh});
  s.gate_f = Tensor({dh});
  s.gate_o = Tensor({dh});
  s.candidate = Tensor({dh});
  s.m = Tensor({dh});
  for (int j = 0; j < dh; ++j) {
    s.gate_i[j] = 1.0 / (1.0 + std::exp(-seg(0, j)));
    s.gate_f[j] = 1.0 / (1.0 + std::exp(-seg(1, j)));
    s.gate_o[j] = 1.0 / (1.0 + std::exp(-seg(2, j)));
    s.candidate[j] = std::tanh(seg(3, j));
    s.m[j] = s.gate_f[j] * s.m_prev[j] + s.gate_i[j] * s.candidate[j];
  }
  return s;
}

}  // namespace

TEST_CASE("lstm step relevance") {
  Rng rng(17);
  SUBCASE("forget=1, input=0 sends all cell relevance to m_prev") {
    LstmSaved s = make_lstm_saved(rng, 2, 2);
    for (int j = 0; j < 2; ++j) {
      s.gate_f[j] = 1.0;
      s.gate_i[j] = 0.0;
      s.m[j] = s.m_prev[j];
    }
    Tensor r_m({2}, {1.0, -0.5});
    auto out = lstm_relevance_step(Tensor({2}), r_m, s, 0.0);
    CHECK(out.m_prev[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.m_prev[1] == doctest::Approx(-0.5).epsilon(1e-12));
    for (int i = 0; i < 2; ++i) CHECK(out.x[i] == 0.0);
  }
  SUBCASE("forget=0 starves m_prev") {
    LstmSaved s = make_lstm_saved(rng, 2, 2);
    for (int j = 0; j < 2; ++j) {
      s.gate_f[j] = 0.0;
      s.m[j] = s.gate_i[j] * s.candidate[j];
    }
    auto out = lstm_relevance_step(random_tensor(rng, {2}), random_tensor(rng, {2}), s, 0.01);
    CHECK(out.m_prev[0] == 0.0);
    CHECK(out.m_prev[1] == 0.0);
  }
  SUBCASE("mixed gates on a 2-unit cell match a hand-unrolled computation") {
    LstmSaved s = make_lstm_saved(rng, 3, 2);
    Tensor r_h({2}, {0.4, -0.2});
    Tensor r_m({2}, {0.1, 0.3});
    double eps = 0.01;
    auto out = lstm_relevance_step(r_h, r_m, s, eps);

    // Hand computation, scalar by scalar.
    double rc[2], rg[2], rmp[2];
    for (int j = 0; j < 2; ++j) {
      rc[j] = r_h[j] + r_m[j];
      double denom = s.m[j] + (s.m[j] >= 0 ? eps : -eps);
      rmp[j] = rc[j] * s.gate_f[j] * s.m_prev[j] / denom;
      rg[j] = rc[j] * s.gate_i[j] * s.candidate[j] / denom;
    }
    double rx[3] = {0, 0, 0}, rhp[2] = {0, 0};
    for (int j = 0; j < 2; ++j) {
      double z = s.b[3 * 2 + j];
      for (int i = 0; i < 3; ++i) z += s.W.at2(3 * 2 + j, i) * s.x[i];
      for (int i = 0; i < 2; ++i) z += s.W.at2(3 * 2 + j, 3 + i) * s.h_prev[i];
      double denom = z + (z >= 0 ? eps : -eps);
      for (int i = 0; i < 3; ++i) rx[i] += rg[j] * s.x[i] * s.W.at2(3 * 2 + j, i) / denom;
      for (int i = 0; i < 2; ++i) rhp[i] += rg[j] * s.h_prev[i] * s.W.at2(3 * 2 + j, 3 + i) / denom;
    }
    for (int j = 0; j < 2; ++j) {
      CHECK(out.m_prev[j] == doctest::Approx(rmp[j]).epsilon(1e-12));
      CHECK(out.h_prev[j] == doctest::Approx(rhp[j]).epsilon(1e-12));
    }
    for (int i = 0; i < 3; ++i) CHECK(out.x[i] == doctest::Approx(rx[i]).epsilon(1e-12));
  }
}

namespace {

// Random bias-free linear+relu chain on the tape; returns leaf and logits ids.
struct ChainNet {
  NodeId input;
  NodeId logits;
};

ChainNet build_chain(Tape& t, Rng& rng, const std::vector<int>& dims, bool biases) {
  Tensor x = random_tensor(rng, {dims[0]}, 0.1, 1.5);
  NodeId cur = t.leaf(x);
  ChainNet net{cur, cur};
  for (size_t li = 1; li < dims.size(); ++li) {
    Tensor w = random_tensor(rng, {dims[li], dims[li - 1]});
    Tensor b = biases ? random_tensor(rng, {dims[li]}, -0.3, 0.3) : Tensor({dims[li]});
    cur = t.linear(cur, t.leaf(w), t.leaf(b));
    if (li + 1 < dims.size()) cur = t.relu(cur);
  }
  net.logits = cur;
  return net;
}

}  // namespace

TEST_CASE("backward_relevance basics") {
  SUBCASE("identity network returns the seed at the leaf") {
    Tape t;
    NodeId x = t.leaf(Tensor::scalar(2.5));
    NodeId y = t.relu(t.tanh_(t.scale(x, 1.0)));
    LrpConfig cfg;
    auto r = backward_relevance(t, y, 7.0, cfg);
    CHECK(r.at(x).value() == doctest::Approx(7.0).epsilon(1e-12));
  }
  SUBCASE("seed must be scalar") {
    Tape t;
    NodeId x = t.leaf(Tensor({2}, {1, 2}));
    LrpConfig cfg;
    CHECK_THROWS_AS(backward_relevance(t, x, 1.0, cfg), DimensionError);
  }
  SUBCASE("conservation on bias-free relu chains at eps=0") {
    Rng rng(29);
    for (int rep = 0; rep < 25; ++rep) {
      Tape t;
      auto net = build_chain(t, rng, {5, 7, 6, 3}, false);
      int j = rng.uniform_int(3);
      NodeId seed = t.slice(net.logits, j, 1);
      double logit = t.value(seed).value();
      if (std::fabs(logit) < 1e-9) continue;
      LrpConfig cfg;
      cfg.epsilon = 0.0;
      auto r = backward_relevance(t, seed, logit, cfg);
      double leaf_sum = r.at(net.input).sum();
      CHECK(std::fabs(leaf_sum - logit) <= 1e-9 * std::max(1.0, std::fabs(logit)));
    }
  }
}

TEST_CASE("epsilon leak bound with biases") {
  Rng rng(31);
  for (int rep = 0; rep < 30; ++rep) {
    Tape t;
    auto net = build_chain(t, rng, {4, 6, 5, 3}, true);
    int j = rng.uniform_int(3);
    NodeId seed = t.slice(net.logits, j, 1);
    double logit = t.value(seed).value();
    LrpConfig cfg;
    cfg.epsilon = 0.01;
    auto r = backward_relevance(t, seed, logit, cfg);

    // Leak can only come from bias and stabilizer terms of linear nodes.
    double bound = 0.0;
    for (NodeId id = 0; id < t.size(); ++id) {
      const Node& n = t.node(id);
      if (n.kind != OpKind::kLinear || !r.has(id)) continue;
      const Tensor& b = t.value(n.inputs[2]);
      const Tensor& z = n.value;
      for (int k = 0; k < z.numel(); ++k) {
        double denom = z[k] + (z[k] >= 0 ? cfg.epsilon : -cfg.epsilon);
        if (denom == 0.0) continue;
        bound += std::fabs(r.at(id)[k]) * (std::fabs(b[k]) + cfg.epsilon) / std::fabs(denom);
      }
    }
    double leaf_sum = r.at(net.input).sum();
    CHECK(std::fabs(leaf_sum - logit) <= bound + 1e-9);
  }
}

TEST_CASE("graph walk matches the straight-line oracle within 1e-9") {
  // Fixed random three-layer network, explained with the oracle
  // implementation in tests/support and with the tape walk.
  Rng rng(1234);
  const std::vector<int> dims = {6, 8, 7, 4};
  xcap::testing::OracleNet onet;
  std::vector<double> x(static_cast<size_t>(dims[0]));
  for (double& v : x) v = rng.uniform(-1.0, 1.5);

  Tape t;
  NodeId cur = t.leaf(Tensor({dims[0]}, x));
  NodeId input = cur;
  for (size_t li = 1; li < dims.size(); ++li) {
    xcap::testing::OracleLayer layer;
    Tensor w({dims[li], dims[li - 1]});
    Tensor b({dims[li]});
    layer.w.assign(static_cast<size_t>(dims[li]),
                   std::vector<double>(static_cast<size_t>(dims[li - 1])));
    layer.b.assign(static_cast<size_t>(dims[li]), 0.0);
    for (int j = 0; j < dims[li]; ++j) {
      for (int i = 0; i < dims[li - 1]; ++i) {
        double v = rng.uniform(-0.8, 0.8);
        w.at2(j, i) = v;
        layer.w[static_cast<size_t>(j)][static_cast<size_t>(i)] = v;
      }
      double bv = rng.uniform(-0.4, 0.4);
      b[j] = bv;
      layer.b[static_cast<size_t>(j)] = bv;
    }
    layer.relu = li + 1 < dims.size();
    onet.layers.push_back(std::move(layer));
    cur = t.linear(cur, t.leaf(w), t.leaf(b));
    if (li + 1 < dims.size()) cur = t.relu(cur);
  }

  for (int target = 0; target < dims.back(); ++target) {
    NodeId seed = t.slice(cur, target, 1);
    double logit = t.value(seed).value();
    LrpConfig cfg;  // eps = 0.01
    auto r = backward_relevance(t, seed, logit, cfg);
    auto oracle = xcap::testing::oracle_relevance(onet, x, static_cast<size_t>(target), 0.01);
    REQUIRE(r.has(input));
    for (int i = 0; i < dims[0]; ++i) {
      CHECK(r.at(input)[i] == doctest::Approx(oracle[static_cast<size_t>(i)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("config validation") {
  LrpConfig cfg;
  cfg.epsilon = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.epsilon = 0.01;
  cfg.alpha = -0.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
