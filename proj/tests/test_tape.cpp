#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xcap/rng.hpp"
#include "xcap/tape.hpp"

using namespace xcap;

TEST_CASE("linear forward") {
  Tape t;
  SUBCASE("identity weights") {
    NodeId x = t.leaf(Tensor({2}, {1, 2}));
    NodeId w = t.leaf(Tensor({2, 2}, {1, 0, 0, 1}));
    NodeId b = t.leaf(Tensor({2}, {0, 0}));
    NodeId z = t.linear(x, w, b);
    CHECK(t.value(z)[0] == 1.0);
    CHECK(t.value(z)[1] == 2.0);
  }
  SUBCASE("zero weights pass the bias") {
    NodeId x = t.leaf(Tensor({2}, {3, -1}));
    NodeId w = t.leaf(Tensor({2, 2}, {0, 0, 0, 0}));
    NodeId b = t.leaf(Tensor({2}, {5, 5}));
    NodeId z = t.linear(x, w, b);
    CHECK(t.value(z)[0] == 5.0);
    CHECK(t.value(z)[1] == 5.0);
  }
  SUBCASE("hand case 2*1 + 1*(-1)") {
    NodeId x = t.leaf(Tensor({2}, {2, 1}));
    NodeId w = t.leaf(Tensor({1, 2}, {1, -1}));
    NodeId b = t.leaf(Tensor({1}, {0}));
    NodeId z = t.linear(x, w, b);
    CHECK(t.value(z).value() == 1.0);
  }
  SUBCASE("shape mismatch") {
    NodeId x = t.leaf(Tensor({3}, {1, 2, 3}));
    NodeId w = t.leaf(Tensor({1, 2}, {1, -1}));
    NodeId b = t.leaf(Tensor({1}, {0}));
    CHECK_THROWS_AS(t.linear(x, w, b), DimensionError);
  }
}

TEST_CASE("elementwise ops") {
  Tape t;
  NodeId x = t.leaf(Tensor({3}, {-1, 0, 2}));
  CHECK(t.value(t.relu(x)).vec() == std::vector<double>{0, 0, 2});

  NodeId z = t.leaf(Tensor::scalar(0.0));
  CHECK(t.value(t.sigmoid(z)).value() == 0.5);

  NodeId m = t.leaf(Tensor({2, 2}, {2, 4, 0, 0}));
  Tensor pooled = t.value(t.mean_rows(m));
  CHECK(pooled[0] == 1.0);
  CHECK(pooled[1] == 2.0);

  NodeId a = t.leaf(Tensor({2}, {1, 2}));
  NodeId b = t.leaf(Tensor({2}, {3, 4}));
  CHECK(t.value(t.add(a, b)).vec() == std::vector<double>{4, 6});
  CHECK(t.value(t.mul(a, b)).vec() == std::vector<double>{3, 8});

  NodeId s = t.leaf(Tensor::scalar(2.0));
  CHECK(t.value(t.mul(a, s)).vec() == std::vector<double>{2, 4});
  NodeId c3 = t.leaf(Tensor({3}, {1, 1, 1}));
  CHECK_THROWS_AS(t.mul(a, c3), DimensionError);

  CHECK(t.value(t.concat({a, b})).vec() == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("softmax") {
  Tape t;
  SUBCASE("uniform") {
    NodeId p = t.softmax(t.leaf(Tensor({3}, {0, 0, 0})));
    for (int i = 0; i < 3; ++i) CHECK(t.value(p)[i] == doctest::Approx(1.0 / 3).epsilon(1e-14));
  }
  SUBCASE("independent exp/normalize oracle on [1,2,3]") {
    // Oracle: direct exponentials without the max shift.
    double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
    double s = e1 + e2 + e3;
    NodeId p = t.softmax(t.leaf(Tensor({3}, {1, 2, 3})));
    CHECK(t.value(p)[0] == doctest::Approx(e1 / s).epsilon(1e-14));
    CHECK(t.value(p)[1] == doctest::Approx(e2 / s).epsilon(1e-14));
    CHECK(t.value(p)[2] == doctest::Approx(e3 / s).epsilon(1e-14));
    CHECK(t.value(p)[0] == doctest::Approx(0.09003).epsilon(1e-4));
    CHECK(t.value(p)[1] == doctest::Approx(0.24473).epsilon(1e-4));
    CHECK(t.value(p)[2] == doctest::Approx(0.66524).epsilon(1e-4));
  }
  SUBCASE("shift invariance") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
      double c = rng.uniform(-50, 50);
      Tensor base({4});
      for (int i = 0; i < 4; ++i) base[i] = rng.uniform(-3, 3);
      Tensor shifted = base;
      for (int i = 0; i < 4; ++i) shifted[i] += c;
      Tape tt;
      Tensor p0 = tt.value(tt.softmax(tt.leaf(base)));
      Tensor p1 = tt.value(tt.softmax(tt.leaf(shifted)));
      for (int i = 0; i < 4; ++i) CHECK(p0[i] == doctest::Approx(p1[i]).epsilon(1e-12));
    }
  }
  SUBCASE("sums to one within 1e-12 for n=4096") {
    Rng rng(11);
    Tensor logits({4096});
    for (int i = 0; i < 4096; ++i) logits[i] = rng.uniform(-20, 20);
    Tensor p = t.value(t.softmax(t.leaf(logits)));
    CHECK(std::fabs(p.sum() - 1.0) < 1e-12);
    for (int i = 0; i < 4096; ++i) CHECK(p[i] > 0.0);
  }
}

TEST_CASE("conv2d hand case") {
  Tape t;
  // 1x3x3 input, 1x1x2x2 kernel of ones, stride 1, no padding.
  NodeId x = t.leaf(Tensor({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  NodeId w = t.leaf(Tensor({1, 1, 2, 2}, {1, 1, 1, 1}));
  NodeId b = t.leaf(Tensor({1}, {0.5}));
  Tensor y = t.value(t.conv2d(x, w, b, 1, 0));
  CHECK(y.shape() == std::vector<int>{1, 2, 2});
  CHECK(y.at3(0, 0, 0) == doctest::Approx(1 + 2 + 4 + 5 + 0.5));
  CHECK(y.at3(0, 1, 1) == doctest::Approx(5 + 6 + 8 + 9 + 0.5));
}

TEST_CASE("structural ops") {
  Tape t;
  NodeId m = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK(t.value(t.row(m, 1)).vec() == std::vector<double>{4, 5, 6});

  NodeId v = t.leaf(Tensor({4}, {1, 2, 3, 4}));
  CHECK(t.value(t.slice(v, 1, 2)).vec() == std::vector<double>{2, 3});
  CHECK_THROWS_AS(t.slice(v, 3, 2), DimensionError);

  // (c=2, h=1, w=2) -> rows are spatial positions, columns channels.
  NodeId img = t.leaf(Tensor({2, 1, 2}, {1, 2, 3, 4}));
  Tensor rows = t.value(t.spatial_rows(img));
  CHECK(rows.shape() == std::vector<int>{2, 2});
  CHECK(rows.at2(0, 0) == 1.0);
  CHECK(rows.at2(0, 1) == 3.0);
  CHECK(rows.at2(1, 0) == 2.0);
  CHECK(rows.at2(1, 1) == 4.0);

  NodeId wts = t.leaf(Tensor({2}, {0.25, 0.75}));
  NodeId va = t.leaf(Tensor({2}, {4, 0}));
  NodeId vb = t.leaf(Tensor({2}, {0, 8}));
  Tensor mix = t.value(t.weighted_sum(wts, {va, vb}));
  CHECK(mix[0] == 1.0);
  CHECK(mix[1] == 6.0);

  NodeId e = t.embed_row(m, 0);
  CHECK(t.value(e).vec() == std::vector<double>{1, 2, 3});
}

TEST_CASE("cross entropy value") {
  Tape t;
  NodeId z = t.leaf(Tensor({3}, {1, 2, 3}));
  double loss = t.value(t.cross_entropy(z, 2)).value();
  double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  CHECK(loss == doctest::Approx(-std::log(e3 / (e1 + e2 + e3))).epsilon(1e-14));
}

TEST_CASE("replay reproduces saved outputs bit-exactly") {
  Rng rng(3);
  Tape t;
  Tensor x({5});
  Tensor w({4, 5});
  Tensor b({4});
  for (int i = 0; i < 5; ++i) x[i] = rng.uniform(-2, 2);
  for (int i = 0; i < 20; ++i) w[i] = rng.uniform(-1, 1);
  for (int i = 0; i < 4; ++i) b[i] = rng.uniform(-1, 1);
  NodeId z = t.linear(t.leaf(x), t.leaf(w), t.leaf(b));
  NodeId h = t.tanh_(z);
  NodeId p = t.softmax(h);
  t.cross_entropy(h, 1);
  for (NodeId id : {z, h, p}) {
    Tensor again = t.replay(id);
    REQUIRE(again.numel() == t.value(id).numel());
    for (int i = 0; i < again.numel(); ++i) {
      CHECK(again[i] == t.value(id)[i]);  // bit-identical
    }
  }
}

TEST_CASE("ops reject non-finite results") {
  Tape t;
  NodeId big = t.leaf(Tensor::scalar(1e308));
  CHECK_THROWS_AS(t.mul(big, big), NumericError);
  CHECK_THROWS_AS(t.leaf(Tensor({1}, {std::nan("")})), NumericError);
}
