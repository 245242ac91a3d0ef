#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xcap/grad.hpp"
#include "xcap/reweight.hpp"
#include "xcap/rng.hpp"

using namespace xcap;

TEST_CASE("reweight step properties") {
  SUBCASE("zero relevance keeps the distribution bit for bit") {
    // A label whose fc row is zero receives zero relevance everywhere.
    Tensor w({2, 3});
    w.at2(1, 0) = 0.3;
    w.at2(1, 1) = -0.2;
    w.at2(1, 2) = 0.9;
    Tensor b({2});
    Tensor c({3}, {0.5, -0.1, 0.7});
    Tensor h({3}, {0.2, 0.3, -0.4});
    ReweightedStep rw = reweight_step(w, b, c, h, 0, 0.01);
    for (int i = 0; i < 3; ++i) {
      CHECK(rw.omega_c[i] == 1.0);
      CHECK(rw.omega_h[i] == 1.0);
    }
    // p_hat equals the plain forward distribution exactly.
    Tensor u({3});
    for (int i = 0; i < 3; ++i) u[i] = c[i] + h[i];
    std::vector<double> logits(2);
    for (int j = 0; j < 2; ++j) {
      double s = b[j];
      for (int i = 0; i < 3; ++i) s += w.at2(j, i) * u[i];
      logits[static_cast<size_t>(j)] = s;
    }
    auto p = softmax_values(logits);
    for (int j = 0; j < 2; ++j) {
      CHECK(std::fabs(rw.p_hat[j] - p[static_cast<size_t>(j)]) <= 1e-12);
    }
  }

  SUBCASE("max-abs normalization maps relevance [2,-2] to weights [2,0]") {
    // u = c + h = (1,1); fc row (3,-1) gives z = 2 and R(u) = (3,-1) at
    // eps = 0. The c/u split then lands exactly on R(c) = (2,-2), whose
    // max-abs is 2, so the weights become (2, 0).
    Tensor w({1, 2});
    w.at2(0, 0) = 3.0;
    w.at2(0, 1) = -1.0;
    Tensor b({1});
    Tensor c({2}, {2.0 / 3.0, 2.0});
    Tensor h({2}, {1.0 / 3.0, -1.0});
    ReweightedStep rw = reweight_step(w, b, c, h, 0, 0.0);
    CHECK(rw.r_c[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rw.r_c[1] == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(rw.omega_c[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rw.omega_c[1] == doctest::Approx(0.0).epsilon(1e-12));
    // R(h) = (1,1): both weights saturate at 2.
    CHECK(rw.omega_h[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rw.omega_h[1] == doctest::Approx(2.0).epsilon(1e-12));
  }

  SUBCASE("weights stay within [0,2] on 10k random inputs") {
    Rng rng(77);
    for (int rep = 0; rep < 10000; ++rep) {
      int d = 1 + rng.uniform_int(6);
      int v = 2 + rng.uniform_int(5);
      Tensor w({v, d}), b({v}), c({d}), h({d});
      for (int i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-2, 2);
      for (int i = 0; i < v; ++i) b[i] = rng.uniform(-1, 1);
      for (int i = 0; i < d; ++i) {
        c[i] = rng.uniform(-2, 2);
        h[i] = rng.uniform(-2, 2);
      }
      ReweightedStep rw = reweight_step(w, b, c, h, rng.uniform_int(v), 0.01);
      for (int i = 0; i < d; ++i) {
        CHECK(rw.omega_c[i] >= 0.0);
        CHECK(rw.omega_c[i] <= 2.0);
        CHECK(rw.omega_h[i] >= 0.0);
        CHECK(rw.omega_h[i] <= 2.0);
      }
      CHECK(std::fabs(rw.p_hat.sum() - 1.0) < 1e-12);
    }
  }

  SUBCASE("three-unit fixture against a hand computation") {
    // fc: 2 labels x 3 features, label 1, eps 0.
    Tensor w({2, 3}, {0.1, -0.4, 0.2, 0.5, 0.25, -0.5});
    Tensor b({2}, {0.0, 0.1});
    Tensor c({3}, {1.0, 2.0, -1.0});
    Tensor h({3}, {1.0, -1.0, 0.5});
    double eps = 0.0;
    // u = (2, 1, -0.5); z1 = 0.5*2 + 0.25*1 - 0.5*(-0.5) + 0.1 = 1.6
    // R(u) = z1 * u_i w_i / z1 = u_i w_i = (1.0, 0.25, 0.25)
    // split: R(c) = R(u) * c/u = (0.5, 0.5, 0.5); R(h) = (0.5, -0.25, -0.25)
    ReweightedStep rw = reweight_step(w, b, c, h, 1, eps);
    CHECK(rw.r_c[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rw.r_c[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rw.r_c[2] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rw.r_h[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rw.r_h[1] == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(rw.r_h[2] == doctest::Approx(-0.25).epsilon(1e-12));
    // omega_c = (0.5,0.5,0.5)/0.5 + 1 = (2,2,2); omega_h = (2, 0.5, 0.5)
    CHECK(rw.omega_c[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rw.omega_h[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(rw.omega_h[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(rw.omega_h[2] == doctest::Approx(0.5).epsilon(1e-12));
    // p_hat from the re-weighted input, by hand.
    Tensor mixed({3});
    for (int i = 0; i < 3; ++i) mixed[i] = rw.omega_c[i] * c[i] + rw.omega_h[i] * h[i];
    std::vector<double> logits(2);
    for (int j = 0; j < 2; ++j) {
      double s = b[j];
      for (int i = 0; i < 3; ++i) s += w.at2(j, i) * mixed[i];
      logits[static_cast<size_t>(j)] = s;
    }
    auto expect = softmax_values(logits);
    CHECK(rw.p_hat[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(rw.p_hat[1] == doctest::Approx(expect[1]).epsilon(1e-12));
  }

  SUBCASE("maximal contributions scale by exactly 2 and 0") {
    Rng rng(5);
    for (int rep = 0; rep < 200; ++rep) {
      Tensor w({3, 4}), b({3}), c({4}), h({4});
      for (int i = 0; i < w.numel(); ++i) w[i] = rng.uniform(-1, 1);
      for (int i = 0; i < 4; ++i) {
        c[i] = rng.uniform(-1, 1);
        h[i] = rng.uniform(-1, 1);
      }
      ReweightedStep rw = reweight_step(w, b, c, h, 1, 0.01);
      double mx = rw.r_c.max_abs();
      if (mx == 0.0) continue;
      for (int i = 0; i < 4; ++i) {
        if (rw.r_c[i] == mx) CHECK(rw.omega_c[i] == doctest::Approx(2.0).epsilon(1e-12));
        if (rw.r_c[i] == -mx) CHECK(rw.omega_c[i] == doctest::Approx(0.0).epsilon(1e-12));
      }
    }
  }

  SUBCASE("shape and label validation") {
    Tensor w({2, 3}), b({2}), c({3}), h({2});
    CHECK_THROWS_AS(reweight_step(w, b, c, h, 0, 0.01), DimensionError);
    Tensor h3({3});
    CHECK_THROWS_AS(reweight_step(w, b, c, h3, 5, 0.01), std::out_of_range);
  }
}

TEST_CASE("combined loss") {
  Tensor p({3}, {0.2, 0.5, 0.3});
  Tensor ph({3}, {0.1, 0.8, 0.1});
  CHECK(lrp_ce_loss(p, ph, 1, 1.0) == doctest::Approx(-std::log(0.5)).epsilon(1e-12));
  CHECK(lrp_ce_loss(p, ph, 1, 0.0) == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
  CHECK(lrp_ce_loss(p, ph, 1, 0.5) ==
        doctest::Approx(0.5 * (-std::log(0.5)) + 0.5 * (-std::log(0.8))).epsilon(1e-12));
  CHECK_THROWS_AS(lrp_ce_loss(p, ph, 1, 1.5), std::invalid_argument);
}

namespace {

struct IftToy {
  Vocabulary vocab;
  CaptionerParams params;
  std::vector<TrainSample> samples;
};

IftToy make_ift_toy(uint64_t seed, bool stop_words_only) {
  Rng rng(seed);
  std::vector<std::vector<std::string>> caps;
  if (stop_words_only) {
    caps = {{"the", "a", "and"}, {"a", "the", "and"}};
  } else {
    caps = {{"a", "red", "square"}, {"a", "blue", "circle"}};
  }
  IftToy toy;
  toy.vocab = Vocabulary::build(caps, 1);
  CaptionerConfig cfg;
  cfg.attention = AttentionKind::kAdaptive;
  cfg.vocab_size = toy.vocab.size();
  cfg.d_w = 5;
  cfg.d_h = 8;
  cfg.d_a = 4;
  cfg.n_v = 4;
  cfg.max_len = 6;
  cfg.uses_encoder = false;
  toy.params = CaptionerParams::init(cfg, rng);
  for (size_t i = 0; i < caps.size(); ++i) {
    TrainSample t;
    t.id = static_cast<int>(i);
    Tensor f({cfg.n_v, cfg.d_h});
    for (int j = 0; j < f.numel(); ++j) f[j] = rng.uniform(-1, 1);
    t.input = f;
    t.captions.push_back(toy.vocab.encode(caps[i]));
    t.ref_words.push_back(caps[i]);
    toy.samples.push_back(std::move(t));
  }
  return toy;
}

}  // namespace

TEST_CASE("fine-tuning drivers") {
  SUBCASE("zero learning rate leaves parameters unchanged") {
    IftToy toy = make_ift_toy(3, false);
    CaptionerParams before = toy.params;
    IftOptions opt;
    opt.lr = 0.0;
    opt.seed = 3;
    finetune_lrp_ce(toy.params, toy.samples, toy.vocab, builtin_stop_words(), opt);
    for (const auto& [name, t] : before.tensors) {
      const Tensor& after = toy.params.at(name);
      for (int i = 0; i < t.numel(); ++i) CHECK(after[i] == t[i]);
    }
  }

  SUBCASE("a stop-words-only vocabulary reduces to the baseline fine-tune") {
    IftToy a = make_ift_toy(7, true);
    IftToy b = make_ift_toy(7, true);
    IftOptions opt;
    opt.lr = 5e-4;
    opt.seed = 11;
    finetune_lrp_ce(a.params, a.samples, a.vocab, builtin_stop_words(), opt);
    finetune_baseline_ce(b.params, b.samples, b.vocab, opt);
    for (const auto& [name, t] : a.params.tensors) {
      const Tensor& other = b.params.at(name);
      for (int i = 0; i < t.numel(); ++i) {
        CHECK(t[i] == doctest::Approx(other[i]).epsilon(1e-12));
      }
    }
  }

  SUBCASE("differentiable omega keeps the forward values and changes gradients") {
    IftToy toy = make_ift_toy(13, false);
    // Forward equality: the on-tape reweighted logits must match the
    // constant-omega computation for the same step.
    const TrainSample& s = toy.samples[0];
    ForwardTrace tr = forward_teacher(toy.params, s.input, true, s.captions[0],
                                      toy.vocab.start_id());
    const StepResult& step = tr.steps[1];
    const Tensor& p = tr.tape.value(step.prob);
    int label = 0;
    for (int i = 1; i < p.numel(); ++i) {
      if (p[i] > p[label]) label = i;
    }
    ReweightedStep rw = reweight_step(toy.params.at("fc.w"), toy.params.at("fc.b"),
                                      tr.tape.value(step.context),
                                      tr.tape.value(step.fc_hidden), label, 0.01);

    IftToy t1 = make_ift_toy(13, false);
    IftToy t2 = make_ift_toy(13, false);
    // Pin a non-stop argmax at every step so the re-weighting always fires.
    int red_id = t1.vocab.id("red");
    t1.params.at("fc.b")[red_id] += 3.0;
    t2.params.at("fc.b")[red_id] += 3.0;
    IftOptions o1, o2;
    o1.seed = o2.seed = 21;
    o2.differentiate_omega = true;
    finetune_lrp_ce(t1.params, t1.samples, t1.vocab, builtin_stop_words(), o1);
    finetune_lrp_ce(t2.params, t2.samples, t2.vocab, builtin_stop_words(), o2);
    // Same loss values but different gradient paths: parameters diverge.
    int diffs = 0;
    for (const auto& [name, t] : t1.params.tensors) {
      const Tensor& other = t2.params.at(name);
      for (int i = 0; i < t.numel(); ++i) {
        if (t[i] != other[i]) {
          ++diffs;
          break;
        }
      }
    }
    CHECK(diffs > 0);
    CHECK(std::fabs(rw.p_hat.sum() - 1.0) < 1e-12);
  }

  SUBCASE("scst mode with constant reward is a no-op") {
    IftToy toy = make_ift_toy(17, false);
    CaptionerParams before = toy.params;
    IftOptions opt;
    opt.seed = 17;
    RewardFn constant = [](const std::vector<int>&, const TrainSample&) { return 2.0; };
    finetune_lrp_scst(toy.params, toy.samples, constant, toy.vocab, builtin_stop_words(),
                      opt);
    for (const auto& [name, t] : before.tensors) {
      const Tensor& after = toy.params.at(name);
      for (int i = 0; i < t.numel(); ++i) CHECK(after[i] == t[i]);
    }
  }
}
