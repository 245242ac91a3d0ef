#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "xcap/ablation.hpp"
#include "xcap/rng.hpp"

using namespace xcap;

namespace {

CaptionerConfig encoder_config() {
  CaptionerConfig cfg;
  cfg.attention = AttentionKind::kAdaptive;
  cfg.vocab_size = 9;
  cfg.d_w = 5;
  cfg.d_h = 8;
  cfg.d_a = 4;
  cfg.n_v = 16;
  cfg.max_len = 8;
  cfg.image_size = 32;
  cfg.enc_c1 = 4;
  cfg.uses_encoder = true;
  return cfg;
}

Tensor random_image(Rng& rng, int size = 32) {
  Tensor img({3, size, size});
  for (int i = 0; i < img.numel(); ++i) img[i] = rng.uniform(0, 1);
  return img;
}

}  // namespace

TEST_CASE("image ablation patch selection") {
  Rng rng(3);
  CaptionerConfig cfg = encoder_config();
  CaptionerParams params = CaptionerParams::init(cfg, rng);
  Tensor img = random_image(rng);
  Tensor fill({3}, {0.5, 0.5, 0.5});
  std::vector<int> tokens = {3, 4, 5};

  SUBCASE("zero relevance masks the first k patches in row-major order") {
    Tensor zero_map({32, 32});
    auto res = image_ablation(params, img, tokens, 2, zero_map, 5, 8, fill, 0, 1);
    CHECK(res.masked_patches == std::vector<int>{0, 1, 2, 3, 4});
  }
  SUBCASE("relevance ordering picks the hottest patches first") {
    Tensor map({32, 32});
    map.at2(10, 10) = 5.0;   // patch (1,1) -> id 5 for 8 px patches
    map.at2(28, 28) = 3.0;   // patch (3,3) -> id 15
    auto res = image_ablation(params, img, tokens, 2, map, 2, 8, fill, 0, 1);
    CHECK(res.masked_patches == std::vector<int>{5, 15});
  }
  SUBCASE("masking all patches reproduces the fill-image caption") {
    Tensor map({32, 32});
    auto res = image_ablation(params, img, tokens, 2, map, 16, 8, fill, 0, 1);
    Tensor fill_img({3, 32, 32});
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 32 * 32; ++i) fill_img.vec()[static_cast<size_t>(c * 1024 + i)] = 0.5;
    }
    DecodeResult mean_caption = greedy_decode(params, fill_img, false, 0, 1);
    int target = tokens[1];
    bool vanished_on_mean =
        std::find(mean_caption.tokens.begin(), mean_caption.tokens.end(), target) ==
        mean_caption.tokens.end();
    CHECK(res.word_vanished == vanished_on_mean);
  }
  SUBCASE("random baseline is deterministic under a seeded rng") {
    Rng r1(9), r2(9);
    auto a = image_ablation_random(params, img, tokens, 2, 4, 8, fill, 0, 1, r1);
    auto b = image_ablation_random(params, img, tokens, 2, 4, 8, fill, 0, 1, r2);
    CHECK(a.masked_patches == b.masked_patches);
    CHECK(a.prob_drop == b.prob_drop);
  }
}

TEST_CASE("word ablation") {
  Rng rng(5);
  CaptionerConfig cfg;
  cfg.attention = AttentionKind::kAdaptive;
  cfg.vocab_size = 9;
  cfg.d_w = 5;
  cfg.d_h = 8;
  cfg.d_a = 4;
  cfg.n_v = 4;
  cfg.max_len = 10;
  cfg.uses_encoder = false;
  CaptionerParams params = CaptionerParams::init(cfg, rng);
  Tensor feats({cfg.n_v, cfg.d_h});
  for (int i = 0; i < feats.numel(); ++i) feats[i] = rng.uniform(-1, 1);
  std::vector<int> tokens = {3, 4, 5, 6, 7};

  SUBCASE("k=0 changes nothing") {
    auto res = word_ablation(params, feats, true, tokens, 4, {0.5, -0.2, 0.9}, 0, 0);
    CHECK(res.prob_drop == 0.0);
    CHECK(res.removed_positions.empty());
  }
  SUBCASE("scores pick the most relevant positions, ties to earlier words") {
    auto res = word_ablation(params, feats, true, tokens, 4, {0.5, 0.9, 0.5}, 2, 0);
    CHECK(res.removed_positions == std::vector<int>{1, 2});
  }
  SUBCASE("a length-insensitive model sees no drop") {
    // Constant-state decoder: zero lstm weights, forget gate pinned off.
    CaptionerParams p2 = params;
    for (double& v : p2.at("lstm1.w").vec()) v = 0.0;
    for (double& v : p2.at("lstm2.w").vec()) v = 0.0;
    Tensor& b1 = p2.at("lstm1.b");
    Tensor& b2 = p2.at("lstm2.b");
    for (int j = 0; j < cfg.d_h; ++j) {
      b1[cfg.d_h + j] = -40.0;  // forget ~ 0: cell state is input-only
      b2[cfg.d_h + j] = -40.0;
    }
    auto res = word_ablation(p2, feats, true, tokens, 5, {0.1, 0.4, 0.3, 0.2}, 4, 0);
    CHECK(std::fabs(res.prob_drop) < 1e-9);
  }
  SUBCASE("argument validation") {
    CHECK_THROWS_AS(word_ablation(params, feats, true, tokens, 4, {0.5}, 1, 0),
                    DimensionError);
    CHECK_THROWS_AS(word_ablation(params, feats, true, tokens, 9, {}, 1, 0),
                    std::out_of_range);
  }
}

TEST_CASE("target word probability helper") {
  Rng rng(11);
  CaptionerConfig cfg;
  cfg.attention = AttentionKind::kMultiHead;
  cfg.vocab_size = 7;
  cfg.d_w = 4;
  cfg.d_h = 8;
  cfg.n_h = 2;
  cfg.n_v = 4;
  cfg.max_len = 6;
  cfg.uses_encoder = false;
  CaptionerParams params = CaptionerParams::init(cfg, rng);
  Tensor feats({cfg.n_v, cfg.d_h});
  for (int i = 0; i < feats.numel(); ++i) feats[i] = rng.uniform(-1, 1);
  std::vector<int> tokens = {3, 4};
  double p = target_word_probability(params, feats, true, tokens, 2, 0);
  CHECK(p > 0.0);
  CHECK(p < 1.0);

  ForwardTrace tr = forward_teacher(params, feats, true, {3}, 0);
  CHECK(p == doctest::Approx(tr.tape.value(tr.steps.back().prob)[4]).epsilon(1e-12));
}
