#include "xcap/ablation.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>

namespace xcap {

namespace {

struct PatchGrid {
  int rows = 0, cols = 0, patch = 0;
};

PatchGrid make_grid(int h, int w, int patch) {
  PatchGrid g;
  g.patch = patch;
  g.rows = (h + patch - 1) / patch;
  g.cols = (w + patch - 1) / patch;
  if (h % patch != 0 || w % patch != 0) {
    std::cerr << "image_ablation: patch size " << patch << " does not divide " << h
              << "x" << w << ", keeping partial edge patches\n";
  }
  return g;
}

Tensor mask_patches(const Tensor& image, const std::vector<int>& patches,
                    const PatchGrid& g, const Tensor& fill_rgb) {
  int c = image.extent(0), h = image.extent(1), w = image.extent(2);
  Tensor out = image;
  for (int pid : patches) {
    int py = pid / g.cols, px = pid % g.cols;
    for (int ic = 0; ic < c; ++ic) {
      for (int y = py * g.patch; y < std::min((py + 1) * g.patch, h); ++y) {
        for (int x = px * g.patch; x < std::min((px + 1) * g.patch, w); ++x) {
          out.at3(ic, y, x) = fill_rgb[ic];
        }
      }
    }
  }
  return out;
}

double probability_at(const CaptionerParams& params, const Tensor& input,
                      bool precomputed, const std::vector<int>& prefix, int target,
                      int start_id) {
  ForwardTrace tr = forward_teacher(params, input, precomputed, prefix, start_id);
  return tr.tape.value(tr.steps.back().prob)[target];
}

ImageAblationResult finish_image_ablation(const CaptionerParams& params,
                                          const Tensor& image,
                                          const std::vector<int>& tokens, int T,
                                          std::vector<int> chosen, const PatchGrid& g,
                                          const Tensor& fill_rgb, int start_id,
                                          int end_id) {
  ImageAblationResult res;
  res.masked_patches = std::move(chosen);
  Tensor masked = mask_patches(image, res.masked_patches, g, fill_rgb);

  std::vector<int> prefix(tokens.begin(), tokens.begin() + (T - 1));
  int target = tokens[static_cast<size_t>(T - 1)];
  double p_orig = probability_at(params, image, false, prefix, target, start_id);
  double p_new = probability_at(params, masked, false, prefix, target, start_id);
  res.prob_drop = p_orig - p_new;

  DecodeResult re = greedy_decode(params, masked, false, start_id, end_id);
  res.word_vanished =
      std::find(re.tokens.begin(), re.tokens.end(), target) == re.tokens.end();
  return res;
}

}  // namespace

ImageAblationResult image_ablation(const CaptionerParams& params, const Tensor& image,
                                   const std::vector<int>& tokens, int T,
                                   const Tensor& relevance_map, int k_patches,
                                   int patch_px, const Tensor& fill_rgb, int start_id,
                                   int end_id) {
  if (relevance_map.rank() != 2) throw DimensionError("relevance map must be (h,w)");
  int h = relevance_map.extent(0), w = relevance_map.extent(1);
  PatchGrid g = make_grid(h, w, patch_px);
  int n_patches = g.rows * g.cols;
  k_patches = std::min(k_patches, n_patches);

  std::vector<double> patch_rel(static_cast<size_t>(n_patches), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      patch_rel[static_cast<size_t>((y / patch_px) * g.cols + x / patch_px)] +=
          relevance_map.at2(y, x);
    }
  }
  std::vector<int> order(static_cast<size_t>(n_patches));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return patch_rel[static_cast<size_t>(a)] > patch_rel[static_cast<size_t>(b)];
  });
  order.resize(static_cast<size_t>(k_patches));
  return finish_image_ablation(params, image, tokens, T, std::move(order), g, fill_rgb,
                               start_id, end_id);
}

ImageAblationResult image_ablation_random(const CaptionerParams& params,
                                          const Tensor& image,
                                          const std::vector<int>& tokens, int T,
                                          int k_patches, int patch_px,
                                          const Tensor& fill_rgb, int start_id,
                                          int end_id, Rng& rng) {
  int h = image.extent(1), w = image.extent(2);
  PatchGrid g = make_grid(h, w, patch_px);
  int n_patches = g.rows * g.cols;
  k_patches = std::min(k_patches, n_patches);
  std::vector<int> order(static_cast<size_t>(n_patches));
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
  order.resize(static_cast<size_t>(k_patches));
  return finish_image_ablation(params, image, tokens, T, std::move(order), g, fill_rgb,
                               start_id, end_id);
}

namespace {

WordAblationResult finish_word_ablation(const CaptionerParams& params,
                                        const Tensor& input, bool precomputed,
                                        const std::vector<int>& tokens, int T,
                                        std::vector<int> removed, int start_id) {
  WordAblationResult res;
  std::sort(removed.begin(), removed.end());
  res.removed_positions = removed;

  std::vector<int> prefix(tokens.begin(), tokens.begin() + (T - 1));
  int target = tokens[static_cast<size_t>(T - 1)];
  double p_orig = probability_at(params, input, precomputed, prefix, target, start_id);

  std::vector<int> shortened;
  for (int pos = 1; pos <= static_cast<int>(prefix.size()); ++pos) {
    if (!std::binary_search(removed.begin(), removed.end(), pos)) {
      shortened.push_back(prefix[static_cast<size_t>(pos - 1)]);
    }
  }
  double p_new = probability_at(params, input, precomputed, shortened, target, start_id);
  res.prob_drop = p_orig - p_new;
  return res;
}

}  // namespace

double target_word_probability(const CaptionerParams& params, const Tensor& input,
                               bool precomputed, const std::vector<int>& tokens, int T,
                               int start_id) {
  if (T < 1 || T > static_cast<int>(tokens.size())) {
    throw std::out_of_range("target index out of range");
  }
  std::vector<int> prefix(tokens.begin(), tokens.begin() + (T - 1));
  return probability_at(params, input, precomputed, prefix,
                        tokens[static_cast<size_t>(T - 1)], start_id);
}

WordAblationResult word_ablation(const CaptionerParams& params, const Tensor& input,
                                 bool precomputed, const std::vector<int>& tokens, int T,
                                 const std::vector<double>& word_scores, int k_words,
                                 int start_id) {
  if (T < 1 || T > static_cast<int>(tokens.size())) {
    throw std::out_of_range("target index out of range");
  }
  if (static_cast<int>(word_scores.size()) != T - 1) {
    throw DimensionError("word_ablation: need one score per preceding word");
  }
  int avail = T - 1;
  k_words = std::min(k_words, avail);
  if (k_words == 0) {
    WordAblationResult res;  // removing nothing cannot change the probability
    return res;
  }
  std::vector<int> pos(static_cast<size_t>(avail));
  std::iota(pos.begin(), pos.end(), 1);
  std::stable_sort(pos.begin(), pos.end(), [&](int a, int b) {
    return word_scores[static_cast<size_t>(a - 1)] > word_scores[static_cast<size_t>(b - 1)];
  });
  pos.resize(static_cast<size_t>(k_words));
  return finish_word_ablation(params, input, precomputed, tokens, T, std::move(pos),
                              start_id);
}

WordAblationResult word_ablation_random(const CaptionerParams& params,
                                        const Tensor& input, bool precomputed,
                                        const std::vector<int>& tokens, int T,
                                        int k_words, int start_id, Rng& rng) {
  int avail = T - 1;
  k_words = std::min(k_words, avail);
  if (k_words == 0) return {};
  std::vector<int> pos(static_cast<size_t>(avail));
  std::iota(pos.begin(), pos.end(), 1);
  for (size_t i = pos.size(); i > 1; --i) {
    std::swap(pos[i - 1], pos[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
  pos.resize(static_cast<size_t>(k_words));
  return finish_word_ablation(params, input, precomputed, tokens, T, std::move(pos),
                              start_id);
}

}  // namespace xcap
