#pragma once

#include "xcap/explain.hpp"
#include "xcap/rng.hpp"

namespace xcap {

struct ImageAblationResult {
  bool word_vanished = false;  // the target word is absent from the new caption
  double prob_drop = 0.0;      // original minus masked teacher-forced probability
  std::vector<int> masked_patches;  // row-major patch ids, as masked
};

// Sums the relevance map per non-overlapping patch, masks the top-k patches
// with the given fill color, re-captions, and re-scores the target word.
// Ties in patch relevance resolve toward the smaller row-major patch id, so
// an all-zero map masks the first k patches. A patch grid that does not
// divide the image keeps partial edge patches (with a warning).
ImageAblationResult image_ablation(const CaptionerParams& params, const Tensor& image,
                                   const std::vector<int>& tokens, int T,
                                   const Tensor& relevance_map, int k_patches,
                                   int patch_px, const Tensor& fill_rgb, int start_id,
                                   int end_id);

// Same protocol with uniformly chosen random patches.
ImageAblationResult image_ablation_random(const CaptionerParams& params,
                                          const Tensor& image,
                                          const std::vector<int>& tokens, int T,
                                          int k_patches, int patch_px,
                                          const Tensor& fill_rgb, int start_id,
                                          int end_id, Rng& rng);

struct WordAblationResult {
  double prob_drop = 0.0;
  std::vector<int> removed_positions;  // 1-based word positions removed
};

// Removes the k preceding words with the highest relevance scores, forwards
// the shortened prefix in a teacher-forcing pass, and reports the change of
// the target word's probability.
WordAblationResult word_ablation(const CaptionerParams& params, const Tensor& input,
                                 bool precomputed, const std::vector<int>& tokens, int T,
                                 const std::vector<double>& word_scores, int k_words,
                                 int start_id);

WordAblationResult word_ablation_random(const CaptionerParams& params,
                                        const Tensor& input, bool precomputed,
                                        const std::vector<int>& tokens, int T,
                                        int k_words, int start_id, Rng& rng);

// Probability of the word at 1-based position T under teacher forcing.
double target_word_probability(const CaptionerParams& params, const Tensor& input,
                               bool precomputed, const std::vector<int>& tokens, int T,
                               int start_id);

}  // namespace xcap
