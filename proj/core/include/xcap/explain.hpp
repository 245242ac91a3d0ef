#pragma once

#include "xcap/captioner.hpp"
#include "xcap/lrp.hpp"

namespace xcap {

enum class ExplainMethod : uint8_t {
  kLrp,
  kGradCam,
  kGuidedBackprop,
  kGuidedGradCam,
  kAttention,
};

const char* explain_method_name(ExplainMethod m);
ExplainMethod explain_method_from_name(const std::string& name);

// Per-word explanation: a spatial map over the image, one score per
// preceding word, and optional per-head maps.
struct Explanation {
  int target_index = 0;              // 1-based position T of the explained word
  Tensor image_relevance;            // (h, w) signed map, channel-averaged
  Tensor feature_relevance;          // (n_v) per-cell scores (channel-summed)
  std::vector<double> word_scores;   // w_1 .. w_{T-1}
  std::vector<Tensor> per_head_maps; // multi-head attention only
  double beta = 0.0;                 // sentinel weight at step T (adaptive)
  bool has_beta = false;
};

// Bilinear resize of a 2-d map, align-corners off.
Tensor bilinear_upsample(const Tensor& map, int out_h, int out_w);

// All explainers replay the caption in a teacher-forcing pass and explain
// the word at 1-based position T (the word tokens[T-1]).
Explanation explain_lrp(const CaptionerParams& params, const Tensor& input,
                        bool precomputed, const std::vector<int>& tokens, int T,
                        const lrp::LrpConfig& cfg, int start_id);

Explanation explain_gradcam(const CaptionerParams& params, const Tensor& input,
                            bool precomputed, const std::vector<int>& tokens, int T,
                            int start_id);

Explanation explain_guided_backprop(const CaptionerParams& params, const Tensor& input,
                                    bool precomputed, const std::vector<int>& tokens,
                                    int T, int start_id);

Explanation explain_guided_gradcam(const CaptionerParams& params, const Tensor& input,
                                   bool precomputed, const std::vector<int>& tokens,
                                   int T, int start_id);

// The step-T attention weights as a map; per-head maps for multi-head models
// and the sentinel weight beta for adaptive ones. No word scores.
Explanation attention_heatmap(const CaptionerParams& params, const Tensor& input,
                              bool precomputed, const std::vector<int>& tokens, int T,
                              int start_id);

Explanation explain(ExplainMethod method, const CaptionerParams& params,
                    const Tensor& input, bool precomputed,
                    const std::vector<int>& tokens, int T,
                    const lrp::LrpConfig& cfg, int start_id);

// Head-restricted explanations: scores are backpropagated through one
// attention head at a time (multi-head models only).
std::vector<Explanation> per_head_explanations(ExplainMethod method,
                                               const CaptionerParams& params,
                                               const Tensor& input, bool precomputed,
                                               const std::vector<int>& tokens, int T,
                                               const lrp::LrpConfig& cfg, int start_id);

}  // namespace xcap
