#include "xcap/explain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xcap/grad.hpp"

namespace xcap {

const char* explain_method_name(ExplainMethod m) {
  switch (m) {
    case ExplainMethod::kLrp: return "lrp";
    case ExplainMethod::kGradCam: return "gradcam";
    case ExplainMethod::kGuidedBackprop: return "guidedbp";
    case ExplainMethod::kGuidedGradCam: return "guidedgradcam";
    case ExplainMethod::kAttention: return "attention";
  }
  return "?";
}

ExplainMethod explain_method_from_name(const std::string& name) {
  if (name == "lrp") return ExplainMethod::kLrp;
  if (name == "gradcam") return ExplainMethod::kGradCam;
  if (name == "guidedbp") return ExplainMethod::kGuidedBackprop;
  if (name == "guidedgradcam") return ExplainMethod::kGuidedGradCam;
  if (name == "attention") return ExplainMethod::kAttention;
  throw std::invalid_argument("unknown explanation method: " + name);
}

Tensor bilinear_upsample(const Tensor& map, int out_h, int out_w) {
  if (map.rank() != 2) throw DimensionError("bilinear_upsample: map must be 2-d");
  int gh = map.extent(0), gw = map.extent(1);
  Tensor out({out_h, out_w});
  for (int y = 0; y < out_h; ++y) {
    double sy = (static_cast<double>(y) + 0.5) * gh / out_h - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(gh - 1));
    int y0 = static_cast<int>(sy);
    int y1 = std::min(y0 + 1, gh - 1);
    double fy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      double sx = (static_cast<double>(x) + 0.5) * gw / out_w - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(gw - 1));
      int x0 = static_cast<int>(sx);
      int x1 = std::min(x0 + 1, gw - 1);
      double fx = sx - x0;
      double top = map.at2(y0, x0) * (1 - fx) + map.at2(y0, x1) * fx;
      double bot = map.at2(y1, x0) * (1 - fx) + map.at2(y1, x1) * fx;
      out.at2(y, x) = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

namespace {

struct Replay {
  ForwardTrace trace;
  NodeId seed = kNoNode;
  double logit = 0.0;
  int target_token = -1;
};

// Forward the caption prefix so the last step scores the word at position T,
// then slice its logit as the seed.
Replay replay_for_target(const CaptionerParams& params, const Tensor& input,
                         bool precomputed, const std::vector<int>& tokens, int T,
                         int start_id) {
  if (T < 1 || T > static_cast<int>(tokens.size())) {
    throw std::out_of_range("explanation target index out of range");
  }
  Replay r;
  std::vector<int> prefix(tokens.begin(), tokens.begin() + (T - 1));
  r.trace = forward_teacher(params, input, precomputed, prefix, start_id);
  r.target_token = tokens[static_cast<size_t>(T - 1)];
  const StepResult& last = r.trace.steps.back();
  r.seed = r.trace.tape.slice(last.logits, r.target_token, 1);
  r.logit = r.trace.tape.value(r.seed).value();
  return r;
}

Tensor channel_mean(const Tensor& chw) {
  int c = chw.extent(0), h = chw.extent(1), w = chw.extent(2);
  Tensor out({h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int ic = 0; ic < c; ++ic) s += chw.at3(ic, y, x);
      out.at2(y, x) = s / c;
    }
  }
  return out;
}

Tensor row_sums(const Tensor& mat) {
  Tensor out({mat.extent(0)});
  for (int k = 0; k < mat.extent(0); ++k) {
    double s = 0.0;
    for (int j = 0; j < mat.extent(1); ++j) s += mat.at2(k, j);
    out[k] = s;
  }
  return out;
}

int grid_side(int n_v) {
  int g = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_v))));
  if (g * g != n_v) throw DimensionError("feature rows do not form a square grid");
  return g;
}

// Fills word scores and beta from a finished backward pass. `get` returns
// the per-node tensor or nullptr.
template <typename Get>
void fill_common(Explanation& e, const Replay& r, int T, Get get) {
  e.target_index = T;
  for (int k = 1; k < T; ++k) {
    const Tensor* re = get(r.trace.steps[static_cast<size_t>(k)].embed);
    e.word_scores.push_back(re ? re->sum() : 0.0);
  }
  const StepResult& last = r.trace.steps.back();
  if (last.beta != kNoNode) {
    e.beta = r.trace.tape.value(last.beta).value();
    e.has_beta = true;
  }
}

Explanation from_relevance(const Replay& r, const lrp::RelevanceMap& rmap, int T,
                           const CaptionerParams& params) {
  Explanation e;
  fill_common(e, r, T, [&](NodeId id) -> const Tensor* {
    return rmap.has(id) ? &rmap.at(id) : nullptr;
  });
  if (r.trace.image != kNoNode && rmap.has(r.trace.image)) {
    e.image_relevance = channel_mean(rmap.at(r.trace.image));
  }
  if (rmap.has(r.trace.features)) {
    e.feature_relevance = row_sums(rmap.at(r.trace.features));
    if (e.image_relevance.empty()) {
      int g = grid_side(params.cfg.n_v);
      e.image_relevance = bilinear_upsample(e.feature_relevance.reshaped({g, g}),
                                            params.cfg.image_size, params.cfg.image_size);
    }
  }
  return e;
}

Explanation from_gradient(const Replay& r, const GradientMap& g, int T,
                          const CaptionerParams& params, bool pixel_space) {
  Explanation e;
  fill_common(e, r, T, [&](NodeId id) -> const Tensor* {
    return g.has(id) ? &g.at(id) : nullptr;
  });
  if (pixel_space && r.trace.image != kNoNode && g.has(r.trace.image)) {
    e.image_relevance = channel_mean(g.at(r.trace.image));
  }
  if (g.has(r.trace.features)) {
    e.feature_relevance = row_sums(g.at(r.trace.features));
    if (e.image_relevance.empty()) {
      int gr = grid_side(params.cfg.n_v);
      e.image_relevance = bilinear_upsample(e.feature_relevance.reshaped({gr, gr}),
                                            params.cfg.image_size, params.cfg.image_size);
    }
  }
  return e;
}

}  // namespace

Explanation explain_lrp(const CaptionerParams& params, const Tensor& input,
                        bool precomputed, const std::vector<int>& tokens, int T,
                        const lrp::LrpConfig& cfg, int start_id) {
  Replay r = replay_for_target(params, input, precomputed, tokens, T, start_id);
  auto rmap = lrp::backward_relevance(r.trace.tape, r.seed, r.logit, cfg);
  return from_relevance(r, rmap, T, params);
}

namespace {

// Channel weights from the feature gradient, then a rectified weighted sum
// over the feature rows, reshaped and upsampled to image size.
Explanation build_cam(const Replay& r, const GradientMap& g, int T,
                      const CaptionerParams& params) {
  Explanation e;
  fill_common(e, r, T, [&](NodeId id) -> const Tensor* {
    return g.has(id) ? &g.at(id) : nullptr;
  });
  const Tensor& feats = r.trace.tape.value(r.trace.features);
  int n_v = feats.extent(0), d_v = feats.extent(1);
  Tensor w_i({d_v});
  if (g.has(r.trace.features)) {
    const Tensor& gf = g.at(r.trace.features);
    for (int k = 0; k < n_v; ++k) {
      for (int j = 0; j < d_v; ++j) w_i[j] += gf.at2(k, j);
    }
  }
  Tensor cam({n_v});
  for (int k = 0; k < n_v; ++k) {
    double s = 0.0;
    for (int j = 0; j < d_v; ++j) s += w_i[j] * feats.at2(k, j);
    cam[k] = std::max(s, 0.0);
  }
  e.feature_relevance = cam;
  int side = grid_side(n_v);
  int out = params.cfg.image_size;
  e.image_relevance = bilinear_upsample(cam.reshaped({side, side}), out, out);
  return e;
}

}  // namespace

Explanation explain_gradcam(const CaptionerParams& params, const Tensor& input,
                            bool precomputed, const std::vector<int>& tokens, int T,
                            int start_id) {
  Replay r = replay_for_target(params, input, precomputed, tokens, T, start_id);
  GradientMap g = backward_grad(r.trace.tape, r.seed);
  return build_cam(r, g, T, params);
}

Explanation explain_guided_backprop(const CaptionerParams& params, const Tensor& input,
                                    bool precomputed, const std::vector<int>& tokens,
                                    int T, int start_id) {
  Replay r = replay_for_target(params, input, precomputed, tokens, T, start_id);
  GradConfig gcfg;
  gcfg.guided_relu = true;
  GradientMap g = backward_grad(r.trace.tape, r.seed, gcfg);
  return from_gradient(r, g, T, params, /*pixel_space=*/true);
}

Explanation explain_guided_gradcam(const CaptionerParams& params, const Tensor& input,
                                   bool precomputed, const std::vector<int>& tokens,
                                   int T, int start_id) {
  Explanation cam = explain_gradcam(params, input, precomputed, tokens, T, start_id);
  Explanation gbp =
      explain_guided_backprop(params, input, precomputed, tokens, T, start_id);
  Explanation e = std::move(gbp);
  for (int i = 0; i < e.image_relevance.numel(); ++i) {
    e.image_relevance[i] *= cam.image_relevance[i];
  }
  return e;
}

Explanation attention_heatmap(const CaptionerParams& params, const Tensor& input,
                              bool precomputed, const std::vector<int>& tokens, int T,
                              int start_id) {
  Replay r = replay_for_target(params, input, precomputed, tokens, T, start_id);
  const StepResult& last = r.trace.steps.back();
  Explanation e;
  e.target_index = T;
  int side = grid_side(params.cfg.n_v);
  int out = params.cfg.image_size;
  if (params.cfg.attention == AttentionKind::kAdaptive) {
    Tensor alpha = r.trace.tape.value(last.alpha);
    e.feature_relevance = alpha;
    e.image_relevance = bilinear_upsample(alpha.reshaped({side, side}), out, out);
    e.beta = r.trace.tape.value(last.beta).value();
    e.has_beta = true;
  } else {
    Tensor mean({params.cfg.n_v});
    for (NodeId a : last.head_alpha) {
      Tensor alpha = r.trace.tape.value(a);
      e.per_head_maps.push_back(bilinear_upsample(alpha.reshaped({side, side}), out, out));
      for (int k = 0; k < params.cfg.n_v; ++k) mean[k] += alpha[k] / params.cfg.n_h;
    }
    e.feature_relevance = mean;
    e.image_relevance = bilinear_upsample(mean.reshaped({side, side}), out, out);
  }
  return e;
}

Explanation explain(ExplainMethod method, const CaptionerParams& params,
                    const Tensor& input, bool precomputed,
                    const std::vector<int>& tokens, int T,
                    const lrp::LrpConfig& cfg, int start_id) {
  switch (method) {
    case ExplainMethod::kLrp:
      return explain_lrp(params, input, precomputed, tokens, T, cfg, start_id);
    case ExplainMethod::kGradCam:
      return explain_gradcam(params, input, precomputed, tokens, T, start_id);
    case ExplainMethod::kGuidedBackprop:
      return explain_guided_backprop(params, input, precomputed, tokens, T, start_id);
    case ExplainMethod::kGuidedGradCam:
      return explain_guided_gradcam(params, input, precomputed, tokens, T, start_id);
    case ExplainMethod::kAttention:
      return attention_heatmap(params, input, precomputed, tokens, T, start_id);
  }
  throw std::invalid_argument("unknown explanation method");
}

std::vector<Explanation> per_head_explanations(ExplainMethod method,
                                               const CaptionerParams& params,
                                               const Tensor& input, bool precomputed,
                                               const std::vector<int>& tokens, int T,
                                               const lrp::LrpConfig& cfg, int start_id) {
  if (params.cfg.attention != AttentionKind::kMultiHead) {
    throw std::invalid_argument("per-head explanations need a multi-head model");
  }
  if (method == ExplainMethod::kAttention) {
    Explanation full = attention_heatmap(params, input, precomputed, tokens, T, start_id);
    std::vector<Explanation> out;
    for (size_t i = 0; i < full.per_head_maps.size(); ++i) {
      Explanation e;
      e.target_index = T;
      e.image_relevance = full.per_head_maps[i];
      out.push_back(std::move(e));
    }
    return out;
  }

  Replay r = replay_for_target(params, input, precomputed, tokens, T, start_id);
  std::vector<Explanation> out;
  for (int head = 0; head < params.cfg.n_h; ++head) {
    if (method == ExplainMethod::kLrp) {
      lrp::LrpConfig head_cfg = cfg;
      for (const StepResult& s : r.trace.steps) head_cfg.concat_keep[s.head_concat] = head;
      auto rmap = lrp::backward_relevance(r.trace.tape, r.seed, r.logit, head_cfg);
      out.push_back(from_relevance(r, rmap, T, params));
    } else if (method == ExplainMethod::kGradCam || method == ExplainMethod::kGuidedBackprop) {
      GradConfig gcfg;
      gcfg.guided_relu = method == ExplainMethod::kGuidedBackprop;
      for (const StepResult& s : r.trace.steps) gcfg.concat_keep[s.head_concat] = head;
      GradientMap g = backward_grad(r.trace.tape, r.seed, gcfg);
      if (method == ExplainMethod::kGradCam) {
        out.push_back(build_cam(r, g, T, params));
      } else {
        out.push_back(from_gradient(r, g, T, params, /*pixel_space=*/true));
      }
    } else {
      throw std::invalid_argument("per-head explanations: unsupported method");
    }
  }
  return out;
}

}  // namespace xcap
