#pragma once

#include <cmath>
#include <vector>

#include "xcap/captioner.hpp"

// Straight-line recomputation of the adaptive-attention decode step on plain
// vectors, used as a spreadsheet-style oracle for the tape-built model.

namespace xcap::testing {

using Vec = std::vector<double>;

inline Vec mat_vec(const Tensor& w, const Vec& x, const Vec* bias = nullptr) {
  Vec out(static_cast<size_t>(w.extent(0)), 0.0);
  for (int j = 0; j < w.extent(0); ++j) {
    double s = bias ? (*bias)[static_cast<size_t>(j)] : 0.0;
    for (int i = 0; i < w.extent(1); ++i) s += w.at2(j, i) * x[static_cast<size_t>(i)];
    out[static_cast<size_t>(j)] = s;
  }
  return out;
}

inline Vec vsigmoid(Vec v) {
  for (double& x : v) x = 1.0 / (1.0 + std::exp(-x));
  return v;
}
inline Vec vtanh(Vec v) {
  for (double& x : v) x = std::tanh(x);
  return v;
}
inline Vec vsoftmax(const Vec& v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  Vec out(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

struct OracleState {
  Vec h1, m1, h2, m2;
};

struct OracleStepOut {
  Vec p;
  Vec combined;
  double beta = 0.0;
  OracleState state;
};

// One adaptive decode step over precomputed features (n_v, d_h).
inline OracleStepOut oracle_adaptive_step(const CaptionerParams& params,
                                          const Tensor& features, int token,
                                          const OracleState& st) {
  const CaptionerConfig& cfg = params.cfg;
  size_t dh = static_cast<size_t>(cfg.d_h);

  // x1 = [embed(token), mean feature row, h2_prev]
  Vec x1;
  const Tensor& embed = params.at("embed");
  for (int i = 0; i < cfg.d_w; ++i) x1.push_back(embed.at2(token, i));
  for (int j = 0; j < cfg.d_h; ++j) {
    double s = 0.0;
    for (int k = 0; k < cfg.n_v; ++k) s += features.at2(k, j);
    x1.push_back(s / cfg.n_v);
  }
  for (double v : st.h2) x1.push_back(v);

  // Sentinel gate before the cell update.
  Vec sg = mat_vec(params.at("sent.wx"), x1);
  Vec sgh = mat_vec(params.at("sent.wh"), st.h1);
  for (size_t j = 0; j < dh; ++j) sg[j] += sgh[j];
  sg = vsigmoid(sg);

  auto lstm = [&](const std::string& prefix, const Vec& x, const Vec& h_prev,
                  const Vec& m_prev) {
    const Tensor& w = params.at(prefix + ".w");
    const Tensor& b = params.at(prefix + ".b");
    Vec cat = x;
    for (double v : h_prev) cat.push_back(v);
    Vec z(static_cast<size_t>(4 * cfg.d_h));
    for (int j = 0; j < 4 * cfg.d_h; ++j) {
      double s = b[j];
      for (size_t i = 0; i < cat.size(); ++i) s += w.at2(j, static_cast<int>(i)) * cat[i];
      z[static_cast<size_t>(j)] = s;
    }
    Vec h(dh), m(dh);
    for (size_t j = 0; j < dh; ++j) {
      double gi = 1.0 / (1.0 + std::exp(-z[j]));
      double gf = 1.0 / (1.0 + std::exp(-z[dh + j]));
      double go = 1.0 / (1.0 + std::exp(-z[2 * dh + j]));
      double gc = std::tanh(z[3 * dh + j]);
      m[j] = gf * m_prev[j] + gi * gc;
      h[j] = go * std::tanh(m[j]);
    }
    return std::make_pair(h, m);
  };

  auto [h1, m1] = lstm("lstm1", x1, st.h1, st.m1);

  Vec sentinel(dh);
  for (size_t j = 0; j < dh; ++j) sentinel[j] = sg[j] * std::tanh(m1[j]);

  // Attention logits over the feature rows and the sentinel.
  const Tensor& wa = params.at("att.wa");
  Vec query = mat_vec(params.at("att.wg"), h1);
  Vec logits;
  for (int k = 0; k < cfg.n_v; ++k) {
    Vec rowk(static_cast<size_t>(cfg.d_h));
    for (int j = 0; j < cfg.d_h; ++j) rowk[static_cast<size_t>(j)] = features.at2(k, j);
    Vec e = mat_vec(params.at("att.wi"), rowk);
    for (int j = 0; j < cfg.d_a; ++j) e[static_cast<size_t>(j)] += query[static_cast<size_t>(j)];
    e = vtanh(e);
    double a = 0.0;
    for (int j = 0; j < cfg.d_a; ++j) a += wa[j] * e[static_cast<size_t>(j)];
    logits.push_back(a);
  }
  Vec es = mat_vec(params.at("att.ws"), sentinel);
  for (int j = 0; j < cfg.d_a; ++j) es[static_cast<size_t>(j)] += query[static_cast<size_t>(j)];
  es = vtanh(es);
  double b_logit = 0.0;
  for (int j = 0; j < cfg.d_a; ++j) b_logit += wa[j] * es[static_cast<size_t>(j)];
  logits.push_back(b_logit);

  Vec combined = vsoftmax(logits);
  double beta = combined.back();
  Vec context(dh, 0.0);
  for (int k = 0; k < cfg.n_v; ++k) {
    for (size_t j = 0; j < dh; ++j) {
      context[j] += combined[static_cast<size_t>(k)] * features.at2(k, static_cast<int>(j));
    }
  }
  for (size_t j = 0; j < dh; ++j) context[j] += beta * sentinel[j];

  Vec x2 = context;
  for (double v : h1) x2.push_back(v);
  auto [h2, m2] = lstm("lstm2", x2, st.h2, st.m2);

  Vec u(dh);
  for (size_t j = 0; j < dh; ++j) u[j] = context[j] + h2[j];
  Vec bfc(params.at("fc.b").vec());
  Vec logits_fc = mat_vec(params.at("fc.w"), u, &bfc);

  OracleStepOut out;
  out.p = vsoftmax(logits_fc);
  out.combined = combined;
  out.beta = beta;
  out.state = {h1, m1, h2, m2};
  return out;
}

}  // namespace xcap::testing
