#include "xcap/lrp.hpp"

#include <cmath>

namespace xcap {
namespace lrp {

namespace {

inline double stabilized(double z, double eps) {
  return z + eps * (z >= 0.0 ? 1.0 : -1.0);
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

Tensor& acc(RelevanceMap& r, const Tape& tape, NodeId id) {
  Tensor& slot = r.slot(id);
  if (slot.empty()) slot = Tensor::zeros(tape.value(id).shape());
  return slot;
}

}  // namespace

void LrpConfig::validate() const {
  if (epsilon < 0.0) throw std::invalid_argument("LrpConfig: epsilon must be >= 0");
  if (alpha < 0.0) throw std::invalid_argument("LrpConfig: alpha must be >= 0");
}

Tensor epsilon_rule(const Tensor& r_out, const Tensor& y, const Tensor& W,
                    const Tensor& b, double eps) {
  require(W.rank() == 2, "epsilon_rule: W must be 2-d");
  int dout = W.extent(0), din = W.extent(1);
  require(y.numel() == din, "epsilon_rule: input length mismatch");
  require(r_out.numel() == dout, "epsilon_rule: relevance length mismatch");
  require(b.numel() == dout, "epsilon_rule: bias length mismatch");

  Tensor r_in({din});
  for (int j = 0; j < dout; ++j) {
    double rj = r_out[j];
    if (rj == 0.0) continue;
    const double* wr = W.data() + static_cast<size_t>(j) * din;
    double z = b[j];
    for (int i = 0; i < din; ++i) z += wr[i] * y[i];
    double denom = stabilized(z, eps);
    if (denom == 0.0) continue;
    double f = rj / denom;
    for (int i = 0; i < din; ++i) r_in[i] += f * y[i] * wr[i];
  }
  return r_in;
}

Tensor alpha_rule(const Tensor& r_out, const Tensor& y, const Tensor& W,
                  const Tensor& b, double alpha) {
  require(W.rank() == 2, "alpha_rule: W must be 2-d");
  int dout = W.extent(0), din = W.extent(1);
  require(y.numel() == din, "alpha_rule: input length mismatch");
  require(r_out.numel() == dout, "alpha_rule: relevance length mismatch");
  require(b.numel() == dout, "alpha_rule: bias length mismatch");

  Tensor r_in({din});
  for (int j = 0; j < dout; ++j) {
    double rj = r_out[j];
    if (rj == 0.0) continue;
    const double* wr = W.data() + static_cast<size_t>(j) * din;
    double zp = std::max(b[j], 0.0);
    double zn = std::min(b[j], 0.0);
    for (int i = 0; i < din; ++i) {
      double c = y[i] * wr[i];
      if (c > 0.0) zp += c;
      else zn += c;
    }
    for (int i = 0; i < din; ++i) {
      double c = y[i] * wr[i];
      double term = 0.0;
      if (c > 0.0 && zp > 0.0) term += (1.0 + alpha) * c / zp;
      if (c < 0.0 && zn < 0.0) term -= alpha * c / zn;
      r_in[i] += rj * term;
    }
  }
  return r_in;
}

Tensor attention_signal_take_all(const Tensor& r_ctx, const Tensor& weights,
                                 const Tensor& values, double eps) {
  require(values.rank() == 2, "signal_take_all: values must be (n,d)");
  int nv = values.extent(0), d = values.extent(1);
  require(weights.numel() == nv, "signal_take_all: weight/value count mismatch");
  require(r_ctx.numel() == d, "signal_take_all: context relevance length mismatch");

  Tensor r_v({nv, d});
  for (int j = 0; j < d; ++j) {
    double rj = r_ctx[j];
    if (rj == 0.0) continue;
    double z = 0.0;
    for (int k = 0; k < nv; ++k) z += weights[k] * values.at2(k, j);
    double denom = stabilized(z, eps);
    if (denom == 0.0) continue;
    double f = rj / denom;
    for (int k = 0; k < nv; ++k) r_v.at2(k, j) += f * weights[k] * values.at2(k, j);
  }
  return r_v;
}

LstmStepRelevance lstm_relevance_step(const Tensor& r_h, const Tensor& r_m,
                                      const LstmSaved& saved, double eps) {
  if (saved.x.empty() || saved.h_prev.empty() || saved.m_prev.empty() ||
      saved.W.empty() || saved.b.empty() || saved.gate_i.empty() ||
      saved.gate_f.empty() || saved.candidate.empty() || saved.m.empty()) {
    throw std::invalid_argument("lstm_relevance_step: missing saved state");
  }
  int dh = saved.m.numel();
  int dx = saved.x.numel();
  require(r_h.numel() == dh && r_m.numel() == dh,
          "lstm_relevance_step: relevance length mismatch");

  // h = o * tanh(m): the output gate is constant, tanh passes through.
  Tensor r_cell({dh});
  for (int j = 0; j < dh; ++j) r_cell[j] = r_h[j] + r_m[j];

  // m = f * m_prev + i * g: per-element epsilon split between the two paths.
  Tensor r_mprev({dh});
  Tensor r_g({dh});
  for (int j = 0; j < dh; ++j) {
    double denom = stabilized(saved.m[j], eps);
    if (denom == 0.0) continue;
    double f = r_cell[j] / denom;
    r_mprev[j] = f * saved.gate_f[j] * saved.m_prev[j];
    r_g[j] = f * saved.gate_i[j] * saved.candidate[j];
  }

  // g = tanh(z_g), z_g from rows [3dh, 4dh) of the fused gate layer over
  // [x; h_prev]. tanh passes through, then the epsilon rule applies.
  require(saved.W.rank() == 2 && saved.W.extent(0) == 4 * dh &&
              saved.W.extent(1) == dx + dh,
          "lstm_relevance_step: fused weight shape mismatch");
  Tensor Wg({dh, dx + dh});
  Tensor bg({dh});
  for (int j = 0; j < dh; ++j) {
    for (int i = 0; i < dx + dh; ++i) Wg.at2(j, i) = saved.W.at2(3 * dh + j, i);
    bg[j] = saved.b[3 * dh + j];
  }
  Tensor cat({dx + dh});
  for (int i = 0; i < dx; ++i) cat[i] = saved.x[i];
  for (int i = 0; i < dh; ++i) cat[dx + i] = saved.h_prev[i];
  Tensor r_cat = epsilon_rule(r_g, cat, Wg, bg, eps);

  LstmStepRelevance out;
  out.x = Tensor({dx});
  out.h_prev = Tensor({dh});
  out.m_prev = r_mprev;
  for (int i = 0; i < dx; ++i) out.x[i] = r_cat[i];
  for (int i = 0; i < dh; ++i) out.h_prev[i] = r_cat[dx + i];
  return out;
}

RelevanceMap backward_relevance(const Tape& tape, NodeId seed, double seed_value,
                                const LrpConfig& cfg) {
  cfg.validate();
  if (seed < 0 || seed >= tape.size()) {
    throw DimensionError("backward_relevance: bad seed id");
  }
  if (tape.value(seed).numel() != 1) {
    throw DimensionError("backward_relevance: seed must be a scalar node");
  }

  RelevanceMap r(tape.size());
  r.slot(seed) = Tensor::scalar(seed_value);

  for (NodeId id = seed; id >= 0; --id) {
    if (!r.has(id)) continue;
    const Node& n = tape.node(id);
    const Tensor& ry = r.at(id);
    const Tensor& y = n.value;

    switch (n.kind) {
      case OpKind::kLeaf:
        break;

      case OpKind::kLinear: {
        const Tensor& x = tape.value(n.inputs[0]);
        const Tensor& w = tape.value(n.inputs[1]);
        const Tensor& b = tape.value(n.inputs[2]);
        Tensor r_in = cfg.dense_rule == Rule::kEpsilon
                          ? epsilon_rule(ry, x, w, b, cfg.epsilon)
                          : alpha_rule(ry, x, w, b, cfg.alpha);
        Tensor& rx = acc(r, tape, n.inputs[0]);
        for (int i = 0; i < rx.numel(); ++i) rx[i] += r_in[i];
        break;
      }

      case OpKind::kMatMul: {
        // Row-wise dense layer y_r = B^T a_r with shared projection B.
        const Tensor& a = tape.value(n.inputs[0]);
        const Tensor& b = tape.value(n.inputs[1]);
        int m = a.extent(0), k = a.extent(1), n2 = b.extent(1);
        Tensor& ra = acc(r, tape, n.inputs[0]);
        Tensor wt({n2, k});
        for (int i = 0; i < k; ++i) {
          for (int j = 0; j < n2; ++j) wt.at2(j, i) = b.at2(i, j);
        }
        Tensor zero({n2});
        for (int row = 0; row < m; ++row) {
          Tensor arow({k});
          Tensor rrow({n2});
          for (int i = 0; i < k; ++i) arow[i] = a.at2(row, i);
          for (int j = 0; j < n2; ++j) rrow[j] = ry.at2(row, j);
          Tensor rin = cfg.dense_rule == Rule::kEpsilon
                           ? epsilon_rule(rrow, arow, wt, zero, cfg.epsilon)
                           : alpha_rule(rrow, arow, wt, zero, cfg.alpha);
          for (int i = 0; i < k; ++i) ra.at2(row, i) += rin[i];
        }
        break;
      }

      case OpKind::kConv2d: {
        const Tensor& x = tape.value(n.inputs[0]);
        const Tensor& w = tape.value(n.inputs[1]);
        const Tensor& b = tape.value(n.inputs[2]);
        int c = x.extent(0), h = x.extent(1), wd = x.extent(2);
        int oc = w.extent(0), kh = w.extent(2), kw = w.extent(3);
        int stride = n.i0, pad = n.i1;
        int oh = y.extent(1), ow = y.extent(2);
        Tensor& rx = acc(r, tape, n.inputs[0]);
        bool use_alpha = cfg.conv_rule == Rule::kAlpha;
        for (int o = 0; o < oc; ++o) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              double rj = ry.at3(o, oy, ox);
              if (rj == 0.0) continue;
              double z = b[o];
              double zp = std::max(b[o], 0.0);
              double zn = std::min(b[o], 0.0);
              for (int ic = 0; ic < c; ++ic) {
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= wd) continue;
                    double cv = w.data()[((static_cast<size_t>(o) * c + ic) * kh + ky) * kw + kx] *
                                x.at3(ic, iy, ix);
                    z += cv;
                    if (cv > 0.0) zp += cv;
                    else zn += cv;
                  }
                }
              }
              double denom = stabilized(z, cfg.epsilon);
              for (int ic = 0; ic < c; ++ic) {
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= wd) continue;
                    double cv = w.data()[((static_cast<size_t>(o) * c + ic) * kh + ky) * kw + kx] *
                                x.at3(ic, iy, ix);
                    double share = 0.0;
                    if (use_alpha) {
                      if (cv > 0.0 && zp > 0.0) share = (1.0 + cfg.alpha) * cv / zp;
                      else if (cv < 0.0 && zn < 0.0) share = -cfg.alpha * cv / zn;
                    } else if (denom != 0.0) {
                      share = cv / denom;
                    }
                    rx.at3(ic, iy, ix) += rj * share;
                  }
                }
              }
            }
          }
        }
        break;
      }

      case OpKind::kRelu:
      case OpKind::kTanh:
      case OpKind::kSigmoid:
      case OpKind::kSoftmax:
      case OpKind::kScale:
      case OpKind::kAffine:
      case OpKind::kReciprocal:
      case OpKind::kMaxAbsNorm: {
        // Activations and reparametrizations are relevance-transparent.
        Tensor& rx = acc(r, tape, n.inputs[0]);
        for (int i = 0; i < rx.numel(); ++i) rx[i] += ry[i];
        break;
      }

      case OpKind::kAdd: {
        // Epsilon rule with identity weights.
        const Tensor& a = tape.value(n.inputs[0]);
        const Tensor& b = tape.value(n.inputs[1]);
        Tensor& ra = acc(r, tape, n.inputs[0]);
        Tensor& rb = acc(r, tape, n.inputs[1]);
        for (int i = 0; i < y.numel(); ++i) {
          double denom = stabilized(y[i], cfg.epsilon);
          if (denom == 0.0) continue;
          double f = ry[i] / denom;
          ra[i] += f * a[i];
          rb[i] += f * b[i];
        }
        break;
      }

      case OpKind::kMul: {
        // Gated product: the signal side takes all relevance.
        const Tensor& sig = tape.value(n.inputs[n.i0]);
        Tensor& rs = acc(r, tape, n.inputs[n.i0]);
        if (sig.numel() == y.numel()) {
          for (int i = 0; i < y.numel(); ++i) rs[i] += ry[i];
        } else {  // scalar signal gating a vector
          for (int i = 0; i < y.numel(); ++i) rs[0] += ry[i];
        }
        break;
      }

      case OpKind::kConcat: {
        auto keep = cfg.concat_keep.find(id);
        int off = 0;
        for (size_t p = 0; p < n.inputs.size(); ++p) {
          const Tensor& part = tape.value(n.inputs[p]);
          if (keep == cfg.concat_keep.end() || keep->second == static_cast<int>(p)) {
            Tensor& rp = acc(r, tape, n.inputs[p]);
            for (int i = 0; i < part.numel(); ++i) rp[i] += ry[off + i];
          }
          off += part.numel();
        }
        break;
      }

      case OpKind::kSlice: {
        Tensor& rx = acc(r, tape, n.inputs[0]);
        for (int i = 0; i < n.i1; ++i) rx[n.i0 + i] += ry[i];
        break;
      }

      case OpKind::kRow: {
        Tensor& rx = acc(r, tape, n.inputs[0]);
        for (int i = 0; i < y.numel(); ++i) rx.at2(n.i0, i) += ry[i];
        break;
      }

      case OpKind::kSpatialRows: {
        const Tensor& x = tape.value(n.inputs[0]);
        int c = x.extent(0), h = x.extent(1), w = x.extent(2);
        Tensor& rx = acc(r, tape, n.inputs[0]);
        for (int ic = 0; ic < c; ++ic) {
          for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
              rx.at3(ic, iy, ix) += ry.at2(iy * w + ix, ic);
            }
          }
        }
        break;
      }

      case OpKind::kMeanRows: {
        const Tensor& x = tape.value(n.inputs[0]);
        int rows = x.extent(0), d = x.extent(1);
        Tensor& rx = acc(r, tape, n.inputs[0]);
        for (int j = 0; j < d; ++j) {
          double denom = stabilized(y[j], cfg.epsilon);
          if (denom == 0.0) continue;
          double f = ry[j] / denom;
          for (int k = 0; k < rows; ++k) rx.at2(k, j) += f * x.at2(k, j) / rows;
        }
        break;
      }

      case OpKind::kWeightedSum: {
        const Tensor& w = tape.value(n.inputs[0]);
        int nv = w.numel();
        int d = y.numel();
        for (int j = 0; j < d; ++j) {
          double rj = ry[j];
          if (rj == 0.0) continue;
          double denom = stabilized(y[j], cfg.epsilon);
          if (denom == 0.0) continue;
          double f = rj / denom;
          for (int k = 0; k < nv; ++k) {
            const Tensor& v = tape.value(n.inputs[1 + k]);
            acc(r, tape, n.inputs[1 + k])[j] += f * w[k] * v[j];
          }
        }
        break;
      }

      case OpKind::kDot: {
        // Second operand acts as constant weights.
        const Tensor& a = tape.value(n.inputs[0]);
        const Tensor& b = tape.value(n.inputs[1]);
        double denom = stabilized(y[0], cfg.epsilon);
        if (denom == 0.0) break;
        Tensor& ra = acc(r, tape, n.inputs[0]);
        double f = ry[0] / denom;
        for (int i = 0; i < a.numel(); ++i) ra[i] += f * a[i] * b[i];
        break;
      }

      case OpKind::kSumAll: {
        const Tensor& x = tape.value(n.inputs[0]);
        double denom = stabilized(y[0], cfg.epsilon);
        if (denom == 0.0) break;
        Tensor& rx = acc(r, tape, n.inputs[0]);
        double f = ry[0] / denom;
        for (int i = 0; i < x.numel(); ++i) rx[i] += f * x[i];
        break;
      }

      case OpKind::kEmbedRow: {
        Tensor& re = acc(r, tape, n.inputs[0]);
        for (int i = 0; i < y.numel(); ++i) re.at2(n.i0, i) += ry[i];
        break;
      }

      case OpKind::kCrossEntropy:
        throw std::runtime_error(
            "backward_relevance: loss nodes cannot lie on an explanation path");
    }
  }
  return r;
}

}  // namespace lrp
}  // namespace xcap
