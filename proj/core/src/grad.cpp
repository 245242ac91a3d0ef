#include "xcap/grad.hpp"

#include <cmath>

namespace xcap {

namespace {

Tensor& acc(GradientMap& g, const Tape& tape, NodeId id) {
  Tensor& slot = g.slot(id);
  if (slot.empty()) slot = Tensor::zeros(tape.value(id).shape());
  return slot;
}

}  // namespace

GradientMap backward_grad(const Tape& tape, NodeId seed, const GradConfig& cfg) {
  if (seed < 0 || seed >= tape.size()) throw DimensionError("backward_grad: bad seed id");
  if (tape.value(seed).numel() != 1) {
    throw DimensionError("backward_grad: seed must be scalar, got shape " +
                         tape.value(seed).shape_str());
  }

  GradientMap g(tape.size());
  g.slot(seed) = Tensor::scalar(1.0);

  for (NodeId id = seed; id >= 0; --id) {
    if (!g.has(id)) continue;
    const Node& n = tape.node(id);
    const Tensor& gy = g.at(id);
    const Tensor& y = n.value;

    switch (n.kind) {
      case OpKind::kLeaf:
        break;

      case OpKind::kLinear: {
        const Tensor& x = tape.value(n.inputs[0]);
        const Tensor& w = tape.value(n.inputs[1]);
        int dout = w.extent(0), din = w.extent(1);
        Tensor& gx = acc(g, tape, n.inputs[0]);
        Tensor& gw = acc(g, tape, n.inputs[1]);
        Tensor& gb = acc(g, tape, n.inputs[2]);
        for (int j = 0; j < dout; ++j) {
          double gj = gy[j];
          if (gj == 0.0) continue;
          const double* wr = w.data() + static_cast<size_t>(j) * din;
          double* gwr = gw.data() + static_cast<size_t>(j) * din;
          for (int i = 0; i < din; ++i) {
            gx[i] += gj * wr[i];
            gwr[i] += gj * x[i];
          }
          gb[j] += gj;
        }
        break;
      }

      case OpKind::kMatMul: {
        const Tensor& a = tape.value(n.inputs[0]);
        const Tensor& b = tape.value(n.inputs[1]);
        int m = a.extent(0), k = a.extent(1), n2 = b.extent(1);
        Tensor& ga = acc(g, tape, n.inputs[0]);
        Tensor& gb = acc(g, tape, n.inputs[1]);
        for (int i = 0; i < m; ++i) {
          for (int kk = 0; kk < k; ++kk) {
            double s = 0.0;
            for (int j = 0; j < n2; ++j) s += gy.at2(i, j) * b.at2(kk, j);
            ga.at2(i, kk) += s;
          }
        }
        for (int kk = 0; kk < k; ++kk) {
          for (int j = 0; j < n2; ++j) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += a.at2(i, kk) * gy.at2(i, j);
            gb.at2(kk, j) += s;
          }
        }
        break;
      }

      case OpKind::kConv2d: {
        const Tensor& x = tape.value(n.inputs[0]);
        const Tensor& w = tape.value(n.inputs[1]);
        int c = x.extent(0), h = x.extent(1), wd = x.extent(2);
        int oc = w.extent(0), kh = w.extent(2), kw = w.extent(3);
        int stride = n.i0, pad = n.i1;
        int oh = y.extent(1), ow = y.extent(2);
        Tensor& gx = acc(g, tape, n.inputs[0]);
        Tensor& gw = acc(g, tape, n.inputs[1]);
        Tensor& gb = acc(g, tape, n.inputs[2]);
        for (int o = 0; o < oc; ++o) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              double gj = gy.at3(o, oy, ox);
              if (gj == 0.0) continue;
              gb[o] += gj;
              for (int ic = 0; ic < c; ++ic) {
                for (int ky = 0; ky < kh; ++ky) {
                  int iy = oy * stride + ky - pad;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    if (ix < 0 || ix >= wd) continue;
                    size_t wi = ((static_cast<size_t>(o) * c + ic) * kh + ky) * kw + kx;
                    gx.at3(ic, iy, ix) += gj * w.data()[wi];
                    gw.data()[wi] += gj * x.at3(ic, iy, ix);
                  }
                }
              }
            }
          }
        }
        break;
      }

      case OpKind::kRelu: {
        const Tensor& x = tape.value(n.inputs[0]);
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < x.numel(); ++i) {
          double gi = gy[i];
          if (cfg.guided_relu && gi <= 0.0) continue;
          if (x[i] > 0.0) gx[i] += gi;
        }
        break;
      }

      case OpKind::kTanh: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < y.numel(); ++i) gx[i] += gy[i] * (1.0 - y[i] * y[i]);
        break;
      }

      case OpKind::kSigmoid: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < y.numel(); ++i) gx[i] += gy[i] * y[i] * (1.0 - y[i]);
        break;
      }

      case OpKind::kAdd: {
        Tensor& ga = acc(g, tape, n.inputs[0]);
        Tensor& gb = acc(g, tape, n.inputs[1]);
        for (int i = 0; i < y.numel(); ++i) {
          ga[i] += gy[i];
          gb[i] += gy[i];
        }
        break;
      }

      case OpKind::kMul: {
        const Tensor& a = tape.value(n.inputs[0]);
        const Tensor& b = tape.value(n.inputs[1]);
        Tensor& ga = acc(g, tape, n.inputs[0]);
        Tensor& gb = acc(g, tape, n.inputs[1]);
        if (a.same_shape(b)) {
          for (int i = 0; i < y.numel(); ++i) {
            ga[i] += gy[i] * b[i];
            gb[i] += gy[i] * a[i];
          }
        } else if (b.is_scalar()) {
          for (int i = 0; i < y.numel(); ++i) {
            ga[i] += gy[i] * b[0];
            gb[0] += gy[i] * a[i];
          }
        } else {  // a scalar
          for (int i = 0; i < y.numel(); ++i) {
            gb[i] += gy[i] * a[0];
            ga[0] += gy[i] * b[i];
          }
        }
        break;
      }

      case OpKind::kScale: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < y.numel(); ++i) gx[i] += gy[i] * n.d0;
        break;
      }

      case OpKind::kAffine: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < y.numel(); ++i) gx[i] += gy[i] * n.d0;
        break;
      }

      case OpKind::kConcat: {
        auto keep = cfg.concat_keep.find(id);
        int off = 0;
        for (size_t p = 0; p < n.inputs.size(); ++p) {
          const Tensor& part = tape.value(n.inputs[p]);
          if (keep == cfg.concat_keep.end() || keep->second == static_cast<int>(p)) {
            Tensor& gp = acc(g, tape, n.inputs[p]);
            for (int i = 0; i < part.numel(); ++i) gp[i] += gy[off + i];
          }
          off += part.numel();
        }
        break;
      }

      case OpKind::kSlice: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < n.i1; ++i) gx[n.i0 + i] += gy[i];
        break;
      }

      case OpKind::kRow: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        int d = y.numel();
        for (int i = 0; i < d; ++i) gx.at2(n.i0, i) += gy[i];
        break;
      }

      case OpKind::kSpatialRows: {
        const Tensor& x = tape.value(n.inputs[0]);
        int c = x.extent(0), h = x.extent(1), w = x.extent(2);
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int ic = 0; ic < c; ++ic) {
          for (int iy = 0; iy < h; ++iy) {
            for (int ix = 0; ix < w; ++ix) {
              gx.at3(ic, iy, ix) += gy.at2(iy * w + ix, ic);
            }
          }
        }
        break;
      }

      case OpKind::kMeanRows: {
        const Tensor& x = tape.value(n.inputs[0]);
        int rows = x.extent(0), d = x.extent(1);
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int r = 0; r < rows; ++r) {
          for (int j = 0; j < d; ++j) gx.at2(r, j) += gy[j] / rows;
        }
        break;
      }

      case OpKind::kSoftmax: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        double dot = 0.0;
        for (int i = 0; i < y.numel(); ++i) dot += gy[i] * y[i];
        for (int i = 0; i < y.numel(); ++i) gx[i] += y[i] * (gy[i] - dot);
        break;
      }

      case OpKind::kWeightedSum: {
        const Tensor& w = tape.value(n.inputs[0]);
        int nv = w.numel();
        int d = y.numel();
        Tensor& gw = acc(g, tape, n.inputs[0]);
        for (int k = 0; k < nv; ++k) {
          const Tensor& v = tape.value(n.inputs[1 + k]);
          Tensor& gv = acc(g, tape, n.inputs[1 + k]);
          double s = 0.0;
          for (int j = 0; j < d; ++j) {
            gv[j] += gy[j] * w[k];
            s += gy[j] * v[j];
          }
          gw[k] += s;
        }
        break;
      }

      case OpKind::kDot: {
        const Tensor& a = tape.value(n.inputs[0]);
        const Tensor& b = tape.value(n.inputs[1]);
        Tensor& ga = acc(g, tape, n.inputs[0]);
        Tensor& gb = acc(g, tape, n.inputs[1]);
        for (int i = 0; i < a.numel(); ++i) {
          ga[i] += gy[0] * b[i];
          gb[i] += gy[0] * a[i];
        }
        break;
      }

      case OpKind::kSumAll: {
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < gx.numel(); ++i) gx[i] += gy[0];
        break;
      }

      case OpKind::kEmbedRow: {
        Tensor& ge = acc(g, tape, n.inputs[0]);
        int d = y.numel();
        for (int i = 0; i < d; ++i) ge.at2(n.i0, i) += gy[i];
        break;
      }

      case OpKind::kCrossEntropy: {
        const Tensor& z = tape.value(n.inputs[0]);
        Tensor& gz = acc(g, tape, n.inputs[0]);
        std::vector<double> p = softmax_values(z.vec());
        for (int i = 0; i < z.numel(); ++i) {
          gz[i] += gy[0] * (p[i] - (i == n.i0 ? 1.0 : 0.0));
        }
        break;
      }

      case OpKind::kReciprocal: {
        const Tensor& x = tape.value(n.inputs[0]);
        Tensor& gx = acc(g, tape, n.inputs[0]);
        for (int i = 0; i < x.numel(); ++i) gx[i] -= gy[i] / (x[i] * x[i]);
        break;
      }

      case OpKind::kMaxAbsNorm: {
        const Tensor& x = tape.value(n.inputs[0]);
        double m = x.max_abs();
        Tensor& gx = acc(g, tape, n.inputs[0]);
        if (m > 0.0) {
          int kstar = 0;
          for (int i = 0; i < x.numel(); ++i) {
            if (std::fabs(x[i]) == m) {
              kstar = i;
              break;
            }
          }
          double s = 0.0;
          for (int i = 0; i < x.numel(); ++i) {
            gx[i] += gy[i] / m;
            s += gy[i] * x[i];
          }
          gx[kstar] -= s * (x[kstar] >= 0.0 ? 1.0 : -1.0) / (m * m);
        }
        break;
      }
    }
  }
  return g;
}

}  // namespace xcap
