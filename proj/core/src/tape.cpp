#include "xcap/tape.hpp"

#include <cmath>

namespace xcap {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kLinear: return "linear";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAffine: return "affine";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kRow: return "row";
    case OpKind::kSpatialRows: return "spatial_rows";
    case OpKind::kMeanRows: return "mean_rows";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kWeightedSum: return "weighted_sum";
    case OpKind::kDot: return "dot";
    case OpKind::kSumAll: return "sum_all";
    case OpKind::kEmbedRow: return "embed_row";
    case OpKind::kCrossEntropy: return "cross_entropy";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kMaxAbsNorm: return "max_abs_norm";
  }
  return "?";
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace

std::vector<double> softmax_values(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

Tensor compute_node(const Node& n, const std::vector<const Tensor*>& in) {
  switch (n.kind) {
    case OpKind::kLeaf:
      return n.value;

    case OpKind::kLinear: {
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      const Tensor& b = *in[2];
      require(w.rank() == 2, "linear: W must be 2-d");
      int dout = w.extent(0), din = w.extent(1);
      require(x.numel() == din, "linear: x length " + x.shape_str() +
                                    " does not match W " + w.shape_str());
      require(b.numel() == dout, "linear: bias length mismatch");
      Tensor z({dout});
      for (int j = 0; j < dout; ++j) {
        double acc = b[j];
        const double* wr = w.data() + static_cast<size_t>(j) * din;
        for (int i = 0; i < din; ++i) acc += wr[i] * x[i];
        z[j] = acc;
      }
      return z;
    }

    case OpKind::kMatMul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require(a.rank() == 2 && b.rank() == 2, "matmul: operands must be 2-d");
      int m = a.extent(0), k = a.extent(1), n2 = b.extent(1);
      require(b.extent(0) == k, "matmul: inner extents differ");
      Tensor c({m, n2});
      for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
          double av = a.at2(i, kk);
          if (av == 0.0) continue;
          const double* br = b.data() + static_cast<size_t>(kk) * n2;
          double* cr = c.data() + static_cast<size_t>(i) * n2;
          for (int j = 0; j < n2; ++j) cr[j] += av * br[j];
        }
      }
      return c;
    }

    case OpKind::kConv2d: {
      const Tensor& x = *in[0];
      const Tensor& w = *in[1];
      const Tensor& b = *in[2];
      require(x.rank() == 3, "conv2d: input must be (c,h,w)");
      require(w.rank() == 4, "conv2d: weight must be (oc,c,kh,kw)");
      int c = x.extent(0), h = x.extent(1), wd = x.extent(2);
      int oc = w.extent(0), kc = w.extent(1), kh = w.extent(2), kw = w.extent(3);
      require(kc == c, "conv2d: channel mismatch");
      require(b.numel() == oc, "conv2d: bias length mismatch");
      int stride = n.i0, pad = n.i1;
      int oh = (h + 2 * pad - kh) / stride + 1;
      int ow = (wd + 2 * pad - kw) / stride + 1;
      require(oh > 0 && ow > 0, "conv2d: kernel larger than padded input");
      Tensor z({oc, oh, ow});
      for (int o = 0; o < oc; ++o) {
        for (int oy = 0; oy < oh; ++oy) {
          for (int ox = 0; ox < ow; ++ox) {
            double acc = b[o];
            for (int ic = 0; ic < c; ++ic) {
              for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                  int ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= wd) continue;
                  acc += w.data()[((static_cast<size_t>(o) * c + ic) * kh + ky) * kw + kx] *
                         x.at3(ic, iy, ix);
                }
              }
            }
            z.at3(o, oy, ox) = acc;
          }
        }
      }
      return z;
    }

    case OpKind::kRelu: {
      Tensor y = *in[0];
      for (double& v : y.vec()) v = v > 0.0 ? v : 0.0;
      return y;
    }

    case OpKind::kTanh: {
      Tensor y = *in[0];
      for (double& v : y.vec()) v = std::tanh(v);
      return y;
    }

    case OpKind::kSigmoid: {
      Tensor y = *in[0];
      for (double& v : y.vec()) v = 1.0 / (1.0 + std::exp(-v));
      return y;
    }

    case OpKind::kAdd: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require(a.same_shape(b), "add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
      Tensor y = a;
      for (int i = 0; i < y.numel(); ++i) y[i] += b[i];
      return y;
    }

    case OpKind::kMul: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      if (a.same_shape(b)) {
        Tensor y = a;
        for (int i = 0; i < y.numel(); ++i) y[i] *= b[i];
        return y;
      }
      if (b.is_scalar()) {
        Tensor y = a;
        for (double& v : y.vec()) v *= b[0];
        return y;
      }
      if (a.is_scalar()) {
        Tensor y = b;
        for (double& v : y.vec()) v *= a[0];
        return y;
      }
      throw DimensionError("mul: shapes must match or one operand be scalar");
    }

    case OpKind::kScale: {
      Tensor y = *in[0];
      for (double& v : y.vec()) v *= n.d0;
      return y;
    }

    case OpKind::kAffine: {
      Tensor y = *in[0];
      for (double& v : y.vec()) v = n.d0 * v + n.d1;
      return y;
    }

    case OpKind::kConcat: {
      int total = 0;
      for (const Tensor* t : in) total += t->numel();
      Tensor y({total});
      int off = 0;
      for (const Tensor* t : in) {
        for (int i = 0; i < t->numel(); ++i) y[off + i] = (*t)[i];
        off += t->numel();
      }
      return y;
    }

    case OpKind::kSlice: {
      const Tensor& x = *in[0];
      require(n.i0 >= 0 && n.i1 > 0 && n.i0 + n.i1 <= x.numel(), "slice: range out of bounds");
      Tensor y({n.i1});
      for (int i = 0; i < n.i1; ++i) y[i] = x[n.i0 + i];
      return y;
    }

    case OpKind::kRow: {
      const Tensor& x = *in[0];
      require(x.rank() == 2, "row: input must be 2-d");
      require(n.i0 >= 0 && n.i0 < x.extent(0), "row: index out of range");
      int d = x.extent(1);
      Tensor y({d});
      for (int i = 0; i < d; ++i) y[i] = x.at2(n.i0, i);
      return y;
    }

    case OpKind::kSpatialRows: {
      const Tensor& x = *in[0];
      require(x.rank() == 3, "spatial_rows: input must be (c,h,w)");
      int c = x.extent(0), h = x.extent(1), w = x.extent(2);
      Tensor y({h * w, c});
      for (int ic = 0; ic < c; ++ic) {
        for (int iy = 0; iy < h; ++iy) {
          for (int ix = 0; ix < w; ++ix) {
            y.at2(iy * w + ix, ic) = x.at3(ic, iy, ix);
          }
        }
      }
      return y;
    }

    case OpKind::kMeanRows: {
      const Tensor& x = *in[0];
      require(x.rank() == 2, "mean_rows: input must be 2-d");
      int rows = x.extent(0), d = x.extent(1);
      Tensor y({d});
      for (int r = 0; r < rows; ++r) {
        for (int j = 0; j < d; ++j) y[j] += x.at2(r, j);
      }
      for (int j = 0; j < d; ++j) y[j] /= rows;
      return y;
    }

    case OpKind::kSoftmax: {
      const Tensor& x = *in[0];
      require(x.numel() >= 1, "softmax: empty input");
      return Tensor(x.shape(), softmax_values(x.vec()));
    }

    case OpKind::kWeightedSum: {
      const Tensor& w = *in[0];
      int nv = w.numel();
      require(static_cast<int>(in.size()) == nv + 1,
              "weighted_sum: weight/value count mismatch");
      int d = in[1]->numel();
      Tensor y({d});
      for (int k = 0; k < nv; ++k) {
        const Tensor& v = *in[1 + k];
        require(v.numel() == d, "weighted_sum: value length mismatch");
        for (int j = 0; j < d; ++j) y[j] += w[k] * v[j];
      }
      return y;
    }

    case OpKind::kDot: {
      const Tensor& a = *in[0];
      const Tensor& b = *in[1];
      require(a.numel() == b.numel(), "dot: length mismatch");
      double acc = 0.0;
      for (int i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
      return Tensor::scalar(acc);
    }

    case OpKind::kSumAll:
      return Tensor::scalar(in[0]->sum());

    case OpKind::kEmbedRow: {
      const Tensor& e = *in[0];
      require(e.rank() == 2, "embed_row: table must be 2-d");
      require(n.i0 >= 0 && n.i0 < e.extent(0), "embed_row: row out of range");
      int d = e.extent(1);
      Tensor y({d});
      for (int i = 0; i < d; ++i) y[i] = e.at2(n.i0, i);
      return y;
    }

    case OpKind::kCrossEntropy: {
      const Tensor& z = *in[0];
      require(n.i0 >= 0 && n.i0 < z.numel(), "cross_entropy: target out of range");
      double mx = z[0];
      for (int i = 0; i < z.numel(); ++i) mx = std::max(mx, z[i]);
      double lse = 0.0;
      for (int i = 0; i < z.numel(); ++i) lse += std::exp(z[i] - mx);
      lse = std::log(lse) + mx;
      return Tensor::scalar(lse - z[n.i0]);
    }

    case OpKind::kReciprocal: {
      Tensor y = *in[0];
      for (double& v : y.vec()) v = 1.0 / v;
      return y;
    }

    case OpKind::kMaxAbsNorm: {
      Tensor y = *in[0];
      double m = y.max_abs();
      if (m > 0.0) {
        for (double& v : y.vec()) v /= m;
      }
      return y;
    }
  }
  throw std::runtime_error("compute_node: unknown op kind");
}

std::vector<const Tensor*> Tape::gather(const std::vector<NodeId>& ids) const {
  std::vector<const Tensor*> out;
  out.reserve(ids.size());
  for (NodeId id : ids) out.push_back(&nodes_[static_cast<size_t>(id)].value);
  return out;
}

NodeId Tape::push(Node n, const char* what) {
  for (NodeId in : n.inputs) {
    if (in < 0 || in >= size()) throw DimensionError(std::string(what) + ": bad input id");
  }
  n.value = compute_node(n, gather(n.inputs));
  n.value.require_finite(what);
  nodes_.push_back(std::move(n));
  return size() - 1;
}

NodeId Tape::leaf(Tensor value, bool param) {
  value.require_finite("leaf");
  Node n;
  n.kind = OpKind::kLeaf;
  n.value = std::move(value);
  n.param = param;
  nodes_.push_back(std::move(n));
  return size() - 1;
}

NodeId Tape::linear(NodeId x, NodeId W, NodeId b) {
  Node n;
  n.kind = OpKind::kLinear;
  n.inputs = {x, W, b};
  return push(std::move(n), "linear");
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.kind = OpKind::kMatMul;
  n.inputs = {a, b};
  return push(std::move(n), "matmul");
}

NodeId Tape::conv2d(NodeId x, NodeId W, NodeId b, int stride, int pad) {
  Node n;
  n.kind = OpKind::kConv2d;
  n.inputs = {x, W, b};
  n.i0 = stride;
  n.i1 = pad;
  return push(std::move(n), "conv2d");
}

NodeId Tape::relu(NodeId x) {
  Node n;
  n.kind = OpKind::kRelu;
  n.inputs = {x};
  return push(std::move(n), "relu");
}

NodeId Tape::tanh_(NodeId x) {
  Node n;
  n.kind = OpKind::kTanh;
  n.inputs = {x};
  return push(std::move(n), "tanh");
}

NodeId Tape::sigmoid(NodeId x) {
  Node n;
  n.kind = OpKind::kSigmoid;
  n.inputs = {x};
  return push(std::move(n), "sigmoid");
}

NodeId Tape::add(NodeId a, NodeId b) {
  Node n;
  n.kind = OpKind::kAdd;
  n.inputs = {a, b};
  return push(std::move(n), "add");
}

NodeId Tape::mul(NodeId signal, NodeId gate) {
  Node n;
  n.kind = OpKind::kMul;
  n.inputs = {signal, gate};
  n.i0 = 0;  // relevance goes to the first input
  return push(std::move(n), "mul");
}

NodeId Tape::scale(NodeId x, double c) {
  Node n;
  n.kind = OpKind::kScale;
  n.inputs = {x};
  n.d0 = c;
  return push(std::move(n), "scale");
}

NodeId Tape::affine(NodeId x, double a, double b) {
  Node n;
  n.kind = OpKind::kAffine;
  n.inputs = {x};
  n.d0 = a;
  n.d1 = b;
  return push(std::move(n), "affine");
}

NodeId Tape::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Node n;
  n.kind = OpKind::kConcat;
  n.inputs = parts;
  return push(std::move(n), "concat");
}

NodeId Tape::slice(NodeId x, int start, int len) {
  Node n;
  n.kind = OpKind::kSlice;
  n.inputs = {x};
  n.i0 = start;
  n.i1 = len;
  return push(std::move(n), "slice");
}

NodeId Tape::row(NodeId matrix, int r) {
  Node n;
  n.kind = OpKind::kRow;
  n.inputs = {matrix};
  n.i0 = r;
  return push(std::move(n), "row");
}

NodeId Tape::spatial_rows(NodeId chw) {
  Node n;
  n.kind = OpKind::kSpatialRows;
  n.inputs = {chw};
  return push(std::move(n), "spatial_rows");
}

NodeId Tape::mean_rows(NodeId matrix) {
  Node n;
  n.kind = OpKind::kMeanRows;
  n.inputs = {matrix};
  return push(std::move(n), "mean_rows");
}

NodeId Tape::softmax(NodeId logits) {
  Node n;
  n.kind = OpKind::kSoftmax;
  n.inputs = {logits};
  return push(std::move(n), "softmax");
}

NodeId Tape::weighted_sum(NodeId weights, const std::vector<NodeId>& values) {
  Node n;
  n.kind = OpKind::kWeightedSum;
  n.inputs.reserve(values.size() + 1);
  n.inputs.push_back(weights);
  for (NodeId v : values) n.inputs.push_back(v);
  return push(std::move(n), "weighted_sum");
}

NodeId Tape::dot(NodeId a, NodeId b) {
  Node n;
  n.kind = OpKind::kDot;
  n.inputs = {a, b};
  return push(std::move(n), "dot");
}

NodeId Tape::sum_all(NodeId x) {
  Node n;
  n.kind = OpKind::kSumAll;
  n.inputs = {x};
  return push(std::move(n), "sum_all");
}

NodeId Tape::embed_row(NodeId table, int r) {
  Node n;
  n.kind = OpKind::kEmbedRow;
  n.inputs = {table};
  n.i0 = r;
  return push(std::move(n), "embed_row");
}

NodeId Tape::cross_entropy(NodeId logits, int target) {
  Node n;
  n.kind = OpKind::kCrossEntropy;
  n.inputs = {logits};
  n.i0 = target;
  return push(std::move(n), "cross_entropy");
}

NodeId Tape::reciprocal(NodeId x) {
  Node n;
  n.kind = OpKind::kReciprocal;
  n.inputs = {x};
  return push(std::move(n), "reciprocal");
}

NodeId Tape::max_abs_norm(NodeId x) {
  Node n;
  n.kind = OpKind::kMaxAbsNorm;
  n.inputs = {x};
  return push(std::move(n), "max_abs_norm");
}

Tensor Tape::replay(NodeId id) const {
  const Node& n = node(id);
  return compute_node(n, gather(n.inputs));
}

}  // namespace xcap
