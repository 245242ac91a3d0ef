#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xcap/tensor.hpp"

namespace xcap {

using NodeId = int;
inline constexpr NodeId kNoNode = -1;

enum class OpKind : uint8_t {
  kLeaf,
  kLinear,        // inputs [x, W, b]: z = W x + b
  kMatMul,        // inputs [A, B]: (m,k)x(k,n) -> (m,n)
  kConv2d,        // inputs [x, W, b]; i0=stride, i1=pad
  kRelu,
  kTanh,
  kSigmoid,
  kAdd,           // same-shape elementwise sum
  kMul,           // elementwise or scalar*tensor; i0 = signal input index
  kScale,         // d0 * x
  kAffine,        // d0 * x + d1
  kConcat,        // 1-d concat of vector inputs
  kSlice,         // i0=start, i1=len over a flat vector
  kRow,           // i0=row index of a (n,d) matrix -> (d)
  kSpatialRows,   // (c,h,w) -> (h*w, c)
  kMeanRows,      // (n,d) -> (d), arithmetic mean over rows
  kSoftmax,       // vector softmax, max-shifted
  kWeightedSum,   // inputs [w (n), v_1..v_n (d each)]: sum_k w_k v_k
  kDot,           // inputs [a, b] same length -> scalar
  kSumAll,        // sum of all elements -> scalar
  kEmbedRow,      // input [E (V,d)]; i0=row -> (d)
  kCrossEntropy,  // input [logits]; i0=target: -log softmax(logits)[i0]
  kReciprocal,    // 1/x elementwise
  kMaxAbsNorm,    // x / max|x|; all-zero input stays zero
};

const char* op_kind_name(OpKind kind);

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<NodeId> inputs;
  Tensor value;  // saved forward activation
  int i0 = 0;    // op attribute, meaning depends on kind
  int i1 = 0;
  double d0 = 0.0;
  double d1 = 0.0;
  bool param = false;  // leaf only: trainable parameter
};

// Recorded forward computation. Nodes are appended in execution order, so
// ids are already a topological order: every node's inputs precede it.
class Tape {
 public:
  NodeId leaf(Tensor value, bool param = false);

  NodeId linear(NodeId x, NodeId W, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId conv2d(NodeId x, NodeId W, NodeId b, int stride, int pad);
  NodeId relu(NodeId x);
  NodeId tanh_(NodeId x);
  NodeId sigmoid(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId signal, NodeId gate);  // relevance flows to `signal`
  NodeId scale(NodeId x, double c);
  NodeId affine(NodeId x, double a, double b);
  NodeId concat(const std::vector<NodeId>& parts);
  NodeId slice(NodeId x, int start, int len);
  NodeId row(NodeId matrix, int r);
  NodeId spatial_rows(NodeId chw);
  NodeId mean_rows(NodeId matrix);
  NodeId softmax(NodeId logits);
  NodeId weighted_sum(NodeId weights, const std::vector<NodeId>& values);
  NodeId dot(NodeId a, NodeId b);
  NodeId sum_all(NodeId x);
  NodeId embed_row(NodeId table, int r);
  NodeId cross_entropy(NodeId logits, int target);
  NodeId reciprocal(NodeId x);
  NodeId max_abs_norm(NodeId x);

  const Node& node(NodeId id) const { return nodes_[static_cast<size_t>(id)]; }
  const Tensor& value(NodeId id) const { return node(id).value; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Recompute a node's output from its saved inputs. Bit-identical to the
  // value stored at record time.
  Tensor replay(NodeId id) const;

 private:
  NodeId push(Node n, const char* what);
  std::vector<const Tensor*> gather(const std::vector<NodeId>& ids) const;

  std::vector<Node> nodes_;
};

// Forward semantics shared by record and replay.
Tensor compute_node(const Node& n, const std::vector<const Tensor*>& in);

// Standalone vector softmax (max-shifted), exposed for reuse.
std::vector<double> softmax_values(const std::vector<double>& logits);

}  // namespace xcap
