#pragma once

#include <unordered_map>

#include "xcap/tape.hpp"

namespace xcap {

struct GradConfig {
  // GuidedBackpropagation: relu passes gradient only where the forward input
  // was positive AND the incoming gradient is positive.
  bool guided_relu = false;
  // Restrict flow through selected concat nodes to a single input index,
  // e.g. to backpropagate through one attention head only.
  std::unordered_map<NodeId, int> concat_keep;
};

// Gradients of a scalar seed w.r.t. every node it depends on. The result is
// aligned with tape ids; nodes the seed does not reach hold empty tensors.
class GradientMap {
 public:
  explicit GradientMap(int n) : g_(static_cast<size_t>(n)) {}
  bool has(NodeId id) const { return !g_[static_cast<size_t>(id)].empty(); }
  const Tensor& at(NodeId id) const { return g_[static_cast<size_t>(id)]; }
  Tensor& slot(NodeId id) { return g_[static_cast<size_t>(id)]; }

 private:
  std::vector<Tensor> g_;
};

GradientMap backward_grad(const Tape& tape, NodeId seed, const GradConfig& cfg = {});

}  // namespace xcap
