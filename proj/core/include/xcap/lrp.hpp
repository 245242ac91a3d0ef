#pragma once

#include <unordered_map>

#include "xcap/tape.hpp"

namespace xcap {
namespace lrp {

enum class Rule : uint8_t { kEpsilon, kAlpha };

struct LrpConfig {
  double epsilon = 0.01;  // stabilizer for the epsilon rule
  double alpha = 0.0;     // positive/negative balance for the alpha rule
  Rule dense_rule = Rule::kEpsilon;  // fully connected and projection layers
  Rule conv_rule = Rule::kAlpha;     // convolutional layers
  // Restrict flow through selected concat nodes to one input index
  // (per-head relevance propagation).
  std::unordered_map<NodeId, int> concat_keep;

  void validate() const;
};

// Per-node relevance tensors, aligned with tape ids. Only nodes visited by
// the backward walk hold a tensor; each matches that node's output shape.
class RelevanceMap {
 public:
  explicit RelevanceMap(int n) : r_(static_cast<size_t>(n)) {}
  bool has(NodeId id) const { return !r_[static_cast<size_t>(id)].empty(); }
  const Tensor& at(NodeId id) const { return r_[static_cast<size_t>(id)]; }
  Tensor& slot(NodeId id) { return r_[static_cast<size_t>(id)]; }
  int size() const { return static_cast<int>(r_.size()); }

 private:
  std::vector<Tensor> r_;
};

// Epsilon rule for a dense layer z = W y + b: relevance of output unit j is
// redistributed to input i in proportion to y_i * w_ji / (z_j + eps * sign(z_j)),
// with sign(0) := +1 and zero contribution when the denominator vanishes.
Tensor epsilon_rule(const Tensor& r_out, const Tensor& y, const Tensor& W,
                    const Tensor& b, double eps);

// Alpha rule: positive and negative contributions are separated and weighted
// (1+alpha) / -alpha against their own denominators z+ / z-. A branch whose
// denominator is zero contributes exactly 0.
Tensor alpha_rule(const Tensor& r_out, const Tensor& y, const Tensor& W,
                  const Tensor& b, double alpha);

// Signal-take-all redistribution through a weighted sum c = sum_k w_k v_k:
// the weights are treated as constants; relevance of c flows only into the
// value rows, epsilon-rule style per output dimension. Returns (n, d).
Tensor attention_signal_take_all(const Tensor& r_ctx, const Tensor& weights,
                                 const Tensor& values, double eps);

// Saved activations of one LSTM step with a fused gate layer
// z = W [x; h_prev] + b, gate order [input, forget, output, candidate].
struct LstmSaved {
  Tensor x, h_prev, m_prev;
  Tensor W, b;
  Tensor gate_i, gate_f, gate_o, candidate;
  Tensor m;  // new cell state
};

struct LstmStepRelevance {
  Tensor x, h_prev, m_prev;
};

// Relevance through one LSTM step. Gates act as constants: relevance enters
// via the new hidden state (r_h) and cell state (r_m), flows through the
// cell update into m_prev and the candidate, and through the candidate's
// linear map (epsilon rule) into x and h_prev.
LstmStepRelevance lstm_relevance_step(const Tensor& r_h, const Tensor& r_m,
                                      const LstmSaved& saved, double eps);

// Reverse walk over the tape applying a redistribution rule per node kind.
// `seed` must be a scalar node (one logit); `seed_value` is its relevance.
RelevanceMap backward_relevance(const Tape& tape, NodeId seed, double seed_value,
                                const LrpConfig& cfg);

}  // namespace lrp
}  // namespace xcap
