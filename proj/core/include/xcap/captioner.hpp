#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "xcap/rng.hpp"
#include "xcap/tape.hpp"

namespace xcap {

enum class AttentionKind : uint8_t { kAdaptive, kMultiHead };

const char* attention_kind_name(AttentionKind k);
AttentionKind attention_kind_from_name(const std::string& name);

// Model hyperparameters. The visual feature dimension equals d_h so feature
// rows can be mixed with hidden-state-sized vectors.
struct CaptionerConfig {
  AttentionKind attention = AttentionKind::kAdaptive;
  int vocab_size = 0;
  int d_w = 24;   // word embedding size
  int d_h = 48;   // hidden state / feature channel size
  int d_a = 16;   // attention space size (adaptive)
  int n_v = 16;   // feature rows; encoder produces a 4x4 grid
  int n_h = 4;    // attention heads (multi-head)
  int image_size = 32;
  int image_channels = 3;
  int enc_c1 = 12;  // first conv layer channels
  int max_len = 20;
  bool uses_encoder = true;  // false: forward takes precomputed (n_v, d_h) features

  // The encoder is two stride-matching convolutions: image_size -> 8 -> 4.
  int grid() const { return 4; }
  int head_dim() const { return d_h / n_h; }
  void validate() const;

  std::map<std::string, std::string> to_key_values() const;
  static CaptionerConfig from_key_values(const std::map<std::string, std::string>& kv);
};

// All trainable weights, addressed by name.
struct CaptionerParams {
  CaptionerConfig cfg;
  std::map<std::string, Tensor> tensors;

  static CaptionerParams init(const CaptionerConfig& cfg, Rng& rng);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
};

// One LSTM step with a fused gate layer z = W [x; h_prev] + b,
// gate order [input, forget, output, candidate].
struct LstmNodes {
  NodeId h = kNoNode, m = kNoNode;
  NodeId zall = kNoNode, gate_i = kNoNode, gate_f = kNoNode, gate_o = kNoNode,
         candidate = kNoNode;
};
LstmNodes lstm_step(Tape& t, NodeId x, NodeId h_prev, NodeId m_prev, NodeId w, NodeId b);

struct StepNodes {
  NodeId h1 = kNoNode, m1 = kNoNode;  // decoder LSTM
  NodeId h2 = kNoNode, m2 = kNoNode;  // language LSTM (adaptive only)
};

struct StepResult {
  StepNodes state;
  int token_in = -1;
  NodeId embed = kNoNode;
  NodeId context = kNoNode;          // c_t
  NodeId fc_hidden = kNoNode;        // the hidden state added to c_t before fc
  NodeId fc_sum = kNoNode;           // c_t + hidden
  NodeId logits = kNoNode;
  NodeId prob = kNoNode;
  // adaptive attention
  NodeId alpha = kNoNode;            // softmax over the n_v visual logits
  NodeId combined = kNoNode;         // softmax over [a, b], length n_v + 1
  NodeId beta = kNoNode;             // scalar, last entry of `combined`
  NodeId sentinel = kNoNode;
  // multi-head attention
  std::vector<NodeId> head_alpha;    // per-head weights over n_v
  NodeId head_concat = kNoNode;      // concat of per-head summaries
  NodeId visual_gate = kNoNode;
};

// Binds one parameter set and one image (or feature matrix) onto a tape and
// appends decode steps. All decoding modes and the trainers share this
// forward path.
class BoundCaptioner {
 public:
  BoundCaptioner(const CaptionerParams& params, Tape& tape, const Tensor& input,
                 bool precomputed_features);

  StepNodes initial_state();
  StepResult step(int prev_token, const StepNodes& state);

  Tape& tape() { return *tape_; }
  NodeId image() const { return image_; }
  NodeId features() const { return features_; }
  NodeId global_feature() const { return ig_; }
  NodeId param_node(const std::string& name) const;
  const std::unordered_map<std::string, NodeId>& param_nodes() const { return param_ids_; }
  const CaptionerConfig& cfg() const { return cfg_; }

 private:
  StepResult adaptive_attention(StepResult r, NodeId h1, NodeId sentinel);
  StepResult multi_head_attention(StepResult r, NodeId h1);

  CaptionerConfig cfg_;
  Tape* tape_ = nullptr;
  std::unordered_map<std::string, NodeId> param_ids_;
  NodeId image_ = kNoNode;
  NodeId features_ = kNoNode;
  NodeId ig_ = kNoNode;
  NodeId zero_da_ = kNoNode;
  NodeId zero_dh_ = kNoNode;
  std::vector<NodeId> feature_rows_;
  std::vector<NodeId> adaptive_keys_;            // per-row attention-space projections
  std::vector<std::vector<NodeId>> head_keys_;   // [head][row]
  std::vector<std::vector<NodeId>> head_values_; // [head][row]
};

// Teacher-forced forward pass over [<start>, tokens...]: step s consumes the
// previous token and scores tokens[s] (the end token for the last step).
struct ForwardTrace {
  Tape tape;
  NodeId image = kNoNode;
  NodeId features = kNoNode;
  std::vector<StepResult> steps;
  std::unordered_map<std::string, NodeId> params;
};
ForwardTrace forward_teacher(const CaptionerParams& params, const Tensor& input,
                             bool precomputed, const std::vector<int>& tokens,
                             int start_id);

struct DecodeResult {
  std::vector<int> tokens;  // generated ids, end token excluded
  double log_prob = 0.0;    // cumulative log probability incl. the stop step
  bool ended = false;       // true if <end> was produced before the cap
};

// Greedy decoding; argmax ties break toward the smaller token id.
DecodeResult greedy_decode(const CaptionerParams& params, const Tensor& input,
                           bool precomputed, int start_id, int end_id);

// Beam search over cumulative log probabilities. beam=1 is greedy. Returns
// the best completed sequence; ties break toward lexicographically smaller
// token sequences.
DecodeResult beam_decode(const CaptionerParams& params, const Tensor& input,
                         bool precomputed, int start_id, int end_id, int beam);

}  // namespace xcap
