#include "xcap/captioner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xcap {

const char* attention_kind_name(AttentionKind k) {
  return k == AttentionKind::kAdaptive ? "adaptive" : "multihead";
}

AttentionKind attention_kind_from_name(const std::string& name) {
  if (name == "adaptive") return AttentionKind::kAdaptive;
  if (name == "multihead") return AttentionKind::kMultiHead;
  throw std::invalid_argument("unknown attention kind: " + name);
}

void CaptionerConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("config: vocab_size must be positive");
  if (d_w <= 0 || d_h <= 0 || d_a <= 0 || n_v <= 0 || max_len <= 0) {
    throw std::invalid_argument("config: dimensions must be positive");
  }
  if (attention == AttentionKind::kMultiHead) {
    if (n_h <= 0 || d_h % n_h != 0) {
      throw std::invalid_argument("config: d_h must be divisible by n_h");
    }
  }
  if (uses_encoder) {
    if (image_size % 8 != 0 || image_size < 16) {
      throw std::invalid_argument("config: image_size must be a multiple of 8, >= 16");
    }
    if (n_v != grid() * grid()) {
      throw std::invalid_argument("config: n_v must equal the encoder grid size squared");
    }
  }
}

std::map<std::string, std::string> CaptionerConfig::to_key_values() const {
  std::map<std::string, std::string> kv;
  kv["model"] = attention_kind_name(attention);
  kv["vocab_size"] = std::to_string(vocab_size);
  kv["d_w"] = std::to_string(d_w);
  kv["d_h"] = std::to_string(d_h);
  kv["d_a"] = std::to_string(d_a);
  kv["n_v"] = std::to_string(n_v);
  kv["n_h"] = std::to_string(n_h);
  kv["image_size"] = std::to_string(image_size);
  kv["image_channels"] = std::to_string(image_channels);
  kv["enc_c1"] = std::to_string(enc_c1);
  kv["max_len"] = std::to_string(max_len);
  kv["uses_encoder"] = uses_encoder ? "1" : "0";
  return kv;
}

CaptionerConfig CaptionerConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  CaptionerConfig cfg;
  auto geti = [&](const char* key, int dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : std::stoi(it->second);
  };
  auto it = kv.find("model");
  if (it != kv.end()) cfg.attention = attention_kind_from_name(it->second);
  cfg.vocab_size = geti("vocab_size", cfg.vocab_size);
  cfg.d_w = geti("d_w", cfg.d_w);
  cfg.d_h = geti("d_h", cfg.d_h);
  cfg.d_a = geti("d_a", cfg.d_a);
  cfg.n_v = geti("n_v", cfg.n_v);
  cfg.n_h = geti("n_h", cfg.n_h);
  cfg.image_size = geti("image_size", cfg.image_size);
  cfg.image_channels = geti("image_channels", cfg.image_channels);
  cfg.enc_c1 = geti("enc_c1", cfg.enc_c1);
  cfg.max_len = geti("max_len", cfg.max_len);
  cfg.uses_encoder = geti("uses_encoder", cfg.uses_encoder ? 1 : 0) != 0;
  cfg.validate();
  return cfg;
}

namespace {

Tensor init_matrix(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  double r = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-r, r);
  return t;
}

}  // namespace

CaptionerParams CaptionerParams::init(const CaptionerConfig& cfg, Rng& rng) {
  cfg.validate();
  CaptionerParams p;
  p.cfg = cfg;
  auto& t = p.tensors;

  Tensor embed({cfg.vocab_size, cfg.d_w});
  for (int i = 0; i < embed.numel(); ++i) embed[i] = rng.uniform(-0.1, 0.1);
  t["embed"] = std::move(embed);

  if (cfg.uses_encoder) {
    int k1 = cfg.image_size / 8;
    t["enc.w1"] = init_matrix(rng, {cfg.enc_c1, cfg.image_channels, k1, k1},
                              cfg.image_channels * k1 * k1);
    t["enc.b1"] = Tensor({cfg.enc_c1});
    t["enc.w2"] = init_matrix(rng, {cfg.d_h, cfg.enc_c1, 2, 2}, cfg.enc_c1 * 4);
    t["enc.b2"] = Tensor({cfg.d_h});
  }

  int dx1 = cfg.attention == AttentionKind::kAdaptive ? cfg.d_w + 2 * cfg.d_h
                                                      : cfg.d_w + cfg.d_h;
  auto init_lstm = [&](const std::string& prefix, int din) {
    t[prefix + ".w"] = init_matrix(rng, {4 * cfg.d_h, din + cfg.d_h}, din + cfg.d_h);
    Tensor b({4 * cfg.d_h});
    for (int j = 0; j < cfg.d_h; ++j) b[cfg.d_h + j] = 1.0;  // forget gate bias
    t[prefix + ".b"] = std::move(b);
  };
  init_lstm("lstm1", dx1);

  if (cfg.attention == AttentionKind::kAdaptive) {
    init_lstm("lstm2", 2 * cfg.d_h);
    t["sent.wx"] = init_matrix(rng, {cfg.d_h, dx1}, dx1);
    t["sent.wh"] = init_matrix(rng, {cfg.d_h, cfg.d_h}, cfg.d_h);
    t["att.wi"] = init_matrix(rng, {cfg.d_a, cfg.d_h}, cfg.d_h);
    t["att.wg"] = init_matrix(rng, {cfg.d_a, cfg.d_h}, cfg.d_h);
    t["att.ws"] = init_matrix(rng, {cfg.d_a, cfg.d_h}, cfg.d_h);
    t["att.wa"] = init_matrix(rng, {cfg.d_a}, cfg.d_a);
  } else {
    t["att.wk"] = init_matrix(rng, {cfg.d_h, cfg.d_h}, cfg.d_h);
    t["att.wv"] = init_matrix(rng, {cfg.d_h, cfg.d_h}, cfg.d_h);
    t["att.wo"] = init_matrix(rng, {cfg.d_h, cfg.d_h}, cfg.d_h);
    t["att.bo"] = Tensor({cfg.d_h});
    t["att.gate.w"] = init_matrix(rng, {cfg.d_h, cfg.d_h}, cfg.d_h);
    t["att.gate.b"] = Tensor({cfg.d_h});
  }

  t["fc.w"] = init_matrix(rng, {cfg.vocab_size, cfg.d_h}, cfg.d_h);
  t["fc.b"] = Tensor({cfg.vocab_size});
  return p;
}

Tensor& CaptionerParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

const Tensor& CaptionerParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

LstmNodes lstm_step(Tape& t, NodeId x, NodeId h_prev, NodeId m_prev, NodeId w, NodeId b) {
  int dh = t.value(m_prev).numel();
  LstmNodes out;
  NodeId cat = t.concat({x, h_prev});
  out.zall = t.linear(cat, w, b);
  out.gate_i = t.sigmoid(t.slice(out.zall, 0, dh));
  out.gate_f = t.sigmoid(t.slice(out.zall, dh, dh));
  out.gate_o = t.sigmoid(t.slice(out.zall, 2 * dh, dh));
  out.candidate = t.tanh_(t.slice(out.zall, 3 * dh, dh));
  out.m = t.add(t.mul(m_prev, out.gate_f), t.mul(out.candidate, out.gate_i));
  out.h = t.mul(t.tanh_(out.m), out.gate_o);
  return out;
}

BoundCaptioner::BoundCaptioner(const CaptionerParams& params, Tape& tape,
                               const Tensor& input, bool precomputed_features)
    : cfg_(params.cfg), tape_(&tape) {
  cfg_.validate();
  for (const auto& [name, tensor] : params.tensors) {
    param_ids_[name] = tape.leaf(tensor, /*param=*/true);
  }

  if (precomputed_features) {
    if (input.rank() != 2 || input.extent(0) != cfg_.n_v || input.extent(1) != cfg_.d_h) {
      throw DimensionError("feature input must have shape (n_v, d_h)");
    }
    features_ = tape.leaf(input);
  } else {
    if (!cfg_.uses_encoder) {
      throw std::invalid_argument("model was configured without an encoder");
    }
    if (input.rank() != 3 || input.extent(0) != cfg_.image_channels ||
        input.extent(1) != cfg_.image_size || input.extent(2) != cfg_.image_size) {
      throw DimensionError("image input must have shape (channels, size, size)");
    }
    image_ = tape.leaf(input);
    int k1 = cfg_.image_size / 8;
    NodeId c1 = tape.relu(
        tape.conv2d(image_, param_node("enc.w1"), param_node("enc.b1"), k1, 0));
    NodeId c2 = tape.relu(
        tape.conv2d(c1, param_node("enc.w2"), param_node("enc.b2"), 2, 0));
    features_ = tape.spatial_rows(c2);
  }
  ig_ = tape.mean_rows(features_);
  zero_da_ = tape.leaf(Tensor({cfg_.d_a}));
  zero_dh_ = tape.leaf(Tensor({cfg_.d_h}));

  feature_rows_.reserve(static_cast<size_t>(cfg_.n_v));
  for (int k = 0; k < cfg_.n_v; ++k) feature_rows_.push_back(tape.row(features_, k));

  if (cfg_.attention == AttentionKind::kAdaptive) {
    adaptive_keys_.reserve(feature_rows_.size());
    for (NodeId fr : feature_rows_) {
      adaptive_keys_.push_back(tape.linear(fr, param_node("att.wi"), zero_da_));
    }
  } else {
    NodeId keys = tape.matmul(features_, param_node("att.wk"));
    NodeId values = tape.matmul(features_, param_node("att.wv"));
    int dd = cfg_.head_dim();
    head_keys_.assign(static_cast<size_t>(cfg_.n_h), {});
    head_values_.assign(static_cast<size_t>(cfg_.n_h), {});
    for (int k = 0; k < cfg_.n_v; ++k) {
      NodeId krow = tape.row(keys, k);
      NodeId vrow = tape.row(values, k);
      for (int i = 0; i < cfg_.n_h; ++i) {
        head_keys_[static_cast<size_t>(i)].push_back(tape.slice(krow, i * dd, dd));
        head_values_[static_cast<size_t>(i)].push_back(tape.slice(vrow, i * dd, dd));
      }
    }
  }
}

NodeId BoundCaptioner::param_node(const std::string& name) const {
  auto it = param_ids_.find(name);
  if (it == param_ids_.end()) throw std::out_of_range("no parameter node " + name);
  return it->second;
}

StepNodes BoundCaptioner::initial_state() {
  StepNodes s;
  s.h1 = tape_->leaf(Tensor({cfg_.d_h}));
  s.m1 = tape_->leaf(Tensor({cfg_.d_h}));
  if (cfg_.attention == AttentionKind::kAdaptive) {
    s.h2 = tape_->leaf(Tensor({cfg_.d_h}));
    s.m2 = tape_->leaf(Tensor({cfg_.d_h}));
  }
  return s;
}

StepResult BoundCaptioner::adaptive_attention(StepResult r, NodeId h1, NodeId sentinel) {
  Tape& t = *tape_;
  NodeId wa = param_node("att.wa");
  NodeId query = t.linear(h1, param_node("att.wg"), zero_da_);
  std::vector<NodeId> logits;
  logits.reserve(static_cast<size_t>(cfg_.n_v) + 1);
  for (int k = 0; k < cfg_.n_v; ++k) {
    logits.push_back(t.dot(t.tanh_(t.add(adaptive_keys_[static_cast<size_t>(k)], query)), wa));
  }
  NodeId visual_logits = t.concat(logits);
  r.alpha = t.softmax(visual_logits);

  NodeId sent_term = t.dot(
      t.tanh_(t.add(t.linear(sentinel, param_node("att.ws"), zero_da_), query)), wa);
  logits.push_back(sent_term);
  r.combined = t.softmax(t.concat(logits));
  r.beta = t.slice(r.combined, cfg_.n_v, 1);

  std::vector<NodeId> values = feature_rows_;
  values.push_back(sentinel);
  r.context = t.weighted_sum(r.combined, values);
  r.sentinel = sentinel;
  return r;
}

StepResult BoundCaptioner::multi_head_attention(StepResult r, NodeId h1) {
  Tape& t = *tape_;
  int dd = cfg_.head_dim();
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dd));
  std::vector<NodeId> summaries;
  summaries.reserve(static_cast<size_t>(cfg_.n_h));
  for (int i = 0; i < cfg_.n_h; ++i) {
    NodeId q = t.slice(h1, i * dd, dd);
    std::vector<NodeId> logits;
    logits.reserve(static_cast<size_t>(cfg_.n_v));
    for (int k = 0; k < cfg_.n_v; ++k) {
      logits.push_back(t.scale(t.dot(q, head_keys_[static_cast<size_t>(i)][static_cast<size_t>(k)]), inv_sqrt));
    }
    NodeId alpha = t.softmax(t.concat(logits));
    r.head_alpha.push_back(alpha);
    summaries.push_back(t.weighted_sum(alpha, head_values_[static_cast<size_t>(i)]));
  }
  r.head_concat = t.concat(summaries);
  NodeId vhat = t.linear(r.head_concat, param_node("att.wo"), param_node("att.bo"));
  r.visual_gate = t.sigmoid(t.linear(h1, param_node("att.gate.w"), param_node("att.gate.b")));
  r.context = t.mul(vhat, r.visual_gate);
  return r;
}

StepResult BoundCaptioner::step(int prev_token, const StepNodes& state) {
  Tape& t = *tape_;
  StepResult r;
  r.token_in = prev_token;
  r.embed = t.embed_row(param_node("embed"), prev_token);

  if (cfg_.attention == AttentionKind::kAdaptive) {
    NodeId x1 = t.concat({r.embed, ig_, state.h2});
    // Sentinel gate from the step input and previous hidden state.
    NodeId sent_gate = t.sigmoid(t.add(t.linear(x1, param_node("sent.wx"), zero_dh_),
                                       t.linear(state.h1, param_node("sent.wh"), zero_dh_)));
    LstmNodes l1 = lstm_step(t, x1, state.h1, state.m1, param_node("lstm1.w"),
                             param_node("lstm1.b"));
    NodeId sentinel = t.mul(t.tanh_(l1.m), sent_gate);
    r = adaptive_attention(std::move(r), l1.h, sentinel);

    NodeId x2 = t.concat({r.context, l1.h});
    LstmNodes l2 = lstm_step(t, x2, state.h2, state.m2, param_node("lstm2.w"),
                             param_node("lstm2.b"));
    r.state = {l1.h, l1.m, l2.h, l2.m};
    r.fc_hidden = l2.h;
  } else {
    NodeId x1 = t.concat({r.embed, ig_});
    LstmNodes l1 = lstm_step(t, x1, state.h1, state.m1, param_node("lstm1.w"),
                             param_node("lstm1.b"));
    r = multi_head_attention(std::move(r), l1.h);
    r.state = {l1.h, l1.m, kNoNode, kNoNode};
    r.fc_hidden = l1.h;
  }

  r.fc_sum = t.add(r.context, r.fc_hidden);
  r.logits = t.linear(r.fc_sum, param_node("fc.w"), param_node("fc.b"));
  r.prob = t.softmax(r.logits);
  return r;
}

ForwardTrace forward_teacher(const CaptionerParams& params, const Tensor& input,
                             bool precomputed, const std::vector<int>& tokens,
                             int start_id) {
  ForwardTrace trace;
  BoundCaptioner bound(params, trace.tape, input, precomputed);
  trace.image = bound.image();
  trace.features = bound.features();
  trace.params = bound.param_nodes();
  StepNodes state = bound.initial_state();
  int steps = static_cast<int>(tokens.size()) + 1;
  trace.steps.reserve(static_cast<size_t>(steps));
  for (int s = 0; s < steps; ++s) {
    int prev = s == 0 ? start_id : tokens[static_cast<size_t>(s - 1)];
    StepResult r = bound.step(prev, state);
    state = r.state;
    trace.steps.push_back(std::move(r));
  }
  return trace;
}

namespace {

int argmax_lowest_id(const Tensor& p) {
  int best = 0;
  for (int i = 1; i < p.numel(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

double safe_log(double p) { return std::log(std::max(p, 1e-300)); }

}  // namespace

DecodeResult greedy_decode(const CaptionerParams& params, const Tensor& input,
                           bool precomputed, int start_id, int end_id) {
  Tape tape;
  BoundCaptioner bound(params, tape, input, precomputed);
  StepNodes state = bound.initial_state();
  DecodeResult out;
  int prev = start_id;
  for (int t = 0; t <= params.cfg.max_len; ++t) {
    StepResult r = bound.step(prev, state);
    state = r.state;
    const Tensor& p = tape.value(r.prob);
    int token = t == params.cfg.max_len ? end_id : argmax_lowest_id(p);
    out.log_prob += safe_log(p[token]);
    if (token == end_id) {
      out.ended = true;
      break;
    }
    out.tokens.push_back(token);
    prev = token;
  }
  return out;
}

DecodeResult beam_decode(const CaptionerParams& params, const Tensor& input,
                         bool precomputed, int start_id, int end_id, int beam) {
  if (beam < 1) throw std::invalid_argument("beam size must be >= 1");

  struct Beam {
    std::vector<int> tokens;
    StepNodes state;
    double score = 0.0;
    bool complete = false;
  };

  Tape tape;
  BoundCaptioner bound(params, tape, input, precomputed);
  std::vector<Beam> beams(1);
  beams[0].state = bound.initial_state();

  auto lex_less = [](const std::vector<int>& a, const std::vector<int>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
  };

  for (int iter = 0; iter <= params.cfg.max_len + 1; ++iter) {
    bool any_open = false;
    std::vector<Beam> candidates;
    for (const Beam& b : beams) {
      if (b.complete) {
        candidates.push_back(b);
        continue;
      }
      any_open = true;
      int prev = b.tokens.empty() ? start_id : b.tokens.back();
      StepResult r = bound.step(prev, b.state);
      const Tensor& p = tape.value(r.prob);
      bool at_cap = static_cast<int>(b.tokens.size()) == params.cfg.max_len;
      for (int w = 0; w < p.numel(); ++w) {
        if (at_cap && w != end_id) continue;  // end token forced at the cap
        Beam nb = b;
        nb.state = r.state;
        nb.score += safe_log(p[w]);
        if (w == end_id) {
          nb.complete = true;
        } else {
          nb.tokens.push_back(w);
        }
        candidates.push_back(std::move(nb));
      }
    }
    if (!any_open) break;

    std::sort(candidates.begin(), candidates.end(), [&](const Beam& a, const Beam& b) {
      if (a.score != b.score) return a.score > b.score;
      return lex_less(a.tokens, b.tokens);
    });
    if (static_cast<int>(candidates.size()) > beam) candidates.resize(static_cast<size_t>(beam));
    beams = std::move(candidates);
  }

  const Beam* best = nullptr;
  for (const Beam& b : beams) {
    if (!b.complete) continue;
    if (!best || b.score > best->score ||
        (b.score == best->score && lex_less(b.tokens, best->tokens))) {
      best = &b;
    }
  }
  if (!best) best = &beams.front();
  DecodeResult out;
  out.tokens = best->tokens;
  out.log_prob = best->score;
  out.ended = best->complete;
  return out;
}

}  // namespace xcap
