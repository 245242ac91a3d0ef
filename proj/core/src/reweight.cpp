#include "xcap/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "xcap/grad.hpp"

namespace xcap {

namespace {

inline double stabilized(double z, double eps) {
  return z + eps * (z >= 0.0 ? 1.0 : -1.0);
}

Tensor max_abs_normalized(const Tensor& r) {
  Tensor out = r;
  double m = r.max_abs();
  if (m > 0.0) {
    for (double& v : out.vec()) v /= m;
  }
  return out;
}

}  // namespace

ReweightedStep reweight_step(const Tensor& fc_w, const Tensor& fc_b, const Tensor& c,
                             const Tensor& h, int label, double eps) {
  if (fc_w.rank() != 2 || fc_w.extent(1) != c.numel() || !c.same_shape(h)) {
    throw DimensionError("reweight_step: shape mismatch");
  }
  if (label < 0 || label >= fc_w.extent(0)) {
    throw std::out_of_range("reweight_step: label out of range");
  }
  int d = c.numel();

  // Output-layer relevance of the label's logit over u = c + h.
  Tensor u({d});
  for (int i = 0; i < d; ++i) u[i] = c[i] + h[i];
  double z = fc_b[label];
  for (int i = 0; i < d; ++i) z += fc_w.at2(label, i) * u[i];
  double denom = stabilized(z, eps);

  ReweightedStep out;
  out.r_c = Tensor({d});
  out.r_h = Tensor({d});
  if (denom != 0.0) {
    double f = z / denom;  // seed (the logit itself) over the stabilized logit
    for (int i = 0; i < d; ++i) {
      double ru = f * u[i] * fc_w.at2(label, i);
      double split = stabilized(u[i], eps);
      if (split == 0.0) continue;
      out.r_c[i] = ru * c[i] / split;
      out.r_h[i] = ru * h[i] / split;
    }
  }

  out.omega_c = max_abs_normalized(out.r_c);
  out.omega_h = max_abs_normalized(out.r_h);
  for (double& v : out.omega_c.vec()) v += 1.0;
  for (double& v : out.omega_h.vec()) v += 1.0;

  Tensor reweighted({d});
  for (int i = 0; i < d; ++i) reweighted[i] = out.omega_c[i] * c[i] + out.omega_h[i] * h[i];
  std::vector<double> logits(static_cast<size_t>(fc_w.extent(0)));
  for (int j = 0; j < fc_w.extent(0); ++j) {
    double s = fc_b[j];
    for (int i = 0; i < d; ++i) s += fc_w.at2(j, i) * reweighted[i];
    logits[static_cast<size_t>(j)] = s;
  }
  out.p_hat = Tensor({fc_w.extent(0)}, softmax_values(logits));
  return out;
}

double lrp_ce_loss(const Tensor& p, const Tensor& p_hat, int y, double lambda) {
  if (!p.same_shape(p_hat)) throw DimensionError("lrp_ce_loss: shape mismatch");
  if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("lambda must be in [0,1]");
  double ce = -std::log(std::max(p[y], 1e-300));
  double ce_hat = -std::log(std::max(p_hat[y], 1e-300));
  return lambda * ce + (1.0 - lambda) * ce_hat;
}

namespace {

bool is_stop_token(int token, const Vocabulary& vocab,
                   const std::set<std::string>& stop_words) {
  return stop_words.count(vocab.token(token)) > 0;
}

int argmax_token(const Tensor& p) {
  int best = 0;
  for (int i = 1; i < p.numel(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

// Appends the re-weighted logits for one decode step. With constant omega
// the weights enter as plain leaves; with differentiate_omega the relevance
// computation itself is recorded so gradients flow through it.
NodeId build_reweighted_logits(Tape& t, const StepResult& step,
                               const CaptionerParams& params,
                               const std::unordered_map<std::string, NodeId>& param_nodes,
                               int label, double eps, bool differentiate) {
  NodeId fc_w = param_nodes.at("fc.w");
  NodeId fc_b = param_nodes.at("fc.b");
  if (!differentiate) {
    ReweightedStep rw = reweight_step(params.at("fc.w"), params.at("fc.b"),
                                      t.value(step.context), t.value(step.fc_hidden),
                                      label, eps);
    NodeId wc = t.leaf(rw.omega_c);
    NodeId wh = t.leaf(rw.omega_h);
    NodeId mixed = t.add(t.mul(step.context, wc), t.mul(step.fc_hidden, wh));
    return t.linear(mixed, fc_w, fc_b);
  }

  // On-tape relevance: r_u = (z / (z + eps sign z)) * u .* w_row,
  // split by c/(u + eps sign u), normalized, shifted by one.
  const Tensor& u_val = t.value(step.fc_sum);
  const Tensor& z_val = t.value(step.logits);
  NodeId zl = t.slice(step.logits, label, 1);
  double sign_z = z_val[label] >= 0.0 ? 1.0 : -1.0;
  NodeId zfac = t.mul(zl, t.reciprocal(t.affine(zl, 1.0, eps * sign_z)));

  NodeId wrow = t.row(fc_w, label);
  NodeId ru = t.mul(t.mul(step.fc_sum, wrow), zfac);

  Tensor sign_u({u_val.numel()});
  for (int i = 0; i < u_val.numel(); ++i) sign_u[i] = eps * (u_val[i] >= 0.0 ? 1.0 : -1.0);
  NodeId split = t.reciprocal(t.add(step.fc_sum, t.leaf(sign_u)));
  NodeId rc = t.mul(t.mul(ru, split), step.context);
  NodeId rh = t.mul(t.mul(ru, split), step.fc_hidden);

  NodeId wc = t.affine(t.max_abs_norm(rc), 1.0, 1.0);
  NodeId wh = t.affine(t.max_abs_norm(rh), 1.0, 1.0);
  NodeId mixed = t.add(t.mul(step.context, wc), t.mul(step.fc_hidden, wh));
  return t.linear(mixed, fc_w, fc_b);
}

void accumulate_param_grads(const std::unordered_map<std::string, NodeId>& param_nodes,
                            const GradientMap& g, std::map<std::string, Tensor>& acc) {
  for (const auto& [name, id] : param_nodes) {
    if (!g.has(id)) continue;
    const Tensor& gt = g.at(id);
    Tensor& slot = acc[name];
    if (slot.empty()) slot = Tensor::zeros(gt.shape());
    for (int i = 0; i < gt.numel(); ++i) slot[i] += gt[i];
  }
}

}  // namespace

void finetune_lrp_ce(CaptionerParams& params, const std::vector<TrainSample>& train,
                     const Vocabulary& vocab, const std::set<std::string>& stop_words,
                     const IftOptions& opt) {
  if (train.empty()) throw std::invalid_argument("finetune_lrp_ce: empty dataset");
  AdamOptimizer adam(opt.lr, 0.8, 0.999);
  Rng rng(opt.seed);

  struct Item {
    size_t sample, caption;
  };
  std::vector<Item> items;
  for (size_t s = 0; s < train.size(); ++s) {
    for (size_t c = 0; c < train[s].captions.size(); ++c) items.push_back({s, c});
  }

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    }
    std::map<std::string, Tensor> grads;
    int in_batch = 0;
    for (size_t idx = 0; idx < items.size(); ++idx) {
      const TrainSample& sample = train[items[idx].sample];
      const std::vector<int>& tokens = sample.captions[items[idx].caption];
      ForwardTrace tr = forward_teacher(params, sample.input, sample.precomputed(),
                                        tokens, vocab.start_id());
      std::vector<int> targets = tokens;
      targets.push_back(vocab.end_id());

      NodeId loss = kNoNode;
      for (size_t s = 0; s < tr.steps.size(); ++s) {
        const StepResult& step = tr.steps[s];
        int label = argmax_token(tr.tape.value(step.prob));
        NodeId ce = tr.tape.cross_entropy(step.logits, targets[s]);
        NodeId term;
        if (is_stop_token(label, vocab, stop_words)) {
          // Algorithm bypass: the re-weighted distribution equals the
          // original one, so the combined loss is the plain CE.
          term = ce;
        } else {
          NodeId logits_hat = build_reweighted_logits(
              tr.tape, step, params, tr.params, label, opt.epsilon,
              opt.differentiate_omega);
          NodeId ce_hat = tr.tape.cross_entropy(logits_hat, targets[s]);
          term = tr.tape.add(tr.tape.scale(ce, opt.lambda),
                             tr.tape.scale(ce_hat, 1.0 - opt.lambda));
        }
        loss = loss == kNoNode ? term : tr.tape.add(loss, term);
      }
      NodeId mean_loss = tr.tape.scale(loss, 1.0 / static_cast<double>(tr.steps.size()));
      GradientMap g = backward_grad(tr.tape, mean_loss);
      accumulate_param_grads(tr.params, g, grads);
      ++in_batch;

      if (in_batch == opt.batch_size || idx + 1 == items.size()) {
        for (auto& [name, gt] : grads) {
          for (int i = 0; i < gt.numel(); ++i) gt[i] /= in_batch;
        }
        adam.step(params, grads);
        grads.clear();
        in_batch = 0;
      }
    }
  }
}

void finetune_baseline_ce(CaptionerParams& params, const std::vector<TrainSample>& train,
                          const Vocabulary& vocab, const IftOptions& opt) {
  TrainOptions topt;
  topt.epochs = opt.epochs;
  topt.batch_size = opt.batch_size;
  topt.lr = opt.lr;
  topt.seed = opt.seed;
  train_xent(params, train, {}, vocab, topt);
}

namespace {

struct Rollout {
  std::vector<int> tokens;
  NodeId sum_ce = kNoNode;  // over the re-weighted logits (sampled rollout)
};

// Free-running rollout drawing from the re-weighted distribution.
Rollout reweighted_rollout(Tape& tape, BoundCaptioner& bound,
                           const CaptionerParams& params, const Vocabulary& vocab,
                           const std::set<std::string>& stop_words,
                           const IftOptions& opt, bool sample, Rng* rng,
                           bool build_loss) {
  Rollout out;
  StepNodes st = bound.initial_state();
  int prev = vocab.start_id();
  for (int t = 0; t <= params.cfg.max_len; ++t) {
    StepResult r = bound.step(prev, st);
    st = r.state;
    const Tensor& p = tape.value(r.prob);
    int label = argmax_token(p);
    NodeId logits_hat = r.logits;
    const Tensor* dist = &p;
    Tensor p_hat_store;
    if (!is_stop_token(label, vocab, stop_words)) {
      logits_hat = build_reweighted_logits(tape, r, params, bound.param_nodes(), label,
                                           opt.epsilon, opt.differentiate_omega);
      p_hat_store = Tensor(p.shape(), softmax_values(tape.value(logits_hat).vec()));
      dist = &p_hat_store;
    }
    int tok;
    if (t == params.cfg.max_len) {
      tok = vocab.end_id();
    } else if (sample) {
      tok = rng->categorical(dist->data(), dist->numel());
    } else {
      tok = argmax_token(*dist);
    }
    if (build_loss) {
      NodeId ce = tape.cross_entropy(logits_hat, tok);
      out.sum_ce = out.sum_ce == kNoNode ? ce : tape.add(out.sum_ce, ce);
    }
    if (tok == vocab.end_id()) break;
    out.tokens.push_back(tok);
    prev = tok;
  }
  return out;
}

}  // namespace

void finetune_lrp_scst(CaptionerParams& params, const std::vector<TrainSample>& train,
                       const RewardFn& reward_fn, const Vocabulary& vocab,
                       const std::set<std::string>& stop_words, const IftOptions& opt) {
  if (train.empty()) throw std::invalid_argument("finetune_lrp_scst: empty dataset");
  AdamOptimizer adam(opt.lr, 0.8, 0.999);
  Rng rng(opt.seed);

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
    }
    std::map<std::string, Tensor> grads;
    int in_batch = 0;
    for (size_t oi = 0; oi < order.size(); ++oi) {
      const TrainSample& sample = train[order[oi]];
      Tape tape;
      BoundCaptioner bound(params, tape, sample.input, sample.precomputed());
      Rollout greedy = reweighted_rollout(tape, bound, params, vocab, stop_words, opt,
                                          /*sample=*/false, nullptr, /*build_loss=*/false);
      Rollout sampled = reweighted_rollout(tape, bound, params, vocab, stop_words, opt,
                                           /*sample=*/true, &rng, /*build_loss=*/true);
      if (sampled.tokens.empty()) {
        std::cerr << "finetune_lrp_scst: degenerate sample, skipped\n";
        continue;
      }
      double advantage =
          reward_fn(sampled.tokens, sample) - reward_fn(greedy.tokens, sample);
      if (advantage != 0.0) {
        NodeId loss = tape.scale(
            sampled.sum_ce, advantage / static_cast<double>(sampled.tokens.size() + 1));
        GradientMap g = backward_grad(tape, loss);
        accumulate_param_grads(bound.param_nodes(), g, grads);
      }
      ++in_batch;
      if (in_batch == opt.batch_size || oi + 1 == order.size()) {
        if (!grads.empty()) {
          for (auto& [name, gt] : grads) {
            for (int i = 0; i < gt.numel(); ++i) gt[i] /= in_batch;
          }
          adam.step(params, grads);
        }
        grads.clear();
        in_batch = 0;
      }
    }
  }
}

void finetune_baseline_scst(CaptionerParams& params,
                            const std::vector<TrainSample>& train,
                            const RewardFn& reward_fn, const Vocabulary& vocab,
                            const IftOptions& opt) {
  ScstOptions sopt;
  sopt.steps = opt.epochs * static_cast<int>(train.size());
  sopt.batch_size = opt.batch_size;
  sopt.lr = opt.lr;
  sopt.seed = opt.seed;
  train_scst(params, train, reward_fn, vocab, sopt);
}

}  // namespace xcap
