#include "xcap/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "xcap/grad.hpp"

namespace xcap {

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(CaptionerParams& params,
                         const std::map<std::string, Tensor>& grads) {
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  for (const auto& [name, g] : grads) {
    Tensor& p = params.at(name);
    if (!p.same_shape(g)) throw DimensionError("adam: gradient shape mismatch for " + name);
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    if (m.empty()) m = Tensor::zeros(p.shape());
    if (v.empty()) v = Tensor::zeros(p.shape());
    for (int i = 0; i < p.numel(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {

std::vector<int> targets_for(const std::vector<int>& tokens, int end_id) {
  std::vector<int> tg = tokens;
  tg.push_back(end_id);
  return tg;
}

// Sums one tape's gradients at parameter leaves into `acc`.
void accumulate_param_grads(const std::unordered_map<std::string, NodeId>& param_nodes,
                            const GradientMap& g, double scale,
                            std::map<std::string, Tensor>& acc) {
  for (const auto& [name, id] : param_nodes) {
    if (!g.has(id)) continue;
    const Tensor& gt = g.at(id);
    Tensor& slot = acc[name];
    if (slot.empty()) slot = Tensor::zeros(gt.shape());
    for (int i = 0; i < gt.numel(); ++i) slot[i] += scale * gt[i];
  }
}

struct ItemRef {
  size_t sample;
  size_t caption;
};

}  // namespace

double teacher_forced_loss(const CaptionerParams& params,
                           const std::vector<TrainSample>& samples,
                           const Vocabulary& vocab) {
  double total = 0.0;
  long count = 0;
  for (const TrainSample& s : samples) {
    for (const auto& tokens : s.captions) {
      ForwardTrace tr = forward_teacher(params, s.input, s.precomputed(), tokens,
                                        vocab.start_id());
      std::vector<int> tg = targets_for(tokens, vocab.end_id());
      for (size_t i = 0; i < tr.steps.size(); ++i) {
        const Tensor& p = tr.tape.value(tr.steps[i].prob);
        total += -std::log(std::max(p[tg[i]], 1e-300));
        ++count;
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

double teacher_forced_accuracy(const CaptionerParams& params,
                               const std::vector<TrainSample>& samples,
                               const Vocabulary& vocab) {
  long hit = 0, count = 0;
  for (const TrainSample& s : samples) {
    for (const auto& tokens : s.captions) {
      ForwardTrace tr = forward_teacher(params, s.input, s.precomputed(), tokens,
                                        vocab.start_id());
      std::vector<int> tg = targets_for(tokens, vocab.end_id());
      for (size_t i = 0; i < tr.steps.size(); ++i) {
        const Tensor& p = tr.tape.value(tr.steps[i].prob);
        int best = 0;
        for (int w = 1; w < p.numel(); ++w) {
          if (p[w] > p[best]) best = w;
        }
        if (best == tg[i]) ++hit;
        ++count;
      }
    }
  }
  return count ? static_cast<double>(hit) / static_cast<double>(count) : 0.0;
}

double validation_score(const CaptionerParams& params,
                        const std::vector<TrainSample>& val, const Vocabulary& vocab,
                        const CiderScorer& scorer) {
  if (val.empty()) return 0.0;
  double sum = 0.0;
  for (const TrainSample& s : val) {
    DecodeResult d = greedy_decode(params, s.input, s.precomputed(), vocab.start_id(),
                                   vocab.end_id());
    sum += scorer.score(vocab.decode(d.tokens), s.ref_words);
  }
  return sum / static_cast<double>(val.size());
}

TrainResult train_xent(CaptionerParams& params, const std::vector<TrainSample>& train,
                       const std::vector<TrainSample>& val, const Vocabulary& vocab,
                       const TrainOptions& opt) {
  if (train.empty()) throw std::invalid_argument("train_xent: empty dataset");
  std::vector<ItemRef> items;
  for (size_t s = 0; s < train.size(); ++s) {
    for (size_t c = 0; c < train[s].captions.size(); ++c) items.push_back({s, c});
  }

  std::vector<std::vector<std::vector<std::string>>> val_ref_corpus;
  for (const TrainSample& s : train) val_ref_corpus.push_back(s.ref_words);
  CiderScorer scorer(val_ref_corpus);

  AdamOptimizer adam(opt.lr, opt.beta1, opt.beta2);
  Rng rng(opt.seed);
  TrainResult result;
  double best_val = -1.0;
  int since_best = 0;

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    // Deterministic shuffle.
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
      std::swap(items[i - 1], items[j]);
    }

    double epoch_loss = 0.0;
    long token_count = 0;
    std::map<std::string, Tensor> grads;
    int in_batch = 0;

    for (size_t idx = 0; idx < items.size(); ++idx) {
      const TrainSample& sample = train[items[idx].sample];
      const std::vector<int>& tokens = sample.captions[items[idx].caption];
      try {
        ForwardTrace tr = forward_teacher(params, sample.input, sample.precomputed(),
                                          tokens, vocab.start_id());
        std::vector<int> tg = targets_for(tokens, vocab.end_id());
        NodeId loss = kNoNode;
        for (size_t i = 0; i < tr.steps.size(); ++i) {
          NodeId ce = tr.tape.cross_entropy(tr.steps[i].logits, tg[i]);
          loss = loss == kNoNode ? ce : tr.tape.add(loss, ce);
        }
        double steps = static_cast<double>(tr.steps.size());
        NodeId mean_loss = tr.tape.scale(loss, 1.0 / steps);
        epoch_loss += tr.tape.value(loss).value();
        token_count += static_cast<long>(tr.steps.size());

        GradientMap g = backward_grad(tr.tape, mean_loss);
        accumulate_param_grads(tr.params, g, 1.0, grads);
        ++in_batch;
      } catch (const NumericError& e) {
        throw NumericError(std::string("training aborted at epoch ") +
                           std::to_string(epoch) + ", item " + std::to_string(idx) +
                           ": " + e.what());
      }

      if (in_batch == opt.batch_size || idx + 1 == items.size()) {
        for (auto& [name, g] : grads) {
          for (int i = 0; i < g.numel(); ++i) g[i] /= in_batch;
        }
        adam.step(params, grads);
        grads.clear();
        in_batch = 0;
      }
    }

    EpochStats st;
    st.epoch = epoch;
    st.mean_loss = token_count ? epoch_loss / static_cast<double>(token_count) : 0.0;
    st.val_score = validation_score(params, val, vocab, scorer);
    st.lr = adam.lr();
    result.history.push_back(st);
    if (opt.verbose) {
      std::cout << "epoch " << epoch << " loss " << st.mean_loss << " val " << st.val_score
                << " lr " << st.lr << "\n";
    }

    if (st.val_score > best_val + 1e-9) {
      best_val = st.val_score;
      since_best = 0;
    } else {
      ++since_best;
      if (!val.empty() && since_best >= opt.anneal_patience) {
        adam.set_lr(adam.lr() * opt.anneal_factor);
      }
      if (!val.empty() && since_best >= opt.stop_patience) break;
    }
  }
  result.final_val_score = best_val < 0 ? 0.0 : best_val;
  return result;
}

RewardFn cider_reward(const CiderScorer& scorer, const Vocabulary& vocab) {
  return [&scorer, &vocab](const std::vector<int>& tokens, const TrainSample& sample) {
    return scorer.score(vocab.decode(tokens), sample.ref_words);
  };
}

ScstResult train_scst(CaptionerParams& params, const std::vector<TrainSample>& train,
                      const RewardFn& reward_fn, const Vocabulary& vocab,
                      const ScstOptions& opt) {
  if (train.empty()) throw std::invalid_argument("train_scst: empty dataset");
  AdamOptimizer adam(opt.lr, 0.8, 0.999);
  Rng rng(opt.seed);
  ScstResult result;
  std::map<std::string, Tensor> grads;
  int in_batch = 0;

  for (int step_i = 0; step_i < opt.steps; ++step_i) {
    const TrainSample& sample = train[static_cast<size_t>(rng.uniform_int(
        static_cast<int>(train.size())))];

    Tape tape;
    BoundCaptioner bound(params, tape, sample.input, sample.precomputed());

    // Greedy baseline rollout, values only.
    std::vector<int> greedy_tokens;
    {
      StepNodes st = bound.initial_state();
      int prev = vocab.start_id();
      for (int t = 0; t <= params.cfg.max_len; ++t) {
        StepResult r = bound.step(prev, st);
        st = r.state;
        const Tensor& p = tape.value(r.prob);
        int tok = 0;
        for (int w = 1; w < p.numel(); ++w) {
          if (p[w] > p[tok]) tok = w;
        }
        if (t == params.cfg.max_len) tok = vocab.end_id();
        if (tok == vocab.end_id()) break;
        greedy_tokens.push_back(tok);
        prev = tok;
      }
    }

    // Sampled rollout; keep per-step loss nodes for the policy gradient.
    std::vector<int> sampled_tokens;
    NodeId sum_ce = kNoNode;
    {
      StepNodes st = bound.initial_state();
      int prev = vocab.start_id();
      for (int t = 0; t <= params.cfg.max_len; ++t) {
        StepResult r = bound.step(prev, st);
        st = r.state;
        const Tensor& p = tape.value(r.prob);
        int tok = t == params.cfg.max_len
                      ? vocab.end_id()
                      : rng.categorical(p.data(), p.numel());
        NodeId ce = tape.cross_entropy(r.logits, tok);
        sum_ce = sum_ce == kNoNode ? ce : tape.add(sum_ce, ce);
        if (tok == vocab.end_id()) break;
        sampled_tokens.push_back(tok);
        prev = tok;
      }
    }

    if (sampled_tokens.empty()) {
      std::cerr << "train_scst: degenerate sample at step " << step_i << ", skipped\n";
      ++result.skipped_steps;
      continue;
    }

    double reward_sampled = reward_fn(sampled_tokens, sample);
    double reward_greedy = reward_fn(greedy_tokens, sample);
    result.sampled_rewards.push_back(reward_sampled);
    double advantage = reward_sampled - reward_greedy;
    if (advantage != 0.0) {
      NodeId loss = tape.scale(sum_ce, advantage / static_cast<double>(sampled_tokens.size() + 1));
      GradientMap g = backward_grad(tape, loss);
      accumulate_param_grads(bound.param_nodes(), g, 1.0, grads);
    }
    ++in_batch;

    if (in_batch == opt.batch_size || step_i + 1 == opt.steps) {
      if (!grads.empty()) {
        for (auto& [name, g] : grads) {
          for (int i = 0; i < g.numel(); ++i) g[i] /= in_batch;
        }
        adam.step(params, grads);
      }
      grads.clear();
      in_batch = 0;
    }
    if (opt.verbose && (step_i + 1) % 50 == 0) {
      std::cout << "scst step " << (step_i + 1) << " reward " << reward_sampled << "\n";
    }
  }
  return result;
}

}  // namespace xcap
