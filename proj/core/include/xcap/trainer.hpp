#pragma once

#include <functional>
#include <optional>

#include "xcap/captioner.hpp"
#include "xcap/metrics.hpp"
#include "xcap/vocab.hpp"

namespace xcap {

struct TrainSample {
  int id = 0;
  Tensor input;  // (c,h,w) image or (n_v,d_h) precomputed features
  std::vector<std::vector<int>> captions;             // token ids, no specials
  std::vector<std::vector<std::string>> ref_words;    // reference word lists

  bool precomputed() const { return input.rank() == 2; }
};

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.8, double beta2 = 0.999, double eps = 1e-8);

  void step(CaptionerParams& params, const std::map<std::string, Tensor>& grads);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

struct TrainOptions {
  int epochs = 10;
  int batch_size = 8;
  double lr = 5e-4;
  double beta1 = 0.8;
  double beta2 = 0.999;
  double anneal_factor = 0.8;  // times lr on a validation plateau
  int anneal_patience = 3;     // epochs without improvement before annealing
  int stop_patience = 6;       // epochs without improvement before stopping
  uint64_t seed = 1;
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double val_score = 0.0;  // greedy-decode consensus score on the val split
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  double final_val_score = 0.0;
};

// Mean per-token cross entropy of teacher-forced captions, no updates.
double teacher_forced_loss(const CaptionerParams& params,
                           const std::vector<TrainSample>& samples,
                           const Vocabulary& vocab);

// Fraction of steps whose argmax matches the forced target.
double teacher_forced_accuracy(const CaptionerParams& params,
                               const std::vector<TrainSample>& samples,
                               const Vocabulary& vocab);

// Teacher-forced cross-entropy training with Adam and plateau annealing.
TrainResult train_xent(CaptionerParams& params, const std::vector<TrainSample>& train,
                       const std::vector<TrainSample>& val, const Vocabulary& vocab,
                       const TrainOptions& opt);

// Sentence reward for policy-gradient training.
using RewardFn = std::function<double(const std::vector<int>& tokens, const TrainSample&)>;

RewardFn cider_reward(const CiderScorer& scorer, const Vocabulary& vocab);

struct ScstOptions {
  int steps = 200;  // sampled sentences (one per step)
  int batch_size = 8;
  double lr = 1e-4;
  uint64_t seed = 1;
  bool verbose = false;
};

struct ScstResult {
  std::vector<double> sampled_rewards;
  int skipped_steps = 0;  // degenerate samples
};

// Policy gradient with the greedy rollout as baseline: sampled and greedy
// sequences are scored by reward_fn, and the advantage weights the sampled
// path's log likelihood.
ScstResult train_scst(CaptionerParams& params, const std::vector<TrainSample>& train,
                      const RewardFn& reward_fn, const Vocabulary& vocab,
                      const ScstOptions& opt);

// Greedy validation-set captions scored against the references.
double validation_score(const CaptionerParams& params,
                        const std::vector<TrainSample>& val, const Vocabulary& vocab,
                        const CiderScorer& scorer);

}  // namespace xcap
