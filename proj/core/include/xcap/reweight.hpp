#pragma once

#include <set>

#include "xcap/trainer.hpp"

namespace xcap {

// One re-weighted prediction step: relevance of the chosen label's logit is
// pushed through the output layer only, normalized by its maximal absolute
// value, and shifted to [0,2] feature weights.
struct ReweightedStep {
  Tensor r_c, r_h;          // relevance split over context and hidden state
  Tensor omega_c, omega_h;  // feature weights, entries in [0,2]
  Tensor p_hat;             // softmax(fc(omega_c*c + omega_h*h))
};

ReweightedStep reweight_step(const Tensor& fc_w, const Tensor& fc_b, const Tensor& c,
                             const Tensor& h, int label, double eps);

// lambda * CE(p, y) + (1 - lambda) * CE(p_hat, y) on probability vectors.
double lrp_ce_loss(const Tensor& p, const Tensor& p_hat, int y, double lambda);

struct IftOptions {
  double lambda = 0.5;
  double epsilon = 0.01;  // stabilizer for the output-layer relevance
  double lr = 1e-4;
  int epochs = 1;
  int batch_size = 8;
  uint64_t seed = 1;
  // Ablation switch: build the feature weights on the tape so gradients flow
  // through the relevance computation instead of treating it as a constant.
  bool differentiate_omega = false;
  bool verbose = false;
};

// Cross-entropy fine-tuning with per-step re-weighted predictions. Steps
// whose predicted word is a stop-word keep the original distribution.
void finetune_lrp_ce(CaptionerParams& params, const std::vector<TrainSample>& train,
                     const Vocabulary& vocab, const std::set<std::string>& stop_words,
                     const IftOptions& opt);

// Standard cross-entropy fine-tuning with identical hyperparameters, the
// comparison twin for the run above.
void finetune_baseline_ce(CaptionerParams& params, const std::vector<TrainSample>& train,
                          const Vocabulary& vocab, const IftOptions& opt);

// Self-critical fine-tuning where both the sampled and the greedy rollout
// draw from the re-weighted distribution.
void finetune_lrp_scst(CaptionerParams& params, const std::vector<TrainSample>& train,
                       const RewardFn& reward_fn, const Vocabulary& vocab,
                       const std::set<std::string>& stop_words, const IftOptions& opt);

void finetune_baseline_scst(CaptionerParams& params,
                            const std::vector<TrainSample>& train,
                            const RewardFn& reward_fn, const Vocabulary& vocab,
                            const IftOptions& opt);

}  // namespace xcap
