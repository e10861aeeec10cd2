#pragma once

#include <vector>

#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"

namespace btcnn {

class Model;

struct LossConfig {
  int mc_samples = 1;          // parameter draws averaged per minibatch
  double gamma = 0.0;          // consistency weight; 0 disables the term
  double kl_scale = 1.0;       // per-minibatch weight of the posterior/prior term
  double pair_epsilon = 1e-8;  // guards the ratio against duplicate images
};

struct Batch {
  Tensor inputs;  // [B,1,H,W]
  std::vector<int> labels;
};

/// Output-consistency penalty over all ordered in-batch pairs:
///   (1/B) * sum_{i != j} gamma * |probs_i - probs_j|^2
///                        / (|x_i - x_j|_F^2 + pair_epsilon),
/// differentiable with respect to probs. Exactly zero when gamma is 0 or
/// the batch has a single element.
Tensor consistency_term(const Tensor& probs, const Tensor& inputs,
                        double gamma, double pair_epsilon);

/// Monte-Carlo training objective: the average over mc_samples fresh
/// parameter draws of
///   kl_scale * (log q(theta) - log p(theta)) + mean cross-entropy
///   + consistency term.
/// Deterministic models contribute no posterior/prior term; gamma = 0
/// skips the consistency term entirely.
Tensor minibatch_loss(Model& model, const Batch& batch, const LossConfig& cfg,
                      Rng& rng);

}  // namespace btcnn
