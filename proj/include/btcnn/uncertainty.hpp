#pragma once

#include <span>
#include <vector>

#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"

namespace btcnn {

class Model;

/// S per-sample probability vectors from independent posterior draws plus
/// their elementwise average.
struct PredictionEnsemble {
  std::vector<Tensor> member_probs;  // S tensors of shape [N,C]
  Tensor mean_probs;                 // [N,C]

  int num_members() const { return static_cast<int>(member_probs.size()); }
  int num_inputs() const { return mean_probs.dim(0); }
  int num_classes() const { return mean_probs.dim(1); }
};

/// Validates the members (same shape, normalized rows) and averages them.
PredictionEnsemble make_ensemble(std::vector<Tensor> members);

/// Runs S forward passes with independent posterior draws and averages the
/// softmax outputs. A deterministic model yields S identical members.
PredictionEnsemble predict_ensemble(Model& model, const Tensor& inputs,
                                    int samples, Rng& rng);

/// Shannon entropy in bits, with 0 * log 0 := 0. Negative entries are
/// rejected.
double entropy_bits(std::span<const double> p);

/// Per-sample uncertainties in bits. epistemic = total - aleatoric is the
/// mutual information between prediction and parameters; it is nonnegative
/// up to numerical slack.
struct UncertaintyReport {
  std::vector<double> total;
  std::vector<double> aleatoric;
  std::vector<double> epistemic;
};

UncertaintyReport decompose_uncertainty(const PredictionEnsemble& ensemble);

}  // namespace btcnn
