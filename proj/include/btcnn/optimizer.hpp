#pragma once

#include <vector>

#include "btcnn/tensor.hpp"

namespace btcnn {

struct OptimizerConfig {
  enum class Method { Sgd, AdaptiveMoments };
  Method method = Method::AdaptiveMoments;
  double learning_rate = 1e-3;
  // Adaptive-moment settings (ignored for plain SGD).
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Gradient-descent update over a fixed parameter list. In adaptive mode
/// keeps bias-corrected first/second moment buffers per parameter.
class Optimizer {
 public:
  Optimizer(std::vector<Tensor> parameters, OptimizerConfig config);

  /// Applies one update in place and zeroes all gradients.
  /// Throws std::logic_error if any parameter has no gradient buffer.
  void step();

  const OptimizerConfig& config() const { return config_; }
  long step_count() const { return step_count_; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  std::vector<Tensor> parameters_;
  std::vector<Moments> moments_;
  OptimizerConfig config_;
  long step_count_ = 0;
};

}  // namespace btcnn
