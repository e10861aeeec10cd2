#include "btcnn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace btcnn {

Optimizer::Optimizer(std::vector<Tensor> parameters, OptimizerConfig config)
    : parameters_(std::move(parameters)), config_(config) {
  if (config_.learning_rate <= 0.0) {
    throw std::invalid_argument("learning rate must be positive");
  }
  if (config_.method == OptimizerConfig::Method::AdaptiveMoments) {
    moments_.resize(parameters_.size());
    for (std::size_t i = 0; i < parameters_.size(); ++i) {
      moments_[i].first.assign(parameters_[i].size(), 0.0);
      moments_[i].second.assign(parameters_[i].size(), 0.0);
    }
  }
}

void Optimizer::step() {
  for (const Tensor& p : parameters_) {
    if (!p.has_grad()) {
      throw std::logic_error("optimizer step with missing gradient for shape " +
                             shape_to_string(p.shape()));
    }
  }
  ++step_count_;
  const double lr = config_.learning_rate;
  if (config_.method == OptimizerConfig::Method::Sgd) {
    for (const Tensor& p : parameters_) {
      auto& w = p.values();
      const auto& g = p.grad();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
      p.zero_grad();
    }
    return;
  }

  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
  for (std::size_t pi = 0; pi < parameters_.size(); ++pi) {
    auto& w = parameters_[pi].values();
    const auto& g = parameters_[pi].grad();
    auto& m = moments_[pi].first;
    auto& v = moments_[pi].second;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    parameters_[pi].zero_grad();
  }
}

}  // namespace btcnn
