#pragma once

#include <vector>

#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"

namespace btcnn {

/// Mean-field Gaussian posterior over one weight tensor. The free
/// parameters are mu and rho; the standard deviation is softplus(rho),
/// which keeps it positive for any rho. Sampling goes through
/// theta = mu + eps * sigma so gradients reach mu and rho.
class VariationalParameter {
 public:
  VariationalParameter() = default;
  VariationalParameter(std::vector<int> shape, double rho_init);

  Tensor mu;
  Tensor rho;

  /// Draws eps ~ N(0, I) and returns theta = mu + eps * softplus(rho) as a
  /// graph node. The draw, the sigma node and theta are kept for the
  /// posterior/prior log-density term of the same pass.
  Tensor sample(Rng& rng);

  bool has_sample() const { return last_theta_.defined(); }
  const Tensor& last_theta() const;
  const Tensor& last_epsilon() const;

  /// sum over entries of log N(theta; mu, sigma^2) - log N(theta; 0, 1),
  /// evaluated at the recorded theta; differentiable wrt mu and rho.
  /// Throws std::logic_error before the first sample().
  Tensor log_q_minus_log_p() const;

  /// sum over entries of (mu^2 + sigma^2 - 1 - ln sigma^2) / 2, the exact
  /// KL divergence from the posterior to the standard normal prior.
  double kl_closed_form() const;

  std::vector<double> sigma() const;
  std::size_t parameter_count() const { return mu.size() + rho.size(); }

 private:
  Tensor last_epsilon_;
  Tensor last_sigma_;
  Tensor last_theta_;
};

/// Fully connected layer with variational weight and bias posteriors and a
/// standard normal prior on both. Twice the parameters of a deterministic
/// dense layer of the same size.
class BayesianDense {
 public:
  BayesianDense(int in_features, int out_features, Rng& init_rng,
                double rho_init = -3.0);

  /// Samples fresh weight and bias realizations, then applies the
  /// deterministic dense op with them.
  Tensor forward(const Tensor& input, Rng& rng);

  Tensor log_q_minus_log_p() const;
  double kl_closed_form() const;

  std::vector<Tensor> parameters();
  std::size_t parameter_count() const {
    return weight.parameter_count() + bias.parameter_count();
  }

  int in_features = 0;
  int out_features = 0;
  VariationalParameter weight;
  VariationalParameter bias;
};

/// Sum of the per-layer posterior/prior terms; zero for an empty list.
Tensor log_q_minus_log_p(const std::vector<BayesianDense*>& layers);

}  // namespace btcnn
