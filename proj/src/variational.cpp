#include "btcnn/variational.hpp"

#include <cmath>
#include <stdexcept>

#include "btcnn/ops.hpp"

namespace btcnn {

VariationalParameter::VariationalParameter(std::vector<int> shape,
                                           double rho_init) {
  mu = Tensor::zeros(shape, true);
  rho = Tensor::full(std::move(shape), rho_init, true);
}

Tensor VariationalParameter::sample(Rng& rng) {
  Tensor eps = Tensor::zeros(mu.shape());
  fill_standard_normal(eps, rng);
  Tensor sigma_node = softplus(rho);
  Tensor theta = add(mu, mul(eps, sigma_node));
  last_epsilon_ = eps;
  last_sigma_ = sigma_node;
  last_theta_ = theta;
  return theta;
}

const Tensor& VariationalParameter::last_theta() const {
  if (!last_theta_.defined()) {
    throw std::logic_error("variational parameter has no recorded sample");
  }
  return last_theta_;
}

const Tensor& VariationalParameter::last_epsilon() const {
  if (!last_epsilon_.defined()) {
    throw std::logic_error("variational parameter has no recorded sample");
  }
  return last_epsilon_;
}

Tensor VariationalParameter::log_q_minus_log_p() const {
  if (!last_theta_.defined()) {
    throw std::logic_error(
        "log_q_minus_log_p called before any forward pass sampled theta");
  }
  // log N(t; mu, s^2) - log N(t; 0, 1) = -ln s - (t-mu)^2/(2 s^2) + t^2/2;
  // the normalization constants cancel.
  Tensor neg_log_sigma = mul_scalar(log(last_sigma_), -1.0);
  Tensor quad_q = div(square(sub(last_theta_, mu)),
                      mul_scalar(square(last_sigma_), 2.0));
  Tensor quad_p = mul_scalar(square(last_theta_), 0.5);
  return sum(add(sub(neg_log_sigma, quad_q), quad_p));
}

double VariationalParameter::kl_closed_form() const {
  const auto& mv = mu.values();
  const auto& rv = rho.values();
  double total = 0.0;
  for (std::size_t i = 0; i < mv.size(); ++i) {
    const double r = rv[i];
    const double s =
        r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
    total += 0.5 * (mv[i] * mv[i] + s * s - 1.0 - 2.0 * std::log(s));
  }
  return total;
}

std::vector<double> VariationalParameter::sigma() const {
  std::vector<double> out(rho.size());
  const auto& rv = rho.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double r = rv[i];
    out[i] = r > 0.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
  }
  return out;
}

BayesianDense::BayesianDense(int in_features_, int out_features_,
                             Rng& init_rng, double rho_init)
    : in_features(in_features_), out_features(out_features_) {
  if (in_features < 1 || out_features < 1) {
    throw std::invalid_argument("bayesian dense layer needs positive sizes");
  }
  weight = VariationalParameter({in_features, out_features}, rho_init);
  bias = VariationalParameter({out_features}, rho_init);
  fill_fan_in_uniform(weight.mu, in_features, init_rng);
}

Tensor BayesianDense::forward(const Tensor& input, Rng& rng) {
  Tensor theta_w = weight.sample(rng);
  Tensor theta_b = bias.sample(rng);
  return dense(input, theta_w, theta_b);
}

Tensor BayesianDense::log_q_minus_log_p() const {
  return add(weight.log_q_minus_log_p(), bias.log_q_minus_log_p());
}

double BayesianDense::kl_closed_form() const {
  return weight.kl_closed_form() + bias.kl_closed_form();
}

std::vector<Tensor> BayesianDense::parameters() {
  return {weight.mu, weight.rho, bias.mu, bias.rho};
}

Tensor log_q_minus_log_p(const std::vector<BayesianDense*>& layers) {
  if (layers.empty()) return Tensor::scalar(0.0);
  Tensor total = layers[0]->log_q_minus_log_p();
  for (std::size_t i = 1; i < layers.size(); ++i) {
    total = add(total, layers[i]->log_q_minus_log_p());
  }
  return total;
}

}  // namespace btcnn
