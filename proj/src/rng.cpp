#include "btcnn/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace btcnn {

void fill_fan_in_uniform(const Tensor& weights, int fan_in, Rng& rng) {
  if (fan_in <= 0) throw std::invalid_argument("fan_in must be positive");
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& w : weights.values()) w = draw_uniform(rng, -limit, limit);
}

void fill_standard_normal(const Tensor& t, Rng& rng) {
  for (double& v : t.values()) v = draw_normal(rng);
}

}  // namespace btcnn
