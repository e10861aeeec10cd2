#include "btcnn/circle.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "btcnn/ops.hpp"

namespace btcnn {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

double circle_distance(double a, double b) {
  double d = std::fabs(a - b);
  d = std::fmod(d, kTwoPi);
  return std::min(d, kTwoPi - d);
}

CircleFilterBank make_circle_filters(int num_filters, int kernel_size) {
  if (num_filters < 1) {
    throw std::invalid_argument("circle filter bank needs at least 1 filter");
  }
  if (kernel_size < 3 || kernel_size % 2 == 0) {
    throw std::invalid_argument("circle filter kernel size must be odd and >= 3, got " +
                                std::to_string(kernel_size));
  }
  CircleFilterBank bank;
  bank.num_filters = num_filters;
  bank.kernel_size = kernel_size;
  bank.angles.resize(num_filters);
  bank.weights = Tensor::zeros({num_filters, 1, kernel_size, kernel_size});
  bank.bias = Tensor::zeros({num_filters});

  const int k = kernel_size;
  // k evenly spaced grid values spanning [-1, 1] on both axes.
  std::vector<double> grid(k);
  for (int i = 0; i < k; ++i) {
    grid[i] = -1.0 + 2.0 * static_cast<double>(i) / (k - 1);
  }

  auto& wv = bank.weights.values();
  for (int j = 0; j < num_filters; ++j) {
    const double angle = kTwoPi * static_cast<double>(j) / num_filters;
    bank.angles[j] = angle;
    const double ct = std::cos(angle);
    const double su = std::sin(angle);
    double norm_sq = 0.0;
    const std::size_t off = static_cast<std::size_t>(j) * k * k;
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c < k; ++c) {
        const double v = ct * grid[c] + su * grid[r];
        wv[off + static_cast<std::size_t>(r) * k + c] = v;
        norm_sq += v * v;
      }
    }
    const double inv_norm = 1.0 / std::sqrt(norm_sq);
    for (int p = 0; p < k * k; ++p) wv[off + p] *= inv_norm;
  }
  return bank;
}

Tensor circle_filter_forward(const CircleFilterBank& bank, const Tensor& input,
                             int padding, int stride) {
  if (input.shape().size() != 4 || input.dim(1) != 1) {
    throw std::invalid_argument(
        "circle filter layer expects single-channel input [B,1,H,W], got " +
        shape_to_string(input.shape()));
  }
  return conv2d(input, bank.weights, bank.bias, padding, stride);
}

std::size_t CircleOneMask::kept_connections() const {
  std::size_t n = 0;
  for (double m : mask) n += (m != 0.0);
  return n;
}

CircleOneMask make_col_mask(std::vector<double> out_points,
                            std::vector<double> in_points, double threshold) {
  if (threshold <= 0.0) {
    throw std::invalid_argument("circle-one threshold must be positive");
  }
  if (out_points.empty() || in_points.empty()) {
    throw std::invalid_argument("circle-one mask needs nonempty point sets");
  }
  CircleOneMask m;
  m.out_points = std::move(out_points);
  m.in_points = std::move(in_points);
  m.threshold = threshold;
  m.mask.resize(m.out_points.size() * m.in_points.size());
  for (std::size_t j = 0; j < m.out_points.size(); ++j) {
    for (std::size_t i = 0; i < m.in_points.size(); ++i) {
      const double d = circle_distance(m.out_points[j], m.in_points[i]);
      m.mask[j * m.in_points.size() + i] = d <= threshold ? 1.0 : 0.0;
    }
  }
  return m;
}

CircleOneMask make_col_mask(int c_out, int c_in, double threshold) {
  if (c_out < 1 || c_in < 1) {
    throw std::invalid_argument("circle-one mask needs positive channel counts");
  }
  std::vector<double> out_points(c_out), in_points(c_in);
  for (int j = 0; j < c_out; ++j) {
    out_points[j] = kTwoPi * static_cast<double>(j) / c_out;
  }
  for (int i = 0; i < c_in; ++i) {
    in_points[i] = kTwoPi * static_cast<double>(i) / c_in;
  }
  return make_col_mask(std::move(out_points), std::move(in_points), threshold);
}

Tensor col_forward(const CircleOneMask& mask, const Tensor& weights,
                   const Tensor& bias, const Tensor& input, int padding,
                   int stride) {
  if (weights.shape().size() != 4 || weights.dim(0) != mask.c_out() ||
      weights.dim(1) != mask.c_in()) {
    throw std::invalid_argument(
        "circle-one weights " + shape_to_string(weights.shape()) +
        " do not match mask [" + std::to_string(mask.c_out()) + "," +
        std::to_string(mask.c_in()) + "]");
  }
  Tensor effective = apply_channel_mask(weights, mask.mask);
  return conv2d(input, effective, bias, padding, stride);
}

}  // namespace btcnn
