#pragma once

#include <vector>

#include "btcnn/tensor.hpp"

namespace btcnn {

/// Shortest angular distance between two points on the unit circle.
double circle_distance(double a, double b);

/// Fixed convolutional filter bank sampled from the linear embedding of the
/// unit circle: filter j evaluates cos(x_j)*t + sin(x_j)*u on a centered
/// [-1,1] grid and is scaled to unit Frobenius norm. The weights never train.
struct CircleFilterBank {
  int num_filters = 0;
  int kernel_size = 0;
  std::vector<double> angles;  // x_j = 2*pi*j/K
  Tensor weights;              // [K,1,k,k], requires_grad = false
  Tensor bias;                 // [K] zeros, fixed
};

CircleFilterBank make_circle_filters(int num_filters, int kernel_size);

/// Convolution with the fixed bank. Input must be single-channel; no
/// gradient ever flows into the bank.
Tensor circle_filter_forward(const CircleFilterBank& bank, const Tensor& input,
                             int padding = 1, int stride = 1);

/// Connection pruning mask between two circle-indexed channel sets:
/// connection (j, i) survives iff the geodesic distance between out point j
/// and in point i is within the threshold (boundary kept).
struct CircleOneMask {
  std::vector<double> out_points;
  std::vector<double> in_points;
  double threshold = 0.0;
  std::vector<double> mask;  // [C_out * C_in], entries 0 or 1

  int c_out() const { return static_cast<int>(out_points.size()); }
  int c_in() const { return static_cast<int>(in_points.size()); }
  std::size_t kept_connections() const;
};

/// Points evenly spaced on [0, 2*pi) in channel order.
CircleOneMask make_col_mask(int c_out, int c_in, double threshold);

/// Same rule with caller-provided point assignments (e.g. reusing the
/// angles of a preceding circle-filter bank as the in-points).
CircleOneMask make_col_mask(std::vector<double> out_points,
                            std::vector<double> in_points, double threshold);

/// Convolution with pruned connections: kernels are multiplied by the mask
/// (broadcast over the spatial window) before the convolution, so masked
/// weights contribute nothing and receive zero gradient.
Tensor col_forward(const CircleOneMask& mask, const Tensor& weights,
                   const Tensor& bias, const Tensor& input, int padding = 1,
                   int stride = 1);

}  // namespace btcnn
