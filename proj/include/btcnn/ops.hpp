#pragma once

#include <vector>

#include "btcnn/tensor.hpp"

namespace btcnn {

// Differentiable operations. Each op computes its result eagerly and, when a
// tape is active and an input requires a gradient, appends its backward rule
// to the tape. Binary elementwise ops require identical shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor log(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor square(const Tensor& x);
/// ln(1 + e^x), evaluated without overflow; always positive.
Tensor softplus(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<int> shape);

/// out[b,j] = sum_i input[b,i] * weights[i,j] + bias[j].
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// Cross-correlation of input [B,C_in,H,W] with kernels [C_out,C_in,k,k]
/// plus per-channel bias; zero padding. Output spatial size is
/// floor((H + 2*padding - k) / stride) + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int padding, int stride);

/// Non-overlapping max pooling; spatial dims must divide the window.
/// Gradient flows only to the first maximal cell in row-major scan order.
Tensor maxpool2d(const Tensor& input, int window);

/// Row-wise softmax of logits [B,C], stabilized by max subtraction.
Tensor softmax(const Tensor& logits);

struct SoftmaxCrossEntropy {
  Tensor loss;   // scalar, mean over the batch of -log p[b, label_b]
  Tensor probs;  // [B,C], rows sum to 1
};

/// Fused stabilized softmax + negative log-likelihood. Both outputs are
/// differentiable with respect to the logits.
SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits,
                                          const std::vector<int>& labels);

/// Multiplies kernels [C_out,C_in,k,k] by a per-connection {0,1} mask
/// [C_out*C_in], broadcast over the k*k window; gradients of masked entries
/// are zero.
Tensor apply_channel_mask(const Tensor& kernels,
                          const std::vector<double>& mask);

/// Number of worker threads used by the heavy kernels (matmul lowering).
/// Always deterministic: partitioning is static and output-disjoint.
int compute_threads();
void set_compute_threads(int n);

}  // namespace btcnn
