#include "btcnn/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

namespace btcnn {

namespace {

std::atomic<int> g_compute_threads{1};

/// Runs body(begin, end) over a static contiguous partition of [0, n).
/// Each index is handled by exactly one worker with the same inner loop as
/// the serial code, so results are bitwise identical for any thread count.
template <class F>
void parallel_for(int n, F&& body) {
  int workers = std::min(g_compute_threads.load(), n);
  if (workers <= 1) {
    body(0, n);
    return;
  }
  int chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    int b = w * chunk;
    int e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  for (auto& t : pool) t.join();
}

// C[M,N] += A[M,K] * B[K,N]
void mm_nn(const double* A, const double* B, double* C, int M, int K, int N) {
  parallel_for(M, [&](int i0, int i1) {
    for (int i = i0; i < i1; ++i) {
      const double* a = A + static_cast<std::size_t>(i) * K;
      double* c = C + static_cast<std::size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        const double aik = a[k];
        const double* b = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) c[j] += aik * b[j];
      }
    }
  });
}

// C[M,N] += A[M,K] * B[N,K]^T
void mm_nt(const double* A, const double* B, double* C, int M, int K, int N) {
  parallel_for(M, [&](int i0, int i1) {
    for (int i = i0; i < i1; ++i) {
      const double* a = A + static_cast<std::size_t>(i) * K;
      double* c = C + static_cast<std::size_t>(i) * N;
      for (int j = 0; j < N; ++j) {
        const double* b = B + static_cast<std::size_t>(j) * K;
        double acc = 0.0;
        for (int k = 0; k < K; ++k) acc += a[k] * b[k];
        c[j] += acc;
      }
    }
  });
}

// C[M,N] += A[K,M]^T * B[K,N]
void mm_tn(const double* A, const double* B, double* C, int M, int K, int N) {
  parallel_for(M, [&](int i0, int i1) {
    for (int k = 0; k < K; ++k) {
      const double* a = A + static_cast<std::size_t>(k) * M;
      const double* b = B + static_cast<std::size_t>(k) * N;
      for (int i = i0; i < i1; ++i) {
        const double aki = a[i];
        double* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) c[j] += aki * b[j];
      }
    }
  });
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd&& fwd, Bwd&& bwd) {
  Tensor y = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = fwd(xv[i]);
  if (recording({&x})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [x, y, bwd]() {
          const auto& g = y.grad();
          const auto& xv2 = x.values();
          const auto& yv2 = y.values();
          auto& xg = x.grad();
          for (std::size_t i = 0; i < xg.size(); ++i) {
            xg[i] += g[i] * bwd(xv2[i], yv2[i]);
          }
        },
        {y});
  }
  return y;
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

struct ConvDims {
  int batch, c_in, h, w;
  int c_out, k;
  int padding, stride;
  int h_out, w_out;
  std::size_t rows() const { return static_cast<std::size_t>(c_in) * k * k; }
  std::size_t cols() const {
    return static_cast<std::size_t>(batch) * h_out * w_out;
  }
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernels,
                   const Tensor& bias, int padding, int stride) {
  if (input.shape().size() != 4) {
    throw std::invalid_argument("conv2d: input must be [B,C,H,W], got " +
                                shape_to_string(input.shape()));
  }
  if (kernels.shape().size() != 4 || kernels.dim(2) != kernels.dim(3)) {
    throw std::invalid_argument(
        "conv2d: kernels must be [C_out,C_in,k,k], got " +
        shape_to_string(kernels.shape()));
  }
  ConvDims d;
  d.batch = input.dim(0);
  d.c_in = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.c_out = kernels.dim(0);
  d.k = kernels.dim(2);
  d.padding = padding;
  d.stride = stride;
  if (kernels.dim(1) != d.c_in) {
    throw std::invalid_argument("conv2d: kernel channels " +
                                shape_to_string(kernels.shape()) +
                                " do not match input " +
                                shape_to_string(input.shape()));
  }
  if (d.k % 2 == 0) {
    throw std::invalid_argument("conv2d: kernel size must be odd, got " +
                                std::to_string(d.k));
  }
  if (padding < 0 || stride < 1) {
    throw std::invalid_argument("conv2d: need padding >= 0 and stride >= 1");
  }
  if (d.h + 2 * padding < d.k || d.w + 2 * padding < d.k) {
    throw std::invalid_argument(
        "conv2d: kernel size " + std::to_string(d.k) +
        " exceeds padded input " + shape_to_string(input.shape()) +
        " with padding " + std::to_string(padding));
  }
  if (bias.shape() != std::vector<int>{d.c_out}) {
    throw std::invalid_argument("conv2d: bias must be [" +
                                std::to_string(d.c_out) + "], got " +
                                shape_to_string(bias.shape()));
  }
  d.h_out = (d.h + 2 * padding - d.k) / stride + 1;
  d.w_out = (d.w + 2 * padding - d.k) / stride + 1;
  return d;
}

// Lowers input patches to a [C_in*k*k, B*H_out*W_out] matrix.
void im2col(const double* x, const ConvDims& d, double* col) {
  const std::size_t cols = d.cols();
  parallel_for(d.batch, [&](int b0, int b1) {
    for (int b = b0; b < b1; ++b) {
      for (int oh = 0; oh < d.h_out; ++oh) {
        for (int ow = 0; ow < d.w_out; ++ow) {
          std::size_t c =
              (static_cast<std::size_t>(b) * d.h_out + oh) * d.w_out + ow;
          for (int ci = 0; ci < d.c_in; ++ci) {
            for (int kr = 0; kr < d.k; ++kr) {
              int ih = oh * d.stride + kr - d.padding;
              for (int kc = 0; kc < d.k; ++kc) {
                int iw = ow * d.stride + kc - d.padding;
                std::size_t r =
                    (static_cast<std::size_t>(ci) * d.k + kr) * d.k + kc;
                double v = 0.0;
                if (ih >= 0 && ih < d.h && iw >= 0 && iw < d.w) {
                  v = x[((static_cast<std::size_t>(b) * d.c_in + ci) * d.h +
                         ih) *
                            d.w +
                        iw];
                }
                col[r * cols + c] = v;
              }
            }
          }
        }
      }
    }
  });
}

// Transpose of im2col: scatter-adds column gradients back onto the image.
void col2im_add(const double* col, const ConvDims& d, double* gx) {
  const std::size_t cols = d.cols();
  for (int b = 0; b < d.batch; ++b) {
    for (int oh = 0; oh < d.h_out; ++oh) {
      for (int ow = 0; ow < d.w_out; ++ow) {
        std::size_t c =
            (static_cast<std::size_t>(b) * d.h_out + oh) * d.w_out + ow;
        for (int ci = 0; ci < d.c_in; ++ci) {
          for (int kr = 0; kr < d.k; ++kr) {
            int ih = oh * d.stride + kr - d.padding;
            if (ih < 0 || ih >= d.h) continue;
            for (int kc = 0; kc < d.k; ++kc) {
              int iw = ow * d.stride + kc - d.padding;
              if (iw < 0 || iw >= d.w) continue;
              std::size_t r =
                  (static_cast<std::size_t>(ci) * d.k + kr) * d.k + kc;
              gx[((static_cast<std::size_t>(b) * d.c_in + ci) * d.h + ih) *
                     d.w +
                 iw] += col[r * cols + c];
            }
          }
        }
      }
    }
  }
}

}  // namespace

int compute_threads() { return g_compute_threads.load(); }

void set_compute_threads(int n) {
  g_compute_threads.store(std::max(1, n));
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] + bv[i];
  if (recording({&a, &b})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [a, b, y]() {
          const auto& g = y.grad();
          if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
          }
          if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
          }
        },
        {y});
  }
  return y;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor y = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] - bv[i];
  if (recording({&a, &b})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [a, b, y]() {
          const auto& g = y.grad();
          if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
          }
          if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
          }
        },
        {y});
  }
  return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor y = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] * bv[i];
  if (recording({&a, &b})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [a, b, y]() {
          const auto& g = y.grad();
          const auto& av2 = a.values();
          const auto& bv2 = b.values();
          if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
          }
          if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
          }
        },
        {y});
  }
  return y;
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "div");
  Tensor y = Tensor::zeros(a.shape());
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& yv = y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = av[i] / bv[i];
  if (recording({&a, &b})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [a, b, y]() {
          const auto& g = y.grad();
          const auto& bv2 = b.values();
          const auto& yv2 = y.values();
          if (a.requires_grad()) {
            auto& ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv2[i];
          }
          if (b.requires_grad()) {
            auto& gb = b.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
              gb[i] -= g[i] * yv2[i] / bv2[i];
            }
          }
        },
        {y});
  }
  return y;
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; },
      [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double c) {
  return unary_op(
      a, [c](double x) { return x * c; },
      [c](double, double) { return c; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

Tensor softplus(const Tensor& x) {
  return unary_op(
      x, [](double v) { return stable_softplus(v); },
      [](double v, double) { return stable_sigmoid(v); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor y = Tensor::scalar(acc);
  if (recording({&x})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [x, y]() {
          const double g = y.grad()[0];
          auto& xg = x.grad();
          for (double& v : xg) v += g;
        },
        {y});
  }
  return y;
}

Tensor mean(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor y = Tensor::scalar(acc * inv);
  if (recording({&x})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [x, y, inv]() {
          const double g = y.grad()[0] * inv;
          auto& xg = x.grad();
          for (double& v : xg) v += g;
        },
        {y});
  }
  return y;
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  Tensor y = Tensor::from_values(std::move(shape), x.values());
  if (y.size() != x.size()) {
    throw std::invalid_argument("reshape: " + shape_to_string(x.shape()) +
                                " incompatible with " +
                                shape_to_string(y.shape()));
  }
  if (recording({&x})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [x, y]() {
          const auto& g = y.grad();
          auto& xg = x.grad();
          for (std::size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
        },
        {y});
  }
  return y;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.shape().size() != 2 || weights.shape().size() != 2 ||
      bias.shape().size() != 1 || input.dim(1) != weights.dim(0) ||
      bias.dim(0) != weights.dim(1)) {
    throw std::invalid_argument(
        "dense: incompatible shapes input=" + shape_to_string(input.shape()) +
        " weights=" + shape_to_string(weights.shape()) +
        " bias=" + shape_to_string(bias.shape()));
  }
  const int batch = input.dim(0);
  const int n_in = input.dim(1);
  const int n_out = weights.dim(1);
  Tensor y = Tensor::zeros({batch, n_out});
  mm_nn(input.values().data(), weights.values().data(), y.values().data(),
        batch, n_in, n_out);
  {
    auto& yv = y.values();
    const auto& bv = bias.values();
    for (int b = 0; b < batch; ++b) {
      double* row = yv.data() + static_cast<std::size_t>(b) * n_out;
      for (int j = 0; j < n_out; ++j) row[j] += bv[j];
    }
  }
  if (recording({&input, &weights, &bias})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [input, weights, bias, y, batch, n_in, n_out]() {
          const auto& g = y.grad();
          if (input.requires_grad()) {
            mm_nt(g.data(), weights.values().data(), input.grad().data(),
                  batch, n_out, n_in);
          }
          if (weights.requires_grad()) {
            mm_tn(input.values().data(), g.data(), weights.grad().data(), n_in,
                  batch, n_out);
          }
          if (bias.requires_grad()) {
            auto& gb = bias.grad();
            for (int b = 0; b < batch; ++b) {
              const double* row = g.data() + static_cast<std::size_t>(b) * n_out;
              for (int j = 0; j < n_out; ++j) gb[j] += row[j];
            }
          }
        },
        {y});
  }
  return y;
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int padding, int stride) {
  const ConvDims d = conv_dims(input, kernels, bias, padding, stride);
  const std::size_t rows = d.rows();
  const std::size_t cols = d.cols();

  auto col = std::make_shared<std::vector<double>>(rows * cols);
  im2col(input.values().data(), d, col->data());

  std::vector<double> out_mat(static_cast<std::size_t>(d.c_out) * cols, 0.0);
  mm_nn(kernels.values().data(), col->data(), out_mat.data(), d.c_out,
        static_cast<int>(rows), static_cast<int>(cols));

  Tensor y = Tensor::zeros({d.batch, d.c_out, d.h_out, d.w_out});
  {
    auto& yv = y.values();
    const auto& bv = bias.values();
    const int plane = d.h_out * d.w_out;
    for (int b = 0; b < d.batch; ++b) {
      for (int co = 0; co < d.c_out; ++co) {
        const double bias_c = bv[co];
        const double* src =
            out_mat.data() + static_cast<std::size_t>(co) * cols +
            static_cast<std::size_t>(b) * plane;
        double* dst = yv.data() +
                      (static_cast<std::size_t>(b) * d.c_out + co) * plane;
        for (int p = 0; p < plane; ++p) dst[p] = src[p] + bias_c;
      }
    }
  }

  if (recording({&input, &kernels, &bias})) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [input, kernels, bias, y, d, col, rows, cols]() {
          const auto& gy = y.grad();
          const int plane = d.h_out * d.w_out;
          // Gather output grads into the matmul layout [C_out, B*H'*W'].
          std::vector<double> gmat(static_cast<std::size_t>(d.c_out) * cols);
          for (int b = 0; b < d.batch; ++b) {
            for (int co = 0; co < d.c_out; ++co) {
              const double* src =
                  gy.data() +
                  (static_cast<std::size_t>(b) * d.c_out + co) * plane;
              double* dst = gmat.data() +
                            static_cast<std::size_t>(co) * cols +
                            static_cast<std::size_t>(b) * plane;
              for (int p = 0; p < plane; ++p) dst[p] = src[p];
            }
          }
          if (kernels.requires_grad()) {
            mm_nt(gmat.data(), col->data(), kernels.grad().data(), d.c_out,
                  static_cast<int>(cols), static_cast<int>(rows));
          }
          if (bias.requires_grad()) {
            auto& gb = bias.grad();
            for (int co = 0; co < d.c_out; ++co) {
              const double* row =
                  gmat.data() + static_cast<std::size_t>(co) * cols;
              double acc = 0.0;
              for (std::size_t c = 0; c < cols; ++c) acc += row[c];
              gb[co] += acc;
            }
          }
          if (input.requires_grad()) {
            std::vector<double> gcol(rows * cols, 0.0);
            mm_tn(kernels.values().data(), gmat.data(), gcol.data(),
                  static_cast<int>(rows), d.c_out, static_cast<int>(cols));
            col2im_add(gcol.data(), d, input.grad().data());
          }
        },
        {y});
  }
  return y;
}

Tensor maxpool2d(const Tensor& input, int window) {
  if (input.shape().size() != 4) {
    throw std::invalid_argument("maxpool2d: input must be [B,C,H,W], got " +
                                shape_to_string(input.shape()));
  }
  if (window < 1) throw std::invalid_argument("maxpool2d: window must be >= 1");
  const int batch = input.dim(0), channels = input.dim(1);
  const int h = input.dim(2), w = input.dim(3);
  if (h % window != 0 || w % window != 0) {
    throw std::invalid_argument(
        "maxpool2d: spatial dims of " + shape_to_string(input.shape()) +
        " not divisible by window " + std::to_string(window));
  }
  const int ho = h / window, wo = w / window;
  Tensor y = Tensor::zeros({batch, channels, ho, wo});

  const bool rec = recording({&input});
  auto argmax = rec ? std::make_shared<std::vector<std::size_t>>(y.size())
                    : nullptr;

  const auto& xv = input.values();
  auto& yv = y.values();
  std::size_t out_idx = 0;
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < channels; ++c) {
      const std::size_t base =
          (static_cast<std::size_t>(b) * channels + c) * h * w;
      for (int oh = 0; oh < ho; ++oh) {
        for (int ow = 0; ow < wo; ++ow) {
          double best = -1.0;
          std::size_t best_idx = 0;
          bool first = true;
          for (int r = 0; r < window; ++r) {
            for (int q = 0; q < window; ++q) {
              std::size_t idx = base +
                                static_cast<std::size_t>(oh * window + r) * w +
                                (ow * window + q);
              // Strict > keeps the first maximum in row-major scan order.
              if (first || xv[idx] > best) {
                best = xv[idx];
                best_idx = idx;
                first = false;
              }
            }
          }
          yv[out_idx] = best;
          if (rec) (*argmax)[out_idx] = best_idx;
          ++out_idx;
        }
      }
    }
  }

  if (rec) {
    y.set_requires_grad(true);
    Tape::active()->record(
        [input, y, argmax]() {
          const auto& g = y.grad();
          auto& xg = input.grad();
          for (std::size_t i = 0; i < g.size(); ++i) {
            xg[(*argmax)[i]] += g[i];
          }
        },
        {y});
  }
  return y;
}

Tensor softmax(const Tensor& logits) {
  if (logits.shape().size() != 2) {
    throw std::invalid_argument("softmax: logits must be [B,C], got " +
                                shape_to_string(logits.shape()));
  }
  const int batch = logits.dim(0), classes = logits.dim(1);
  Tensor probs = Tensor::zeros(logits.shape());
  const auto& lv = logits.values();
  auto& pv = probs.values();
  for (int b = 0; b < batch; ++b) {
    const double* row = lv.data() + static_cast<std::size_t>(b) * classes;
    double* out = pv.data() + static_cast<std::size_t>(b) * classes;
    double m = row[0];
    for (int c = 1; c < classes; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) {
      out[c] = std::exp(row[c] - m);
      z += out[c];
    }
    for (int c = 0; c < classes; ++c) out[c] /= z;
  }
  if (recording({&logits})) {
    probs.set_requires_grad(true);
    Tape::active()->record(
        [logits, probs, batch, classes]() {
          const auto& g = probs.grad();
          const auto& pv2 = probs.values();
          auto& lg = logits.grad();
          for (int b = 0; b < batch; ++b) {
            const std::size_t off = static_cast<std::size_t>(b) * classes;
            double dot = 0.0;
            for (int c = 0; c < classes; ++c) dot += g[off + c] * pv2[off + c];
            for (int c = 0; c < classes; ++c) {
              lg[off + c] += pv2[off + c] * (g[off + c] - dot);
            }
          }
        },
        {probs});
  }
  return probs;
}

SoftmaxCrossEntropy softmax_cross_entropy(const Tensor& logits,
                                          const std::vector<int>& labels) {
  if (logits.shape().size() != 2) {
    throw std::invalid_argument("softmax_cross_entropy: logits must be [B,C]");
  }
  const int batch = logits.dim(0), classes = logits.dim(1);
  if (static_cast<int>(labels.size()) != batch) {
    throw std::invalid_argument(
        "softmax_cross_entropy: got " + std::to_string(labels.size()) +
        " labels for batch " + std::to_string(batch));
  }
  for (int b = 0; b < batch; ++b) {
    if (labels[b] < 0 || labels[b] >= classes) {
      throw std::invalid_argument("softmax_cross_entropy: label " +
                                  std::to_string(labels[b]) + " at row " +
                                  std::to_string(b) + " outside [0," +
                                  std::to_string(classes) + ")");
    }
  }

  Tensor probs = Tensor::zeros(logits.shape());
  const auto& lv = logits.values();
  auto& pv = probs.values();
  double nll = 0.0;
  for (int b = 0; b < batch; ++b) {
    const double* row = lv.data() + static_cast<std::size_t>(b) * classes;
    double* out = pv.data() + static_cast<std::size_t>(b) * classes;
    double m = row[0];
    for (int c = 1; c < classes; ++c) m = std::max(m, row[c]);
    double z = 0.0;
    for (int c = 0; c < classes; ++c) z += std::exp(row[c] - m);
    const double log_z = std::log(z);
    for (int c = 0; c < classes; ++c) out[c] = std::exp(row[c] - m - log_z);
    nll += m + log_z - row[labels[b]];
  }
  Tensor loss = Tensor::scalar(nll / batch);

  if (recording({&logits})) {
    loss.set_requires_grad(true);
    probs.set_requires_grad(true);
    std::vector<int> labels_copy = labels;
    Tape::active()->record(
        [logits, loss, probs, labels_copy, batch, classes]() {
          const double gl = loss.grad()[0];
          const auto& gp = probs.grad();
          const auto& pv2 = probs.values();
          auto& lg = logits.grad();
          const double inv_b = 1.0 / batch;
          for (int b = 0; b < batch; ++b) {
            const std::size_t off = static_cast<std::size_t>(b) * classes;
            double dot = 0.0;
            for (int c = 0; c < classes; ++c) dot += gp[off + c] * pv2[off + c];
            for (int c = 0; c < classes; ++c) {
              double g = gl * inv_b *
                         (pv2[off + c] - (c == labels_copy[b] ? 1.0 : 0.0));
              g += pv2[off + c] * (gp[off + c] - dot);
              lg[off + c] += g;
            }
          }
        },
        {loss, probs});
  }
  return {loss, probs};
}

Tensor apply_channel_mask(const Tensor& kernels,
                          const std::vector<double>& mask) {
  if (kernels.shape().size() != 4) {
    throw std::invalid_argument("apply_channel_mask: kernels must be 4-D");
  }
  const int c_out = kernels.dim(0), c_in = kernels.dim(1);
  const int window = kernels.dim(2) * kernels.dim(3);
  if (mask.size() != static_cast<std::size_t>(c_out) * c_in) {
    throw std::invalid_argument(
        "apply_channel_mask: mask size " + std::to_string(mask.size()) +
        " does not match kernels " + shape_to_string(kernels.shape()));
  }
  Tensor y = Tensor::zeros(kernels.shape());
  const auto& kv = kernels.values();
  auto& yv = y.values();
  for (int oc = 0; oc < c_out * c_in; ++oc) {
    const double m = mask[oc];
    const std::size_t off = static_cast<std::size_t>(oc) * window;
    for (int p = 0; p < window; ++p) yv[off + p] = kv[off + p] * m;
  }
  if (recording({&kernels})) {
    y.set_requires_grad(true);
    std::vector<double> mask_copy = mask;
    Tape::active()->record(
        [kernels, y, mask_copy, c_out, c_in, window]() {
          const auto& g = y.grad();
          auto& kg = kernels.grad();
          for (int oc = 0; oc < c_out * c_in; ++oc) {
            const double m = mask_copy[oc];
            const std::size_t off = static_cast<std::size_t>(oc) * window;
            for (int p = 0; p < window; ++p) kg[off + p] += g[off + p] * m;
          }
        },
        {y});
  }
  return y;
}

}  // namespace btcnn
