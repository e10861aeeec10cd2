#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "btcnn/tensor.hpp"

namespace btcnn {

/// Greyscale image classification set; pixels live in [0,1].
struct Dataset {
  Tensor images;  // [N,1,H,W]
  std::vector<int> labels;
  std::string split;  // "train" or "test"

  int size() const { return images.defined() ? images.dim(0) : 0; }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }

  /// Copy of image i as [1,H,W].
  Tensor image(int index) const;
};

/// Reads the classic USPS text format: one sample per line, a label
/// followed by 256 pixel values in [-1,1] (16x16 row-major). Plain or
/// gzip-compressed files are both accepted. Pixels are remapped to [0,1]
/// via (v+1)/2. Non-canonical sample counts load with a warning on stderr.
Dataset load_usps_file(const std::string& path, std::string split);
std::pair<Dataset, Dataset> load_usps(const std::string& train_path,
                                      const std::string& test_path);

/// Uniform subset without replacement of round(fraction * N) samples,
/// deterministic per seed; fraction must be in (0,1].
Dataset starve(const Dataset& train, double fraction, std::uint64_t seed);

/// size x size kernel with k(i,j) proportional to exp(-(i^2+j^2)/(2 sigma^2))
/// on a centered grid, normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma, int size);

/// Per-class blur severity: class c draws its kernel sigma uniformly from
/// [sigma_lo[c], sigma_hi[c]]; both bounds increase strictly with c.
struct BlurPolicy {
  std::vector<double> sigma_lo;
  std::vector<double> sigma_hi;
  int kernel_size = 5;

  static BlurPolicy defaults(int num_classes = 10);
  void validate() const;
};

/// Blurs every image with a per-class sigma draw (reflect padding), then
/// clamps to [0,1]. Sub-seeds are derived per image index, so the result
/// is independent of processing order.
Dataset apply_class_blur(const Dataset& dataset, const BlurPolicy& policy,
                         std::uint64_t seed);

/// Pixel-wise convex combination sweep between two images of distinct
/// classes. Alphas are sorted in [0,1] and include both endpoints.
struct ProbeConfig {
  int class_a = 0;
  int class_b = 0;
  std::vector<double> alphas;

  static std::vector<double> default_alphas(int count = 10);
  void validate() const;
};

/// x_alpha = (1 - alpha) * a + alpha * b for each alpha in the config.
std::vector<Tensor> convex_probe(const Tensor& a_img, const Tensor& b_img,
                                 const ProbeConfig& config);

/// Binary cache: magic + format-version byte + shape header + 64-bit
/// little-endian pixels + 32-bit labels.
void save_dataset_cache(const Dataset& dataset, const std::string& path);
Dataset load_dataset_cache(const std::string& path);

}  // namespace btcnn
