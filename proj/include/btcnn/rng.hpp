#pragma once

#include <cstdint>
#include <random>

#include "btcnn/tensor.hpp"

namespace btcnn {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; decorrelates nearby integers.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a stream label.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline double draw_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline double draw_uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Fills a weight tensor with U[-1/sqrt(fan_in), 1/sqrt(fan_in)] entries.
void fill_fan_in_uniform(const Tensor& weights, int fan_in, Rng& rng);

/// Fills a tensor with independent standard normal draws.
void fill_standard_normal(const Tensor& t, Rng& rng);

}  // namespace btcnn
