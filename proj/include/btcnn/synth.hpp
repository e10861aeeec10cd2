#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "btcnn/dataset.hpp"

namespace btcnn {

/// Procedurally rendered 16x16 greyscale digits in the same format and
/// value range as the USPS scans: stroke-based glyphs with random rotation,
/// shear, scale, translation, stroke width, intensity and pixel noise.
/// Class proportions follow the canonical USPS splits. Deterministic per
/// seed. Intended as a drop-in corpus when the real scans are not on disk.
struct SynthConfig {
  int train_count = 7291;
  int test_count = 2007;
  std::uint64_t seed = 7;
};

Dataset make_synthetic_split(int count, std::string split, std::uint64_t seed);
std::pair<Dataset, Dataset> make_synthetic_digits(const SynthConfig& config);

/// Writes a dataset in the USPS text format (label + 256 values in [-1,1]).
void write_usps_text(const Dataset& dataset, const std::string& path);

}  // namespace btcnn
