#pragma once

#include <vector>

#include "btcnn/tensor.hpp"

namespace btcnn {

struct CalibrationBin {
  int count = 0;
  double accuracy = 0.0;    // fraction correct, 0 for empty bins
  double confidence = 0.0;  // mean max-probability, 0 for empty bins
};

/// Binned agreement between confidence and accuracy. Bin m covers
/// confidences in ((m-1)/M, m/M]; ECE weights per-bin gaps by occupancy,
/// MCE takes the worst gap over nonempty bins. 0 <= ECE <= MCE <= 1.
struct CalibrationReport {
  int num_bins = 0;
  int num_predictions = 0;
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  double mce = 0.0;
};

/// probs: [N,C] rows summing to 1 within 1e-6; labels: N true classes.
CalibrationReport compute_calibration(const Tensor& probs,
                                      const std::vector<int>& labels,
                                      int num_bins);

/// Fraction of rows whose argmax (ties to the smallest class index)
/// equals the label.
double accuracy(const Tensor& probs, const std::vector<int>& labels);

}  // namespace btcnn
