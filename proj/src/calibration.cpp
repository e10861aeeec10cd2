#include "btcnn/calibration.hpp"

#include <cmath>
#include <stdexcept>

namespace btcnn {

namespace {

void check_prediction_matrix(const Tensor& probs,
                             const std::vector<int>& labels) {
  if (probs.shape().size() != 2) {
    throw std::invalid_argument("predictions must be [N,C], got " +
                                shape_to_string(probs.shape()));
  }
  const int n = probs.dim(0);
  const int classes = probs.dim(1);
  if (n < 1) throw std::invalid_argument("need at least one prediction");
  if (static_cast<int>(labels.size()) != n) {
    throw std::invalid_argument("got " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) +
                                " predictions");
  }
  const auto& pv = probs.values();
  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int c = 0; c < classes; ++c) {
      row_sum += pv[static_cast<std::size_t>(i) * classes + c];
    }
    if (std::fabs(row_sum - 1.0) > 1e-6) {
      throw std::invalid_argument("prediction row " + std::to_string(i) +
                                  " is not normalized (sum " +
                                  std::to_string(row_sum) + ")");
    }
  }
}

int argmax_row(const double* row, int classes) {
  int best = 0;
  for (int c = 1; c < classes; ++c) {
    if (row[c] > row[best]) best = c;  // ties keep the smallest index
  }
  return best;
}

// First m with conf <= m/M; the bins ((m-1)/M, m/M] partition (0, 1].
int bin_of(double confidence, int num_bins) {
  for (int m = 1; m < num_bins; ++m) {
    if (confidence <= static_cast<double>(m) / num_bins) return m;
  }
  return num_bins;
}

}  // namespace

CalibrationReport compute_calibration(const Tensor& probs,
                                      const std::vector<int>& labels,
                                      int num_bins) {
  if (num_bins < 1) throw std::invalid_argument("need at least one bin");
  check_prediction_matrix(probs, labels);

  const int n = probs.dim(0);
  const int classes = probs.dim(1);
  const auto& pv = probs.values();

  CalibrationReport report;
  report.num_bins = num_bins;
  report.num_predictions = n;
  report.bins.assign(static_cast<std::size_t>(num_bins), CalibrationBin{});

  std::vector<int> correct(static_cast<std::size_t>(num_bins), 0);
  std::vector<double> conf_sum(static_cast<std::size_t>(num_bins), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = pv.data() + static_cast<std::size_t>(i) * classes;
    const int predicted = argmax_row(row, classes);
    const double confidence = row[predicted];
    const int m = bin_of(confidence, num_bins) - 1;
    report.bins[m].count += 1;
    correct[m] += predicted == labels[i];
    conf_sum[m] += confidence;
  }

  for (int m = 0; m < num_bins; ++m) {
    CalibrationBin& bin = report.bins[m];
    if (bin.count == 0) continue;  // contributes 0 to ECE, skipped for MCE
    bin.accuracy = static_cast<double>(correct[m]) / bin.count;
    bin.confidence = conf_sum[m] / bin.count;
    const double gap = std::fabs(bin.accuracy - bin.confidence);
    report.ece += (static_cast<double>(bin.count) / n) * gap;
    report.mce = std::max(report.mce, gap);
  }
  return report;
}

double accuracy(const Tensor& probs, const std::vector<int>& labels) {
  check_prediction_matrix(probs, labels);
  const int n = probs.dim(0);
  const int classes = probs.dim(1);
  const auto& pv = probs.values();
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = pv.data() + static_cast<std::size_t>(i) * classes;
    correct += argmax_row(row, classes) == labels[i];
  }
  return static_cast<double>(correct) / n;
}

}  // namespace btcnn
