#include "btcnn/uncertainty.hpp"

#include <cmath>
#include <stdexcept>

namespace btcnn {

PredictionEnsemble make_ensemble(std::vector<Tensor> members) {
  if (members.empty()) {
    throw std::invalid_argument("ensemble needs at least one member");
  }
  const auto& shape = members[0].shape();
  if (shape.size() != 2) {
    throw std::invalid_argument("ensemble members must be [N,C], got " +
                                shape_to_string(shape));
  }
  for (const Tensor& m : members) {
    if (m.shape() != shape) {
      throw std::invalid_argument("ensemble member shapes differ: " +
                                  shape_to_string(shape) + " vs " +
                                  shape_to_string(m.shape()));
    }
  }
  const int n = shape[0], classes = shape[1];
  for (const Tensor& m : members) {
    const auto& v = m.values();
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int c = 0; c < classes; ++c) {
        s += v[static_cast<std::size_t>(i) * classes + c];
      }
      if (std::fabs(s - 1.0) > 1e-6) {
        throw std::invalid_argument("ensemble member row " + std::to_string(i) +
                                    " is not normalized");
      }
    }
  }

  PredictionEnsemble ens;
  ens.mean_probs = Tensor::zeros(shape);
  auto& mv = ens.mean_probs.values();
  for (const Tensor& m : members) {
    const auto& v = m.values();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i] += v[i];
  }
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& v : mv) v *= inv;
  ens.member_probs = std::move(members);
  return ens;
}

double entropy_bits(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v < 0.0) {
      throw std::invalid_argument("entropy of a vector with negative entry " +
                                  std::to_string(v));
    }
    if (v > 0.0) h -= v * std::log2(v);
  }
  return h;
}

UncertaintyReport decompose_uncertainty(const PredictionEnsemble& ensemble) {
  const int n = ensemble.num_inputs();
  const int classes = ensemble.num_classes();
  const int members = ensemble.num_members();

  UncertaintyReport report;
  report.total.resize(n);
  report.aleatoric.resize(n);
  report.epistemic.resize(n);

  const auto& mean = ensemble.mean_probs.values();
  for (int i = 0; i < n; ++i) {
    report.total[i] = entropy_bits(
        {mean.data() + static_cast<std::size_t>(i) * classes,
         static_cast<std::size_t>(classes)});
    double expected_entropy = 0.0;
    for (int s = 0; s < members; ++s) {
      const auto& v = ensemble.member_probs[s].values();
      expected_entropy += entropy_bits(
          {v.data() + static_cast<std::size_t>(i) * classes,
           static_cast<std::size_t>(classes)});
    }
    report.aleatoric[i] = expected_entropy / members;
    report.epistemic[i] = report.total[i] - report.aleatoric[i];
  }
  return report;
}

}  // namespace btcnn
