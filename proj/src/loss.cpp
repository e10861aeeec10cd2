#include "btcnn/loss.hpp"

#include <memory>
#include <stdexcept>

#include "btcnn/model.hpp"
#include "btcnn/ops.hpp"

namespace btcnn {

Tensor consistency_term(const Tensor& probs, const Tensor& inputs,
                        double gamma, double pair_epsilon) {
  if (gamma < 0.0) {
    throw std::invalid_argument("consistency weight must be nonnegative");
  }
  if (probs.shape().size() != 2 || inputs.dim(0) != probs.dim(0)) {
    throw std::invalid_argument(
        "consistency term: probs " + shape_to_string(probs.shape()) +
        " do not match inputs " + shape_to_string(inputs.shape()));
  }
  const int batch = probs.dim(0);
  if (gamma == 0.0 || batch < 2) return Tensor::scalar(0.0);

  const int classes = probs.dim(1);
  const std::size_t image_size = inputs.size() / batch;
  const auto& xv = inputs.values();
  const auto& pv = probs.values();

  // Pair weights depend only on the input images, not on parameters.
  auto weights = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * batch, 0.0);
  for (int i = 0; i < batch; ++i) {
    for (int j = i + 1; j < batch; ++j) {
      double dist_sq = 0.0;
      const double* a = xv.data() + static_cast<std::size_t>(i) * image_size;
      const double* b = xv.data() + static_cast<std::size_t>(j) * image_size;
      for (std::size_t p = 0; p < image_size; ++p) {
        const double d = a[p] - b[p];
        dist_sq += d * d;
      }
      const double w = gamma / (batch * (dist_sq + pair_epsilon));
      (*weights)[static_cast<std::size_t>(i) * batch + j] = w;
      (*weights)[static_cast<std::size_t>(j) * batch + i] = w;
    }
  }

  double total = 0.0;
  for (int i = 0; i < batch; ++i) {
    for (int j = 0; j < batch; ++j) {
      if (i == j) continue;
      const double w = (*weights)[static_cast<std::size_t>(i) * batch + j];
      double diff_sq = 0.0;
      const double* pi = pv.data() + static_cast<std::size_t>(i) * classes;
      const double* pj = pv.data() + static_cast<std::size_t>(j) * classes;
      for (int c = 0; c < classes; ++c) {
        const double d = pi[c] - pj[c];
        diff_sq += d * d;
      }
      total += w * diff_sq;
    }
  }

  Tensor out = Tensor::scalar(total);
  if (Tape::active() && probs.requires_grad()) {
    out.set_requires_grad(true);
    Tape::active()->record(
        [probs, out, weights, batch, classes]() {
          const double g = out.grad()[0];
          const auto& pv2 = probs.values();
          auto& pg = probs.grad();
          for (int i = 0; i < batch; ++i) {
            for (int j = 0; j < batch; ++j) {
              if (i == j) continue;
              const double w =
                  (*weights)[static_cast<std::size_t>(i) * batch + j];
              const std::size_t oi = static_cast<std::size_t>(i) * classes;
              const std::size_t oj = static_cast<std::size_t>(j) * classes;
              for (int c = 0; c < classes; ++c) {
                const double d = pv2[oi + c] - pv2[oj + c];
                pg[oi + c] += g * 2.0 * w * d;
                pg[oj + c] -= g * 2.0 * w * d;
              }
            }
          }
        },
        {out});
  }
  return out;
}

Tensor minibatch_loss(Model& model, const Batch& batch, const LossConfig& cfg,
                      Rng& rng) {
  if (!batch.inputs.defined() || batch.inputs.dim(0) < 1 ||
      batch.labels.empty()) {
    throw std::invalid_argument("minibatch loss needs a nonempty batch");
  }
  if (static_cast<int>(batch.labels.size()) != batch.inputs.dim(0)) {
    throw std::invalid_argument("batch labels do not match batch inputs");
  }
  if (cfg.mc_samples < 1) {
    throw std::invalid_argument("need at least one parameter draw");
  }

  // The trunk is deterministic, so the draws share one trunk subgraph;
  // gradients accumulate through it once with the summed upstream.
  Tensor features = model.forward_trunk(batch.inputs);
  const bool has_posterior = !model.bayesian_layers().empty();

  Tensor total;
  for (int t = 0; t < cfg.mc_samples; ++t) {
    Tensor logits = model.forward_head(features, rng);
    auto out = softmax_cross_entropy(logits, batch.labels);
    Tensor term;
    if (has_posterior) {
      Tensor kl = log_q_minus_log_p(model.bayesian_layers());
      term = add(mul_scalar(kl, cfg.kl_scale), out.loss);
    } else {
      term = out.loss;
    }
    if (cfg.gamma != 0.0) {
      term = add(term, consistency_term(out.probs, batch.inputs, cfg.gamma,
                                        cfg.pair_epsilon));
    }
    total = t == 0 ? term : add(total, term);
  }
  return mul_scalar(total, 1.0 / cfg.mc_samples);
}

}  // namespace btcnn
