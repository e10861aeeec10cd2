#include "btcnn/model.hpp"

#include <stdexcept>

#include "btcnn/ops.hpp"
#include "btcnn/uncertainty.hpp"

namespace btcnn {

std::string variant_name(ModelVariant variant) {
  switch (variant) {
    case ModelVariant::Cnn: return "cnn";
    case ModelVariant::Tcnn: return "tcnn";
    case ModelVariant::Bnn: return "bnn";
    case ModelVariant::Btcnn: return "btcnn";
    case ModelVariant::BtcnnCc: return "btcnn-cc";
  }
  throw std::invalid_argument("unknown model variant");
}

ModelVariant variant_from_name(const std::string& name) {
  if (name == "cnn") return ModelVariant::Cnn;
  if (name == "tcnn") return ModelVariant::Tcnn;
  if (name == "bnn") return ModelVariant::Bnn;
  if (name == "btcnn") return ModelVariant::Btcnn;
  if (name == "btcnn-cc") return ModelVariant::BtcnnCc;
  throw std::invalid_argument(
      "unknown model variant '" + name +
      "' (expected cnn, tcnn, bnn, btcnn or btcnn-cc)");
}

ModelSpec ModelSpec::preset(ModelVariant variant) {
  ModelSpec spec;
  spec.variant = variant;
  if (variant == ModelVariant::BtcnnCc) spec.gamma = 1.0;
  return spec;
}

void ModelSpec::validate() const {
  if (conv1_channels < 1 || conv2_channels < 1 || hidden_units < 1 ||
      num_classes < 2) {
    throw std::invalid_argument("model spec has non-positive layer sizes");
  }
  if (kernel_size < 3 || kernel_size % 2 == 0) {
    throw std::invalid_argument("kernel size must be odd and >= 3");
  }
  if (pool_window < 1 || padding < 0) {
    throw std::invalid_argument("invalid pooling window or padding");
  }
  const int after1 = input_height + 2 * padding - kernel_size + 1;
  if (after1 < 1 || input_height % pool_window != 0 ||
      input_width % pool_window != 0) {
    throw std::invalid_argument("input size incompatible with the pipeline");
  }
  if (topological() && col_threshold <= 0.0) {
    throw std::invalid_argument("circle-one threshold must be positive");
  }
  if (gamma < 0.0) {
    throw std::invalid_argument("consistency weight must be nonnegative");
  }
  const bool wants_cc = variant == ModelVariant::BtcnnCc;
  if (wants_cc != (gamma > 0.0)) {
    throw std::invalid_argument(
        "inconsistent spec: the consistency-condition variant is exactly the "
        "one with gamma > 0 (variant " +
        variant_name(variant) + ", gamma " + std::to_string(gamma) + ")");
  }
}

Model Model::build(const ModelSpec& spec, Rng& init_rng) {
  spec.validate();
  Model m;
  m.spec_ = spec;

  const int k = spec.kernel_size;

  // Conv block 1: fixed circle filters or a trainable convolution.
  if (spec.topological()) {
    m.circle_bank_ = make_circle_filters(spec.conv1_channels, k);
  } else {
    m.conv1_w_ = Tensor::zeros({spec.conv1_channels, 1, k, k}, true);
    fill_fan_in_uniform(m.conv1_w_, k * k, init_rng);
    m.conv1_b_ = Tensor::zeros({spec.conv1_channels}, true);
  }

  // Conv block 2: optionally pruned along the circle.
  m.conv2_w_ = Tensor::zeros({spec.conv2_channels, spec.conv1_channels, k, k},
                             true);
  fill_fan_in_uniform(m.conv2_w_, spec.conv1_channels * k * k, init_rng);
  m.conv2_b_ = Tensor::zeros({spec.conv2_channels}, true);
  if (spec.topological()) {
    // In-points reuse the circle-filter angles of the previous layer.
    std::vector<double> out_points(spec.conv2_channels);
    for (int j = 0; j < spec.conv2_channels; ++j) {
      out_points[j] = 2.0 * std::numbers::pi * j / spec.conv2_channels;
    }
    m.col_mask_ = make_col_mask(std::move(out_points), m.circle_bank_->angles,
                                spec.col_threshold);
    // Pruned connections start at exactly zero and stay there: their
    // gradient is identically zero, so no update ever moves them.
    const auto& mask = m.col_mask_->mask;
    auto& wv = m.conv2_w_.values();
    for (int oc = 0; oc < spec.conv2_channels * spec.conv1_channels; ++oc) {
      if (mask[oc] == 0.0) {
        for (int p = 0; p < k * k; ++p) {
          wv[static_cast<std::size_t>(oc) * k * k + p] = 0.0;
        }
      }
    }
  }

  const int pooled_h = spec.input_height / (spec.pool_window * spec.pool_window);
  const int pooled_w = spec.input_width / (spec.pool_window * spec.pool_window);
  m.flat_features_ = spec.conv2_channels * pooled_h * pooled_w;

  if (spec.bayesian()) {
    m.bayes1_ = std::make_unique<BayesianDense>(
        m.flat_features_, spec.hidden_units, init_rng, spec.rho_init);
    m.bayes2_ = std::make_unique<BayesianDense>(
        spec.hidden_units, spec.num_classes, init_rng, spec.rho_init);
  } else {
    m.dense1_w_ = Tensor::zeros({m.flat_features_, spec.hidden_units}, true);
    fill_fan_in_uniform(m.dense1_w_, m.flat_features_, init_rng);
    m.dense1_b_ = Tensor::zeros({spec.hidden_units}, true);
    m.dense2_w_ = Tensor::zeros({spec.hidden_units, spec.num_classes}, true);
    fill_fan_in_uniform(m.dense2_w_, spec.hidden_units, init_rng);
    m.dense2_b_ = Tensor::zeros({spec.num_classes}, true);
  }
  return m;
}

Tensor Model::forward_trunk(const Tensor& input) {
  if (input.shape().size() != 4 || input.dim(1) != 1 ||
      input.dim(2) != spec_.input_height || input.dim(3) != spec_.input_width) {
    throw std::invalid_argument("model expects input [B,1," +
                                std::to_string(spec_.input_height) + "," +
                                std::to_string(spec_.input_width) + "], got " +
                                shape_to_string(input.shape()));
  }
  Tensor h;
  if (circle_bank_) {
    h = circle_filter_forward(*circle_bank_, input, spec_.padding, 1);
  } else {
    h = conv2d(input, conv1_w_, conv1_b_, spec_.padding, 1);
  }
  h = relu(maxpool2d(h, spec_.pool_window));
  if (col_mask_) {
    h = col_forward(*col_mask_, conv2_w_, conv2_b_, h, spec_.padding, 1);
  } else {
    h = conv2d(h, conv2_w_, conv2_b_, spec_.padding, 1);
  }
  h = relu(maxpool2d(h, spec_.pool_window));
  return reshape(h, {input.dim(0), flat_features_});
}

Tensor Model::forward_head(const Tensor& features, Rng& rng) {
  Tensor h;
  if (bayes1_) {
    h = relu(bayes1_->forward(features, rng));
    return bayes2_->forward(h, rng);
  }
  h = relu(dense(features, dense1_w_, dense1_b_));
  return dense(h, dense2_w_, dense2_b_);
}

Tensor Model::forward(const Tensor& input, Rng& rng) {
  return forward_head(forward_trunk(input), rng);
}

std::vector<Tensor> Model::trainable_parameters() {
  std::vector<Tensor> params;
  if (conv1_w_.defined()) {
    params.push_back(conv1_w_);
    params.push_back(conv1_b_);
  }
  params.push_back(conv2_w_);
  params.push_back(conv2_b_);
  if (bayes1_) {
    for (auto& layer : {bayes1_.get(), bayes2_.get()}) {
      for (Tensor& t : layer->parameters()) params.push_back(t);
    }
  } else {
    params.push_back(dense1_w_);
    params.push_back(dense1_b_);
    params.push_back(dense2_w_);
    params.push_back(dense2_b_);
  }
  return params;
}

std::vector<BayesianDense*> Model::bayesian_layers() {
  if (!bayes1_) return {};
  return {bayes1_.get(), bayes2_.get()};
}

std::size_t Model::trainable_parameter_count() {
  std::size_t n = 0;
  for (const Tensor& t : trainable_parameters()) n += t.size();
  return n;
}

std::size_t Model::dense_parameter_count() {
  if (bayes1_) return bayes1_->parameter_count() + bayes2_->parameter_count();
  return dense1_w_.size() + dense1_b_.size() + dense2_w_.size() +
         dense2_b_.size();
}

Model build_model(const ModelSpec& spec, std::uint64_t seed) {
  Rng init_rng(mix_seed(seed, 0xA11CE));
  return Model::build(spec, init_rng);
}

PredictionEnsemble predict_ensemble(Model& model, const Tensor& inputs,
                                    int samples, Rng& rng) {
  if (samples < 1) {
    throw std::invalid_argument("ensemble needs at least one sample");
  }
  const int n = inputs.dim(0);
  const int flat = model.flat_features();

  // The trunk is deterministic in every variant, so it is computed once
  // (in memory-friendly chunks) and shared across the posterior draws.
  Tensor features = Tensor::zeros({n, flat});
  const int chunk = 256;
  const std::size_t image_size = inputs.size() / static_cast<std::size_t>(n);
  for (int start = 0; start < n; start += chunk) {
    const int count = std::min(chunk, n - start);
    Tensor slice = Tensor::zeros({count, inputs.dim(1), inputs.dim(2),
                                  inputs.dim(3)});
    std::copy_n(inputs.values().begin() + start * image_size,
                count * image_size, slice.values().begin());
    Tensor part = model.forward_trunk(slice);
    std::copy_n(part.values().begin(),
                static_cast<std::size_t>(count) * flat,
                features.values().begin() + static_cast<std::size_t>(start) * flat);
  }

  PredictionEnsemble ensemble;
  if (!model.stochastic()) {
    // One pass; all members are the same distribution, so the mean is the
    // member itself (exactly).
    Tensor probs = softmax(model.forward_head(features, rng));
    ensemble.member_probs.assign(static_cast<std::size_t>(samples), probs);
    ensemble.mean_probs = probs;
    return ensemble;
  }

  ensemble.member_probs.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    // One parameter draw per member, applied to the whole input set.
    ensemble.member_probs.push_back(
        softmax(model.forward_head(features, rng)));
  }
  ensemble.mean_probs = Tensor::zeros({n, model.spec().num_classes});
  auto& mean = ensemble.mean_probs.values();
  for (const Tensor& member : ensemble.member_probs) {
    const auto& v = member.values();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += v[i];
  }
  const double inv = 1.0 / samples;
  for (double& v : mean) v *= inv;
  return ensemble;
}

}  // namespace btcnn
