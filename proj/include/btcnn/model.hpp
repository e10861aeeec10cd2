#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "btcnn/circle.hpp"
#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"
#include "btcnn/variational.hpp"

namespace btcnn {

enum class ModelVariant { Cnn, Tcnn, Bnn, Btcnn, BtcnnCc };

std::string variant_name(ModelVariant variant);
ModelVariant variant_from_name(const std::string& name);

/// Declarative description of one architecture: which of the two
/// convolutions are topological, whether the dense layers are Bayesian,
/// and the consistency weight. All five variants share the same pipeline:
///   conv(3x3, pad 1) - pool - relu - conv(3x3, pad 1) - pool - relu -
///   dense(hidden) - relu - dense(classes) - softmax.
struct ModelSpec {
  ModelVariant variant = ModelVariant::Cnn;
  int conv1_channels = 36;
  int conv2_channels = 64;
  int hidden_units = 128;
  int num_classes = 10;
  int input_height = 16;
  int input_width = 16;
  int kernel_size = 3;
  int padding = 1;
  int pool_window = 2;
  double col_threshold = 2.0943951023931953;  // 2*pi/3
  double gamma = 0.0;                         // consistency weight
  double rho_init = -3.0;

  static ModelSpec preset(ModelVariant variant);

  bool topological() const {
    return variant == ModelVariant::Tcnn || variant == ModelVariant::Btcnn ||
           variant == ModelVariant::BtcnnCc;
  }
  bool bayesian() const {
    return variant == ModelVariant::Bnn || variant == ModelVariant::Btcnn ||
           variant == ModelVariant::BtcnnCc;
  }

  /// Checks internal consistency (e.g. the consistency-condition variant is
  /// exactly the one with gamma > 0).
  void validate() const;
};

/// One assembled network. Forward passes are split into the deterministic
/// convolutional trunk and the (possibly stochastic) dense head so that
/// ensemble prediction can reuse the trunk across posterior draws; the
/// composition is bit-identical to a monolithic pass.
class Model {
 public:
  static Model build(const ModelSpec& spec, Rng& init_rng);

  Tensor forward(const Tensor& input, Rng& rng);
  Tensor forward_trunk(const Tensor& input);
  Tensor forward_head(const Tensor& features, Rng& rng);

  std::vector<Tensor> trainable_parameters();
  std::vector<BayesianDense*> bayesian_layers();
  bool stochastic() const { return spec_.bayesian(); }
  const ModelSpec& spec() const { return spec_; }
  int flat_features() const { return flat_features_; }

  std::size_t trainable_parameter_count();
  std::size_t dense_parameter_count();

  // Exposed for the fixed-weight and pruning contracts.
  const CircleFilterBank* circle_bank() const {
    return circle_bank_ ? &*circle_bank_ : nullptr;
  }
  const CircleOneMask* col_mask() const {
    return col_mask_ ? &*col_mask_ : nullptr;
  }
  const Tensor& conv2_weights() const { return conv2_w_; }

 private:
  ModelSpec spec_;
  int flat_features_ = 0;

  std::optional<CircleFilterBank> circle_bank_;
  Tensor conv1_w_, conv1_b_;

  std::optional<CircleOneMask> col_mask_;
  Tensor conv2_w_, conv2_b_;

  Tensor dense1_w_, dense1_b_;
  Tensor dense2_w_, dense2_b_;
  std::unique_ptr<BayesianDense> bayes1_, bayes2_;
};

/// Builds a model with the initialization stream derived from the seed.
Model build_model(const ModelSpec& spec, std::uint64_t seed);

}  // namespace btcnn
