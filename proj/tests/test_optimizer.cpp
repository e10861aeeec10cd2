#include <cmath>
#include <stdexcept>

#include "btcnn/optimizer.hpp"
#include "btcnn/ops.hpp"
#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"
#include "doctest.h"

using namespace btcnn;

TEST_CASE("sgd step") {
  Tensor w = Tensor::scalar(1.0, true);
  w.grad()[0] = 1.0;
  OptimizerConfig cfg;
  cfg.method = OptimizerConfig::Method::Sgd;
  cfg.learning_rate = 0.1;
  Optimizer opt({w}, cfg);
  opt.step();
  CHECK(w.values()[0] == doctest::Approx(0.9));
  CHECK(w.grad()[0] == 0.0);  // grads zeroed by the step
}

TEST_CASE("zero gradient leaves parameters unchanged") {
  for (auto method : {OptimizerConfig::Method::Sgd,
                      OptimizerConfig::Method::AdaptiveMoments}) {
    Tensor w = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
    w.zero_grad();
    OptimizerConfig cfg;
    cfg.method = method;
    Optimizer opt({w}, cfg);
    opt.step();
    opt.step();
    CHECK(w.values() == std::vector<double>{1.0, -2.0, 0.5});
  }
}

TEST_CASE("missing gradient is a state error") {
  Tensor w = Tensor::scalar(1.0, true);
  Optimizer opt({w}, OptimizerConfig{});
  CHECK_THROWS_AS(opt.step(), std::logic_error);
}

TEST_CASE("adaptive step matches the reference recurrence") {
  Tensor w = Tensor::scalar(1.0, true);
  OptimizerConfig cfg;  // adaptive defaults: lr 1e-3, 0.9/0.999, eps 1e-8
  Optimizer opt({w}, cfg);

  double m = 0.0, v = 0.0, x = 1.0;
  for (int t = 1; t <= 5; ++t) {
    double g = 2.0 * x;  // pretend loss x^2
    w.zero_grad();
    w.grad()[0] = g;
    opt.step();
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mh = m / (1.0 - std::pow(0.9, t));
    double vh = v / (1.0 - std::pow(0.999, t));
    x -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w.values()[0] == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("identical seeds give bit-identical trajectories") {
  auto run = [] {
    Rng rng(42);
    Tensor x = Tensor::zeros({4, 3}, false);
    for (double& vv : x.values()) vv = draw_uniform(rng, -1, 1);
    Tensor w = Tensor::zeros({3, 2}, true);
    for (double& vv : w.values()) vv = draw_uniform(rng, -1, 1);
    Tensor b = Tensor::zeros({2}, true);
    Optimizer opt({w, b}, OptimizerConfig{});
    for (int step = 0; step < 10; ++step) {
      Tape tape;
      TapeScope scope(tape);
      auto out = softmax_cross_entropy(dense(x, w, b), {0, 1, 0, 1});
      tape.backward(out.loss);
      opt.step();
    }
    return w.values();
  };
  CHECK(run() == run());
}
