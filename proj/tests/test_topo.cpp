#include <cmath>
#include <numbers>
#include <stdexcept>

#include "btcnn/circle.hpp"
#include "btcnn/optimizer.hpp"
#include "btcnn/ops.hpp"
#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace btcnn;

namespace {
constexpr double kPi = std::numbers::pi;

double frobenius_inner(const Tensor& w, int j0, int j1, int k) {
  const auto& v = w.values();
  const std::size_t n = static_cast<std::size_t>(k) * k;
  double acc = 0.0;
  for (std::size_t p = 0; p < n; ++p) acc += v[j0 * n + p] * v[j1 * n + p];
  return acc;
}
}  // namespace

TEST_CASE("circle filter bank construction") {
  CircleFilterBank bank = make_circle_filters(36, 3);
  CHECK(bank.weights.shape() == std::vector<int>{36, 1, 3, 3});
  CHECK(bank.angles.size() == 36);
  CHECK_FALSE(bank.weights.requires_grad());

  SUBCASE("angle zero gives a pure horizontal gradient") {
    // cos(0)*t + sin(0)*u = t, so each row is [-1,0,1] before scaling.
    const double s = 1.0 / std::sqrt(6.0);
    for (int r = 0; r < 3; ++r) {
      CHECK(bank.weights.values()[r * 3 + 0] == doctest::Approx(-s));
      CHECK(bank.weights.values()[r * 3 + 1] == doctest::Approx(0.0));
      CHECK(bank.weights.values()[r * 3 + 2] == doctest::Approx(s));
    }
  }
  SUBCASE("quarter-turn filter is orthogonal to the zero-angle filter") {
    REQUIRE(bank.angles[9] == doctest::Approx(kPi / 2));
    CHECK(frobenius_inner(bank.weights, 0, 9, 3) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("every filter has zero mean and unit norm") {
    for (int k : {3, 5, 7}) {
      for (int filters : {1, 4, 36}) {
        CircleFilterBank b = make_circle_filters(filters, k);
        const std::size_t n = static_cast<std::size_t>(k) * k;
        for (int j = 0; j < filters; ++j) {
          double mean = 0.0, norm_sq = 0.0;
          for (std::size_t p = 0; p < n; ++p) {
            double v = b.weights.values()[j * n + p];
            mean += v;
            norm_sq += v * v;
          }
          CHECK(std::fabs(mean / n) < 1e-12);
          CHECK(std::fabs(std::sqrt(norm_sq) - 1.0) < 1e-12);
        }
      }
    }
  }
  SUBCASE("invalid sizes rejected") {
    CHECK_THROWS_AS(make_circle_filters(0, 3), std::invalid_argument);
    CHECK_THROWS_AS(make_circle_filters(8, 4), std::invalid_argument);
    CHECK_THROWS_AS(make_circle_filters(8, 1), std::invalid_argument);
  }
}

TEST_CASE("circle filter forward") {
  CircleFilterBank bank = make_circle_filters(36, 3);

  SUBCASE("constant image gives zero response") {
    // No padding: every window sees a constant patch, which the zero-mean
    // filters cancel exactly.
    Tensor img = Tensor::full({1, 1, 8, 8}, 0.37);
    Tensor out = circle_filter_forward(bank, img, 0, 1);
    for (double v : out.values()) CHECK(std::fabs(v) < 1e-12);
  }
  SUBCASE("horizontal ramp responds most to the zero-angle filter") {
    Tensor img = Tensor::zeros({1, 1, 8, 8});
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) img.values()[r * 8 + c] = c / 7.0;
    }
    Tensor out = circle_filter_forward(bank, img, 0, 1);  // interior only
    const int plane = out.dim(2) * out.dim(3);
    int best = -1;
    double best_mean = -1e300;
    for (int j = 0; j < 36; ++j) {
      double m = 0.0;
      for (int p = 0; p < plane; ++p) m += out.values()[j * plane + p];
      if (m > best_mean) {
        best_mean = m;
        best = j;
      }
    }
    CHECK(best == 0);
  }
  SUBCASE("multi-channel input rejected") {
    Tensor img = Tensor::zeros({1, 2, 8, 8});
    CHECK_THROWS_AS(circle_filter_forward(bank, img), std::invalid_argument);
  }
  SUBCASE("no gradient reaches the bank and training leaves it untouched") {
    const std::vector<double> before = bank.weights.values();
    Tensor img = Tensor::full({2, 1, 6, 6}, 0.5);
    Tensor w = Tensor::zeros({36 * 36, 4}, true);
    Tensor b = Tensor::zeros({4}, true);
    Rng rng(5);
    fill_fan_in_uniform(w, 36 * 36, rng);
    Optimizer opt({w, b}, OptimizerConfig{});
    for (int step = 0; step < 5; ++step) {
      Tape tape;
      TapeScope scope(tape);
      Tensor h = circle_filter_forward(bank, img, 1, 1);
      h = reshape(relu(h), {2, 36 * 36});
      auto out = softmax_cross_entropy(dense(h, w, b), {0, 1});
      tape.backward(out.loss);
      opt.step();
    }
    CHECK_FALSE(bank.weights.has_grad());
    CHECK(bank.weights.values() == before);  // bitwise identical
  }
}

TEST_CASE("circle-one mask construction") {
  SUBCASE("threshold of pi or more keeps everything") {
    CircleOneMask m = make_col_mask(8, 6, kPi);
    CHECK(m.kept_connections() == 48);
  }
  SUBCASE("tiny threshold keeps only exact matches") {
    CircleOneMask m = make_col_mask(6, 6, 1e-9);
    CHECK(m.kept_connections() == 6);
    for (int j = 0; j < 6; ++j) {
      for (int i = 0; i < 6; ++i) {
        CHECK(m.mask[j * 6 + i] == (i == j ? 1.0 : 0.0));
      }
    }
  }
  SUBCASE("four points at right angles keep self and both neighbours") {
    CircleOneMask m = make_col_mask(4, 4, kPi / 2);
    for (int j = 0; j < 4; ++j) {
      int kept = 0;
      for (int i = 0; i < 4; ++i) kept += m.mask[j * 4 + i] != 0.0;
      CHECK(kept == 3);  // boundary distance pi/2 is kept
      CHECK(m.mask[j * 4 + ((j + 2) % 4)] == 0.0);  // opposite point pruned
    }
  }
  SUBCASE("identical point sets give a symmetric circulant mask") {
    CircleOneMask m = make_col_mask(10, 10, 2.0);
    for (int j = 0; j < 10; ++j) {
      for (int i = 0; i < 10; ++i) {
        CHECK(m.mask[j * 10 + i] == m.mask[i * 10 + j]);
        CHECK(m.mask[j * 10 + i] ==
              m.mask[((j + 1) % 10) * 10 + ((i + 1) % 10)]);
      }
    }
  }
  SUBCASE("non-positive threshold rejected") {
    CHECK_THROWS_AS(make_col_mask(4, 4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(make_col_mask(4, 4, -1.0), std::invalid_argument);
  }
}

TEST_CASE("circle-one forward") {
  Rng rng(21);
  Tensor input = testutil::random_tensor({2, 4, 6, 6}, rng, 0.0, 1.0, false);
  Tensor weights = testutil::random_tensor({4, 4, 3, 3}, rng, -0.5, 0.5);
  Tensor bias = testutil::random_tensor({4}, rng, -0.2, 0.2);

  SUBCASE("all-ones mask matches a plain convolution") {
    CircleOneMask m = make_col_mask(4, 4, kPi);
    Tensor a = col_forward(m, weights, bias, input, 1, 1);
    Tensor b = conv2d(input, weights, bias, 1, 1);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a.values()[i] == b.values()[i]);
    }
  }
  SUBCASE("all-zero mask leaves only the bias") {
    CircleOneMask m = make_col_mask(4, 4, kPi);
    for (double& v : m.mask) v = 0.0;
    Tensor out = col_forward(m, weights, bias, input, 1, 1);
    const int plane = out.dim(2) * out.dim(3);
    for (int b = 0; b < 2; ++b) {
      for (int c = 0; c < 4; ++c) {
        for (int p = 0; p < plane; ++p) {
          CHECK(out.values()[(b * 4 + c) * plane + p] == bias.values()[c]);
        }
      }
    }
  }
  SUBCASE("pruned weights stay exactly zero through optimizer steps") {
    CircleOneMask m = make_col_mask(4, 4, kPi / 2);
    // Start pruned entries at zero, as the model builder does.
    for (int oc = 0; oc < 16; ++oc) {
      if (m.mask[oc] == 0.0) {
        for (int p = 0; p < 9; ++p) weights.values()[oc * 9 + p] = 0.0;
      }
    }
    Optimizer opt({weights, bias}, OptimizerConfig{});
    for (int step = 0; step < 7; ++step) {
      Tape tape;
      TapeScope scope(tape);
      Tensor out = col_forward(m, weights, bias, input, 1, 1);
      Tensor flat = reshape(out, {2, 4 * 36});
      tape.backward(mean(square(flat)));
      // Pruned entries receive exactly zero gradient.
      for (int oc = 0; oc < 16; ++oc) {
        if (m.mask[oc] == 0.0) {
          for (int p = 0; p < 9; ++p) CHECK(weights.grad()[oc * 9 + p] == 0.0);
        }
      }
      opt.step();
      for (int oc = 0; oc < 16; ++oc) {
        if (m.mask[oc] == 0.0) {
          for (int p = 0; p < 9; ++p) CHECK(weights.values()[oc * 9 + p] == 0.0);
        }
      }
    }
  }
  SUBCASE("mismatched weight shape rejected") {
    CircleOneMask m = make_col_mask(5, 4, 1.0);
    CHECK_THROWS_AS(col_forward(m, weights, bias, input, 1, 1),
                    std::invalid_argument);
  }
}
