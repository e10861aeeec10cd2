#include <vector>

#include "btcnn/ops.hpp"
#include "btcnn/tensor.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace btcnn;

// Every differentiable op is checked against central finite differences
// (h = 1e-5) on randomized small inputs; required agreement is 1e-4.

TEST_CASE("gradients: elementwise and reductions") {
  Rng rng(101);
  Tensor a = testutil::random_tensor({3, 4}, rng, -2.0, 2.0);
  Tensor b = testutil::random_tensor({3, 4}, rng, 0.5, 2.0);

  auto check = [&](const std::function<Tensor()>& f) {
    auto r = testutil::grad_check({a, b}, f);
    CHECK(r.max_rel_error < 1e-4);
  };

  check([&] { return sum(add(a, b)); });
  check([&] { return sum(sub(a, b)); });
  check([&] { return mean(mul(a, b)); });
  check([&] { return sum(div(a, b)); });
  check([&] { return sum(square(a)); });
  check([&] { return sum(log(b)); });
  check([&] { return sum(btcnn::exp(mul_scalar(a, 0.5))); });
  check([&] { return sum(softplus(a)); });
  check([&] { return mean(add_scalar(mul(a, a), 3.0)); });
  check([&] { return sum(square(reshape(a, {4, 3}))); });
}

TEST_CASE("gradients: relu away from the kink") {
  Rng rng(102);
  Tensor a = testutil::random_tensor({5, 5}, rng, 0.2, 2.0);
  Tensor s = testutil::random_tensor({5, 5}, rng, -2.0, -0.2);
  auto r = testutil::grad_check({a, s}, [&] {
    return sum(square(relu(sub(a, s))));
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradients: dense") {
  Rng rng(103);
  Tensor x = testutil::random_tensor({4, 5}, rng);
  Tensor w = testutil::random_tensor({5, 3}, rng);
  Tensor b = testutil::random_tensor({3}, rng);
  auto r = testutil::grad_check({x, w, b}, [&] {
    return mean(square(dense(x, w, b)));
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradients: conv2d configurations") {
  Rng rng(104);
  struct Config {
    int pad, stride;
  };
  for (Config cfg : {Config{0, 1}, Config{1, 1}, Config{1, 2}, Config{2, 1}}) {
    Tensor x = testutil::random_tensor({2, 3, 6, 6}, rng);
    Tensor k = testutil::random_tensor({4, 3, 3, 3}, rng);
    Tensor b = testutil::random_tensor({4}, rng);
    auto r = testutil::grad_check({x, k, b}, [&] {
      return mean(square(conv2d(x, k, b, cfg.pad, cfg.stride)));
    });
    CAPTURE(cfg.pad);
    CAPTURE(cfg.stride);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradients: maxpool") {
  // Well-separated values keep finite differences away from argmax flips.
  Rng rng(105);
  Tensor x = Tensor::zeros({2, 2, 4, 4}, true);
  std::vector<std::size_t> order(x.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    x.values()[order[i]] = 0.01 * static_cast<double>(i);
  }
  auto r = testutil::grad_check({x}, [&] {
    return sum(square(maxpool2d(x, 2)));
  });
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("gradients: softmax and fused cross entropy") {
  Rng rng(106);
  Tensor logits = testutil::random_tensor({4, 6}, rng, -3.0, 3.0);
  std::vector<int> labels = {0, 2, 5, 3};

  SUBCASE("loss path") {
    auto r = testutil::grad_check({logits}, [&] {
      return softmax_cross_entropy(logits, labels).loss;
    });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("probability path") {
    auto r = testutil::grad_check({logits}, [&] {
      return sum(square(softmax_cross_entropy(logits, labels).probs));
    });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("both outputs combined") {
    auto r = testutil::grad_check({logits}, [&] {
      auto out = softmax_cross_entropy(logits, labels);
      return add(out.loss, mean(square(out.probs)));
    });
    CHECK(r.max_rel_error < 1e-4);
  }
  SUBCASE("standalone softmax") {
    auto r = testutil::grad_check({logits}, [&] {
      return sum(square(softmax(logits)));
    });
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("gradients: composite conv-pool-dense network") {
  Rng rng(107);
  Tensor x = testutil::random_tensor({2, 1, 8, 8}, rng, 0.0, 1.0, false);
  Tensor k1 = testutil::random_tensor({3, 1, 3, 3}, rng, -0.5, 0.5);
  Tensor b1 = testutil::random_tensor({3}, rng, -0.1, 0.1);
  Tensor w = testutil::random_tensor({48, 5}, rng, -0.5, 0.5);
  Tensor b2 = testutil::random_tensor({5}, rng, -0.1, 0.1);
  std::vector<int> labels = {1, 4};

  auto forward = [&] {
    Tensor h = conv2d(x, k1, b1, 1, 1);     // [2,3,8,8]
    h = maxpool2d(h, 2);                    // [2,3,4,4]
    h = relu(h);
    h = reshape(h, {2, 48});
    Tensor logits = dense(h, w, b2);
    return softmax_cross_entropy(logits, labels).loss;
  };
  auto r = testutil::grad_check({k1, b1, w, b2}, forward);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.checked >= 99);  // 27 + 3 + 64 (sampled) + 5 entries
}

TEST_CASE("gradient accumulation over shared subgraphs") {
  // One tensor feeding two ops must receive the sum of both contributions.
  Tensor x = Tensor::scalar(2.0, true);
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor y = add(square(x), mul_scalar(x, 3.0));  // x^2 + 3x
    tape.backward(sum(y));
  }
  CHECK(x.grad()[0] == doctest::Approx(7.0));  // 2x + 3
}
