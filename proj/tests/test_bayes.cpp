#include <cmath>
#include <stdexcept>
#include <vector>

#include "btcnn/ops.hpp"
#include "btcnn/rng.hpp"
#include "btcnn/tensor.hpp"
#include "btcnn/variational.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace btcnn;

namespace {
// rho value whose softplus is the requested sigma.
double rho_for_sigma(double sigma) { return std::log(std::exp(sigma) - 1.0); }
}  // namespace

TEST_CASE("sampling the variational posterior") {
  SUBCASE("sigma near zero collapses to the mean") {
    VariationalParameter vp({4}, -40.0);
    for (int i = 0; i < 4; ++i) vp.mu.values()[i] = 0.5 * i;
    Rng rng(1);
    Tensor theta = vp.sample(rng);
    for (int i = 0; i < 4; ++i) {
      CHECK(std::fabs(theta.values()[i] - vp.mu.values()[i]) < 1e-15);
    }
  }
  SUBCASE("standard posterior matches N(0,1) moments over 1e5 draws") {
    VariationalParameter vp({1}, rho_for_sigma(1.0));
    Rng rng(2);
    const int draws = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      double t = vp.sample(rng).values()[0];
      sum += t;
      sum_sq += t * t;
    }
    const double mean = sum / draws;
    const double var = sum_sq / draws - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(std::fabs(var - 1.0) < 0.05);
  }
  SUBCASE("same seed gives identical draws") {
    VariationalParameter vp({8}, -1.0);
    Rng a(77), b(77);
    CHECK(vp.sample(a).values() == vp.sample(b).values());
  }
  SUBCASE("recorded state matches the reparameterization identity") {
    VariationalParameter vp({6}, 0.2);
    Rng rng(3);
    for (double& m : vp.mu.values()) m = draw_uniform(rng, -1, 1);
    Tensor theta = vp.sample(rng);
    const auto sig = vp.sigma();
    for (int i = 0; i < 6; ++i) {
      CHECK(theta.values()[i] ==
            doctest::Approx(vp.mu.values()[i] +
                            vp.last_epsilon().values()[i] * sig[i])
                .epsilon(1e-15));
      CHECK(sig[i] > 0.0);
    }
  }
}

TEST_CASE("bayesian dense forward") {
  SUBCASE("collapsed posterior reproduces the deterministic layer") {
    Rng init(4);
    BayesianDense layer(3, 3, init, -40.0);
    // Identity mean weights, zero mean bias.
    for (double& v : layer.weight.mu.values()) v = 0.0;
    for (int i = 0; i < 3; ++i) layer.weight.mu.values()[i * 3 + i] = 1.0;

    Tensor x = Tensor::from_values({2, 3}, {1, 2, 3, -4, 0, 2.5});
    Rng rng(5);
    Tensor y = layer.forward(x, rng);
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(std::fabs(y.values()[i] - x.values()[i]) < 1e-9);
    }
  }
  SUBCASE("different seeds give different outputs") {
    Rng init(6);
    BayesianDense layer(4, 2, init, -1.0);
    Tensor x = Tensor::full({1, 4}, 1.0);
    Rng r1(10), r2(11);
    Tensor y1 = layer.forward(x, r1);
    Tensor y2 = layer.forward(x, r2);
    CHECK(y1.values() != y2.values());
  }
  SUBCASE("averaging S samples shrinks the variance roughly as 1/S") {
    Rng init(7);
    BayesianDense layer(3, 1, init, rho_for_sigma(0.5));
    Tensor x = Tensor::from_values({1, 3}, {1.0, -0.5, 2.0});
    Rng rng(8);
    auto variance_of_average = [&](int members, int reps) {
      double sum = 0.0, sum_sq = 0.0;
      for (int r = 0; r < reps; ++r) {
        double avg = 0.0;
        for (int s = 0; s < members; ++s) {
          avg += layer.forward(x, rng).values()[0];
        }
        avg /= members;
        sum += avg;
        sum_sq += avg * avg;
      }
      const double mean = sum / reps;
      return sum_sq / reps - mean * mean;
    };
    const double v1 = variance_of_average(1, 400);
    const double v16 = variance_of_average(16, 400);
    const double ratio = v1 / v16;
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
  }
}

TEST_CASE("posterior/prior log density term") {
  SUBCASE("matching distributions give zero for every draw") {
    VariationalParameter vp({5}, rho_for_sigma(1.0));
    Rng rng(9);
    for (int rep = 0; rep < 10; ++rep) {
      vp.sample(rng);
      CHECK(std::fabs(vp.log_q_minus_log_p().item()) < 1e-12);
    }
  }
  SUBCASE("expectation matches the closed-form KL within 2 percent") {
    VariationalParameter vp({1}, rho_for_sigma(0.5));
    vp.mu.values()[0] = 1.0;
    const double closed = vp.kl_closed_form();
    CHECK(closed == doctest::Approx(0.8181471805599453).epsilon(1e-12));

    Rng rng(12);
    const int draws = 100000;
    double acc = 0.0;
    for (int i = 0; i < draws; ++i) {
      vp.sample(rng);
      acc += vp.log_q_minus_log_p().item();
    }
    const double mc = acc / draws;
    CHECK(std::fabs(mc - closed) < 0.02 * closed);
  }
  SUBCASE("two layers add their contributions") {
    Rng init(13);
    BayesianDense l1(3, 2, init), l2(2, 4, init);
    Rng rng(14);
    Tensor x = Tensor::full({1, 3}, 0.5);
    Tensor h = l1.forward(x, rng);
    l2.forward(h, rng);
    const double separate =
        l1.log_q_minus_log_p().item() + l2.log_q_minus_log_p().item();
    const double joint = log_q_minus_log_p({&l1, &l2}).item();
    CHECK(joint == doctest::Approx(separate).epsilon(1e-14));
  }
  SUBCASE("a state error before the first sample") {
    VariationalParameter vp({3}, -2.0);
    CHECK_THROWS_AS(vp.log_q_minus_log_p(), std::logic_error);
  }
}

TEST_CASE("closed-form KL values") {
  VariationalParameter vp({1}, rho_for_sigma(1.0));
  CHECK(vp.kl_closed_form() == doctest::Approx(0.0).epsilon(1e-12));
  vp.mu.values()[0] = 1.0;
  CHECK(vp.kl_closed_form() == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("gradients flow through the reparameterization") {
  VariationalParameter vp({4}, -0.5);
  Rng setup(15);
  for (double& m : vp.mu.values()) m = draw_uniform(setup, -1, 1);

  // Fixed eps: reseeding inside the forward gives identical draws per call.
  auto forward = [&] {
    Rng rng(123);
    Tensor theta = vp.sample(rng);
    return sum(square(theta));
  };
  auto r = testutil::grad_check({vp.mu, vp.rho}, forward);
  CHECK(r.max_rel_error < 1e-4);

  // And through the density term itself.
  auto forward_kl = [&] {
    Rng rng(321);
    vp.sample(rng);
    return vp.log_q_minus_log_p();
  };
  auto r2 = testutil::grad_check({vp.mu, vp.rho}, forward_kl);
  CHECK(r2.max_rel_error < 1e-4);
}

TEST_CASE("bayesian layer doubles the deterministic parameter count") {
  Rng init(16);
  BayesianDense layer(1024, 128, init);
  const std::size_t deterministic = 1024 * 128 + 128;
  CHECK(layer.parameter_count() == 2 * deterministic);
}
