#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "btcnn/calibration.hpp"
#include "btcnn/tensor.hpp"
#include "doctest.h"

using namespace btcnn;

namespace {

// By-definition reference: enumerates each bin's members independently.
struct OracleResult {
  double ece = 0.0;
  double mce = 0.0;
};

OracleResult oracle_calibration(const std::vector<std::vector<double>>& rows,
                                const std::vector<int>& labels, int num_bins) {
  const int n = static_cast<int>(rows.size());
  OracleResult out;
  for (int m = 1; m <= num_bins; ++m) {
    const double lo = static_cast<double>(m - 1) / num_bins;
    const double hi = static_cast<double>(m) / num_bins;
    int count = 0, correct = 0;
    double conf = 0.0;
    for (int i = 0; i < n; ++i) {
      int pred = 0;
      for (std::size_t c = 1; c < rows[i].size(); ++c) {
        if (rows[i][c] > rows[i][pred]) pred = static_cast<int>(c);
      }
      const double p = rows[i][pred];
      if (p > lo && p <= hi) {
        ++count;
        correct += pred == labels[i];
        conf += p;
      }
    }
    if (count == 0) continue;
    const double gap =
        std::fabs(static_cast<double>(correct) / count - conf / count);
    out.ece += (static_cast<double>(count) / n) * gap;
    out.mce = std::max(out.mce, gap);
  }
  return out;
}

Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows) {
  const int n = static_cast<int>(rows.size());
  const int c = static_cast<int>(rows[0].size());
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(n) * c);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from_values({n, c}, std::move(flat));
}

}  // namespace

TEST_CASE("calibration examples") {
  SUBCASE("confidence equal to accuracy in every bin gives zero error") {
    // Four predictions at confidence 0.75, three of them correct.
    std::vector<std::vector<double>> rows(4, {0.75, 0.25});
    std::vector<int> labels = {0, 0, 0, 1};
    auto report = compute_calibration(rows_to_tensor(rows), labels, 10);
    CHECK(report.ece == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(report.mce == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("two predictions in one of two bins") {
    std::vector<std::vector<double>> rows = {{0.6, 0.4}, {0.8, 0.2}};
    std::vector<int> labels = {0, 1};  // first correct, second wrong
    auto report = compute_calibration(rows_to_tensor(rows), labels, 2);
    REQUIRE(report.bins.size() == 2);
    CHECK(report.bins[0].count == 0);
    CHECK(report.bins[1].count == 2);
    CHECK(report.bins[1].accuracy == doctest::Approx(0.5));
    CHECK(report.bins[1].confidence == doctest::Approx(0.7));
    CHECK(report.ece == doctest::Approx(0.2));
    CHECK(report.mce == doctest::Approx(0.2));
  }
  SUBCASE("confidence exactly 1 lands in the top bin") {
    std::vector<std::vector<double>> rows = {{1.0, 0.0}};
    auto report = compute_calibration(rows_to_tensor(rows), {0}, 10);
    CHECK(report.bins[9].count == 1);
  }
  SUBCASE("bin boundaries are half-open on the left") {
    // Confidence exactly 0.5 belongs to (0.4, 0.5] with M = 10.
    std::vector<std::vector<double>> rows = {{0.5, 0.5}};
    auto report = compute_calibration(rows_to_tensor(rows), {0}, 10);
    CHECK(report.bins[4].count == 1);
  }
  SUBCASE("validation errors") {
    std::vector<std::vector<double>> bad = {{0.9, 0.3}};
    CHECK_THROWS_AS(compute_calibration(rows_to_tensor(bad), {0}, 10),
                    std::invalid_argument);
    std::vector<std::vector<double>> ok = {{0.9, 0.1}};
    CHECK_THROWS_AS(compute_calibration(rows_to_tensor(ok), {0, 1}, 10),
                    std::invalid_argument);
    CHECK_THROWS_AS(compute_calibration(rows_to_tensor(ok), {0}, 0),
                    std::invalid_argument);
  }
}

TEST_CASE("accuracy") {
  SUBCASE("one-hot correct rows") {
    std::vector<std::vector<double>> rows = {{1, 0, 0}, {0, 0, 1}};
    CHECK(accuracy(rows_to_tensor(rows), {0, 2}) == 1.0);
  }
  SUBCASE("always mismatching labels") {
    std::vector<std::vector<double>> rows = {{0.9, 0.1}, {0.8, 0.2}};
    CHECK(accuracy(rows_to_tensor(rows), {1, 1}) == 0.0);
  }
  SUBCASE("three of four correct") {
    std::vector<std::vector<double>> rows = {
        {0.9, 0.1}, {0.2, 0.8}, {0.7, 0.3}, {0.6, 0.4}};
    CHECK(accuracy(rows_to_tensor(rows), {0, 1, 0, 1}) == 0.75);
  }
  SUBCASE("argmax ties break toward the smallest index") {
    std::vector<std::vector<double>> rows = {{0.5, 0.5}};
    CHECK(accuracy(rows_to_tensor(rows), {0}) == 1.0);
    CHECK(accuracy(rows_to_tensor(rows), {1}) == 0.0);
  }
}

TEST_CASE("calibration matches the brute-force oracle on random instances") {
  std::mt19937_64 rng(2024);
  const int bin_choices[] = {2, 5, 10, 15};
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 100);
    const int classes = 2 + static_cast<int>(rng() % 9);
    const int bins = bin_choices[rng() % 4];
    std::vector<std::vector<double>> rows(n, std::vector<double>(classes));
    std::vector<int> labels(n);
    std::uniform_real_distribution<double> unif(0.01, 1.0);
    for (int i = 0; i < n; ++i) {
      double sum = 0.0;
      for (int c = 0; c < classes; ++c) {
        rows[i][c] = unif(rng);
        sum += rows[i][c];
      }
      for (int c = 0; c < classes; ++c) rows[i][c] /= sum;
      labels[i] = static_cast<int>(rng() % classes);
    }

    auto report = compute_calibration(rows_to_tensor(rows), labels, bins);
    auto oracle = oracle_calibration(rows, labels, bins);
    CHECK(report.ece == oracle.ece);
    CHECK(report.mce == oracle.mce);

    // Invariants on arbitrary normalized inputs.
    CHECK(report.ece >= 0.0);
    CHECK(report.ece <= report.mce + 1e-12);
    CHECK(report.mce <= 1.0);
    int total = 0;
    for (const auto& b : report.bins) total += b.count;
    CHECK(total == n);
  }
}

TEST_CASE("calibration is invariant under permutation of predictions") {
  std::mt19937_64 rng(77);
  const int n = 64;
  std::vector<std::vector<double>> rows(n, std::vector<double>(4));
  std::vector<int> labels(n);
  std::uniform_real_distribution<double> unif(0.01, 1.0);
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (auto& v : rows[i]) {
      v = unif(rng);
      sum += v;
    }
    for (auto& v : rows[i]) v /= sum;
    labels[i] = static_cast<int>(rng() % 4);
  }
  auto base = compute_calibration(rows_to_tensor(rows), labels, 10);

  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<double>> shuffled(n);
  std::vector<int> shuffled_labels(n);
  for (int i = 0; i < n; ++i) {
    shuffled[i] = rows[perm[i]];
    shuffled_labels[i] = labels[perm[i]];
  }
  auto permuted =
      compute_calibration(rows_to_tensor(shuffled), shuffled_labels, 10);
  CHECK(permuted.ece == doctest::Approx(base.ece).epsilon(1e-12));
  CHECK(permuted.mce == doctest::Approx(base.mce).epsilon(1e-12));
}
