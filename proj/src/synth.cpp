#include "btcnn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "btcnn/rng.hpp"

namespace btcnn {

namespace {

constexpr int kSide = 16;
constexpr double kTau = 2.0 * std::numbers::pi;

// Canonical USPS class counts, used as proportions for any requested size.
constexpr int kTrainCounts[10] = {1194, 1005, 731, 658, 652,
                                  556,  664,  645, 542, 644};
constexpr int kTestCounts[10] = {359, 264, 198, 166, 200,
                                 160, 170, 147, 166, 177};

struct Point {
  double x, y;
};

void sample_segment(std::vector<Point>& out, double x0, double y0, double x1,
                    double y1) {
  const double len = std::hypot(x1 - x0, y1 - y0);
  const int n = std::max(8, static_cast<int>(len / 0.018));
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    out.push_back({x0 + t * (x1 - x0), y0 + t * (y1 - y0)});
  }
}

// Elliptical arc in image coordinates (y grows downward); a1 may be smaller
// than a0 to sweep the other way.
void sample_arc(std::vector<Point>& out, double cx, double cy, double rx,
                double ry, double a0, double a1) {
  const double span = std::fabs(a1 - a0);
  const int n = std::max(16, static_cast<int>(span * std::max(rx, ry) / 0.015));
  for (int i = 0; i <= n; ++i) {
    const double a = a0 + (a1 - a0) * static_cast<double>(i) / n;
    out.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
}

// Stroke skeletons in the unit square, one per digit class.
std::vector<Point> glyph_points(int digit) {
  std::vector<Point> pts;
  const double pi = std::numbers::pi;
  switch (digit) {
    case 0:
      sample_arc(pts, 0.50, 0.50, 0.25, 0.35, 0.0, kTau);
      break;
    case 1:
      sample_segment(pts, 0.55, 0.13, 0.55, 0.87);
      sample_segment(pts, 0.40, 0.28, 0.55, 0.13);
      break;
    case 2:
      sample_arc(pts, 0.50, 0.33, 0.22, 0.19, pi, kTau);
      sample_segment(pts, 0.72, 0.37, 0.29, 0.82);
      sample_segment(pts, 0.29, 0.82, 0.76, 0.82);
      break;
    case 3:
      sample_arc(pts, 0.46, 0.32, 0.21, 0.18, -0.70 * pi, 0.50 * pi);
      sample_arc(pts, 0.46, 0.67, 0.23, 0.20, -0.50 * pi, 0.70 * pi);
      break;
    case 4:
      sample_segment(pts, 0.64, 0.12, 0.64, 0.88);
      sample_segment(pts, 0.64, 0.12, 0.30, 0.60);
      sample_segment(pts, 0.30, 0.60, 0.80, 0.60);
      break;
    case 5:
      sample_segment(pts, 0.70, 0.14, 0.33, 0.14);
      sample_segment(pts, 0.33, 0.14, 0.33, 0.46);
      sample_arc(pts, 0.48, 0.64, 0.22, 0.20, -0.75 * pi, 0.62 * pi);
      break;
    case 6:
      sample_arc(pts, 0.54, 0.48, 0.25, 0.34, -0.45 * pi, -1.15 * pi);
      sample_arc(pts, 0.47, 0.66, 0.19, 0.18, 0.0, kTau);
      break;
    case 7:
      sample_segment(pts, 0.26, 0.15, 0.74, 0.15);
      sample_segment(pts, 0.74, 0.15, 0.40, 0.88);
      break;
    case 8:
      sample_arc(pts, 0.50, 0.31, 0.17, 0.15, 0.0, kTau);
      sample_arc(pts, 0.50, 0.67, 0.21, 0.19, 0.0, kTau);
      break;
    case 9:
      sample_arc(pts, 0.47, 0.34, 0.20, 0.17, 0.0, kTau);
      sample_segment(pts, 0.66, 0.38, 0.52, 0.88);
      break;
    default:
      throw std::invalid_argument("glyph for digit " + std::to_string(digit));
  }
  return pts;
}

void render_digit(int digit, Rng& rng, double* pixels) {
  std::vector<Point> pts = glyph_points(digit);

  const double angle = draw_uniform(rng, -0.18, 0.18);
  const double shear = draw_uniform(rng, -0.18, 0.18);
  const double scale_x = draw_uniform(rng, 0.82, 1.08);
  const double scale_y = draw_uniform(rng, 0.82, 1.08);
  const double shift_x = draw_uniform(rng, -0.05, 0.05);
  const double shift_y = draw_uniform(rng, -0.05, 0.05);
  const double thickness = draw_uniform(rng, 0.045, 0.085);
  const double edge = 0.05 + draw_uniform(rng, 0.0, 0.02);
  const double ink = draw_uniform(rng, 0.72, 1.0);
  const double noise = draw_uniform(rng, 0.02, 0.10);

  const double ca = std::cos(angle), sa = std::sin(angle);
  for (Point& p : pts) {
    double x = p.x - 0.5, y = p.y - 0.5;
    x += shear * y;
    x *= scale_x;
    y *= scale_y;
    const double rx = ca * x - sa * y;
    const double ry = sa * x + ca * y;
    p.x = rx + 0.5 + shift_x;
    p.y = ry + 0.5 + shift_y;
  }

  for (int r = 0; r < kSide; ++r) {
    for (int c = 0; c < kSide; ++c) {
      const double px = (c + 0.5) / kSide;
      const double py = (r + 0.5) / kSide;
      double best_sq = 1e18;
      for (const Point& p : pts) {
        const double dx = px - p.x, dy = py - p.y;
        const double d_sq = dx * dx + dy * dy;
        if (d_sq < best_sq) best_sq = d_sq;
      }
      const double d = std::sqrt(best_sq);
      double v = ink * std::clamp(1.0 - (d - thickness) / edge, 0.0, 1.0);
      v += noise * draw_normal(rng);
      pixels[r * kSide + c] = std::clamp(v, 0.0, 1.0);
    }
  }
}

std::vector<int> class_schedule(int count, const int* canonical, Rng& rng) {
  long total = 0;
  for (int c = 0; c < 10; ++c) total += canonical[c];
  std::vector<int> labels;
  labels.reserve(count);
  // Cumulative rounding keeps per-class counts proportional and exact.
  long cumulative = 0;
  int assigned = 0;
  for (int c = 0; c < 10; ++c) {
    cumulative += canonical[c];
    const int upto = static_cast<int>(
        std::llround(static_cast<double>(cumulative) * count / total));
    for (int i = assigned; i < upto; ++i) labels.push_back(c);
    assigned = upto;
  }
  for (int i = count - 1; i > 0; --i) {
    const int j =
        static_cast<int>(std::uniform_int_distribution<int>(0, i)(rng));
    std::swap(labels[i], labels[j]);
  }
  return labels;
}

}  // namespace

Dataset make_synthetic_split(int count, std::string split,
                             std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("split size must be positive");
  const bool is_test = split == "test";
  Rng schedule_rng(mix_seed(seed, is_test ? 2 : 1));
  std::vector<int> labels = class_schedule(
      count, is_test ? kTestCounts : kTrainCounts, schedule_rng);

  Dataset ds;
  ds.split = std::move(split);
  ds.labels = std::move(labels);
  ds.images = Tensor::zeros({count, 1, kSide, kSide});
  auto& pixels = ds.images.values();
  const std::uint64_t stream_base = is_test ? 1u << 30 : 0u;
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, stream_base + static_cast<std::uint64_t>(i) + 16));
    render_digit(ds.labels[i], rng,
                 pixels.data() + static_cast<std::size_t>(i) * kSide * kSide);
  }
  return ds;
}

std::pair<Dataset, Dataset> make_synthetic_digits(const SynthConfig& config) {
  return {make_synthetic_split(config.train_count, "train", config.seed),
          make_synthetic_split(config.test_count, "test", config.seed)};
}

void write_usps_text(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset file: " + path);
  const auto& pixels = dataset.images.values();
  const std::size_t plane =
      static_cast<std::size_t>(dataset.height()) * dataset.width();
  char buf[32];
  for (int i = 0; i < dataset.size(); ++i) {
    out << dataset.labels[i];
    const double* img = pixels.data() + i * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      std::snprintf(buf, sizeof(buf), " %.5f", 2.0 * img[p] - 1.0);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("short write on dataset file: " + path);
}

}  // namespace btcnn
