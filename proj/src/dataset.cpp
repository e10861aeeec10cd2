#include "btcnn/dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "btcnn/rng.hpp"

namespace btcnn {

namespace {

constexpr int kImageSide = 16;
constexpr int kPixelCount = kImageSide * kImageSide;
constexpr int kNumClasses = 10;

int canonical_count(const std::string& split) {
  if (split == "train") return 7291;
  if (split == "test") return 2007;
  return -1;
}

std::vector<std::string> read_lines_maybe_gz(const std::string& path) {
  gzFile file = gzopen(path.c_str(), "rb");  // reads plain files too
  if (!file) {
    throw std::runtime_error("cannot open dataset file: " + path);
  }
  std::vector<std::string> lines;
  std::string current;
  char buffer[1 << 16];
  int got;
  while ((got = gzread(file, buffer, sizeof(buffer))) > 0) {
    for (int i = 0; i < got; ++i) {
      if (buffer[i] == '\n') {
        lines.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(buffer[i]);
      }
    }
  }
  if (got < 0) {
    int errnum = 0;
    const char* msg = gzerror(file, &errnum);
    std::string text = msg ? msg : "unknown zlib error";
    gzclose(file);
    throw std::runtime_error("error reading " + path + ": " + text);
  }
  gzclose(file);
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

// Little-endian byte helpers for the binary cache.
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

double get_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

}  // namespace

Tensor Dataset::image(int index) const {
  if (index < 0 || index >= size()) {
    throw std::invalid_argument("image index " + std::to_string(index) +
                                " out of range for dataset of size " +
                                std::to_string(size()));
  }
  const int h = height(), w = width();
  Tensor out = Tensor::zeros({1, h, w});
  const auto& src = images.values();
  std::copy_n(src.begin() + static_cast<std::size_t>(index) * h * w,
              static_cast<std::size_t>(h) * w, out.values().begin());
  return out;
}

Dataset load_usps_file(const std::string& path, std::string split) {
  const std::vector<std::string> lines = read_lines_maybe_gz(path);

  std::vector<double> pixels;
  std::vector<int> labels;
  pixels.reserve(lines.size() * kPixelCount);
  labels.reserve(lines.size());

  int line_number = 0;
  for (const std::string& line : lines) {
    ++line_number;
    // Skip blank lines (some distributions end with one).
    bool blank = true;
    for (char ch : line) {
      if (!std::isspace(static_cast<unsigned char>(ch))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;

    const char* cursor = line.c_str();
    std::vector<double> fields;
    fields.reserve(kPixelCount + 1);
    while (true) {
      char* end = nullptr;
      double v = std::strtod(cursor, &end);
      if (end == cursor) break;
      fields.push_back(v);
      cursor = end;
    }
    if (fields.size() != kPixelCount + 1) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) +
                               ": expected 257 fields, got " +
                               std::to_string(fields.size()));
    }
    const double raw_label = fields[0];
    const int label = static_cast<int>(std::lround(raw_label));
    if (std::fabs(raw_label - label) > 1e-9 || label < 0 ||
        label >= kNumClasses) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) +
                               ": label " + std::to_string(raw_label) +
                               " outside [0,10)");
    }
    labels.push_back(label);
    for (int p = 0; p < kPixelCount; ++p) {
      pixels.push_back(std::clamp((fields[p + 1] + 1.0) / 2.0, 0.0, 1.0));
    }
  }

  if (labels.empty()) {
    throw std::runtime_error(path + ": no samples found");
  }
  const int expected = canonical_count(split);
  if (expected > 0 && static_cast<int>(labels.size()) != expected) {
    std::fprintf(stderr,
                 "warning: %s has %zu samples, canonical %s size is %d\n",
                 path.c_str(), labels.size(), split.c_str(), expected);
  }

  Dataset ds;
  ds.images = Tensor::from_values(
      {static_cast<int>(labels.size()), 1, kImageSide, kImageSide},
      std::move(pixels));
  ds.labels = std::move(labels);
  ds.split = std::move(split);
  return ds;
}

std::pair<Dataset, Dataset> load_usps(const std::string& train_path,
                                      const std::string& test_path) {
  return {load_usps_file(train_path, "train"),
          load_usps_file(test_path, "test")};
}

Dataset starve(const Dataset& train, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw std::invalid_argument("subset fraction must be in (0,1], got " +
                                std::to_string(fraction));
  }
  const int n = train.size();
  const int subset = static_cast<int>(std::llround(fraction * n));
  if (subset < 1) {
    throw std::invalid_argument("subset fraction " + std::to_string(fraction) +
                                " selects no samples from " +
                                std::to_string(n));
  }

  // Partial Fisher-Yates: the first `subset` slots form the sample.
  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) indices[i] = i;
  Rng rng(seed);
  for (int i = 0; i < subset; ++i) {
    const int j =
        i + static_cast<int>(std::uniform_int_distribution<int>(0, n - 1 - i)(rng));
    std::swap(indices[i], indices[j]);
  }

  const int h = train.height(), w = train.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Dataset out;
  out.split = train.split;
  out.labels.resize(subset);
  out.images = Tensor::zeros({subset, 1, h, w});
  const auto& src = train.images.values();
  auto& dst = out.images.values();
  for (int i = 0; i < subset; ++i) {
    out.labels[i] = train.labels[indices[i]];
    std::copy_n(src.begin() + indices[i] * plane, plane,
                dst.begin() + i * plane);
  }
  return out;
}

std::vector<double> gaussian_kernel(double sigma, int size) {
  if (!(sigma > 0.0)) {
    throw std::invalid_argument("gaussian kernel sigma must be positive");
  }
  if (size < 1 || size % 2 == 0) {
    throw std::invalid_argument("gaussian kernel size must be odd, got " +
                                std::to_string(size));
  }
  const int half = size / 2;
  std::vector<double> kernel(static_cast<std::size_t>(size) * size);
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    for (int j = -half; j <= half; ++j) {
      const double v =
          std::exp(-(static_cast<double>(i) * i + static_cast<double>(j) * j) /
                   (2.0 * sigma * sigma));
      kernel[static_cast<std::size_t>(i + half) * size + (j + half)] = v;
      total += v;
    }
  }
  for (double& v : kernel) v /= total;
  return kernel;
}

BlurPolicy BlurPolicy::defaults(int num_classes) {
  BlurPolicy policy;
  policy.kernel_size = 5;
  policy.sigma_lo.resize(num_classes);
  policy.sigma_hi.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) {
    policy.sigma_lo[c] = 0.05 + 0.2 * c;
    policy.sigma_hi[c] = 0.25 + 0.2 * c;
  }
  return policy;
}

void BlurPolicy::validate() const {
  if (sigma_lo.size() != sigma_hi.size() || sigma_lo.empty()) {
    throw std::invalid_argument("blur policy needs matching sigma intervals");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw std::invalid_argument("blur kernel size must be odd");
  }
  for (std::size_t c = 0; c < sigma_lo.size(); ++c) {
    if (!(sigma_lo[c] > 0.0) || sigma_hi[c] < sigma_lo[c]) {
      throw std::invalid_argument("blur sigma interval for class " +
                                  std::to_string(c) + " is invalid");
    }
    if (c > 0 && (sigma_lo[c] <= sigma_lo[c - 1] ||
                  sigma_hi[c] <= sigma_hi[c - 1])) {
      throw std::invalid_argument(
          "blur sigma intervals must increase strictly with the class");
    }
  }
}

Dataset apply_class_blur(const Dataset& dataset, const BlurPolicy& policy,
                         std::uint64_t seed) {
  policy.validate();
  const int n = dataset.size();
  const int h = dataset.height(), w = dataset.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const int k = policy.kernel_size;
  const int half = k / 2;

  Dataset out;
  out.split = dataset.split;
  out.labels = dataset.labels;
  out.images = Tensor::zeros(dataset.images.shape());
  const auto& src = dataset.images.values();
  auto& dst = out.images.values();

  for (int i = 0; i < n; ++i) {
    const int cls = dataset.labels[i];
    if (cls < 0 || cls >= static_cast<int>(policy.sigma_lo.size())) {
      throw std::invalid_argument("label " + std::to_string(cls) +
                                  " has no blur interval");
    }
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const double sigma =
        draw_uniform(rng, policy.sigma_lo[cls], policy.sigma_hi[cls]);
    const std::vector<double> kernel = gaussian_kernel(sigma, k);

    const double* in = src.data() + static_cast<std::size_t>(i) * plane;
    double* res = dst.data() + static_cast<std::size_t>(i) * plane;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        double acc = 0.0;
        for (int dr = -half; dr <= half; ++dr) {
          const int rr = reflect_index(r + dr, h);
          for (int dc = -half; dc <= half; ++dc) {
            const int cc = reflect_index(c + dc, w);
            acc += kernel[static_cast<std::size_t>(dr + half) * k +
                          (dc + half)] *
                   in[static_cast<std::size_t>(rr) * w + cc];
          }
        }
        res[static_cast<std::size_t>(r) * w + c] = std::clamp(acc, 0.0, 1.0);
      }
    }
  }
  return out;
}

std::vector<double> ProbeConfig::default_alphas(int count) {
  if (count < 2) throw std::invalid_argument("alpha grid needs >= 2 points");
  std::vector<double> alphas(count);
  for (int i = 0; i < count; ++i) {
    alphas[i] = static_cast<double>(i) / (count - 1);
  }
  return alphas;
}

void ProbeConfig::validate() const {
  if (class_a >= class_b) {
    throw std::invalid_argument("probe classes must satisfy a < b, got " +
                                std::to_string(class_a) + "," +
                                std::to_string(class_b));
  }
  if (alphas.empty() || !std::is_sorted(alphas.begin(), alphas.end())) {
    throw std::invalid_argument("probe alphas must be sorted");
  }
  if (alphas.front() != 0.0 || alphas.back() != 1.0) {
    throw std::invalid_argument("probe alphas must include endpoints 0 and 1");
  }
}

std::vector<Tensor> convex_probe(const Tensor& a_img, const Tensor& b_img,
                                 const ProbeConfig& config) {
  config.validate();
  if (a_img.shape() != b_img.shape()) {
    throw std::invalid_argument("probe images differ in shape: " +
                                shape_to_string(a_img.shape()) + " vs " +
                                shape_to_string(b_img.shape()));
  }
  std::vector<Tensor> sweep;
  sweep.reserve(config.alphas.size());
  const auto& av = a_img.values();
  const auto& bv = b_img.values();
  for (double alpha : config.alphas) {
    Tensor x = Tensor::zeros(a_img.shape());
    auto& xv = x.values();
    const double wa = 1.0 - alpha;
    for (std::size_t i = 0; i < xv.size(); ++i) {
      xv[i] = wa * av[i] + alpha * bv[i];
    }
    sweep.push_back(std::move(x));
  }
  return sweep;
}

void save_dataset_cache(const Dataset& dataset, const std::string& path) {
  std::string blob;
  blob.reserve(21 + dataset.images.size() * 8 + dataset.labels.size() * 4);
  blob += "BTCD";
  blob.push_back(static_cast<char>(1));  // format version
  put_u32(blob, static_cast<std::uint32_t>(dataset.size()));
  put_u32(blob, static_cast<std::uint32_t>(dataset.images.dim(1)));
  put_u32(blob, static_cast<std::uint32_t>(dataset.height()));
  put_u32(blob, static_cast<std::uint32_t>(dataset.width()));
  for (double v : dataset.images.values()) put_f64(blob, v);
  for (int label : dataset.labels) {
    put_u32(blob, static_cast<std::uint32_t>(label));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write cache file: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw std::runtime_error("short write on cache file: " + path);
}

Dataset load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open cache file: " + path);
  std::string blob((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
  if (blob.size() < 21 || std::memcmp(p, "BTCD", 4) != 0) {
    throw std::runtime_error(path + ": not a dataset cache file");
  }
  if (p[4] != 1) {
    throw std::runtime_error(path + ": unsupported cache format version " +
                             std::to_string(static_cast<int>(p[4])));
  }
  const std::uint32_t n = get_u32(p + 5);
  const std::uint32_t channels = get_u32(p + 9);
  const std::uint32_t h = get_u32(p + 13);
  const std::uint32_t w = get_u32(p + 17);
  const std::size_t pixel_count =
      static_cast<std::size_t>(n) * channels * h * w;
  const std::size_t need = 21 + pixel_count * 8 + static_cast<std::size_t>(n) * 4;
  if (blob.size() != need) {
    throw std::runtime_error(path + ": truncated cache file");
  }
  std::vector<double> pixels(pixel_count);
  for (std::size_t i = 0; i < pixel_count; ++i) {
    pixels[i] = get_f64(p + 21 + i * 8);
  }
  Dataset ds;
  ds.images =
      Tensor::from_values({static_cast<int>(n), static_cast<int>(channels),
                           static_cast<int>(h), static_cast<int>(w)},
                          std::move(pixels));
  ds.labels.resize(n);
  const unsigned char* lp = p + 21 + pixel_count * 8;
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(get_u32(lp + i * 4));
  }
  return ds;
}

}  // namespace btcnn
