#include "btcnn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "btcnn/optimizer.hpp"
#include "btcnn/uncertainty.hpp"
#include "json.hpp"

namespace btcnn {

namespace {

using json = nlohmann::json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Batch make_batch(const Dataset& data, const std::vector<int>& order, int start,
                 int count) {
  const int h = data.height(), w = data.width();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Batch batch;
  batch.inputs = Tensor::zeros({count, 1, h, w});
  batch.labels.resize(count);
  const auto& src = data.images.values();
  auto& dst = batch.inputs.values();
  for (int i = 0; i < count; ++i) {
    const int idx = order[start + i];
    std::copy_n(src.begin() + idx * plane, plane, dst.begin() + i * plane);
    batch.labels[i] = data.labels[idx];
  }
  return batch;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
  if (cfg.mc_train < 1 || cfg.mc_eval < 1) {
    throw std::invalid_argument("draw counts must be >= 1");
  }
  if (cfg.calibration_bins < 1) {
    throw std::invalid_argument("calibration needs at least one bin");
  }
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("learning rate must be positive");
  }
}

json spec_to_json(const ModelSpec& spec) {
  return json{{"variant", variant_name(spec.variant)},
              {"conv1_channels", spec.conv1_channels},
              {"conv2_channels", spec.conv2_channels},
              {"hidden_units", spec.hidden_units},
              {"num_classes", spec.num_classes},
              {"input_height", spec.input_height},
              {"input_width", spec.input_width},
              {"kernel_size", spec.kernel_size},
              {"padding", spec.padding},
              {"pool_window", spec.pool_window},
              {"col_threshold", spec.col_threshold},
              {"gamma", spec.gamma},
              {"rho_init", spec.rho_init}};
}

json train_config_to_json(const TrainConfig& cfg) {
  return json{{"epochs", cfg.epochs},
              {"batch_size", cfg.batch_size},
              {"mc_train", cfg.mc_train},
              {"mc_eval", cfg.mc_eval},
              {"calibration_bins", cfg.calibration_bins},
              {"learning_rate", cfg.learning_rate},
              {"optimizer", cfg.use_sgd ? "sgd" : "adaptive-moments"},
              {"gamma", cfg.gamma},
              {"pair_epsilon", cfg.pair_epsilon},
              {"kl_scale", cfg.kl_scale},
              {"seed", cfg.seed}};
}

}  // namespace

double evaluate_objective(Model& model, const Dataset& data,
                          const LossConfig& loss_config, int batch_size,
                          Rng& rng) {
  std::vector<int> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  double acc = 0.0;
  int batches = 0;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int count = std::min(batch_size, data.size() - start);
    Batch batch = make_batch(data, order, start, count);
    acc += minibatch_loss(model, batch, loss_config, rng).item();
    ++batches;
  }
  return acc / batches;
}

RunRecord train_model(Model& model, const Dataset& train_set,
                      const Dataset& test_set, const TrainConfig& config) {
  validate_train_config(config);
  if (train_set.size() < 1 || test_set.size() < 1) {
    throw std::invalid_argument("training needs nonempty train and test sets");
  }

  const int n = train_set.size();
  const int batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  LossConfig loss_config;
  loss_config.mc_samples = config.mc_train;
  loss_config.gamma = config.gamma;
  loss_config.pair_epsilon = config.pair_epsilon;
  loss_config.kl_scale = config.kl_scale > 0.0
                             ? config.kl_scale
                             : 1.0 / batches_per_epoch;

  OptimizerConfig opt_config;
  opt_config.method = config.use_sgd ? OptimizerConfig::Method::Sgd
                                     : OptimizerConfig::Method::AdaptiveMoments;
  opt_config.learning_rate = config.learning_rate;
  Optimizer optimizer(model.trainable_parameters(), opt_config);

  Rng shuffle_rng(mix_seed(config.seed, 1));
  Rng sample_rng(mix_seed(config.seed, 2));

  RunRecord record;
  record.spec = model.spec();
  record.config = config;
  record.effective_kl_scale = loss_config.kl_scale;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start_time = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_acc = 0.0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int count = std::min(config.batch_size, n - start);
      Batch batch = make_batch(train_set, order, start, count);
      Tape tape;
      {
        TapeScope scope(tape);
        Tensor loss = minibatch_loss(model, batch, loss_config, sample_rng);
        loss_acc += loss.item();
        tape.backward(loss);
      }
      optimizer.step();
    }

    // Evaluation: same objective without updates, then ensemble metrics.
    Rng eval_rng(mix_seed(config.seed, 0xE000 + static_cast<std::uint64_t>(epoch)));
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_acc / batches_per_epoch;
    row.test_loss = evaluate_objective(model, test_set, loss_config,
                                       config.batch_size, eval_rng);
    PredictionEnsemble ensemble =
        predict_ensemble(model, test_set.images, config.mc_eval, eval_rng);
    row.test_accuracy = accuracy(ensemble.mean_probs, test_set.labels);
    CalibrationReport calibration = compute_calibration(
        ensemble.mean_probs, test_set.labels, config.calibration_bins);
    row.ece = calibration.ece;
    row.mce = calibration.mce;
    row.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      start_time)
            .count();
    record.rows.push_back(row);
    if (epoch == config.epochs) {
      record.final_mean_probs = ensemble.mean_probs;
    }
  }
  return record;
}

RunRecord run_training(const ModelSpec& spec, const Dataset& train_set,
                       const Dataset& test_set, const TrainConfig& config) {
  Model model = build_model(spec, config.seed);
  TrainConfig effective = config;
  effective.gamma = spec.gamma;  // the variant defines the consistency weight
  return train_model(model, train_set, test_set, effective);
}

StarvationResult run_starvation(const std::vector<ModelSpec>& variants,
                                const std::vector<double>& fractions,
                                int repeats, const Dataset& train_set,
                                const Dataset& test_set,
                                const TrainConfig& base_config) {
  if (variants.empty() || fractions.empty() || repeats < 1) {
    throw std::invalid_argument(
        "starvation protocol needs variants, fractions and repeats");
  }
  if (base_config.epochs < 1) {
    throw std::invalid_argument("starvation protocol needs at least one epoch");
  }
  StarvationResult result;
  result.report_epoch = std::min(10, base_config.epochs);

  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    for (int rep = 0; rep < repeats; ++rep) {
      const std::uint64_t subset_seed =
          mix_seed(base_config.seed, 0x5AB5E70 + fi * 1009 + rep);
      const Dataset subset = fractions[fi] >= 1.0
                                 ? train_set
                                 : starve(train_set, fractions[fi], subset_seed);
      for (std::size_t vi = 0; vi < variants.size(); ++vi) {
        TrainConfig cfg = base_config;
        cfg.seed = mix_seed(base_config.seed,
                            (vi + 1) * 1000081 + fi * 1009 +
                                static_cast<std::uint64_t>(rep));
        RunRecord run = run_training(variants[vi], subset, test_set, cfg);
        StarvationRow row;
        row.variant = variants[vi].variant;
        row.fraction = fractions[fi];
        row.repeat = rep;
        row.run_seed = cfg.seed;
        row.report = run.rows[result.report_epoch - 1];
        row.final = run.rows.back();
        result.rows.push_back(row);
      }
    }
  }
  return result;
}

std::vector<std::pair<int, int>> all_digit_pairs() {
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < 10; ++a) {
    for (int b = a + 1; b < 10; ++b) pairs.emplace_back(a, b);
  }
  return pairs;
}

ProbeResult run_uq_probe(Model& model, const Dataset& test_set,
                         const std::vector<std::pair<int, int>>& pairs,
                         int samples, std::uint64_t seed,
                         std::vector<double> alphas) {
  if (pairs.empty()) throw std::invalid_argument("probe needs at least one pair");
  if (alphas.empty()) alphas = ProbeConfig::default_alphas();

  ProbeResult result;
  result.alphas = alphas;
  const int num_alphas = static_cast<int>(alphas.size());
  result.mean_total.assign(num_alphas, 0.0);
  result.mean_aleatoric.assign(num_alphas, 0.0);
  result.mean_epistemic.assign(num_alphas, 0.0);

  // First test image of each class, by dataset index.
  std::vector<int> first_index(10, -1);
  for (int i = 0; i < test_set.size(); ++i) {
    const int label = test_set.labels[i];
    if (label >= 0 && label < 10 && first_index[label] < 0) {
      first_index[label] = i;
    }
  }

  const int h = test_set.height(), w = test_set.width();
  for (const auto& [a, b] : pairs) {
    if (a < 0 || b > 9 || a >= b) {
      throw std::invalid_argument("probe pair must satisfy 0 <= a < b <= 9");
    }
    if (first_index[a] < 0 || first_index[b] < 0) {
      throw std::invalid_argument("class " +
                                  std::to_string(first_index[a] < 0 ? a : b) +
                                  " is absent from the test set");
    }
    ProbeConfig probe;
    probe.class_a = a;
    probe.class_b = b;
    probe.alphas = alphas;
    const std::vector<Tensor> sweep = convex_probe(
        test_set.image(first_index[a]), test_set.image(first_index[b]), probe);

    Tensor stacked = Tensor::zeros({num_alphas, 1, h, w});
    for (int s = 0; s < num_alphas; ++s) {
      std::copy_n(sweep[s].values().begin(), sweep[s].size(),
                  stacked.values().begin() +
                      static_cast<std::size_t>(s) * sweep[s].size());
    }

    // Per-pair stream: results do not depend on which pairs run together.
    Rng rng(mix_seed(seed, 131 * a + b));
    PredictionEnsemble ensemble =
        predict_ensemble(model, stacked, samples, rng);
    UncertaintyReport report = decompose_uncertainty(ensemble);
    for (int s = 0; s < num_alphas; ++s) {
      ProbeRow row;
      row.class_a = a;
      row.class_b = b;
      row.alpha = alphas[s];
      row.total = report.total[s];
      row.aleatoric = report.aleatoric[s];
      row.epistemic = report.epistemic[s];
      result.rows.push_back(row);
      result.mean_total[s] += row.total;
      result.mean_aleatoric[s] += row.aleatoric;
      result.mean_epistemic[s] += row.epistemic;
    }
  }
  const double inv = 1.0 / static_cast<double>(pairs.size());
  for (int s = 0; s < num_alphas; ++s) {
    result.mean_total[s] *= inv;
    result.mean_aleatoric[s] *= inv;
    result.mean_epistemic[s] *= inv;
  }
  return result;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << contents;
  if (!out) throw std::runtime_error("short write on file: " + path);
}

void write_run_csv(const RunRecord& record, const std::string& path) {
  std::ostringstream os;
  os << "epoch,train_loss,test_loss,test_accuracy,ece,mce,wall_time_seconds\n";
  for (const EpochRow& row : record.rows) {
    os << row.epoch << ',' << fmt_double(row.train_loss) << ','
       << fmt_double(row.test_loss) << ',' << fmt_double(row.test_accuracy)
       << ',' << fmt_double(row.ece) << ',' << fmt_double(row.mce) << ','
       << fmt_double(row.wall_time_seconds) << '\n';
  }
  write_text_file(path, os.str());
}

std::string config_snapshot_json(const RunRecord& record,
                                 const std::string& dataset_metadata_json) {
  json snapshot;
  snapshot["model"] = spec_to_json(record.spec);
  snapshot["training"] = train_config_to_json(record.config);
  snapshot["effective_kl_scale"] = record.effective_kl_scale;
  snapshot["seed"] = record.config.seed;
  if (!dataset_metadata_json.empty()) {
    snapshot["dataset"] = json::parse(dataset_metadata_json);
  }
  return snapshot.dump(2) + "\n";
}

void write_predictions_csv(const Tensor& probs, const std::vector<int>& labels,
                           const std::string& path) {
  const int n = probs.dim(0), classes = probs.dim(1);
  std::ostringstream os;
  os << "label";
  for (int c = 0; c < classes; ++c) os << ",p" << c;
  os << '\n';
  for (int i = 0; i < n; ++i) {
    os << labels[i];
    for (int c = 0; c < classes; ++c) {
      os << ',' << fmt_double(probs.values()[static_cast<std::size_t>(i) * classes + c]);
    }
    os << '\n';
  }
  write_text_file(path, os.str());
}

std::pair<Tensor, std::vector<int>> read_predictions_csv(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file: " + path);
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error(path + ": empty predictions file");
  }
  int classes = -1;
  std::vector<double> flat;
  std::vector<int> labels;
  std::string line;
  int line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<double> fields;
    const char* cursor = line.c_str();
    while (*cursor) {
      char* end = nullptr;
      double v = std::strtod(cursor, &end);
      if (end == cursor) break;
      fields.push_back(v);
      cursor = *end == ',' ? end + 1 : end;
    }
    if (fields.size() < 3) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) +
                               ": malformed prediction row");
    }
    const int row_classes = static_cast<int>(fields.size()) - 1;
    if (classes < 0) classes = row_classes;
    if (row_classes != classes) {
      throw std::runtime_error(path + ":" + std::to_string(line_number) +
                               ": inconsistent class count");
    }
    labels.push_back(static_cast<int>(fields[0]));
    flat.insert(flat.end(), fields.begin() + 1, fields.end());
  }
  if (labels.empty()) {
    throw std::runtime_error(path + ": no prediction rows");
  }
  Tensor probs = Tensor::from_values(
      {static_cast<int>(labels.size()), classes}, std::move(flat));
  return {probs, labels};
}

void write_starvation_csv(const StarvationResult& result,
                          const std::string& path) {
  std::ostringstream os;
  os << "variant,fraction,repeat,run_seed,report_epoch,"
        "report_train_loss,report_test_loss,report_test_accuracy,report_ece,"
        "report_mce,final_epoch,final_train_loss,final_test_loss,"
        "final_test_accuracy,final_ece,final_mce\n";
  for (const StarvationRow& row : result.rows) {
    os << variant_name(row.variant) << ',' << fmt_double(row.fraction) << ','
       << row.repeat << ',' << row.run_seed << ',' << row.report.epoch << ','
       << fmt_double(row.report.train_loss) << ','
       << fmt_double(row.report.test_loss) << ','
       << fmt_double(row.report.test_accuracy) << ','
       << fmt_double(row.report.ece) << ',' << fmt_double(row.report.mce)
       << ',' << row.final.epoch << ',' << fmt_double(row.final.train_loss)
       << ',' << fmt_double(row.final.test_loss) << ','
       << fmt_double(row.final.test_accuracy) << ','
       << fmt_double(row.final.ece) << ',' << fmt_double(row.final.mce)
       << '\n';
  }
  write_text_file(path, os.str());
}

void write_probe_csv(const ProbeResult& result, const std::string& path) {
  std::ostringstream os;
  os << "class_a,class_b,alpha,total_bits,aleatoric_bits,epistemic_bits\n";
  for (const ProbeRow& row : result.rows) {
    os << row.class_a << ',' << row.class_b << ',' << fmt_double(row.alpha)
       << ',' << fmt_double(row.total) << ',' << fmt_double(row.aleatoric)
       << ',' << fmt_double(row.epistemic) << '\n';
  }
  write_text_file(path, os.str());
}

void write_probe_summary_csv(const ProbeResult& result,
                             const std::string& path) {
  std::ostringstream os;
  os << "alpha,mean_total_bits,mean_aleatoric_bits,mean_epistemic_bits\n";
  for (std::size_t s = 0; s < result.alphas.size(); ++s) {
    os << fmt_double(result.alphas[s]) << ','
       << fmt_double(result.mean_total[s]) << ','
       << fmt_double(result.mean_aleatoric[s]) << ','
       << fmt_double(result.mean_epistemic[s]) << '\n';
  }
  write_text_file(path, os.str());
}

void write_calibration_csv(const CalibrationReport& report,
                           const std::string& path) {
  std::ostringstream os;
  os << "bin,lower,upper,count,accuracy,confidence\n";
  for (int m = 0; m < report.num_bins; ++m) {
    const CalibrationBin& bin = report.bins[m];
    os << (m + 1) << ','
       << fmt_double(static_cast<double>(m) / report.num_bins) << ','
       << fmt_double(static_cast<double>(m + 1) / report.num_bins) << ','
       << bin.count << ',' << fmt_double(bin.accuracy) << ','
       << fmt_double(bin.confidence) << '\n';
  }
  write_text_file(path, os.str());
}

}  // namespace btcnn
