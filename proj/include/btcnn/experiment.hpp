#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "btcnn/calibration.hpp"
#include "btcnn/dataset.hpp"
#include "btcnn/loss.hpp"
#include "btcnn/model.hpp"
#include "btcnn/tensor.hpp"

namespace btcnn {

struct TrainConfig {
  int epochs = 40;
  int batch_size = 64;
  int mc_train = 1;            // parameter draws per training step
  int mc_eval = 30;            // ensemble size for evaluation
  int calibration_bins = 10;
  double learning_rate = 1e-3;
  bool use_sgd = false;        // plain SGD instead of adaptive moments
  double gamma = 0.0;
  double pair_epsilon = 1e-8;
  double kl_scale = 0.0;       // <= 0 selects 1 / batches-per-epoch
  std::uint64_t seed = 0;      // always explicit; no implicit seeding
};

struct EpochRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_accuracy = 0.0;
  double ece = 0.0;
  double mce = 0.0;
  double wall_time_seconds = 0.0;  // measurement, excluded from comparisons
};

struct RunRecord {
  ModelSpec spec;
  TrainConfig config;
  double effective_kl_scale = 1.0;
  std::vector<EpochRow> rows;           // one per completed epoch
  Tensor final_mean_probs;              // test-set ensemble mean, last epoch
};

/// Shuffled-minibatch training with a per-epoch evaluation pass: test loss
/// under the same objective (fresh draws, no update), plus accuracy, ECE
/// and MCE of the mc_eval-member ensemble prediction. Bit-reproducible
/// from (config, seed) apart from wall_time.
RunRecord train_model(Model& model, const Dataset& train_set,
                      const Dataset& test_set, const TrainConfig& config);

/// build_model + train_model in one call.
RunRecord run_training(const ModelSpec& spec, const Dataset& train_set,
                       const Dataset& test_set, const TrainConfig& config);

/// Objective value over a dataset without parameter updates.
double evaluate_objective(Model& model, const Dataset& data,
                          const LossConfig& loss_config, int batch_size,
                          Rng& rng);

// ---- data-starvation protocol ----

struct StarvationRow {
  ModelVariant variant;
  double fraction = 1.0;
  int repeat = 0;
  std::uint64_t run_seed = 0;
  EpochRow report;  // at the report epoch (10th, or last if fewer)
  EpochRow final;
};

struct StarvationResult {
  int report_epoch = 10;
  std::vector<StarvationRow> rows;
};

/// Trains every (variant, fraction, repeat) combination on a random subset
/// of the training set. Subsets are shared across variants for the same
/// (fraction, repeat) so comparisons are paired.
StarvationResult run_starvation(const std::vector<ModelSpec>& variants,
                                const std::vector<double>& fractions,
                                int repeats, const Dataset& train_set,
                                const Dataset& test_set,
                                const TrainConfig& base_config);

// ---- convex-combination uncertainty probe ----

struct ProbeRow {
  int class_a = 0;
  int class_b = 0;
  double alpha = 0.0;
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

struct ProbeResult {
  std::vector<double> alphas;
  std::vector<ProbeRow> rows;  // |pairs| x |alphas|
  // Per-alpha averages across pairs.
  std::vector<double> mean_total;
  std::vector<double> mean_aleatoric;
  std::vector<double> mean_epistemic;
};

/// All 45 unordered digit pairs (a < b).
std::vector<std::pair<int, int>> all_digit_pairs();

/// For each pair, takes the first test image of each class (by dataset
/// index), sweeps the convex combination over the alpha grid and
/// decomposes the predictive uncertainty of an mc_eval-member ensemble.
ProbeResult run_uq_probe(Model& model, const Dataset& test_set,
                         const std::vector<std::pair<int, int>>& pairs,
                         int samples, std::uint64_t seed,
                         std::vector<double> alphas = {});

// ---- machine-readable outputs ----

void write_run_csv(const RunRecord& record, const std::string& path);
std::string config_snapshot_json(const RunRecord& record,
                                 const std::string& dataset_metadata_json);
void write_text_file(const std::string& path, const std::string& contents);

void write_predictions_csv(const Tensor& probs, const std::vector<int>& labels,
                           const std::string& path);
std::pair<Tensor, std::vector<int>> read_predictions_csv(
    const std::string& path);

void write_starvation_csv(const StarvationResult& result,
                          const std::string& path);
void write_probe_csv(const ProbeResult& result, const std::string& path);
void write_probe_summary_csv(const ProbeResult& result,
                             const std::string& path);
void write_calibration_csv(const CalibrationReport& report,
                           const std::string& path);

}  // namespace btcnn
