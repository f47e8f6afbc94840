#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "icsc/dataset.hpp"
#include "icsc/losses.hpp"
#include "icsc/nn/checkpoint.hpp"
#include "icsc/nn/model.hpp"

namespace icsc {

struct TrainConfig {
  std::filesystem::path dataset;  // directory holding manifest.jsonl
  std::filesystem::path out_dir;  // checkpoints and train_log.jsonl
  LossSpec loss{};
  int epochs = 200;
  int batch_size = 25;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  nn::ModelConfig model{};
  int checkpoint_every = 0;   // extra epoch-N checkpoints; 0 keeps only best and last
  int validate_every = 1;     // validation pass cadence in epochs; 0 disables it
  std::size_t subset = 0;     // first N training records; 0 = all
  std::size_t max_steps = 0;  // stop after this many optimizer steps; 0 = no limit
  int jobs = 1;

  void validate() const;
};

/// Full-pass loss over a set of images at fixed parameters.
struct SetLoss {
  double total = 0.0;
  double l_x = 0.0;
  double l_q = 0.0;
  double l_c = 0.0;
  /// l_x + l_q (+ l_c for icsc), independent of the weighting.
  double component_sum = 0.0;
};

struct TrainResult {
  std::size_t steps = 0;
  int epochs_run = 0;
  SetLoss initial_train;
  SetLoss final_train;
  LogVariances final_log_var;
  /// Per component: min over steps of s minus log(min observed batch loss).
  /// The invariant requires every entry >= -5.
  std::array<double, 3> log_var_margin{0.0, 0.0, 0.0};
  bool log_var_bounded = true;
  int best_epoch = 0;
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log_path;
};

/// Images of `records`, resized and normalised for the model.
std::vector<nn::Tensor> load_inputs(const std::filesystem::path& dataset_dir,
                                    const std::vector<const ManifestRecord*>& records,
                                    const nn::ModelConfig& model);

SetLoss evaluate_set_loss(const nn::Model& model, const LogVariances& log_var, const LossSpec& spec,
                          const std::vector<nn::Tensor>& inputs, const std::vector<Pose>& truths, int jobs = 1);

/// Seeded mini-batch ADAM training. Writes best.ckpt.json (best validation
/// total, or best training total without a validation split), last.ckpt.json
/// and a JSONL log. Throws NumericError on a non-finite loss.
TrainResult train(const TrainConfig& config);

struct ImageError {
  std::size_t index = 0;
  std::string filename;
  PoseVector prediction{};
  double position_error = 0.0;  // metres
  double angular_error = 0.0;   // degrees
};

struct Aggregate {
  double median = 0.0;  // lower middle for even counts
  double mae = 0.0;
  double rmse = 0.0;
  double max = 0.0;
};

Aggregate aggregate(std::vector<double> values);

struct MetricsReport {
  std::string loss;
  std::string dataset;  // content hash of the manifest
  std::string split;
  std::uint64_t seed = 0;
  std::vector<ImageError> per_image;
  Aggregate position;
  Aggregate orientation;
};

/// Scores arbitrary predictions (one per record, same order).
MetricsReport evaluate_predictions(const std::vector<const ManifestRecord*>& records,
                                   const std::vector<PoseVector>& predictions);

MetricsReport evaluate(const nn::Checkpoint& ckpt, const std::filesystem::path& dataset_dir,
                       const std::string& split, int jobs = 1);

std::string dataset_identifier(const std::filesystem::path& manifest_path);

std::string metrics_json(const MetricsReport& r);
std::string metrics_table(const std::vector<MetricsReport>& rows);
std::string predictions_jsonl(const MetricsReport& r);

struct ComparisonRun {
  std::uint64_t seed = 0;
  MetricsReport learnable;
  MetricsReport icsc;
};

struct ComparisonReport {
  std::vector<ComparisonRun> runs;
  Aggregate mean_learnable_position, mean_icsc_position;
  Aggregate mean_learnable_orientation, mean_icsc_orientation;
  /// Mean-of-seeds median position error: icsc <= learnable.
  bool icsc_not_worse() const;
};

/// Trains the learnable and icsc variants of `base` for each seed on the same
/// data and evaluates both on `test_dataset`. Runs go to base.out_dir/seed<k>/<loss>.
ComparisonReport compare_losses(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                 const std::filesystem::path& test_dataset, const std::string& test_split = "all",
                                 const std::function<void(const std::string&)>& progress = {});

std::string comparison_json(const ComparisonReport& r);
std::string comparison_table(const ComparisonReport& r);

}  // namespace icsc
