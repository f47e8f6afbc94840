#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "icsc/dataset.hpp"
#include "icsc/harness.hpp"

namespace icsc {

inline constexpr const char* kConfigSchema = "icsc-pose-experiment/1";

struct DatasetSection {
  std::filesystem::path path = "data/train";
  std::size_t count = 2200;
  std::size_t train_count = 2000;
  std::uint64_t seed = 7;
  int jobs = 1;
};

struct TrainingSection {
  std::filesystem::path out = "runs/train";
  LossKind loss = LossKind::kIcsc;
  double beta = 500.0;
  int epochs = 200;
  int batch_size = 25;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  int checkpoint_every = 0;
  int validate_every = 1;
  std::size_t subset = 0;
  std::size_t max_steps = 0;
  int jobs = 1;
};

struct EvaluationSection {
  std::filesystem::path test_path = "data/test";  // held-out set with its own seed
  std::size_t test_count = 200;
  std::uint64_t test_seed = 1007;
  std::string split = "all";
  std::vector<std::uint64_t> seeds{1, 2, 3};  // compare runs
  std::filesystem::path compare_out = "runs/compare";
  int worst = 4;  // overlays of the largest position errors
};

/// Every tunable of an experiment; a document only needs the keys it changes.
struct ExperimentConfig {
  SceneGeometry scene{};
  RandomizationBounds bounds{};
  CameraIntrinsics intrinsics{};
  DatasetSection dataset{};
  nn::ModelConfig model{};
  TrainingSection training{};
  EvaluationSection evaluation{};

  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Starts from defaults and applies the keys present. Unknown keys, a wrong
/// schema and ill-typed values throw UsageError.
ExperimentConfig experiment_from_json(const nlohmann::json& j);

/// "default" (or an empty path) gives the built-in defaults.
ExperimentConfig load_experiment(const std::string& path);

/// Pretty-printed document of `c`, schema field first.
std::string dump_experiment(const ExperimentConfig& c);

DatasetConfig dataset_config(const ExperimentConfig& c);
/// Dataset configuration of the held-out test set.
DatasetConfig test_dataset_config(const ExperimentConfig& c);
TrainConfig train_config(const ExperimentConfig& c);

}  // namespace icsc
