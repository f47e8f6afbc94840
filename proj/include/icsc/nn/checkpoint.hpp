#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "icsc/losses.hpp"
#include "icsc/nn/adam.hpp"
#include "icsc/nn/model.hpp"

namespace icsc::nn {

inline constexpr int kCheckpointVersion = 1;

/// Everything needed to resume or evaluate a training run.
struct Checkpoint {
  Model model;
  AdamState adam;
  LogVariances log_var;
  std::uint64_t seed = 0;
  std::string loss = "icsc";
  int epoch = 0;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Rejects unknown keys; missing keys keep their defaults.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// JSON document; doubles are written in shortest round-trip form so
/// save/load is lossless.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace icsc::nn
