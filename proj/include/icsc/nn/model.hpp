#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "icsc/losses.hpp"
#include "icsc/nn/tape.hpp"

namespace icsc::nn {

struct ConvBlock {
  int channels = 8;
  bool pool = true;  // 2x2 max pool after the activation
};

/// Small convolutional pose regressor: conv blocks (conv, ReLU, optional
/// pool), flatten, ReLU dense layers, then a linear 7-way regression head.
struct ModelConfig {
  int input_channels = 3;
  int input_height = 64;
  int input_width = 64;
  int kernel_size = 3;
  std::vector<ConvBlock> conv_blocks{{8, true}, {16, true}, {32, true}, {32, true}, {32, true}};
  std::vector<int> dense_widths{64};
  int output_size = 7;
  // Multiplies the fan-in-scaled range of the output layer's weights.
  double head_init_gain = 0.01;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

inline bool operator==(const ConvBlock& a, const ConvBlock& b) {
  return a.channels == b.channels && a.pool == b.pool;
}

struct Parameter {
  std::string name;
  Tensor value;
};

struct Model {
  ModelConfig config;
  std::vector<Parameter> params;

  std::size_t parameter_count() const;
};

/// Parameter-shaped gradient accumulators.
using Gradients = std::vector<Tensor>;

Gradients zero_gradients(const Model& model);

/// Centre of the training boundary; the position head bias starts here.
inline constexpr std::array<double, 3> kBoundaryCentre{7.0, -7.25, 6.75};

/// Fan-in scaled uniform weights in +-sqrt(6 / fan_in), zero hidden biases,
/// head bias at the boundary centre and the mean pan/tilt orientation.
Model init_parameters(const ModelConfig& config, std::uint64_t seed);

/// Records the network on `tape`. Gradients flow into `grads` if non-null.
Var forward(const Model& model, Tape& tape, const Tensor& image, Gradients* grads);

/// Inference only.
PoseVector predict(const Model& model, const Tensor& image);

}  // namespace icsc::nn
