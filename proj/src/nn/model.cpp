#include "icsc/nn/model.hpp"

#include <cmath>

#include "icsc/error.hpp"
#include "icsc/nn/ops.hpp"
#include "icsc/random.hpp"

namespace icsc::nn {

void ModelConfig::validate() const {
  if (input_channels < 1 || input_height < 1 || input_width < 1) {
    throw UsageError("model input dimensions must be positive");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw UsageError("kernel_size must be odd");
  if (output_size != 7) throw UsageError("output_size must be exactly 7 (position + quaternion)");
  int h = input_height;
  int w = input_width;
  for (const auto& b : conv_blocks) {
    if (b.channels < 1) throw UsageError("conv block channels must be positive");
    if (b.pool) {
      h /= 2;
      w /= 2;
      if (h < 1 || w < 1) throw UsageError("pooling schedule shrinks the feature map to zero");
    }
  }
  for (int d : dense_widths) {
    if (d < 1) throw UsageError("dense widths must be positive");
  }
  if (!(head_init_gain >= 0.0 && head_init_gain <= 1.0)) throw UsageError("head_init_gain must lie in [0, 1]");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  g.reserve(model.params.size());
  for (const auto& p : model.params) g.emplace_back(p.value.shape());
  return g;
}

Model init_parameters(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model model;
  model.config = config;
  Rng rng(seed);

  auto add_uniform = [&](std::string name, Shape shape, std::size_t fan_in, double gain = 1.0) {
    Tensor t(std::move(shape));
    const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = uniform(rng, -limit, limit);
    model.params.push_back({std::move(name), std::move(t)});
  };
  auto add_zero = [&](std::string name, Shape shape) {
    model.params.push_back({std::move(name), Tensor(std::move(shape))});
  };

  const auto k = static_cast<std::size_t>(config.kernel_size);
  std::size_t channels = static_cast<std::size_t>(config.input_channels);
  std::size_t h = static_cast<std::size_t>(config.input_height);
  std::size_t w = static_cast<std::size_t>(config.input_width);
  for (std::size_t i = 0; i < config.conv_blocks.size(); ++i) {
    const auto oc = static_cast<std::size_t>(config.conv_blocks[i].channels);
    const std::string prefix = "conv" + std::to_string(i);
    add_uniform(prefix + ".weight", {oc, channels, k, k}, channels * k * k);
    add_zero(prefix + ".bias", {oc});
    channels = oc;
    if (config.conv_blocks[i].pool) {
      h /= 2;
      w /= 2;
    }
  }
  std::size_t features = channels * h * w;
  for (std::size_t i = 0; i < config.dense_widths.size(); ++i) {
    const auto width = static_cast<std::size_t>(config.dense_widths[i]);
    const std::string prefix = "dense" + std::to_string(i);
    add_uniform(prefix + ".weight", {width, features}, features);
    add_zero(prefix + ".bias", {width});
    features = width;
  }
  add_uniform("head.weight", {7, features}, features, config.head_init_gain);
  const Quat mean_view = quat_from_yaw_tilt(20.0, -18.0);
  Tensor head_bias({7}, std::vector<double>{kBoundaryCentre[0], kBoundaryCentre[1],
                                           kBoundaryCentre[2], mean_view.w, mean_view.x,
                                           mean_view.y, mean_view.z});
  model.params.push_back({"head.bias", std::move(head_bias)});
  return model;
}

Var forward(const Model& model, Tape& tape, const Tensor& image, Gradients* grads) {
  const ModelConfig& cfg = model.config;
  const Shape expected{static_cast<std::size_t>(cfg.input_channels),
                       static_cast<std::size_t>(cfg.input_height),
                       static_cast<std::size_t>(cfg.input_width)};
  if (image.shape() != expected) {
    throw UsageError("input image shape " + shape_string(image.shape()) +
                     " does not match model input " + shape_string(expected));
  }
  if (grads != nullptr && grads->size() != model.params.size()) {
    throw UsageError("gradient buffer count does not match the model");
  }
  std::size_t next = 0;
  auto param = [&]() {
    Tensor* sink = grads != nullptr ? &(*grads)[next] : nullptr;
    return tape.parameter(model.params.at(next++).value, sink);
  };

  Var x = tape.constant(image);
  for (const auto& block : cfg.conv_blocks) {
    const Var wt = param();
    const Var b = param();
    x = relu(tape, conv2d(tape, x, wt, b));
    if (block.pool) x = maxpool2(tape, x);
  }
  x = flatten(tape, x);
  for (std::size_t i = 0; i < cfg.dense_widths.size(); ++i) {
    const Var wt = param();
    const Var b = param();
    x = relu(tape, dense(tape, x, wt, b));
  }
  const Var wt = param();
  const Var b = param();
  return dense(tape, x, wt, b);
}

PoseVector predict(const Model& model, const Tensor& image) {
  Tape tape;
  const Var out = forward(model, tape, image, nullptr);
  const Tensor& v = tape.value(out);
  PoseVector p{};
  for (std::size_t i = 0; i < 7; ++i) p[i] = v[i];
  return p;
}

}  // namespace icsc::nn
