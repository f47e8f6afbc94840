#include "icsc/nn/checkpoint.hpp"

#include <fstream>

#include "icsc/error.hpp"
#include "icsc/serialize.hpp"

namespace icsc::nn {

using nlohmann::json;

namespace {

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
}

}  // namespace

json model_config_to_json(const ModelConfig& cfg) {
  json blocks = json::array();
  for (const auto& b : cfg.conv_blocks) blocks.push_back({{"channels", b.channels}, {"pool", b.pool}});
  return json{{"input_channels", cfg.input_channels}, {"input_height", cfg.input_height},
              {"input_width", cfg.input_width},       {"kernel_size", cfg.kernel_size},
              {"conv_blocks", blocks},                {"dense_widths", cfg.dense_widths},
              {"output_size", cfg.output_size},       {"head_init_gain", cfg.head_init_gain}};
}

ModelConfig model_config_from_json(const json& j) {
  reject_unknown_keys(j,
                 {"input_channels", "input_height", "input_width", "kernel_size", "conv_blocks",
                  "dense_widths", "output_size", "head_init_gain"},
                 "model config");
  ModelConfig cfg;
  cfg.input_channels = j.value("input_channels", cfg.input_channels);
  cfg.input_height = j.value("input_height", cfg.input_height);
  cfg.input_width = j.value("input_width", cfg.input_width);
  cfg.kernel_size = j.value("kernel_size", cfg.kernel_size);
  if (j.contains("conv_blocks")) {
    cfg.conv_blocks.clear();
    for (const auto& b : j.at("conv_blocks")) {
      reject_unknown_keys(b, {"channels", "pool"}, "conv block");
      cfg.conv_blocks.push_back({b.at("channels").get<int>(), b.value("pool", true)});
    }
  }
  cfg.dense_widths = j.value("dense_widths", cfg.dense_widths);
  cfg.output_size = j.value("output_size", cfg.output_size);
  cfg.head_init_gain = j.value("head_init_gain", cfg.head_init_gain);
  cfg.validate();
  return cfg;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json params = json::array();
  for (const auto& p : ckpt.model.params) {
    json e = tensor_to_json(p.value);
    e["name"] = p.name;
    params.push_back(std::move(e));
  }
  json m = json::array();
  json v = json::array();
  for (const auto& t : ckpt.adam.m) m.push_back(tensor_to_json(t));
  for (const auto& t : ckpt.adam.v) v.push_back(tensor_to_json(t));

  const json doc{
      {"format", "icsc-pose-checkpoint"},
      {"version", kCheckpointVersion},
      {"seed", ckpt.seed},
      {"loss", ckpt.loss},
      {"epoch", ckpt.epoch},
      {"model_config", model_config_to_json(ckpt.model.config)},
      {"parameters", params},
      {"log_variances",
       {{"s_x", ckpt.log_var.s_x}, {"s_q", ckpt.log_var.s_q}, {"s_c", ckpt.log_var.s_c}}},
      {"adam",
       {{"lr", ckpt.adam.lr},
        {"beta1", ckpt.adam.beta1},
        {"beta2", ckpt.adam.beta2},
        {"eps", ckpt.adam.eps},
        {"step", ckpt.adam.step},
        {"m", m},
        {"v", v}}}};

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + tmp.string());
    out << doc.dump() << '\n';
    if (!out) throw IoError("failed writing checkpoint: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place: " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format") != "icsc-pose-checkpoint") throw IoError("not a checkpoint: " + path.string());
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw IoError("unsupported checkpoint version in " + path.string());
    }
    Checkpoint ck;
    ck.seed = doc.at("seed").get<std::uint64_t>();
    ck.loss = doc.at("loss").get<std::string>();
    ck.epoch = doc.at("epoch").get<int>();
    ck.model.config = model_config_from_json(doc.at("model_config"));
    for (const auto& e : doc.at("parameters")) {
      ck.model.params.push_back({e.at("name").get<std::string>(), tensor_from_json(e)});
    }
    const Model reference = init_parameters(ck.model.config, 0);
    if (reference.params.size() != ck.model.params.size()) {
      throw IoError("checkpoint parameter count does not match its model config: " + path.string());
    }
    for (std::size_t i = 0; i < reference.params.size(); ++i) {
      if (reference.params[i].value.shape() != ck.model.params[i].value.shape()) {
        throw IoError("checkpoint parameter '" + ck.model.params[i].name + "' has wrong shape");
      }
    }
    const auto& lv = doc.at("log_variances");
    ck.log_var = {lv.at("s_x").get<double>(), lv.at("s_q").get<double>(), lv.at("s_c").get<double>()};
    const auto& a = doc.at("adam");
    ck.adam.lr = a.at("lr").get<double>();
    ck.adam.beta1 = a.at("beta1").get<double>();
    ck.adam.beta2 = a.at("beta2").get<double>();
    ck.adam.eps = a.at("eps").get<double>();
    ck.adam.step = a.at("step").get<std::uint64_t>();
    for (const auto& t : a.at("m")) ck.adam.m.push_back(tensor_from_json(t));
    for (const auto& t : a.at("v")) ck.adam.v.push_back(tensor_from_json(t));
    return ck;
  } catch (const json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  } catch (const UsageError& e) {
    throw IoError("invalid checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace icsc::nn
