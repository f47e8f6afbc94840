#include "icsc/config.hpp"

#include <fstream>
#include <sstream>

#include "icsc/error.hpp"
#include "icsc/serialize.hpp"

namespace icsc {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError("bad value for '" + std::string(key) + "' in " + where);
  }
}

void read_path(const json& j, const char* key, std::filesystem::path& out, const std::string& where) {
  std::string s = out.string();
  read(j, key, s, where);
  out = s;
}

void check_jobs(int jobs, const char* where) {
  if (jobs < 1) throw UsageError(std::string(where) + " jobs must be at least 1");
}

}  // namespace

void ExperimentConfig::validate() const {
  dataset_config(*this).validate();
  test_dataset_config(*this).validate();
  train_config(*this).validate();
  check_jobs(dataset.jobs, "dataset");
  if (evaluation.seeds.empty()) throw UsageError("evaluation seeds must not be empty");
  if (evaluation.worst < 0) throw UsageError("evaluation worst must be >= 0");
  if (evaluation.split != "all" && evaluation.split != "train" && evaluation.split != "val") {
    throw UsageError("evaluation split must be all, train or val");
  }
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"schema", kConfigSchema},
      {"scene", to_json(c.scene)},
      {"bounds", to_json(c.bounds)},
      {"intrinsics", to_json(c.intrinsics)},
      {"dataset",
       {{"path", c.dataset.path.string()},
        {"count", c.dataset.count},
        {"train_count", c.dataset.train_count},
        {"seed", c.dataset.seed},
        {"jobs", c.dataset.jobs}}},
      {"model", nn::model_config_to_json(c.model)},
      {"training",
       {{"out", c.training.out.string()},
        {"loss", to_string(c.training.loss)},
        {"beta", c.training.beta},
        {"epochs", c.training.epochs},
        {"batch_size", c.training.batch_size},
        {"lr", c.training.lr},
        {"seed", c.training.seed},
        {"checkpoint_every", c.training.checkpoint_every},
        {"validate_every", c.training.validate_every},
        {"subset", c.training.subset},
        {"max_steps", c.training.max_steps},
        {"jobs", c.training.jobs}}},
      {"evaluation",
       {{"test_path", c.evaluation.test_path.string()},
        {"test_count", c.evaluation.test_count},
        {"test_seed", c.evaluation.test_seed},
        {"split", c.evaluation.split},
        {"seeds", c.evaluation.seeds},
        {"compare_out", c.evaluation.compare_out.string()},
        {"worst", c.evaluation.worst}}}};
}

ExperimentConfig experiment_from_json(const json& j) {
  reject_unknown_keys(j, {"schema", "scene", "bounds", "intrinsics", "dataset", "model", "training", "evaluation"},
                      "experiment config");
  if (!j.contains("schema")) throw UsageError("experiment config lacks a 'schema' field");
  if (j.at("schema") != kConfigSchema) {
    throw UsageError("unsupported config schema " + j.at("schema").dump() + " (expected \"" + kConfigSchema + "\")");
  }
  ExperimentConfig c;
  if (j.contains("scene")) c.scene = scene_from_json(j.at("scene"));
  if (j.contains("bounds")) c.bounds = bounds_from_json(j.at("bounds"));
  if (j.contains("intrinsics")) c.intrinsics = intrinsics_from_json(j.at("intrinsics"));
  if (j.contains("model")) c.model = nn::model_config_from_json(j.at("model"));

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    const std::string where = "dataset";
    reject_unknown_keys(d, {"path", "count", "train_count", "seed", "jobs"}, where);
    read_path(d, "path", c.dataset.path, where);
    read(d, "count", c.dataset.count, where);
    read(d, "train_count", c.dataset.train_count, where);
    read(d, "seed", c.dataset.seed, where);
    read(d, "jobs", c.dataset.jobs, where);
  }
  if (j.contains("training")) {
    const json& t = j.at("training");
    const std::string where = "training";
    reject_unknown_keys(t,
                        {"out", "loss", "beta", "epochs", "batch_size", "lr", "seed", "checkpoint_every", "validate_every", "subset",
                         "max_steps", "jobs"},
                        where);
    read_path(t, "out", c.training.out, where);
    std::string loss = to_string(c.training.loss);
    read(t, "loss", loss, where);
    c.training.loss = parse_loss_kind(loss);
    read(t, "beta", c.training.beta, where);
    read(t, "epochs", c.training.epochs, where);
    read(t, "batch_size", c.training.batch_size, where);
    read(t, "lr", c.training.lr, where);
    read(t, "seed", c.training.seed, where);
    read(t, "checkpoint_every", c.training.checkpoint_every, where);
    read(t, "validate_every", c.training.validate_every, where);
    read(t, "subset", c.training.subset, where);
    read(t, "max_steps", c.training.max_steps, where);
    read(t, "jobs", c.training.jobs, where);
  }
  if (j.contains("evaluation")) {
    const json& e = j.at("evaluation");
    const std::string where = "evaluation";
    reject_unknown_keys(e, {"test_path", "test_count", "test_seed", "split", "seeds", "compare_out", "worst"}, where);
    read_path(e, "test_path", c.evaluation.test_path, where);
    read(e, "test_count", c.evaluation.test_count, where);
    read(e, "test_seed", c.evaluation.test_seed, where);
    read(e, "split", c.evaluation.split, where);
    read(e, "seeds", c.evaluation.seeds, where);
    read_path(e, "compare_out", c.evaluation.compare_out, where);
    read(e, "worst", c.evaluation.worst, where);
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment(const std::string& path) {
  if (path.empty() || path == "default") return ExperimentConfig{};
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

std::string dump_experiment(const ExperimentConfig& c) {
  const json j = to_json(c);
  ordered_json out;
  out["schema"] = j.at("schema");
  for (const char* section : {"scene", "bounds", "intrinsics", "dataset", "model", "training", "evaluation"}) {
    out[section] = j.at(section);
  }
  return out.dump(2) + "\n";
}

DatasetConfig dataset_config(const ExperimentConfig& c) {
  DatasetConfig d;
  d.bounds = c.bounds;
  d.scene = c.scene;
  d.intrinsics = c.intrinsics;
  d.count = c.dataset.count;
  d.train_count = c.dataset.train_count;
  d.seed = c.dataset.seed;
  return d;
}

DatasetConfig test_dataset_config(const ExperimentConfig& c) {
  DatasetConfig d = dataset_config(c);
  d.count = c.evaluation.test_count;
  d.train_count = 0;
  d.seed = c.evaluation.test_seed;
  return d;
}

TrainConfig train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.dataset = c.dataset.path;
  t.out_dir = c.training.out;
  t.loss.kind = c.training.loss;
  t.loss.beta = {c.training.beta};
  t.loss.cylinder = c.scene.cylinder;
  t.epochs = c.training.epochs;
  t.batch_size = c.training.batch_size;
  t.lr = c.training.lr;
  t.seed = c.training.seed;
  t.model = c.model;
  t.checkpoint_every = c.training.checkpoint_every;
  t.validate_every = c.training.validate_every;
  t.subset = c.training.subset;
  t.max_steps = c.training.max_steps;
  t.jobs = c.training.jobs;
  return t;
}

}  // namespace icsc
