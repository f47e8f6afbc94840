// icsc_pose: dataset generation, training, evaluation and diagnostics.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icsc/config.hpp"
#include "icsc/error.hpp"
#include "icsc/gradcheck.hpp"
#include "icsc/harness.hpp"
#include "icsc/image.hpp"
#include "icsc/serialize.hpp"

namespace {

using namespace icsc;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct Common {
  std::string config = "default";
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file, or 'default'");
  cmd->add_option("--seed", c.seed, "seed (falls back to ICSC_POSE_SEED, then the config)");
  cmd->add_option("--jobs", c.jobs, "worker thread cap")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "output directory");
}

// --seed, else ICSC_POSE_SEED, else the config value.
std::uint64_t resolve_seed(const Common& c, std::uint64_t from_config) {
  if (c.seed) return *c.seed;
  if (const char* env = std::getenv("ICSC_POSE_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return v;
    } catch (const std::exception&) {
      throw UsageError(std::string("ICSC_POSE_SEED is not an unsigned integer: ") + env);
    }
  }
  return from_config;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

// gen-dataset ---------------------------------------------------------------

struct GenArgs {
  Common common;
  std::optional<std::size_t> count;
  std::optional<std::size_t> split;
  bool test = false;
};

int cmd_gen_dataset(const GenArgs& a) {
  const ExperimentConfig cfg = load_experiment(a.common.config);
  DatasetConfig d = a.test ? test_dataset_config(cfg) : dataset_config(cfg);
  std::filesystem::path out = a.test ? cfg.evaluation.test_path : cfg.dataset.path;
  if (a.common.out) out = *a.common.out;
  d.seed = resolve_seed(a.common, d.seed);
  if (a.count) {
    d.count = *a.count;
    if (!a.split && d.train_count > d.count) d.train_count = d.count;
  }
  if (a.split) d.train_count = *a.split;
  d.validate();

  const Manifest m = generate_dataset(d, out, a.common.jobs.value_or(cfg.dataset.jobs));
  std::printf("dataset: %s\n", out.string().c_str());
  std::printf("images: %zu (train %zu, val %zu)\n", m.records.size(), d.train_count, d.count - d.train_count);
  std::printf("seed: %llu\n", static_cast<unsigned long long>(d.seed));
  std::printf("resamples: %zu\n", m.total_resamples);
  std::printf("bounds: %s\n", to_json(d.bounds).dump().c_str());
  std::printf("identifier: %s\n", dataset_identifier(out / "manifest.jsonl").c_str());
  return kExitOk;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::optional<std::string> dataset;
  std::optional<std::string> loss;
  std::optional<double> beta;
  std::optional<int> epochs;
  std::optional<std::size_t> subset;
  std::optional<std::size_t> max_steps;
  std::optional<int> batch_size;
  std::optional<double> lr;
  std::optional<int> validate_every;
};

TrainConfig train_config_from(const ExperimentConfig& cfg, const TrainArgs& a) {
  TrainConfig t = train_config(cfg);
  t.seed = resolve_seed(a.common, t.seed);
  if (a.dataset) t.dataset = *a.dataset;
  if (a.common.out) t.out_dir = *a.common.out;
  if (a.common.jobs) t.jobs = *a.common.jobs;
  if (a.loss) t.loss.kind = parse_loss_kind(*a.loss);
  if (a.beta) t.loss.beta.beta = *a.beta;
  if (a.epochs) t.epochs = *a.epochs;
  if (a.subset) t.subset = *a.subset;
  if (a.max_steps) t.max_steps = *a.max_steps;
  if (a.batch_size) t.batch_size = *a.batch_size;
  if (a.lr) t.lr = *a.lr;
  if (a.validate_every) t.validate_every = *a.validate_every;
  return t;
}

int cmd_train(const TrainArgs& a) {
  const ExperimentConfig cfg = load_experiment(a.common.config);
  const TrainConfig t = train_config_from(cfg, a);
  const TrainResult r = train(t);
  std::printf("loss: %s\n", to_string(t.loss.kind));
  std::printf("seed: %llu\n", static_cast<unsigned long long>(t.seed));
  std::printf("steps: %zu over %d epochs\n", r.steps, r.epochs_run);
  std::printf("train loss: %.6g -> %.6g\n", r.initial_train.total, r.final_train.total);
  std::printf("train component sum: %.6g -> %.6g\n", r.initial_train.component_sum, r.final_train.component_sum);
  std::printf("s: (%.6g, %.6g, %.6g)\n", r.final_log_var.s_x, r.final_log_var.s_q, r.final_log_var.s_c);
  std::printf("best checkpoint: %s (epoch %d)\n", r.best_checkpoint.string().c_str(), r.best_epoch);
  std::printf("last checkpoint: %s\n", r.last_checkpoint.string().c_str());
  std::printf("log: %s\n", r.log_path.string().c_str());
  return kExitOk;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string checkpoint;
  std::optional<std::string> dataset;
  std::optional<std::string> split;
  std::optional<std::string> predictions;
  bool oracle = false;
};

int cmd_eval(const EvalArgs& a) {
  const ExperimentConfig cfg = load_experiment(a.common.config);
  const std::filesystem::path dataset = a.dataset ? std::filesystem::path(*a.dataset) : cfg.evaluation.test_path;
  const std::string split = a.split.value_or(cfg.evaluation.split);
  MetricsReport report;
  if (a.oracle) {
    const Manifest m = read_manifest(dataset / "manifest.jsonl");
    const auto records = select_split(m, split);
    std::vector<PoseVector> truth;
    for (const auto* r : records) truth.push_back(to_vector(r->pose));
    report = evaluate_predictions(records, truth);
    report.loss = "oracle";
    report.split = split;
    report.dataset = dataset_identifier(dataset / "manifest.jsonl");
  } else {
    if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint (or --oracle)");
    report = evaluate(nn::load_checkpoint(a.checkpoint), dataset, split, a.common.jobs.value_or(cfg.training.jobs));
  }
  if (a.common.out) write_file(std::filesystem::path(*a.common.out) / "metrics.json", metrics_json(report));
  if (a.predictions) write_file(*a.predictions, predictions_jsonl(report));
  std::printf("dataset: %s (%s, split %s, %zu images)\n", dataset.string().c_str(), report.dataset.c_str(),
              split.c_str(), report.per_image.size());
  std::fputs(metrics_table({report}).c_str(), stdout);
  return kExitOk;
}

// overlay -------------------------------------------------------------------

struct OverlayArgs {
  Common common;
  std::string checkpoint;
  std::optional<std::string> dataset;
  std::vector<std::size_t> indices;
  std::optional<std::string> image;
  std::optional<int> worst;
  bool ground_truth = false;
};

Pose pose_of(const PoseVector& v) {
  Pose p = from_vector(v);
  p.orientation = quat_normalize(p.orientation);
  return p;
}

int cmd_overlay(const OverlayArgs& a) {
  const ExperimentConfig cfg = load_experiment(a.common.config);
  const std::filesystem::path out = a.common.out.value_or("overlays");
  std::optional<nn::Checkpoint> ck;
  if (!a.checkpoint.empty()) ck = nn::load_checkpoint(a.checkpoint);
  auto predict_pose = [&](const Image& img) {
    if (!ck) throw UsageError("overlay needs --checkpoint unless --ground-truth is given");
    return pose_of(nn::predict(ck->model, to_network_input(img, ck->model.config.input_width,
                                                           ck->model.config.input_height)));
  };

  if (a.image) {
    if (a.ground_truth) throw UsageError("--ground-truth needs a dataset image, not --image");
    const Image img = read_png(*a.image);
    const Pose p = predict_pose(img);
    const auto path = out / (std::filesystem::path(*a.image).stem().string() + "_overlay.png");
    std::filesystem::create_directories(out);
    write_png(render_overlay(img, p, cfg.intrinsics, cfg.scene), path);
    std::printf("%s\n", path.string().c_str());
    return kExitOk;
  }

  const std::filesystem::path dataset = a.dataset ? std::filesystem::path(*a.dataset) : cfg.evaluation.test_path;
  const Manifest m = read_manifest(dataset / "manifest.jsonl");
  const auto all = select_split(m, "all");
  std::vector<const ManifestRecord*> chosen;
  if (a.worst) {
    if (a.ground_truth || !ck) throw UsageError("--worst ranks predicted errors and needs --checkpoint");
    MetricsReport r = evaluate(*ck, dataset, cfg.evaluation.split, a.common.jobs.value_or(cfg.training.jobs));
    std::stable_sort(r.per_image.begin(), r.per_image.end(),
                     [](const ImageError& x, const ImageError& y) { return x.position_error > y.position_error; });
    for (int k = 0; k < *a.worst && k < static_cast<int>(r.per_image.size()); ++k) {
      chosen.push_back(all.at(r.per_image[static_cast<std::size_t>(k)].index));
    }
  } else {
    if (a.indices.empty()) throw UsageError("overlay needs --index, --worst or --image");
    for (std::size_t i : a.indices) {
      if (i >= all.size()) throw UsageError("index " + std::to_string(i) + " is outside the dataset");
      chosen.push_back(all[i]);
    }
  }

  std::filesystem::create_directories(out);
  for (const auto* rec : chosen) {
    const Image img = read_png(dataset / rec->filename);
    const Pose p = a.ground_truth ? rec->pose : predict_pose(img);
    const double iou = silhouette_iou(fuselage_silhouette(rec->pose, m.config.intrinsics, m.config.scene),
                                      fuselage_silhouette(p, m.config.intrinsics, m.config.scene));
    char name[64];
    std::snprintf(name, sizeof name, "overlay_%06zu%s.png", rec->index, a.ground_truth ? "_gt" : "");
    write_png(render_overlay(img, p, m.config.intrinsics, m.config.scene), out / name);
    std::printf("%s  index %zu  position error %.4f m  angular error %.4f deg  silhouette IoU %.4f\n",
                (out / name).string().c_str(), rec->index, norm(p.position - rec->pose.position),
                angular_error(rec->pose.orientation, p.orientation), iou);
  }
  return kExitOk;
}

// gradcheck -----------------------------------------------------------------

struct GradcheckArgs {
  Common common;
  std::string scope = "all";
  std::string inject_fault;
  int points = 100;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  GradcheckOptions o;
  o.scope = parse_gradcheck_scope(a.scope);
  o.seed = resolve_seed(a.common, 1);
  o.points = a.points;
  o.inject_fault = a.inject_fault;
  const GradcheckReport r = run_gradcheck(o);
  std::fputs(r.table().c_str(), stdout);
  std::printf("%s\n", r.passed() ? "gradcheck: pass" : "gradcheck: FAIL");
  return r.passed() ? kExitOk : kExitCheckFailed;
}

// compare -------------------------------------------------------------------

struct CompareArgs {
  TrainArgs train;
  std::optional<std::string> test_dataset;
  std::optional<std::string> split;
  std::optional<std::vector<std::uint64_t>> seeds;
};

int cmd_compare(const CompareArgs& a) {
  const ExperimentConfig cfg = load_experiment(a.train.common.config);
  TrainArgs ta = a.train;
  ta.common.out.reset();
  TrainConfig base = train_config_from(cfg, ta);
  base.out_dir = a.train.common.out.value_or(cfg.evaluation.compare_out.string());
  std::vector<std::uint64_t> seeds = a.seeds.value_or(cfg.evaluation.seeds);
  const std::filesystem::path test = a.test_dataset ? std::filesystem::path(*a.test_dataset) : cfg.evaluation.test_path;
  const ComparisonReport r = compare_losses(base, seeds, test, a.split.value_or(cfg.evaluation.split),
                                            [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
  write_file(base.out_dir / "comparison.json", comparison_json(r));
  std::fputs(comparison_table(r).c_str(), stdout);
  std::printf("icsc median position error %s learnable baseline\n", r.icsc_not_worse() ? "<=" : ">");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Camera pose regression with the image centre scene coordinate loss"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "render a labelled synthetic dataset");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--count", gen.count, "number of images");
  gen_cmd->add_option("--split", gen.split, "number of training images; the rest are validation");
  gen_cmd->add_flag("--test", gen.test, "generate the held-out test set of the config");

  TrainArgs tr;
  auto add_train_options = [](CLI::App* cmd, TrainArgs& t) {
    add_common(cmd, t.common);
    cmd->add_option("--dataset", t.dataset, "dataset directory");
    cmd->add_option("--loss", t.loss, "beta, learnable or icsc");
    cmd->add_option("--beta", t.beta, "orientation weight of the beta loss");
    cmd->add_option("--epochs", t.epochs, "epochs");
    cmd->add_option("--subset", t.subset, "use only the first N training images");
    cmd->add_option("--max-steps", t.max_steps, "stop after N optimizer steps");
    cmd->add_option("--batch-size", t.batch_size, "mini-batch size");
    cmd->add_option("--lr", t.lr, "learning rate");
    cmd->add_option("--validate-every", t.validate_every, "validation cadence in epochs; 0 disables it");
  };
  auto* train_cmd = app.add_subcommand("train", "train a pose regressor");
  add_train_options(train_cmd, tr);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint file");
  eval_cmd->add_option("--dataset", ev.dataset, "dataset directory (default: the config's test set)");
  eval_cmd->add_option("--split", ev.split, "all, train or val");
  eval_cmd->add_option("--predictions", ev.predictions, "write per-image predictions (JSONL)");
  eval_cmd->add_flag("--oracle", ev.oracle, "score the ground-truth labels instead of a checkpoint");

  OverlayArgs ov;
  auto* overlay_cmd = app.add_subcommand("overlay", "draw the predicted fuselage over images");
  add_common(overlay_cmd, ov.common);
  overlay_cmd->add_option("--checkpoint", ov.checkpoint, "checkpoint file");
  overlay_cmd->add_option("--dataset", ov.dataset, "dataset directory (default: the config's test set)");
  overlay_cmd->add_option("--index", ov.indices, "dataset record index (repeatable)");
  overlay_cmd->add_option("--image", ov.image, "arbitrary PNG image");
  overlay_cmd->add_option("--worst", ov.worst, "overlay the N largest position errors")->check(CLI::PositiveNumber);
  overlay_cmd->add_flag("--ground-truth", ov.ground_truth, "use the label pose instead of a prediction");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  add_common(gc_cmd, gc.common);
  gc_cmd->add_option("--scope", gc.scope, "all, geometry, losses or nn");
  gc_cmd->add_option("--points", gc.points, "random points per component")->check(CLI::PositiveNumber);
  gc_cmd->add_option("--inject-fault", gc.inject_fault, "scale one component's analytic gradient by 1.01");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "train learnable and icsc variants over several seeds");
  add_train_options(cmp_cmd, cmp.train);
  cmp_cmd->add_option("--test-dataset", cmp.test_dataset, "held-out dataset directory");
  cmp_cmd->add_option("--split", cmp.split, "split of the held-out dataset");
  cmp_cmd->add_option("--seeds", cmp.seeds, "training seeds")->delimiter(',');

  auto* config_cmd = app.add_subcommand("config", "configuration utilities");
  config_cmd->require_subcommand(1);
  auto* dump_cmd = config_cmd->add_subcommand("dump-defaults", "print the default experiment config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_dataset(gen);
    if (train_cmd->parsed()) return cmd_train(tr);
    if (eval_cmd->parsed()) return cmd_eval(ev);
    if (overlay_cmd->parsed()) return cmd_overlay(ov);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc);
    if (cmp_cmd->parsed()) return cmd_compare(cmp);
    if (dump_cmd->parsed()) {
      std::fputs(dump_experiment(ExperimentConfig{}).c_str(), stdout);
      return kExitOk;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitCheckFailed;
  }
  return kExitUsage;
}
