#include "icsc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "icsc/error.hpp"
#include "icsc/image.hpp"
#include "icsc/random.hpp"
#include "icsc/nn/adam.hpp"

namespace icsc {

using nlohmann::ordered_json;

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads with a fixed striping;
// the first exception is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> threads;
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = static_cast<std::size_t>(w); i < n; i += static_cast<std::size_t>(workers)) fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

PoseVector output_of(const nn::Tape& tape, nn::Var out) {
  const nn::Tensor& v = tape.value(out);
  PoseVector p{};
  for (std::size_t i = 0; i < 7; ++i) p[i] = v[i];
  return p;
}

double component_sum(LossKind kind, double l_x, double l_q, double l_c) {
  return kind == LossKind::kIcsc ? l_x + l_q + l_c : l_x + l_q;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw UsageError("learning rate must be positive");
  if (jobs < 1) throw UsageError("jobs must be at least 1");
  if (checkpoint_every < 0) throw UsageError("checkpoint_every must be >= 0");
  if (validate_every < 0) throw UsageError("validate_every must be >= 0");
  if (loss.kind == LossKind::kBeta && !(loss.beta.beta > 0.0)) throw UsageError("beta must be positive");
  loss.cylinder.validate();
  model.validate();
}

std::vector<nn::Tensor> load_inputs(const std::filesystem::path& dataset_dir,
                                    const std::vector<const ManifestRecord*>& records,
                                    const nn::ModelConfig& model) {
  if (model.input_channels != 3) throw UsageError("dataset images are RGB; model input_channels must be 3");
  std::vector<nn::Tensor> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    out[i] = to_network_input(read_png(dataset_dir / records[i]->filename), model.input_width, model.input_height);
  }
  return out;
}

SetLoss evaluate_set_loss(const nn::Model& model, const LogVariances& log_var, const LossSpec& spec,
                          const std::vector<nn::Tensor>& inputs, const std::vector<Pose>& truths, int jobs) {
  if (inputs.size() != truths.size()) throw UsageError("inputs and labels differ in count");
  SetLoss s;
  if (inputs.empty()) return s;
  std::vector<LossBreakdown> items(inputs.size());
  parallel_for(inputs.size(), jobs, [&](std::size_t i) {
    items[i] = evaluate_loss(spec, {nn::predict(model, inputs[i]), truths[i], log_var});
  });
  for (const auto& b : items) {
    s.total += b.total;
    s.l_x += b.l_x;
    s.l_q += b.l_q;
    s.l_c += b.l_c;
  }
  const double n = static_cast<double>(inputs.size());
  s.total /= n;
  s.l_x /= n;
  s.l_q /= n;
  s.l_c /= n;
  s.component_sum = component_sum(spec.kind, s.l_x, s.l_q, s.l_c);
  return s;
}

TrainResult train(const TrainConfig& config) {
  config.validate();
  const auto wall_start = std::chrono::steady_clock::now();
  const Manifest manifest = read_manifest(config.dataset / "manifest.jsonl");
  const CylinderModel& cyl = manifest.config.scene.cylinder;
  if (cyl.r0 != config.loss.cylinder.r0 || cyl.h0 != config.loss.cylinder.h0) {
    throw UsageError("loss cylinder differs from the cylinder the dataset was rendered with");
  }

  std::vector<const ManifestRecord*> train_records = select_split(manifest, "train");
  if (config.subset > 0 && config.subset < train_records.size()) train_records.resize(config.subset);
  if (train_records.empty()) throw UsageError("dataset has no training records");
  std::vector<const ManifestRecord*> val_records;
  if (config.validate_every > 0) val_records = select_split(manifest, "val");

  const std::vector<nn::Tensor> train_inputs = load_inputs(config.dataset, train_records, config.model);
  const std::vector<nn::Tensor> val_inputs = load_inputs(config.dataset, val_records, config.model);
  std::vector<Pose> train_truth, val_truth;
  for (const auto* r : train_records) train_truth.push_back(r->pose);
  for (const auto* r : val_records) val_truth.push_back(r->pose);

  std::error_code ec;
  std::filesystem::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + config.out_dir.string() + ": " + ec.message());

  nn::Checkpoint ck;
  ck.model = nn::init_parameters(config.model, derive_seed(config.seed, 0));
  ck.seed = config.seed;
  ck.loss = to_string(config.loss.kind);

  // Log-variances are optimised alongside the network as one extra tensor.
  nn::Tensor log_var_t({3});
  std::vector<nn::Tensor> init_values;
  std::vector<nn::Tensor*> param_ptrs;
  std::vector<std::string> names;
  for (auto& p : ck.model.params) {
    init_values.push_back(p.value);
    param_ptrs.push_back(&p.value);
    names.push_back(p.name);
  }
  init_values.push_back(log_var_t);
  param_ptrs.push_back(&log_var_t);
  names.emplace_back("log_variances");
  ck.adam = nn::make_adam(init_values, config.lr);

  auto current_log_var = [&] { return LogVariances{log_var_t[0], log_var_t[1], log_var_t[2]}; };

  TrainResult result;
  result.log_path = config.out_dir / "train_log.jsonl";
  result.best_checkpoint = config.out_dir / "best.ckpt.json";
  result.last_checkpoint = config.out_dir / "last.ckpt.json";
  std::ofstream log(result.log_path, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError("cannot write training log " + result.log_path.string());

  result.initial_train =
      evaluate_set_loss(ck.model, current_log_var(), config.loss, train_inputs, train_truth, config.jobs);

  const std::size_t n = train_inputs.size();
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<nn::Gradients> item_grads(std::min(batch, n), nn::zero_gradients(ck.model));
  std::vector<LossBreakdown> item_loss(item_grads.size());
  std::vector<nn::Tensor> grads = nn::zero_gradients(ck.model);
  grads.emplace_back(nn::Shape{3});

  const bool learnable = config.loss.kind != LossKind::kBeta;
  const int active = config.loss.kind == LossKind::kIcsc ? 3 : (learnable ? 2 : 0);
  std::array<double, 3> min_s{0.0, 0.0, 0.0};
  std::array<double, 3> min_l{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                              std::numeric_limits<double>::infinity()};

  double best_score = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n);
  bool stop = false;
  for (int epoch = 1; epoch <= config.epochs && !stop; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(derive_seed(config.seed, 1), static_cast<std::uint64_t>(epoch)));
    shuffle(std::span<std::size_t>(order), shuffle_rng);

    double epoch_total = 0.0, epoch_lx = 0.0, epoch_lq = 0.0, epoch_lc = 0.0;
    std::size_t epoch_items = 0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      const double inv = 1.0 / static_cast<double>(count);
      const LogVariances lv = current_log_var();
      parallel_for(count, config.jobs, [&](std::size_t k) {
        const std::size_t idx = order[start + k];
        for (auto& g : item_grads[k]) g.fill(0.0);
        nn::Tape tape;
        const nn::Var out = nn::forward(ck.model, tape, train_inputs[idx], &item_grads[k]);
        item_loss[k] = evaluate_loss(config.loss, {output_of(tape, out), train_truth[idx], lv});
        std::vector<double> seed(7);
        for (std::size_t j = 0; j < 7; ++j) seed[j] = item_loss[k].grad_pred[j] * inv;
        tape.backward(out, seed);
      });

      double total = 0.0, lx = 0.0, lq = 0.0, lc = 0.0;
      std::array<double, 3> lv_grad{0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < count; ++k) {
        total += item_loss[k].total;
        lx += item_loss[k].l_x;
        lq += item_loss[k].l_q;
        lc += item_loss[k].l_c;
        for (int j = 0; j < 3; ++j) lv_grad[j] += item_loss[k].grad_log_var[j];
      }
      if (!std::isfinite(total)) {
        std::string idx;
        for (std::size_t k = 0; k < count; ++k) idx += (k ? "," : "") + std::to_string(train_records[order[start + k]]->index);
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(result.steps + 1) + "; batch record indices [" + idx + "]; s = (" +
                           fmt("%.6g", lv.s_x) + ", " + fmt("%.6g", lv.s_q) + ", " + fmt("%.6g", lv.s_c) + ")");
      }
      for (std::size_t p = 0; p + 1 < grads.size(); ++p) {
        nn::Tensor& g = grads[p];
        g.fill(0.0);
        for (std::size_t k = 0; k < count; ++k) {
          const nn::Tensor& src = item_grads[k][p];
          for (std::size_t e = 0; e < g.size(); ++e) g[e] += src[e];
        }
      }
      for (int j = 0; j < 3; ++j) grads.back()[static_cast<std::size_t>(j)] = lv_grad[j] * inv;
      nn::adam_step(ck.adam, param_ptrs, grads, names);
      ++result.steps;

      const std::array<double, 3> comp{lx * inv, lq * inv, lc * inv};
      const LogVariances after = current_log_var();
      const std::array<double, 3> s_now{after.s_x, after.s_q, after.s_c};
      for (int j = 0; j < active; ++j) {
        min_s[j] = std::min(min_s[j], s_now[j]);
        if (comp[j] > 0.0) min_l[j] = std::min(min_l[j], comp[j]);
      }
      epoch_total += total;
      epoch_lx += lx;
      epoch_lq += lq;
      epoch_lc += lc;
      epoch_items += count;
      if (config.max_steps > 0 && result.steps >= config.max_steps) {
        stop = true;
        break;
      }
    }
    result.epochs_run = epoch;

    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    const LogVariances lv = current_log_var();
    const double m = 1.0 / static_cast<double>(epoch_items);
    ordered_json train_line{{"epoch", epoch},
                            {"split", "train"},
                            {"steps", result.steps},
                            {"loss", epoch_total * m},
                            {"l_x", epoch_lx * m},
                            {"l_q", epoch_lq * m},
                            {"l_c", epoch_lc * m},
                            {"s_x", lv.s_x},
                            {"s_q", lv.s_q},
                            {"s_c", lv.s_c},
                            {"wall_time_s", wall}};
    log << train_line.dump() << '\n';

    double score = epoch_total * m;
    const bool validate = !val_inputs.empty() && (epoch % config.validate_every == 0 || epoch == config.epochs || stop);
    if (validate) {
      const SetLoss v = evaluate_set_loss(ck.model, lv, config.loss, val_inputs, val_truth, config.jobs);
      ordered_json val_line{{"epoch", epoch}, {"split", "val"}, {"steps", result.steps}, {"loss", v.total},
                            {"l_x", v.l_x},   {"l_q", v.l_q},    {"l_c", v.l_c},           {"s_x", lv.s_x},
                            {"s_q", lv.s_q},  {"s_c", lv.s_c},   {"wall_time_s", wall}};
      log << val_line.dump() << '\n';
      score = v.total;
    }
    log.flush();

    ck.log_var = lv;
    ck.epoch = epoch;
    if ((val_inputs.empty() || validate) && score < best_score) {
      best_score = score;
      result.best_epoch = epoch;
      nn::save_checkpoint(ck, result.best_checkpoint);
    }
    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0) {
      nn::save_checkpoint(ck, config.out_dir / ("epoch" + std::to_string(epoch) + ".ckpt.json"));
    }
  }
  nn::save_checkpoint(ck, result.last_checkpoint);
  if (!log) throw IoError("failed writing training log " + result.log_path.string());

  result.final_log_var = current_log_var();
  result.final_train =
      evaluate_set_loss(ck.model, result.final_log_var, config.loss, train_inputs, train_truth, config.jobs);
  for (int j = 0; j < active; ++j) {
    if (std::isfinite(min_l[j])) {
      result.log_var_margin[j] = min_s[j] - std::log(min_l[j]);
      if (result.log_var_margin[j] < -5.0) result.log_var_bounded = false;
    }
  }
  return result;
}

Aggregate aggregate(std::vector<double> values) {
  if (values.empty()) throw UsageError("cannot aggregate an empty set");
  Aggregate a;
  double abs_sum = 0.0, sq_sum = 0.0;
  for (double v : values) {
    abs_sum += std::abs(v);
    sq_sum += v * v;
    a.max = std::max(a.max, v);
  }
  const double n = static_cast<double>(values.size());
  a.mae = abs_sum / n;
  a.rmse = std::sqrt(sq_sum / n);
  std::sort(values.begin(), values.end());
  a.median = values[(values.size() - 1) / 2];
  return a;
}

MetricsReport evaluate_predictions(const std::vector<const ManifestRecord*>& records,
                                   const std::vector<PoseVector>& predictions) {
  if (records.empty()) throw UsageError("cannot evaluate an empty dataset");
  if (records.size() != predictions.size()) throw UsageError("prediction count does not match the dataset");
  MetricsReport r;
  std::vector<double> pos, ang;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const PoseVector& p = predictions[i];
    const Pose& truth = records[i]->pose;
    ImageError e;
    e.index = records[i]->index;
    e.filename = records[i]->filename;
    e.prediction = p;
    e.position_error = norm(Vec3{p[0], p[1], p[2]} - truth.position);
    const Quat q{p[3], p[4], p[5], p[6]};
    if (!(norm(q) > 1e-12) || !std::isfinite(norm(q))) {
      throw NumericError("degenerate predicted quaternion for record " + std::to_string(e.index));
    }
    e.angular_error = angular_error(quat_normalize(truth.orientation), quat_normalize(q));
    pos.push_back(e.position_error);
    ang.push_back(e.angular_error);
    r.per_image.push_back(std::move(e));
  }
  r.position = aggregate(pos);
  r.orientation = aggregate(ang);
  return r;
}

std::string dataset_identifier(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + manifest_path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[40];
  std::snprintf(out, sizeof out, "fnv1a64:%016" PRIx64, h);
  return out;
}

MetricsReport evaluate(const nn::Checkpoint& ckpt, const std::filesystem::path& dataset_dir, const std::string& split,
                       int jobs) {
  const auto manifest_path = dataset_dir / "manifest.jsonl";
  const Manifest manifest = read_manifest(manifest_path);
  const std::vector<const ManifestRecord*> records = select_split(manifest, split);
  if (records.empty()) throw UsageError("split '" + split + "' of " + dataset_dir.string() + " is empty");
  std::vector<PoseVector> predictions(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    const nn::Tensor input = to_network_input(read_png(dataset_dir / records[i]->filename),
                                              ckpt.model.config.input_width, ckpt.model.config.input_height);
    predictions[i] = nn::predict(ckpt.model, input);
  });
  MetricsReport r = evaluate_predictions(records, predictions);
  r.loss = ckpt.loss;
  r.seed = ckpt.seed;
  r.split = split;
  r.dataset = dataset_identifier(manifest_path);
  return r;
}

namespace {

ordered_json aggregate_json(const Aggregate& a) {
  return ordered_json{{"median", a.median}, {"mae", a.mae}, {"rmse", a.rmse}, {"max", a.max}};
}

std::string table_cell(const Aggregate& p, const Aggregate& o, double Aggregate::*field) {
  return fmt("%.3f m, ", p.*field) + fmt("%.3f deg", o.*field);
}

}  // namespace

std::string metrics_json(const MetricsReport& r) {
  ordered_json per = ordered_json::array();
  for (const auto& e : r.per_image) {
    per.push_back({{"index", e.index}, {"position_error", e.position_error}, {"angular_error_deg", e.angular_error}});
  }
  const ordered_json doc{{"format", "icsc-pose-metrics"},
                         {"version", 1},
                         {"loss", r.loss},
                         {"dataset", r.dataset},
                         {"split", r.split},
                         {"seed", r.seed},
                         {"count", r.per_image.size()},
                         {"position_m", aggregate_json(r.position)},
                         {"orientation_deg", aggregate_json(r.orientation)},
                         {"per_image", per}};
  return doc.dump(2) + "\n";
}

std::string metrics_table(const std::vector<MetricsReport>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-12s %-24s %-24s %-24s\n", "Loss", "Median", "MAE", "RMSE");
  out += buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-12s %-24s %-24s %-24s\n", r.loss.c_str(),
                  table_cell(r.position, r.orientation, &Aggregate::median).c_str(),
                  table_cell(r.position, r.orientation, &Aggregate::mae).c_str(),
                  table_cell(r.position, r.orientation, &Aggregate::rmse).c_str());
    out += buf;
  }
  return out;
}

std::string predictions_jsonl(const MetricsReport& r) {
  std::string out;
  for (const auto& e : r.per_image) {
    ordered_json line{{"index", e.index},
                      {"filename", e.filename},
                      {"prediction", e.prediction},
                      {"position_error", e.position_error},
                      {"angular_error_deg", e.angular_error}};
    out += line.dump() + "\n";
  }
  return out;
}

bool ComparisonReport::icsc_not_worse() const { return mean_icsc_position.median <= mean_learnable_position.median; }

ComparisonReport compare_losses(const TrainConfig& base, const std::vector<std::uint64_t>& seeds,
                                const std::filesystem::path& test_dataset, const std::string& test_split,
                                const std::function<void(const std::string&)>& progress) {
  if (seeds.size() < 3) throw UsageError("compare needs at least 3 seeds");
  ComparisonReport report;
  auto add = [](Aggregate& acc, const Aggregate& a, double w) {
    acc.median += a.median * w;
    acc.mae += a.mae * w;
    acc.rmse += a.rmse * w;
    acc.max += a.max * w;
  };
  const double w = 1.0 / static_cast<double>(seeds.size());
  for (const std::uint64_t seed : seeds) {
    ComparisonRun run;
    run.seed = seed;
    for (const LossKind kind : {LossKind::kLearnable, LossKind::kIcsc}) {
      TrainConfig cfg = base;
      cfg.seed = seed;
      cfg.loss.kind = kind;
      cfg.out_dir = base.out_dir / ("seed" + std::to_string(seed)) / to_string(kind);
      if (progress) progress("training " + std::string(to_string(kind)) + " seed " + std::to_string(seed));
      const TrainResult tr = train(cfg);
      const nn::Checkpoint ck = nn::load_checkpoint(tr.best_checkpoint);
      MetricsReport m = evaluate(ck, test_dataset, test_split, base.jobs);
      write_text(cfg.out_dir / "metrics.json", metrics_json(m));
      (kind == LossKind::kIcsc ? run.icsc : run.learnable) = std::move(m);
    }
    add(report.mean_learnable_position, run.learnable.position, w);
    add(report.mean_learnable_orientation, run.learnable.orientation, w);
    add(report.mean_icsc_position, run.icsc.position, w);
    add(report.mean_icsc_orientation, run.icsc.orientation, w);
    report.runs.push_back(std::move(run));
  }
  return report;
}

std::string comparison_json(const ComparisonReport& r) {
  ordered_json runs = ordered_json::array();
  for (const auto& run : r.runs) {
    runs.push_back({{"seed", run.seed},
                    {"learnable", {{"position_m", aggregate_json(run.learnable.position)},
                                   {"orientation_deg", aggregate_json(run.learnable.orientation)}}},
                    {"icsc", {{"position_m", aggregate_json(run.icsc.position)},
                              {"orientation_deg", aggregate_json(run.icsc.orientation)}}}});
  }
  const ordered_json doc{
      {"format", "icsc-pose-comparison"},
      {"version", 1},
      {"runs", runs},
      {"mean_of_seeds",
       {{"learnable", {{"position_m", aggregate_json(r.mean_learnable_position)},
                       {"orientation_deg", aggregate_json(r.mean_learnable_orientation)}}},
        {"icsc", {{"position_m", aggregate_json(r.mean_icsc_position)},
                  {"orientation_deg", aggregate_json(r.mean_icsc_orientation)}}}}},
      {"delta_icsc_minus_learnable",
       {{"median_position_m", r.mean_icsc_position.median - r.mean_learnable_position.median},
        {"median_orientation_deg", r.mean_icsc_orientation.median - r.mean_learnable_orientation.median}}},
      {"icsc_not_worse", r.icsc_not_worse()}};
  return doc.dump(2) + "\n";
}

std::string comparison_table(const ComparisonReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-8s %-12s %-24s %-24s %-24s\n", "Seed", "Loss", "Median", "MAE", "RMSE");
  out += buf;
  auto row = [&](const std::string& seed, const char* loss, const Aggregate& p, const Aggregate& o) {
    std::snprintf(buf, sizeof buf, "%-8s %-12s %-24s %-24s %-24s\n", seed.c_str(), loss,
                  table_cell(p, o, &Aggregate::median).c_str(), table_cell(p, o, &Aggregate::mae).c_str(),
                  table_cell(p, o, &Aggregate::rmse).c_str());
    out += buf;
  };
  for (const auto& run : r.runs) {
    row(std::to_string(run.seed), "learnable", run.learnable.position, run.learnable.orientation);
    row(std::to_string(run.seed), "icsc", run.icsc.position, run.icsc.orientation);
  }
  row("mean", "learnable", r.mean_learnable_position, r.mean_learnable_orientation);
  row("mean", "icsc", r.mean_icsc_position, r.mean_icsc_orientation);
  std::snprintf(buf, sizeof buf, "delta (icsc - learnable) median: %+.4f m, %+.4f deg\n",
                r.mean_icsc_position.median - r.mean_learnable_position.median,
                r.mean_icsc_orientation.median - r.mean_learnable_orientation.median);
  out += buf;
  return out;
}

}  // namespace icsc
