#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "icsc/error.hpp"
#include "icsc/gradcheck.hpp"
#include "icsc/harness.hpp"

using namespace icsc;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("icsc_test_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

// 60 images, 50 of them training; built once per process.
const std::filesystem::path& small_dataset() {
  static const std::filesystem::path dir = [] {
    const auto d = scratch("data");
    DatasetConfig cfg;
    cfg.count = 60;
    cfg.train_count = 50;
    cfg.seed = 21;
    generate_dataset(cfg, d, 2);
    return d;
  }();
  return dir;
}

nn::ModelConfig small_model() {
  nn::ModelConfig m;
  m.input_height = 16;
  m.input_width = 16;
  m.conv_blocks = {{4, true}, {6, true}};
  m.dense_widths = {12};
  return m;
}

TrainConfig small_train(const std::string& out, LossKind kind = LossKind::kIcsc) {
  TrainConfig t;
  t.dataset = small_dataset();
  t.out_dir = scratch(out);
  t.loss.kind = kind;
  t.loss.beta = {500.0};
  t.model = small_model();
  t.epochs = 1;
  return t;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("one epoch over 50 images in batches of 25 takes two steps") {
  const TrainResult r = train(small_train("two_steps"));
  CHECK(r.steps == 2);
  CHECK(r.epochs_run == 1);
  const auto log = lines_of(slurp(r.log_path));
  REQUIRE(log.size() == 2);
  const auto train_line = nlohmann::json::parse(log[0]);
  const auto val_line = nlohmann::json::parse(log[1]);
  CHECK(train_line.at("split") == "train");
  CHECK(train_line.at("steps") == 2);
  CHECK(val_line.at("split") == "val");
  for (const char* key : {"epoch", "loss", "l_x", "l_q", "l_c", "s_x", "s_q", "s_c", "wall_time_s"}) {
    CHECK(train_line.contains(key));
  }
  CHECK(std::filesystem::exists(r.best_checkpoint));
  CHECK(std::filesystem::exists(r.last_checkpoint));
}

TEST_CASE("training is deterministic for a seed") {
  TrainConfig a = small_train("det_a");
  a.epochs = 2;
  TrainConfig b = a;
  b.out_dir = scratch("det_b");
  b.jobs = 3;
  TrainConfig c = a;
  c.out_dir = scratch("det_c");
  c.seed = 2;
  train(a);
  train(b);
  train(c);
  const nn::Checkpoint ka = nn::load_checkpoint(a.out_dir / "last.ckpt.json");
  const nn::Checkpoint kb = nn::load_checkpoint(b.out_dir / "last.ckpt.json");
  const nn::Checkpoint kc = nn::load_checkpoint(c.out_dir / "last.ckpt.json");
  REQUIRE(ka.model.params.size() == kb.model.params.size());
  bool same_ab = true, same_ac = true;
  for (std::size_t i = 0; i < ka.model.params.size(); ++i) {
    same_ab = same_ab && ka.model.params[i].value == kb.model.params[i].value;
    same_ac = same_ac && ka.model.params[i].value == kc.model.params[i].value;
  }
  CHECK(same_ab);
  CHECK_FALSE(same_ac);
  CHECK(slurp(a.out_dir / "last.ckpt.json") == slurp(b.out_dir / "last.ckpt.json"));
}

TEST_CASE("subset, step cap and validation cadence") {
  TrainConfig t = small_train("cap");
  t.subset = 10;
  t.batch_size = 4;
  t.epochs = 5;
  t.max_steps = 7;
  t.validate_every = 0;
  const TrainResult r = train(t);
  CHECK(r.steps == 7);
  CHECK(r.epochs_run == 3);
  const auto log = lines_of(slurp(r.log_path));
  CHECK(log.size() == 3);
  for (const auto& l : log) CHECK(nlohmann::json::parse(l).at("split") == "train");
}

TEST_CASE("log-variances stay bounded and training lowers the loss") {
  for (const LossKind kind : {LossKind::kBeta, LossKind::kLearnable, LossKind::kIcsc}) {
    CAPTURE(to_string(kind));
    TrainConfig t = small_train(std::string("bounded_") + to_string(kind), kind);
    t.subset = 10;
    t.batch_size = 5;
    t.epochs = 30;
    t.lr = 1e-3;
    t.validate_every = 0;
    const TrainResult r = train(t);
    CHECK(r.log_var_bounded);
    for (double m : r.log_var_margin) CHECK(m >= -5.0);
    CHECK(r.final_train.total < r.initial_train.total);
    if (kind == LossKind::kBeta) {
      CHECK(r.final_log_var.s_x == 0.0);
      CHECK(r.final_log_var.s_q == 0.0);
    } else {
      CHECK(r.final_log_var.s_x != 0.0);
    }
    if (kind != LossKind::kIcsc) CHECK(r.final_log_var.s_c == 0.0);
  }
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  TrainConfig t = small_train("nan");
  t.lr = 1e300;
  t.epochs = 3;
  t.validate_every = 0;
  try {
    train(t);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("batch record indices [") != std::string::npos);
    CHECK(msg.find("s = (") != std::string::npos);
  }
}

TEST_CASE("training configuration errors") {
  TrainConfig t = small_train("bad");
  t.batch_size = 0;
  CHECK_THROWS_AS(train(t), UsageError);
  t = small_train("bad");
  t.epochs = 0;
  CHECK_THROWS_AS(train(t), UsageError);
  t = small_train("bad");
  t.loss.cylinder.h0 = 4.0;
  CHECK_THROWS_AS(train(t), UsageError);
  t = small_train("bad");
  t.dataset = scratch("missing");
  CHECK_THROWS_AS(train(t), IoError);
}

TEST_CASE("aggregate") {
  const Aggregate even = aggregate({4.0, 1.0, 3.0, 2.0});
  CHECK(even.median == 2.0);
  CHECK(even.max == 4.0);
  CHECK(even.mae == doctest::Approx(2.5));
  CHECK(even.rmse == doctest::Approx(std::sqrt(7.5)));
  CHECK(aggregate({3.0, 1.0, 2.0}).median == 2.0);
  CHECK(aggregate({5.0}).median == 5.0);
  CHECK_THROWS_AS(aggregate({}), UsageError);
}

TEST_CASE("perfect predictor scores zero") {
  const Manifest m = read_manifest(small_dataset() / "manifest.jsonl");
  const auto records = select_split(m, "all");
  std::vector<PoseVector> truth;
  for (const auto* r : records) truth.push_back(to_vector(r->pose));
  const MetricsReport rep = evaluate_predictions(records, truth);
  CHECK(rep.per_image.size() == records.size());
  CHECK(rep.position.max == 0.0);
  CHECK(rep.orientation.max < 1e-5);
  CHECK_THROWS_AS(evaluate_predictions({}, {}), UsageError);
  CHECK_THROWS_AS(evaluate_predictions(records, {}), UsageError);
}

TEST_CASE("constant predictor median matches a manifest-only computation") {
  const PoseVector centre = to_vector({{7.0, -7.25, 6.75}, quat_from_yaw_tilt(20.0, -18.0)});
  const Manifest m = read_manifest(small_dataset() / "manifest.jsonl");
  const auto records = select_split(m, "all");
  const MetricsReport rep = evaluate_predictions(records, std::vector<PoseVector>(records.size(), centre));

  // Independent reading of the manifest text.
  std::vector<double> d;
  const auto lines = lines_of(slurp(small_dataset() / "manifest.jsonl"));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto p = nlohmann::json::parse(lines[i]).at("position");
    const double dx = p[0].get<double>() - 7.0, dy = p[1].get<double>() + 7.25, dz = p[2].get<double>() - 6.75;
    d.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  std::sort(d.begin(), d.end());
  REQUIRE(d.size() == records.size());
  CHECK(rep.position.median == doctest::Approx(d[(d.size() - 1) / 2]).epsilon(1e-12));
}

TEST_CASE("metrics report is internally consistent and reproducible") {
  TrainConfig t = small_train("metrics");
  train(t);
  const nn::Checkpoint ck = nn::load_checkpoint(t.out_dir / "best.ckpt.json");
  const MetricsReport a = evaluate(ck, small_dataset(), "all", 1);
  const MetricsReport b = evaluate(ck, small_dataset(), "all", 3);
  CHECK(metrics_json(a) == metrics_json(b));
  CHECK(a.per_image.size() == 60);
  CHECK(a.loss == "icsc");
  CHECK(a.dataset.rfind("fnv1a64:", 0) == 0);
  CHECK(evaluate(ck, small_dataset(), "val", 1).per_image.size() == 10);

  for (const Aggregate* g : {&a.position, &a.orientation}) {
    CHECK(g->median <= g->max);
    CHECK(g->rmse >= g->mae);
    CHECK(g->mae >= 0.0);
  }

  const auto doc = nlohmann::json::parse(metrics_json(a));
  std::vector<double> pos, ang;
  for (const auto& e : doc.at("per_image")) {
    pos.push_back(e.at("position_error").get<double>());
    ang.push_back(e.at("angular_error_deg").get<double>());
  }
  CHECK(doc.at("count") == pos.size());
  const Aggregate rp = aggregate(pos), ra = aggregate(ang);
  CHECK(std::abs(rp.median - doc.at("position_m").at("median").get<double>()) <= 1e-12);
  CHECK(std::abs(rp.mae - doc.at("position_m").at("mae").get<double>()) <= 1e-12);
  CHECK(std::abs(rp.rmse - doc.at("position_m").at("rmse").get<double>()) <= 1e-12);
  CHECK(std::abs(ra.median - doc.at("orientation_deg").at("median").get<double>()) <= 1e-12);
  CHECK(std::abs(ra.mae - doc.at("orientation_deg").at("mae").get<double>()) <= 1e-12);
  CHECK(std::abs(ra.rmse - doc.at("orientation_deg").at("rmse").get<double>()) <= 1e-12);

  // Predictions file: position errors recomputed from the manifest alone.
  const auto manifest_lines = lines_of(slurp(small_dataset() / "manifest.jsonl"));
  const auto pred_lines = lines_of(predictions_jsonl(a));
  REQUIRE(pred_lines.size() == 60);
  double worst = 0.0;
  for (const auto& l : pred_lines) {
    const auto p = nlohmann::json::parse(l);
    const auto truth = nlohmann::json::parse(manifest_lines.at(1 + p.at("index").get<std::size_t>())).at("position");
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double e = p.at("prediction")[k].get<double>() - truth[k].get<double>();
      s += e * e;
    }
    worst = std::max(worst, std::abs(std::sqrt(s) - p.at("position_error").get<double>()));
  }
  CHECK(worst < 1e-12);

  CHECK_THROWS_AS(evaluate(ck, small_dataset(), "nonexistent", 1), UsageError);
}

TEST_CASE("dataset identifier depends on content, not location") {
  const auto copy = scratch("copy");
  std::filesystem::create_directories(copy);
  std::filesystem::copy_file(small_dataset() / "manifest.jsonl", copy / "manifest.jsonl");
  CHECK(dataset_identifier(copy / "manifest.jsonl") == dataset_identifier(small_dataset() / "manifest.jsonl"));
  {
    std::ofstream out(copy / "manifest.jsonl", std::ios::app);
    out << "\n";
  }
  CHECK(dataset_identifier(copy / "manifest.jsonl") != dataset_identifier(small_dataset() / "manifest.jsonl"));
  CHECK_THROWS_AS(dataset_identifier(copy / "absent.jsonl"), IoError);
}

TEST_CASE("metrics table has Median, MAE and RMSE columns") {
  MetricsReport r;
  r.loss = "learnable";
  r.position = {0.281, 0.305, 0.318, 0.5};
  r.orientation = {1.164, 1.296, 1.452, 2.0};
  const std::string t = metrics_table({r});
  CHECK(t.find("Median") != std::string::npos);
  CHECK(t.find("0.281 m, 1.164 deg") != std::string::npos);
  CHECK(t.find("0.305 m, 1.296 deg") != std::string::npos);
  CHECK(t.find("0.318 m, 1.452 deg") != std::string::npos);
}

TEST_CASE("compare_losses trains both variants per seed") {
  TrainConfig base = small_train("compare");
  base.subset = 10;
  base.batch_size = 5;
  base.validate_every = 0;
  CHECK_THROWS_AS(compare_losses(base, {1, 2}, small_dataset()), UsageError);
  int runs = 0;
  const ComparisonReport r = compare_losses(base, {1, 2, 3}, small_dataset(), "val",
                                            [&](const std::string&) { ++runs; });
  CHECK(runs == 6);
  REQUIRE(r.runs.size() == 3);
  for (const auto& run : r.runs) {
    CHECK(run.learnable.loss == "learnable");
    CHECK(run.icsc.loss == "icsc");
    CHECK(std::filesystem::exists(base.out_dir / ("seed" + std::to_string(run.seed)) / "icsc" / "metrics.json"));
  }
  double mean = 0.0;
  for (const auto& run : r.runs) mean += run.icsc.position.median / 3.0;
  CHECK(r.mean_icsc_position.median == doctest::Approx(mean));
  CHECK(r.icsc_not_worse() == (r.mean_icsc_position.median <= r.mean_learnable_position.median));
  const std::string table = comparison_table(r);
  CHECK(std::count(table.begin(), table.end(), '\n') == 1 + 6 + 2 + 1);
  const auto doc = nlohmann::json::parse(comparison_json(r));
  CHECK(doc.at("runs").size() == 3);
  CHECK(doc.at("icsc_not_worse").get<bool>() == r.icsc_not_worse());
}

TEST_CASE("gradcheck report") {
  GradcheckOptions o;
  const GradcheckReport all = run_gradcheck(o);
  CHECK(all.passed());
  CHECK(all.entries.size() == gradcheck_components().size());
  bool tangent_skipped = false;
  for (const auto& e : all.entries) {
    CAPTURE(e.name);
    if (e.name == "icsc_tangent") {
      tangent_skipped = e.status == "skipped: non-differentiable region";
    } else {
      CHECK(e.status == "pass");
      CHECK(e.points >= 100);
      CHECK(e.worst < e.tolerance);
    }
  }
  CHECK(tangent_skipped);

  o.scope = GradcheckScope::kGeometry;
  const GradcheckReport geo = run_gradcheck(o);
  CHECK(geo.entries.size() == 3);
  for (const auto& e : geo.entries) CHECK(e.scope == "geometry");

  for (const std::string name : {"icsc_jacobian", "loss_icsc_total", "conv2d", "network"}) {
    CAPTURE(name);
    GradcheckOptions f;
    f.inject_fault = name;
    const GradcheckReport r = run_gradcheck(f);
    CHECK_FALSE(r.passed());
    for (const auto& e : r.entries) CHECK((e.status == "fail") == (e.name == name));
  }

  GradcheckOptions bad;
  bad.inject_fault = "nope";
  CHECK_THROWS_AS(run_gradcheck(bad), UsageError);
  CHECK_THROWS_AS(parse_gradcheck_scope("everything"), UsageError);
  CHECK(parse_gradcheck_scope("nn") == GradcheckScope::kNn);
}
