#include "icsc/dataset.hpp"

#include <cinttypes>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "icsc/serialize.hpp"

namespace icsc {

using nlohmann::json;

namespace {

std::string fixed9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9f", v);
  return buf;
}

std::string exact(double v) { return json(v).dump(); }

}  // namespace

void DatasetConfig::validate() const {
  bounds.validate();
  scene.validate();
  intrinsics.validate();
  if (count == 0) throw UsageError("dataset count must be at least 1");
  if (train_count > count) throw UsageError("train split larger than the dataset count");
}

std::string image_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "images/%06zu.png", index);
  return buf;
}

GeneratedItem generate_item(const DatasetConfig& config, std::size_t index) {
  GeneratedItem item;
  ManifestRecord& r = item.record;
  r.index = index;
  r.filename = image_filename(index);
  r.split = index < config.train_count ? "train" : "val";
  r.per_image_seed = derive_seed(config.seed, index);
  Rng rng(r.per_image_seed);
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxResampleTries) {
      throw Error("bounds inconsistent with cylinder: image " + std::to_string(index) + " had no centre hit in " +
                  std::to_string(kMaxResampleTries) + " draws");
    }
    r.spec = sample_spec(rng, config.bounds);
    const Pose pose = spec_pose(r.spec);
    const Ray centre = center_view_ray(pose);
    const SceneHit first = trace(centre, config.scene);
    if (first.surface == Surface::kFuselage && intersect_ray_cylinder(centre, config.scene.cylinder).hit) {
      r.resamples = attempt;
      break;
    }
  }
  item.render = render(r.spec, config.intrinsics, config.scene);
  if (!item.render.centre_on_fuselage) {
    throw Error("renderer centre ray disagrees with the sampler for image " + std::to_string(index));
  }
  r.pose = item.render.pose;
  r.pan_deg = r.spec.pan_deg;
  r.tilt_deg = r.spec.tilt_deg;
  r.centre_hit = item.render.centre_hit.point;
  return item;
}

std::string manifest_header_line(const Manifest& m) {
  const DatasetConfig& c = m.config;
  const json h{{"format", "icsc-pose-manifest"},
               {"version", kManifestVersion},
               {"seed", c.seed},
               {"count", c.count},
               {"train_count", c.train_count},
               {"val_count", c.count - c.train_count},
               {"total_resamples", m.total_resamples},
               {"bounds", to_json(c.bounds)},
               {"scene", to_json(c.scene)},
               {"intrinsics", to_json(c.intrinsics)}};
  return h.dump();
}

std::string manifest_record_line(const ManifestRecord& r) {
  const Vec3& p = r.pose.position;
  const Quat& q = r.pose.orientation;
  std::string s = "{\"index\":" + std::to_string(r.index) + ",\"filename\":" + json(r.filename).dump() +
                  ",\"split\":" + json(r.split).dump() + ",\"position\":[" + fixed9(p.x) + "," + fixed9(p.y) + "," +
                  fixed9(p.z) + "],\"quaternion\":[" + fixed9(q.w) + "," + fixed9(q.x) + "," + fixed9(q.y) + "," +
                  fixed9(q.z) + "],\"pan_deg\":" + exact(r.pan_deg) + ",\"tilt_deg\":" + exact(r.tilt_deg) +
                  ",\"per_image_seed\":" + std::to_string(r.per_image_seed) + ",\"centre_hit\":[" +
                  exact(r.centre_hit.x) + "," + exact(r.centre_hit.y) + "," + exact(r.centre_hit.z) +
                  "],\"resamples\":" + std::to_string(r.resamples) + ",\"spec\":" + to_json(r.spec).dump() + "}";
  return s;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + tmp.string());
    out << manifest_header_line(m) << '\n';
    for (const auto& r : m.records) out << manifest_record_line(r) << '\n';
    if (!out) throw IoError("failed writing manifest: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move manifest into place: " + path.string() + ": " + ec.message());
}

Manifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir, int jobs) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create dataset directory " + (out_dir / "images").string() + ": " + ec.message());

  Manifest m;
  m.config = config;
  m.records.resize(config.count);
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(config.count)));
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&](int worker) {
    try {
      for (std::size_t i = static_cast<std::size_t>(worker); i < config.count;
           i += static_cast<std::size_t>(workers)) {
        {
          std::lock_guard lock(failure_mutex);
          if (failure) return;
        }
        GeneratedItem item = generate_item(config, i);
        write_png(item.render.image, out_dir / item.record.filename);
        m.records[i] = std::move(item.record);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w) threads.emplace_back(work, w);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  for (const auto& r : m.records) m.total_resamples += static_cast<std::size_t>(r.resamples);
  write_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  try {
    if (!std::getline(in, line)) throw IoError("empty manifest: " + path.string());
    ++line_no;
    const json h = json::parse(line);
    if (h.at("format") != "icsc-pose-manifest") throw IoError("not a dataset manifest: " + path.string());
    if (h.at("version").get<int>() != kManifestVersion) {
      throw IoError("unsupported manifest version in " + path.string());
    }
    m.config.seed = h.at("seed").get<std::uint64_t>();
    m.config.count = h.at("count").get<std::size_t>();
    m.config.train_count = h.at("train_count").get<std::size_t>();
    m.total_resamples = h.at("total_resamples").get<std::size_t>();
    m.config.bounds = bounds_from_json(h.at("bounds"));
    m.config.scene = scene_from_json(h.at("scene"));
    m.config.intrinsics = intrinsics_from_json(h.at("intrinsics"));

    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      ManifestRecord r;
      r.index = j.at("index").get<std::size_t>();
      r.filename = j.at("filename").get<std::string>();
      r.split = j.at("split").get<std::string>();
      const json& p = j.at("position");
      const json& q = j.at("quaternion");
      r.pose.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
      r.pose.orientation = {q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                            q.at(3).get<double>()};
      r.pan_deg = j.at("pan_deg").get<double>();
      r.tilt_deg = j.at("tilt_deg").get<double>();
      r.per_image_seed = j.at("per_image_seed").get<std::uint64_t>();
      const json& c = j.at("centre_hit");
      r.centre_hit = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
      r.resamples = j.at("resamples").get<int>();
      r.spec = spec_from_json(j.at("spec"));
      if (r.index != m.records.size()) {
        throw IoError("manifest record out of order at line " + std::to_string(line_no));
      }
      if (!m.config.bounds.contains_pose(r.pose.position, r.pan_deg, r.tilt_deg)) {
        throw IoError("manifest pose outside declared bounds at line " + std::to_string(line_no));
      }
      if (!intersect_ray_cylinder(center_view_ray(r.pose), m.config.scene.cylinder).hit) {
        throw IoError("manifest pose whose centre ray misses the cylinder at line " + std::to_string(line_no));
      }
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
  } catch (const UsageError& e) {
    throw IoError("invalid manifest " + path.string() + ": " + e.what());
  }
  if (m.records.size() != m.config.count) {
    throw IoError("manifest " + path.string() + " declares " + std::to_string(m.config.count) + " records but has " +
                  std::to_string(m.records.size()));
  }
  return m;
}

std::vector<const ManifestRecord*> select_split(const Manifest& m, const std::string& name) {
  if (name != "all" && name != "train" && name != "val") {
    throw UsageError("unknown split '" + name + "' (expected train|val|all)");
  }
  std::vector<const ManifestRecord*> out;
  for (const auto& r : m.records) {
    if (name == "all" || r.split == name) out.push_back(&r);
  }
  return out;
}

}  // namespace icsc
