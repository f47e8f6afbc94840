#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "icsc/dataset.hpp"
#include "icsc/serialize.hpp"

using namespace icsc;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("icsc_test_render_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

RandomizationSpec default_spec(std::uint64_t seed = 1) {
  Rng rng(seed);
  return sample_spec(rng, RandomizationBounds{});
}

}  // namespace

TEST_CASE("sample_spec draws inside bounds") {
  const RandomizationBounds b;
  Rng rng(10);
  double sum = 0.0, lo = 1e9, hi = -1e9;
  for (int i = 0; i < 10000; ++i) {
    const RandomizationSpec s = sample_spec(rng, b);
    CHECK(b.contains_pose(s.position, s.pan_deg, s.tilt_deg));
    for (const auto& surf : s.surfaces) {
      CHECK(b.texture_scale.contains(surf.texture.scale_u));
      CHECK(b.ambient.contains(surf.ambient.g));
      CHECK(b.specular.contains(surf.specular.b));
    }
    sum += s.pan_deg;
    lo = std::min(lo, s.pan_deg);
    hi = std::max(hi, s.pan_deg);
  }
  CHECK(lo >= 10.0);
  CHECK(hi <= 30.0);
  CHECK(std::abs(sum / 10000 - 20.0) < 0.5);

  RandomizationBounds pinned;
  pinned.x = {7.5, 7.5};
  pinned.pan_deg = {12.0, 12.0};
  pinned.texture_scale = {1.25, 1.25};
  Rng r2(3);
  const RandomizationSpec s = sample_spec(r2, pinned);
  CHECK(s.position.x == 7.5);
  CHECK(s.pan_deg == 12.0);
  CHECK(s.surfaces[1].texture.scale_v == 1.25);

  Rng a(99), c(99);
  CHECK(sample_spec(a, b) == sample_spec(c, b));

  RandomizationBounds bad;
  bad.z = {7.0, 6.0};
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("procedural texture transform algebra") {
  RandomizationSpec s = default_spec();
  for (auto& surf : s.surfaces) {
    surf.texture = {};
    surf.ambient = {1, 1, 1};
  }
  // Determinism anchor: identity transform at the origin.
  const Rgb origin = procedural_texture(Surface::kGround, 0.0, 0.0, s);
  CHECK(origin == procedural_texture(Surface::kGround, 0.0, 0.0, s));
  CHECK(origin.r == doctest::Approx(0.62888185).epsilon(1e-6));
  CHECK(origin.g == doctest::Approx(0.74470288).epsilon(1e-6));
  CHECK(origin.b == doctest::Approx(0.52896225).epsilon(1e-6));

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const double u = uniform(rng, -30, 30), v = uniform(rng, -30, 30);
    for (int k = 0; k < kTexturedSurfaces; ++k) {
      const auto surf = static_cast<Surface>(k);
      RandomizationSpec base = s;
      base.surfaces[k].texture.tu = uniform(rng, -5, 5);
      base.surfaces[k].texture.tv = uniform(rng, -5, 5);
      const Rgb ref = procedural_texture(surf, u, v, base);

      // Rotating the input by 180 and the texture by 180 cancels exactly.
      RandomizationSpec rot = base;
      rot.surfaces[k].texture.rotation_deg = 180.0;
      CHECK(procedural_texture(surf, -u, -v, rot) == ref);

      // Scale 2 halves the spatial frequency.
      RandomizationSpec scaled = base;
      scaled.surfaces[k].texture.scale_u = 2.0;
      scaled.surfaces[k].texture.scale_v = 2.0;
      CHECK(procedural_texture(surf, 2 * u, 2 * v, scaled) == ref);

      // Ambient colour modulates each channel linearly.
      RandomizationSpec dim = base;
      dim.surfaces[k].ambient = {0.5, 0.25, 1.0};
      const Rgb d = procedural_texture(surf, u, v, dim);
      CHECK(d.r == doctest::Approx(0.5 * ref.r));
      CHECK(d.g == doctest::Approx(0.25 * ref.g));
      CHECK(d.b == doctest::Approx(ref.b));
    }
  }
}

TEST_CASE("render contract") {
  const RandomizationSpec s = default_spec(21);
  const CameraIntrinsics intr;
  const SceneGeometry geo;
  const RenderResult a = render(s, intr, geo);
  const RenderResult b = render(s, intr, geo);
  CHECK(a.image == b.image);
  CHECK(a.image.width == 128);
  CHECK(a.image.height == 72);

  const Pose label = spec_pose(s);
  CHECK(a.pose.position == label.position);
  CHECK(a.pose.orientation == label.orientation);
  REQUIRE(a.centre_hit.hit);
  CHECK(a.centre_on_fuselage);
  CHECK(norm(icsc_point(label, geo.cylinder) - a.centre_hit.point) <= 1e-9);

  std::size_t fuselage = 0;
  for (auto m : a.fuselage_mask) fuselage += m;
  CHECK(fuselage > 0);
  CHECK(fuselage < a.fuselage_mask.size());
  CHECK(a.fuselage_mask == fuselage_silhouette(a.pose, intr, geo));
}

TEST_CASE("downward camera sees only ground") {
  RandomizationBounds down;
  down.tilt_deg = {-89.5, -89.5};
  Rng rng(8);
  const RandomizationSpec s = sample_spec(rng, down);
  const CameraIntrinsics intr;
  const SceneGeometry geo;
  const Pose pose = spec_pose(s);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      REQUIRE(trace(pixel_ray(pose, intr, u, v), geo).surface == Surface::kGround);
    }
  }
  const RenderResult r = render(s, intr, geo);
  for (auto m : r.fuselage_mask) CHECK(m == 0);
}

TEST_CASE("scene tracing") {
  const SceneGeometry geo;
  // Straight down from above the fuselage crown.
  SceneHit h = trace({{0.0, -7.0, 20.0}, {0.0, 0.0, -1.0}}, geo);
  CHECK(h.surface == Surface::kFuselage);
  CHECK(h.point.z == doctest::Approx(5.5));
  // Past the fuselage end: ground.
  h = trace({{0.0, 10.0, 20.0}, {0.0, 0.0, -1.0}}, geo);
  CHECK(h.surface == Surface::kGround);
  // Along the axis from behind the tail end: the cap.
  h = trace({{0.0, -30.0, 3.5}, {0.0, 1.0, 0.0}}, geo);
  CHECK(h.surface == Surface::kFuselage);
  CHECK(h.point.y == doctest::Approx(geo.y_min()));
  CHECK(h.normal.y == -1.0);
  // Horizontal toward the wall above the fuselage.
  h = trace({{5.0, -7.0, 8.0}, {-1.0, 0.0, 0.0}}, geo);
  CHECK(h.surface == Surface::kWall);
  CHECK(h.point.x == geo.wall_x);
  // Upward: nothing.
  CHECK(trace({{5.0, -7.0, 8.0}, {0.0, 0.0, 1.0}}, geo).surface == Surface::kSky);

  CHECK_THROWS_AS(check_camera_position({0.0, -7.0, 3.5}, geo), UsageError);
  CHECK_THROWS_AS(check_camera_position({5.0, -7.0, -1.0}, geo), UsageError);
  CHECK_THROWS_AS(check_camera_position({-25.0, -7.0, 3.0}, geo), UsageError);
  CHECK_NOTHROW(check_camera_position({7.0, -7.0, 7.0}, geo));

  SceneGeometry bad;
  bad.wall_x = -1.0;
  CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("overlay self-consistency") {
  const CameraIntrinsics intr;
  const SceneGeometry geo;
  int with_end = 0, without_end = 0;
  for (std::uint64_t seed = 1; seed <= 24; ++seed) {
    const RenderResult r = render(default_spec(seed), intr, geo);
    CHECK(silhouette_iou(r.fuselage_mask, fuselage_silhouette(r.pose, intr, geo)) == 1.0);
    Pose shifted = r.pose;
    shifted.position.y += 0.5;
    const double iou = silhouette_iou(r.fuselage_mask, fuselage_silhouette(shifted, intr, geo));
    // With no fuselage end in view the silhouette is that of an infinite
    // cylinder, which an axial shift leaves unchanged.
    if (fuselage_end_in_view(r.pose, intr, geo)) {
      ++with_end;
      CHECK(iou < 1.0);
    } else {
      ++without_end;
      CHECK(iou == 1.0);
    }
  }
  CHECK(with_end > 0);
  CHECK(without_end > 0);

  const RenderResult r = render(default_spec(33), intr, geo);

  const Image blank(intr.width, intr.height);
  const Image over = render_overlay(blank, r.pose, intr, geo);
  for (std::size_t i = 0; i < r.fuselage_mask.size(); ++i) {
    const std::uint8_t* px = &over.rgb[i * 3];
    CHECK(px[1] == 0);
    CHECK(px[2] == 0);
    CHECK((px[0] > 0) == (r.fuselage_mask[i] != 0));
  }

  // A base at another resolution is resized first.
  const Image big = render_overlay(Image(256, 144), r.pose, intr, geo);
  CHECK(big.width == intr.width);
  CHECK(silhouette_iou({0, 1}, {0, 0}) == 0.0);
  CHECK(silhouette_iou({0, 0}, {0, 0}) == 1.0);
}

TEST_CASE("png round trip and network input") {
  const auto dir = scratch("png");
  std::filesystem::create_directories(dir);
  const RenderResult r = render(default_spec(4), CameraIntrinsics{}, SceneGeometry{});
  write_png(r.image, dir / "a.png");
  write_png(r.image, dir / "b.png");
  CHECK(read_png(dir / "a.png") == r.image);
  CHECK(slurp(dir / "a.png") == slurp(dir / "b.png"));
  CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  {
    std::ofstream(dir / "junk.png") << "not a png";
  }
  CHECK_THROWS_AS(read_png(dir / "junk.png"), IoError);
  CHECK_THROWS_AS(write_png(r.image, dir / "no" / "such" / "dir.png"), IoError);

  const nn::Tensor t = to_network_input(r.image, 64, 64);
  CHECK(t.shape() == nn::Shape{3, 64, 64});
  for (double v : t.data()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  Image flat(10, 6);
  for (auto& b : flat.rgb) b = 255;
  const nn::Tensor white = to_network_input(flat, 4, 4);
  for (double v : white.data()) CHECK(v == 1.0);
  for (auto& b : flat.rgb) b = 0;
  const nn::Tensor black = to_network_input(flat, 4, 4);
  for (double v : black.data()) CHECK(v == -1.0);
  CHECK(resize_bilinear(r.image, 128, 72) == r.image);
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset generation is deterministic and self-consistent") {
  DatasetConfig cfg;
  cfg.count = 12;
  cfg.train_count = 9;
  cfg.seed = 2024;
  const auto d1 = scratch("ds1");
  const auto d2 = scratch("ds2");
  const Manifest m1 = generate_dataset(cfg, d1, 1);
  generate_dataset(cfg, d2, 3);
  CHECK(slurp(d1 / "manifest.jsonl") == slurp(d2 / "manifest.jsonl"));
  for (const auto& r : m1.records) CHECK(slurp(d1 / r.filename) == slurp(d2 / r.filename));

  const Manifest back = read_manifest(d1 / "manifest.jsonl");
  REQUIRE(back.records.size() == 12);
  CHECK(select_split(back, "train").size() == 9);
  CHECK(select_split(back, "val").size() == 3);
  CHECK(select_split(back, "all").size() == 12);
  CHECK_THROWS_AS(select_split(back, "test"), UsageError);
  for (std::size_t i = 0; i < back.records.size(); ++i) {
    const ManifestRecord& r = back.records[i];
    CHECK(r.pose.position == m1.records[i].pose.position);
    CHECK(r.pose.orientation == m1.records[i].pose.orientation);
    CHECK(r.spec == m1.records[i].spec);
    CHECK(r.per_image_seed == derive_seed(cfg.seed, i));
    CHECK(norm(icsc_point(r.pose, back.config.scene.cylinder) - r.centre_hit) <= 1e-9);
  }

  // Any image regenerates in isolation from its index.
  const GeneratedItem again = generate_item(cfg, 7);
  CHECK(again.render.image == read_png(d1 / image_filename(7)));
  CHECK(manifest_record_line(again.record) == manifest_record_line(m1.records[7]));

  // Labels carry exactly nine decimals.
  const std::string line = manifest_record_line(m1.records[0]);
  const auto pos = line.find("\"position\":[");
  const std::string first = line.substr(pos + 12, line.find(',', pos) - pos - 12);
  CHECK(first.size() - first.find('.') - 1 == 9);

  std::filesystem::remove_all(d1);
  std::filesystem::remove_all(d2);
}

TEST_CASE("dataset errors") {
  DatasetConfig away;
  away.count = 1;
  away.train_count = 1;
  away.bounds.pan_deg = {175.0, 175.0};
  try {
    generate_item(away, 0);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bounds inconsistent with cylinder") != std::string::npos);
  }

  DatasetConfig bad;
  bad.train_count = bad.count + 1;
  CHECK_THROWS_AS(bad.validate(), UsageError);

  const auto dir = scratch("badmanifest");
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(read_manifest(dir / "manifest.jsonl"), IoError);
  {
    std::ofstream(dir / "manifest.jsonl") << "{\"format\":\"something-else\",\"version\":1}\n";
  }
  CHECK_THROWS_AS(read_manifest(dir / "manifest.jsonl"), IoError);

  DatasetConfig small;
  small.count = 3;
  small.train_count = 2;
  Manifest m;
  m.config = small;
  m.records.push_back(generate_item(small, 0).record);
  write_manifest(m, dir / "short.jsonl");
  CHECK_THROWS_AS(read_manifest(dir / "short.jsonl"), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("serialization round trips") {
  const RandomizationSpec s = default_spec(77);
  CHECK(spec_from_json(nlohmann::json::parse(to_json(s).dump())) == s);
  RandomizationBounds b;
  b.y = {-8.0, -6.0};
  const RandomizationBounds b2 = bounds_from_json(to_json(b));
  CHECK(b2.y.lo == -8.0);
  CHECK(b2.y.hi == -6.0);
  nlohmann::json j = to_json(SceneGeometry{});
  j["wal_x"] = 3;
  CHECK_THROWS_AS(scene_from_json(j), UsageError);
  CHECK_THROWS_AS(bounds_from_json(nlohmann::json{{"x", {1.0}}}), UsageError);
  CHECK(intrinsics_from_json(nlohmann::json::object()).width == 128);
}
