#include "icsc/serialize.hpp"

namespace icsc {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw UsageError("unknown key '" + key + "' in " + where);
  }
}

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

json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

void read_range(const json& j, const char* key, Range& out, const std::string& where) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
    throw UsageError("'" + std::string(key) + "' in " + where + " must be [lo, hi]");
  }
  out = {v[0].get<double>(), v[1].get<double>()};
}

json rgb_json(const Rgb& c) { return json::array({c.r, c.g, c.b}); }
Rgb rgb_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

const char* kSurfaceNames[kTexturedSurfaces] = {"fuselage", "ground", "wall"};

}  // namespace

json to_json(const CylinderModel& c) { return json{{"r0", c.r0}, {"h0", c.h0}}; }

CylinderModel cylinder_from_json(const json& j) {
  const std::string where = "cylinder";
  reject_unknown_keys(j, {"r0", "h0"}, where);
  CylinderModel c;
  read(j, "r0", c.r0, where);
  read(j, "h0", c.h0, where);
  c.validate();
  return c;
}

json to_json(const CameraIntrinsics& c) {
  return json{{"horizontal_fov_deg", c.horizontal_fov_deg},
              {"aspect", c.aspect},
              {"width", c.width},
              {"height", c.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  const std::string where = "intrinsics";
  reject_unknown_keys(j, {"horizontal_fov_deg", "aspect", "width", "height"}, where);
  CameraIntrinsics c;
  read(j, "horizontal_fov_deg", c.horizontal_fov_deg, where);
  read(j, "aspect", c.aspect, where);
  read(j, "width", c.width, where);
  read(j, "height", c.height, where);
  c.validate();
  return c;
}

json to_json(const SceneGeometry& g) {
  return json{{"cylinder", to_json(g.cylinder)},   {"visible_length", g.visible_length},
              {"centre_y", g.centre_y},            {"wall_x", g.wall_x},
              {"wall_height", g.wall_height}};
}

SceneGeometry scene_from_json(const json& j) {
  const std::string where = "scene";
  reject_unknown_keys(j, {"cylinder", "visible_length", "centre_y", "wall_x", "wall_height"}, where);
  SceneGeometry g;
  if (j.contains("cylinder")) g.cylinder = cylinder_from_json(j.at("cylinder"));
  read(j, "visible_length", g.visible_length, where);
  read(j, "centre_y", g.centre_y, where);
  read(j, "wall_x", g.wall_x, where);
  read(j, "wall_height", g.wall_height, where);
  g.validate();
  return g;
}

json to_json(const RandomizationBounds& b) {
  return json{{"x", range_json(b.x)},
              {"y", range_json(b.y)},
              {"z", range_json(b.z)},
              {"pan_deg", range_json(b.pan_deg)},
              {"tilt_deg", range_json(b.tilt_deg)},
              {"texture_translation", range_json(b.texture_translation)},
              {"texture_rotation_deg", range_json(b.texture_rotation_deg)},
              {"texture_scale", range_json(b.texture_scale)},
              {"ambient", range_json(b.ambient)},
              {"specular", range_json(b.specular)}};
}

RandomizationBounds bounds_from_json(const json& j) {
  const std::string where = "bounds";
  reject_unknown_keys(j,
                      {"x", "y", "z", "pan_deg", "tilt_deg", "texture_translation", "texture_rotation_deg",
                       "texture_scale", "ambient", "specular"},
                      where);
  RandomizationBounds b;
  read_range(j, "x", b.x, where);
  read_range(j, "y", b.y, where);
  read_range(j, "z", b.z, where);
  read_range(j, "pan_deg", b.pan_deg, where);
  read_range(j, "tilt_deg", b.tilt_deg, where);
  read_range(j, "texture_translation", b.texture_translation, where);
  read_range(j, "texture_rotation_deg", b.texture_rotation_deg, where);
  read_range(j, "texture_scale", b.texture_scale, where);
  read_range(j, "ambient", b.ambient, where);
  read_range(j, "specular", b.specular, where);
  b.validate();
  return b;
}

json to_json(const RandomizationSpec& s) {
  json surfaces = json::object();
  for (int i = 0; i < kTexturedSurfaces; ++i) {
    const SurfaceAppearance& a = s.surfaces[i];
    surfaces[kSurfaceNames[i]] = json{{"translation", json::array({a.texture.tu, a.texture.tv})},
                                      {"rotation_deg", a.texture.rotation_deg},
                                      {"scale", json::array({a.texture.scale_u, a.texture.scale_v})},
                                      {"ambient", rgb_json(a.ambient)},
                                      {"specular", rgb_json(a.specular)}};
  }
  return json{{"position", json::array({s.position.x, s.position.y, s.position.z})},
              {"pan_deg", s.pan_deg},
              {"tilt_deg", s.tilt_deg},
              {"surfaces", surfaces}};
}

RandomizationSpec spec_from_json(const json& j) {
  try {
    RandomizationSpec s;
    const json& p = j.at("position");
    s.position = {p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()};
    s.pan_deg = j.at("pan_deg").get<double>();
    s.tilt_deg = j.at("tilt_deg").get<double>();
    for (int i = 0; i < kTexturedSurfaces; ++i) {
      const json& a = j.at("surfaces").at(kSurfaceNames[i]);
      SurfaceAppearance& out = s.surfaces[i];
      out.texture.tu = a.at("translation").at(0).get<double>();
      out.texture.tv = a.at("translation").at(1).get<double>();
      out.texture.rotation_deg = a.at("rotation_deg").get<double>();
      out.texture.scale_u = a.at("scale").at(0).get<double>();
      out.texture.scale_v = a.at("scale").at(1).get<double>();
      out.ambient = rgb_from(a.at("ambient"));
      out.specular = rgb_from(a.at("specular"));
    }
    return s;
  } catch (const json::exception& e) {
    throw UsageError(std::string("malformed randomization spec: ") + e.what());
  }
}

}  // namespace icsc
