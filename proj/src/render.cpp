#include "icsc/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace icsc {

namespace {

void check_range(const Range& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw UsageError(std::string("invalid bounds for ") + name);
  }
}

double sample(Rng& rng, const Range& r) { return uniform(rng, r.lo, r.hi); }

Rgb sample_rgb(Rng& rng, const Range& r) {
  Rgb c;
  c.r = sample(rng, r);
  c.g = sample(rng, r);
  c.b = sample(rng, r);
  return c;
}

// Rotation by a multiple of 90 degrees is exact, so rotating twice by 180
// returns the original coordinates bit-for-bit.
std::array<double, 2> rotate_deg(double x, double y, double deg) {
  double r = std::fmod(deg, 360.0);
  if (r < 0) r += 360.0;
  if (r == 0.0) return {x, y};
  if (r == 90.0) return {-y, x};
  if (r == 180.0) return {-x, -y};
  if (r == 270.0) return {y, -x};
  const double a = deg_to_rad(r);
  const double c = std::cos(a), s = std::sin(a);
  return {c * x - s * y, s * x + c * y};
}

double lattice(std::uint64_t salt, std::int64_t i, std::int64_t j) {
  const std::uint64_t h =
      splitmix64(salt ^ splitmix64(static_cast<std::uint64_t>(i) * 0x9e3779b97f4a7c15ULL +
                                   static_cast<std::uint64_t>(j)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t salt, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto i = static_cast<std::int64_t>(fx);
  const auto j = static_cast<std::int64_t>(fy);
  const double sx = smooth(x - fx), sy = smooth(y - fy);
  const double a = lattice(salt, i, j), b = lattice(salt, i + 1, j);
  const double c = lattice(salt, i, j + 1), d = lattice(salt, i + 1, j + 1);
  return (a + (b - a) * sx) * (1 - sy) + (c + (d - c) * sx) * sy;
}

constexpr std::uint64_t kPatternSalt = 0x5eed0f7e47a11e5ULL;
const Rgb kSky{0.62, 0.74, 0.88};
const Vec3 kLightDir = normalized(Vec3{0.5, -0.35, 0.8});  // toward the light
constexpr double kShininess = 20.0;

Rgb shade(const SceneHit& hit, const Vec3& view_dir, const RandomizationSpec& spec) {
  if (hit.surface == Surface::kSky) return kSky;
  const SurfaceAppearance& app = spec.surfaces[static_cast<int>(hit.surface)];
  const Rgb tex = procedural_texture(hit.surface, hit.u, hit.v, spec);
  const double lambert = std::max(0.0, dot(hit.normal, kLightDir));
  const Vec3 refl = hit.normal * (2.0 * dot(hit.normal, kLightDir)) - kLightDir;
  const double spec_term =
      lambert > 0.0 ? 0.5 * std::pow(std::max(0.0, -dot(refl, view_dir)), kShininess) : 0.0;
  const double diffuse = 0.4 + 0.6 * lambert;
  return {tex.r * diffuse + app.specular.r * spec_term, tex.g * diffuse + app.specular.g * spec_term,
          tex.b * diffuse + app.specular.b * spec_term};
}

std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
}

}  // namespace

void RandomizationBounds::validate() const {
  check_range(x, "x");
  check_range(y, "y");
  check_range(z, "z");
  check_range(pan_deg, "pan_deg");
  check_range(tilt_deg, "tilt_deg");
  check_range(texture_translation, "texture_translation");
  check_range(texture_rotation_deg, "texture_rotation_deg");
  check_range(texture_scale, "texture_scale");
  check_range(ambient, "ambient");
  check_range(specular, "specular");
  if (texture_scale.lo <= 0.0) throw UsageError("texture_scale must be positive");
  if (ambient.lo < 0.0 || ambient.hi > 1.0 || specular.lo < 0.0 || specular.hi > 1.0) {
    throw UsageError("colour bounds must lie in [0, 1]");
  }
  if (tilt_deg.lo <= -90.0 || tilt_deg.hi >= 90.0) throw UsageError("tilt must lie in (-90, 90)");
}

bool RandomizationBounds::contains_pose(const Vec3& p, double pan, double tilt) const {
  return x.contains(p.x) && y.contains(p.y) && z.contains(p.z) && pan_deg.contains(pan) &&
         tilt_deg.contains(tilt);
}

void SceneGeometry::validate() const {
  cylinder.validate();
  if (!(visible_length > 0.0)) throw UsageError("fuselage visible_length must be positive");
  if (!(wall_x < -cylinder.r0)) throw UsageError("wall_x must lie behind the fuselage (wall_x < -r0)");
  if (!(wall_height > 0.0)) throw UsageError("wall_height must be positive");
  if (!std::isfinite(centre_y)) throw UsageError("fuselage centre_y must be finite");
}

RandomizationSpec sample_spec(Rng& rng, const RandomizationBounds& b) {
  RandomizationSpec s;
  s.position.x = sample(rng, b.x);
  s.position.y = sample(rng, b.y);
  s.position.z = sample(rng, b.z);
  s.pan_deg = sample(rng, b.pan_deg);
  s.tilt_deg = sample(rng, b.tilt_deg);
  for (auto& surf : s.surfaces) {
    surf.texture.tu = sample(rng, b.texture_translation);
    surf.texture.tv = sample(rng, b.texture_translation);
    surf.texture.rotation_deg = sample(rng, b.texture_rotation_deg);
    surf.texture.scale_u = sample(rng, b.texture_scale);
    surf.texture.scale_v = sample(rng, b.texture_scale);
    surf.ambient = sample_rgb(rng, b.ambient);
    surf.specular = sample_rgb(rng, b.specular);
  }
  return s;
}

std::array<double, 2> texture_coordinates(const TextureTransform& t, double u, double v) {
  const auto r = rotate_deg(u / t.scale_u, v / t.scale_v, t.rotation_deg);
  return {r[0] + t.tu, r[1] + t.tv};
}

Rgb procedural_texture(Surface surface, double u, double v, const RandomizationSpec& spec) {
  if (surface == Surface::kSky) return kSky;
  const SurfaceAppearance& app = spec.surfaces[static_cast<int>(surface)];
  const auto p = texture_coordinates(app.texture, u, v);
  const std::uint64_t salt = kPatternSalt + static_cast<std::uint64_t>(surface);

  // Cells: one random tint per unit square, like scattered puzzle pieces.
  const auto ci = static_cast<std::int64_t>(std::floor(p[0]));
  const auto cj = static_cast<std::int64_t>(std::floor(p[1]));
  const double cr = 0.15 + 0.85 * lattice(salt, ci, cj);
  const double cg = 0.15 + 0.85 * lattice(salt + 1, ci, cj);
  const double cb = 0.15 + 0.85 * lattice(salt + 2, ci, cj);

  double n = 0.0, amp = 0.5, freq = 2.0;
  for (int octave = 0; octave < 4; ++octave) {
    n += amp * value_noise(salt + 16 + static_cast<std::uint64_t>(octave), p[0] * freq, p[1] * freq);
    amp *= 0.5;
    freq *= 2.0;
  }
  const double m = 0.55 + 0.45 * n / 0.9375;
  return {app.ambient.r * cr * m, app.ambient.g * cg * m, app.ambient.b * cb * m};
}

double quantize9(double v) { return std::round(v * 1e9) / 1e9; }

Pose spec_pose(const RandomizationSpec& spec) {
  const Quat q = quat_from_yaw_tilt(spec.pan_deg, spec.tilt_deg);
  return {{quantize9(spec.position.x), quantize9(spec.position.y), quantize9(spec.position.z)},
          {quantize9(q.w), quantize9(q.x), quantize9(q.y), quantize9(q.z)}};
}

SceneHit trace(const Ray& ray, const SceneGeometry& geo) {
  const Vec3& o = ray.origin;
  const Vec3& d = ray.direction;
  const CylinderModel& cyl = geo.cylinder;
  SceneHit best;
  best.t = std::numeric_limits<double>::infinity();

  const RayHit lateral = intersect_ray_cylinder(ray, cyl);
  if (lateral.hit && lateral.point.y >= geo.y_min() && lateral.point.y <= geo.y_max()) {
    best.surface = Surface::kFuselage;
    best.t = lateral.t;
    best.point = lateral.point;
    const double ang = std::atan2(lateral.point.x, lateral.point.z - cyl.h0);
    best.normal = Vec3{lateral.point.x, 0.0, lateral.point.z - cyl.h0} / cyl.r0;
    best.u = lateral.point.y;
    best.v = cyl.r0 * ang;
  }
  if (d.y != 0.0) {
    for (const double yc : {geo.y_min(), geo.y_max()}) {
      const double t = (yc - o.y) / d.y;
      if (t <= kEpsT || t >= best.t) continue;
      const Vec3 p = o + d * t;
      const double dz = p.z - cyl.h0;
      if (p.x * p.x + dz * dz > cyl.r0 * cyl.r0) continue;
      best.surface = Surface::kFuselage;
      best.t = t;
      best.point = p;
      best.normal = {0.0, yc == geo.y_min() ? -1.0 : 1.0, 0.0};
      best.u = p.x;
      best.v = p.z;
    }
  }
  if (d.z < 0.0) {
    const double t = -o.z / d.z;
    if (t > kEpsT && t < best.t) {
      best.surface = Surface::kGround;
      best.t = t;
      best.point = o + d * t;
      best.point.z = 0.0;
      best.normal = {0.0, 0.0, 1.0};
      best.u = best.point.x;
      best.v = best.point.y;
    }
  }
  if (d.x < 0.0) {
    const double t = (geo.wall_x - o.x) / d.x;
    if (t > kEpsT && t < best.t) {
      const Vec3 p = o + d * t;
      if (p.z >= 0.0 && p.z <= geo.wall_height) {
        best.surface = Surface::kWall;
        best.t = t;
        best.point = p;
        best.normal = {1.0, 0.0, 0.0};
        best.u = p.y;
        best.v = p.z;
      }
    }
  }
  return best;
}

void check_camera_position(const Vec3& p, const SceneGeometry& geo) {
  const double dz = p.z - geo.cylinder.h0;
  const bool in_fuselage = p.x * p.x + dz * dz <= geo.cylinder.r0 * geo.cylinder.r0 &&
                           p.y >= geo.y_min() && p.y <= geo.y_max();
  if (in_fuselage || p.z <= 0.0 || p.x <= geo.wall_x) {
    throw UsageError("camera inside scene geometry");
  }
}

RenderResult render_pose(const Pose& pose, const RandomizationSpec& spec, const CameraIntrinsics& intr,
                         const SceneGeometry& geo) {
  intr.validate();
  geo.validate();
  check_camera_position(pose.position, geo);
  RenderResult out;
  out.pose = pose;
  out.image = Image(intr.width, intr.height);
  out.fuselage_mask.assign(static_cast<std::size_t>(intr.width) * intr.height, 0);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Ray ray = pixel_ray(pose, intr, u, v);
      const SceneHit hit = trace(ray, geo);
      const Rgb c = shade(hit, ray.direction, spec);
      std::uint8_t* px = out.image.pixel(u, v);
      px[0] = to_byte(c.r);
      px[1] = to_byte(c.g);
      px[2] = to_byte(c.b);
      out.fuselage_mask[static_cast<std::size_t>(v) * intr.width + u] = hit.surface == Surface::kFuselage;
    }
  }
  const Ray centre = center_view_ray(pose);
  out.centre_hit = intersect_ray_cylinder(centre, geo.cylinder);
  const SceneHit first = trace(centre, geo);
  out.centre_on_fuselage = out.centre_hit.hit && first.surface == Surface::kFuselage &&
                           first.point == out.centre_hit.point;
  return out;
}

RenderResult render(const RandomizationSpec& spec, const CameraIntrinsics& intr, const SceneGeometry& geo) {
  return render_pose(spec_pose(spec), spec, intr, geo);
}

std::vector<std::uint8_t> fuselage_silhouette(const Pose& pose, const CameraIntrinsics& intr,
                                              const SceneGeometry& geo) {
  intr.validate();
  geo.validate();
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(intr.width) * intr.height, 0);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      mask[static_cast<std::size_t>(v) * intr.width + u] =
          trace(pixel_ray(pose, intr, u, v), geo).surface == Surface::kFuselage;
    }
  }
  return mask;
}

bool fuselage_end_in_view(const Pose& pose, const CameraIntrinsics& intr, const SceneGeometry& geo) {
  intr.validate();
  geo.validate();
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const RayHit h = intersect_ray_cylinder(pixel_ray(pose, intr, u, v), geo.cylinder);
      if (h.hit && (h.point.y < geo.y_min() || h.point.y > geo.y_max())) return true;
    }
  }
  return false;
}

double silhouette_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw UsageError("silhouette masks differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] != 0 && b[i] != 0);
    uni += (a[i] != 0 || b[i] != 0);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Image render_overlay(const Image& base, const Pose& pose, const CameraIntrinsics& intr,
                     const SceneGeometry& geo) {
  Image out = resize_bilinear(base, intr.width, intr.height);
  const auto mask = fuselage_silhouette(pose, intr, geo);
  auto at = [&](int u, int v) {
    if (u < 0 || v < 0 || u >= intr.width || v >= intr.height) return false;
    return mask[static_cast<std::size_t>(v) * intr.width + u] != 0;
  };
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      if (!at(u, v)) continue;
      const bool edge = !at(u - 1, v) || !at(u + 1, v) || !at(u, v - 1) || !at(u, v + 1);
      const double alpha = edge ? 1.0 : 0.5;
      std::uint8_t* px = out.pixel(u, v);
      px[0] = static_cast<std::uint8_t>(std::lround((1 - alpha) * px[0] + alpha * 255.0));
      px[1] = static_cast<std::uint8_t>(std::lround((1 - alpha) * px[1]));
      px[2] = static_cast<std::uint8_t>(std::lround((1 - alpha) * px[2]));
    }
  }
  return out;
}

}  // namespace icsc
