#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "icsc/geometry.hpp"
#include "icsc/image.hpp"
#include "icsc/random.hpp"

namespace icsc {

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  bool operator==(const Rgb&) const = default;
};

/// Closed interval used by the sampler. lo == hi yields exactly lo.
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Sampling box for camera poses and per-surface appearance.
struct RandomizationBounds {
  Range x{5.0, 9.0};
  Range y{-9.25, -5.25};
  Range z{6.25, 7.25};
  Range pan_deg{10.0, 30.0};
  Range tilt_deg{-18.5, -17.5};
  Range texture_translation{-10.0, 10.0};  // pattern units, both axes
  Range texture_rotation_deg{0.0, 360.0};
  Range texture_scale{0.5, 2.0};           // metres per pattern unit, each axis
  Range ambient{0.2, 1.0};                 // per channel
  Range specular{0.0, 1.0};                // per channel

  void validate() const;
  bool contains_pose(const Vec3& p, double pan, double tilt) const;
};

struct TextureTransform {
  double tu = 0.0;
  double tv = 0.0;
  double rotation_deg = 0.0;
  double scale_u = 1.0;
  double scale_v = 1.0;
  bool operator==(const TextureTransform&) const = default;
};

struct SurfaceAppearance {
  TextureTransform texture;
  Rgb ambient{1.0, 1.0, 1.0};
  Rgb specular{0.0, 0.0, 0.0};
  bool operator==(const SurfaceAppearance&) const = default;
};

enum class Surface { kFuselage = 0, kGround = 1, kWall = 2, kSky = 3 };
inline constexpr int kTexturedSurfaces = 3;

struct RandomizationSpec {
  Vec3 position;
  double pan_deg = 20.0;
  double tilt_deg = -18.0;
  std::array<SurfaceAppearance, kTexturedSurfaces> surfaces{};
  bool operator==(const RandomizationSpec&) const = default;
};

/// Renderable scene. The fuselage is a capped cylinder of finite length;
/// the scene coordinate maths elsewhere uses the infinite cylinder.
struct SceneGeometry {
  CylinderModel cylinder{};
  double visible_length = 20.0;
  double centre_y = -7.25;
  double wall_x = -20.0;
  double wall_height = 10.0;

  void validate() const;
  double y_min() const { return centre_y - 0.5 * visible_length; }
  double y_max() const { return centre_y + 0.5 * visible_length; }
};

/// Independent uniform draw of every field.
RandomizationSpec sample_spec(Rng& rng, const RandomizationBounds& bounds);

/// Pattern coordinates: rotate(uv / scale) + translation.
std::array<double, 2> texture_coordinates(const TextureTransform& t, double u, double v);

/// Multi-scale cell/noise pattern, modulated by the surface's ambient colour.
Rgb procedural_texture(Surface surface, double u, double v, const RandomizationSpec& spec);

/// Label pose of a spec, rounded to the 9 decimals stored in manifests.
Pose spec_pose(const RandomizationSpec& spec);
double quantize9(double v);

struct SceneHit {
  Surface surface = Surface::kSky;
  double t = 0.0;
  Vec3 point;
  Vec3 normal;
  double u = 0.0;
  double v = 0.0;
};

/// First surface the ray meets (kSky if none).
SceneHit trace(const Ray& ray, const SceneGeometry& geo);

struct RenderResult {
  Image image;
  Pose pose;
  /// Centre view ray against the fuselage via the shared intersection code.
  RayHit centre_hit;
  /// True when the first scene surface on the centre ray is the fuselage.
  bool centre_on_fuselage = false;
  std::vector<std::uint8_t> fuselage_mask;  // 1 where the pixel sees the fuselage
};

/// Throws UsageError if the camera sits inside the fuselage, below the
/// ground or behind the wall.
void check_camera_position(const Vec3& p, const SceneGeometry& geo);

RenderResult render(const RandomizationSpec& spec, const CameraIntrinsics& intr, const SceneGeometry& geo);
/// Renders an explicit pose with the appearance of `spec`.
RenderResult render_pose(const Pose& pose, const RandomizationSpec& spec, const CameraIntrinsics& intr,
                         const SceneGeometry& geo);

std::vector<std::uint8_t> fuselage_silhouette(const Pose& pose, const CameraIntrinsics& intr,
                                              const SceneGeometry& geo);

/// True if some pixel sees where the infinite cylinder continues past the
/// fuselage ends. Otherwise the silhouette is invariant to shifts along y.
bool fuselage_end_in_view(const Pose& pose, const CameraIntrinsics& intr, const SceneGeometry& geo);

/// Intersection over union of two equal-length masks; 1.0 if both are empty.
double silhouette_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

/// Red-tinted fuselage silhouette of `pose` (outline fully red) composited over
/// `base`, which is resized to the intrinsics' resolution if needed.
Image render_overlay(const Image& base, const Pose& pose, const CameraIntrinsics& intr,
                     const SceneGeometry& geo);

}  // namespace icsc
