#pragma once

#include <array>
#include <cmath>

#include "icsc/error.hpp"

namespace icsc {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) { return v / norm(v); }

/// Quaternion stored scalar-first (w, x, y, z).
struct Quat {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Quat operator-() const { return {-w, -x, -y, -z}; }
  constexpr bool operator==(const Quat&) const = default;
  constexpr std::array<double, 4> as_array() const { return {w, x, y, z}; }
};

constexpr double dot(const Quat& a, const Quat& b) {
  return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}
inline double norm(const Quat& q) { return std::sqrt(dot(q, q)); }
Quat operator*(const Quat& a, const Quat& b);

/// Camera pose: position in metres (world frame) and orientation.
struct Pose {
  Vec3 position;
  Quat orientation;
};

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
};

/// Fuselage surface x^2 + (z - h0)^2 = r0^2, axis parallel to world y.
struct CylinderModel {
  double r0 = 2.0;
  double h0 = 3.5;

  void validate() const;
  /// Signed residual of the surface equation at `p` (zero on the surface).
  double residual(const Vec3& p) const {
    const double dz = p.z - h0;
    return p.x * p.x + dz * dz - r0 * r0;
  }
};

struct RayHit {
  Vec3 point;
  double t = 0.0;
  bool hit = false;
  bool degenerate = false;  // only meaningful for fallback results
};

struct CameraIntrinsics {
  double horizontal_fov_deg = 61.6;
  double aspect = 16.0 / 9.0;
  int width = 128;
  int height = 72;

  void validate() const;
};

/// Forward-hit threshold on the ray parameter, metres.
inline constexpr double kEpsT = 1e-6;
/// |discriminant| at or below this is classified as a tangent (double root).
inline constexpr double kTangentDiscriminant = 1e-9;
/// Camera looks along -x in its own frame; +y is right, +z is up.
inline constexpr Vec3 kDefaultViewDirection{-1.0, 0.0, 0.0};

double deg_to_rad(double deg);
double rad_to_deg(double rad);

/// Unit quaternion with w >= 0. Throws UsageError("degenerate quaternion") for |q| <= 1e-12.
Quat quat_normalize(const Quat& q);

/// q v q^-1. Accepts non-unit q (the result is divided by |q|^2).
Vec3 quat_rotate(const Quat& q, const Vec3& v);

Quat quat_from_axis_angle(const Vec3& axis, double angle_rad);

/// Pan about world +z, then tilt about the camera's horizontal axis.
/// Negative tilt pitches the view toward the ground.
Quat quat_from_yaw_tilt(double yaw_deg, double tilt_deg);

/// Geodesic angle between rotations in degrees, in [0, 180].
double angular_error(const Quat& q1, const Quat& q2);

Ray center_view_ray(const Pose& pose);

/// Pinhole ray through the centre of pixel (u, v). Throws UsageError out of range.
Ray pixel_ray(const Pose& pose, const CameraIntrinsics& intr, int u, int v);

/// Nearest forward intersection with the infinite cylinder; falls back to
/// fallback_surface_point() (hit == false) when there is none.
RayHit intersect_ray_cylinder(const Ray& ray, const CylinderModel& cyl);

/// Closest approach of the ray to the axis, radially projected onto the surface.
RayHit fallback_surface_point(const Ray& ray, const CylinderModel& cyl);

/// Image centre scene coordinate: where the centre view ray meets the fuselage.
Vec3 icsc_point(const Pose& pose, const CylinderModel& cyl);

/// Row-major 3x7 Jacobian; columns are (px, py, pz, qw, qx, qy, qz).
using Jacobian3x7 = std::array<std::array<double, 7>, 3>;

/// Raised by icsc_jacobian() for tangent or fallback configurations.
class NonDifferentiableRegion : public Error {
 public:
  using Error::Error;
};

/// d icsc / d(position, orientation) for a genuine, non-tangent hit. The
/// orientation columns are taken w.r.t. the raw quaternion, with the
/// normalisation inside the rotation included.
Jacobian3x7 icsc_jacobian(const Pose& pose, const CylinderModel& cyl);

enum class IcscBranch { kHit, kFallback, kDegenerate };

struct IcscDerivative {
  Vec3 point;
  Jacobian3x7 jacobian{};
  IcscBranch branch = IcscBranch::kHit;
};

/// Point plus whichever analytic Jacobian applies (hit or fallback). The
/// degenerate fallback returns a zero Jacobian.
IcscDerivative icsc_with_jacobian(const Pose& pose, const CylinderModel& cyl);

}  // namespace icsc
