#include "icsc/geometry.hpp"

#include <algorithm>
#include <numbers>
#include <string>

namespace icsc {

namespace {

using Mat3 = std::array<std::array<double, 3>, 3>;
using Mat3x4 = std::array<std::array<double, 4>, 3>;

// Quadratic a t^2 + b t + c = 0 for the ray substituted into the surface.
struct Quadratic {
  double a;
  double b;
  double c;
  double disc;
};

Quadratic ray_quadratic(const Ray& ray, const CylinderModel& cyl) {
  const double ox = ray.origin.x;
  const double oz = ray.origin.z - cyl.h0;
  const double dx = ray.direction.x;
  const double dz = ray.direction.z;
  Quadratic q{};
  q.a = dx * dx + dz * dz;
  q.b = 2.0 * (ox * dx + oz * dz);
  q.c = ox * ox + oz * oz - cyl.r0 * cyl.r0;
  q.disc = q.b * q.b - 4.0 * q.a * q.c;
  return q;
}

constexpr double kParallelA = 1e-18;

// Radial projection of p onto the surface. Returns false when p lies on the axis.
bool project_to_surface(const Vec3& p, const CylinderModel& cyl, Vec3& out) {
  const double rx = p.x;
  const double rz = p.z - cyl.h0;
  const double rho = std::hypot(rx, rz);
  if (rho < 1e-15) {
    out = {0.0, p.y, cyl.h0 + cyl.r0};
    return false;
  }
  out = {cyl.r0 * rx / rho, p.y, cyl.h0 + cyl.r0 * rz / rho};
  return true;
}

enum class Classified { kHit, kTangentHit, kMiss };

struct Intersection {
  Classified kind = Classified::kMiss;
  double t = 0.0;
};

Intersection classify(const Ray& ray, const CylinderModel& cyl) {
  const Quadratic q = ray_quadratic(ray, cyl);
  if (q.a < kParallelA) return {};
  if (std::abs(q.disc) <= kTangentDiscriminant) {
    const double t = -q.b / (2.0 * q.a);
    if (t > kEpsT) return {Classified::kTangentHit, t};
    return {};
  }
  if (q.disc < 0.0) return {};
  // Numerically stable pair of roots.
  const double sq = std::sqrt(q.disc);
  const double qq = -0.5 * (q.b + std::copysign(sq, q.b));
  double t1 = qq / q.a;
  double t2 = (qq != 0.0) ? q.c / qq : t1;
  if (t1 > t2) std::swap(t1, t2);
  if (t1 > kEpsT) return {Classified::kHit, t1};
  if (t2 > kEpsT) return {Classified::kHit, t2};
  return {};
}

double fallback_parameter(const Ray& ray, const CylinderModel& cyl, bool& clamped) {
  const Quadratic q = ray_quadratic(ray, cyl);
  clamped = true;
  if (q.a < kParallelA) return kEpsT;
  const double t = -q.b / (2.0 * q.a);
  if (t <= kEpsT) return kEpsT;
  clamped = false;
  return t;
}

// d(rotated default view direction) / d(raw quaternion), including the
// division by |q|^2.
Mat3x4 view_direction_jacobian(const Quat& q) {
  const Vec3 v = kDefaultViewDirection;
  const Vec3 u{q.x, q.y, q.z};
  const double n2 = dot(q, q);
  const double uv = dot(u, v);
  const Vec3 uxv = cross(u, v);
  const Vec3 g = v * (q.w * q.w - dot(u, u)) + u * (2.0 * uv) + uxv * (2.0 * q.w);

  std::array<Vec3, 4> dg{};
  dg[0] = v * (2.0 * q.w) + uxv * 2.0;
  const std::array<Vec3, 3> basis{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
  for (int j = 0; j < 3; ++j) {
    const double uj = u[j];
    dg[j + 1] = v * (-2.0 * uj) + u * (2.0 * v[j]) + basis[j] * (2.0 * uv) +
                cross(basis[j], v) * (2.0 * q.w);
  }
  const std::array<double, 4> qa = q.as_array();
  Mat3x4 out{};
  for (int k = 0; k < 4; ++k) {
    const Vec3 col = dg[k] / n2 - g * (2.0 * qa[k] / (n2 * n2));
    out[0][k] = col.x;
    out[1][k] = col.y;
    out[2][k] = col.z;
  }
  return out;
}

// Assemble [dc/do | dc/dd * dd/dq] into a 3x7 Jacobian.
Jacobian3x7 assemble(const Mat3& dc_do, const Mat3& dc_dd, const Mat3x4& dd_dq) {
  Jacobian3x7 jac{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) jac[r][c] = dc_do[r][c];
    for (int k = 0; k < 4; ++k) {
      double s = 0.0;
      for (int m = 0; m < 3; ++m) s += dc_dd[r][m] * dd_dq[m][k];
      jac[r][3 + k] = s;
    }
  }
  return jac;
}

Jacobian3x7 hit_jacobian(const Ray& ray, double t, const Vec3& point, const Quat& q,
                         const CylinderModel& cyl) {
  const Vec3& d = ray.direction;
  const Vec3 n{point.x, 0.0, point.z - cyl.h0};
  const double nd = dot(n, d);
  const Vec3 dt_do = n * (-1.0 / nd);
  const Vec3 dt_dd = n * (-t / nd);
  Mat3 dc_do{};
  Mat3 dc_dd{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double id = (r == c) ? 1.0 : 0.0;
      dc_do[r][c] = id + d[r] * dt_do[c];
      dc_dd[r][c] = t * id + d[r] * dt_dd[c];
    }
  }
  return assemble(dc_do, dc_dd, view_direction_jacobian(q));
}

Jacobian3x7 fallback_jacobian(const Ray& ray, const Quat& q, const CylinderModel& cyl) {
  bool clamped = false;
  const double t = fallback_parameter(ray, cyl, clamped);
  const Vec3& o = ray.origin;
  const Vec3& d = ray.direction;
  const Vec3 p = o + d * t;

  Vec3 dt_do{};
  Vec3 dt_dd{};
  if (!clamped) {
    const double a = d.x * d.x + d.z * d.z;
    const double oz = o.z - cyl.h0;
    dt_do = Vec3{-d.x, 0.0, -d.z} / a;
    dt_dd = Vec3{-(o.x + 2.0 * t * d.x), 0.0, -(oz + 2.0 * t * d.z)} / a;
  }
  Mat3 dp_do{};
  Mat3 dp_dd{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const double id = (r == c) ? 1.0 : 0.0;
      dp_do[r][c] = id + d[r] * dt_do[c];
      dp_dd[r][c] = t * id + d[r] * dt_dd[c];
    }
  }

  const double px = p.x;
  const double pz = p.z - cyl.h0;
  const double rho = std::hypot(px, pz);
  const double rho3 = rho * rho * rho;
  Mat3 dc_dp{};
  dc_dp[0] = {cyl.r0 * (1.0 / rho - px * px / rho3), 0.0, -cyl.r0 * px * pz / rho3};
  dc_dp[1] = {0.0, 1.0, 0.0};
  dc_dp[2] = {-cyl.r0 * px * pz / rho3, 0.0, cyl.r0 * (1.0 / rho - pz * pz / rho3)};

  Mat3 dc_do{};
  Mat3 dc_dd{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double so = 0.0;
      double sd = 0.0;
      for (int m = 0; m < 3; ++m) {
        so += dc_dp[r][m] * dp_do[m][c];
        sd += dc_dp[r][m] * dp_dd[m][c];
      }
      dc_do[r][c] = so;
      dc_dd[r][c] = sd;
    }
  }
  return assemble(dc_do, dc_dd, view_direction_jacobian(q));
}

}  // namespace

Quat operator*(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

void CylinderModel::validate() const {
  if (!(r0 > 0.0)) throw UsageError("cylinder radius r0 must be positive");
  if (!(h0 > r0)) throw UsageError("cylinder axis height h0 must exceed r0");
}

void CameraIntrinsics::validate() const {
  if (!(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0)) {
    throw UsageError("horizontal_fov must lie in (0, 180) degrees");
  }
  if (!(aspect > 0.0)) throw UsageError("aspect must be positive");
  if (width < 1 || height < 1) throw UsageError("resolution must be at least 1x1");
}

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

Quat quat_normalize(const Quat& q) {
  const double n = norm(q);
  if (!(n > 1e-12)) throw UsageError("degenerate quaternion");
  Quat r{q.w / n, q.x / n, q.y / n, q.z / n};
  if (r.w < 0.0) r = -r;
  return r;
}

Vec3 quat_rotate(const Quat& q, const Vec3& v) {
  const Vec3 u{q.x, q.y, q.z};
  const double n2 = dot(q, q);
  const Vec3 g = v * (q.w * q.w - dot(u, u)) + u * (2.0 * dot(u, v)) + cross(u, v) * (2.0 * q.w);
  return g / n2;
}

Quat quat_from_axis_angle(const Vec3& axis, double angle_rad) {
  const Vec3 a = normalized(axis);
  const double s = std::sin(0.5 * angle_rad);
  return {std::cos(0.5 * angle_rad), a.x * s, a.y * s, a.z * s};
}

Quat quat_from_yaw_tilt(double yaw_deg, double tilt_deg) {
  // Rotation about +y carries the default view (-1,0,0) to (-cos t, 0, sin t).
  const Quat yaw = quat_from_axis_angle({0.0, 0.0, 1.0}, deg_to_rad(yaw_deg));
  const Quat tilt = quat_from_axis_angle({0.0, 1.0, 0.0}, deg_to_rad(tilt_deg));
  return quat_normalize(yaw * tilt);
}

double angular_error(const Quat& q1, const Quat& q2) {
  const double c = std::min(1.0, std::abs(dot(q1, q2)));
  return rad_to_deg(2.0 * std::acos(c));
}

Ray center_view_ray(const Pose& pose) {
  return {pose.position, normalized(quat_rotate(pose.orientation, kDefaultViewDirection))};
}

Ray pixel_ray(const Pose& pose, const CameraIntrinsics& intr, int u, int v) {
  if (u < 0 || u >= intr.width || v < 0 || v >= intr.height) {
    throw UsageError("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                     ") outside image");
  }
  const double tan_h = std::tan(deg_to_rad(0.5 * intr.horizontal_fov_deg));
  const double tan_v = tan_h / intr.aspect;
  const double sx = (2.0 * (u + 0.5) / intr.width - 1.0) * tan_h;
  const double sy = (1.0 - 2.0 * (v + 0.5) / intr.height) * tan_v;
  // Camera frame: forward -x, right +y, up +z.
  const Vec3 local = normalized(Vec3{-1.0, sx, sy});
  return {pose.position, normalized(quat_rotate(pose.orientation, local))};
}

RayHit intersect_ray_cylinder(const Ray& ray, const CylinderModel& cyl) {
  const Intersection is = classify(ray, cyl);
  if (is.kind == Classified::kMiss) return fallback_surface_point(ray, cyl);
  RayHit out;
  out.t = is.t;
  out.hit = true;
  out.point = ray.origin + ray.direction * is.t;
  if (is.kind == Classified::kTangentHit) {
    // Grazing: snap onto the surface so the residual stays at rounding level.
    Vec3 snapped;
    project_to_surface(out.point, cyl, snapped);
    out.point = snapped;
  }
  return out;
}

RayHit fallback_surface_point(const Ray& ray, const CylinderModel& cyl) {
  bool clamped = false;
  const double t = fallback_parameter(ray, cyl, clamped);
  RayHit out;
  out.t = t;
  out.hit = false;
  out.degenerate = !project_to_surface(ray.origin + ray.direction * t, cyl, out.point);
  return out;
}

Vec3 icsc_point(const Pose& pose, const CylinderModel& cyl) {
  return intersect_ray_cylinder(center_view_ray(pose), cyl).point;
}

Jacobian3x7 icsc_jacobian(const Pose& pose, const CylinderModel& cyl) {
  const Ray ray = center_view_ray(pose);
  const Intersection is = classify(ray, cyl);
  if (is.kind != Classified::kHit) {
    throw NonDifferentiableRegion(is.kind == Classified::kTangentHit
                                      ? "non-differentiable region: tangent ray"
                                      : "non-differentiable region: ray misses cylinder");
  }
  const Vec3 point = ray.origin + ray.direction * is.t;
  return hit_jacobian(ray, is.t, point, pose.orientation, cyl);
}

IcscDerivative icsc_with_jacobian(const Pose& pose, const CylinderModel& cyl) {
  const Ray ray = center_view_ray(pose);
  const Intersection is = classify(ray, cyl);
  IcscDerivative out;
  if (is.kind == Classified::kHit) {
    out.point = ray.origin + ray.direction * is.t;
    out.jacobian = hit_jacobian(ray, is.t, out.point, pose.orientation, cyl);
    out.branch = IcscBranch::kHit;
    return out;
  }
  // Tangent hits coincide with the fallback point, so the fallback Jacobian
  // is the one-sided derivative from the miss side.
  const RayHit fb = fallback_surface_point(ray, cyl);
  out.point = fb.point;
  if (fb.degenerate) {
    out.branch = IcscBranch::kDegenerate;
    return out;
  }
  out.branch = IcscBranch::kFallback;
  out.jacobian = fallback_jacobian(ray, pose.orientation, cyl);
  return out;
}

}  // namespace icsc
