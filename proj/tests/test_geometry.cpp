#include <doctest.h>

#include <cmath>
#include <numbers>

#include "icsc/geometry.hpp"
#include "oracles.hpp"

using namespace icsc;
using doctest::Approx;

namespace {

void check_vec(const Vec3& a, const Vec3& b, double tol) {
  CHECK(std::abs(a.x - b.x) <= tol);
  CHECK(std::abs(a.y - b.y) <= tol);
  CHECK(std::abs(a.z - b.z) <= tol);
}

const CylinderModel kTestCyl{2.0, 4.0};
const CylinderModel kDefaultCyl{};

Quat yaw_about_z(double deg) { return quat_from_axis_angle({0, 0, 1}, deg_to_rad(deg)); }

}  // namespace

TEST_CASE("quat_normalize scales and canonicalises the hemisphere") {
  const Quat a = quat_normalize({2, 0, 0, 0});
  CHECK(a == Quat{1, 0, 0, 0});
  CHECK(quat_normalize({-1, 0, 0, 0}) == Quat{1, 0, 0, 0});
  const Quat c = quat_normalize({1, 1, 1, 1});
  CHECK(c.w == Approx(0.5).epsilon(1e-15));
  CHECK(c.x == Approx(0.5).epsilon(1e-15));
  CHECK(c.z == Approx(0.5).epsilon(1e-15));
  const Quat d = quat_normalize({-0.3, 0.2, -0.1, 0.9});
  CHECK(d.w > 0.0);
  CHECK(norm(d) == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_WITH_AS(quat_normalize({0, 0, 0, 0}), "degenerate quaternion", UsageError);
  CHECK_THROWS_AS(quat_normalize({1e-13, 0, 0, 0}), UsageError);
}

TEST_CASE("quat_rotate matches hand evaluations and the matrix form") {
  check_vec(quat_rotate({1, 0, 0, 0}, {-1, 0, 0}), {-1, 0, 0}, 0.0);
  check_vec(quat_rotate(yaw_about_z(90), {-1, 0, 0}), {0, -1, 0}, 1e-15);
  check_vec(quat_rotate({0.5, 0.5, 0.5, 0.5}, {1, 0, 0}), {0, 1, 0}, 1e-15);
  check_vec(oracle::apply(oracle::rotation_matrix({0.5, 0.5, 0.5, 0.5}), {1, 0, 0}), {0, 1, 0},
            1e-15);

  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const Quat q = quat_normalize({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                                   uniform(rng, -1, 1)});
    const Vec3 v{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)};
    const Vec3 r = quat_rotate(q, v);
    CHECK(std::abs(norm(r) - norm(v)) < 1e-9);
    check_vec(r, oracle::apply(oracle::rotation_matrix(q), v), 1e-12);
  }
}

TEST_CASE("quat_from_yaw_tilt composes pan then tilt") {
  const Quat id = quat_from_yaw_tilt(0, 0);
  CHECK(id.w == Approx(1.0));
  CHECK(std::abs(id.x) + std::abs(id.y) + std::abs(id.z) < 1e-15);

  check_vec(quat_rotate(quat_from_yaw_tilt(90, 0), kDefaultViewDirection), {0, -1, 0}, 1e-15);

  const Vec3 d = quat_rotate(quat_from_yaw_tilt(20, -18), kDefaultViewDirection);
  CHECK(d.z == Approx(-std::sin(deg_to_rad(18.0))).epsilon(1e-12));
  CHECK(d.z == Approx(-0.309).epsilon(1e-3));
  // Spherical decomposition: horizontal part keeps the pan angle.
  CHECK(std::atan2(-d.y, -d.x) == Approx(deg_to_rad(20.0)).epsilon(1e-12));
  CHECK(std::hypot(d.x, d.y) == Approx(std::cos(deg_to_rad(18.0))).epsilon(1e-12));
}

TEST_CASE("angular_error is the geodesic angle") {
  Rng rng(5);
  const Quat q = quat_normalize({0.3, -0.2, 0.8, 0.1});
  CHECK(angular_error(q, q) == Approx(0.0));
  CHECK(angular_error(q, -q) == Approx(0.0));
  CHECK(angular_error({1, 0, 0, 0}, yaw_about_z(90)) == Approx(90.0).epsilon(1e-12));

  for (int i = 0; i < 200; ++i) {
    const Quat a = quat_normalize({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                                   uniform(rng, -1, 1)});
    const Quat b = quat_normalize({uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1),
                                   uniform(rng, -1, 1)});
    const double e = angular_error(a, b);
    CHECK(e >= 0.0);
    CHECK(e <= 180.0);
    CHECK(e == angular_error(b, a));
    CHECK(e == angular_error(-a, b));
  }
}

TEST_CASE("center_view_ray follows the orientation") {
  const Ray r = center_view_ray({{7, -7, 7}, {1, 0, 0, 0}});
  check_vec(r.origin, {7, -7, 7}, 0.0);
  check_vec(r.direction, {-1, 0, 0}, 0.0);
  check_vec(center_view_ray({{0, 0, 0}, quat_from_yaw_tilt(90, 0)}).direction, {0, -1, 0}, 1e-15);
  const double c = std::cos(deg_to_rad(18.0));
  const double s = std::sin(deg_to_rad(18.0));
  check_vec(center_view_ray({{0, 0, 0}, quat_from_yaw_tilt(0, -18)}).direction, {-c, 0, -s}, 1e-15);
}

TEST_CASE("pixel_ray pinhole geometry") {
  const Pose pose{{7, -7, 7}, quat_from_yaw_tilt(20, -18)};
  SUBCASE("odd resolution: centre pixel is the view ray") {
    const CameraIntrinsics intr{61.6, 16.0 / 9.0, 129, 73};
    const Ray centre = pixel_ray(pose, intr, 64, 36);
    check_vec(centre.direction, center_view_ray(pose).direction, 1e-12);
  }
  SUBCASE("even resolution: normalised mean of the four centre pixels") {
    const CameraIntrinsics intr{};
    Vec3 sum{};
    for (int du = 0; du < 2; ++du) {
      for (int dv = 0; dv < 2; ++dv) sum += pixel_ray(pose, intr, 63 + du, 35 + dv).direction;
    }
    check_vec(normalized(sum), center_view_ray(pose).direction, 1e-9);
  }
  SUBCASE("leftmost column and top row angular offsets") {
    const CameraIntrinsics intr{61.6, 16.0 / 9.0, 129, 73};
    const Pose ident{{0, 0, 0}, {1, 0, 0, 0}};
    const double tan_h = std::tan(deg_to_rad(30.8));
    const Vec3 left = pixel_ray(ident, intr, 0, 36).direction;
    // Left of a -x facing camera is -y; offset is half a pixel short of the edge.
    CHECK(std::atan2(-left.y, -left.x) ==
          Approx(std::atan((1.0 - 1.0 / 129.0) * tan_h)).epsilon(1e-12));
    CHECK(std::abs(left.z) < 1e-15);
    const Vec3 top = pixel_ray(ident, intr, 64, 0).direction;
    CHECK(std::atan2(top.z, -top.x) ==
          Approx(std::atan((1.0 - 1.0 / 73.0) * tan_h * 9.0 / 16.0)).epsilon(1e-12));
  }
  SUBCASE("out of range") {
    const CameraIntrinsics intr{};
    CHECK_THROWS_AS(pixel_ray(pose, intr, -1, 0), UsageError);
    CHECK_THROWS_AS(pixel_ray(pose, intr, 128, 0), UsageError);
    CHECK_THROWS_AS(pixel_ray(pose, intr, 0, 72), UsageError);
  }
}

TEST_CASE("intersect_ray_cylinder examples") {
  const RayHit straight = intersect_ray_cylinder({{7, -7, 4}, {-1, 0, 0}}, kTestCyl);
  CHECK(straight.hit);
  CHECK(straight.t == Approx(5.0).epsilon(1e-15));
  check_vec(straight.point, {2, -7, 4}, 1e-12);

  const RayHit tangent = intersect_ray_cylinder({{7, -7, 6}, {-1, 0, 0}}, kTestCyl);
  CHECK(tangent.hit);
  CHECK(tangent.t == Approx(7.0).epsilon(1e-15));
  check_vec(tangent.point, {0, -7, 6}, 1e-12);

  const RayHit miss = intersect_ray_cylinder({{7, -7, 7}, {-1, 0, 0}}, kTestCyl);
  CHECK_FALSE(miss.hit);
  CHECK_FALSE(miss.degenerate);
  check_vec(miss.point, {0, -7, 6}, 1e-12);

  // Origin inside the cylinder: the only forward root is the far wall.
  const RayHit inside = intersect_ray_cylinder({{0, 0, 4}, {-1, 0, 0}}, kTestCyl);
  CHECK(inside.hit);
  CHECK(inside.t == Approx(2.0));

  // Surface behind the camera.
  const RayHit behind = intersect_ray_cylinder({{7, 0, 4}, {1, 0, 0}}, kTestCyl);
  CHECK_FALSE(behind.hit);
}

TEST_CASE("fallback_surface_point") {
  const RayHit fb = fallback_surface_point({{7, -7, 7}, {-1, 0, 0}}, kTestCyl);
  check_vec(fb.point, {0, -7, 6}, 1e-12);
  CHECK_FALSE(fb.hit);

  const Ray grazing{{7, -7, 6}, {-1, 0, 0}};
  check_vec(fallback_surface_point(grazing, kTestCyl).point,
            intersect_ray_cylinder(grazing, kTestCyl).point, 1e-12);

  const RayHit degenerate = fallback_surface_point({{0, 3, 4}, {0, 1, 0}}, kTestCyl);
  CHECK(degenerate.degenerate);
  check_vec(degenerate.point, {0, 3, 6}, 1e-5);

  // Parallel to the axis but off it: projects radially, not degenerate.
  const RayHit parallel = intersect_ray_cylinder({{3, 0, 4}, {0, 1, 0}}, kTestCyl);
  CHECK_FALSE(parallel.hit);
  CHECK_FALSE(parallel.degenerate);
  check_vec(parallel.point, {2, 1e-6, 4}, 1e-9);
}

TEST_CASE("fallback converges to the tangent point from the miss side") {
  // Tangent point at angle phi on the cross-section, with a y-component in the ray.
  const double phi = deg_to_rad(55.0);
  const Vec3 normal{std::cos(phi), 0.0, std::sin(phi)};
  const Vec3 tangent_pt{kDefaultCyl.r0 * normal.x, -3.0, kDefaultCyl.h0 + kDefaultCyl.r0 * normal.z};
  const Vec3 dir = normalized(Vec3{std::sin(phi), 0.4, -std::cos(phi)});
  for (double offset : {1e-2, 1e-4, 1e-6}) {
    const Ray ray{tangent_pt - dir * 6.0 + normal * offset, dir};
    const RayHit r = intersect_ray_cylinder(ray, kDefaultCyl);
    const Vec3 expected = tangent_pt + normal * 0.0;
    CHECK(norm(r.point - expected) <= 2.0 * offset + 1e-9);
  }
}

TEST_CASE("closed form agrees with the ray-march oracle") {
  Rng rng(2024);
  int hits = 0;
  for (int i = 0; i < 200; ++i) {
    const Pose pose = oracle::random_boundary_pose(rng);
    const Ray ray = center_view_ray(pose);
    const RayHit got = intersect_ray_cylinder(ray, kDefaultCyl);
    const auto ref = oracle::ray_march(ray.origin, ray.direction, kDefaultCyl.r0, kDefaultCyl.h0);
    REQUIRE(got.hit == ref.has_value());
    if (got.hit) {
      ++hits;
      CHECK(norm(got.point - ref->point) < 1e-3);
      CHECK(std::abs(kDefaultCyl.residual(got.point)) < 1e-9);
      CHECK(norm(got.point - (ray.origin + ray.direction * got.t)) < 1e-9);
      CHECK(got.t > kEpsT);
    }
  }
  CHECK(hits == 200);

  // Shallower tilts and wider pans produce genuine misses as well.
  int misses = 0;
  for (int i = 0; i < 300; ++i) {
    const Pose pose{{uniform(rng, 3.0, 12.0), uniform(rng, -9, -5), uniform(rng, 5.0, 9.0)},
                    quat_from_yaw_tilt(uniform(rng, -60, 60), uniform(rng, -25, 5))};
    const Ray ray = center_view_ray(pose);
    const RayHit got = intersect_ray_cylinder(ray, kDefaultCyl);
    const auto ref = oracle::ray_march(ray.origin, ray.direction, kDefaultCyl.r0, kDefaultCyl.h0);
    CHECK(got.hit == ref.has_value());
    if (got.hit && ref) CHECK(norm(got.point - ref->point) < 1e-3);
    if (!got.hit) ++misses;
  }
  CHECK(misses > 20);
}

TEST_CASE("returned t is the smallest root past the threshold") {
  Rng rng(77);
  for (int i = 0; i < 300; ++i) {
    const Ray ray{{uniform(rng, -6, 6), uniform(rng, -5, 5), uniform(rng, 0, 8)},
                  normalized(Vec3{uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)})};
    const RayHit got = intersect_ray_cylinder(ray, kDefaultCyl);
    if (!got.hit) continue;
    // Both quadratic roots, computed directly.
    const double ox = ray.origin.x, oz = ray.origin.z - kDefaultCyl.h0;
    const double a = ray.direction.x * ray.direction.x + ray.direction.z * ray.direction.z;
    const double b = 2 * (ox * ray.direction.x + oz * ray.direction.z);
    const double c = ox * ox + oz * oz - kDefaultCyl.r0 * kDefaultCyl.r0;
    const double sq = std::sqrt(std::max(0.0, b * b - 4 * a * c));
    for (double root : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
      if (root > kEpsT) CHECK(root >= got.t - 1e-9);
    }
  }
}

TEST_CASE("icsc examples") {
  const Pose straight{{7, -7, 4}, {1, 0, 0, 0}};
  check_vec(icsc_point(straight, kTestCyl), {2, -7, 4}, 1e-12);

  // Panned and tilted from the same spot the ray passes under the h0 = 4
  // cylinder; both routes must call it a miss. The default cylinder is hit.
  const Pose panned{{7, -7, 4}, quat_from_yaw_tilt(20, -18)};
  const Ray ray = center_view_ray(panned);
  CHECK_FALSE(oracle::ray_march(ray.origin, ray.direction, kTestCyl.r0, kTestCyl.h0).has_value());
  CHECK_FALSE(intersect_ray_cylinder(ray, kTestCyl).hit);

  const auto ref = oracle::ray_march(ray.origin, ray.direction, kDefaultCyl.r0, kDefaultCyl.h0);
  REQUIRE(ref.has_value());
  CHECK(norm(icsc_point(panned, kDefaultCyl) - ref->point) < 1e-3);
  CHECK(std::abs(kDefaultCyl.residual(icsc_point(panned, kDefaultCyl))) < 1e-9);
}

TEST_CASE("icsc_jacobian") {
  const Pose straight{{7, -7, 4}, {1, 0, 0, 0}};
  const Jacobian3x7 j = icsc_jacobian(straight, kTestCyl);
  CHECK(j[1][1] == 1.0);
  CHECK(j[0][0] == 0.0);

  CHECK_THROWS_AS(icsc_jacobian({{7, -7, 6}, {1, 0, 0, 0}}, kTestCyl), NonDifferentiableRegion);
  CHECK_THROWS_AS(icsc_jacobian({{7, -7, 7}, {1, 0, 0, 0}}, kTestCyl), NonDifferentiableRegion);

  SUBCASE("matches central differences on random boundary poses") {
    Rng rng(99);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Pose pose = oracle::random_boundary_pose(rng);
      const Jacobian3x7 analytic = icsc_jacobian(pose, kDefaultCyl);
      const auto fd = oracle::central_jacobian<3>(
          [&](const std::array<double, 7>& v) {
            const Vec3 c = icsc_point({{v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]}}, kDefaultCyl);
            return std::array<double, 3>{c.x, c.y, c.z};
          },
          {pose.position.x, pose.position.y, pose.position.z, pose.orientation.w,
           pose.orientation.x, pose.orientation.y, pose.orientation.z});
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 7; ++c) worst = std::max(worst, oracle::rel_err(analytic[r][c], fd[r][c]));
      }
    }
    CHECK(worst < 1e-4);
  }

  SUBCASE("fallback Jacobian matches central differences on missing rays") {
    Rng rng(100);
    int checked = 0;
    double worst = 0.0;
    while (checked < 100) {
      const Pose pose{{uniform(rng, 5, 9), uniform(rng, -9, -5), uniform(rng, 6, 9)},
                      quat_normalize({uniform(rng, 0.5, 1), uniform(rng, -0.3, 0.3),
                                      uniform(rng, -0.3, 0.3), uniform(rng, -0.3, 0.3)})};
      const IcscDerivative d = icsc_with_jacobian(pose, kDefaultCyl);
      if (d.branch != IcscBranch::kFallback) continue;
      const auto fd = oracle::central_jacobian<3>(
          [&](const std::array<double, 7>& v) {
            const Vec3 c = icsc_point({{v[0], v[1], v[2]}, {v[3], v[4], v[5], v[6]}}, kDefaultCyl);
            return std::array<double, 3>{c.x, c.y, c.z};
          },
          {pose.position.x, pose.position.y, pose.position.z, pose.orientation.w,
           pose.orientation.x, pose.orientation.y, pose.orientation.z});
      bool near_boundary = false;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 7; ++c) {
          if (!std::isfinite(fd[r][c]) || std::abs(fd[r][c]) > 1e4) near_boundary = true;
        }
      }
      if (near_boundary) continue;
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 7; ++c) worst = std::max(worst, oracle::rel_err(d.jacobian[r][c], fd[r][c]));
      }
      ++checked;
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("invalid configuration values are rejected") {
  CHECK_THROWS_AS((CylinderModel{0.0, 3.0}.validate()), UsageError);
  CHECK_THROWS_AS((CylinderModel{2.0, 1.5}.validate()), UsageError);
  CHECK_NOTHROW(CylinderModel{}.validate());
  CHECK_THROWS_AS((CameraIntrinsics{180.0, 1.0, 10, 10}.validate()), UsageError);
  CHECK_THROWS_AS((CameraIntrinsics{60.0, 1.0, 0, 10}.validate()), UsageError);
}
