#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls the closed-form intersection or any analytic derivative.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "icsc/geometry.hpp"
#include "icsc/random.hpp"

namespace icsc::oracle {

struct MarchHit {
  Vec3 point;
  double t;
};

/// Marches along the ray in fixed steps until the surface equation changes
/// sign, then bisects the bracket. Starts just past the forward threshold.
inline std::optional<MarchHit> ray_march(const Vec3& origin, const Vec3& dir, double r0, double h0,
                                         double max_t = 60.0, double step = 1e-4) {
  auto f = [&](double t) {
    const double x = origin.x + t * dir.x;
    const double z = origin.z + t * dir.z - h0;
    return x * x + z * z - r0 * r0;
  };
  double t0 = 1e-6;
  double f0 = f(t0);
  const long steps = static_cast<long>(max_t / step);
  for (long i = 1; i <= steps; ++i) {
    const double t1 = 1e-6 + static_cast<double>(i) * step;
    const double f1 = f(t1);
    if ((f0 > 0.0) != (f1 > 0.0) || f1 == 0.0) {
      double lo = t0, hi = t1;
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((f(mid) > 0.0) == (f0 > 0.0)) lo = mid; else hi = mid;
      }
      const double t = 0.5 * (lo + hi);
      return MarchHit{origin + dir * t, t};
    }
    t0 = t1;
    f0 = f1;
  }
  return std::nullopt;
}

/// Rotation matrix of a unit quaternion (w, x, y, z), used as an
/// independent check on the Hamilton-product rotation.
inline std::array<std::array<double, 3>, 3> rotation_matrix(const Quat& q) {
  const double w = q.w, x = q.x, y = q.y, z = q.z;
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

inline Vec3 apply(const std::array<std::array<double, 3>, 3>& m, const Vec3& v) {
  return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
          m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
          m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
}

/// Central differences of a vector function of a 7-vector: out[r][c].
template <std::size_t R>
std::array<std::array<double, 7>, R> central_jacobian(
    const std::function<std::array<double, R>(const std::array<double, 7>&)>& fn,
    const std::array<double, 7>& at, double h = 1e-5) {
  std::array<std::array<double, 7>, R> out{};
  for (std::size_t c = 0; c < 7; ++c) {
    auto plus = at;
    auto minus = at;
    plus[c] += h;
    minus[c] -= h;
    const auto fp = fn(plus);
    const auto fm = fn(minus);
    for (std::size_t r = 0; r < R; ++r) out[r][c] = (fp[r] - fm[r]) / (2.0 * h);
  }
  return out;
}

/// Central difference of a scalar function of a vector.
inline std::vector<double> central_gradient(const std::function<double(const std::vector<double>&)>& fn,
                                            std::vector<double> at, double h = 1e-5) {
  std::vector<double> g(at.size());
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double keep = at[i];
    at[i] = keep + h;
    const double fp = fn(at);
    at[i] = keep - h;
    const double fm = fn(at);
    at[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor). The floor keeps entries whose true value
/// is zero from dividing finite-difference rounding noise by ~0.
inline double rel_err(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Uniform pose inside the sampling box used for dataset generation.
inline Pose random_boundary_pose(Rng& rng) {
  const Vec3 p{uniform(rng, 5.0, 9.0), uniform(rng, -9.25, -5.25), uniform(rng, 6.25, 7.25)};
  return {p, quat_from_yaw_tilt(uniform(rng, 10.0, 30.0), uniform(rng, -18.5, -17.5))};
}

}  // namespace icsc::oracle
