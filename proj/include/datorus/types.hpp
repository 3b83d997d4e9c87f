#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace datorus {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat3i = Eigen::Matrix<std::int64_t, 3, 3>;
using Vec3i = Eigen::Matrix<std::int64_t, 3, 1>;
using Index = Eigen::Index;

struct NonFiniteInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Point on T^3 = R^3 / Z^3, stored as the canonical representative in [0,1)^3.
struct TorusPoint {
  Vec3 coords{Vec3::Zero()};
  TorusPoint() = default;
  explicit TorusPoint(const Vec3& c) : coords(c) {}
};

inline double frac_unit(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y -= 1.0;  // floor rounding at negative values near 0
  if (y < 0.0) y += 1.0;
  return y;
}

/// Componentwise fractional part; the canonical lift into [0,1)^3.
inline TorusPoint torus_reduce(const Vec3& p) {
  if (!p.allFinite()) throw NonFiniteInput("torus_reduce: non-finite input");
  return TorusPoint(Vec3(frac_unit(p.x()), frac_unit(p.y()), frac_unit(p.z())));
}

/// Minimal representative of a displacement, each component in [-1/2, 1/2).
inline Vec3 wrap_delta(const Vec3& d) {
  Vec3 w;
  for (int i = 0; i < 3; ++i) {
    double y = d[i] - std::round(d[i]);
    w[i] = y;
  }
  return w;
}

/// Euclidean distance on the torus (nearest lift).
inline double torus_dist(const Vec3& a, const Vec3& b) {
  return wrap_delta(a - b).norm();
}

inline double torus_dist(const TorusPoint& a, const TorusPoint& b) {
  return torus_dist(a.coords, b.coords);
}

inline double angle_between(const Vec3& a, const Vec3& b) {
  double c = std::abs(a.normalized().dot(b.normalized()));
  if (c > 1.0) c = 1.0;
  return std::acos(c);
}

}  // namespace datorus
