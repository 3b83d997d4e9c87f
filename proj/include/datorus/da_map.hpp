#pragma once

#include <stdexcept>
#include <utility>

#include "datorus/torus_linalg.hpp"
#include "datorus/types.hpp"

namespace datorus {

struct NotDiffeomorphism : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Radial C^2 bump (1-q^2)^3 supported on a toral ball.
struct BumpSpec {
  TorusPoint center;          // default: the origin, fixed by every automorphism
  double radius = 0.2;        // in (0, 1/2)

  double profile(double t) const {
    double q = t / radius;
    if (q >= 1.0 || q <= -1.0) return 0.0;
    double w = 1.0 - q * q;
    return w * w * w;
  }
  double profile_deriv(double t) const {
    double q = t / radius;
    if (q >= 1.0 || q <= -1.0) return 0.0;
    double w = 1.0 - q * q;
    return -6.0 * q * w * w / radius;
  }
  /// sup |profile'| over its support; attained at q = 1/sqrt(5)
  double max_abs_deriv() const {
    double q = 1.0 / std::sqrt(5.0);
    double w = 1.0 - q * q;
    return 6.0 * q * w * w / radius;
  }
};

/// Derived-from-Anosov map f(x) = A x + s * profile(dist(x, center)) * e2.
/// The lift is A + p with p periodic, supported in the bump ball, |p| <= s.
struct DAMap {
  SpectralData spectral;
  BumpSpec bump;
  double amplitude = 0.0;  // s
  int power = 1;           // iterate analyzed by downstream estimators

  const Mat3i& matrix() const { return spectral.base.entries; }
  Mat3 matrix_real() const { return spectral.base.real(); }

  /// Periodic perturbation p(x); depends on x only through the canonical rep.
  Vec3 perturbation(const Vec3& x) const {
    Vec3 d = wrap_delta(x - bump.center.coords);
    double t = d.norm();
    if (t >= bump.radius || amplitude == 0.0) return Vec3::Zero();
    return amplitude * bump.profile(t) * spectral.frame.col(1);
  }

  /// Lift F(x) = A x + p(x) acting on R^3.
  Vec3 lift(const Vec3& x) const { return matrix_real() * x + perturbation(x); }

  TorusPoint eval(const TorusPoint& x) const { return torus_reduce(lift(x.coords)); }

  Mat3 diff(const Vec3& x) const {
    Mat3 d = matrix_real();
    Vec3 del = wrap_delta(x - bump.center.coords);
    double t = del.norm();
    if (t > 0.0 && t < bump.radius && amplitude != 0.0) {
      Vec3 grad = amplitude * bump.profile_deriv(t) / t * del;
      d += spectral.frame.col(1) * grad.transpose();
    }
    return d;
  }

  std::pair<TorusPoint, Mat3> eval_and_diff(const TorusPoint& x) const {
    return {eval(x), diff(x.coords)};
  }

  /// Unique preimage on the torus, by Newton iteration from A^{-1} x.
  TorusPoint inverse(const TorusPoint& z) const;

  TorusPoint iterate(const TorusPoint& x, long n) const;
};

/// Builds the map and certifies invertibility of df on a grid refined over the
/// bump support (df = A away from it).
DAMap make_da_map(const SpectralData& s, const BumpSpec& bump, double amplitude,
                  int check_grid_n = 64);

}  // namespace datorus
