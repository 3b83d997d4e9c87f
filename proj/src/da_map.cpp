#include "datorus/da_map.hpp"

#include <cmath>
#include <string>

namespace datorus {

TorusPoint DAMap::inverse(const TorusPoint& z) const {
  Mat3 ainv = spectral.base.inverse_entries().cast<double>();
  Vec3 y = torus_reduce(ainv * z.coords).coords;
  for (int it = 0; it < 60; ++it) {
    Vec3 r = wrap_delta(eval(TorusPoint(y)).coords - z.coords);
    if (r.norm() < 1e-14) break;
    Vec3 step = diff(y).partialPivLu().solve(r);
    y = torus_reduce(y - step).coords;
  }
  return TorusPoint(y);
}

TorusPoint DAMap::iterate(const TorusPoint& x, long n) const {
  TorusPoint y = x;
  if (n >= 0)
    for (long k = 0; k < n; ++k) y = eval(y);
  else
    for (long k = 0; k < -n; ++k) y = inverse(y);
  return y;
}

DAMap make_da_map(const SpectralData& s, const BumpSpec& bump, double amplitude,
                  int check_grid_n) {
  if (amplitude < 0.0) throw std::invalid_argument("amplitude must be >= 0");
  if (!(bump.radius > 0.0 && bump.radius < 0.5))
    throw std::invalid_argument("bump radius must lie in (0, 1/2)");
  DAMap f;
  f.spectral = s;
  f.bump = bump;
  f.amplitude = amplitude;

  if (amplitude > 0.0) {
    // det df = det(A) (1 + s g^T A^{-1} e2) with g the bump gradient; scan the
    // support cube where g != 0
    double detmin = std::abs(static_cast<double>(s.base.det));
    Vec3 worst = Vec3::Zero();
    const int n = check_grid_n;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          Vec3 x = bump.center.coords +
                   Vec3((2.0 * i / (n - 1) - 1.0) * bump.radius,
                        (2.0 * j / (n - 1) - 1.0) * bump.radius,
                        (2.0 * k / (n - 1) - 1.0) * bump.radius);
          double d = std::abs(f.diff(x).determinant());
          if (d < detmin) {
            detmin = d;
            worst = x;
          }
        }
    if (detmin <= 0.0)
      throw NotDiffeomorphism(
          "det df vanishes near (" + std::to_string(worst.x()) + ", " +
          std::to_string(worst.y()) + ", " + std::to_string(worst.z()) +
          "); amplitude too large");
  }
  return f;
}

}  // namespace datorus
