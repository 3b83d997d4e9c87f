#include "datorus/torus_linalg.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace datorus {

namespace {

std::int64_t det3(const Mat3i& m) {
  return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) -
         m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
         m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

Mat3i adjugate(const Mat3i& m) {
  Mat3i a;
  a(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  a(0, 1) = -(m(0, 1) * m(2, 2) - m(0, 2) * m(2, 1));
  a(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  a(1, 0) = -(m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0));
  a(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  a(1, 2) = -(m(0, 0) * m(1, 2) - m(0, 2) * m(1, 0));
  a(2, 0) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
  a(2, 1) = -(m(0, 0) * m(2, 1) - m(0, 1) * m(2, 0));
  a(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return a;
}

// characteristic polynomial x^3 + a x^2 + b x + c of an integer matrix
void char_poly(const Mat3i& m, std::int64_t& a, std::int64_t& b, std::int64_t& c) {
  std::int64_t tr = m(0, 0) + m(1, 1) + m(2, 2);
  std::int64_t m00 = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  std::int64_t m11 = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  std::int64_t m22 = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  a = -tr;
  b = m00 + m11 + m22;
  c = -det3(m);
}

double poly_eval(double a, double b, double c, double x) {
  return ((x + a) * x + b) * x + c;
}

// One real root of x^3+ax^2+bx+c inside [lo,hi] (sign change assumed):
// bisection to a safe bracket, then Newton polish.
double refine_root(double a, double b, double c, double lo, double hi) {
  double flo = poly_eval(a, b, c, lo);
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
    double mid = 0.5 * (lo + hi);
    double fm = poly_eval(a, b, c, mid);
    if ((flo <= 0.0) == (fm <= 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 50; ++it) {
    double f = poly_eval(a, b, c, x);
    double df = (3.0 * x + 2.0 * a) * x + b;
    if (df == 0.0) break;
    double step = f / df;
    x -= step;
    if (std::abs(step) < 1e-16 * (1.0 + std::abs(x))) break;
  }
  return x;
}

Vec3 kernel_direction(const Mat3& m) {
  // null direction of a rank-2 matrix via the largest cross product of rows
  Vec3 r0 = m.row(0), r1 = m.row(1), r2 = m.row(2);
  std::array<Vec3, 3> cands = {r0.cross(r1), r0.cross(r2), r1.cross(r2)};
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (cands[i].norm() > cands[best].norm()) best = i;
  return cands[best].normalized();
}

std::int64_t mod_positive(__int128 v, std::int64_t q) {
  __int128 r = v % q;
  if (r < 0) r += q;
  return static_cast<std::int64_t>(r);
}

}  // namespace

Mat3i IntegerAutomorphism::inverse_entries() const {
  Mat3i adj = adjugate(entries);
  return (det == 1) ? adj : Mat3i(-adj);
}

IntegerAutomorphism make_automorphism(const Mat3i& m) {
  IntegerAutomorphism a;
  a.entries = m;
  a.det = det3(m);
  if (a.det != 1 && a.det != -1)
    throw NotInvertibleOverZ("matrix determinant is " + std::to_string(a.det) +
                             ", must be +1 or -1");
  return a;
}

SpectralData analyze_matrix(const Mat3i& m) {
  IntegerAutomorphism base = make_automorphism(m);

  std::int64_t ia, ib, ic;
  char_poly(m, ia, ib, ic);
  double a = static_cast<double>(ia), b = static_cast<double>(ib),
         c = static_cast<double>(ic);

  // exact checks on integer coefficients: eigenvalue +-1 and real splitting
  if (1 + ia + ib + ic == 0)
    throw SpectrumNotRealSplit("eigenvalue 1 (modulus 1), not hyperbolic");
  if (-1 + ia - ib + ic == 0)
    throw SpectrumNotRealSplit("eigenvalue -1 (modulus 1), not hyperbolic");
  // discriminant of x^3+ax^2+bx+c
  double disc = 18.0 * a * b * c - 4.0 * a * a * a * c + a * a * b * b -
                4.0 * b * b * b - 27.0 * c * c;
  if (disc <= 0.0)
    throw SpectrumNotRealSplit("characteristic polynomial lacks three distinct real roots");

  // three real roots isolated by the critical points of the cubic
  double bound = 1.0 + std::max({std::abs(a), std::abs(b), std::abs(c)});
  double disc2 = a * a - 3.0 * b;  // positive when three distinct real roots
  double xm = (-a - std::sqrt(disc2)) / 3.0;
  double xp = (-a + std::sqrt(disc2)) / 3.0;
  Vec3 roots(refine_root(a, b, c, -bound, xm), refine_root(a, b, c, xm, xp),
             refine_root(a, b, c, xp, bound));

  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return std::abs(roots[i]) < std::abs(roots[j]);
  });

  SpectralData s;
  s.base = base;
  for (int i = 0; i < 3; ++i) {
    s.mu[i] = roots[order[i]];
    s.kappa[i] = std::abs(roots[order[i]]);
  }
  const double tol = 1e-9;
  for (int i = 0; i < 3; ++i)
    if (std::abs(s.kappa[i] - 1.0) < tol)
      throw SpectrumNotRealSplit("eigenvalue modulus within tolerance of 1");
  if (!(s.kappa[0] < 1.0 && s.kappa[1] < 1.0 && s.kappa[2] > 1.0))
    throw WrongStableDimension(
        "expected two contracting and one expanding eigenvalue");
  if (!(s.kappa[0] < s.kappa[1]))
    throw SpectrumNotRealSplit("stable and center moduli coincide");

  Mat3 md = m.cast<double>();
  for (int i = 0; i < 3; ++i) {
    Vec3 v = kernel_direction(md - s.mu[i] * Mat3::Identity());
    // orient consistently: biggest-magnitude component positive
    int k;
    v.cwiseAbs().maxCoeff(&k);
    if (v[k] < 0) v = -v;
    s.frame.col(i) = v;
  }
  s.dual_frame = s.frame.inverse();
  return s;
}

LatticePoint make_lattice_point(const Vec3i& numerators, std::int64_t q) {
  if (q <= 0) throw std::invalid_argument("lattice modulus must be positive");
  LatticePoint p;
  p.modulus = q;
  for (int i = 0; i < 3; ++i) p.numerators[i] = mod_positive(numerators[i], q);
  return p;
}

LatticePoint apply_auto(const IntegerAutomorphism& a, const LatticePoint& x,
                        std::int64_t n) {
  if (x.modulus > (std::int64_t{1} << 62))
    throw ModulusOverflow("lattice modulus too large for exact products");
  Mat3i m = (n >= 0) ? a.entries : a.inverse_entries();
  std::int64_t steps = n >= 0 ? n : -n;
  LatticePoint y = x;
  for (std::int64_t s = 0; s < steps; ++s) {
    Vec3i cur = y.numerators;
    for (int i = 0; i < 3; ++i) {
      __int128 acc = 0;
      for (int j = 0; j < 3; ++j)
        acc += static_cast<__int128>(m(i, j)) * cur[j];
      y.numerators[i] = mod_positive(acc, y.modulus);
    }
  }
  return y;
}

}  // namespace datorus
