#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "datorus/types.hpp"

namespace datorus {

struct NotInvertibleOverZ : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SpectrumNotRealSplit : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WrongStableDimension : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ModulusOverflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Integer 3x3 toral automorphism, det = +-1.
struct IntegerAutomorphism {
  Mat3i entries{Mat3i::Zero()};
  std::int64_t det = 0;

  Mat3 real() const { return entries.cast<double>(); }
  /// Exact integer inverse (adjugate divided by det; det is +-1).
  Mat3i inverse_entries() const;
};

IntegerAutomorphism make_automorphism(const Mat3i& m);

/// Signed eigenvalues ordered by modulus, moduli, and the eigenframe of a
/// hyperbolic automorphism with splitting pattern kappa1 < kappa2 < 1 < kappa3.
struct SpectralData {
  IntegerAutomorphism base;
  Vec3 mu;      // signed eigenvalues, |mu1| < |mu2| < |mu3|
  Vec3 kappa;   // moduli
  Mat3 frame;       // columns e1 (stable), e2 (center), e3 (unstable), unit
  Mat3 dual_frame;  // rows of frame^{-1}

  /// Coordinates c with x = c1 e1 + c2 e2 + c3 e3.
  Vec3 eigen_coords(const Vec3& x) const { return dual_frame * x; }
  Vec3 from_eigen_coords(const Vec3& c) const { return frame * c; }
};

/// Spectral analysis of an integer matrix via characteristic-polynomial root
/// isolation and Newton polish. Rejects non-hyperbolic or wrongly split input.
SpectralData analyze_matrix(const Mat3i& m);

/// Rational lattice point with coordinates numerators/Q; orbits of integer
/// automorphisms stay on the lattice and are computed without rounding.
struct LatticePoint {
  Vec3i numerators{Vec3i::Zero()};
  std::int64_t modulus = 1;

  Vec3 real() const {
    return Vec3(static_cast<double>(numerators[0]) / static_cast<double>(modulus),
                static_cast<double>(numerators[1]) / static_cast<double>(modulus),
                static_cast<double>(numerators[2]) / static_cast<double>(modulus));
  }
  TorusPoint point() const { return TorusPoint(real()); }
};

LatticePoint make_lattice_point(const Vec3i& numerators, std::int64_t q);

/// Exact image A^n x mod 1 on the same lattice. Negative n uses the integer
/// inverse matrix.
LatticePoint apply_auto(const IntegerAutomorphism& a, const LatticePoint& x, std::int64_t n);

/// Default lattice modulus: prime near 2^31 so orbits are long.
constexpr std::int64_t kDefaultLatticeModulus = 2147483647;  // 2^31 - 1, prime

}  // namespace datorus
