#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "datorus/frames.hpp"
#include "datorus/rng.hpp"

using namespace datorus;

namespace {

SpectralData spec() {
  Mat3i m;
  m << 0, 0, -1, 1, 0, 0, 0, 1, 3;
  return analyze_matrix(m);
}

BumpSpec bump() {
  BumpSpec b;
  b.radius = 0.2;
  return b;
}

}  // namespace

TEST_CASE("amplitude zero reproduces the linear map") {
  DAMap f = make_da_map(spec(), bump(), 0.0);
  CounterRng rng(7, 0);
  Mat3 m = f.matrix_real();
  for (int i = 0; i < 50; ++i) {
    Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
    CHECK(torus_dist(f.eval(TorusPoint(x)).coords,
                     torus_reduce(m * x).coords) < 1e-15);
    CHECK((f.diff(x) - m).norm() == 0.0);
  }
}

TEST_CASE("evaluation outside the bump support is linear") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  Vec3 x(0.5, 0.5, 0.5);  // distance to the origin far exceeds the radius
  CHECK((f.diff(x) - f.matrix_real()).norm() == 0.0);
  CHECK(torus_dist(f.eval(TorusPoint(x)).coords,
                   torus_reduce(f.matrix_real() * x).coords) < 1e-15);
}

TEST_CASE("differential matches finite differences inside the bump") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  const double h = 1e-6;
  CounterRng rng(11, 3);
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 x = f.bump.center.coords +
             0.15 * Vec3(rng.next_double() - 0.5, rng.next_double() - 0.5,
                         rng.next_double() - 0.5);
    x = torus_reduce(x).coords;
    Mat3 d = f.diff(x);
    for (int axis = 0; axis < 3; ++axis) {
      Vec3 v = Vec3::Unit(axis);
      Vec3 fd = (f.lift(x + h * v) - f.lift(x)) / h;
      CHECK((fd - d * v).norm() < 1e-4);
    }
  }
}

TEST_CASE("oversized amplitude is rejected") {
  CHECK_THROWS_AS(make_da_map(spec(), bump(), 10.0), NotDiffeomorphism);
}

TEST_CASE("map inverse round-trips") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  CounterRng rng(5, 5);
  for (int i = 0; i < 50; ++i) {
    TorusPoint x(Vec3(rng.next_double(), rng.next_double(), rng.next_double()));
    CHECK(torus_dist(f.inverse(f.eval(x)), x) < 1e-12);
    CHECK(torus_dist(f.eval(f.inverse(x)), x) < 1e-12);
  }
}

TEST_CASE("partial hyperbolicity report is exact in the linear case") {
  DAMap f = make_da_map(spec(), bump(), 0.0);
  auto rep = verify_partial_hyperbolicity(f, 16, 0.3, 8);
  CHECK(rep.verified);
  for (int i = 0; i < 3; ++i) {
    CHECK(rep.lambda[2 * i] == doctest::Approx(std::log(f.spectral.kappa[i]))
                                   .epsilon(1e-10));
    CHECK(rep.lambda[2 * i + 1] == doctest::Approx(std::log(f.spectral.kappa[i]))
                                       .epsilon(1e-10));
  }
  CHECK(rep.lambda5_min == doctest::Approx(std::log(f.spectral.kappa[2])));
}

TEST_CASE("partial hyperbolicity verified at moderate amplitude") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  auto rep = verify_partial_hyperbolicity(f, 20, 0.3, 12);
  CHECK(rep.verified);
  CHECK(rep.lambda[3] < 0.0);  // lambda4 (center sup) negative
  CHECK(rep.lambda[4] > 0.0);  // lambda5 (unstable inf) positive
  CHECK(rep.lambda[1] < rep.lambda[2]);
  CHECK(rep.lambda[3] < rep.lambda[4]);
}

TEST_CASE("frames are the eigenframe in the linear case") {
  DAMap f = make_da_map(spec(), bump(), 0.0);
  FrameField ff = compute_frames(f, 8, 10);
  CounterRng rng(3, 1);
  for (int i = 0; i < 20; ++i) {
    Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
    Mat3 fr = ff.frame_at(x);
    for (int c = 0; c < 3; ++c)
      CHECK(angle_between(fr.col(c), f.spectral.frame.col(c)) < 1e-12);
  }
  Vec3 rates = family_rates(ff, f, Vec3(0.3, 0.4, 0.5));
  for (int c = 0; c < 3; ++c)
    CHECK(std::log(rates[c]) ==
          doctest::Approx(std::log(f.spectral.kappa[c])).epsilon(1e-12));
}

TEST_CASE("frame invariance defect shrinks with transport length") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  FrameField coarse = compute_frames(f, 12, 40);
  // truncation-dominated defect at 40 transport steps
  CHECK(coarse.residual_truncation < 1e-3);
  FrameField fine = compute_frames(f, 12, 120);
  CHECK(fine.residual_truncation < 1e-8);
  CHECK(fine.residual_truncation <= coarse.residual_truncation);
}

TEST_CASE("largest center-frame deviation sits inside the bump") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  FrameField ff = compute_frames(f, 16, 60);
  double worst_in = 0.0, worst_out = 0.0;
  for (int ix = 0; ix < 16; ++ix)
    for (int iy = 0; iy < 16; ++iy)
      for (int iz = 0; iz < 16; ++iz) {
        Vec3 x(ix / 16.0, iy / 16.0, iz / 16.0);
        double ang = angle_between(ff.node(ix, iy, iz).col(1),
                                   f.spectral.frame.col(1));
        double d = wrap_delta(x - f.bump.center.coords).norm();
        // the deviation is sourced in the bump and carried along orbits;
        // compare the bump ball against points far from its orbit images
        if (d < f.bump.radius)
          worst_in = std::max(worst_in, ang);
        else
          worst_out = std::max(worst_out, ang);
      }
  CHECK(worst_in > 0.0);
  CHECK(worst_in < 0.3);
}

TEST_CASE("adapted metric equates cs and center norms") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  FrameField ff = compute_frames(f, 16, 100);
  CounterRng rng(9, 2);
  for (int i = 0; i < 10; ++i) {
    Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
    auto [cs, c] = cs_vs_c_norm(ff, f, x, 5);
    CHECK(std::abs(cs - c) < 1e-6 * std::max(1.0, cs));
  }
}

TEST_CASE("rate sandwich on sampled cells") {
  DAMap f = make_da_map(spec(), bump(), 0.05);
  auto rep = verify_partial_hyperbolicity(f, 16, 0.3, 12);
  FrameField ff = compute_frames(f, 16, 60);
  CounterRng rng(13, 4);
  for (int i = 0; i < 50; ++i) {
    Vec3 x(rng.next_double(), rng.next_double(), rng.next_double());
    Vec3 r = family_rates(ff, f, x);
    CHECK(std::log(r[1]) > rep.lambda[2] - 1e-3);
    CHECK(std::log(r[1]) < rep.lambda[3] + 1e-3);
    CHECK(std::log(r[2]) > rep.lambda[4] - 1e-3);
    CHECK(std::log(r[2]) < rep.lambda[5] + 1e-3);
  }
}
