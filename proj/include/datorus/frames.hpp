#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "datorus/da_map.hpp"

namespace datorus {

struct NoConvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Grid infima/suprema of the log expansion rates on the three invariant
/// families, in the adapted metric that makes the frames orthonormal.
struct PartialHyperbolicityReport {
  std::array<double, 6> lambda{};  // [min,max] per family: s, c, u
  double lambda5_min = 0.0;        // = lambda[4]; uniform unstable lower rate
  double lambda5_max = 0.0;        // = lambda[5]; pointwise-sup counterpart
  std::array<double, 3> cone_angles{};
  int grid_resolution = 0;
  bool verified = false;
  Vec3i violation_cell{-1, -1, -1};
  std::string violation;
};

/// Approximate invariant frames on a periodic grid with trilinear lookup.
class FrameField {
 public:
  FrameField() = default;
  FrameField(int grid_n, int iterations)
      : grid_n_(grid_n), iterations_(iterations),
        frames_(static_cast<std::size_t>(grid_n) * grid_n * grid_n) {}

  int grid_n() const { return grid_n_; }
  int iterations() const { return iterations_; }

  Mat3& node(int ix, int iy, int iz) { return frames_[index(ix, iy, iz)]; }
  const Mat3& node(int ix, int iy, int iz) const { return frames_[index(ix, iy, iz)]; }

  /// Interpolated frame (columns e^s, e^c, e^u), renormalized.
  Mat3 frame_at(const Vec3& x) const;
  Vec3 unstable_at(const Vec3& x) const { return frame_at(x).col(2); }
  Vec3 center_at(const Vec3& x) const { return frame_at(x).col(1); }

  double residual_interp = 0.0;      // max df-invariance defect vs interpolated frames
  double residual_truncation = 0.0;  // sampled defect vs freshly converged frames

  std::size_t index(int ix, int iy, int iz) const {
    return static_cast<std::size_t>(ix) +
           static_cast<std::size_t>(grid_n_) *
               (static_cast<std::size_t>(iy) + static_cast<std::size_t>(grid_n_) * iz);
  }

 private:
  int grid_n_ = 0;
  int iterations_ = 0;
  std::vector<Mat3> frames_;
  friend FrameField compute_frames(const DAMap&, int, int);
};

/// Converged frame at a single point by forward/backward transport of length
/// `iters` along the orbit through x.
Mat3 frames_at_point(const DAMap& f, const Vec3& x, int iters);

/// Cone-transport verification of the dominated splitting; rates measured in
/// the adapted metric at orbit midpoints seeded from every grid cell.
PartialHyperbolicityReport verify_partial_hyperbolicity(const DAMap& f, int grid_n,
                                                        double cone_angle,
                                                        int iterations);

FrameField compute_frames(const DAMap& f, int grid_n, int iters);

/// Log rates (s, c, u families) of df at x in the adapted metric.
Vec3 family_rates(const FrameField& ff, const DAMap& f, const Vec3& x);

/// |df restricted to E^c| at x (adapted metric).
double center_rate(const FrameField& ff, const DAMap& f, const Vec3& x);

/// Operator norms of df^n on E^cs and on E^c at x (adapted metric).
std::pair<double, double> cs_vs_c_norm(const FrameField& ff, const DAMap& f,
                                       const Vec3& x, int n);

}  // namespace datorus
