#pragma once

#include <stdexcept>
#include <vector>

#include "datorus/da_map.hpp"
#include "datorus/frames.hpp"

namespace datorus {

struct DepthInsufficient : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InversionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct LeafIntegrationDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Periodic displacement u with h = id + u solving h o f = A o h.
///
/// Grid values with trilinear lookup serve bulk sampling; eval_direct
/// re-evaluates the orbit series at the point, leaving only the truncation
/// error, and backs every plaque-level computation.
class DisplacementField {
 public:
  DisplacementField() = default;

  Vec3 eval_interp(const Vec3& x) const;
  Vec3 eval_direct(const Vec3& x) const;
  Vec3 eval(const Vec3& x, bool direct) const {
    return direct ? eval_direct(x) : eval_interp(x);
  }

  TorusPoint h(const TorusPoint& x, bool direct = false) const {
    return torus_reduce(x.coords + eval(x.coords, direct));
  }
  /// Image of h in the lift: x + u(x) without reduction.
  Vec3 h_lift(const Vec3& x, bool direct = false) const {
    return x + eval(x, direct);
  }

  const DAMap& map() const { return map_; }
  int grid_n() const { return grid_n_; }
  int depth() const { return depth_; }

  double residual_sup = 0.0;      // direct-eval semiconjugacy defect, off-grid set
  double interp_deviation = 0.0;  // |u_interp - u_direct| sampled off-grid
  double lipschitz_est = 0.0;     // max finite-difference slope on the grid
  double truncation_bound = 0.0;  // geometric tail estimate for the series

  std::vector<Vec3>& raw_values() { return values_; }
  const std::vector<Vec3>& raw_values() const { return values_; }
  void assign_grid(const DAMap& f, int grid_n, int depth, std::vector<Vec3> values);

 private:
  DAMap map_;
  int grid_n_ = 0;
  int depth_ = 0;
  std::vector<Vec3> values_;
  friend DisplacementField solve_h(const DAMap&, int, int, double);
};

/// Orbit-series solve of u o f = A u - p; componentwise geometric sums in the
/// eigenbasis. Throws DepthInsufficient when the measured residual exceeds the
/// tolerance (default: 10x the geometric tail bound, floored at 1e-11).
DisplacementField solve_h(const DAMap& f, int grid_n, int depth, double tol = 0.0);

TorusPoint eval_h(const DisplacementField& u, const TorusPoint& x, bool direct = false);

struct InversionResult {
  TorusPoint y;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Solves h(y) = z by damped fixed point with center-line and Newton
/// fallbacks. Non-converged points are candidates for nontrivial fibers.
InversionResult try_invert_h(const DisplacementField& u, const TorusPoint& z,
                             double tol = 1e-9, int max_iter = 60,
                             bool direct = false);

TorusPoint invert_h(const DisplacementField& u, const TorusPoint& z,
                    double tol = 1e-9, int max_iter = 60, bool direct = false);

/// Diameter of the center-segment piece through h^{-1}(z) on which h stays
/// within fiber_tol of z; 0 for trivial fibers.
double fiber_probe(const DisplacementField& u, const DAMap& f, const FrameField& frames,
                   const TorusPoint& z, double arc_len, double fiber_tol = 1e-7);

enum class LeafFamily { Stable, Center, Unstable };

struct QuasiIsometryFit {
  double a = 0.0;
  double b = 0.0;
  int pairs = 0;
};

/// Integrates leaf arcs in the universal cover and fits minimal (a, b) with
/// d_leaf <= a d + b over the probed pairs.
QuasiIsometryFit quasi_isometry_probe(const DAMap& f, const FrameField& frames,
                                      LeafFamily leaf, int n_pairs,
                                      std::uint64_t seed);

struct SemiconjugacyReport {
  double residual_sup = 0.0;
  double fiber_bound_K = 0.0;
  double qi_a = 0.0, qi_b = 0.0;
  double inversion_success_rate = 0.0;
};

}  // namespace datorus
