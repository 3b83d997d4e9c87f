#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "datorus/semiconjugacy.hpp"

namespace datorus {

struct LeafIntegrationStalled : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HImageNonMonotone : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ChildConstructionFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NotSameBox : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct HolonomyOutOfPlaque : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box grid in eigencoordinates over the canonical fundamental
/// domain. Plaques are maximal unstable-line segments on which the box index
/// of the canonical representative is constant.
struct BoxPartition {
  SpectralData spec;
  int boxes_per_axis = 4;
  Vec3 cmin, cmax;  // eigencoordinate bounding box of [0,1]^3
  Vec3 width;       // per-axis bin width

  Vec3i box_of_c(const Vec3& c) const;
  Vec3i box_of_point(const Vec3& z) const {
    return box_of_c(spec.eigen_coords(torus_reduce(z).coords));
  }

  struct CutEvent {
    double t;
    bool is_wrap;  // fundamental-domain face rather than a c3 bin edge
  };
  /// Cut events of the line base + T e3 in (ta, tb), sorted by T. `base` is an
  /// arbitrary real lift; membership is taken on canonical representatives.
  std::vector<CutEvent> cut_events(const Vec3& base, double ta, double tb) const;

  struct LineWindow {
    double tlo = 0, thi = 0;
    Vec3i box{0, 0, 0};
    double c3_abs_lo = 0;  // canonical c3 at tlo
  };
  /// Maximal membership window around T = 0 on the line through base.
  LineWindow plaque_window(const Vec3& base) const;

  double c3_bin_width() const { return width[2]; }
};

BoxPartition linear_partition(const SpectralData& s, int boxes_per_axis);

/// Tiling defect of the induced plaque family: mass of plaque images that does
/// not land in complete plaques, averaged over sampled lines.
struct MarkovDefectReport {
  double defect_mass_fraction = 0.0;
  int plaques_sampled = 0;
};
MarkovDefectReport measure_markov_defect(const BoxPartition& part,
                                         int n_samples, std::uint64_t seed);

/// Discretized unstable plaque: an f-side polyline whose h-image is a straight
/// segment of an unstable line of A, parametrized by lifted arclength T.
struct Plaque {
  TorusPoint base;   // f-side generating point
  Vec3 line_base;    // real lift of the h-image line's T = 0 point
  double ta = 0, tb = 0;
  Vec3i box_id{0, 0, 0};
  double c3_abs_lo = 0;     // canonical c3 at ta (continuous inside the plaque)
  bool full_plaque = true;  // window equals the maximal membership window
  std::vector<TorusPoint> nodes;
  std::vector<double> h_param;   // T_j - ta, strictly increasing
  std::vector<double> f_arclen;  // cumulative ambient polyline length

  double length() const { return tb - ta; }
  Vec3 line_point(const Vec3& e3, double t_rel) const {
    return line_base + (ta + t_rel) * e3;
  }
};

struct PlaqueOptions {
  double node_step = 0.004;  // target h-parameter spacing between nodes
  double invert_tol = 1e-12;
  bool direct_eval = true;   // series-evaluated h for node construction
};

Plaque grow_plaque(const DisplacementField& u, const FrameField& frames,
                   const BoxPartition& part, const TorusPoint& y,
                   const PlaqueOptions& opt = {});

/// Plaque built on an explicitly given window of a given line (used by
/// transfer splits and the coupling algorithm).
Plaque grow_plaque_on_window(const DisplacementField& u, const BoxPartition& part,
                             const Vec3& line_base, double ta, double tb,
                             const PlaqueOptions& opt = {});

/// f-side point with h(y) = line_base + T e3, warm-started from guess.
TorusPoint invert_on_unstable_line(const DisplacementField& u, const Vec3& line_base,
                                   double T, const Vec3& guess,
                                   const PlaqueOptions& opt = {});

/// Probability measure on a plaque with log-density G against the pullback
/// reference measure; Hölder data (R, gamma) declare the E1(R) class.
struct WeightedPlaqueMeasure {
  Plaque plaque;
  std::vector<double> weights;      // atom masses, sum = total_mass
  std::vector<double> log_density;  // G at the nodes
  double holder_const = 0.0;        // declared R
  double holder_exp = 0.5;          // gamma
  double total_mass = 1.0;

  template <typename F>
  double integrate(F&& phi) const {
    double s = 0.0;
    for (std::size_t j = 0; j < weights.size(); ++j)
      s += weights[j] * phi(plaque.nodes[j]);
    return s;
  }
};

/// Reference measure: node weights proportional to h-parameter increments.
WeightedPlaqueMeasure reference_measure(const Plaque& p, double gamma = 0.5);

struct TransferSplit {
  Plaque parent;
  std::vector<Plaque> children;
  std::vector<double> weights;           // c_i, sums to 1
  std::vector<double> preim_lo, preim_hi;  // child preimage T-intervals in the parent
  double markov_defect_mass = 0.0;       // mass in children that are not full plaques
};

TransferSplit transfer_split(const DisplacementField& u, const FrameField& frames,
                             const BoxPartition& part, const Plaque& p,
                             const PlaqueOptions& opt = {});

/// Empirical max over node pairs of |G(z1)-G(z2)| / d(z1,z2)^gamma.
double measured_holder_const(const WeightedPlaqueMeasure& l);

/// Per-child relative variation of the pushed density against the child
/// reference measure; node positions are re-measured through h o f, so the
/// piecewise-constant transfer Jacobian is checked through the actual map.
std::vector<double> pushforward_density_variation(const TransferSplit& split,
                                                  const DisplacementField& u);

struct HolonomyResult {
  WeightedPlaqueMeasure transported;  // on the destination plaque
  double dropped_mass = 0.0;          // source mass without a destination offset
  double max_cell_discrepancy = 0.0;  // vs destination reference, matched cells
};

/// Center-stable holonomy in h-coordinates: equal canonical-c3 matching within
/// one box, pulled back by h.
HolonomyResult cs_holonomy(const WeightedPlaqueMeasure& src, const TorusPoint& dst_base,
                           const DisplacementField& u, const FrameField& frames,
                           const BoxPartition& part, const PlaqueOptions& opt = {});

struct TransferStepResult {
  std::vector<double> weights;                  // c_i, sums to 1
  std::vector<WeightedPlaqueMeasure> children;  // normalized, G = parent G o f^{-1}
  std::vector<double> measured_child_holder;    // empirical constants
};

/// One transfer-operator step T(l) = sum c_i l_i. Children carry declared
/// constant R * exp(-lambda5_min * gamma).
TransferStepResult transfer_step(const WeightedPlaqueMeasure& l,
                                 const DisplacementField& u, const FrameField& frames,
                                 const BoxPartition& part, double lambda5_min,
                                 const PlaqueOptions& opt = {});

/// Projection to the reference measure; distance is the total variation over
/// the atoms (sup over observables bounded by 1).
std::pair<WeightedPlaqueMeasure, double> project_E0(const WeightedPlaqueMeasure& l);

/// Minimal increment of the recomputed h-image arclength along the polyline;
/// positive values certify monotonicity.
double leaf_bijectivity_check(const DisplacementField& u, const Plaque& plaque);

}  // namespace datorus
