#pragma once

#include <map>
#include <vector>

#include "datorus/ergodic_stats.hpp"

namespace datorus {

struct NoEpsApproachWithinBudget : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PairingMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CouplingParams {
  double K = 2.0;
  double lambda = 0.1;
  double eps = 0.02;
  int max_runs = 8;         // recursion depth budget
  double mass_floor = 1e-4; // pieces below this are surrendered, not recursed
  int n0_budget = 10;       // forward steps allowed for the eps-approach
  int tail_levels = 25;     // beta-refinement horizon past n0
  double node_step = 0.002; // matched-plaque discretization
  std::size_t level_cap = 200000;
};

/// Checks of the parameter discipline against measured quantities. Violations
/// are reported, not enforced; the per-run distance audits are the operative
/// guards.
struct ParamValidation {
  double lambda_limit = 0.0;  // -lambda_c_hat / 4
  bool lambda_ok = false;
  double delta_hat = 0.0;  // modulus radius for the e^{lambda/2} rate slack
  double eps_limit = 0.0;  // delta_hat / (2K)
  bool eps_ok = false;
  double theta1_hat = 0.0;
  bool theta_ok = false;  // e^{-lambda s_mom} > theta1_hat
};

ParamValidation validate_params(const CouplingParams& p, const DAMap& f,
                                const FrameField& frames, double lambda_c_hat,
                                double theta1_hat, double s_mom);

struct PlaqueRectangle {
  Plaque plaque;
  double height_lo = 0.0, height_hi = 1.0;
  double mass() const { return height_hi - height_lo; }
};

struct FirstRunResult {
  int n0 = 0;
  Plaque matched1, matched2;
  double c_hat1 = 0.0, c_hat2 = 0.0;
  double t_bar1 = 1.0, t_bar2 = 1.0;
  double stopped_mass_n0 = 0.0;
  double matched_mass = 0.0;   // c_hat1 t_bar1 (= c_hat2 t_bar2)
  double max_matched_distance = 0.0;
};

struct CoupledPair {
  Vec3 y1, y2;
  long R = 0;
  double mass = 0.0;
};

struct CouplingRecord {
  std::vector<CoupledPair> pairs;
  std::map<long, double> pn_masses;  // first-run stopped masses by stopping time
  double initial_mass = 1.0;
  double coupled_mass = 0.0;
  double uncoupled_mass = 0.0;  // surrendered by budget or floor, reported
  int runs = 0;
  long max_R = 0;
  double worst_rn_ratio = 0.0;   // max d / (K eps e^{-lambda m / 2}) over audits
  double mass_defect = 0.0;      // |coupled + uncoupled - initial|
  FirstRunResult first_run;      // principal data of the top-level run
};

/// Coupling context: the map, semiconjugacy, frames and partition shared by
/// all coupling operations.
struct CouplingContext {
  const DisplacementField* u = nullptr;
  const FrameField* frames = nullptr;
  const BoxPartition* part = nullptr;
  const DAMap& map() const { return u->map(); }
};

/// First run of the algorithm on a rectangle pair: forward-iterate both
/// plaques until an eps-matched same-bin image pair exists, cut heights by the
/// mass-ratio rule, and report the stopped mass.
FirstRunResult first_run(const CouplingContext& ctx, const PlaqueRectangle& y1,
                         const PlaqueRectangle& y2, const CouplingParams& params);

/// Full recursive coupling of a rectangle pair.
CouplingRecord run_coupling(const CouplingContext& ctx, const PlaqueRectangle& y1,
                            const PlaqueRectangle& y2, const CouplingParams& params);

/// Exponential fit of m1(R > N); degenerate records (single R value) report
/// rate 0 with the degenerate flag set.
RateFit tail_statistics(const CouplingRecord& rec);

/// m1(R > N) series from the record (uncoupled mass counts as R = infinity).
EstimateSeries coupling_time_tail(const CouplingRecord& rec);

/// Max over coupled pairs and horizons n in [R, R+n_extra] of
/// d(f^n y1, f^n y2) / rho1^{n-R}, rho1 = K eps e^{-lambda/2}.
double matched_distance_check(const CouplingContext& ctx, const CouplingRecord& rec,
                              const CouplingParams& params, int n_extra,
                              std::size_t pair_sample = 200);

/// nu^u-mass of the sub-bound-violating set U over the n_max-step preimage
/// tree, and a0_hat = 1 - q1_hat.
std::pair<double, double> hyperbolic_block_mass(const CouplingContext& ctx,
                                                const Plaque& plaque,
                                                const CouplingParams& params,
                                                int n_max);

}  // namespace datorus
