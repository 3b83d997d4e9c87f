#pragma once

#include <cstdint>
#include <vector>

#include "datorus/plaques.hpp"

namespace datorus {

struct ExcessiveDropRate : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InsufficientSignal : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct TreeTooLarge : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Hölder observable: lattice character, cusp power of the distance to a
/// point, or a grid-sampled field.
struct ObservableSpec {
  enum class Kind { Character, Cusp, NodeGrid };
  Kind kind = Kind::Character;
  Vec3i freq{1, 0, 0};       // character frequency vector
  TorusPoint center;         // cusp center
  double holder_exp = 0.5;   // gamma
  double holder_norm = 0.0;  // declared upper bound for ||.||_gamma
  double shift = 0.0;        // additive constant
  int grid_n = 0;
  std::vector<double> grid_values;

  double eval(const Vec3& x) const;
  double sup_norm() const;
};

ObservableSpec character_observable(const Vec3i& k, double gamma);
ObservableSpec cusp_observable(const TorusPoint& center, double gamma);
ObservableSpec grid_observable(int grid_n, std::vector<double> values, double gamma);

struct EstimateSeries {
  std::vector<long> n_values;
  std::vector<double> estimates;
  std::vector<double> stderrs;
  long sample_count = 0;
  std::uint64_t seed = 0;
};

struct RateFit {
  double log_intercept = 0.0;
  double rate = 0.0;  // slope of the log-linear fit
  double r_squared = 0.0;
  long fit_lo = 0, fit_hi = 0;
  int used_points = 0;
  bool degenerate = false;
};

/// nu_f sampling: Lebesgue-random lattice points paired with h^{-1} images.
struct SampleSet {
  std::vector<LatticePoint> lattice;
  std::vector<TorusPoint> preimages;
  std::vector<char> converged;
  double drop_rate = 0.0;
  std::uint64_t seed = 0;
};

SampleSet sample_nu_f(const DisplacementField& u, long count, std::uint64_t seed,
                      std::int64_t lattice_q = kDefaultLatticeModulus,
                      double drop_limit = 0.01);

struct ExponentEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  long samples = 0;
};

/// Averaged finite-orbit log rate of df on the chosen family (adapted metric).
ExponentEstimate orbit_exponent(const DAMap& f, const FrameField& frames,
                                const SampleSet& samples, int n_orbit, int family);

inline ExponentEstimate center_exponent(const DAMap& f, const FrameField& frames,
                                        const SampleSet& samples, int n_orbit) {
  return orbit_exponent(f, frames, samples, n_orbit, 1);
}

/// Worst nu^u-weighted integral of log |df^n restricted to E^c| over the
/// plaques, and the implied alpha_0 = -worst.
std::pair<double, double> mostly_contracting_check(const DAMap& f,
                                                   const FrameField& frames,
                                                   const std::vector<WeightedPlaqueMeasure>& plaques,
                                                   int n);

double birkhoff_sum(const DAMap& f, const ObservableSpec& phi, const TorusPoint& y,
                    long n);

EstimateSeries correlation_series(const DisplacementField& u, const ObservableSpec& phi,
                                  const ObservableSpec& psi, int n_max, long count,
                                  std::uint64_t seed,
                                  std::int64_t lattice_q = kDefaultLatticeModulus);

RateFit fit_exponential(const EstimateSeries& series, long fit_lo = 0,
                        long fit_hi = 1 << 30);

EstimateSeries deviation_tail(const DisplacementField& u, const ObservableSpec& phi,
                              double eps, const std::vector<long>& n_list, long count,
                              std::uint64_t seed,
                              std::int64_t lattice_q = kDefaultLatticeModulus);

struct MomentBoundResult {
  double lhs = 0.0;        // sum_j c_j exp(s max S_n) over the n-step tree
  double norm_lhs = 0.0;   // sum_j c_j sup ||df^n on E^c|| over the same tree
  int leaves = 0;
};

/// Exhaustive n-step transfer-tree evaluation of the moment bounds. n counts
/// steps of f^power.
MomentBoundResult moment_bound_check(const DisplacementField& u, const FrameField& frames,
                                     const BoxPartition& part, const Plaque& plaque,
                                     const ObservableSpec& phi, double s_mom, int n,
                                     int max_leaves = 200000);

double plaque_birkhoff_mean(const DAMap& f, const WeightedPlaqueMeasure& l,
                            const ObservableSpec& phi, long n);

/// max - min of S_n over one n-step preimage piece of the plaque.
double oscillation_check(const DisplacementField& u, const BoxPartition& part,
                         const Plaque& plaque, const ObservableSpec& phi, int n,
                         int probe_points = 17);

}  // namespace datorus
