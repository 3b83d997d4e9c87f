#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "datorus/cache.hpp"
#include "datorus/coupling.hpp"

namespace datorus {

struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Full experiment description; one declarative file drives every subcommand.
struct ExperimentConfig {
  std::vector<std::int64_t> matrix{0, 0, -1, 1, 0, 0, 0, 1, 3};  // row-major
  Vec3 bump_center{0.0, 0.0, 0.0};
  double bump_radius = 0.2;
  double s = 0.05;
  std::vector<double> s_sweep{0.0, 0.01, 0.05};
  int power = 1;

  int grid_n = 64;
  int depth = 60;
  int frame_iters = 120;
  int ph_grid_n = 64;
  int ph_iterations = 20;
  double cone_angle = 0.3;
  int boxes_per_axis = 4;
  double node_step = 0.004;
  double gamma = 0.5;

  std::int64_t lattice_q = 2147483647;
  std::uint64_t seed = 20240501;

  long lyapunov_count = 100000;
  int lyapunov_orbit = 50;
  long correlations_count = 1000000;
  int correlations_n_max = 25;
  std::vector<std::string> observables{"char:1,0,0", "char:1,1,0",
                                       "cusp:0.31,0.55,0.71"};

  double deviations_eps = 0.1;
  long deviations_count = 200000;
  std::vector<long> deviations_n_list{5, 10, 15, 20, 25, 30, 35, 40};

  double moment_s = 1.0;
  double moment_shift = 0.5;
  int moment_n_max = 5;

  CouplingParams coupling;
  int coupling_pairs = 20;

  std::string output_dir = "out";
  int threads = 0;
};

ExperimentConfig default_config();

/// Canonical serialization: stable key order, machine-readable, reparsable.
std::string config_to_text(const ExperimentConfig& cfg);

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// Fingerprint over the canonical serialization.
std::array<std::uint8_t, 32> config_fingerprint(const ExperimentConfig& cfg);

/// Subset fingerprint for grid caches (map + solver parameters only).
std::array<std::uint8_t, 32> field_fingerprint(const ExperimentConfig& cfg,
                                               double s_value);

ObservableSpec parse_observable(const std::string& text, double gamma);

}  // namespace datorus
