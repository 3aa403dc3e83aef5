#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "ergo/solvers.hpp"

namespace ergo {

struct SimConfig {
  double dt = 1e-3;
  double T = 1e4;
  double burn_in = -1.0;  // negative: use 5% of T
  std::uint64_t seed = 1;
  std::array<double, 2> x0 = {0.0, 0.0};
  int bins = 100;
  int trajectories = 1;
  int threads = 1;
};

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Accumulated statistics of one run (all trajectories merged in index
/// order, so results do not depend on the thread count).
struct TrajectoryStats {
  std::shared_ptr<const Geometry> bin_geometry;  // bins form their own periodic grid
  ScalarField density;            // per bin, per unit Riemannian volume
  Eigen::VectorXd occupation;     // raw time per bin
  OneForm current;                // covariant, per unit time and volume
  Eigen::VectorXd current_raw;    // contravariant increment sums, stacked
  std::array<std::int64_t, 2> winding_count = {0, 0};
  std::array<Estimate, 2> winding;

  CostBreakdown cost;             // time averages; gauge = Stratonovich accumulator
  Estimate cost_state, cost_control, cost_gauge, cost_total;
  Estimate strat_minus_ito;       // midpoint vs left-point gauge accumulator

  double T_effective = 0.0;       // accumulated time after burn-in
  double dt = 0.0;
  std::uint64_t steps = 0;
  double delta_current_norm = 0.0;  // |delta of binned current|, a diagnostic
  std::vector<std::string> warnings;

  // Per-batch means kept for merging and error bars.
  std::vector<double> batch_state, batch_control, batch_gauge, batch_ito;
  std::vector<std::array<double, 2>> batch_winding;
};

/// Integrate the controlled SDE with the generator (1/2) Lap + <f+u, d.>
/// (Ito drift carries the Christoffel correction) and accumulate density,
/// current, winding and pathwise cost statistics.
TrajectoryStats simulate(const ProblemSpec& spec, const OneForm& u, const SimConfig& cfg);

/// Binned empirical current as a covariant one-form on the bin grid.
const OneForm& empirical_current(const TrajectoryStats& stats);

Estimate winding_rate(const TrajectoryStats& stats, int generator_index);

/// Pathwise cost breakdown with standard errors from batch means.
CostBreakdown pathwise_cost(const TrajectoryStats& stats);

/// Periodic (bi)linear interpolation of a node field at the given angles.
double interpolate_scalar(const Geometry& geom, const ScalarField& field, double t1, double t2 = 0.0);

}  // namespace ergo
