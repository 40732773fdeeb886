#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gtpde/rng.hpp"

namespace gtpde {

/// Parameters of the stochastic Burgers particle model.
///
/// Each particle moves by `m*h / (Z*d)` plus `sqrt(2*nu*h)` Gaussian noise per
/// step, where `d` spans the 2m nearest-neighbor gaps around it.
struct MicroParams {
  double nu = 0.05;   ///< kinematic viscosity
  double h = 1e-4;    ///< micro time step
  double Z = 1e4;     ///< particles per unit mass
  int m = 50;         ///< neighbor order of the density estimate

  void validate() const;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  double center() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// `n` equal cells covering [0, 2pi).
std::vector<Interval> uniform_partition(std::size_t n);

/// Macro field on a uniform periodic grid.
struct DensityField {
  std::vector<double> values;
  std::vector<double> grid_x;
  double t = 0.0;
  double dx = 0.0;

  std::size_t size() const { return values.size(); }
};

/// Cell-centered grid x_i = (i + 1/2) * 2pi/n, values zero.
DensityField make_field(std::size_t n, double t = 0.0);

/// Particle positions grouped by tooth. A full-domain simulation is a single
/// periodic group covering [0, 2pi).
struct ParticleEnsemble {
  std::vector<std::vector<double>> groups;  ///< positions, sorted ascending
  std::vector<Interval> bounds;             ///< one interval per group
  bool periodic = false;

  std::size_t size() const;
  std::size_t group_count() const { return groups.size(); }
};

/// Places round-half-even(rho0_i * |interval_i| * Z) uniform particles in each
/// interval; rho0.values[i] belongs to intervals[i].
ParticleEnsemble lift(const DensityField& rho0, double Z, std::span<const Interval> intervals,
                      Rng& rng);

/// Local histogram: value_i = count_i / (|interval_i| * Z).
DensityField restrict_density(const ParticleEnsemble& ensemble, std::span<const Interval> intervals,
                              double Z, double t = 0.0);

/// Drift displacement of every particle of one sorted group, from pre-step
/// positions. Tooth-local groups shift the 2m-gap window inward at the edges
/// instead of truncating it; groups with fewer than 2m+1 particles use all of
/// them. Displacements are capped at `cap`.
void drift_displacements(std::span<const double> sorted, const MicroParams& params, bool periodic,
                         double cap, std::span<double> out);

/// One synchronous Euler-Maruyama step of every group. Periodic groups are
/// wrapped back into [0, 2pi); tooth groups are left unclamped (exits are the
/// caller's business). Groups are re-sorted on return.
void micro_step(ParticleEnsemble& ensemble, const MicroParams& params, Rng& rng);

struct FullSimulationOptions {
  std::size_t n_intervals = 128;  ///< lifting / restriction grid
  double t_end = 1.0;
  double record_dt = 0.01;
};

/// Full-domain particle simulation; returns restricted densities at every
/// record time including t = 0.
std::vector<DensityField> simulate_full(const DensityField& rho0, const MicroParams& params,
                                        const FullSimulationOptions& options, Rng& rng);

/// Sorts values lying in [lo, hi] in O(n) expected time for near-uniform
/// data (bucket scatter followed by insertion sort). `scratch` is reused.
void sort_in_interval(std::vector<double>& values, double lo, double hi,
                      std::vector<double>& scratch, std::vector<std::uint32_t>& counts);

/// Number of micro steps in `duration`; throws if it is not a multiple of h.
long long steps_for(double duration, double h, const char* what);

}  // namespace gtpde
