#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gtpde/micro_particles.hpp"
#include "gtpde/rng.hpp"

namespace gtpde {

/// N equal teeth of width alpha*d centered in the N cells of [0, 2pi).
struct ToothGrid {
  int N = 32;
  double alpha = 0.1;

  void validate() const;
  double spacing() const;
  double width() const { return alpha * spacing(); }
  double center(int i) const;
  Interval tooth(int i) const;
  std::vector<Interval> teeth() const;
  int wrap(int i) const { return ((i % N) + N) % N; }
};

/// Micro step sized so the noise amplitude sqrt(2 nu h) is at most
/// `width / ratio`, rounded down to a divisor of `record_dt`.
double suggested_micro_step(const ToothGrid& grid, double nu, double record_dt, double ratio = 3.2);

/// Split of n_out exiting particles: n_down go to the downstream tooth,
/// n_out - n_down return to the same tooth together with n_anti extra
/// particles, and n_anti anti-particles enter the upstream tooth.
struct Apportionment {
  long n_out = 0;
  long n_same = 0;
  long n_down = 0;
  long n_anti = 0;
};

/// Fractions of the quadratic flux interpolation: same tooth 1 - a^2,
/// downstream a(1+a)/2, upstream -a(1-a)/2.
double fraction_same(double alpha);
double fraction_down(double alpha);
double fraction_anti(double alpha);

/// Rounds n_out * fraction half-to-even after adding the carried remainder,
/// and stores the new remainder back into the carry.
Apportionment apportion(long n_out, double alpha, double& carry_down, double& carry_anti);
/// Same with zero carry.
Apportionment apportion(long n_out, double alpha);

/// Exit depths beyond the crossed boundary, per tooth and direction.
struct FluxBatch {
  std::vector<std::vector<double>> right;
  std::vector<std::vector<double>> left;

  explicit FluxBatch(std::size_t teeth = 0) : right(teeth), left(teeth) {}
  std::size_t exits() const;
};

struct AntiParticle {
  int tooth = 0;
  double position = 0.0;
};

/// State carried between redistribution rounds.
struct RedistributionState {
  std::vector<double> carry_down_right, carry_anti_right;
  std::vector<double> carry_down_left, carry_anti_left;
  std::vector<AntiParticle> pending;  ///< anti-particles that met an empty tooth
  long long exits = 0;
  long long clamped = 0;  ///< exits deeper than a tooth width

  explicit RedistributionState(std::size_t teeth = 0);
};

/// Moves every exit into its receiving tooth and annihilates anti-particles
/// with the nearest real particle (ties toward the lower coordinate). Groups
/// of `ensemble` are sorted on return. Returns the apportionments applied.
std::vector<Apportionment> redistribute(const FluxBatch& batch, const ToothGrid& grid,
                                        ParticleEnsemble& ensemble, RedistributionState& state,
                                        Rng& rng);

/// Gap-tooth simulation state: teeth, per-tooth random streams, carries.
class GapToothSimulator {
 public:
  GapToothSimulator(const ToothGrid& grid, const MicroParams& params, std::uint64_t seed);

  /// Lifts rho0, given at the tooth centers, into the teeth.
  void lift(const DensityField& rho0);
  /// One micro step in every tooth followed by flux redistribution.
  void step();

  DensityField density() const;
  const ParticleEnsemble& ensemble() const { return ensemble_; }
  ParticleEnsemble& ensemble() { return ensemble_; }
  const ToothGrid& grid() const { return grid_; }
  const MicroParams& params() const { return params_; }
  const RedistributionState& redistribution() const { return state_; }
  double time() const { return static_cast<double>(steps_) * params_.h; }
  /// Real particles minus pending anti-particles; constant over steps.
  long long net_count() const;

 private:
  ToothGrid grid_;
  MicroParams params_;
  ParticleEnsemble ensemble_;
  std::vector<Rng> tooth_rng_;
  Rng exchange_rng_;
  RedistributionState state_;
  long long steps_ = 0;
  long long expected_count_ = 0;
  std::vector<std::vector<double>> scratch_;
};

struct GapToothOptions {
  double t_end = 1.0;
  double record_dt = 0.01;
  /// <= 0 keeps only the first and last particle snapshots.
  double particle_record_dt = 0.0;
};

struct ParticleSnapshot {
  double t = 0.0;
  ParticleEnsemble ensemble;
};

struct GapToothRun {
  std::vector<DensityField> fields;
  std::vector<ParticleSnapshot> particles;
  long long exits = 0;
  long long clamped = 0;
  std::vector<std::string> warnings;
};

GapToothRun simulate_gap_tooth(const DensityField& rho0, const ToothGrid& grid,
                               const MicroParams& params, const GapToothOptions& options,
                               std::uint64_t seed);

}  // namespace gtpde
