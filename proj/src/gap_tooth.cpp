#include "gtpde/gap_tooth.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gtpde/common.hpp"
#include "gtpde/parallel.hpp"

namespace gtpde {

void ToothGrid::validate() const {
  if (N < 1) throw ConfigError("grid.N must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("grid.alpha must lie in (0, 1)");
}

double ToothGrid::spacing() const { return kTwoPi / static_cast<double>(N); }

double ToothGrid::center(int i) const { return (static_cast<double>(i) + 0.5) * spacing(); }

Interval ToothGrid::tooth(int i) const {
  const double c = center(i);
  const double half = 0.5 * width();
  return Interval{c - half, c + half};
}

std::vector<Interval> ToothGrid::teeth() const {
  std::vector<Interval> out(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) out[static_cast<std::size_t>(i)] = tooth(i);
  return out;
}

double suggested_micro_step(const ToothGrid& grid, double nu, double record_dt, double ratio) {
  grid.validate();
  if (!(nu > 0.0)) return record_dt;
  const double sigma = grid.width() / ratio;
  const double h_max = sigma * sigma / (2.0 * nu);
  const double per_record = std::ceil(record_dt / h_max - 1e-9);
  return record_dt / std::max(1.0, per_record);
}

double fraction_same(double alpha) { return 1.0 - alpha * alpha; }
double fraction_down(double alpha) { return 0.5 * alpha * (1.0 + alpha); }
double fraction_anti(double alpha) { return 0.5 * alpha * (1.0 - alpha); }

namespace {

long round_with_carry(double target, double& carry, long upper) {
  const double t = target + carry;
  long n = static_cast<long>(std::nearbyint(t));
  n = std::clamp(n, 0L, upper);
  carry = t - static_cast<double>(n);
  return n;
}

}  // namespace

Apportionment apportion(long n_out, double alpha, double& carry_down, double& carry_anti) {
  Apportionment a;
  a.n_out = n_out;
  a.n_down = round_with_carry(static_cast<double>(n_out) * fraction_down(alpha), carry_down, n_out);
  a.n_anti = round_with_carry(static_cast<double>(n_out) * fraction_anti(alpha), carry_anti, n_out);
  a.n_same = n_out + a.n_anti - a.n_down;
  return a;
}

Apportionment apportion(long n_out, double alpha) {
  double cd = 0.0;
  double ca = 0.0;
  return apportion(n_out, alpha, cd, ca);
}

std::size_t FluxBatch::exits() const {
  std::size_t n = 0;
  for (const auto& v : right) n += v.size();
  for (const auto& v : left) n += v.size();
  return n;
}

RedistributionState::RedistributionState(std::size_t teeth)
    : carry_down_right(teeth, 0.0),
      carry_anti_right(teeth, 0.0),
      carry_down_left(teeth, 0.0),
      carry_anti_left(teeth, 0.0) {}

std::vector<Apportionment> redistribute(const FluxBatch& batch, const ToothGrid& grid,
                                        ParticleEnsemble& ensemble, RedistributionState& state,
                                        Rng& rng) {
  const auto n_teeth = static_cast<std::size_t>(grid.N);
  if (batch.right.size() != n_teeth || batch.left.size() != n_teeth ||
      ensemble.groups.size() != n_teeth || state.carry_down_right.size() != n_teeth) {
    throw ConfigError("redistribute: batch, state and ensemble must match the tooth grid");
  }
  const double w = grid.width();
  std::vector<Apportionment> applied;
  std::vector<AntiParticle> anti = std::move(state.pending);
  state.pending.clear();

  // Entry point of a particle that crossed a boundary with overshoot `depth`
  // and is inserted into tooth `j` travelling in direction `right`.
  auto entry = [&](int j, double depth, bool rightward) {
    if (depth > w) {
      ++state.clamped;
      depth = w;
    }
    const Interval t = grid.tooth(j);
    return rightward ? t.lo + depth : t.hi - depth;
  };

  std::vector<double> depths;
  for (int i = 0; i < grid.N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    for (int dir = 0; dir < 2; ++dir) {
      const bool rightward = dir == 0;
      const auto& src = rightward ? batch.right[ui] : batch.left[ui];
      if (src.empty()) continue;
      depths.assign(src.begin(), src.end());
      state.exits += static_cast<long long>(depths.size());
      std::shuffle(depths.begin(), depths.end(), rng.engine());

      double& cd = rightward ? state.carry_down_right[ui] : state.carry_down_left[ui];
      double& ca = rightward ? state.carry_anti_right[ui] : state.carry_anti_left[ui];
      Apportionment a = apportion(static_cast<long>(depths.size()), grid.alpha, cd, ca);
      applied.push_back(a);
      if (a.n_same + a.n_down - a.n_anti != a.n_out) {
        throw NumericError("redistribute: apportionment does not balance");
      }

      const int down = grid.wrap(rightward ? i + 1 : i - 1);
      const int up = grid.wrap(rightward ? i - 1 : i + 1);
      auto& same_group = ensemble.groups[ui];
      auto& down_group = ensemble.groups[static_cast<std::size_t>(down)];
      for (long k = 0; k < a.n_out; ++k) {
        const double depth = depths[static_cast<std::size_t>(k)];
        if (k < a.n_down) {
          down_group.push_back(entry(down, depth, rightward));
        } else {
          same_group.push_back(entry(i, depth, rightward));
        }
      }
      for (long k = 0; k < a.n_anti; ++k) {
        const double depth = depths[rng.index(depths.size())];
        same_group.push_back(entry(i, depth, rightward));
        anti.push_back(AntiParticle{up, entry(up, depth, rightward)});
      }
    }
  }

  {
    std::vector<double> scratch;
    std::vector<std::uint32_t> counts;
    for (std::size_t j = 0; j < ensemble.groups.size(); ++j) {
      sort_in_interval(ensemble.groups[j], ensemble.bounds[j].lo, ensemble.bounds[j].hi, scratch,
                       counts);
    }
  }

  bool any_real = false;
  for (const auto& g : ensemble.groups) any_real = any_real || !g.empty();
  for (const AntiParticle& ap : anti) {
    auto& g = ensemble.groups[static_cast<std::size_t>(ap.tooth)];
    if (g.empty()) {
      state.pending.push_back(ap);
      continue;
    }
    auto it = std::lower_bound(g.begin(), g.end(), ap.position);
    if (it == g.end()) {
      --it;
    } else if (it != g.begin()) {
      auto below = std::prev(it);
      if (ap.position - *below <= *it - ap.position) it = below;
    }
    g.erase(it);
  }
  if (!state.pending.empty()) {
    any_real = false;
    for (const auto& g : ensemble.groups) any_real = any_real || !g.empty();
    if (!any_real) {
      throw NumericError("redistribute: " + std::to_string(state.pending.size()) +
                         " anti-particles left with every tooth empty (conservation violated)");
    }
  }
  return applied;
}

GapToothSimulator::GapToothSimulator(const ToothGrid& grid, const MicroParams& params,
                                     std::uint64_t seed)
    : grid_(grid), params_(params), exchange_rng_(seed), state_(static_cast<std::size_t>(grid.N)) {
  grid_.validate();
  params_.validate();
  ensemble_.groups.resize(static_cast<std::size_t>(grid_.N));
  ensemble_.bounds = grid_.teeth();
  ensemble_.periodic = false;
  Rng master(seed);
  tooth_rng_.reserve(static_cast<std::size_t>(grid_.N));
  for (int i = 0; i < grid_.N; ++i) tooth_rng_.push_back(master.split(static_cast<std::uint64_t>(i) + 1));
  exchange_rng_ = master.split(0);
  scratch_.resize(static_cast<std::size_t>(grid_.N));
}

void GapToothSimulator::lift(const DensityField& rho0) {
  const auto teeth = grid_.teeth();
  Rng lift_rng = exchange_rng_.split(0xA11CE);
  ensemble_ = gtpde::lift(rho0, params_.Z, teeth, lift_rng);
  ensemble_.periodic = false;
  state_ = RedistributionState(static_cast<std::size_t>(grid_.N));
  steps_ = 0;
  expected_count_ = static_cast<long long>(ensemble_.size());
}

void GapToothSimulator::step() {
  const auto n_teeth = static_cast<std::size_t>(grid_.N);
  const double noise = std::sqrt(2.0 * params_.nu * params_.h);
  const double w = grid_.width();
  FluxBatch batch(n_teeth);

  parallel_for(n_teeth, [&](std::size_t i) {
    auto& g = ensemble_.groups[i];
    auto& drift = scratch_[i];
    drift.resize(g.size());
    drift_displacements(g, params_, false, w, drift);
    const Interval t = ensemble_.bounds[i];
    Rng& rng = tooth_rng_[i];
    std::size_t kept = 0;
    for (std::size_t p = 0; p < g.size(); ++p) {
      double x = g[p] + drift[p];
      if (noise > 0.0) x += noise * rng.normal();
      if (x > t.hi) {
        batch.right[i].push_back(x - t.hi);
      } else if (x < t.lo) {
        batch.left[i].push_back(t.lo - x);
      } else {
        g[kept++] = x;
      }
    }
    g.resize(kept);
  });

  redistribute(batch, grid_, ensemble_, state_, exchange_rng_);
  ++steps_;
  if (net_count() != expected_count_) {
    throw NumericError("gap_tooth_step: particle count changed from " +
                       std::to_string(expected_count_) + " to " + std::to_string(net_count()));
  }
}

long long GapToothSimulator::net_count() const {
  return static_cast<long long>(ensemble_.size()) - static_cast<long long>(state_.pending.size());
}

DensityField GapToothSimulator::density() const {
  DensityField f = make_field(static_cast<std::size_t>(grid_.N), time());
  const double norm = grid_.width() * params_.Z;
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.values[i] = static_cast<double>(ensemble_.groups[i].size()) / norm;
  }
  return f;
}

GapToothRun simulate_gap_tooth(const DensityField& rho0, const ToothGrid& grid,
                               const MicroParams& params, const GapToothOptions& options,
                               std::uint64_t seed) {
  GapToothSimulator sim(grid, params, seed);
  sim.lift(rho0);
  const long long total = steps_for(options.t_end, params.h, "t_end");
  const long long every = std::max(1LL, steps_for(options.record_dt, params.h, "record_dt"));
  const long long particle_every =
      options.particle_record_dt > 0.0
          ? std::max(1LL, steps_for(options.particle_record_dt, params.h, "particle_record_dt"))
          : 0;

  GapToothRun run;
  run.fields.push_back(sim.density());
  run.particles.push_back(ParticleSnapshot{0.0, sim.ensemble()});
  for (long long s = 1; s <= total; ++s) {
    sim.step();
    if (s % every == 0 || s == total) run.fields.push_back(sim.density());
    if ((particle_every > 0 && s % particle_every == 0) || s == total) {
      run.particles.push_back(ParticleSnapshot{sim.time(), sim.ensemble()});
    }
  }
  run.exits = sim.redistribution().exits;
  run.clamped = sim.redistribution().clamped;
  if (run.exits > 0 && static_cast<double>(run.clamped) > 1e-3 * static_cast<double>(run.exits)) {
    std::ostringstream msg;
    msg << run.clamped << " of " << run.exits
        << " exits overshot a full tooth width and were clamped; reduce h";
    run.warnings.push_back(msg.str());
  }
  return run;
}

}  // namespace gtpde
