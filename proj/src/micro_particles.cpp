#include "gtpde/micro_particles.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gtpde/common.hpp"

namespace gtpde {

void MicroParams::validate() const {
  if (!(nu >= 0.0)) throw ConfigError("micro.nu must be >= 0");
  if (!(h > 0.0)) throw ConfigError("micro.h must be > 0");
  if (!(Z >= 1.0)) throw ConfigError("micro.Z must be >= 1");
  if (m < 1) throw ConfigError("micro.m must be >= 1");
}

std::vector<Interval> uniform_partition(std::size_t n) {
  if (n == 0) throw ConfigError("partition needs at least one cell");
  std::vector<Interval> cells(n);
  const double dx = kTwoPi / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    cells[i].lo = dx * static_cast<double>(i);
    cells[i].hi = (i + 1 == n) ? kTwoPi : dx * static_cast<double>(i + 1);
  }
  return cells;
}

DensityField make_field(std::size_t n, double t) {
  DensityField f;
  f.values.assign(n, 0.0);
  f.grid_x.resize(n);
  f.dx = kTwoPi / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) f.grid_x[i] = (static_cast<double>(i) + 0.5) * f.dx;
  f.t = t;
  return f;
}

std::size_t ParticleEnsemble::size() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

ParticleEnsemble lift(const DensityField& rho0, double Z, std::span<const Interval> intervals,
                      Rng& rng) {
  if (rho0.values.size() != intervals.size()) {
    throw ConfigError("lift: density has " + std::to_string(rho0.values.size()) +
                      " values but " + std::to_string(intervals.size()) + " intervals were given");
  }
  if (!(Z > 0.0)) throw ConfigError("lift: Z must be positive");
  ParticleEnsemble ens;
  ens.groups.resize(intervals.size());
  ens.bounds.assign(intervals.begin(), intervals.end());
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    const double rho = rho0.values[i];
    if (!(rho >= 0.0)) {
      std::ostringstream msg;
      msg << "lift: negative or NaN density " << rho << " at grid point " << i;
      if (i < rho0.grid_x.size()) msg << " (x = " << rho0.grid_x[i] << ")";
      throw ConfigError(msg.str());
    }
    const auto count = static_cast<std::size_t>(std::nearbyint(rho * intervals[i].width() * Z));
    auto& g = ens.groups[i];
    g.resize(count);
    for (auto& x : g) x = rng.uniform(intervals[i].lo, intervals[i].hi);
    std::sort(g.begin(), g.end());
  }
  return ens;
}

DensityField restrict_density(const ParticleEnsemble& ensemble, std::span<const Interval> intervals,
                              double Z, double t) {
  if (intervals.empty()) throw ConfigError("restrict: empty interval list");
  std::vector<double> counts(intervals.size(), 0.0);
  std::vector<double> starts(intervals.size());
  for (std::size_t i = 0; i < intervals.size(); ++i) starts[i] = intervals[i].lo;
  for (const auto& g : ensemble.groups) {
    for (double x : g) {
      auto it = std::upper_bound(starts.begin(), starts.end(), x);
      if (it == starts.begin()) throw ConfigError("restrict: particle outside every interval");
      std::size_t k = static_cast<std::size_t>(it - starts.begin()) - 1;
      // Shared endpoints belong to the left interval when it owns them.
      if (!intervals[k].contains(x)) {
        if (k > 0 && intervals[k - 1].contains(x)) {
          --k;
        } else {
          throw ConfigError("restrict: particle outside every interval");
        }
      }
      counts[k] += 1.0;
    }
  }
  DensityField f;
  f.values.resize(intervals.size());
  f.grid_x.resize(intervals.size());
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    f.values[i] = counts[i] / (intervals[i].width() * Z);
    f.grid_x[i] = intervals[i].center();
  }
  f.dx = kTwoPi / static_cast<double>(intervals.size());
  f.t = t;
  return f;
}

void drift_displacements(std::span<const double> x, const MicroParams& params, bool periodic,
                         double cap, std::span<double> out) {
  const std::size_t n = x.size();
  const auto m = static_cast<std::size_t>(params.m);
  const double coupling = params.h / params.Z;
  if (periodic) {
    if (n < 2 * m + 1) {
      throw NumericError("micro_step: periodic group has " + std::to_string(n) +
                         " particles, needs at least 2m+1 = " + std::to_string(2 * m + 1));
    }
    for (std::size_t p = 0; p < n; ++p) {
      double right = (p + m < n) ? x[p + m] : x[p + m - n] + kTwoPi;
      double left = (p >= m) ? x[p - m] : x[p + n - m] - kTwoPi;
      double d = right - left;
      out[p] = d > 0.0 ? std::min(static_cast<double>(m) * coupling / d, cap) : cap;
    }
    return;
  }
  if (n <= 1) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const std::size_t gaps = std::min(2 * m, n - 1);
  const double weight = 0.5 * static_cast<double>(gaps) * coupling;
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t lo = p >= gaps / 2 ? p - gaps / 2 : 0;
    lo = std::min(lo, n - 1 - gaps);
    double d = x[lo + gaps] - x[lo];
    out[p] = d > 0.0 ? std::min(weight / d, cap) : cap;
  }
}

void micro_step(ParticleEnsemble& ensemble, const MicroParams& params, Rng& rng) {
  params.validate();
  const double noise = std::sqrt(2.0 * params.nu * params.h);
  std::vector<double> drift;
  std::vector<double> scratch;
  std::vector<std::uint32_t> counts;
  for (std::size_t gi = 0; gi < ensemble.groups.size(); ++gi) {
    auto& g = ensemble.groups[gi];
    const double cap = ensemble.periodic ? kTwoPi : ensemble.bounds[gi].width();
    drift.resize(g.size());
    drift_displacements(g, params, ensemble.periodic, cap, drift);
    for (std::size_t p = 0; p < g.size(); ++p) {
      double step = drift[p];
      if (noise > 0.0) step += noise * rng.normal();
      g[p] += step;
      if (ensemble.periodic) g[p] = wrap_periodic(g[p]);
    }
    if (ensemble.periodic) {
      sort_in_interval(g, 0.0, kTwoPi, scratch, counts);
    } else {
      sort_in_interval(g, ensemble.bounds[gi].lo, ensemble.bounds[gi].hi, scratch, counts);
    }
  }
}

void sort_in_interval(std::vector<double>& values, double lo, double hi,
                      std::vector<double>& scratch, std::vector<std::uint32_t>& counts) {
  const std::size_t n = values.size();
  if (n < 64 || !(hi > lo)) {
    std::sort(values.begin(), values.end());
    return;
  }
  const double scale = static_cast<double>(n) / (hi - lo);
  auto bucket = [&](double x) {
    const double b = (x - lo) * scale;
    if (!(b > 0.0)) return std::size_t{0};
    return std::min(static_cast<std::size_t>(b), n - 1);
  };
  counts.assign(n + 1, 0);
  for (double x : values) ++counts[bucket(x) + 1];
  for (std::size_t b = 1; b <= n; ++b) counts[b] += counts[b - 1];
  scratch.resize(n);
  for (double x : values) scratch[counts[bucket(x)]++] = x;
  for (std::size_t i = 1; i < n; ++i) {
    const double x = scratch[i];
    std::size_t j = i;
    while (j > 0 && scratch[j - 1] > x) {
      scratch[j] = scratch[j - 1];
      --j;
    }
    scratch[j] = x;
  }
  values.swap(scratch);
}

long long steps_for(double duration, double h, const char* what) {
  if (duration < 0.0) throw ConfigError(std::string(what) + " must be >= 0");
  const double ratio = duration / h;
  const long long steps = std::llround(ratio);
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-6 * std::max(1.0, ratio)) {
    throw ConfigError(std::string(what) + " must be a multiple of the micro step h");
  }
  return steps;
}

std::vector<DensityField> simulate_full(const DensityField& rho0, const MicroParams& params,
                                        const FullSimulationOptions& options, Rng& rng) {
  params.validate();
  const auto cells = uniform_partition(options.n_intervals);
  const long long total = steps_for(options.t_end, params.h, "t_end");
  const long long every = std::max(1LL, steps_for(options.record_dt, params.h, "record_dt"));

  ParticleEnsemble lifted = lift(rho0, params.Z, cells, rng);
  ParticleEnsemble ens;
  ens.periodic = true;
  ens.bounds = {Interval{0.0, kTwoPi}};
  ens.groups.resize(1);
  for (auto& g : lifted.groups) ens.groups[0].insert(ens.groups[0].end(), g.begin(), g.end());
  std::sort(ens.groups[0].begin(), ens.groups[0].end());
  const std::size_t count = ens.size();
  if (count < 2 * static_cast<std::size_t>(params.m) + 1) {
    throw ConfigError("simulate_full: lifted " + std::to_string(count) +
                      " particles, fewer than 2m+1");
  }

  std::vector<DensityField> out;
  out.push_back(restrict_density(ens, cells, params.Z, 0.0));
  for (long long s = 1; s <= total; ++s) {
    micro_step(ens, params, rng);
    if (s % every == 0 || s == total) {
      if (ens.size() != count) throw NumericError("simulate_full: particle count changed");
      out.push_back(restrict_density(ens, cells, params.Z, static_cast<double>(s) * params.h));
    }
  }
  return out;
}

}  // namespace gtpde
