#include "gtpde/fv_reference.hpp"

#include <algorithm>
#include <cmath>

#include "gtpde/common.hpp"

namespace gtpde {

void FvConfig::validate() const {
  if (n_cells < 16) throw ConfigError("fv.n_cells must be >= 16");
  if (!(nu >= 0.0)) throw ConfigError("fv.nu must be >= 0");
  if (!(cfl > 0.0 && cfl <= 1.0)) throw ConfigError("fv.cfl must lie in (0, 1]");
  if (!(t_end >= 0.0)) throw ConfigError("fv.t_end must be >= 0");
  if (!(record_dt > 0.0)) throw ConfigError("fv.record_dt must be > 0");
}

DensityField cell_averages(const std::function<double(double)>& f, std::size_t n) {
  static constexpr double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                      0.5384693101056831, 0.9061798459386640};
  static constexpr double weights[5] = {0.2369268850561891, 0.4786286704993665,
                                        0.5688888888888889, 0.4786286704993665,
                                        0.2369268850561891};
  DensityField out = make_field(n);
  const double half = 0.5 * out.dx;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int q = 0; q < 5; ++q) s += weights[q] * f(out.grid_x[i] + half * nodes[q]);
    out.values[i] = 0.5 * s;
  }
  return out;
}

namespace {

// Left-biased WENO5-JS value at the interface between the 3rd and 4th points.
inline double weno5(double a, double b, double c, double d, double e) {
  constexpr double eps = 1e-6;
  const double q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
  const double q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
  const double q2 = (2.0 * c + 5.0 * d - e) / 6.0;
  const double s0 = 13.0 / 12.0 * (a - 2.0 * b + c) * (a - 2.0 * b + c) +
                    0.25 * (a - 4.0 * b + 3.0 * c) * (a - 4.0 * b + 3.0 * c);
  const double s1 = 13.0 / 12.0 * (b - 2.0 * c + d) * (b - 2.0 * c + d) + 0.25 * (b - d) * (b - d);
  const double s2 = 13.0 / 12.0 * (c - 2.0 * d + e) * (c - 2.0 * d + e) +
                    0.25 * (3.0 * c - 4.0 * d + e) * (3.0 * c - 4.0 * d + e);
  const double a0 = 0.1 / ((eps + s0) * (eps + s0));
  const double a1 = 0.6 / ((eps + s1) * (eps + s1));
  const double a2 = 0.3 / ((eps + s2) * (eps + s2));
  return (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2);
}

}  // namespace

void burgers_rhs(const std::vector<double>& u, double dx, double nu, std::vector<double>& dudt) {
  const auto n = static_cast<long>(u.size());
  auto at = [&](long k) { return u[static_cast<std::size_t>((k % n + n) % n)]; };
  double speed = 0.0;
  for (double v : u) speed = std::max(speed, std::abs(v));

  // flux[i] lives on the interface between cell i and i+1. WENO5 reconstructs
  // the left and right interface states from cell averages; a global
  // Lax-Friedrichs flux splits the convective flux between them.
  std::vector<double> flux(u.size());
  for (long i = 0; i < n; ++i) {
    const double left = weno5(at(i - 2), at(i - 1), at(i), at(i + 1), at(i + 2));
    const double right = weno5(at(i + 3), at(i + 2), at(i + 1), at(i), at(i - 1));
    const double convective = 0.25 * (left * left + right * right) - 0.5 * speed * (right - left);
    // 4th-order interface gradient from cell averages, so diffusion is in flux form too.
    const double grad = (at(i - 1) - 15.0 * at(i) + 15.0 * at(i + 1) - at(i + 2)) / (12.0 * dx);
    flux[static_cast<std::size_t>(i)] = convective - nu * grad;
  }
  dudt.resize(u.size());
  for (long i = 0; i < n; ++i) {
    const double right = flux[static_cast<std::size_t>(i)];
    const double left = flux[static_cast<std::size_t>((i - 1 + n) % n)];
    dudt[static_cast<std::size_t>(i)] = -(right - left) / dx;
  }
}

std::vector<DensityField> fv_solve(const DensityField& rho0, const FvConfig& cfg) {
  cfg.validate();
  if (rho0.size() != cfg.n_cells) {
    throw ConfigError("fv_solve: initial field has " + std::to_string(rho0.size()) +
                      " cells, config expects " + std::to_string(cfg.n_cells));
  }
  const double dx = kTwoPi / static_cast<double>(cfg.n_cells);
  std::vector<double> u = rho0.values;
  std::vector<double> k(u.size()), stage1(u.size()), stage2(u.size());

  std::vector<DensityField> out;
  DensityField snap = make_field(cfg.n_cells, 0.0);
  snap.values = u;
  out.push_back(snap);

  const auto records = static_cast<long long>(std::floor(cfg.t_end / cfg.record_dt + 1e-9));
  std::vector<double> targets;
  for (long long r = 1; r <= records; ++r) targets.push_back(static_cast<double>(r) * cfg.record_dt);
  if (targets.empty() || cfg.t_end - targets.back() > 1e-12 * std::max(1.0, cfg.t_end)) {
    if (cfg.t_end > 0.0) targets.push_back(cfg.t_end);
  }

  double t = 0.0;
  for (double target : targets) {
    while (t < target - 1e-14 * std::max(1.0, target)) {
      double speed = 0.0;
      for (double v : u) speed = std::max(speed, std::abs(v));
      double dt = cfg.cfl * dx / std::max(speed, 1e-12);
      if (cfg.nu > 0.0) dt = std::min(dt, cfg.cfl * dx * dx / cfg.nu);
      // Land exactly on the record time with equal substeps.
      const double remaining = target - t;
      const double substeps = std::ceil(remaining / dt - 1e-9);
      dt = remaining / std::max(1.0, substeps);

      burgers_rhs(u, dx, cfg.nu, k);
      for (std::size_t i = 0; i < u.size(); ++i) stage1[i] = u[i] + dt * k[i];
      burgers_rhs(stage1, dx, cfg.nu, k);
      for (std::size_t i = 0; i < u.size(); ++i) stage2[i] = 0.75 * u[i] + 0.25 * (stage1[i] + dt * k[i]);
      burgers_rhs(stage2, dx, cfg.nu, k);
      for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = u[i] / 3.0 + 2.0 / 3.0 * (stage2[i] + dt * k[i]);
        if (!std::isfinite(u[i])) throw NumericError("fv_solve: non-finite value at t = " + std::to_string(t));
      }
      t += dt;
      if (substeps <= 1.0) t = target;
    }
    t = target;
    snap.values = u;
    snap.t = target;
    out.push_back(snap);
  }
  return out;
}

}  // namespace gtpde
