#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "gtpde/micro_particles.hpp"

namespace gtpde {

/// Finite-volume solver settings for d_t rho = -rho rho_x + nu rho_xx.
struct FvConfig {
  std::size_t n_cells = 512;
  double nu = 0.05;
  double cfl = 0.4;
  double t_end = 1.0;
  double record_dt = 0.01;

  void validate() const;
};

/// Cell averages of f over n uniform periodic cells (5-point Gauss-Legendre).
DensityField cell_averages(const std::function<double(double)>& f, std::size_t n);

/// Semi-discrete right-hand side: WENO5 (Lax-Friedrichs split) convective
/// flux plus 4th-order central diffusion, in flux form.
void burgers_rhs(const std::vector<double>& u, double dx, double nu, std::vector<double>& dudt);

/// SSP-RK3 integration of cell averages; snapshots every record_dt,
/// including t = 0 and t_end.
std::vector<DensityField> fv_solve(const DensityField& rho0, const FvConfig& cfg);

}  // namespace gtpde
