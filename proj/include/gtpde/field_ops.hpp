#pragma once

#include <span>
#include <vector>

#include "gtpde/micro_particles.hpp"

namespace gtpde {

/// Periodic 4-point Lagrange interpolation of a cell-centered field at x.
double interpolate_cubic(const DensityField& f, double x);

/// Field `ref` evaluated on the grid of `like` (cubic interpolation unless
/// the grids coincide).
DensityField resample(const DensityField& ref, const DensityField& like);

/// Averages blocks of `factor` consecutive cells.
DensityField coarsen(const DensityField& f, std::size_t factor);

/// sqrt(dx * sum (a - b)^2) on a shared grid.
double l2_error(const DensityField& a, const DensityField& b);
double linf_error(const DensityField& a, const DensityField& b);

/// Periodic Gaussian smoothing with standard deviation `sigma_cells`.
std::vector<double> gaussian_smooth(std::span<const double> v, double sigma_cells);

bool same_grid(const DensityField& a, const DensityField& b, double tol = 1e-9);

}  // namespace gtpde
