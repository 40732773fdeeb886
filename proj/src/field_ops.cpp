#include "gtpde/field_ops.hpp"

#include <algorithm>
#include <cmath>

#include "gtpde/common.hpp"

namespace gtpde {

double interpolate_cubic(const DensityField& f, double x) {
  const auto n = static_cast<long>(f.size());
  if (n < 4) throw ConfigError("interpolate_cubic: need at least 4 grid points");
  const double dx = kTwoPi / static_cast<double>(n);
  // Position in index space relative to cell centers (i + 1/2) dx.
  const double s = wrap_periodic(x) / dx - 0.5;
  const long i0 = static_cast<long>(std::floor(s));
  const double u = s - static_cast<double>(i0);
  auto at = [&](long k) { return f.values[static_cast<std::size_t>(((k % n) + n) % n)]; };
  const double pm1 = at(i0 - 1), p0 = at(i0), p1 = at(i0 + 1), p2 = at(i0 + 2);
  const double wm1 = -u * (u - 1.0) * (u - 2.0) / 6.0;
  const double w0 = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
  const double w1 = -(u + 1.0) * u * (u - 2.0) / 2.0;
  const double w2 = (u + 1.0) * u * (u - 1.0) / 6.0;
  return wm1 * pm1 + w0 * p0 + w1 * p1 + w2 * p2;
}

bool same_grid(const DensityField& a, const DensityField& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a.grid_x[i] - b.grid_x[i]) > tol) return false;
  }
  return true;
}

DensityField resample(const DensityField& ref, const DensityField& like) {
  if (same_grid(ref, like)) {
    DensityField out = ref;
    return out;
  }
  DensityField out = like;
  out.t = ref.t;
  for (std::size_t i = 0; i < like.size(); ++i) out.values[i] = interpolate_cubic(ref, like.grid_x[i]);
  return out;
}

DensityField coarsen(const DensityField& f, std::size_t factor) {
  if (factor == 0 || f.size() % factor != 0) throw ConfigError("coarsen: factor must divide grid size");
  DensityField out = make_field(f.size() / factor, f.t);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < factor; ++k) s += f.values[i * factor + k];
    out.values[i] = s / static_cast<double>(factor);
  }
  return out;
}

double l2_error(const DensityField& a, const DensityField& b) {
  if (a.size() != b.size()) throw ConfigError("l2_error: grid size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(kTwoPi / static_cast<double>(a.size()) * s);
}

double linf_error(const DensityField& a, const DensityField& b) {
  if (a.size() != b.size()) throw ConfigError("linf_error: grid size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
  return m;
}

std::vector<double> gaussian_smooth(std::span<const double> v, double sigma_cells) {
  std::vector<double> out(v.begin(), v.end());
  if (sigma_cells <= 0.0 || v.empty()) return out;
  const auto n = static_cast<long>(v.size());
  const long radius = static_cast<long>(std::ceil(4.0 * sigma_cells));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (long k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * static_cast<double>(k * k) / (sigma_cells * sigma_cells));
    kernel[static_cast<std::size_t>(k + radius)] = w;
    total += w;
  }
  for (auto& w : kernel) w /= total;
  for (long i = 0; i < n; ++i) {
    double s = 0.0;
    for (long k = -radius; k <= radius; ++k) {
      s += kernel[static_cast<std::size_t>(k + radius)] * v[static_cast<std::size_t>(((i + k) % n + n) % n)];
    }
    out[static_cast<std::size_t>(i)] = s;
  }
  return out;
}

}  // namespace gtpde
