#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gtpde/micro_particles.hpp"

namespace gtpde {

/// Particles of one tooth in local coordinates [0, 1]; mass = count / Z.
struct ToothDistribution {
  std::vector<double> local_positions;
  double mass = 0.0;
};

/// Maps each tooth of a gap-tooth ensemble affinely onto [0, 1].
std::vector<ToothDistribution> tooth_distributions(const ParticleEnsemble& ensemble, double Z);

/// Nonnegative measure on [0, 1]: point masses plus a piecewise-constant
/// density on bins. Either part may be empty.
struct Measure1D {
  std::vector<double> atom_x;
  std::vector<double> atom_w;
  std::vector<double> bin_edges;  ///< ascending, size = densities + 1
  std::vector<double> densities;

  double mass() const;
  static Measure1D from_particles(const ToothDistribution& d);
  static Measure1D uniform(double mass, double lo = 0.0, double hi = 1.0);
  static Measure1D histogram(std::vector<double> edges, std::vector<double> densities);
};

/// Closed-form unnormalized 1-Wasserstein distance on [0, 1]:
///   int_0^1 |F1(x) - F2(x) - x (F1(1) - F2(1))| dx + beta |F1(1) - F2(1)|
/// with F the unnormalized CDFs, integrated exactly.
double uw1_distance(const Measure1D& a, const Measure1D& b, double beta = 1.0);
double uw1_distance(const ToothDistribution& a, const ToothDistribution& b, double beta = 1.0);

/// [M_0, ..., M_K] with M_k = int x^k dmu.
std::vector<double> truncated_moments(const Measure1D& mu, int K);
std::vector<double> truncated_moments(const ToothDistribution& d, int K);

/// Euclidean distance of truncated moment vectors.
double moments_distance(const Measure1D& a, const Measure1D& b, int K = 5);
double moments_distance(const ToothDistribution& a, const ToothDistribution& b, int K = 5);

struct UnbalancedOtParams {
  double cost_exponent = 2.0;
  double lambda_kl = 1.0;
  double eps_entropy = 1e-2;
  std::size_t grid_n = 32;
  double tolerance = 1e-9;
  int max_iterations = 10000;
};

struct UnbalancedOtResult {
  double value = 0.0;  ///< transport cost + lambda * (KL(P1 g | a) + KL(P2 g | b))
  bool converged = false;
  int iterations = 0;
};

/// Generalized KL divergence sum p log(p/q) - p + q (0 log 0 = 0).
double generalized_kl(std::span<const double> p, std::span<const double> q);

/// Objective of an explicit plan on bin masses a, b with cost c (row-major).
double unbalanced_objective(const Eigen::MatrixXd& plan, std::span<const double> a,
                            std::span<const double> b, const Eigen::MatrixXd& cost, double lambda);

/// |x_i - x_j|^p between the centers of n equal bins on [0, 1].
Eigen::MatrixXd bin_cost(std::size_t n, double exponent);

/// Entropic scaling iterations on explicit bin masses, returning the
/// unregularized objective at the entropic plan.
UnbalancedOtResult unbalanced_ot(std::span<const double> a, std::span<const double> b,
                                 const Eigen::MatrixXd& cost, double lambda, double eps,
                                 double tolerance = 1e-9, int max_iterations = 10000);

/// Bins both distributions on grid_n cells of [0, 1] and solves.
std::vector<double> bin_masses(const Measure1D& mu, std::size_t n);
UnbalancedOtResult unbalanced_ot_distance(const Measure1D& a, const Measure1D& b,
                                          const UnbalancedOtParams& params = {});
UnbalancedOtResult unbalanced_ot_distance(const ToothDistribution& a, const ToothDistribution& b,
                                          const UnbalancedOtParams& params = {});

enum class Metric { kUw1, kMoments, kUnbalancedOt };

Metric parse_metric(const std::string& name);
std::string metric_name(Metric metric);

struct DistanceParams {
  double beta = 1.0;
  int K = 5;
  UnbalancedOtParams uot;
};

struct DistanceMatrix {
  Eigen::MatrixXd values;
  Metric metric = Metric::kUw1;
  DistanceParams params;
  int unconverged = 0;  ///< unbalanced OT pairs that hit the iteration cap

  /// Symmetric, zero diagonal, nonnegative, finite.
  bool valid(double tol = 0.0) const;
};

DistanceMatrix pairwise_distances(std::span<const ToothDistribution> snapshot, Metric metric,
                                  const DistanceParams& params = {});

}  // namespace gtpde
