#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gtpde/distances.hpp"

namespace gtpde {

struct Kernel {
  Eigen::MatrixXd W;
  double epsilon = 0.0;
};

/// Median of the off-diagonal squared distances.
double median_squared_distance(const Eigen::MatrixXd& d);

/// W_ij = exp(-d_ij^2 / eps); eps defaults to median_squared_distance.
Kernel build_kernel(const DistanceMatrix& dist, std::optional<double> epsilon = std::nullopt);
Kernel build_kernel(const Eigen::MatrixXd& dist, std::optional<double> epsilon = std::nullopt);

/// Density-normalized row-stochastic matrix D̄^-1 D^-1 W D^-1.
Eigen::MatrixXd markov_matrix(const Eigen::MatrixXd& W);

struct EmbeddingResult {
  Eigen::VectorXd eigenvalues;   ///< ascending, eigenvalues(0) ~ 0
  Eigen::MatrixXd eigenvectors;  ///< column k is phi_k, unit norm
  double epsilon = 0.0;
  std::vector<double> residuals;  ///< filled by independence_residuals when requested

  Eigen::VectorXd phi(int k) const { return eigenvectors.col(k); }
};

/// Eigenpairs of A = I - markov_matrix(W), n_eig smallest. When sign_reference
/// is given, each eigenvector is flipped to correlate positively with it.
EmbeddingResult diffusion_embedding(const Kernel& kernel, int n_eig = 8,
                                    std::span<const double> sign_reference = {});

/// Normalized leave-one-out local linear regression error of each phi_k on
/// phi_1..phi_{k-1}. Entry 0 is unused (0), entry 1 is 1 by convention.
std::vector<double> independence_residuals(const Eigen::MatrixXd& phis, int n_keep,
                                           double bandwidth_scale = 1.0 / 3.0);
std::vector<double> independence_residuals(const EmbeddingResult& embedding, int n_keep,
                                           double bandwidth_scale = 1.0 / 3.0);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);
double median(std::vector<double> v);

/// Monotone piecewise-linear map rho <-> phi_1 fitted by isotonic regression.
class PhiMap {
 public:
  static constexpr std::size_t kMaxKnots = 16;

  /// Throws ConfigError when |Spearman| < 0.95 or the fit degenerates.
  static PhiMap fit(std::span<const double> rho, std::span<const double> phi);
  static PhiMap from_knots(std::vector<double> rho, std::vector<double> phi);

  double forward(double rho) const;
  double inverse(double phi) const;
  std::vector<double> forward(std::span<const double> rho) const;
  std::vector<double> inverse(std::span<const double> phi) const;

  const std::vector<double>& rho_knots() const { return rho_; }
  const std::vector<double>& phi_knots() const { return phi_; }
  bool increasing() const { return phi_.back() > phi_.front(); }
  double spearman() const { return spearman_; }

 private:
  std::vector<double> rho_;  ///< strictly increasing
  std::vector<double> phi_;  ///< strictly monotone
  double spearman_ = 1.0;
};

}  // namespace gtpde
