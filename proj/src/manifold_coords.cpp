#include "gtpde/manifold_coords.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "gtpde/common.hpp"

namespace gtpde {

double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of empty sample");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

double median_squared_distance(const Eigen::MatrixXd& d) {
  std::vector<double> sq;
  sq.reserve(static_cast<std::size_t>(d.size()));
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) sq.push_back(d(i, j) * d(i, j));
  }
  return median(std::move(sq));
}

Kernel build_kernel(const Eigen::MatrixXd& dist, std::optional<double> epsilon) {
  if (dist.rows() != dist.cols() || dist.rows() < 2) throw ConfigError("build_kernel: need a square matrix with m >= 2");
  if (!dist.allFinite()) throw NumericError("build_kernel: non-finite distance");
  if (dist.cwiseAbs().maxCoeff() == 0.0) throw ConfigError("build_kernel: all distances are zero (degenerate cloud)");
  Kernel k;
  k.epsilon = epsilon ? *epsilon : median_squared_distance(dist);
  if (!(k.epsilon > 0.0)) {
    // More than half the pairs coincide; fall back to the mean so the kernel stays usable.
    double sum = 0.0;
    for (Eigen::Index i = 0; i < dist.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < dist.cols(); ++j) sum += dist(i, j) * dist(i, j);
    }
    k.epsilon = sum / (0.5 * static_cast<double>(dist.rows() * (dist.rows() - 1)));
  }
  if (!(k.epsilon > 0.0)) throw ConfigError("build_kernel: epsilon must be > 0");
  k.W = (-dist.array().square() / k.epsilon).exp().matrix();
  return k;
}

Kernel build_kernel(const DistanceMatrix& dist, std::optional<double> epsilon) {
  if (!dist.valid(1e-12)) throw ConfigError("build_kernel: distance matrix is not symmetric/nonnegative");
  return build_kernel(dist.values, epsilon);
}

namespace {

constexpr double kSlopeRidge = 1e-6;

Eigen::MatrixXd density_normalized(const Eigen::MatrixXd& W) {
  const Eigen::VectorXd d = W.rowwise().sum();
  if ((d.array() <= 0.0).any()) throw ConfigError("diffusion_embedding: zero row sum in kernel");
  const Eigen::VectorXd inv = d.cwiseInverse();
  return inv.asDiagonal() * W * inv.asDiagonal();
}

}  // namespace

Eigen::MatrixXd markov_matrix(const Eigen::MatrixXd& W) {
  const Eigen::MatrixXd wbar = density_normalized(W);
  const Eigen::VectorXd dbar = wbar.rowwise().sum();
  return dbar.cwiseInverse().asDiagonal() * wbar;
}

EmbeddingResult diffusion_embedding(const Kernel& kernel, int n_eig, std::span<const double> sign_reference) {
  const Eigen::MatrixXd& W = kernel.W;
  const Eigen::Index m = W.rows();
  if (W.cols() != m || m < 2) throw ConfigError("diffusion_embedding: kernel must be square with m >= 2");
  if (!((W - W.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * W.cwiseAbs().maxCoeff())) {
    throw ConfigError("diffusion_embedding: kernel is not symmetric");
  }
  if (n_eig < 1) throw ConfigError("diffusion_embedding: n_eig must be >= 1");
  if (!sign_reference.empty() && static_cast<Eigen::Index>(sign_reference.size()) != m) {
    throw ConfigError("diffusion_embedding: sign reference length mismatch");
  }
  const Eigen::MatrixXd wbar = density_normalized(W);
  const Eigen::VectorXd dbar = wbar.rowwise().sum();
  const Eigen::VectorXd isq = dbar.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd S = isq.asDiagonal() * wbar * isq.asDiagonal();
  S = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(S);
  if (solver.info() != Eigen::Success) throw NumericError("diffusion_embedding: eigensolver failed");

  const Eigen::Index keep = std::min<Eigen::Index>(n_eig, m);
  EmbeddingResult out;
  out.epsilon = kernel.epsilon;
  out.eigenvalues.resize(keep);
  out.eigenvectors.resize(m, keep);
  for (Eigen::Index k = 0; k < keep; ++k) {
    // Eigen returns ascending mu; lambda = 1 - mu ascending means walking backwards.
    const Eigen::Index src = m - 1 - k;
    out.eigenvalues(k) = std::max(0.0, 1.0 - solver.eigenvalues()(src));
    Eigen::VectorXd phi = isq.cwiseProduct(solver.eigenvectors().col(src));
    phi.normalize();
    if (!sign_reference.empty()) {
      if (pearson(std::span<const double>(phi.data(), static_cast<std::size_t>(m)), sign_reference) < 0.0) phi = -phi;
    } else if (phi.sum() < 0.0) {
      phi = -phi;
    }
    out.eigenvectors.col(k) = phi;
  }
  return out;
}

std::vector<double> independence_residuals(const Eigen::MatrixXd& phis, int n_keep, double bandwidth_scale) {
  const Eigen::Index m = phis.rows();
  if (m < 10) throw ConfigError("independence_residuals: need at least 10 samples");
  if (n_keep < 2 || n_keep > phis.cols()) throw ConfigError("independence_residuals: need 2 <= n_keep <= number of coordinates");
  if (!(bandwidth_scale > 0.0)) throw ConfigError("independence_residuals: bandwidth scale must be > 0");

  std::vector<double> r(static_cast<std::size_t>(n_keep), 0.0);
  r[1] = 1.0;
  for (int k = 2; k < n_keep; ++k) {
    const Eigen::MatrixXd X = phis.middleCols(1, k - 1);
    const Eigen::VectorXd y = phis.col(k);
    std::vector<double> pair_d;
    pair_d.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = i + 1; j < m; ++j) pair_d.push_back((X.row(i) - X.row(j)).norm());
    }
    double sigma = bandwidth_scale * median(pair_d);
    if (!(sigma > 0.0)) sigma = bandwidth_scale * (*std::max_element(pair_d.begin(), pair_d.end()));
    const double denom = (y.array() - y.mean()).square().sum();
    if (!(sigma > 0.0) || !(denom > 0.0)) {
      r[static_cast<std::size_t>(k)] = 0.0;
      continue;
    }
    double err = 0.0;
    const Eigen::Index p = k;  // intercept + (k - 1) slopes
    for (Eigen::Index i = 0; i < m; ++i) {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
      Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
      Eigen::VectorXd z(p);
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j == i) continue;
        const Eigen::RowVectorXd diff = X.row(j) - X.row(i);
        const double w = std::exp(-diff.squaredNorm() / (sigma * sigma));
        z(0) = 1.0;
        z.tail(p - 1) = diff.transpose();
        A.noalias() += w * z * z.transpose();
        b.noalias() += w * y(j) * z;
      }
      // Regressors lie near a curve, so the local design is close to
      // singular; a small ridge on the slopes keeps the fit from extrapolating.
      A.diagonal().tail(p - 1).array() += kSlopeRidge * A(0, 0) * sigma * sigma;
      A(0, 0) += 1e-300;
      const Eigen::VectorXd beta = A.ldlt().solve(b);
      const double e = y(i) - beta(0);
      err += e * e;
    }
    r[static_cast<std::size_t>(k)] = std::sqrt(err / denom);
  }
  return r;
}

std::vector<double> independence_residuals(const EmbeddingResult& embedding, int n_keep, double bandwidth_scale) {
  return independence_residuals(embedding.eigenvectors, n_keep, bandwidth_scale);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("pearson: need two equal-length samples");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j);
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  const std::size_t n = xs.size();
  std::size_t k;
  if (x <= xs.front()) {
    k = 0;
  } else if (x >= xs.back()) {
    k = n - 2;
  } else {
    k = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
    k = std::min(k, n - 2);
  }
  const double t = (x - xs[k]) / (xs[k + 1] - xs[k]);
  return ys[k] + t * (ys[k + 1] - ys[k]);
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  return pearson(rx, ry);
}

PhiMap PhiMap::from_knots(std::vector<double> rho, std::vector<double> phi) {
  if (rho.size() != phi.size() || rho.size() < 2) throw ConfigError("PhiMap: need at least two knots");
  const bool up = phi.back() > phi.front();
  for (std::size_t i = 0; i + 1 < rho.size(); ++i) {
    if (!(rho[i + 1] > rho[i])) throw ConfigError("PhiMap: rho knots must strictly increase");
    if (up ? !(phi[i + 1] > phi[i]) : !(phi[i + 1] < phi[i])) throw ConfigError("PhiMap: phi knots must be strictly monotone");
  }
  PhiMap map;
  map.rho_ = std::move(rho);
  map.phi_ = std::move(phi);
  return map;
}

PhiMap PhiMap::fit(std::span<const double> rho, std::span<const double> phi) {
  if (rho.size() != phi.size() || rho.size() < 3) throw ConfigError("PhiMap: need at least three samples");
  const double rs = gtpde::spearman(rho, phi);
  if (!(std::abs(rs) >= 0.95)) {
    std::ostringstream msg;
    msg << "PhiMap: rho and phi_1 are not monotonically related (|Spearman| = " << std::abs(rs) << " < 0.95)";
    throw ConfigError(msg.str());
  }
  const bool up = rs > 0.0;

  std::vector<std::size_t> idx(rho.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return rho[a] < rho[b]; });

  // Quantile bins of equal count, each summarized by its means.
  struct Block {
    double x, y, w;
  };
  const std::size_t nb = std::min(kMaxKnots, rho.size());
  std::vector<Block> blocks;
  for (std::size_t b = 0; b < nb; ++b) {
    const std::size_t lo = b * idx.size() / nb;
    const std::size_t hi = (b + 1) * idx.size() / nb;
    Block blk{0.0, 0.0, 0.0};
    for (std::size_t k = lo; k < hi; ++k) {
      blk.x += rho[idx[k]];
      blk.y += phi[idx[k]];
      blk.w += 1.0;
    }
    blk.x /= blk.w;
    blk.y /= blk.w;
    blocks.push_back(blk);
  }
  // Pool adjacent violators; ties are pooled too so the result is strict.
  const double sgn = up ? 1.0 : -1.0;
  std::vector<Block> pooled;
  for (const auto& blk : blocks) {
    pooled.push_back(blk);
    while (pooled.size() >= 2) {
      const Block& b2 = pooled.back();
      const Block& b1 = pooled[pooled.size() - 2];
      if (sgn * (b2.y - b1.y) > 0.0 && b2.x > b1.x) break;
      const double w = b1.w + b2.w;
      const Block merged{(b1.x * b1.w + b2.x * b2.w) / w, (b1.y * b1.w + b2.y * b2.w) / w, w};
      pooled.pop_back();
      pooled.back() = merged;
    }
  }
  if (pooled.size() < 2) throw ConfigError("PhiMap: isotonic fit collapsed to a single level (constant phi_1?)");
  std::vector<double> xs, ys;
  for (const auto& b : pooled) {
    xs.push_back(b.x);
    ys.push_back(b.y);
  }
  PhiMap map = from_knots(std::move(xs), std::move(ys));
  map.spearman_ = rs;
  return map;
}

double PhiMap::forward(double rho) const { return interp(rho_, phi_, rho); }

double PhiMap::inverse(double phi) const {
  if (increasing()) return interp(phi_, rho_, phi);
  const std::vector<double> p(phi_.rbegin(), phi_.rend());
  const std::vector<double> r(rho_.rbegin(), rho_.rend());
  return interp(p, r, phi);
}

std::vector<double> PhiMap::forward(std::span<const double> rho) const {
  std::vector<double> out;
  out.reserve(rho.size());
  for (double r : rho) out.push_back(forward(r));
  return out;
}

std::vector<double> PhiMap::inverse(std::span<const double> phi) const {
  std::vector<double> out;
  out.reserve(phi.size());
  for (double p : phi) out.push_back(inverse(p));
  return out;
}

}  // namespace gtpde
