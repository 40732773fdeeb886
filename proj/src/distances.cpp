#include "gtpde/distances.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "gtpde/common.hpp"
#include "gtpde/parallel.hpp"

namespace gtpde {

std::vector<ToothDistribution> tooth_distributions(const ParticleEnsemble& ensemble, double Z) {
  std::vector<ToothDistribution> out(ensemble.groups.size());
  for (std::size_t i = 0; i < ensemble.groups.size(); ++i) {
    const Interval b = ensemble.bounds.at(i);
    const double w = b.width();
    auto& d = out[i];
    d.local_positions.reserve(ensemble.groups[i].size());
    for (double x : ensemble.groups[i]) d.local_positions.push_back(std::clamp((x - b.lo) / w, 0.0, 1.0));
    d.mass = static_cast<double>(ensemble.groups[i].size()) / Z;
  }
  return out;
}

double Measure1D::mass() const {
  double m = std::accumulate(atom_w.begin(), atom_w.end(), 0.0);
  for (std::size_t k = 0; k < densities.size(); ++k) m += densities[k] * (bin_edges[k + 1] - bin_edges[k]);
  return m;
}

Measure1D Measure1D::from_particles(const ToothDistribution& d) {
  Measure1D mu;
  mu.atom_x = d.local_positions;
  const double w = d.local_positions.empty() ? 0.0 : d.mass / static_cast<double>(d.local_positions.size());
  mu.atom_w.assign(d.local_positions.size(), w);
  return mu;
}

Measure1D Measure1D::uniform(double mass, double lo, double hi) {
  if (!(hi > lo)) throw ConfigError("Measure1D::uniform: empty support");
  return histogram({lo, hi}, {mass / (hi - lo)});
}

Measure1D Measure1D::histogram(std::vector<double> edges, std::vector<double> densities) {
  if (edges.size() != densities.size() + 1) throw ConfigError("histogram: need one more edge than bins");
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    if (!(edges[k + 1] > edges[k])) throw ConfigError("histogram: edges must increase");
  }
  for (double d : densities) {
    if (!(d >= 0.0)) throw ConfigError("histogram: densities must be nonnegative");
  }
  if (!edges.empty() && (edges.front() < 0.0 || edges.back() > 1.0)) {
    throw ConfigError("histogram: support must lie in [0, 1]");
  }
  Measure1D mu;
  mu.bin_edges = std::move(edges);
  mu.densities = std::move(densities);
  return mu;
}

namespace {

// Integral of |g0 + k u| over u in [0, len].
double abs_linear_integral(double g0, double slope, double len) {
  const double g1 = g0 + slope * len;
  if ((g0 >= 0.0 && g1 >= 0.0) || (g0 <= 0.0 && g1 <= 0.0)) return 0.5 * len * std::abs(g0 + g1);
  const double root = -g0 / slope;
  return 0.5 * (std::abs(g0) * root + std::abs(g1) * (len - root));
}

// Cursor over a measure's piecewise-constant part.
struct DensityCursor {
  const Measure1D* mu;
  std::size_t bin = 0;
  double at(double mid) {
    const auto& e = mu->bin_edges;
    while (bin < mu->densities.size() && e[bin + 1] <= mid) ++bin;
    if (bin < mu->densities.size() && e[bin] <= mid && mid < e[bin + 1]) return mu->densities[bin];
    return 0.0;
  }
};

}  // namespace

double uw1_distance(const Measure1D& a, const Measure1D& b, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("uw1_distance: beta must be >= 0");
  // Atoms sorted by position, tagged with the signed weight of F1 - F2.
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(a.atom_x.size() + b.atom_x.size());
  for (std::size_t i = 0; i < a.atom_x.size(); ++i) atoms.emplace_back(std::clamp(a.atom_x[i], 0.0, 1.0), a.atom_w[i]);
  for (std::size_t i = 0; i < b.atom_x.size(); ++i) atoms.emplace_back(std::clamp(b.atom_x[i], 0.0, 1.0), -b.atom_w[i]);
  std::sort(atoms.begin(), atoms.end());

  std::vector<double> events = {0.0, 1.0};
  events.reserve(atoms.size() + a.bin_edges.size() + b.bin_edges.size() + 2);
  for (const auto& at : atoms) events.push_back(at.first);
  for (double e : a.bin_edges) events.push_back(e);
  for (double e : b.bin_edges) events.push_back(e);
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());

  const double delta = a.mass() - b.mass();
  DensityCursor ca{&a};
  DensityCursor cb{&b};
  double diff = 0.0;  // F1 - F2 just right of the current event
  std::size_t next_atom = 0;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < events.size(); ++k) {
    const double s = events[k];
    const double t = events[k + 1];
    while (next_atom < atoms.size() && atoms[next_atom].first <= s) diff += atoms[next_atom++].second;
    const double mid = 0.5 * (s + t);
    const double slope = ca.at(mid) - cb.at(mid) - delta;
    const double g0 = diff - s * delta;
    total += abs_linear_integral(g0, slope, t - s);
    diff += (ca.at(mid) - cb.at(mid)) * (t - s);
  }
  return total + beta * std::abs(delta);
}

double uw1_distance(const ToothDistribution& a, const ToothDistribution& b, double beta) {
  return uw1_distance(Measure1D::from_particles(a), Measure1D::from_particles(b), beta);
}

std::vector<double> truncated_moments(const Measure1D& mu, int K) {
  if (K < 0) throw ConfigError("moments: K must be >= 0");
  std::vector<double> m(static_cast<std::size_t>(K) + 1, 0.0);
  for (std::size_t i = 0; i < mu.atom_x.size(); ++i) {
    double p = 1.0;
    for (int k = 0; k <= K; ++k) {
      m[static_cast<std::size_t>(k)] += mu.atom_w[i] * p;
      p *= mu.atom_x[i];
    }
  }
  for (std::size_t j = 0; j < mu.densities.size(); ++j) {
    const double lo = mu.bin_edges[j];
    const double hi = mu.bin_edges[j + 1];
    double plo = lo, phi = hi;
    for (int k = 0; k <= K; ++k) {
      m[static_cast<std::size_t>(k)] += mu.densities[j] * (phi - plo) / static_cast<double>(k + 1);
      plo *= lo;
      phi *= hi;
    }
  }
  return m;
}

std::vector<double> truncated_moments(const ToothDistribution& d, int K) {
  return truncated_moments(Measure1D::from_particles(d), K);
}

double moments_distance(const Measure1D& a, const Measure1D& b, int K) {
  const auto ma = truncated_moments(a, K);
  const auto mb = truncated_moments(b, K);
  double s = 0.0;
  for (std::size_t k = 0; k < ma.size(); ++k) s += (ma[k] - mb[k]) * (ma[k] - mb[k]);
  return std::sqrt(s);
}

double moments_distance(const ToothDistribution& a, const ToothDistribution& b, int K) {
  return moments_distance(Measure1D::from_particles(a), Measure1D::from_particles(b), K);
}

double generalized_kl(std::span<const double> p, std::span<const double> q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (!(q[i] > 0.0)) return std::numeric_limits<double>::infinity();
      s += p[i] * std::log(p[i] / q[i]) - p[i] + q[i];
    } else {
      s += q[i];
    }
  }
  return s;
}

double unbalanced_objective(const Eigen::MatrixXd& plan, std::span<const double> a,
                            std::span<const double> b, const Eigen::MatrixXd& cost, double lambda) {
  const Eigen::VectorXd r = plan.rowwise().sum();
  const Eigen::VectorXd c = plan.colwise().sum().transpose();
  const double transport = (plan.array() * cost.array()).sum();
  return transport + lambda * (generalized_kl(std::span<const double>(r.data(), r.size()), a) +
                               generalized_kl(std::span<const double>(c.data(), c.size()), b));
}

Eigen::MatrixXd bin_cost(std::size_t n, double exponent) {
  Eigen::MatrixXd c(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::abs(static_cast<double>(i) - static_cast<double>(j)) / static_cast<double>(n);
      c(i, j) = std::pow(d, exponent);
    }
  }
  return c;
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

UnbalancedOtResult unbalanced_ot(std::span<const double> a, std::span<const double> b,
                                 const Eigen::MatrixXd& cost, double lambda, double eps,
                                 double tolerance, int max_iterations) {
  if (!(lambda > 0.0)) throw ConfigError("unbalanced OT: lambda_KL must be > 0");
  if (!(eps > 0.0)) throw ConfigError("unbalanced OT: eps_entropy must be > 0");
  const auto n = static_cast<Eigen::Index>(a.size());
  const auto m = static_cast<Eigen::Index>(b.size());
  if (cost.rows() != n || cost.cols() != m) throw ConfigError("unbalanced OT: cost shape mismatch");
  const double kappa = lambda / (lambda + eps);
  const double neg_inf = -std::numeric_limits<double>::infinity();

  Eigen::VectorXd log_a(n), log_b(m);
  for (Eigen::Index i = 0; i < n; ++i) log_a(i) = a[static_cast<std::size_t>(i)] > 0.0 ? std::log(a[static_cast<std::size_t>(i)]) : neg_inf;
  for (Eigen::Index j = 0; j < m; ++j) log_b(j) = b[static_cast<std::size_t>(j)] > 0.0 ? std::log(b[static_cast<std::size_t>(j)]) : neg_inf;

  UnbalancedOtResult result;
  Eigen::MatrixXd plan;
  const bool log_domain = cost.maxCoeff() / eps > 600.0;

  if (!log_domain) {
    const Eigen::MatrixXd kernel = (-cost / eps).array().exp().matrix();
    Eigen::VectorXd u = Eigen::VectorXd::Ones(n), v = Eigen::VectorXd::Ones(m);
    Eigen::VectorXd r_prev = Eigen::VectorXd::Zero(n), c_prev = Eigen::VectorXd::Zero(m);
    for (int it = 1; it <= max_iterations; ++it) {
      const Eigen::VectorXd kv = kernel * v;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ai = a[static_cast<std::size_t>(i)];
        u(i) = ai > 0.0 ? std::pow(ai / kv(i), kappa) : 0.0;
      }
      const Eigen::VectorXd ktu = kernel.transpose() * u;
      for (Eigen::Index j = 0; j < m; ++j) {
        const double bj = b[static_cast<std::size_t>(j)];
        v(j) = bj > 0.0 ? std::pow(bj / ktu(j), kappa) : 0.0;
      }
      const Eigen::VectorXd r = u.cwiseProduct(kernel * v);
      const Eigen::VectorXd c = v.cwiseProduct(ktu);
      const double change = (r - r_prev).lpNorm<1>() + (c - c_prev).lpNorm<1>();
      r_prev = r;
      c_prev = c;
      result.iterations = it;
      if (!std::isfinite(change)) break;
      if (change < tolerance) {
        result.converged = true;
        break;
      }
    }
    plan = u.asDiagonal() * kernel * v.asDiagonal();
  } else {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n), g = Eigen::VectorXd::Zero(m);
    const Eigen::MatrixXd scaled = -cost / eps;
    Eigen::VectorXd r_prev = Eigen::VectorXd::Zero(n), c_prev = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd row(m), col(n);
    for (int it = 1; it <= max_iterations; ++it) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (log_a(i) == neg_inf) { f(i) = neg_inf; continue; }
        row = scaled.row(i).transpose() + g;
        f(i) = kappa * (log_a(i) - log_sum_exp(row));
      }
      for (Eigen::Index j = 0; j < m; ++j) {
        if (log_b(j) == neg_inf) { g(j) = neg_inf; continue; }
        col = scaled.col(j) + f;
        g(j) = kappa * (log_b(j) - log_sum_exp(col));
      }
      Eigen::MatrixXd lp = scaled;
      lp.colwise() += f;
      lp.rowwise() += g.transpose();
      const Eigen::MatrixXd p = lp.array().exp().matrix();
      const Eigen::VectorXd r = p.rowwise().sum();
      const Eigen::VectorXd c = p.colwise().sum().transpose();
      const double change = (r - r_prev).lpNorm<1>() + (c - c_prev).lpNorm<1>();
      r_prev = r;
      c_prev = c;
      result.iterations = it;
      plan = p;
      if (!std::isfinite(change)) break;
      if (change < tolerance) {
        result.converged = true;
        break;
      }
    }
  }
  plan = plan.unaryExpr([](double x) { return std::isfinite(x) ? x : 0.0; });
  result.value = unbalanced_objective(plan, a, b, cost, lambda);
  return result;
}

std::vector<double> bin_masses(const Measure1D& mu, std::size_t n) {
  if (n == 0) throw ConfigError("bin_masses: need at least one bin");
  std::vector<double> out(n, 0.0);
  const double width = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < mu.atom_x.size(); ++i) {
    const double x = std::clamp(mu.atom_x[i], 0.0, 1.0);
    const auto k = std::min(static_cast<std::size_t>(x * static_cast<double>(n)), n - 1);
    out[k] += mu.atom_w[i];
  }
  for (std::size_t j = 0; j < mu.densities.size(); ++j) {
    const double lo = mu.bin_edges[j];
    const double hi = mu.bin_edges[j + 1];
    for (std::size_t k = 0; k < n; ++k) {
      const double overlap = std::min(hi, width * static_cast<double>(k + 1)) - std::max(lo, width * static_cast<double>(k));
      if (overlap > 0.0) out[k] += mu.densities[j] * overlap;
    }
  }
  return out;
}

UnbalancedOtResult unbalanced_ot_distance(const Measure1D& a, const Measure1D& b,
                                          const UnbalancedOtParams& params) {
  const auto pa = bin_masses(a, params.grid_n);
  const auto pb = bin_masses(b, params.grid_n);
  return unbalanced_ot(pa, pb, bin_cost(params.grid_n, params.cost_exponent), params.lambda_kl,
                       params.eps_entropy, params.tolerance, params.max_iterations);
}

UnbalancedOtResult unbalanced_ot_distance(const ToothDistribution& a, const ToothDistribution& b,
                                          const UnbalancedOtParams& params) {
  return unbalanced_ot_distance(Measure1D::from_particles(a), Measure1D::from_particles(b), params);
}

Metric parse_metric(const std::string& name) {
  if (name == "uw1") return Metric::kUw1;
  if (name == "moments") return Metric::kMoments;
  if (name == "uot") return Metric::kUnbalancedOt;
  throw ConfigError("unknown metric '" + name + "' (expected uw1, moments or uot)");
}

std::string metric_name(Metric metric) {
  switch (metric) {
    case Metric::kUw1: return "uw1";
    case Metric::kMoments: return "moments";
    case Metric::kUnbalancedOt: return "uot";
  }
  return "uw1";
}

bool DistanceMatrix::valid(double tol) const {
  const auto n = values.rows();
  if (values.cols() != n) return false;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(values(i, i)) > tol) return false;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = values(i, j);
      if (!std::isfinite(v) || v < -tol || std::abs(v - values(j, i)) > tol) return false;
    }
  }
  return true;
}

DistanceMatrix pairwise_distances(std::span<const ToothDistribution> snapshot, Metric metric,
                                  const DistanceParams& params) {
  if (snapshot.size() < 2) throw ConfigError("pairwise_distances: need at least two distributions");
  const std::size_t n = snapshot.size();
  DistanceMatrix out;
  out.metric = metric;
  out.params = params;
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));

  std::vector<Measure1D> measures;
  measures.reserve(n);
  for (const auto& d : snapshot) measures.push_back(Measure1D::from_particles(d));
  std::vector<std::vector<double>> moments;
  std::vector<std::vector<double>> binned;
  Eigen::MatrixXd cost;
  if (metric == Metric::kMoments) {
    for (const auto& mu : measures) moments.push_back(truncated_moments(mu, params.K));
  } else if (metric == Metric::kUnbalancedOt) {
    for (const auto& mu : measures) binned.push_back(bin_masses(mu, params.uot.grid_n));
    cost = bin_cost(params.uot.grid_n, params.uot.cost_exponent);
  }

  std::vector<int> unconverged(n, 0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double d = 0.0;
      switch (metric) {
        case Metric::kUw1:
          d = uw1_distance(measures[i], measures[j], params.beta);
          break;
        case Metric::kMoments: {
          double s = 0.0;
          for (std::size_t k = 0; k < moments[i].size(); ++k) {
            s += (moments[i][k] - moments[j][k]) * (moments[i][k] - moments[j][k]);
          }
          d = std::sqrt(s);
          break;
        }
        case Metric::kUnbalancedOt: {
          // Identical inputs get the same zero as the diagonal rather than the
          // entropic self-value, so duplicates are indistinguishable.
          if (binned[i] == binned[j]) break;
          const auto r = unbalanced_ot(binned[i], binned[j], cost, params.uot.lambda_kl,
                                       params.uot.eps_entropy, params.uot.tolerance,
                                       params.uot.max_iterations);
          if (!r.converged) ++unconverged[i];
          d = std::max(0.0, r.value);
          break;
        }
      }
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
    }
  });
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      out.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
          out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    out.unconverged += unconverged[i];
  }
  return out;
}

}  // namespace gtpde
