#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "gtpde/common.hpp"
#include "gtpde/distances.hpp"

using namespace gtpde;

namespace {

Measure1D atoms(std::vector<double> x, std::vector<double> w) {
  Measure1D m;
  m.atom_x = std::move(x);
  m.atom_w = std::move(w);
  return m;
}

ToothDistribution random_tooth(std::mt19937_64& g, int n, double mass) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ToothDistribution d;
  for (int i = 0; i < n; ++i) d.local_positions.push_back(u(g));
  std::sort(d.local_positions.begin(), d.local_positions.end());
  d.mass = mass;
  return d;
}

}  // namespace

TEST_SUITE("distribution_distances") {
  TEST_CASE("uw1 analytic cases") {
    CHECK(uw1_distance(atoms({0.2}, {1.0}), atoms({0.7}, {1.0})) == doctest::Approx(0.5).epsilon(1e-14));
    for (double beta : {0.5, 1.0, 3.0}) {
      CHECK(uw1_distance(Measure1D::uniform(1.0), Measure1D::uniform(0.6), beta) ==
            doctest::Approx(0.4 * beta).epsilon(1e-14));
    }
    CHECK(uw1_distance(Measure1D::uniform(1.0, 0.0, 0.5), Measure1D::uniform(1.0)) ==
          doctest::Approx(0.25).epsilon(1e-14));
  }

  TEST_CASE("uw1 equals the CDF L1 distance for equal masses") {
    std::mt19937_64 g(8);
    for (int t = 0; t < 10; ++t) {
      const auto a = random_tooth(g, 30, 0.7);
      const auto b = random_tooth(g, 45, 0.7);
      const auto ma = Measure1D::from_particles(a);
      const auto mb = Measure1D::from_particles(b);
      // classical W1 = int |F1 - F2| dx evaluated with the quadrature oracle at beta = 0
      const double ref = oracle::uw1_quadrature(ma.atom_x, ma.atom_w, mb.atom_x, mb.atom_w, 0.0, 400000);
      for (double beta : {0.0, 2.0}) CHECK(uw1_distance(a, b, beta) == doctest::Approx(ref).epsilon(1e-5));
    }
  }

  TEST_CASE("uw1 is symmetric, zero on the diagonal and homogeneous") {
    std::mt19937_64 g(9);
    for (int t = 0; t < 20; ++t) {
      auto a = random_tooth(g, 20, 0.3 + 0.05 * t);
      auto b = random_tooth(g, 25, 0.9);
      CHECK(uw1_distance(a, b) == uw1_distance(b, a));
      CHECK(uw1_distance(a, a) == 0.0);
      CHECK(uw1_distance(a, b) >= 0.0);
      const double d = uw1_distance(a, b);
      a.mass *= 3.0;
      b.mass *= 3.0;
      CHECK(uw1_distance(a, b) == doctest::Approx(3.0 * d).epsilon(1e-12));
    }
  }

  TEST_CASE("uw1 of histograms mixes atoms and bins exactly") {
    const auto h = Measure1D::histogram({0.0, 0.25, 1.0}, {2.0, 0.0});
    // all mass 0.5 uniform on [0, 0.25] against an atom of 0.5 at 0.125
    const auto a = atoms({0.125}, {0.5});
    CHECK(uw1_distance(h, a) == doctest::Approx(0.5 * 0.0625).epsilon(1e-13));
    CHECK_THROWS_AS(Measure1D::histogram({0.0, 1.5}, {1.0}), ConfigError);
    CHECK_THROWS_AS(Measure1D::histogram({0.0, 0.5}, {-1.0}), ConfigError);
  }

  TEST_CASE("moments of a uniform measure and the moments distance") {
    const auto m = truncated_moments(Measure1D::uniform(2.0), 5);
    for (int k = 0; k <= 5; ++k) CHECK(m[static_cast<std::size_t>(k)] == doctest::Approx(2.0 / (k + 1)).epsilon(1e-14));
    CHECK(moments_distance(Measure1D::uniform(1.0), Measure1D::uniform(2.0), 3) ==
          doctest::Approx(std::sqrt(1.0 + 0.25 + 1.0 / 9.0 + 1.0 / 16.0)).epsilon(1e-14));
  }

  TEST_CASE("particle moments are mass weighted and order invariant") {
    std::mt19937_64 g(10);
    auto a = random_tooth(g, 40, 0.8);
    const auto b = random_tooth(g, 40, 0.5);
    const auto ma = truncated_moments(a, 5);
    CHECK(ma[0] == doctest::Approx(0.8).epsilon(1e-14));
    const double d = moments_distance(a, b);
    std::reverse(a.local_positions.begin(), a.local_positions.end());
    CHECK(moments_distance(a, b) == doctest::Approx(d).epsilon(1e-14));
    CHECK(moments_distance(a, b) == moments_distance(b, a));
  }

  TEST_CASE("generalized KL basics") {
    const std::vector<double> p{0.2, 0.0, 0.5}, q{0.1, 0.3, 0.5};
    CHECK(generalized_kl(p, q) == doctest::Approx(oracle::kl(p, q)).epsilon(1e-14));
    CHECK(generalized_kl(q, q) == 0.0);
  }

  TEST_CASE("unbalanced OT matches coordinate-descent minimization on small instances") {
    std::mt19937_64 g(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto C = bin_cost(5, 2.0);
    for (int t = 0; t < 5; ++t) {
      std::vector<double> a(5), b(5);
      for (auto& x : a) x = u(g);
      for (auto& x : b) x = u(g);
      const auto G = oracle::unbalanced_plan_coordinate_descent(a, b, C, 1.0, 5000);
      const double ref = oracle::unbalanced_value(G, a, b, C, 1.0);
      const auto r = unbalanced_ot(a, b, C, 1.0, 1e-2);
      CHECK(r.converged);
      CHECK(std::abs(r.value - ref) < 1e-2);
      CHECK(unbalanced_objective(G, a, b, C, 1.0) == doctest::Approx(ref).epsilon(1e-12));
    }
  }

  TEST_CASE("unbalanced OT is nonincreasing toward the oracle as epsilon shrinks") {
    const std::vector<double> a{0.3, 0.1, 0.4, 0.2, 0.5}, b{0.2, 0.6, 0.1, 0.3, 0.2};
    const auto C = bin_cost(5, 2.0);
    double prev = INFINITY;
    for (double eps : {1e-1, 1e-2, 1e-3}) {
      const auto r = unbalanced_ot(a, b, C, 1.0, eps, 1e-10, 50000);
      CHECK(r.value <= prev + 1e-12);
      prev = r.value;
    }
    const auto self_hi = unbalanced_ot(a, a, C, 1.0, 1e-1).value;
    const auto self_lo = unbalanced_ot(a, a, C, 1.0, 1e-3, 1e-10, 50000).value;
    CHECK(self_lo < self_hi);
    CHECK(self_lo < 1e-2);
  }

  TEST_CASE("pairwise matrices are valid for every metric") {
    std::mt19937_64 g(12);
    std::vector<ToothDistribution> teeth;
    for (int i = 0; i < 6; ++i) teeth.push_back(random_tooth(g, 50, 0.5 + 0.1 * i));
    for (Metric m : {Metric::kUw1, Metric::kMoments, Metric::kUnbalancedOt}) {
      const auto D = pairwise_distances(teeth, m);
      CHECK(D.valid());
      CHECK(D.values.rows() == 6);
      CHECK(D.values(0, 5) > 0.0);
    }
    CHECK(parse_metric("uot") == Metric::kUnbalancedOt);
    CHECK(metric_name(Metric::kMoments) == "moments");
    CHECK_THROWS_AS(parse_metric("l2"), ConfigError);
  }

  TEST_CASE("tooth distributions are rescaled to the unit interval") {
    ParticleEnsemble e;
    e.bounds = {Interval{1.0, 1.5}, Interval{2.0, 2.5}};
    e.groups = {{1.0, 1.25, 1.5}, {}};
    const auto t = tooth_distributions(e, 10.0);
    CHECK(t[0].local_positions == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(t[0].mass == doctest::Approx(0.3));
    CHECK(t[1].mass == 0.0);
  }

  TEST_CASE("worked examples") {
    CHECK_THROWS_AS(uw1_distance(Measure1D::uniform(1.0), Measure1D::uniform(1.0), -1.0), ConfigError);
    const auto u = Measure1D::uniform(0.8);
    CHECK(uw1_distance(u, u) == 0.0);
    CHECK(moments_distance(u, u) == 0.0);
    const auto m = truncated_moments(atoms({0.5}, {1.0}), 2);
    CHECK(m == std::vector<double>{1.0, 0.5, 0.25});
    CHECK(moments_distance(Measure1D::uniform(1.0), Measure1D::uniform(2.0), 3) == doctest::Approx(1.193152).epsilon(1e-6));
  }

  TEST_CASE("unbalanced OT of identical measures is within the entropic bias") {
    UnbalancedOtParams p;
    const auto a = Measure1D::histogram({0.0, 0.3, 1.0}, {1.0, 0.5});
    const auto r = unbalanced_ot_distance(a, a, p);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= p.eps_entropy * p.grid_n * std::log(static_cast<double>(p.grid_n)));
    // equal point masses in one bin: the unregularized objective of the diagonal plan is 0
    const std::vector<double> a_bins{0.0, 0.7, 0.0};
    Eigen::MatrixXd plan = Eigen::MatrixXd::Zero(3, 3);
    plan(1, 1) = 0.7;
    CHECK(unbalanced_objective(plan, a_bins, a_bins, bin_cost(3, 2.0), p.lambda_kl) == 0.0);
  }

  TEST_CASE("duplicate entries have zero distance") {
    std::mt19937_64 g(13);
    const auto t = random_tooth(g, 30, 0.6);
    const std::vector<ToothDistribution> list{t, t, random_tooth(g, 30, 0.9)};
    for (Metric m : {Metric::kUw1, Metric::kMoments, Metric::kUnbalancedOt}) {
      CHECK(pairwise_distances(list, m).values(0, 1) == 0.0);
    }
  }
}
