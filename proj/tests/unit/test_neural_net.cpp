#include <doctest.h>

#include <cmath>

#include "../support/gradcheck.hpp"
#include "gtpde/common.hpp"
#include "gtpde/neural_net.hpp"

using namespace gtpde;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_SUITE("neural_net") {
  TEST_CASE("dense forward matches a hand computation") {
    Layer l = Layer::dense(2, 1, Activation::kRelu);
    l.W << 1.0, -2.0;
    l.b << 0.5;
    Network net({l});
    Eigen::MatrixXd x(2, 2);
    x << 1.0, 3.0, 1.0, 0.0;
    const auto y = net.forward(x);
    CHECK(y(0, 0) == 0.0);  // relu(1 - 2 + 0.5)
    CHECK(y(0, 1) == 3.5);
  }

  TEST_CASE("conv1d is a periodic correlation within each block") {
    Layer l = Layer::conv1d(1, 1, 3, Activation::kLinear);
    l.W << 1.0, 10.0, 100.0;  // taps at offsets -1, 0, +1
    l.b << 0.0;
    Network net({l});
    Eigen::MatrixXd x(1, 8);
    x << 1, 2, 3, 4, 5, 6, 7, 8;
    const auto y = net.forward(x, 4);
    CHECK(y(0, 0) == doctest::Approx(4 + 10 * 1 + 100 * 2));
    CHECK(y(0, 3) == doctest::Approx(3 + 10 * 4 + 100 * 1));
    CHECK(y(0, 4) == doctest::Approx(8 + 10 * 5 + 100 * 6));
  }

  TEST_CASE("backprop matches finite differences for dense nets") {
    Rng rng(1);
    for (int t = 0; t < 5; ++t) {
      Network net({Layer::dense(3, 6, Activation::kRelu), Layer::dense(6, 5, Activation::kRelu),
                   Layer::dense(5, 1, Activation::kLinear)});
      net.initialize(rng);
      const auto x = random_matrix(3, 7, rng);
      const auto y = random_matrix(1, 7, rng);
      if (oracle::min_relu_margin(net, x, 1) < 1e-4) continue;
      CHECK(oracle::gradient_relative_error(net, x, y, 1) < 1e-6);
    }
  }

  TEST_CASE("backprop matches finite differences for conv nets") {
    Rng rng(2);
    for (int t = 0; t < 5; ++t) {
      Network net({Layer::conv1d(1, 4, 5, Activation::kRelu), Layer::conv1d(4, 3, 3, Activation::kRelu),
                   Layer::conv1d(3, 1, 1, Activation::kLinear)});
      net.initialize(rng);
      const auto x = random_matrix(1, 24, rng);
      const auto y = random_matrix(1, 24, rng);
      if (oracle::min_relu_margin(net, x, 12) < 1e-4) continue;
      CHECK(oracle::gradient_relative_error(net, x, y, 12) < 1e-6);
    }
  }

  TEST_CASE("outputs outside the receptive field ignore a perturbation") {
    Rng rng(3);
    Network net({Layer::conv1d(1, 4, 5, Activation::kRelu), Layer::conv1d(4, 4, 5, Activation::kRelu),
                 Layer::conv1d(4, 1, 5, Activation::kLinear)});
    net.initialize(rng);
    CHECK(net.receptive_radius() == 6);
    const Eigen::Index n = 40;
    const auto x = random_matrix(1, n, rng);
    Eigen::MatrixXd x2 = x;
    x2(0, 20) += 1.0;
    const auto a = net.forward(x, n);
    const auto b = net.forward(x2, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index dist = std::min<Eigen::Index>(std::abs(i - 20), n - std::abs(i - 20));
      if (dist > 6) CHECK(a(0, i) == b(0, i));
    }
  }

  TEST_CASE("parameters round-trip and shapes are validated") {
    Rng rng(4);
    Network net({Layer::dense(2, 3, Activation::kRelu), Layer::dense(3, 1, Activation::kLinear)});
    net.initialize(rng);
    CHECK(net.parameter_count() == 2 * 3 + 3 + 3 + 1);
    auto p = net.parameters();
    p[0] = 42.0;
    net.set_parameters(p);
    CHECK(net.parameters() == p);
    CHECK_THROWS_AS(Network({Layer::dense(2, 3, Activation::kRelu), Layer::dense(4, 1, Activation::kLinear)}),
                    ConfigError);
    CHECK_THROWS_AS(net.forward(Eigen::MatrixXd::Zero(3, 2)), ConfigError);
    CHECK_THROWS_AS(Layer::conv1d(1, 1, 4, Activation::kLinear), ConfigError);
  }

  TEST_CASE("ADAM fits a linear map") {
    Rng rng(5);
    Network net({Layer::dense(2, 1, Activation::kLinear)});
    net.initialize(rng);
    Eigen::MatrixXd x = random_matrix(2, 64, rng);
    Eigen::MatrixXd y = (Eigen::RowVector2d(2.0, -1.0) * x).array() + 0.5;
    Adam opt(0.05, 0.9, 0.999, 1e-8);
    Gradients g = net.zero_gradients();
    for (int it = 0; it < 2000; ++it) {
      net.loss_and_gradient(x, y, 1, g);
      opt.step(net, g);
    }
    CHECK(net.loss(x, y) < 1e-10);
    CHECK(net.layers()[0].W(0, 0) == doctest::Approx(2.0).epsilon(1e-4));
    CHECK(opt.steps() == 2000);
    CHECK_THROWS_AS(Adam(0.0, 0.9, 0.999, 1e-8), ConfigError);
    CHECK_THROWS_AS(Adam(1e-3, 1.0, 0.999, 1e-8), ConfigError);
  }

  TEST_CASE("initialization is seeded") {
    Network a({Layer::dense(3, 4, Activation::kRelu)}), b({Layer::dense(3, 4, Activation::kRelu)});
    Rng ra(9), rb(9);
    a.initialize(ra);
    b.initialize(rb);
    CHECK(a.parameters() == b.parameters());
    CHECK(a.all_finite());
  }

  TEST_CASE("identity layers pass the input through") {
    Layer d = Layer::dense(3, 3, Activation::kLinear);
    d.W.setIdentity();
    d.b.setZero();
    Rng rng(1);
    const auto x = random_matrix(3, 4, rng);
    CHECK(Network({d}).forward(x) == x);
    Layer c = Layer::conv1d(1, 1, 3, Activation::kLinear);
    c.W << 0.0, 1.0, 0.0;
    c.b.setZero();
    const auto s = random_matrix(1, 10, rng);
    CHECK(Network({c, c}).forward(s, 10) == s);
  }

  TEST_CASE("shape mismatch names the layer") {
    try {
      Network({Layer::dense(2, 3, Activation::kRelu), Layer::dense(3, 2, Activation::kRelu), Layer::dense(5, 1, Activation::kLinear)});
      FAIL("expected rejection");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
    }
  }

  TEST_CASE("one ADAM step with a constant gradient") {
    Layer l = Layer::dense(1, 1, Activation::kLinear);
    l.W << 0.0;
    l.b << 0.0;
    Network net({l});
    Gradients g = net.zero_gradients();
    g.dW[0](0, 0) = 2.0;
    Adam opt(1e-3, 0.9, 0.999, 1e-8);
    opt.step(net, g);
    // m_hat = 2, v_hat = 4: dw = -1e-3 * 2 / (2 + 1e-8)
    CHECK(net.layers()[0].W(0, 0) == doctest::Approx(-1e-3 * 2.0 / (2.0 + 1e-8)).epsilon(1e-12));
    CHECK(net.layers()[0].W(0, 0) == doctest::Approx(-9.99999e-4).epsilon(1e-5));
  }
}
