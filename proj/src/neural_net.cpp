#include "gtpde/neural_net.hpp"

#include <cmath>
#include <sstream>

#include "gtpde/common.hpp"

namespace gtpde {

Layer Layer::dense(int in, int out, Activation act) {
  if (in < 1 || out < 1) throw ConfigError("dense layer needs positive sizes");
  Layer l;
  l.kind = LayerKind::kDense;
  l.in = in;
  l.out = out;
  l.activation = act;
  l.W = Eigen::MatrixXd::Zero(out, in);
  l.b = Eigen::VectorXd::Zero(out);
  return l;
}

Layer Layer::conv1d(int in, int out, int width, Activation act) {
  if (in < 1 || out < 1) throw ConfigError("conv1d layer needs positive sizes");
  if (width < 1 || width % 2 == 0) throw ConfigError("conv1d kernel width must be odd");
  Layer l;
  l.kind = LayerKind::kConv1D;
  l.in = in;
  l.out = out;
  l.width = width;
  l.activation = act;
  l.W = Eigen::MatrixXd::Zero(out, static_cast<Eigen::Index>(in) * width);
  l.b = Eigen::VectorXd::Zero(out);
  return l;
}

namespace {

Eigen::MatrixXd im2col(const Eigen::MatrixXd& x, int width, Eigen::Index block) {
  const Eigen::Index C = x.rows();
  const Eigen::Index n = x.cols();
  const Eigen::Index r = width / 2;
  Eigen::MatrixXd col(C * width, n);
  for (Eigen::Index base = 0; base < n; base += block) {
    for (Eigen::Index i = 0; i < block; ++i) {
      for (int k = 0; k < width; ++k) {
        Eigen::Index src = i + k - r;
        src = ((src % block) + block) % block;
        col.col(base + i).segment(k * C, C) = x.col(base + src);
      }
    }
  }
  return col;
}

Eigen::MatrixXd col2im(const Eigen::MatrixXd& col, Eigen::Index C, int width, Eigen::Index block) {
  const Eigen::Index n = col.cols();
  const Eigen::Index r = width / 2;
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(C, n);
  for (Eigen::Index base = 0; base < n; base += block) {
    for (Eigen::Index i = 0; i < block; ++i) {
      for (int k = 0; k < width; ++k) {
        Eigen::Index src = i + k - r;
        src = ((src % block) + block) % block;
        x.col(base + src) += col.col(base + i).segment(k * C, C);
      }
    }
  }
  return x;
}

void activate(Eigen::MatrixXd& z, Activation act) {
  if (act == Activation::kRelu) z = z.cwiseMax(0.0);
}

}  // namespace

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    if (L.W.rows() != L.out || L.W.cols() != static_cast<Eigen::Index>(L.in) * L.width || L.b.size() != L.out) {
      throw ConfigError("layer " + std::to_string(l) + ": weight shape does not match its sizes");
    }
    if (l > 0 && layers_[l - 1].out != L.in) {
      throw ConfigError("layer " + std::to_string(l) + ": expects " + std::to_string(L.in) +
                        " inputs but the previous layer has " + std::to_string(layers_[l - 1].out) + " outputs");
    }
  }
}

void Network::initialize(Rng& rng) {
  for (auto& L : layers_) {
    const double fan_in = static_cast<double>(L.in * L.width);
    const double fan_out = static_cast<double>(L.out * L.width);
    const double sd = L.activation == Activation::kRelu ? std::sqrt(2.0 / fan_in) : std::sqrt(2.0 / (fan_in + fan_out));
    for (Eigen::Index j = 0; j < L.W.cols(); ++j) {
      for (Eigen::Index i = 0; i < L.W.rows(); ++i) L.W(i, j) = sd * rng.normal();
    }
    L.b.setZero();
  }
}

void Network::check_input(const Eigen::MatrixXd& x, Eigen::Index block) const {
  if (layers_.empty()) throw ConfigError("network has no layers");
  if (x.rows() != layers_.front().in) {
    std::ostringstream msg;
    msg << "layer 0: expected " << layers_.front().in << " input channels, got " << x.rows();
    throw ConfigError(msg.str());
  }
  if (block < 1 || x.cols() % block != 0) throw ConfigError("input columns must be a multiple of the block length");
}

Eigen::MatrixXd Network::forward(const Eigen::MatrixXd& x, Eigen::Index block) const {
  check_input(x, block);
  Eigen::MatrixXd a = x;
  for (const auto& L : layers_) {
    Eigen::MatrixXd z;
    if (L.kind == LayerKind::kDense) {
      z.noalias() = L.W * a;
    } else {
      z.noalias() = L.W * im2col(a, L.width, block);
    }
    z.colwise() += L.b;
    activate(z, L.activation);
    a = std::move(z);
  }
  return a;
}

double Network::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index block) const {
  const Eigen::MatrixXd out = forward(x, block);
  if (out.rows() != y.rows() || out.cols() != y.cols()) throw ConfigError("target shape does not match network output");
  return (out - y).squaredNorm() / static_cast<double>(y.size());
}

double Network::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index block,
                                  Gradients& grad) const {
  check_input(x, block);
  const std::size_t n = layers_.size();
  std::vector<Eigen::MatrixXd> inputs(n);  // dense: activation, conv: im2col of it
  std::vector<Eigen::MatrixXd> outputs(n);
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < n; ++l) {
    const Layer& L = layers_[l];
    inputs[l] = L.kind == LayerKind::kDense ? std::move(a) : im2col(a, L.width, block);
    Eigen::MatrixXd z;
    z.noalias() = L.W * inputs[l];
    z.colwise() += L.b;
    activate(z, L.activation);
    outputs[l] = z;
    a = std::move(z);
  }
  const Eigen::MatrixXd& out = outputs.back();
  if (out.rows() != y.rows() || out.cols() != y.cols()) throw ConfigError("target shape does not match network output");
  const double count = static_cast<double>(y.size());
  Eigen::MatrixXd delta = (out - y) * (2.0 / count);
  const double value = (out - y).squaredNorm() / count;

  grad.dW.resize(n);
  grad.db.resize(n);
  for (std::size_t l = n; l-- > 0;) {
    const Layer& L = layers_[l];
    if (L.activation == Activation::kRelu) delta = delta.cwiseProduct((outputs[l].array() > 0.0).cast<double>().matrix());
    grad.dW[l].noalias() = delta * inputs[l].transpose();
    grad.db[l] = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back;
    back.noalias() = L.W.transpose() * delta;
    delta = L.kind == LayerKind::kDense ? std::move(back) : col2im(back, L.in, L.width, block);
  }
  return value;
}

Gradients Network::zero_gradients() const {
  Gradients g;
  for (const auto& L : layers_) {
    g.dW.push_back(Eigen::MatrixXd::Zero(L.W.rows(), L.W.cols()));
    g.db.push_back(Eigen::VectorXd::Zero(L.b.size()));
  }
  return g;
}

std::vector<double> Network::parameters() const {
  std::vector<double> p;
  p.reserve(parameter_count());
  for (const auto& L : layers_) {
    p.insert(p.end(), L.W.data(), L.W.data() + L.W.size());
    p.insert(p.end(), L.b.data(), L.b.data() + L.b.size());
  }
  return p;
}

void Network::set_parameters(std::span<const double> p) {
  if (p.size() != parameter_count()) throw ConfigError("parameter vector has the wrong length");
  std::size_t k = 0;
  for (auto& L : layers_) {
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(k), p.begin() + static_cast<std::ptrdiff_t>(k + L.W.size()), L.W.data());
    k += static_cast<std::size_t>(L.W.size());
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(k), p.begin() + static_cast<std::ptrdiff_t>(k + L.b.size()), L.b.data());
    k += static_cast<std::size_t>(L.b.size());
  }
}

std::vector<double> Network::flatten(const Gradients& g) {
  std::vector<double> p;
  for (std::size_t l = 0; l < g.dW.size(); ++l) {
    p.insert(p.end(), g.dW[l].data(), g.dW[l].data() + g.dW[l].size());
    p.insert(p.end(), g.db[l].data(), g.db[l].data() + g.db[l].size());
  }
  return p;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& L : layers_) n += L.parameter_count();
  return n;
}

int Network::receptive_radius() const {
  int r = 0;
  for (const auto& L : layers_) {
    if (L.kind == LayerKind::kConv1D) r += L.width / 2;
  }
  return r;
}

bool Network::all_finite() const {
  for (const auto& L : layers_) {
    if (!L.W.allFinite() || !L.b.allFinite()) return false;
  }
  return true;
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr > 0.0)) throw ConfigError("ADAM: learning rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("ADAM: betas must lie in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("ADAM: epsilon must be > 0");
}

void Adam::step(Network& net, const Gradients& g) {
  auto& layers = net.layers();
  if (m_.dW.empty()) {
    m_ = net.zero_gradients();
    v_ = net.zero_gradients();
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& w, const auto& grad, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    w.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].W, g.dW[l], m_.dW[l], v_.dW[l]);
    update(layers[l].b, g.db[l], m_.db[l], v_.db[l]);
  }
}

}  // namespace gtpde
