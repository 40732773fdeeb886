#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gtpde/rng.hpp"

namespace gtpde {

enum class LayerKind { kDense, kConv1D };
enum class Activation { kRelu, kLinear };

/// Activations are stored as (channels x columns). Dense layers act on each
/// column; Conv1D layers treat every `block` consecutive columns as one
/// periodic signal.
struct Layer {
  LayerKind kind = LayerKind::kDense;
  int in = 0;
  int out = 0;
  int width = 1;  ///< conv kernel width (odd); 1 for dense
  Activation activation = Activation::kLinear;
  Eigen::MatrixXd W;  ///< out x (width * in); conv column k * in + c
  Eigen::VectorXd b;  ///< out

  static Layer dense(int in, int out, Activation act);
  static Layer conv1d(int in, int out, int width, Activation act);
  std::size_t parameter_count() const { return static_cast<std::size_t>(W.size() + b.size()); }
};

struct Gradients {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  /// He-normal weights for ReLU layers, Glorot-normal otherwise; zero bias.
  void initialize(Rng& rng);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::Index block = 1) const;

  /// Mean squared error over all entries of the output and its gradient.
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index block,
                           Gradients& grad) const;
  double loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Eigen::Index block = 1) const;

  Gradients zero_gradients() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> p);
  static std::vector<double> flatten(const Gradients& g);
  std::size_t parameter_count() const;

  /// Half-width of the stencil seen by one output of a conv stack.
  int receptive_radius() const;
  bool all_finite() const;

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  int input_channels() const { return layers_.empty() ? 0 : layers_.front().in; }

 private:
  void check_input(const Eigen::MatrixXd& x, Eigen::Index block) const;
  std::vector<Layer> layers_;
};

/// ADAM with bias correction.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps);
  void step(Network& net, const Gradients& g);
  long long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long long t_ = 0;
  Gradients m_, v_;
};

}  // namespace gtpde
