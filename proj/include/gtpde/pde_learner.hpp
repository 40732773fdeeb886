#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gtpde/gap_tooth.hpp"
#include "gtpde/micro_particles.hpp"
#include "gtpde/neural_net.hpp"

namespace gtpde {

/// F: MLP on [v, v_x, v_xx, ...] per grid point. G: periodic conv net on raw values.
enum class Arch { kF, kG };
Arch parse_arch(const std::string& name);
std::string arch_name(Arch arch);

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split s);

struct DatasetOptions {
  int n_derivs = 2;          ///< F: highest spatial derivative
  int stencil_radius = 6;    ///< G: half-width of the input window
  double smooth_sigma = 0.0; ///< Gaussian smoothing in cells before differencing; 0 = off
  int stride = 1;            ///< keep every stride-th differenced snapshot
  int difference_step = 1;   ///< central difference across snapshots j - k and j + k
};

/// [v, v_x, ..., d^n v/dx^n] at every grid point by second-order central
/// differences; returns (n_derivs + 1) x n.
Eigen::MatrixXd derivative_features(std::span<const double> v, double dx, int n_derivs);

/// Periodic windows v[i - r .. i + r]; returns (2r + 1) x n.
Eigen::MatrixXd stencil_windows(std::span<const double> v, int radius);

struct Trajectory {
  std::vector<DensityField> snapshots;
  Split split = Split::kTrain;
};

/// Columns are samples. F: inputs (n_derivs+1) x points, targets 1 x points.
/// G: one column per snapshot, inputs and targets n_grid x snapshots.
struct Dataset {
  Arch arch = Arch::kF;
  DatasetOptions options;
  std::size_t grid_size = 0;
  double dx = 0.0;
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<Split> split;
  std::vector<int> trajectory;
  std::vector<double> time;

  std::size_t samples() const { return static_cast<std::size_t>(inputs.cols()); }
  /// Grid points represented (F: columns, G: columns * grid).
  std::size_t points() const;
  Dataset subset(Split s) const;
  std::size_t count(Split s) const;
};

/// Differences one trajectory: d/dt by central differences (endpoints dropped).
Dataset build_dataset(std::span<const DensityField> snapshots, Arch arch, const DatasetOptions& options = {},
                      Split split = Split::kTrain, int trajectory = 0);
Dataset build_dataset(std::span<const Trajectory> trajectories, Arch arch, const DatasetOptions& options = {});

struct Normalization {
  Eigen::VectorXd in_mean;
  Eigen::VectorXd in_scale;
  double out_mean = 0.0;
  double out_scale = 1.0;
};

/// A network together with its architecture tag and data scaling.
struct PdeModel {
  Arch arch = Arch::kF;
  int n_derivs = 2;
  Network net;
  Normalization norm;

  /// Architecture F: Dense(h)-ReLU-...-Dense(1); G: Conv1D(h, w)-ReLU-...-Conv1D(1, 1).
  static PdeModel architecture_f(int n_derivs, std::vector<int> hidden, Rng& rng);
  static PdeModel architecture_g(std::vector<int> hidden, int kernel_width, Rng& rng);
  /// Layer sizes used for density (48s) or for phi_1 (64s).
  static PdeModel make(Arch arch, bool phi_variable, Rng& rng, int n_derivs = 2, int kernel_width = 5);

  /// Fits the normalization to the training split of the data.
  void fit_normalization(const Dataset& data);

  /// dv/dt predicted at every grid point of a periodic field.
  std::vector<double> rhs(std::span<const double> v, double dx) const;
  /// Physical-unit predictions for the dataset columns (same layout as targets).
  Eigen::MatrixXd predict(const Dataset& data) const;

  std::string to_json() const;
  static PdeModel from_json(const std::string& text);
};

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 256;  ///< grid points per batch (G: rounded to whole snapshots)
  int epochs = 500;
  int patience = 20;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_mse;  ///< physical units
  std::vector<double> val_mse;
  int best_epoch = -1;
  bool stopped_early = false;
};

/// Mini-batch ADAM on MSE; keeps the weights of the best validation epoch.
TrainHistory train(PdeModel& model, const Dataset& data, const TrainConfig& cfg);

struct EvalResult {
  double mse = 0.0;
  double relative_mse = 0.0;  ///< mse / mean(target^2)
};
EvalResult evaluate(const PdeModel& model, const Dataset& data, Split s);

using RhsFunction = std::function<void(std::span<const double> v, double dx, std::span<double> out)>;

/// -v v_x + nu v_xx with second-order central differences.
RhsFunction burgers_rhs_oracle(double nu);
RhsFunction model_rhs(const PdeModel& model);

struct RolloutOptions {
  double t_end = 2.0;
  double dt = 1e-3;
  double record_dt = 0.01;
  double divergence_bound = 1e3;
};

struct RolloutResult {
  std::vector<DensityField> fields;
  bool diverged = false;
  std::string diagnostic;
};

/// Classic RK4 on the periodic grid of v0.
RolloutResult rollout(const RhsFunction& rhs, const DensityField& v0, const RolloutOptions& options);
RolloutResult rollout(const PdeModel& model, const DensityField& v0, const RolloutOptions& options);

struct IcSamplerOptions {
  int n_modes = 20;
  int max_wavenumber = 7;
  double baseline = 1.0;
  double amplitude = 0.5;  ///< max |rho0 - baseline| after rescaling the mode sum
  double min_density = 0.1;
  int max_draws = 100;
  void validate() const;
};

/// A sum of random sine modes, shifted by the baseline and rescaled so its
/// largest deviation equals the amplitude; redrawn until min >= min_density.
std::function<double(double)> sample_initial_condition(Rng& rng, const IcSamplerOptions& options = {});

enum class Backend { kFull, kGapTooth, kFv };
Backend parse_backend(const std::string& name);
std::string backend_name(Backend b);

struct TrainingRunOptions {
  Backend backend = Backend::kGapTooth;
  int n_traj = 12;
  double t_end = 2.0;
  double record_dt = 1e-3;
  MicroParams micro;
  ToothGrid grid;               ///< gap-tooth teeth, or the output grid size N for full/fv
  int fv_cells = 512;
  IcSamplerOptions ic;
  std::vector<Split> splits;    ///< per trajectory; empty = 2/3, 1/6, 1/6
};

/// Density trajectories on the N-point grid, one per sampled IC.
std::vector<Trajectory> generate_training_runs(const TrainingRunOptions& options, std::uint64_t seed);

/// Default train/val/test assignment for n trajectories.
std::vector<Split> default_splits(int n_traj);

}  // namespace gtpde
