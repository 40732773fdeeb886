#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gtpde/distances.hpp"
#include "gtpde/fv_reference.hpp"
#include "gtpde/gap_tooth.hpp"
#include "gtpde/micro_particles.hpp"
#include "gtpde/pde_learner.hpp"

namespace gtpde {

inline constexpr int kSchemaVersion = 1;

struct IcConfig {
  std::string kind = "sine";  ///< "sine": mean + amplitude sin(k x); "random": sampler
  double mean = 1.0;
  double amplitude = -0.5;
  int wavenumber = 1;
  IcSamplerOptions random;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Backend backend = Backend::kGapTooth;
  IcConfig ic;
  MicroParams micro;
  bool auto_micro_step = true;  ///< "h": "auto" picks suggested_micro_step
  ToothGrid grid;
  std::size_t full_intervals = 128;
  FvConfig fv;
  double t_end = 2.0;
  double record_dt = 0.01;
  double particle_record_dt = 0.0;

  Metric metric = Metric::kUw1;
  DistanceParams distances;
  int snapshot = -1;  ///< particle snapshot index; negative counts from the end

  int n_eig = 8;
  std::optional<double> epsilon;
  double epsilon_scale = 1.0;
  int n_keep = 8;
  double residual_bandwidth = 1.0 / 3.0;

  int n_traj = 6;
  Backend traj_backend = Backend::kGapTooth;
  double traj_record_dt = 1e-3;
  std::vector<Split> traj_splits;

  std::vector<std::string> runs;
  std::string variable = "rho";
  std::string phi_map;
  DatasetOptions dataset;

  Arch arch = Arch::kF;
  TrainConfig train;

  std::string model;
  std::string ic_run;
  double rollout_dt = 1e-3;

  std::string compare_run;
  std::string compare_reference;

  std::filesystem::path out = "run";

  void validate() const;
};

/// Parses a config document; unknown keys and schema mismatches throw ConfigError.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

/// Initial density described by the config, evaluated on the n-point grid.
DensityField initial_field(const RunConfig& cfg, std::size_t n);
/// Micro parameters with the step resolved when it is "auto".
MicroParams resolved_micro(const RunConfig& cfg);

struct CommandResult {
  std::vector<std::string> messages;
  std::vector<std::string> warnings;
  int exit_code = 0;
};

CommandResult cmd_simulate(const RunConfig& cfg);
CommandResult cmd_fv(const RunConfig& cfg);
CommandResult cmd_distances(const RunConfig& cfg);
CommandResult cmd_embed(const RunConfig& cfg);
CommandResult cmd_dataset(const RunConfig& cfg);
CommandResult cmd_train(const RunConfig& cfg);
CommandResult cmd_rollout(const RunConfig& cfg);
CommandResult cmd_compare(const RunConfig& cfg);
CommandResult cmd_report(const RunConfig& cfg);

/// A run directory: grid, fields and metadata.
struct RunData {
  std::vector<double> grid;
  std::vector<DensityField> fields;
  std::string backend;
  std::string variable = "rho";
  int N = 0;
  double alpha = 0.0;
  double Z = 0.0;
  Split split = Split::kTrain;
};
RunData load_run(const std::filesystem::path& dir);

struct ComparisonRow {
  double t = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};
/// Errors at every record time shared by both runs. The reference is
/// interpolated onto the run grid when it is finer; other mismatches throw.
std::vector<ComparisonRow> compare_runs(const RunData& run, const RunData& reference);

}  // namespace gtpde
