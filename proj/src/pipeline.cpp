#include "gtpde/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gtpde/common.hpp"
#include "gtpde/field_ops.hpp"
#include "gtpde/io.hpp"
#include "gtpde/manifold_coords.hpp"
#include "gtpde/svg.hpp"

namespace gtpde {

using nlohmann::json;
namespace fs = std::filesystem;

// ---- config ----

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

void parse_sampler(const json& j, const std::string& where, IcSamplerOptions& s) {
  check_keys(j, where, {"n_modes", "max_wavenumber", "baseline", "amplitude", "min_density", "max_draws"});
  read(j, "n_modes", where, s.n_modes);
  read(j, "max_wavenumber", where, s.max_wavenumber);
  read(j, "baseline", where, s.baseline);
  read(j, "amplitude", where, s.amplitude);
  read(j, "min_density", where, s.min_density);
  read(j, "max_draws", where, s.max_draws);
}

json sampler_json(const IcSamplerOptions& s) {
  return {{"n_modes", s.n_modes}, {"max_wavenumber", s.max_wavenumber}, {"baseline", s.baseline},
          {"amplitude", s.amplitude}, {"min_density", s.min_density}, {"max_draws", s.max_draws}};
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config", {"schema_version", "seed", "backend", "ic", "micro", "gap_tooth", "full", "fv", "time",
                           "distances", "embedding", "training_runs", "dataset", "train", "rollout", "compare", "out"});
  if (!j.contains("schema_version")) throw ConfigError("config: missing schema_version");
  int version = 0;
  read(j, "schema_version", "config", version);
  if (version != kSchemaVersion) throw ConfigError("config: unsupported schema_version " + std::to_string(version));

  RunConfig c;
  read(j, "seed", "config", c.seed);
  if (j.contains("backend")) c.backend = parse_backend(j.at("backend").get<std::string>());
  if (j.contains("out")) c.out = j.at("out").get<std::string>();

  if (j.contains("ic")) {
    const auto& s = j.at("ic");
    check_keys(s, "ic", {"kind", "mean", "amplitude", "wavenumber", "random"});
    read(s, "kind", "ic", c.ic.kind);
    read(s, "mean", "ic", c.ic.mean);
    read(s, "amplitude", "ic", c.ic.amplitude);
    read(s, "wavenumber", "ic", c.ic.wavenumber);
    if (s.contains("random")) parse_sampler(s.at("random"), "ic.random", c.ic.random);
  }
  if (j.contains("micro")) {
    const auto& s = j.at("micro");
    check_keys(s, "micro", {"nu", "Z", "m", "h"});
    read(s, "nu", "micro", c.micro.nu);
    read(s, "Z", "micro", c.micro.Z);
    read(s, "m", "micro", c.micro.m);
    if (s.contains("h")) {
      if (s.at("h").is_string()) {
        if (s.at("h").get<std::string>() != "auto") throw ConfigError("micro.h: expected a number or \"auto\"");
        c.auto_micro_step = true;
      } else {
        read(s, "h", "micro", c.micro.h);
        c.auto_micro_step = false;
      }
    }
  }
  if (j.contains("gap_tooth")) {
    const auto& s = j.at("gap_tooth");
    check_keys(s, "gap_tooth", {"N", "alpha"});
    read(s, "N", "gap_tooth", c.grid.N);
    read(s, "alpha", "gap_tooth", c.grid.alpha);
  }
  if (j.contains("full")) {
    check_keys(j.at("full"), "full", {"n_intervals"});
    read(j.at("full"), "n_intervals", "full", c.full_intervals);
  }
  if (j.contains("fv")) {
    check_keys(j.at("fv"), "fv", {"n_cells", "cfl"});
    read(j.at("fv"), "n_cells", "fv", c.fv.n_cells);
    read(j.at("fv"), "cfl", "fv", c.fv.cfl);
  }
  if (j.contains("time")) {
    const auto& s = j.at("time");
    check_keys(s, "time", {"t_end", "record_dt", "particle_record_dt"});
    read(s, "t_end", "time", c.t_end);
    read(s, "record_dt", "time", c.record_dt);
    read(s, "particle_record_dt", "time", c.particle_record_dt);
  }
  if (j.contains("distances")) {
    const auto& s = j.at("distances");
    check_keys(s, "distances", {"metric", "beta", "K", "snapshot", "uot"});
    if (s.contains("metric")) c.metric = parse_metric(s.at("metric").get<std::string>());
    read(s, "beta", "distances", c.distances.beta);
    read(s, "K", "distances", c.distances.K);
    read(s, "snapshot", "distances", c.snapshot);
    if (s.contains("uot")) {
      const auto& u = s.at("uot");
      check_keys(u, "distances.uot", {"cost_exponent", "lambda_kl", "eps_entropy", "grid_n", "tolerance", "max_iterations"});
      auto& p = c.distances.uot;
      read(u, "cost_exponent", "distances.uot", p.cost_exponent);
      read(u, "lambda_kl", "distances.uot", p.lambda_kl);
      read(u, "eps_entropy", "distances.uot", p.eps_entropy);
      read(u, "grid_n", "distances.uot", p.grid_n);
      read(u, "tolerance", "distances.uot", p.tolerance);
      read(u, "max_iterations", "distances.uot", p.max_iterations);
    }
  }
  if (j.contains("embedding")) {
    const auto& s = j.at("embedding");
    check_keys(s, "embedding", {"n_eig", "epsilon", "epsilon_scale", "n_keep", "residual_bandwidth"});
    read(s, "n_eig", "embedding", c.n_eig);
    if (s.contains("epsilon") && !s.at("epsilon").is_null()) {
      double e = 0.0;
      read(s, "epsilon", "embedding", e);
      c.epsilon = e;
    }
    read(s, "epsilon_scale", "embedding", c.epsilon_scale);
    read(s, "n_keep", "embedding", c.n_keep);
    read(s, "residual_bandwidth", "embedding", c.residual_bandwidth);
  }
  if (j.contains("training_runs")) {
    const auto& s = j.at("training_runs");
    check_keys(s, "training_runs", {"n_traj", "backend", "record_dt", "splits", "ic"});
    read(s, "n_traj", "training_runs", c.n_traj);
    if (s.contains("backend")) c.traj_backend = parse_backend(s.at("backend").get<std::string>());
    read(s, "record_dt", "training_runs", c.traj_record_dt);
    if (s.contains("splits")) {
      for (const auto& x : s.at("splits")) c.traj_splits.push_back(parse_split(x.get<std::string>()));
    }
    if (s.contains("ic")) parse_sampler(s.at("ic"), "training_runs.ic", c.ic.random);
  }
  if (j.contains("dataset")) {
    const auto& s = j.at("dataset");
    check_keys(s, "dataset", {"runs", "variable", "phi_map", "n_derivs", "stencil_radius", "smooth_sigma", "stride", "difference_step"});
    read(s, "runs", "dataset", c.runs);
    read(s, "variable", "dataset", c.variable);
    read(s, "phi_map", "dataset", c.phi_map);
    read(s, "n_derivs", "dataset", c.dataset.n_derivs);
    read(s, "stencil_radius", "dataset", c.dataset.stencil_radius);
    read(s, "smooth_sigma", "dataset", c.dataset.smooth_sigma);
    read(s, "stride", "dataset", c.dataset.stride);
    read(s, "difference_step", "dataset", c.dataset.difference_step);
  }
  if (j.contains("train")) {
    const auto& s = j.at("train");
    check_keys(s, "train", {"arch", "lr", "batch_size", "epochs", "patience", "seed", "beta1", "beta2", "eps_adam"});
    if (s.contains("arch")) c.arch = parse_arch(s.at("arch").get<std::string>());
    read(s, "lr", "train", c.train.lr);
    read(s, "batch_size", "train", c.train.batch_size);
    read(s, "epochs", "train", c.train.epochs);
    read(s, "patience", "train", c.train.patience);
    read(s, "seed", "train", c.train.seed);
    read(s, "beta1", "train", c.train.beta1);
    read(s, "beta2", "train", c.train.beta2);
    read(s, "eps_adam", "train", c.train.eps_adam);
  }
  if (j.contains("rollout")) {
    const auto& s = j.at("rollout");
    check_keys(s, "rollout", {"model", "ic_run", "dt"});
    read(s, "model", "rollout", c.model);
    read(s, "ic_run", "rollout", c.ic_run);
    read(s, "dt", "rollout", c.rollout_dt);
  }
  if (j.contains("compare")) {
    const auto& s = j.at("compare");
    check_keys(s, "compare", {"run", "reference", "phi_map"});
    read(s, "run", "compare", c.compare_run);
    read(s, "reference", "compare", c.compare_reference);
    if (s.contains("phi_map")) read(s, "phi_map", "compare", c.phi_map);
  }
  c.fv.nu = c.micro.nu;
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) { return parse_config(read_text(path)); }

void RunConfig::validate() const {
  micro.Z > 0 ? void() : throw ConfigError("micro.Z must be > 0");
  if (!auto_micro_step) micro.validate();
  if (!(micro.nu > 0.0)) throw ConfigError("micro.nu must be > 0");
  if (micro.m < 1) throw ConfigError("micro.m must be >= 1");
  grid.validate();
  if (full_intervals < 1) throw ConfigError("full.n_intervals must be >= 1");
  if (fv.n_cells < 16) throw ConfigError("fv.n_cells must be >= 16");
  if (!(fv.cfl > 0.0 && fv.cfl <= 1.0)) throw ConfigError("fv.cfl must lie in (0, 1]");
  if (!(t_end >= 0.0)) throw ConfigError("time.t_end must be >= 0");
  if (!(record_dt > 0.0)) throw ConfigError("time.record_dt must be > 0");
  if (particle_record_dt < 0.0) throw ConfigError("time.particle_record_dt must be >= 0");
  if (ic.kind != "sine" && ic.kind != "random") throw ConfigError("ic.kind must be \"sine\" or \"random\"");
  if (ic.kind == "sine" && ic.wavenumber < 0) throw ConfigError("ic.wavenumber must be >= 0");
  ic.random.validate();
  if (!(distances.beta >= 0.0)) throw ConfigError("distances.beta must be >= 0");
  if (distances.K < 0) throw ConfigError("distances.K must be >= 0");
  if (!(distances.uot.lambda_kl > 0.0) || !(distances.uot.eps_entropy > 0.0)) {
    throw ConfigError("distances.uot: lambda_kl and eps_entropy must be > 0");
  }
  if (distances.uot.grid_n < 1) throw ConfigError("distances.uot.grid_n must be >= 1");
  if (n_eig < 2) throw ConfigError("embedding.n_eig must be >= 2");
  if (epsilon && !(*epsilon > 0.0)) throw ConfigError("embedding.epsilon must be > 0");
  if (!(epsilon_scale > 0.0)) throw ConfigError("embedding.epsilon_scale must be > 0");
  if (n_keep < 2) throw ConfigError("embedding.n_keep must be >= 2");
  if (!(residual_bandwidth > 0.0)) throw ConfigError("embedding.residual_bandwidth must be > 0");
  if (n_traj < 1) throw ConfigError("training_runs.n_traj must be >= 1");
  if (!traj_splits.empty() && traj_splits.size() != static_cast<std::size_t>(n_traj)) {
    throw ConfigError("training_runs.splits needs one entry per trajectory");
  }
  if (!(traj_record_dt > 0.0)) throw ConfigError("training_runs.record_dt must be > 0");
  if (variable != "rho" && variable != "phi") throw ConfigError("dataset.variable must be \"rho\" or \"phi\"");
  if (dataset.n_derivs < 0 || dataset.stencil_radius < 0 || dataset.stride < 1 || dataset.difference_step < 1 ||
      dataset.smooth_sigma < 0.0) {
    throw ConfigError("dataset: n_derivs, stencil_radius >= 0, stride, difference_step >= 1, smooth_sigma >= 0");
  }
  train.validate();
  if (!(rollout_dt > 0.0)) throw ConfigError("rollout.dt must be > 0");
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["seed"] = c.seed;
  j["backend"] = backend_name(c.backend);
  j["ic"] = {{"kind", c.ic.kind}, {"mean", c.ic.mean}, {"amplitude", c.ic.amplitude}, {"wavenumber", c.ic.wavenumber},
             {"random", sampler_json(c.ic.random)}};
  j["micro"] = {{"nu", c.micro.nu}, {"Z", c.micro.Z}, {"m", c.micro.m}};
  if (c.auto_micro_step) {
    j["micro"]["h"] = "auto";
  } else {
    j["micro"]["h"] = c.micro.h;
  }
  j["gap_tooth"] = {{"N", c.grid.N}, {"alpha", c.grid.alpha}};
  j["full"] = {{"n_intervals", c.full_intervals}};
  j["fv"] = {{"n_cells", c.fv.n_cells}, {"cfl", c.fv.cfl}};
  j["time"] = {{"t_end", c.t_end}, {"record_dt", c.record_dt}, {"particle_record_dt", c.particle_record_dt}};
  const auto& u = c.distances.uot;
  j["distances"] = {{"metric", metric_name(c.metric)},
                    {"beta", c.distances.beta},
                    {"K", c.distances.K},
                    {"snapshot", c.snapshot},
                    {"uot", {{"cost_exponent", u.cost_exponent}, {"lambda_kl", u.lambda_kl}, {"eps_entropy", u.eps_entropy},
                             {"grid_n", u.grid_n}, {"tolerance", u.tolerance}, {"max_iterations", u.max_iterations}}}};
  j["embedding"] = {{"n_eig", c.n_eig}, {"epsilon_scale", c.epsilon_scale}, {"n_keep", c.n_keep},
                    {"residual_bandwidth", c.residual_bandwidth}};
  j["embedding"]["epsilon"] = c.epsilon ? json(*c.epsilon) : json(nullptr);
  json splits = json::array();
  for (auto s : c.traj_splits) splits.push_back(split_name(s));
  j["training_runs"] = {{"n_traj", c.n_traj}, {"backend", backend_name(c.traj_backend)}, {"record_dt", c.traj_record_dt},
                        {"splits", splits}};
  j["dataset"] = {{"runs", c.runs},
                  {"variable", c.variable},
                  {"phi_map", c.phi_map},
                  {"n_derivs", c.dataset.n_derivs},
                  {"stencil_radius", c.dataset.stencil_radius},
                  {"smooth_sigma", c.dataset.smooth_sigma},
                  {"stride", c.dataset.stride},
                  {"difference_step", c.dataset.difference_step}};
  j["train"] = {{"arch", arch_name(c.arch)}, {"lr", c.train.lr}, {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs}, {"patience", c.train.patience}, {"seed", c.train.seed},
                {"beta1", c.train.beta1}, {"beta2", c.train.beta2}, {"eps_adam", c.train.eps_adam}};
  j["rollout"] = {{"model", c.model}, {"ic_run", c.ic_run}, {"dt", c.rollout_dt}};
  j["compare"] = {{"run", c.compare_run}, {"reference", c.compare_reference}};
  j["out"] = c.out.string();
  return j.dump(2);
}

DensityField initial_field(const RunConfig& cfg, std::size_t n) {
  DensityField f = make_field(n);
  if (cfg.ic.kind == "sine") {
    for (std::size_t i = 0; i < n; ++i) {
      f.values[i] = cfg.ic.mean + cfg.ic.amplitude * std::sin(cfg.ic.wavenumber * f.grid_x[i]);
    }
  } else {
    Rng rng = Rng(cfg.seed).split(0x1C);
    const auto g = sample_initial_condition(rng, cfg.ic.random);
    for (std::size_t i = 0; i < n; ++i) f.values[i] = g(f.grid_x[i]);
  }
  return f;
}

MicroParams resolved_micro(const RunConfig& cfg) {
  MicroParams p = cfg.micro;
  if (cfg.auto_micro_step) {
    p.h = suggested_micro_step(cfg.grid, p.nu, cfg.record_dt);
  }
  p.validate();
  return p;
}

// ---- run directories ----

namespace {

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json base_meta(const RunConfig& cfg, const std::string& command) {
  json m;
  m["schema_version"] = kSchemaVersion;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = json::parse(config_to_json(cfg));
  return m;
}

std::vector<double> values_of(const DensityField& f) { return f.values; }

void plot_snapshots(const fs::path& path, const std::vector<DensityField>& fields, const std::string& title,
                    const std::string& ylabel) {
  if (fields.empty()) return;
  std::vector<Series> s;
  const std::size_t picks = std::min<std::size_t>(5, fields.size());
  for (std::size_t k = 0; k < picks; ++k) {
    const std::size_t idx = picks == 1 ? 0 : k * (fields.size() - 1) / (picks - 1);
    std::ostringstream label;
    label << "t=" << fields[idx].t;
    s.push_back({label.str(), fields[idx].grid_x, values_of(fields[idx]), false});
  }
  write_line_plot(path, {title, "x", ylabel}, s);
}

std::vector<DensityField> map_fields(const std::vector<DensityField>& in, const PhiMap& map) {
  std::vector<DensityField> out = in;
  for (auto& f : out) f.values = map.forward(f.values);
  return out;
}

PhiMap load_phi_map(const fs::path& path) {
  const json j = read_json(path);
  try {
    return PhiMap::from_knots(j.at("rho").get<std::vector<double>>(), j.at("phi").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ToothGrid run_tooth_grid(const json& meta, const fs::path& dir) {
  if (meta.value("backend", std::string()) != "gap_tooth") throw ConfigError(dir.string() + ": not a gap-tooth run");
  ToothGrid g;
  g.N = meta.at("N").get<int>();
  g.alpha = meta.at("alpha").get<double>();
  g.validate();
  return g;
}

}  // namespace

RunData load_run(const fs::path& dir) {
  RunData r;
  const json meta = read_json(dir / "meta.json");
  r.grid = read_grid_csv(dir / "grid.csv");
  r.fields = read_fields_csv(dir / "fields.csv", r.grid);
  r.backend = meta.value("backend", std::string());
  r.variable = meta.value("variable", std::string("rho"));
  r.N = static_cast<int>(r.grid.size());
  r.alpha = meta.value("alpha", 0.0);
  r.Z = meta.value("Z", 0.0);
  if (meta.contains("split")) r.split = parse_split(meta.at("split").get<std::string>());
  return r;
}

namespace {

void write_run(const fs::path& dir, const std::vector<DensityField>& fields, json meta) {
  fs::create_directories(dir);
  if (fields.empty()) throw NumericError("run produced no fields");
  write_grid_csv(dir / "grid.csv", fields.front().grid_x);
  write_fields_csv(dir / "fields.csv", fields);
  meta["n_points"] = fields.front().size();
  meta["n_records"] = fields.size();
  write_json(dir / "meta.json", meta);
}

}  // namespace

CommandResult cmd_simulate(const RunConfig& cfg) {
  CommandResult res;
  json meta = base_meta(cfg, "simulate");
  meta["backend"] = backend_name(cfg.backend);
  meta["variable"] = "rho";
  meta["t_end"] = cfg.t_end;
  meta["record_dt"] = cfg.record_dt;
  meta["nu"] = cfg.micro.nu;
  std::vector<DensityField> fields;
  switch (cfg.backend) {
    case Backend::kGapTooth: {
      const MicroParams p = resolved_micro(cfg);
      GapToothOptions o;
      o.t_end = cfg.t_end;
      o.record_dt = cfg.record_dt;
      o.particle_record_dt = cfg.particle_record_dt;
      DensityField rho0 = initial_field(cfg, static_cast<std::size_t>(cfg.grid.N));
      GapToothRun run = simulate_gap_tooth(rho0, cfg.grid, p, o, cfg.seed);
      fields = std::move(run.fields);
      meta["N"] = cfg.grid.N;
      meta["alpha"] = cfg.grid.alpha;
      meta["Z"] = p.Z;
      meta["h"] = p.h;
      meta["m"] = p.m;
      meta["exits"] = run.exits;
      meta["clamped"] = run.clamped;
      meta["warnings"] = run.warnings;
      json parts = json::array();
      fs::create_directories(cfg.out);
      for (std::size_t k = 0; k < run.particles.size(); ++k) {
        const std::string name = "particles_" + std::to_string(k) + ".csv";
        write_particles_csv(cfg.out / name, run.particles[k].ensemble);
        parts.push_back({{"k", k}, {"t", run.particles[k].t}, {"file", name}});
      }
      meta["particle_snapshots"] = parts;
      res.warnings = run.warnings;
      break;
    }
    case Backend::kFull: {
      const MicroParams p = resolved_micro(cfg);
      FullSimulationOptions o;
      o.n_intervals = cfg.full_intervals;
      o.t_end = cfg.t_end;
      o.record_dt = cfg.record_dt;
      Rng rng(cfg.seed);
      fields = simulate_full(initial_field(cfg, cfg.full_intervals), p, o, rng);
      meta["N"] = cfg.full_intervals;
      meta["Z"] = p.Z;
      meta["h"] = p.h;
      meta["m"] = p.m;
      break;
    }
    case Backend::kFv: {
      FvConfig fc = cfg.fv;
      fc.t_end = cfg.t_end;
      fc.record_dt = cfg.record_dt;
      fc.nu = cfg.micro.nu;
      DensityField rho0;
      if (cfg.ic.kind == "sine") {
        const double mean = cfg.ic.mean, amp = cfg.ic.amplitude;
        const int k = cfg.ic.wavenumber;
        rho0 = cell_averages([=](double x) { return mean + amp * std::sin(k * x); }, fc.n_cells);
      } else {
        Rng rng = Rng(cfg.seed).split(0x1C);
        rho0 = cell_averages(sample_initial_condition(rng, cfg.ic.random), fc.n_cells);
      }
      fields = fv_solve(rho0, fc);
      meta["N"] = fc.n_cells;
      break;
    }
  }
  write_run(cfg.out, fields, meta);
  std::ostringstream msg;
  msg << "wrote " << fields.size() << " records to " << cfg.out.string();
  res.messages.push_back(msg.str());
  return res;
}

CommandResult cmd_fv(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.backend = Backend::kFv;
  return cmd_simulate(c);
}

CommandResult cmd_distances(const RunConfig& cfg) {
  CommandResult res;
  const json meta = read_json(cfg.out / "meta.json");
  const ToothGrid grid = run_tooth_grid(meta, cfg.out);
  const auto& parts = meta.at("particle_snapshots");
  if (parts.empty()) throw ConfigError(cfg.out.string() + ": no particle snapshots");
  const int n = static_cast<int>(parts.size());
  const int k = cfg.snapshot < 0 ? n + cfg.snapshot : cfg.snapshot;
  if (k < 0 || k >= n) throw ConfigError("distances.snapshot out of range (run has " + std::to_string(n) + ")");
  const auto& entry = parts.at(static_cast<std::size_t>(k));
  const double Z = meta.at("Z").get<double>();
  const auto ensemble = read_particles_csv(cfg.out / entry.at("file").get<std::string>(), grid);
  const auto teeth = tooth_distributions(ensemble, Z);
  const DistanceMatrix D = pairwise_distances(teeth, cfg.metric, cfg.distances);
  if (!D.valid(0.0)) throw NumericError("distance matrix is not symmetric/nonnegative");
  write_matrix_csv(cfg.out / "distances.csv", D.values);
  json info;
  info["metric"] = metric_name(cfg.metric);
  info["snapshot"] = k;
  info["t"] = entry.at("t");
  info["file"] = entry.at("file");
  info["beta"] = cfg.distances.beta;
  info["K"] = cfg.distances.K;
  info["uot_unconverged"] = D.unconverged;
  write_json(cfg.out / "distances.json", info);
  if (D.unconverged > 0) res.warnings.push_back(std::to_string(D.unconverged) + " unbalanced OT pairs hit the iteration cap");
  res.messages.push_back("wrote " + (cfg.out / "distances.csv").string());
  return res;
}

CommandResult cmd_embed(const RunConfig& cfg) {
  CommandResult res;
  const json meta = read_json(cfg.out / "meta.json");
  const ToothGrid grid = run_tooth_grid(meta, cfg.out);
  const json info = read_json(cfg.out / "distances.json");
  const Eigen::MatrixXd D = read_matrix_csv(cfg.out / "distances.csv");
  const auto ensemble = read_particles_csv(cfg.out / info.at("file").get<std::string>(), grid);
  const double Z = meta.at("Z").get<double>();
  std::vector<double> mass;
  for (const auto& t : tooth_distributions(ensemble, Z)) mass.push_back(t.mass);
  if (static_cast<Eigen::Index>(mass.size()) != D.rows()) throw ConfigError("distances.csv does not match the particle snapshot");

  std::optional<double> eps = cfg.epsilon;
  if (!eps) eps = cfg.epsilon_scale * median_squared_distance(D);
  const Kernel K = build_kernel(D, eps);
  const EmbeddingResult E = diffusion_embedding(K, cfg.n_eig, mass);
  const int n_eig = static_cast<int>(E.eigenvalues.size());

  CsvTable emb;
  emb.header = {"tooth", "mass", "lambda"};
  for (int k = 0; k < n_eig; ++k) emb.header.push_back("phi_" + std::to_string(k));
  for (std::size_t i = 0; i < mass.size(); ++i) {
    std::vector<double> row{static_cast<double>(i), mass[i],
                            i < static_cast<std::size_t>(n_eig) ? E.eigenvalues(static_cast<Eigen::Index>(i)) : std::nan("")};
    for (int k = 0; k < n_eig; ++k) row.push_back(E.eigenvectors(static_cast<Eigen::Index>(i), k));
    emb.rows.push_back(std::move(row));
  }
  write_csv(cfg.out / "embedding.csv", emb);

  const int n_keep = std::min(cfg.n_keep, n_eig);
  CsvTable rt;
  rt.header = {"k", "lambda", "residual"};
  if (D.rows() >= 10 && n_keep >= 2) {
    const auto r = independence_residuals(E, n_keep, cfg.residual_bandwidth);
    for (int k = 1; k < n_keep; ++k) rt.rows.push_back({static_cast<double>(k), E.eigenvalues(k), r[static_cast<std::size_t>(k)]});
  } else {
    res.warnings.push_back("fewer than 10 teeth: independence residuals skipped");
  }
  write_csv(cfg.out / "residuals.csv", rt);

  const Eigen::VectorXd phi1 = E.phi(1);
  const std::vector<double> p1(phi1.data(), phi1.data() + phi1.size());
  write_line_plot(cfg.out / "phi1_vs_mass.svg", {"phi_1 against tooth mass", "tooth mass", "phi_1"},
                  {{"teeth", mass, p1, true}});
  json out;
  out["epsilon"] = K.epsilon;
  out["spearman_phi1_mass"] = spearman(p1, mass);
  std::vector<double> rho;
  for (double m : mass) rho.push_back(m / grid.width());
  try {
    const PhiMap map = PhiMap::fit(rho, p1);
    write_json(cfg.out / "phi_map.json", {{"rho", map.rho_knots()}, {"phi", map.phi_knots()}});
    out["phi_map"] = "phi_map.json";
  } catch (const ConfigError& e) {
    res.warnings.push_back(std::string("no phi map: ") + e.what());
  }
  write_json(cfg.out / "embed.json", out);
  res.messages.push_back("wrote " + (cfg.out / "embedding.csv").string());
  return res;
}

CommandResult cmd_dataset(const RunConfig& cfg) {
  CommandResult res;
  TrainingRunOptions o;
  o.backend = cfg.traj_backend;
  o.n_traj = cfg.n_traj;
  o.t_end = cfg.t_end;
  o.record_dt = cfg.traj_record_dt;
  o.grid = cfg.grid;
  o.fv_cells = static_cast<int>(cfg.fv.n_cells);
  o.ic = cfg.ic.random;
  o.splits = cfg.traj_splits;
  RunConfig c = cfg;
  c.record_dt = cfg.traj_record_dt;
  o.micro = resolved_micro(c);
  const auto runs = generate_training_runs(o, cfg.seed);
  json index = json::array();
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const std::string name = "traj_" + std::to_string(k);
    json meta = base_meta(cfg, "dataset");
    meta["backend"] = backend_name(o.backend);
    meta["variable"] = "rho";
    meta["split"] = split_name(runs[k].split);
    meta["N"] = cfg.grid.N;
    meta["alpha"] = cfg.grid.alpha;
    meta["Z"] = o.micro.Z;
    meta["t_end"] = o.t_end;
    meta["record_dt"] = o.record_dt;
    write_run(cfg.out / name, runs[k].snapshots, meta);
    index.push_back({{"run", name}, {"split", split_name(runs[k].split)}});
  }
  write_json(cfg.out / "dataset.json", {{"runs", index}});
  res.messages.push_back("wrote " + std::to_string(runs.size()) + " trajectories under " + cfg.out.string());
  return res;
}

namespace {

std::vector<fs::path> dataset_runs(const RunConfig& cfg) {
  std::vector<fs::path> out;
  if (!cfg.runs.empty()) {
    for (const auto& r : cfg.runs) out.emplace_back(r);
    return out;
  }
  const json idx = read_json(cfg.out / "dataset.json");
  for (const auto& e : idx.at("runs")) out.push_back(cfg.out / e.at("run").get<std::string>());
  return out;
}

}  // namespace

CommandResult cmd_train(const RunConfig& cfg) {
  CommandResult res;
  std::vector<Trajectory> trajs;
  std::optional<PhiMap> map;
  if (cfg.variable == "phi") {
    if (cfg.phi_map.empty()) throw ConfigError("dataset.variable = phi needs dataset.phi_map");
    map = load_phi_map(cfg.phi_map);
  }
  for (const auto& dir : dataset_runs(cfg)) {
    RunData r = load_run(dir);
    Trajectory t;
    t.split = r.split;
    t.snapshots = map ? map_fields(r.fields, *map) : r.fields;
    trajs.push_back(std::move(t));
  }
  const Dataset data = build_dataset(trajs, cfg.arch, cfg.dataset);
  Rng rng(cfg.train.seed);
  PdeModel model = PdeModel::make(cfg.arch, cfg.variable == "phi", rng, cfg.dataset.n_derivs);
  const TrainHistory h = train(model, data, cfg.train);
  fs::create_directories(cfg.out);
  write_text(cfg.out / "model.json", model.to_json() + "\n");
  CsvTable loss;
  loss.header = {"epoch", "train_mse", "val_mse"};
  std::vector<double> ep;
  for (std::size_t e = 0; e < h.train_mse.size(); ++e) {
    loss.rows.push_back({static_cast<double>(e), h.train_mse[e], h.val_mse[e]});
    ep.push_back(static_cast<double>(e));
  }
  write_csv(cfg.out / "loss.csv", loss);
  PlotSpec spec{"training loss", "epoch", "MSE"};
  spec.log_y = true;
  write_line_plot(cfg.out / "loss.svg", spec, {{"train", ep, h.train_mse, false}, {"val", ep, h.val_mse, false}});
  json info;
  info["arch"] = arch_name(cfg.arch);
  info["variable"] = cfg.variable;
  info["phi_map"] = cfg.phi_map;
  info["epochs_run"] = h.train_mse.size();
  info["best_epoch"] = h.best_epoch;
  info["best_val_mse"] = h.val_mse.at(static_cast<std::size_t>(h.best_epoch));
  if (data.count(Split::kTest) > 0) {
    const EvalResult ev = evaluate(model, data, Split::kTest);
    info["test_mse"] = ev.mse;
    info["test_relative_mse"] = ev.relative_mse;
  }
  write_json(cfg.out / "train.json", info);
  res.messages.push_back("wrote " + (cfg.out / "model.json").string());
  return res;
}

CommandResult cmd_rollout(const RunConfig& cfg) {
  CommandResult res;
  const fs::path model_path = cfg.model.empty() ? cfg.out / "model.json" : fs::path(cfg.model);
  const PdeModel model = PdeModel::from_json(read_text(model_path));
  DensityField v0;
  std::string variable = cfg.variable;
  if (!cfg.ic_run.empty()) {
    RunData r = load_run(cfg.ic_run);
    v0 = r.fields.front();
    if (variable == "phi" && r.variable == "rho") {
      if (cfg.phi_map.empty()) throw ConfigError("rollout of phi from a density run needs dataset.phi_map");
      v0.values = load_phi_map(cfg.phi_map).forward(v0.values);
    }
  } else {
    v0 = initial_field(cfg, static_cast<std::size_t>(cfg.grid.N));
    if (variable == "phi") {
      if (cfg.phi_map.empty()) throw ConfigError("rollout of phi needs dataset.phi_map");
      v0.values = load_phi_map(cfg.phi_map).forward(v0.values);
    }
  }
  RolloutOptions ro;
  ro.t_end = cfg.t_end;
  ro.dt = cfg.rollout_dt;
  ro.record_dt = cfg.record_dt;
  const RolloutResult r = rollout(model, v0, ro);
  json meta = base_meta(cfg, "rollout");
  meta["backend"] = "model";
  meta["variable"] = variable;
  meta["arch"] = arch_name(model.arch);
  meta["diverged"] = r.diverged;
  meta["diagnostic"] = r.diagnostic;
  meta["t_end"] = cfg.t_end;
  meta["record_dt"] = cfg.record_dt;
  write_run(cfg.out, r.fields, meta);
  plot_snapshots(cfg.out / "snapshots.svg", r.fields, "learned PDE rollout", variable);
  if (r.diverged) {
    res.warnings.push_back(r.diagnostic);
    res.exit_code = 3;
  }
  res.messages.push_back("wrote " + std::to_string(r.fields.size()) + " records to " + cfg.out.string());
  return res;
}

std::vector<ComparisonRow> compare_runs(const RunData& run, const RunData& reference) {
  if (run.fields.empty() || reference.fields.empty()) throw ConfigError("compare: empty run");
  const DensityField& like = run.fields.front();
  const DensityField& ref0 = reference.fields.front();
  const bool same = same_grid(like, ref0);
  if (!same && ref0.size() <= like.size()) {
    throw ConfigError("compare: grid mismatch (" + std::to_string(like.size()) + " vs " + std::to_string(ref0.size()) +
                      " points); the reference must share the grid or be finer");
  }
  std::vector<ComparisonRow> rows;
  std::size_t j = 0;
  for (const auto& f : run.fields) {
    const double tol = 1e-9 * std::max(1.0, std::abs(f.t));
    while (j < reference.fields.size() && reference.fields[j].t < f.t - tol) ++j;
    if (j >= reference.fields.size()) break;
    if (std::abs(reference.fields[j].t - f.t) > tol) continue;
    const DensityField ref = same ? reference.fields[j] : resample(reference.fields[j], f);
    rows.push_back({f.t, l2_error(f, ref), linf_error(f, ref)});
  }
  if (rows.empty()) throw ConfigError("compare: the runs share no record times");
  return rows;
}

CommandResult cmd_compare(const RunConfig& cfg) {
  CommandResult res;
  if (cfg.compare_run.empty() || cfg.compare_reference.empty()) throw ConfigError("compare needs compare.run and compare.reference");
  const RunData run = load_run(cfg.compare_run);
  RunData ref = load_run(cfg.compare_reference);
  if (run.variable != ref.variable) {
    if (run.variable == "phi" && ref.variable == "rho" && !cfg.phi_map.empty()) {
      ref.fields = map_fields(ref.fields, load_phi_map(cfg.phi_map));
      ref.variable = "phi";
    } else {
      throw ConfigError("compare: runs hold different variables (" + run.variable + " vs " + ref.variable + ")");
    }
  }
  const auto rows = compare_runs(run, ref);
  CsvTable t;
  t.header = {"t", "L2_error", "Linf_error"};
  std::vector<double> ts, l2, li;
  for (const auto& r : rows) {
    t.rows.push_back({r.t, r.l2, r.linf});
    ts.push_back(r.t);
    l2.push_back(r.l2);
    li.push_back(r.linf);
  }
  fs::create_directories(cfg.out);
  write_csv(cfg.out / "report.csv", t);
  write_line_plot(cfg.out / "error.svg", {"error against reference", "t", "error"}, {{"L2", ts, l2, false}, {"Linf", ts, li, false}});
  const double t_last = rows.back().t;
  const auto pick = [&](const RunData& d) {
    for (const auto& f : d.fields) {
      if (std::abs(f.t - t_last) <= 1e-9 * std::max(1.0, t_last)) return f;
    }
    return d.fields.back();
  };
  const DensityField a = pick(run), b = pick(ref);
  std::ostringstream title;
  title << "snapshot at t=" << t_last;
  write_line_plot(cfg.out / "final_snapshot.svg", {title.str(), "x", run.variable},
                  {{"run", a.grid_x, a.values, a.size() <= 256}, {"reference", b.grid_x, b.values, false}});
  std::ostringstream msg;
  msg << "t=" << rows.back().t << " L2=" << rows.back().l2 << " Linf=" << rows.back().linf;
  res.messages.push_back(msg.str());
  write_json(cfg.out / "compare.json", {{"run", cfg.compare_run},
                                        {"reference", cfg.compare_reference},
                                        {"final_t", rows.back().t},
                                        {"final_L2", rows.back().l2},
                                        {"final_Linf", rows.back().linf}});
  return res;
}

CommandResult cmd_report(const RunConfig& cfg) {
  CommandResult res;
  bool any = false;
  if (fs::exists(cfg.out / "fields.csv")) {
    const RunData r = load_run(cfg.out);
    plot_snapshots(cfg.out / "snapshots.svg", r.fields, r.backend + " run", r.variable);
    std::ostringstream msg;
    msg << "fields: " << r.fields.size() << " records on " << r.N << " points, t_end=" << r.fields.back().t;
    res.messages.push_back(msg.str());
    any = true;
  }
  if (fs::exists(cfg.out / "report.csv")) {
    const CsvTable t = read_csv(cfg.out / "report.csv");
    if (t.header != std::vector<std::string>{"t", "L2_error", "Linf_error"}) throw ConfigError("report.csv: unexpected header");
    std::vector<double> ts, l2;
    double worst = 0.0;
    for (const auto& row : t.rows) {
      ts.push_back(row[0]);
      l2.push_back(row[1]);
      worst = std::max(worst, row[1]);
    }
    write_line_plot(cfg.out / "error.svg", {"L2 error", "t", "L2"}, {{"L2", ts, l2, false}});
    if (!t.rows.empty()) {
      std::ostringstream msg;
      msg << "report: final L2=" << t.rows.back()[1] << " Linf=" << t.rows.back()[2] << " max L2=" << worst;
      res.messages.push_back(msg.str());
    }
    any = true;
  }
  if (fs::exists(cfg.out / "loss.csv")) {
    const CsvTable t = read_csv(cfg.out / "loss.csv");
    std::vector<double> ep, tr, va;
    for (const auto& row : t.rows) {
      ep.push_back(row[0]);
      tr.push_back(row[1]);
      va.push_back(row[2]);
    }
    PlotSpec spec{"training loss", "epoch", "MSE"};
    spec.log_y = true;
    write_line_plot(cfg.out / "loss.svg", spec, {{"train", ep, tr, false}, {"val", ep, va, false}});
    res.messages.push_back("loss: " + std::to_string(t.rows.size()) + " epochs");
    any = true;
  }
  if (fs::exists(cfg.out / "residuals.csv")) {
    const CsvTable t = read_csv(cfg.out / "residuals.csv");
    std::ostringstream msg;
    msg << "residuals:";
    for (const auto& row : t.rows) msg << " r_" << row[0] << "=" << row[2];
    res.messages.push_back(msg.str());
    any = true;
  }
  if (!any) throw ConfigError("report: nothing to report in " + cfg.out.string());
  return res;
}

}  // namespace gtpde
