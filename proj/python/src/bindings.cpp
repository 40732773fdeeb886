#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gtpde/common.hpp"
#include "gtpde/distances.hpp"
#include "gtpde/fv_reference.hpp"
#include "gtpde/gap_tooth.hpp"
#include "gtpde/manifold_coords.hpp"
#include "gtpde/pipeline.hpp"

namespace py = pybind11;
using namespace gtpde;

namespace {

Measure1D atoms(const std::vector<double>& x, const std::vector<double>& w) {
  if (x.size() != w.size()) throw ConfigError("positions and weights differ in length");
  Measure1D m;
  m.atom_x = x;
  m.atom_w = w;
  return m;
}

// Snapshots as (times, values[n_snapshots, n_points]).
py::tuple fields_to_arrays(const std::vector<DensityField>& fields) {
  const std::size_t rows = fields.size();
  const std::size_t cols = rows ? fields.front().size() : 0;
  py::array_t<double> t(static_cast<py::ssize_t>(rows));
  py::array_t<double> v({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  auto tm = t.mutable_unchecked<1>();
  auto vm = v.mutable_unchecked<2>();
  for (std::size_t r = 0; r < rows; ++r) {
    tm(static_cast<py::ssize_t>(r)) = fields[r].t;
    for (std::size_t c = 0; c < cols; ++c) vm(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c)) = fields[r].values[c];
  }
  return py::make_tuple(t, v);
}

int run_command(const std::string& command, const std::string& config, std::optional<std::uint64_t> seed,
                const std::string& out, const std::string& metric, const std::string& arch) {
  static const std::map<std::string, CommandResult (*)(const RunConfig&)> commands{
      {"simulate", cmd_simulate}, {"fv", cmd_fv},       {"distances", cmd_distances},
      {"embed", cmd_embed},       {"dataset", cmd_dataset}, {"train", cmd_train},
      {"rollout", cmd_rollout},   {"compare", cmd_compare}, {"report", cmd_report},
  };
  const auto it = commands.find(command);
  if (it == commands.end()) throw ConfigError("unknown command '" + command + "'");
  RunConfig cfg = config.empty() ? RunConfig{} : load_config(config);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out = out;
  if (!metric.empty()) cfg.metric = parse_metric(metric);
  if (!arch.empty()) cfg.arch = parse_arch(arch);
  cfg.validate();
  py::gil_scoped_release release;
  return it->second(cfg).exit_code;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Gap-tooth particle simulation, distribution distances and diffusion-map coordinates";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("fraction_same", &fraction_same, py::arg("alpha"));
  m.def("fraction_down", &fraction_down, py::arg("alpha"));
  m.def("fraction_anti", &fraction_anti, py::arg("alpha"));
  m.def(
      "apportion",
      [](long n_out, double alpha) {
        const Apportionment a = apportion(n_out, alpha);
        return py::dict(py::arg("n_out") = a.n_out, py::arg("n_same") = a.n_same, py::arg("n_down") = a.n_down,
                        py::arg("n_anti") = a.n_anti);
      },
      py::arg("n_out"), py::arg("alpha"), "Integer split of n_out exits into same, down and anti counts.");

  m.def(
      "simulate_gap_tooth",
      [](const std::vector<double>& rho0, double alpha, double nu, double Z, double t_end, double record_dt,
         std::uint64_t seed, std::optional<double> h, int m_order) {
        ToothGrid grid{static_cast<int>(rho0.size()), alpha};
        MicroParams p;
        p.nu = nu;
        p.Z = Z;
        p.m = m_order;
        p.h = h ? *h : suggested_micro_step(grid, nu, record_dt);
        DensityField f = make_field(rho0.size());
        f.values = rho0;
        GapToothOptions o;
        o.t_end = t_end;
        o.record_dt = record_dt;
        GapToothRun run;
        {
          py::gil_scoped_release release;
          run = simulate_gap_tooth(f, grid, p, o, seed);
        }
        return fields_to_arrays(run.fields);
      },
      py::arg("rho0"), py::arg("alpha") = 0.1, py::arg("nu") = 0.05, py::arg("Z") = 1e4, py::arg("t_end") = 1.0,
      py::arg("record_dt") = 0.01, py::arg("seed") = 0, py::arg("h") = py::none(), py::arg("m") = 50,
      "Gap-tooth run from densities at the tooth centers; returns (times, densities).");

  m.def(
      "fv_solve",
      [](const std::vector<double>& cell_averages, double nu, double t_end, double record_dt, double cfl) {
        FvConfig c;
        c.n_cells = cell_averages.size();
        c.nu = nu;
        c.t_end = t_end;
        c.record_dt = record_dt;
        c.cfl = cfl;
        DensityField f = make_field(cell_averages.size());
        f.values = cell_averages;
        std::vector<DensityField> fields;
        {
          py::gil_scoped_release release;
          fields = fv_solve(f, c);
        }
        return fields_to_arrays(fields);
      },
      py::arg("cell_averages"), py::arg("nu") = 0.05, py::arg("t_end") = 1.0, py::arg("record_dt") = 0.01,
      py::arg("cfl") = 0.4, "Viscous Burgers by WENO5 finite volumes; returns (times, cell averages).");

  m.def(
      "uw1_distance",
      [](const std::vector<double>& x1, const std::vector<double>& w1, const std::vector<double>& x2,
         const std::vector<double>& w2, double beta) { return uw1_distance(atoms(x1, w1), atoms(x2, w2), beta); },
      py::arg("x1"), py::arg("w1"), py::arg("x2"), py::arg("w2"), py::arg("beta") = 1.0,
      "Unnormalized 1-Wasserstein distance between two atomic measures on [0, 1].");
  m.def(
      "truncated_moments",
      [](const std::vector<double>& x, const std::vector<double>& w, int K) { return truncated_moments(atoms(x, w), K); },
      py::arg("x"), py::arg("w"), py::arg("K") = 5);
  m.def(
      "unbalanced_ot",
      [](const std::vector<double>& a, const std::vector<double>& b, double lambda_kl, double eps_entropy,
         double cost_exponent) {
        if (a.size() != b.size()) throw ConfigError("bin vectors differ in length");
        const UnbalancedOtResult r = unbalanced_ot(a, b, bin_cost(a.size(), cost_exponent), lambda_kl, eps_entropy);
        return py::make_tuple(r.value, r.converged);
      },
      py::arg("a"), py::arg("b"), py::arg("lambda_kl") = 1.0, py::arg("eps_entropy") = 1e-2,
      py::arg("cost_exponent") = 2.0, "Entropic unbalanced OT between binned masses; returns (value, converged).");

  m.def(
      "diffusion_embedding",
      [](const Eigen::MatrixXd& distances, std::optional<double> epsilon, int n_eig, const std::vector<double>& sign_reference) {
        const EmbeddingResult e = diffusion_embedding(build_kernel(distances, epsilon), n_eig, sign_reference);
        return py::make_tuple(e.eigenvalues, e.eigenvectors, e.epsilon);
      },
      py::arg("distances"), py::arg("epsilon") = py::none(), py::arg("n_eig") = 8,
      py::arg("sign_reference") = std::vector<double>{},
      "Diffusion maps of a distance matrix; returns (eigenvalues, eigenvectors as columns, epsilon).");
  m.def(
      "independence_residuals",
      [](const Eigen::MatrixXd& phis, int n_keep, double bandwidth_scale) {
        return independence_residuals(phis, n_keep, bandwidth_scale);
      },
      py::arg("phis"), py::arg("n_keep"), py::arg("bandwidth_scale") = 1.0 / 3.0);
  m.def(
      "spearman", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman(x, y); },
      py::arg("x"), py::arg("y"));

  m.def("run", &run_command, py::arg("command"), py::arg("config") = "", py::arg("seed") = py::none(),
        py::arg("out") = "", py::arg("metric") = "", py::arg("arch") = "",
        "Runs one pipeline command as the command-line tool does; returns its exit code.");
}
