#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <random>

#include "gtpde/common.hpp"
#include "gtpde/io.hpp"
#include "gtpde/pipeline.hpp"
#include "gtpde/svg.hpp"

using namespace gtpde;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gtpde_unit_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig small_config(const fs::path& out) {
  RunConfig c = parse_config(R"({"schema_version":1,"seed":5,"micro":{"Z":3000},
    "gap_tooth":{"N":16},"time":{"t_end":0.05,"record_dt":0.01},"fv":{"n_cells":128}})");
  c.out = out;
  return c;
}

#ifdef GTPDE_CLI_PATH
int cli(const std::string& args) {
  const std::string cmd = std::string(GTPDE_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}
#endif

}  // namespace

TEST_SUITE("pipeline_cli") {
  TEST_CASE("doubles print with 17 significant digits and parse back exactly") {
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int i = 0; i < 1000; ++i) {
      const double v = u(g) * std::pow(10.0, static_cast<int>(g() % 40) - 20);
      CHECK(parse_double(format_double(v), "t") == v);
    }
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(std::isnan(parse_double("", "t")));
    CHECK_THROWS_AS(parse_double("1.5x", "t"), ConfigError);
  }

  TEST_CASE("CSV files round-trip bit for bit") {
    const auto dir = scratch("csv");
    std::vector<DensityField> fields;
    for (int k = 0; k < 3; ++k) {
      DensityField f = make_field(5, 0.1 * k);
      for (std::size_t i = 0; i < 5; ++i) f.values[i] = std::sin(f.grid_x[i] + k) / 3.0;
      fields.push_back(f);
    }
    write_grid_csv(dir / "grid.csv", fields[0].grid_x);
    write_fields_csv(dir / "fields.csv", fields);
    const auto grid = read_grid_csv(dir / "grid.csv");
    CHECK(grid == fields[0].grid_x);
    const auto back = read_fields_csv(dir / "fields.csv", grid);
    REQUIRE(back.size() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(back[static_cast<std::size_t>(k)].values == fields[static_cast<std::size_t>(k)].values);
      CHECK(back[static_cast<std::size_t>(k)].t == fields[static_cast<std::size_t>(k)].t);
    }
    CHECK(read_text(dir / "fields.csv").rfind("t,v_0,v_1,v_2,v_3,v_4\n", 0) == 0);
    CHECK(read_text(dir / "grid.csv").rfind("x\n", 0) == 0);

    ToothGrid tg{3, 0.2};
    ParticleEnsemble e;
    e.bounds = tg.teeth();
    e.groups = {{e.bounds[0].lo + 1e-3}, {}, {e.bounds[2].center(), e.bounds[2].hi}};
    write_particles_csv(dir / "particles_0.csv", e);
    CHECK(read_text(dir / "particles_0.csv").rfind("tooth,position\n", 0) == 0);
    const auto pe = read_particles_csv(dir / "particles_0.csv", tg);
    CHECK(pe.groups == e.groups);

    Eigen::MatrixXd m(2, 2);
    m << 0.0, 1.0 / 3.0, 1.0 / 3.0, 0.0;
    write_matrix_csv(dir / "m.csv", m);
    CHECK(read_matrix_csv(dir / "m.csv") == m);
  }

  TEST_CASE("config parsing is strict") {
    CHECK_THROWS_AS(parse_config("{}"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":2})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"extra":0})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"micro":{"zz":1}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"micro":{"Z":"many"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"gap_tooth":{"alpha":1.5}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"fv":{"n_cells":8}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"train":{"lr":0}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"schema_version":1,"distances":{"metric":"l2"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config("not json"), ConfigError);
    const RunConfig c = parse_config(R"({"schema_version":1,"seed":9,"distances":{"metric":"uot"},"train":{"arch":"G"}})");
    CHECK(c.seed == 9);
    CHECK(c.metric == Metric::kUnbalancedOt);
    CHECK(c.arch == Arch::kG);
  }

  TEST_CASE("config serialization round-trips") {
    RunConfig c = parse_config(R"({"schema_version":1,"seed":4,"micro":{"h":0.0001},"embedding":{"epsilon":0.5},
      "training_runs":{"n_traj":3,"splits":["train","val","test"]}})");
    const RunConfig back = parse_config(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    CHECK(back.micro.h == 1e-4);
    CHECK_FALSE(back.auto_micro_step);
    CHECK(*back.epsilon == 0.5);
  }

  TEST_CASE("simulate, distances, embed and compare compose") {
    const auto dir = scratch("flow");
    RunConfig c = small_config(dir / "gt");
    cmd_simulate(c);
    for (const char* f : {"meta.json", "grid.csv", "fields.csv", "particles_0.csv", "particles_1.csv"}) {
      CHECK(fs::exists(c.out / f));
    }
    CHECK(cmd_distances(c).exit_code == 0);
    CHECK(cmd_embed(c).exit_code == 0);
    CHECK(fs::exists(c.out / "embedding.csv"));
    CHECK(fs::exists(c.out / "residuals.csv"));
    const CsvTable emb = read_csv(c.out / "embedding.csv");
    CHECK(emb.header[0] == "tooth");
    CHECK(emb.column("phi_1") >= 0);
    CHECK(emb.rows.size() == 16);

    RunConfig f = c;
    f.out = dir / "fv";
    cmd_fv(f);
    const RunData gt = load_run(c.out);
    const RunData fv = load_run(f.out);
    CHECK(gt.N == 16);
    CHECK(fv.N == 128);
    const auto rows = compare_runs(gt, fv);
    CHECK(rows.size() == 6);
    CHECK(rows.front().l2 < 0.05);
    CHECK_THROWS_AS(compare_runs(fv, gt), ConfigError);

    RunConfig cmp = c;
    cmp.out = dir / "cmp";
    cmp.compare_run = c.out.string();
    cmp.compare_reference = f.out.string();
    cmd_compare(cmp);
    const CsvTable rep = read_csv(cmp.out / "report.csv");
    CHECK(rep.header == std::vector<std::string>{"t", "L2_error", "Linf_error"});
    CHECK(cmd_report(cmp).messages.size() == 1);
  }

  TEST_CASE("artifacts are byte-for-byte reproducible from config and seed") {
    const auto dir = scratch("repro");
    RunConfig a = small_config(dir / "a");
    RunConfig b = small_config(dir / "b");
    cmd_simulate(a);
    cmd_simulate(b);
    for (const char* f : {"fields.csv", "particles_1.csv"}) CHECK(read_text(a.out / f) == read_text(b.out / f));
    b.seed = 6;
    b.out = dir / "c";
    cmd_simulate(b);
    CHECK(read_text(a.out / "fields.csv") != read_text(b.out / "fields.csv"));
  }

  TEST_CASE("svg plots are well formed") {
    const std::string svg = line_plot_svg({"t", "x", "y", true}, {{"a", {1, 2, 3}, {1, 10, 100}, false}});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
  }

#ifdef GTPDE_CLI_PATH
  TEST_CASE("command-line exit codes") {
    const auto dir = scratch("cli");
    write_text(dir / "bad.json", R"({"schema_version":1,"nope":1})");
    write_text(dir / "ok.json", R"({"schema_version":1,"backend":"fv","fv":{"n_cells":32},"time":{"t_end":0.02,"record_dt":0.01}})");
    CHECK(cli("simulate --config " + (dir / "bad.json").string()) == 2);
    CHECK(cli("simulate --metric nope") == 2);
    CHECK(cli("frobnicate") == 2);
    CHECK(cli("embed --out " + (dir / "missing").string()) == 2);
    CHECK(cli("simulate --config " + (dir / "ok.json").string() + " --seed 3 --out " + (dir / "run").string()) == 0);
    CHECK(fs::exists(dir / "run" / "fields.csv"));
  }
#endif
}
