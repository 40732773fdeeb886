#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gtpde/common.hpp"
#include "gtpde/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string metric;
  std::string arch;
};

gtpde::RunConfig resolve(const Flags& f) {
  gtpde::RunConfig cfg = f.config.empty() ? gtpde::RunConfig{} : gtpde::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.out = f.out;
  if (!f.metric.empty()) cfg.metric = gtpde::parse_metric(f.metric);
  if (!f.arch.empty()) cfg.arch = gtpde::parse_arch(f.arch);
  cfg.validate();
  return cfg;
}

int run(const std::function<gtpde::CommandResult(const gtpde::RunConfig&)>& cmd, const Flags& flags) {
  try {
    const gtpde::CommandResult r = cmd(resolve(flags));
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& m : r.messages) std::cout << m << "\n";
    return r.exit_code;
  } catch (const gtpde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const gtpde::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gap-tooth particle simulation, diffusion-map coordinates and learned PDEs"};
  app.require_subcommand(1);

  const std::map<std::string, std::function<gtpde::CommandResult(const gtpde::RunConfig&)>> commands{
      {"simulate", gtpde::cmd_simulate}, {"fv", gtpde::cmd_fv},         {"distances", gtpde::cmd_distances},
      {"embed", gtpde::cmd_embed},       {"dataset", gtpde::cmd_dataset}, {"train", gtpde::cmd_train},
      {"rollout", gtpde::cmd_rollout},   {"compare", gtpde::cmd_compare}, {"report", gtpde::cmd_report},
  };
  const std::map<std::string, std::string> help{
      {"simulate", "run the gap-tooth, full-domain or FV simulator"},
      {"fv", "run the finite-volume reference solver"},
      {"distances", "pairwise tooth distances for a particle snapshot"},
      {"embed", "diffusion-map embedding and independence residuals"},
      {"dataset", "generate training trajectories"},
      {"train", "fit a PDE model to trajectories"},
      {"rollout", "integrate a trained model forward in time"},
      {"compare", "error of a run against a reference"},
      {"report", "summaries and plots for a run directory"},
  };

  Flags flags;
  std::string chosen;
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", flags.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "master seed");
    sub->add_option("--out", flags.out, "output directory");
    sub->add_option("--metric", flags.metric, "distance metric")->check(CLI::IsMember({"uw1", "moments", "uot"}));
    sub->add_option("--arch", flags.arch, "model architecture")->check(CLI::IsMember({"F", "G"}));
    sub->callback([&chosen, name = name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return run(commands.at(chosen), flags);
}
