#include "sparc/commands.hpp"
#include "sparc/config.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

struct Flags {
  std::string config;
  std::string out = "sparc_out";
  std::uint64_t seed = 0;
  int jobs = 1;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file (defaults when omitted)");
  cmd->add_option("--out", f.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", f.seed, "noise seed, overrides plant.seed");
  cmd->add_option("--jobs", f.jobs, "worker threads for independent trials")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planar spine model: impedance control experiments in simulation"};
  app.require_subcommand(1);
  Flags flags;

  auto* st = app.add_subcommand("static-sweep", "push-pull stiffness sweep over k_x");
  auto* rl = app.add_subcommand("release", "displace-and-release grid over (k, b)");
  auto* pd = app.add_subcommand("pd-sweep", "PD baseline force vs displacement grid");
  auto* va = app.add_subcommand("validate", "dynamics, controller and analysis invariants");
  for (auto* cmd : {st, rl, pd, va}) add_common(cmd, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sparc::kExitUsage;
  }

  sparc::CommandOptions options;
  options.config_path = flags.config;
  options.out_dir = flags.out;
  options.jobs = flags.jobs;
  auto* sub = app.get_subcommands().front();
  if (sub->count("--seed") > 0) options.seed = flags.seed;

  try {
    const sparc::ExperimentConfig config =
        flags.config.empty() ? sparc::ExperimentConfig{} : sparc::load_config(flags.config);
    sparc::CommandResult result;
    if (sub == st) {
      result = sparc::cmd_static_sweep(config, options);
    } else if (sub == rl) {
      result = sparc::cmd_release(config, options);
    } else if (sub == pd) {
      result = sparc::cmd_pd_sweep(config, options);
    } else {
      sparc::ValidationOptions v;
      v.model = config.model;
      if (options.seed) v.seed = *options.seed;
      if (sub->count("--out") == 0) options.out_dir.clear();
      result = sparc::cmd_validate(v, options);
    }
    std::cout << result.report;
    if (result.manifest) {
      const auto path = std::filesystem::path(result.manifest->out_dir) / "manifest.json";
      std::cout << "manifest: " << path.string() << "\n";
    }
    return result.exit_code;
  } catch (const sparc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return sparc::kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "filesystem error: " << e.what() << "\n";
    return sparc::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sparc::kExitInvalid;
  }
}
