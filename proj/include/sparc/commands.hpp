#pragma once

#include "sparc/config.hpp"
#include "sparc/validate.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sparc {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitUsage = 2 };

// Written last into the output directory; its presence marks a completed run.
struct RunManifest {
  std::string command;
  std::string config_path;  // empty when defaults were used
  std::uint64_t seed = 0;
  std::string out_dir;
  std::vector<std::string> files;  // relative to out_dir
  std::string summary_file;        // relative to out_dir
  std::map<std::string, double> timings_s;
};

std::string manifest_json(const RunManifest& manifest);

struct CommandOptions {
  std::string config_path;
  std::string out_dir = "sparc_out";
  std::optional<std::uint64_t> seed;  // overrides plant.seed
  int jobs = 1;
};

struct CommandResult {
  int exit_code = kExitOk;
  std::optional<RunManifest> manifest;
  std::string report;  // human-readable, printed by the CLI
};

// Each command writes its files under options.out_dir and, on success, the
// manifest as the last file. Throws ConfigError for bad configuration and
// std::filesystem::filesystem_error when the directory is unusable.
CommandResult cmd_static_sweep(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_release(ExperimentConfig config, const CommandOptions& options);
CommandResult cmd_pd_sweep(ExperimentConfig config, const CommandOptions& options);

// out_dir may be empty, in which case only the report is produced.
CommandResult cmd_validate(const ValidationOptions& validation, const CommandOptions& options);

}  // namespace sparc
