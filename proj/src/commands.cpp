#include "sparc/commands.hpp"

#include "sparc/analysis.hpp"
#include "sparc/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>

namespace sparc {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects output files for one command; everything goes through here so the
// manifest lists exactly what was written.
class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : root_(dir) {
    fs::create_directories(root_);
    const fs::path probe = root_ / ".sparc_write_probe";
    write_text_file(probe.string(), "");
    fs::remove(probe);
  }

  void write(const std::string& rel, const std::string& text) {
    write_text_file((root_ / rel).string(), text);
    files_.push_back(rel);
  }

  void write_trial(const std::string& subdir, const std::string& stem, const TrialRecord& rec) {
    write(subdir + "/" + stem + ".csv", trial_csv(rec));
    write(subdir + "/" + stem + ".json", trial_metadata_json(rec));
  }

  // Manifest goes to a temporary name first and is renamed into place.
  void finish(RunManifest& manifest) {
    manifest.out_dir = root_.string();
    manifest.files = files_;
    const fs::path tmp = root_ / "manifest.json.tmp";
    write_text_file(tmp.string(), manifest_json(manifest));
    fs::rename(tmp, root_ / "manifest.json");
  }

 private:
  fs::path root_;
  std::vector<std::string> files_;
};

RunManifest start_manifest(const std::string& command, const ExperimentConfig& config,
                           const CommandOptions& options) {
  RunManifest m;
  m.command = command;
  m.config_path = options.config_path;
  m.seed = config.plant.noise_seed;
  return m;
}

void apply_options(ExperimentConfig& config, const CommandOptions& options) {
  if (options.seed) config.plant.noise_seed = *options.seed;
  if (options.jobs < 1) throw ConfigError("--jobs must be >= 1");
  ensure_valid(check(config));
}

}  // namespace

std::string manifest_json(const RunManifest& m) {
  nlohmann::json root;
  root["command"] = m.command;
  root["config_path"] = m.config_path;
  root["seed"] = m.seed;
  root["out_dir"] = m.out_dir;
  root["files"] = m.files;
  root["summary_file"] = m.summary_file;
  nlohmann::json timings = nlohmann::json::object();
  for (const auto& [k, v] : m.timings_s) timings[k] = v;
  root["timings_s"] = timings;
  return root.dump(2) + "\n";
}

CommandResult cmd_static_sweep(ExperimentConfig config, const CommandOptions& options) {
  apply_options(config, options);
  OutputDir out(options.out_dir);
  RunManifest manifest = start_manifest("static-sweep", config, options);
  const auto t_all = Clock::now();

  CommandResult result;
  std::vector<StiffnessFit> fits;
  const auto est = config.static_friction_estimate();
  for (const double k : config.static_sweep.k_x) {
    const auto t0 = Clock::now();
    StaticProtocol protocol = config.static_sweep.protocol;
    protocol.k_x = k;
    const TrialRecord rec = run_static_pushpull(config.model, config.gains, est, config.plant,
                                                protocol);
    out.write_trial("static",
                    trial_stem("static", k, config.gains.d.x(), config.plant.noise_seed), rec);
    manifest.timings_s[fmt::format("static_k{}", k)] = seconds_since(t0);
    if (rec.meta.invalid || rec.meta.degenerate) {
      result.exit_code = kExitInvalid;
      result.report += fmt::format("k_x = {} N/m: trial {}: {}\n", k,
                                   rec.meta.invalid ? "invalid" : "degenerate", rec.meta.note);
      return result;
    }
    try {
      fits.push_back(ols_fit(static_fit_pairs(rec, protocol), k, config.static_sweep.chunk_size));
    } catch (const DegenerateFitError& e) {
      result.exit_code = kExitInvalid;
      result.report += fmt::format("k_x = {} N/m: {}\n", k, e.what());
      return result;
    }
  }
  out.write("static_summary.csv", stiffness_summary_csv(fits));
  const std::string table = stiffness_summary_table(fits);
  out.write("static_summary.txt", table);
  manifest.summary_file = "static_summary.csv";
  manifest.timings_s["total"] = seconds_since(t_all);
  out.finish(manifest);
  result.report = table;
  result.manifest = manifest;
  return result;
}

CommandResult cmd_release(ExperimentConfig config, const CommandOptions& options) {
  apply_options(config, options);
  OutputDir out(options.out_dir);
  RunManifest manifest = start_manifest("release", config, options);
  const auto t_all = Clock::now();

  const auto est = config.release_friction_estimate();
  const Vec4 q_eq = equilibrium_configuration(config.model, bench_equilibrium());
  const double m_eff = effective_mass(config.model, q_eq, config.gains.lambda_dls);

  std::vector<ReleaseCellSummary> cells;
  std::string report;
  for (const double k : config.release.k_x) {
    for (const double b : config.release.d_x) {
      const auto t0 = Clock::now();
      ReleaseProtocol protocol = config.release.protocol;
      protocol.k_x = k;
      protocol.d_x = b;
      const ReleaseResult res =
          run_release(config.model, config.gains, est, config.plant, protocol, options.jobs);
      for (const auto& rec : res.trials) {
        out.write_trial("release", trial_stem("release", k, b, rec.meta.seed), rec);
      }
      const MsdReference ref = msd_reference(m_eff, k, b, res.initial_displacement,
                                             protocol.duration, config.plant.control_dt);
      out.write(fmt::format("release/{}_cell.csv", trial_stem("release", k, b,
                                                             config.plant.noise_seed)),
                release_cell_csv(res, ref));
      const ResponseMetrics met = compare_response(res.t, res.mean_displacement, ref);

      ReleaseCellSummary cell;
      cell.k = k;
      cell.b = b;
      cell.n_trials = protocol.n_trials;
      cell.m_eff = m_eff;
      cell.nrmse = met.nrmse;
      cell.has_first_peak = met.has_first_peak;
      cell.first_peak_time = met.first_peak_time;
      cell.reference_has_first_peak = met.reference_has_first_peak;
      cell.reference_first_peak_time = met.reference_first_peak_time;
      cell.final_phase_lag =
          met.zero_crossing_phase_lag.empty() ? 0.0 : met.zero_crossing_phase_lag.back();
      cell.divergent = res.divergent;
      cells.push_back(cell);
      manifest.timings_s[fmt::format("release_k{}_b{}", k, b)] = seconds_since(t0);
      report += fmt::format("k = {:>4} b = {:>3}  nrmse {:8.4f}  first peak {:>8}  ref {:>8}{}\n",
                            k, b, met.nrmse,
                            met.has_first_peak ? fmt::format("{:.3f} s", met.first_peak_time)
                                               : std::string("none"),
                            met.reference_has_first_peak
                                ? fmt::format("{:.3f} s", met.reference_first_peak_time)
                                : std::string("none"),
                            res.divergent ? "  DIVERGENT" : "");
    }
  }
  out.write("release_summary.csv", release_summary_csv(cells));
  manifest.summary_file = "release_summary.csv";
  manifest.timings_s["total"] = seconds_since(t_all);
  out.finish(manifest);

  CommandResult result;
  result.report = report;
  result.manifest = manifest;
  return result;
}

CommandResult cmd_pd_sweep(ExperimentConfig config, const CommandOptions& options) {
  apply_options(config, options);
  OutputDir out(options.out_dir);
  RunManifest manifest = start_manifest("pd-sweep", config, options);
  const auto t_all = Clock::now();

  const PdProtocol& protocol = config.pd.protocol;
  const PdSweepResult res =
      run_pd_sweep(config.model, config.gains, config.plant, protocol, options.jobs);
  for (const auto& rec : res.trials) {
    const std::string stem = trial_stem("pd", rec.meta.params.at("k_x"), config.gains.d.x(),
                                        rec.meta.seed);
    out.write_trial("pd", stem, rec);
  }
  out.write("pd_grid.csv", pd_grid_csv(res));

  // Monotonicity in k_x at each displacement, plus convergence bookkeeping.
  std::string report;
  std::size_t converged = 0;
  const std::size_t n_disp = protocol.displacements.size();
  for (const auto& p : res.points) {
    if (p.converged) ++converged;
    else report += fmt::format("flagged: k_x = {} displacement = {} (no hold force)\n", p.k_x, p.displacement);
  }
  for (std::size_t j = 0; j < n_disp; ++j) {
    bool monotone = true;
    for (std::size_t i = 1; i < protocol.k_x.size(); ++i) {
      const auto& a = res.points[(i - 1) * n_disp + j];
      const auto& b = res.points[i * n_disp + j];
      if (a.converged && b.converged && (protocol.k_x[i] > protocol.k_x[i - 1]) &&
          !(b.force_mean > a.force_mean)) {
        monotone = false;
      }
    }
    report += fmt::format("displacement {:.4f} m: force {} in k_x\n",
                          protocol.displacements[j],
                          monotone ? "increasing" : "NOT increasing");
  }
  out.write("pd_monotonicity.txt", report);
  manifest.summary_file = "pd_grid.csv";
  manifest.timings_s["total"] = seconds_since(t_all);

  CommandResult result;
  result.report = report;
  const double fraction =
      res.points.empty() ? 0.0 : static_cast<double>(converged) / res.points.size();
  if (fraction < 0.9) {
    result.exit_code = kExitInvalid;
    result.report += fmt::format("only {:.0f}% of grid points converged\n", 100.0 * fraction);
    return result;
  }
  out.finish(manifest);
  result.manifest = manifest;
  return result;
}

CommandResult cmd_validate(const ValidationOptions& validation, const CommandOptions& options) {
  const auto t0 = Clock::now();
  const ValidationReport report = run_validation(validation);
  CommandResult result;
  result.report = report.table();
  result.exit_code = report.all_pass() ? kExitOk : kExitInvalid;
  if (options.out_dir.empty()) return result;

  OutputDir out(options.out_dir);
  out.write("validation.txt", result.report);
  if (result.exit_code != kExitOk) return result;
  RunManifest manifest;
  manifest.command = "validate";
  manifest.config_path = options.config_path;
  manifest.seed = validation.seed;
  manifest.summary_file = "validation.txt";
  manifest.timings_s["total"] = seconds_since(t0);
  manifest.timings_s["rnea_mean_us"] = report.timing.rnea_mean_us;
  out.finish(manifest);
  result.manifest = manifest;
  return result;
}

}  // namespace sparc
