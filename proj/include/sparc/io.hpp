#pragma once

#include "sparc/analysis.hpp"
#include "sparc/sim.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparc {

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

// File stem encoding protocol, stiffness, damping and seed, e.g.
// "release_k300_b20_seed42". Non-integer values keep their decimals with
// '.' replaced by 'p'.
std::string trial_stem(const std::string& protocol, double k, double b, std::uint64_t seed);

// One row per control tick. Units are part of the column names.
std::string trial_csv_header();
std::string trial_csv(const TrialRecord& record);

// Sidecar JSON with everything needed to rerun the trial.
std::string trial_metadata_json(const TrialRecord& record);

// Static sweep summary with the columns of a stiffness characterization
// table: k_d, n, k_hat, R^2, CI, relative error, chunk mean and SD.
std::string stiffness_summary_csv(const std::vector<StiffnessFit>& fits);
std::string stiffness_summary_table(const std::vector<StiffnessFit>& fits);

// Mean and SD release response with the reference overlay.
std::string release_cell_csv(const ReleaseResult& result, const MsdReference& reference);

struct ReleaseCellSummary {
  double k = 0.0;
  double b = 0.0;
  int n_trials = 0;
  double m_eff = 0.0;
  double nrmse = 0.0;
  double first_peak_time = 0.0;
  double reference_first_peak_time = 0.0;
  bool has_first_peak = false;
  bool reference_has_first_peak = false;
  double final_phase_lag = 0.0;
  bool divergent = false;
};
std::string release_summary_csv(const std::vector<ReleaseCellSummary>& cells);

std::string pd_grid_csv(const PdSweepResult& result);

// Writes text to path, creating parent directories. Throws
// std::filesystem::filesystem_error on failure.
void write_text_file(const std::string& path, const std::string& text);

// FNV-1a 64-bit hash of a byte string, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace sparc
