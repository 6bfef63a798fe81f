#pragma once

#include "sparc/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sparc {

struct PropertyResult {
  std::string group;  // dynamics, control, analysis, model
  std::string name;
  bool pass = false;
  double worst = 0.0;      // largest observed error (or the measured value)
  double tolerance = 0.0;
  std::string detail;
};

struct TimingResult {
  double rnea_mean_us = 0.0;
  double extract_terms_mean_us = 0.0;
  long evaluations = 0;
  static constexpr double kEmbeddedRneaUs = 17.0;  // embedded controller figure
  static constexpr double kHostBudgetUs = 5.0;
};

struct ValidationReport {
  std::vector<PropertyResult> properties;
  TimingResult timing;

  bool all_pass() const;
  const PropertyResult* find(const std::string& name) const;
  std::string table() const;
};

struct ValidationOptions {
  ChainModel model = default_sparc_model();
  std::uint64_t seed = 1;
  int timing_evaluations = 200000;  // 0 skips timing
};

// Runs the invariant suite. The model is a parameter so that a corrupted
// model (for example a negative link mass) can be fed in to check that the
// failure is reported by name.
ValidationReport run_validation(const ValidationOptions& options = {});

// Mean wall time of one rnea() call over n random states, in microseconds.
double time_rnea_us(const ChainModel& model, int n, std::uint64_t seed);

}  // namespace sparc
