#pragma once

#include "sparc/model.hpp"
#include "sparc/sim.hpp"

#include <span>
#include <string>
#include <vector>

namespace sparc {

// OLS stiffness estimate in the layout of a static characterization table.
struct StiffnessFit {
  std::size_t n = 0;
  double k_commanded = 0.0;
  double slope = 0.0;      // N/m
  double intercept = 0.0;  // N
  double r2 = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  bool ci_finite = true;  // false when n == 2 (no residual dof)
  double rel_err_pct = 0.0;
  std::size_t chunk_count = 0;
  double chunk_mean = 0.0;
  double chunk_sd = 0.0;
  double chunk_min = 0.0;
  double chunk_max = 0.0;
};

// Least-squares line F = slope * x + intercept with a two-sided 95% analytic
// confidence interval on the slope (Student t, n - 2 dof). Chunk statistics
// are the mean and sample SD of per-window slopes over contiguous windows of
// chunk_size pairs. Throws DegenerateFitError when all x are identical.
StiffnessFit ols_fit(std::span<const ForcePair> pairs, double k_commanded,
                     std::size_t chunk_size = 200);

enum class DampingRegime { kUnderdamped, kCriticallyDamped, kOverdamped };
std::string to_string(DampingRegime regime);

// Free response of m x'' + b x' + k x = 0 with x(0) = x0, x'(0) = 0.
struct MsdReference {
  double m_eff = 1.0;
  double k = 1.0;
  double b = 0.0;
  double x0 = 0.0;
  DampingRegime regime = DampingRegime::kUnderdamped;
  double dt = 1e-3;
  std::vector<double> t;
  std::vector<double> x;

  double position(double time) const;
  double velocity(double time) const;
  double acceleration(double time) const;
};

MsdReference msd_reference(double m_eff, double k, double b, double x0, double duration,
                           double dt);

// Lambda_xx at the given configuration; the default m_eff for MsdReference.
double effective_mass(const ChainModel& model, const Vec4& q_eq, double lambda_dls);

struct Peak {
  double t = 0.0;
  double value = 0.0;  // signed displacement at the extremum
};

// Local extrema of a sampled signal, found from sign changes of the first
// difference and refined by a parabola through the three samples around
// each. Extrema with |value| <= threshold are ignored.
std::vector<Peak> find_peaks(std::span<const double> t, std::span<const double> y,
                             double threshold);

// Interpolated zero crossings. A crossing is only counted once the signal
// has moved beyond +/-hysteresis on the new side.
std::vector<double> zero_crossings(std::span<const double> t, std::span<const double> y,
                                   double hysteresis);

struct ResponseMetrics {
  double nrmse = 0.0;  // RMS error normalized by |x0|
  std::vector<double> peak_times;
  std::vector<double> peak_amplitudes;  // |displacement| at each extremum
  std::vector<double> peak_values;      // signed displacement at each extremum
  std::vector<double> reference_peak_times;
  std::vector<double> zero_crossing_phase_lag;  // t_measured - t_reference, s
  double settling_time = 0.0;                   // last time |x| > 2% |x0|
  // First overshoot (extremum on the opposite side of zero from x0).
  bool has_first_peak = false;
  double first_peak_time = 0.0;
  bool reference_has_first_peak = false;
  double reference_first_peak_time = 0.0;
};

// Compare a measured displacement series against the reference evaluated on
// the same time grid.
ResponseMetrics compare_response(std::span<const double> t,
                                 std::span<const double> displacement,
                                 const MsdReference& reference);

// Uses x - x_d from the record (x_d taken from meta.params["x_d"]).
ResponseMetrics compare_response(const TrialRecord& measured, const MsdReference& reference);

// Amplitudes of the extrema on one side of zero (side > 0: maxima above zero,
// side < 0: minima below zero), in time order.
std::vector<double> side_peak_amplitudes(const ResponseMetrics& metrics, int side);

// Length of the longest run of strictly increasing consecutive values.
std::size_t longest_increasing_run(std::span<const double> values);

// Helpers shared with the simulator and CLI.
std::vector<double> displacement_series(const TrialRecord& record);
std::vector<double> time_series(const TrialRecord& record);

// Student t quantile, exposed for tests.
double student_t_quantile(double p, double dof);

}  // namespace sparc
