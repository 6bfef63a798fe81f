#include "sparc/analysis.hpp"

#include "sparc/dynamics.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace sparc {

namespace {

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
  double sxx = 0.0;
  double ssr = 0.0;
  double sst = 0.0;
};

// Centered two-pass formulation; returns nullopt-like sxx == 0 for
// degenerate input.
Line fit_line(std::span<const ForcePair> pairs) {
  const double n = static_cast<double>(pairs.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pairs) {
    mx += p.x;
    my += p.f;
  }
  mx /= n;
  my /= n;
  Line line;
  const auto [lo, hi] = std::minmax_element(
      pairs.begin(), pairs.end(), [](const ForcePair& a, const ForcePair& b) { return a.x < b.x; });
  if (lo->x == hi->x) return line;
  double sxy = 0.0;
  for (const auto& p : pairs) {
    line.sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.f - my);
    line.sst += (p.f - my) * (p.f - my);
  }
  if (line.sxx <= 0.0) return line;
  line.slope = sxy / line.sxx;
  line.intercept = my - line.slope * mx;
  for (const auto& p : pairs) {
    const double r = p.f - (line.intercept + line.slope * p.x);
    line.ssr += r * r;
  }
  return line;
}

}  // namespace

double student_t_quantile(const double p, const double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, p);
}

StiffnessFit ols_fit(std::span<const ForcePair> pairs, const double k_commanded,
                     const std::size_t chunk_size) {
  if (pairs.size() < 2) throw DegenerateFitError("ols_fit: need at least two pairs");
  if (chunk_size < 2) throw DegenerateFitError("ols_fit: chunk_size must be >= 2");

  const Line line = fit_line(pairs);
  if (line.sxx <= 0.0) throw DegenerateFitError("ols_fit: all x values are identical");

  StiffnessFit fit;
  fit.n = pairs.size();
  fit.k_commanded = k_commanded;
  fit.slope = line.slope;
  fit.intercept = line.intercept;
  fit.r2 = line.sst > 0.0 ? std::clamp(1.0 - line.ssr / line.sst, 0.0, 1.0) : 1.0;

  if (fit.n > 2) {
    const double dof = static_cast<double>(fit.n - 2);
    const double se = std::sqrt(line.ssr / dof / line.sxx);
    const double half = student_t_quantile(0.975, dof) * se;
    fit.ci95_lo = fit.slope - half;
    fit.ci95_hi = fit.slope + half;
  } else {
    fit.ci_finite = false;
    fit.ci95_lo = -std::numeric_limits<double>::infinity();
    fit.ci95_hi = std::numeric_limits<double>::infinity();
  }
  if (k_commanded != 0.0) {
    fit.rel_err_pct = 100.0 * std::abs(fit.slope - k_commanded) / std::abs(k_commanded);
  }

  std::vector<double> slopes;
  for (std::size_t start = 0; start + chunk_size <= pairs.size(); start += chunk_size) {
    const Line c = fit_line(pairs.subspan(start, chunk_size));
    if (c.sxx > 0.0) slopes.push_back(c.slope);
  }
  if (slopes.empty()) slopes.push_back(fit.slope);
  fit.chunk_count = slopes.size();
  fit.chunk_mean = std::accumulate(slopes.begin(), slopes.end(), 0.0) / slopes.size();
  double var = 0.0;
  for (double s : slopes) var += (s - fit.chunk_mean) * (s - fit.chunk_mean);
  fit.chunk_sd = slopes.size() > 1 ? std::sqrt(var / (slopes.size() - 1)) : 0.0;
  const auto [lo, hi] = std::minmax_element(slopes.begin(), slopes.end());
  fit.chunk_min = *lo;
  fit.chunk_max = *hi;
  return fit;
}

std::string to_string(const DampingRegime regime) {
  switch (regime) {
    case DampingRegime::kUnderdamped: return "underdamped";
    case DampingRegime::kCriticallyDamped: return "critically-damped";
    case DampingRegime::kOverdamped: return "overdamped";
  }
  return "unknown";
}

// x(t) for each regime, with x(0) = x0 and x'(0) = 0:
//   under:    e^{-s t} (cos w t + s/w sin w t)
//   critical: (1 + w0 t) e^{-w0 t}
//   over:     (r2 e^{r1 t} - r1 e^{r2 t}) / (r2 - r1)
double MsdReference::position(const double time) const {
  const double w0 = std::sqrt(k / m_eff);
  const double s = b / (2.0 * m_eff);
  switch (regime) {
    case DampingRegime::kUnderdamped: {
      const double w = std::sqrt(w0 * w0 - s * s);
      return x0 * std::exp(-s * time) * (std::cos(w * time) + s / w * std::sin(w * time));
    }
    case DampingRegime::kCriticallyDamped:
      return x0 * (1.0 + w0 * time) * std::exp(-w0 * time);
    case DampingRegime::kOverdamped: {
      const double root = std::sqrt(s * s - w0 * w0);
      const double r1 = -s + root, r2 = -s - root;
      return x0 * (r2 * std::exp(r1 * time) - r1 * std::exp(r2 * time)) / (r2 - r1);
    }
  }
  return 0.0;
}

double MsdReference::velocity(const double time) const {
  const double w0 = std::sqrt(k / m_eff);
  const double s = b / (2.0 * m_eff);
  switch (regime) {
    case DampingRegime::kUnderdamped: {
      const double w = std::sqrt(w0 * w0 - s * s);
      return -x0 * (w0 * w0 / w) * std::exp(-s * time) * std::sin(w * time);
    }
    case DampingRegime::kCriticallyDamped:
      return -x0 * w0 * w0 * time * std::exp(-w0 * time);
    case DampingRegime::kOverdamped: {
      const double root = std::sqrt(s * s - w0 * w0);
      const double r1 = -s + root, r2 = -s - root;
      return x0 * r1 * r2 * (std::exp(r1 * time) - std::exp(r2 * time)) / (r2 - r1);
    }
  }
  return 0.0;
}

double MsdReference::acceleration(const double time) const {
  // Exact derivative of the closed form.
  const double w0 = std::sqrt(k / m_eff);
  const double s = b / (2.0 * m_eff);
  switch (regime) {
    case DampingRegime::kUnderdamped: {
      const double w = std::sqrt(w0 * w0 - s * s);
      return -x0 * (w0 * w0 / w) * std::exp(-s * time) *
             (w * std::cos(w * time) - s * std::sin(w * time));
    }
    case DampingRegime::kCriticallyDamped:
      return -x0 * w0 * w0 * (1.0 - w0 * time) * std::exp(-w0 * time);
    case DampingRegime::kOverdamped: {
      const double root = std::sqrt(s * s - w0 * w0);
      const double r1 = -s + root, r2 = -s - root;
      return x0 * r1 * r2 * (r1 * std::exp(r1 * time) - r2 * std::exp(r2 * time)) /
             (r2 - r1);
    }
  }
  return 0.0;
}

MsdReference msd_reference(const double m_eff, const double k, const double b,
                           const double x0, const double duration, const double dt) {
  if (!(m_eff > 0.0) || !(k > 0.0) || !(b >= 0.0) || !(dt > 0.0)) {
    throw ConfigError("msd_reference: need m_eff > 0, k > 0, b >= 0, dt > 0");
  }
  MsdReference ref;
  ref.m_eff = m_eff;
  ref.k = k;
  ref.b = b;
  ref.x0 = x0;
  ref.dt = dt;
  const double critical = 2.0 * std::sqrt(m_eff * k);
  const double zeta = b / critical;
  if (std::abs(zeta - 1.0) <= 1e-9) {
    ref.regime = DampingRegime::kCriticallyDamped;
  } else if (zeta < 1.0) {
    ref.regime = DampingRegime::kUnderdamped;
  } else {
    ref.regime = DampingRegime::kOverdamped;
  }
  const auto n = static_cast<std::size_t>(std::floor(duration / dt + 1e-9)) + 1;
  ref.t.resize(n);
  ref.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ref.t[i] = static_cast<double>(i) * dt;
    ref.x[i] = ref.position(ref.t[i]);
  }
  return ref;
}

double effective_mass(const ChainModel& model, const Vec4& q_eq, const double lambda_dls) {
  return task_inertia(model, q_eq, lambda_dls)(0, 0);
}

std::vector<Peak> find_peaks(std::span<const double> t, std::span<const double> y,
                             const double threshold) {
  std::vector<Peak> peaks;
  if (y.size() < 3) return peaks;
  // Sign of the last nonzero difference; plateaus inherit it.
  int prev_sign = 0;
  std::size_t prev_idx = 0;
  for (std::size_t i = 1; i < y.size(); ++i) {
    const double dy = y[i] - y[i - 1];
    const int sign = (dy > 0.0) - (dy < 0.0);
    if (sign == 0) continue;
    if (prev_sign != 0 && sign != prev_sign) {
      const std::size_t j = prev_idx;  // last sample before the turn
      if (std::abs(y[j]) > threshold) {
        Peak pk{t[j], y[j]};
        if (j > 0 && j + 1 < y.size()) {
          const double a = y[j - 1], b = y[j], c = y[j + 1];
          const double denom = a - 2.0 * b + c;
          if (denom != 0.0) {
            const double off = std::clamp(0.5 * (a - c) / denom, -1.0, 1.0);
            const double h = t[j + 1] - t[j];
            pk.t = t[j] + off * h;
            pk.value = b - 0.25 * (a - c) * off;
          }
        }
        peaks.push_back(pk);
      }
    }
    prev_sign = sign;
    prev_idx = i;
  }
  return peaks;
}

std::vector<double> zero_crossings(std::span<const double> t, std::span<const double> y,
                                   const double hysteresis) {
  std::vector<double> out;
  int side = 0;          // established side of zero
  std::size_t last_change = 0;  // index i where sign(y[i-1]) != sign(y[i])
  bool have_change = false;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (i > 0 && ((y[i - 1] < 0.0) != (y[i] < 0.0))) {
      last_change = i;
      have_change = true;
    }
    int now = 0;
    if (y[i] > hysteresis) now = 1;
    if (y[i] < -hysteresis) now = -1;
    if (now == 0) continue;
    if (side != 0 && now != side && have_change) {
      const std::size_t j = last_change;
      const double y0 = y[j - 1], y1 = y[j];
      const double frac = y0 / (y0 - y1);
      out.push_back(t[j - 1] + frac * (t[j] - t[j - 1]));
    }
    side = now;
    have_change = false;
  }
  return out;
}

ResponseMetrics compare_response(std::span<const double> t,
                                 std::span<const double> displacement,
                                 const MsdReference& reference) {
  ResponseMetrics m;
  const std::size_t n = std::min(t.size(), displacement.size());
  if (n == 0) return m;
  const double scale = std::abs(reference.x0) > 0.0 ? std::abs(reference.x0) : 1.0;

  std::vector<double> ref(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ref[i] = reference.position(t[i]);
    const double e = displacement[i] - ref[i];
    sq += e * e;
  }
  m.nrmse = std::sqrt(sq / static_cast<double>(n)) / scale;

  const double threshold = 1e-3 * scale;
  const auto ts = t.first(n);
  const auto ys = displacement.first(n);
  // The first peak is the first overshoot: an extremum on the far side of
  // zero from the release offset.
  const double side = reference.x0 < 0.0 ? -1.0 : 1.0;
  for (const auto& pk : find_peaks(ts, ys, threshold)) {
    m.peak_times.push_back(pk.t);
    m.peak_amplitudes.push_back(std::abs(pk.value));
    m.peak_values.push_back(pk.value);
    if (!m.has_first_peak && pk.value * side < 0.0) {
      m.has_first_peak = true;
      m.first_peak_time = pk.t;
    }
  }
  for (const auto& pk : find_peaks(ts, ref, threshold)) {
    m.reference_peak_times.push_back(pk.t);
    if (!m.reference_has_first_peak && pk.value * side < 0.0) {
      m.reference_has_first_peak = true;
      m.reference_first_peak_time = pk.t;
    }
  }

  const auto zc_meas = zero_crossings(ts, ys, threshold);
  const auto zc_ref = zero_crossings(ts, ref, threshold);
  const std::size_t nz = std::min(zc_meas.size(), zc_ref.size());
  for (std::size_t i = 0; i < nz; ++i) m.zero_crossing_phase_lag.push_back(zc_meas[i] - zc_ref[i]);

  const double band = 0.02 * scale;
  for (std::size_t i = n; i-- > 0;) {
    if (std::abs(ys[i]) > band) {
      m.settling_time = ts[i];
      break;
    }
  }
  return m;
}

std::vector<double> side_peak_amplitudes(const ResponseMetrics& metrics, int side) {
  std::vector<double> out;
  for (const double v : metrics.peak_values) {
    if ((side > 0 && v > 0.0) || (side < 0 && v < 0.0)) out.push_back(std::abs(v));
  }
  return out;
}

std::size_t longest_increasing_run(std::span<const double> values) {
  if (values.empty()) return 0;
  std::size_t best = 1, run = 1;
  for (std::size_t i = 1; i < values.size(); ++i) {
    run = values[i] > values[i - 1] ? run + 1 : 1;
    best = std::max(best, run);
  }
  return best;
}

std::vector<double> time_series(const TrialRecord& record) {
  std::vector<double> t;
  t.reserve(record.samples.size());
  for (const auto& s : record.samples) t.push_back(s.t);
  return t;
}

std::vector<double> displacement_series(const TrialRecord& record) {
  const auto it = record.meta.params.find("x_d");
  const double x_d = it != record.meta.params.end() ? it->second : bench_equilibrium().x();
  std::vector<double> d;
  d.reserve(record.samples.size());
  for (const auto& s : record.samples) d.push_back(s.x.x() - x_d);
  return d;
}

ResponseMetrics compare_response(const TrialRecord& measured, const MsdReference& reference) {
  const auto t = time_series(measured);
  const auto d = displacement_series(measured);
  return compare_response(t, d, reference);
}

}  // namespace sparc
