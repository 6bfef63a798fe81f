#include "sparc/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cerrno>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace sparc {

using nlohmann::json;

namespace {

std::string stem_number(double v) {
  std::string s = format_number(v);
  for (auto& c : s) {
    if (c == '.') c = 'p';
    if (c == '-') c = 'm';
  }
  return s;
}

json friction_json(const FrictionSet& set) {
  json out = json::array();
  for (const auto& f : set) {
    out.push_back({{"tau_c", f.tau_c},
                   {"tau_s", f.tau_s},
                   {"b_visc", f.b_visc},
                   {"qd_s", f.qd_s},
                   {"a_shape", f.a_shape},
                   {"beta", f.beta}});
  }
  return out;
}

}  // namespace

std::string format_number(const double v) { return fmt::format("{}", v); }

std::string trial_stem(const std::string& protocol, const double k, const double b,
                       const std::uint64_t seed) {
  return fmt::format("{}_k{}_b{}_seed{}", protocol, stem_number(k), stem_number(b), seed);
}

std::string trial_csv_header() {
  return "t_s,q0_rad,q1_rad,q2_rad,q3_rad,qd0_rad_s,qd1_rad_s,qd2_rad_s,qd3_rad_s,"
         "x_m,z_m,theta_rad,xd_m_s,zd_m_s,thetad_rad_s,"
         "tau0_Nm,tau1_Nm,tau2_Nm,tau3_Nm,"
         "fx_applied_N,fz_applied_N,tau_applied_Nm,fx_measured_N,saturated_joints\n";
}

std::string trial_csv(const TrialRecord& record) {
  fmt::memory_buffer buf;
  const auto header = trial_csv_header();
  buf.append(header.data(), header.data() + header.size());
  auto out = std::back_inserter(buf);
  for (const auto& s : record.samples) {
    fmt::format_to(out, "{}", s.t);
    for (int i = 0; i < kNumJoints; ++i) fmt::format_to(out, ",{}", s.q[i]);
    for (int i = 0; i < kNumJoints; ++i) fmt::format_to(out, ",{}", s.qd[i]);
    for (int i = 0; i < 3; ++i) fmt::format_to(out, ",{}", s.x[i]);
    for (int i = 0; i < 3; ++i) fmt::format_to(out, ",{}", s.xd[i]);
    for (int i = 0; i < kNumJoints; ++i) fmt::format_to(out, ",{}", s.tau_cmd[i]);
    fmt::format_to(out, ",{},{},{},{},{}\n", s.applied.fx, s.applied.fz, s.applied.tau,
                   s.measured_fx, s.saturated_joints);
  }
  return fmt::to_string(buf);
}

std::string trial_metadata_json(const TrialRecord& record) {
  const auto& m = record.meta;
  json params = json::object();
  for (const auto& [k, v] : m.params) params[k] = v;
  json root;
  root["protocol"] = m.protocol;
  root["controller"] = m.controller == ControllerKind::kPD ? "pd" : "impedance";
  root["gains"] = {{"k_x", m.gains.k.x()},   {"k_z", m.gains.k.y()},
                   {"k_theta", m.gains.k.z()}, {"d_x", m.gains.d.x()},
                   {"d_z", m.gains.d.y()},   {"d_theta", m.gains.d.z()},
                   {"lambda_dls", m.gains.lambda_dls}};
  root["friction_true"] = friction_json(m.friction_true);
  root["friction_est"] = m.friction_est ? friction_json(*m.friction_est) : json(nullptr);
  root["plant"] = {
      {"integrator_dt", m.plant.integrator_dt},
      {"control_dt", m.plant.control_dt},
      {"integrator", m.plant.integrator == Integrator::kRk4 ? "rk4" : "semi-implicit-euler"},
      {"force_sensor_noise_sd", m.plant.force_sensor_noise_sd}};
  root["params"] = params;
  root["seed"] = m.seed;
  root["trial_index"] = m.trial_index;
  root["samples"] = record.samples.size();
  root["invalid"] = m.invalid;
  root["degenerate"] = m.degenerate;
  root["divergent"] = m.divergent;
  root["saturation_fraction"] = m.saturation_fraction;
  root["note"] = m.note;
  root["columns"] = trial_csv_header().substr(0, trial_csv_header().size() - 1);
  return root.dump(2) + "\n";
}

std::string stiffness_summary_csv(const std::vector<StiffnessFit>& fits) {
  std::string out =
      "k_d_N_m,n,k_hat_N_m,intercept_N,r2,ci95_lo_N_m,ci95_hi_N_m,rel_err_pct,"
      "chunk_count,chunk_mean_N_m,chunk_sd_N_m\n";
  for (const auto& f : fits) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", f.k_commanded, f.n, f.slope,
                       f.intercept, f.r2, f.ci95_lo, f.ci95_hi, f.rel_err_pct, f.chunk_count,
                       f.chunk_mean, f.chunk_sd);
  }
  return out;
}

std::string stiffness_summary_table(const std::vector<StiffnessFit>& fits) {
  std::string out = fmt::format("{:>6} {:>6} {:>9} {:>8} {:>21} {:>9} {:>18}\n", "k_d", "n",
                                "k_hat", "R^2", "95% CI", "rel err", "chunk mean +- SD");
  for (const auto& f : fits) {
    const std::string ci = f.ci_finite ? fmt::format("[{:.3f}, {:.3f}]", f.ci95_lo, f.ci95_hi)
                                       : std::string("[-inf, inf]");
    out += fmt::format("{:>6.0f} {:>6} {:>9.3f} {:>8.4f} {:>21} {:>8.2f}% {:>9.3f} +- {:<6.3f}\n",
                       f.k_commanded, f.n, f.slope, f.r2, ci, f.rel_err_pct, f.chunk_mean,
                       f.chunk_sd);
  }
  return out;
}

std::string release_cell_csv(const ReleaseResult& result, const MsdReference& reference) {
  fmt::memory_buffer buf;
  auto out = std::back_inserter(buf);
  fmt::format_to(out, "t_s,mean_displacement_m,sd_displacement_m,reference_displacement_m\n");
  for (std::size_t i = 0; i < result.t.size(); ++i) {
    fmt::format_to(out, "{},{},{},{}\n", result.t[i], result.mean_displacement[i],
                   result.sd_displacement[i], reference.position(result.t[i]));
  }
  return fmt::to_string(buf);
}

std::string release_summary_csv(const std::vector<ReleaseCellSummary>& cells) {
  std::string out =
      "k_N_m,b_N_s_m,n_trials,m_eff_kg,nrmse,first_peak_s,reference_first_peak_s,"
      "final_phase_lag_s,divergent\n";
  for (const auto& c : cells) {
    const std::string peak = c.has_first_peak ? format_number(c.first_peak_time) : "none";
    const std::string ref_peak =
        c.reference_has_first_peak ? format_number(c.reference_first_peak_time) : "none";
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", c.k, c.b, c.n_trials, c.m_eff, c.nrmse,
                       peak, ref_peak, c.final_phase_lag, c.divergent ? 1 : 0);
  }
  return out;
}

std::string pd_grid_csv(const PdSweepResult& result) {
  std::string out =
      "k_x_N_m,displacement_m,force_mean_N,force_sd_N,hold_force_N,"
      "achieved_displacement_m,converged\n";
  for (const auto& p : result.points) {
    out += fmt::format("{},{},{},{},{},{},{}\n", p.k_x, p.displacement, p.force_mean,
                       p.force_sd, p.hold_force, p.achieved_displacement, p.converged ? 1 : 0);
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw std::filesystem::filesystem_error("cannot open for writing", p,
                                            std::error_code(errno, std::generic_category()));
  }
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) {
    throw std::filesystem::filesystem_error("write failed", p,
                                            std::error_code(errno, std::generic_category()));
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

}  // namespace sparc
