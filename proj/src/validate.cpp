#include "sparc/validate.hpp"

#include "sparc/analysis.hpp"
#include "sparc/control.hpp"
#include "sparc/dynamics.hpp"
#include "sparc/sim.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace sparc {

namespace {

constexpr double kFdStep = 1e-6;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<>(lo, hi)(rng_); }
  Vec4 angles() {
    Vec4 q;
    for (int i = 0; i < kNumJoints; ++i) q[i] = uniform(-std::numbers::pi, std::numbers::pi);
    return q;
  }
  Vec4 vec4(double scale) {
    Vec4 v;
    for (int i = 0; i < kNumJoints; ++i) v[i] = uniform(-scale, scale);
    return v;
  }
  Wrench wrench(double scale) {
    return {uniform(-scale, scale), uniform(-scale, scale), uniform(-0.1 * scale, 0.1 * scale)};
  }

 private:
  std::mt19937_64 rng_;
};

struct Recorder {
  std::vector<PropertyResult>& out;
  PropertyResult& add(const std::string& group, const std::string& name, double worst,
                      double tol, bool pass, std::string detail = {}) {
    out.push_back({group, name, pass, worst, tol, std::move(detail)});
    return out.back();
  }
  // Guard against a property throwing (e.g. a singular solve on a broken model).
  template <class Body>
  void run(const std::string& group, const std::string& name, Body&& body) {
    try {
      body();
    } catch (const std::exception& e) {
      add(group, name, std::numeric_limits<double>::infinity(), 0.0, false,
          std::string("exception: ") + e.what());
    }
  }
};

double rel(double err, double scale) { return err / std::max(scale, 1.0); }

void model_properties(const ChainModel& model, Recorder& r) {
  const auto v = check(model);
  std::string detail;
  for (const auto& line : v) detail += (detail.empty() ? "" : "; ") + line;
  r.add("model", "model_invariants", static_cast<double>(v.size()), 0.0, v.empty(), detail);
  const double dev = std::abs(default_sparc_model().total_mass() - 1.227);
  r.add("model", "default_total_mass", dev, 1e-12, dev <= 1e-12, "sum of link masses = 1.227 kg");
}

void dynamics_properties(const ChainModel& model, std::uint64_t seed, Recorder& r) {
  Gen gen(seed);

  r.run("dynamics", "jacobian_fd", [&] {
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
      const Vec4 q = gen.angles();
      const Mat34 jac = jacobian(model, q);
      for (int j = 0; j < kNumJoints; ++j) {
        Vec4 qp = q, qm = q;
        qp[j] += kFdStep;
        qm[j] -= kFdStep;
        const Vec3 col =
            (forward_kinematics(model, qp) - forward_kinematics(model, qm)) / (2.0 * kFdStep);
        worst = std::max(worst, (col - jac.col(j)).cwiseAbs().maxCoeff());
      }
    }
    r.add("dynamics", "jacobian_fd", worst, 1e-6, worst <= 1e-6, "100 random q, h = 1e-6");
  });

  r.run("dynamics", "jdot_qd_fd", [&] {
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
      const Vec4 q = gen.angles();
      const Vec4 qd = gen.vec4(2.0);
      const Mat34 jdot = (jacobian(model, q + kFdStep * qd) - jacobian(model, q - kFdStep * qd)) /
                         (2.0 * kFdStep);
      worst = std::max(worst, (jdot * qd - jdot_qd(model, q, qd)).cwiseAbs().maxCoeff());
    }
    r.add("dynamics", "jdot_qd_fd", worst, 1e-6, worst <= 1e-6, "100 random (q, qd), h = 1e-6");
  });

  r.run("dynamics", "mass_symmetry", [&] {
    double worst = 0.0, min_eig = std::numeric_limits<double>::infinity(), direct = 0.0;
    for (int n = 0; n < 1000; ++n) {
      const Vec4 q = gen.angles();
      const Mat4 m = extract_terms(model, q, Vec4::Zero()).mass_matrix;
      const double scale = m.cwiseAbs().maxCoeff();
      worst = std::max(worst, (m - m.transpose()).cwiseAbs().maxCoeff() / scale);
      direct = std::max(direct, (m - mass_matrix_direct(model, q)).cwiseAbs().maxCoeff() / scale);
      const Mat4 sym = 0.5 * (m + m.transpose());
      Eigen::SelfAdjointEigenSolver<Mat4> eig(sym, Eigen::EigenvaluesOnly);
      min_eig = std::min(min_eig, eig.eigenvalues().minCoeff());
    }
    r.add("dynamics", "mass_symmetry", worst, 1e-9, worst <= 1e-9, "1000 random q, relative");
    r.add("dynamics", "mass_positive_definite", min_eig, 0.0, min_eig > 0.0,
          "smallest eigenvalue over 1000 random q");
    r.add("dynamics", "mass_direct_matches_rnea", direct, 1e-9, direct <= 1e-9,
          "CoM-Jacobian assembly vs RNEA columns");
  });

  r.run("dynamics", "rnea_extract_identity", [&] {
    double worst = 0.0, lin = 0.0;
    for (int n = 0; n < 200; ++n) {
      const Vec4 q = gen.angles();
      const Vec4 qd = gen.vec4(3.0);
      const Vec4 qdd = gen.vec4(20.0);
      const Wrench ext = gen.wrench(5.0);
      const DynamicsTerms t = extract_terms(model, q, qd);
      const Vec4 tau = rnea(model, q, qd, qdd, ext);
      const Vec4 rhs =
          t.mass_matrix * qdd + t.bias - jacobian(model, q).transpose() * ext.as_vector();
      worst = std::max(worst, rel((tau - rhs).cwiseAbs().maxCoeff(), tau.cwiseAbs().maxCoeff()));

      const Vec4 a1 = gen.vec4(20.0), a2 = gen.vec4(20.0);
      const double al = gen.uniform(-2.0, 2.0), be = gen.uniform(-2.0, 2.0);
      const Vec4 lhs = rnea(model, q, qd, al * a1 + be * a2) - t.bias;
      const Vec4 sum = al * (rnea(model, q, qd, a1) - t.bias) + be * (rnea(model, q, qd, a2) - t.bias);
      lin = std::max(lin, rel((lhs - sum).cwiseAbs().maxCoeff(), lhs.cwiseAbs().maxCoeff()));
    }
    r.add("dynamics", "rnea_extract_identity", worst, 1e-9, worst <= 1e-9,
          "tau = M qdd + bias - J^T F, 200 random states");
    r.add("dynamics", "rnea_linearity", lin, 1e-9, lin <= 1e-9, "linear in qdd");
  });

  r.run("dynamics", "frictionless_energy", [&] {
    ChainModel m = model;
    m.gravity = Vec2::Zero();
    PlantConfig plant;
    plant.friction_true = uniform_friction(FrictionParams{0.0, 0.0, 0.0, 0.1, 2.0, 200.0});
    plant.integrator = Integrator::kRk4;
    plant.integrator_dt = 1e-4;
    double worst = 0.0;
    for (int n = 0; n < 3; ++n) {
      JointState s;
      s.q = gen.angles();
      s.qd = gen.vec4(1.0);
      if (m.base_fixed) s.qd[0] = 0.0;
      auto energy = [&](const JointState& st) {
        return 0.5 * st.qd.dot(mass_matrix_direct(m, st.q) * st.qd);
      };
      const double e0 = energy(s);
      for (int k = 0; k < 1000; ++k) {
        s = plant_step(m, plant, s, Vec4::Zero(), Wrench{});
        worst = std::max(worst, std::abs(energy(s) - e0) / e0);
      }
    }
    r.add("dynamics", "frictionless_energy", worst, 1e-6, worst <= 1e-6,
          "rk4 dt 1e-4 over 1 s, relative drift");
  });
}

void control_properties(const ChainModel& model, std::uint64_t seed, Recorder& r) {
  Gen gen(seed + 1);
  const ImpedanceGains gains;

  // At the target with qd = 0 every error term is exactly zero and the output
  // is the controller's gravity vector; that vector agrees with RNEA.
  r.run("control", "gravity_compensation_at_target", [&] {
    double worst = 0.0, worst_g = 0.0;
    for (int n = 0; n < 100; ++n) {
      JointState s;
      s.q = gen.angles();
      TaskTarget target;
      target.pos_d = forward_kinematics(model, s.q);
      const ControlOutput out = impedance_torque(model, s, target, gains);
      if (out.saturated_joints > 0) continue;
      worst = std::max({worst, out.terms.inertial.cwiseAbs().maxCoeff(),
                        out.terms.impedance.cwiseAbs().maxCoeff(),
                        (out.tau_cmd - out.terms.bias).cwiseAbs().maxCoeff()});
      Vec4 g = extract_terms(model, s.q, Vec4::Zero()).gravity_vec;
      if (model.base_fixed) g[0] = 0.0;
      worst_g = std::max(worst_g, (out.tau_cmd - g).cwiseAbs().maxCoeff());
    }
    r.add("control", "gravity_compensation_at_target", worst, 0.0, worst == 0.0,
          "error terms exactly zero, tau = g(q)");
    r.add("control", "gravity_compensation_matches_rnea", worst_g, 1e-12, worst_g <= 1e-12,
          "tau vs RNEA gravity vector");
  });

  r.run("control", "pd_impedance_coincidence", [&] {
    ChainModel m = model;
    m.gravity = Vec2::Zero();
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
      JointState s;
      s.q = gen.angles();
      TaskTarget target;
      target.pos_d = forward_kinematics(m, s.q) + Vec3(gen.uniform(-0.02, 0.02),
                                                       gen.uniform(-0.02, 0.02),
                                                       gen.uniform(-0.05, 0.05));
      const Vec4 a = impedance_torque(m, s, target, gains).tau_cmd;
      const Vec4 b = pd_torque(m, s, target, gains).tau_cmd;
      worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    }
    r.add("control", "pd_impedance_coincidence", worst, 1e-12, worst <= 1e-12,
          "gravity 0, qd = 0, acc_d = 0");
  });

  r.run("control", "impedance_terms_sum", [&] {
    double worst = 0.0;
    const FrictionSet est = uniform_friction(default_true_friction());
    for (int n = 0; n < 100; ++n) {
      JointState s;
      s.q = gen.angles();
      s.qd = gen.vec4(2.0);
      TaskTarget target;
      target.pos_d = forward_kinematics(model, s.q) + Vec3(0.01, -0.01, 0.02);
      const ControlOutput out = impedance_torque(model, s, target, gains, est);
      Vec4 sum = out.terms.sum();
      worst = std::max(worst, (sum - out.tau_cmd).cwiseAbs().maxCoeff());
    }
    r.add("control", "impedance_terms_sum", worst, 1e-12, worst <= 1e-12,
          "breakdown sums to tau_cmd");
  });

  r.run("control", "pd_gain_monotonicity", [&] {
    const std::vector<double> ks{300.0, 400.0, 500.0, 600.0};
    const std::vector<double> deltas{0.005, 0.01, 0.015, 0.02, 0.025};
    TaskTarget target;
    target.pos_d = bench_equilibrium();
    const Vec4 q_eq = equilibrium_configuration(model, target.pos_d);
    bool ok = true;
    double min_step = std::numeric_limits<double>::infinity();
    std::string detail = "hold force strictly increasing in k_x at every displacement";
    for (const double delta : deltas) {
      double prev = -std::numeric_limits<double>::infinity();
      double prev_norm = -std::numeric_limits<double>::infinity();
      for (const double k : ks) {
        ImpedanceGains g = gains;
        g.k.x() = k;
        const Controller ctrl{ControllerKind::kPD, g, std::nullopt, kDefaultTorqueLimit};
        const HoldSolution hold = solve_hold_force(model, ctrl, target, delta, q_eq, k);
        // Joint torque for a fixed task displacement at q = q_eq.
        const Vec3 e(delta, 0.0, 0.0);
        const double norm = (jacobian(model, q_eq).transpose() * g.k.cwiseProduct(e)).norm();
        if (!hold.converged) {
          ok = false;
          detail = fmt::format("no hold force at k_x = {}, delta = {}", k, delta);
          continue;
        }
        min_step = std::min(min_step, hold.force - prev);
        if (!(hold.force > prev) || !(norm >= prev_norm)) {
          ok = false;
          detail = fmt::format("not increasing at k_x = {}, delta = {}", k, delta);
        }
        prev = hold.force;
        prev_norm = norm;
      }
    }
    r.add("control", "pd_gain_monotonicity", min_step, 0.0, ok, detail);
  });

  r.run("control", "dls_pinv_bound", [&] {
    const double lambda = 1e-2;
    double worst = 0.0;
    for (int n = 0; n < 100; ++n) {
      Vec4 q = Vec4::Zero();
      q.tail<3>() = gen.vec4(1e-3).tail<3>();  // straight chain, x-row close to zero
      worst = std::max(worst, dls_pinv(jacobian(model, q), lambda).cwiseAbs().maxCoeff());
    }
    const double bound = 1.0 / (2.0 * lambda);
    r.add("control", "dls_pinv_bound", worst, bound, worst <= bound, "near rank drop, lambda 1e-2");

    double right = 0.0;
    for (int n = 0; n < 100; ++n) {
      const Mat34 jac = jacobian(model, gen.angles());
      Eigen::JacobiSVD<Mat34> svd(jac);
      if (svd.singularValues().minCoeff() < 1e-3) continue;
      right = std::max(right, (jac * dls_pinv(jac, 0.0) - Mat3::Identity()).cwiseAbs().maxCoeff());
    }
    r.add("control", "dls_pinv_right_inverse", right, 1e-10, right <= 1e-10, "lambda = 0");
  });

  r.run("control", "pd_passivity", [&] {
    // Continuous-time check: controller at the integrator rate.
    ChainModel m = model;
    m.gravity = Vec2::Zero();
    PlantConfig plant;
    plant.friction_true = uniform_friction(FrictionParams{0.0, 0.0, 0.0, 0.1, 2.0, 200.0});
    plant.control_dt = plant.integrator_dt;
    TaskTarget target;
    target.pos_d = bench_equilibrium();
    JointState s;
    s.q = equilibrium_configuration(m, target.pos_d);
    s.qd = gen.vec4(0.5);
    if (m.base_fixed) s.qd[0] = 0.0;
    auto energy = [&](const JointState& st) {
      const Vec3 e = target.pos_d - forward_kinematics(m, st.q);
      return 0.5 * st.qd.dot(mass_matrix_direct(m, st.q) * st.qd) +
             0.5 * e.dot(gains.k.cwiseProduct(e));
    };
    double worst = 0.0;
    double e_prev = energy(s);
    for (int k = 0; k < 5000; ++k) {
      const Vec4 tau = pd_torque(m, s, target, gains).tau_cmd;
      s = plant_step(m, plant, s, tau, Wrench{});
      const double e = energy(s);
      worst = std::max(worst, (e - e_prev) / e_prev);
      e_prev = e;
    }
    r.add("control", "pd_passivity", worst, 1e-6, worst <= 1e-6,
          "kinetic + spring energy nonincreasing per step");
  });

  r.run("control", "stribeck_properties", [&] {
    const FrictionParams p{0.1, 0.2, 0.01, 0.05, 2.0, 100.0};
    const double value = std::abs(stribeck_torque(p, 10.0) - 0.2);
    double odd = std::abs(stribeck_torque(p, 0.0));
    const FrictionParams t = default_true_friction();
    for (int n = 0; n < 1000; ++n) {
      const double v = gen.uniform(-5.0, 5.0);
      odd = std::max(odd, std::abs(stribeck_torque(t, v) + stribeck_torque(t, -v)));
    }
    r.add("control", "stribeck_sliding_value", value, 1e-12, value <= 1e-12,
          "qd = 10 rad/s gives tau_c + b qd");
    r.add("control", "stribeck_odd_symmetry", odd, 0.0, odd == 0.0, "f(-v) = -f(v), f(0) = 0");
  });
}

void analysis_properties(std::uint64_t seed, Recorder& r) {
  Gen gen(seed + 2);

  r.run("analysis", "ols_perfect_line", [&] {
    std::vector<ForcePair> pts;
    for (int i = 0; i < 50; ++i) {
      const double x = -0.01 + 0.0004 * i;
      pts.push_back({x, 2.0 * x + 1.0});
    }
    const StiffnessFit f = ols_fit(pts, 2.0, 10);
    const double err = std::max({std::abs(f.slope - 2.0), std::abs(f.intercept - 1.0),
                                 std::abs(f.r2 - 1.0), f.ci95_hi - f.ci95_lo});
    r.add("analysis", "ols_perfect_line", err, 1e-9, err <= 1e-9, "F = 2x + 1");
  });

  r.run("analysis", "ols_scale_equivariance", [&] {
    std::vector<ForcePair> pts, scaled_pts;
    const double c = gen.uniform(0.5, 4.0);
    for (int i = 0; i < 400; ++i) {
      const double x = gen.uniform(-0.015, 0.015);
      const double f = 600.0 * x + gen.uniform(-0.1, 0.1);
      pts.push_back({x, f});
      scaled_pts.push_back({x, c * f});
    }
    const StiffnessFit a = ols_fit(pts, 600.0);
    const StiffnessFit b = ols_fit(scaled_pts, 600.0);
    const double err =
        std::max({std::abs(b.slope - c * a.slope), std::abs(b.ci95_lo - c * a.ci95_lo),
                  std::abs(b.ci95_hi - c * a.ci95_hi)}) /
        (c * a.slope);
    r.add("analysis", "ols_scale_equivariance", err, 1e-12, err <= 1e-12, "scale F by c");
  });

  r.run("analysis", "msd_ode_residual", [&] {
    double worst = 0.0;
    bool energy_ok = true;
    const double m = 0.8, k = 500.0, x0 = 0.037;
    for (const double b : {0.0, 2.0, 20.0, 2.0 * std::sqrt(m * k), 80.0}) {
      const MsdReference ref = msd_reference(m, k, b, x0, 2.0, 1e-3);
      double e_prev = std::numeric_limits<double>::infinity();
      for (const double t : ref.t) {
        const double res = m * ref.acceleration(t) + b * ref.velocity(t) + k * ref.position(t);
        worst = std::max(worst, std::abs(res) / (k * x0));
        const double e = 0.5 * m * std::pow(ref.velocity(t), 2) + 0.5 * k * std::pow(ref.position(t), 2);
        if (e > e_prev * (1.0 + 1e-12) + 1e-15) energy_ok = false;
        e_prev = e;
      }
    }
    r.add("analysis", "msd_ode_residual", worst, 1e-8, worst <= 1e-8, "all regimes");
    r.add("analysis", "msd_energy_nonincreasing", energy_ok ? 0.0 : 1.0, 0.0, energy_ok,
          "b >= 0");
  });
}

}  // namespace

bool ValidationReport::all_pass() const {
  for (const auto& p : properties) {
    if (!p.pass) return false;
  }
  return !properties.empty();
}

const PropertyResult* ValidationReport::find(const std::string& name) const {
  for (const auto& p : properties) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::string ValidationReport::table() const {
  std::string out = fmt::format("{:<9} {:<32} {:<5} {:>12} {:>10}  {}\n", "group", "property",
                                "ok", "worst", "tol", "detail");
  for (const auto& p : properties) {
    out += fmt::format("{:<9} {:<32} {:<5} {:>12.3e} {:>10.1e}  {}\n", p.group, p.name,
                       p.pass ? "PASS" : "FAIL", p.worst, p.tolerance, p.detail);
  }
  if (timing.evaluations > 0) {
    out += fmt::format(
        "timing    rnea mean {:.3f} us, extract_terms mean {:.3f} us over {} evaluations "
        "(host budget {} us; embedded figure {} us)\n",
        timing.rnea_mean_us, timing.extract_terms_mean_us, timing.evaluations,
        TimingResult::kHostBudgetUs, TimingResult::kEmbeddedRneaUs);
  }
  out += fmt::format("overall   {}\n", all_pass() ? "PASS" : "FAIL");
  return out;
}

double time_rnea_us(const ChainModel& model, const int n, const std::uint64_t seed) {
  Gen gen(seed);
  constexpr int kStates = 256;
  std::vector<Vec4> q(kStates), qd(kStates), qdd(kStates);
  for (int i = 0; i < kStates; ++i) {
    q[i] = gen.angles();
    qd[i] = gen.vec4(3.0);
    qdd[i] = gen.vec4(20.0);
  }
  Vec4 sink = Vec4::Zero();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < n; ++i) {
    const int j = i % kStates;
    sink += rnea(model, q[j], qd[j], qdd[j]);
  }
  const auto t1 = std::chrono::steady_clock::now();
  volatile double keep = sink.sum();
  (void)keep;
  return std::chrono::duration<double, std::micro>(t1 - t0).count() / std::max(n, 1);
}

ValidationReport run_validation(const ValidationOptions& options) {
  ValidationReport report;
  Recorder r{report.properties};
  model_properties(options.model, r);
  dynamics_properties(options.model, options.seed, r);
  control_properties(options.model, options.seed, r);
  analysis_properties(options.seed, r);

  if (options.timing_evaluations > 0) {
    const int n = options.timing_evaluations;
    report.timing.evaluations = n;
    report.timing.rnea_mean_us = time_rnea_us(options.model, n, options.seed);
    Gen gen(options.seed);
    const int m = std::max(1, n / 6);
    Vec4 sink = Vec4::Zero();
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < m; ++i) {
      sink += extract_terms(options.model, gen.angles(), Vec4::Constant(0.5)).bias;
    }
    const auto t1 = std::chrono::steady_clock::now();
    volatile double keep = sink.sum();
    (void)keep;
    report.timing.extract_terms_mean_us =
        std::chrono::duration<double, std::micro>(t1 - t0).count() / m;
  }
  return report;
}

}  // namespace sparc
