#include "sparc/sim.hpp"

#include "sparc/analysis.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

namespace sparc {

namespace {

struct Derivative {
  Vec4 qd;
  Vec4 qdd;
};

// Accelerations with and without the friction torque, from one factorization.
struct Accel {
  Vec4 with_friction;
  Vec4 frictionless;
  Mat4 mass;
};

// friction == nullptr drops the friction torque. The load sees the task
// state computed from the same kinematic pass.
Accel accelerations(const ChainModel& model, const FrictionSet* friction,
                    const JointState& state, const Vec4& tau, const ExternalLoad& load,
                    LinkTrig& trig);

Derivative eval_rhs(const ChainModel& model, const FrictionSet* friction, const JointState& s,
                    const Vec4& tau, const ExternalLoad& load, LinkTrig& trig) {
  return {s.qd, accelerations(model, friction, s, tau, load, trig).with_friction};
}

JointState advance(const JointState& s, const Derivative& d, double h) {
  JointState out;
  out.q = s.q + h * d.qd;
  out.qd = s.qd + h * d.qdd;
  out.t = s.t + h;
  return out;
}

// Run `body(i)` for i in [0, n) on up to `jobs` threads. Each index writes
// only its own output slot, so results do not depend on scheduling.
template <typename Body>
void parallel_for(int n, int jobs, Body&& body) {
  jobs = std::clamp(jobs, 1, std::max(n, 1));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += jobs) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

Wrench no_load(double, const JointState&, const TaskState&) { return {}; }

constexpr double kStableStep = 1.5;

// Solve M (v - base) + gh * f(v) = 0 for v on the free joints by Newton
// with a backtracking safeguard.
template <int N>
Eigen::Matrix<double, N, 1> solve_implicit(const Eigen::Matrix<double, N, N>& mass,
                                           const FrictionParams* fr,
                                           const Eigen::Matrix<double, N, 1>& base,
                                           const Eigen::Matrix<double, N, 1>& guess, double gh) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;
  Vec v = guess;
  Vec r, slope;
  auto evaluate = [&](const Vec& x, Vec& res, Vec& d) {
    res = mass * (x - base);
    for (int i = 0; i < N; ++i) {
      const FrictionEval e = stribeck_eval(fr[i], x[i]);
      res[i] += gh * e.torque;
      d[i] = gh * e.slope;
    }
  };
  evaluate(v, r, slope);
  const double tol = 1e-14 * ((mass * base).norm() + gh);
  for (int it = 0; it < 50 && r.norm() > tol; ++it) {
    Mat jac = mass;
    jac.diagonal() += slope;
    const Vec step = -(jac.inverse() * r);
    double alpha = 1.0;
    for (int ls = 0; ls < 40; ++ls) {
      const Vec trial = v + alpha * step;
      Vec rt, dt;
      evaluate(trial, rt, dt);
      if (rt.norm() < r.norm() || ls == 39) {
        v = trial;
        r = rt;
        slope = dt;
        break;
      }
      alpha *= 0.5;
    }
  }
  return v;
}

Vec4 implicit_friction_velocity(const ChainModel& model, const Mat4& mass, const FrictionSet& fr,
                                const Vec4& base, const Vec4& guess, double gh) {
  Vec4 v;
  if (model.base_fixed) {
    v[0] = 0.0;
    v.tail<3>() = solve_implicit<3>(mass.bottomRightCorner<3, 3>(), fr.data() + 1,
                                    base.tail<3>(), guess.tail<3>(), gh);
  } else {
    v = solve_implicit<4>(mass, fr.data(), base, guess, gh);
  }
  return v;
}

// |h * df/dqd / m| over the actuated joints, rated at the slowest velocity
// reached in the step (zero if it may cross zero); the tanh term dominates
// the slope there.
double friction_stiffness(const FrictionSet& fr, const JointState& s, const Vec4& qdd,
                          double h, double inv_mass, int first) {
  double worst = 0.0;
  for (int i = first; i < kNumJoints; ++i) {
    const double v = s.qd[i];
    const double v_end = v + h * qdd[i];
    double rated = std::abs(v) < std::abs(v_end) ? v : v_end;
    if (v * v_end <= 0.0) rated = 0.0;
    worst = std::max(worst, stribeck_slope(fr[i], rated) * h * inv_mass);
  }
  return worst;
}

double smallest_inertia(const ChainModel& model, const Vec4& q) {
  const Mat4 mass = mass_matrix_direct(model, q);
  if (model.base_fixed) {
    Eigen::SelfAdjointEigenSolver<Mat3> es(mass.bottomRightCorner<3, 3>(),
                                           Eigen::EigenvaluesOnly);
    return es.eigenvalues()[0];
  }
  Eigen::SelfAdjointEigenSolver<Mat4> es(mass, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

}  // namespace

std::vector<std::string> check(const PlantConfig& plant) {
  std::vector<std::string> out = check(plant.friction_true, "FrictionParams.friction_true");
  if (!(plant.control_dt > 0.0)) out.push_back("PlantConfig.control_dt must be > 0");
  if (!(plant.integrator_dt > 0.0 && plant.integrator_dt <= plant.control_dt))
    out.push_back("PlantConfig.integrator_dt must be in (0, control_dt]");
  if (!(plant.force_sensor_noise_sd >= 0.0))
    out.push_back("PlantConfig.force_sensor_noise_sd must be >= 0");
  return out;
}

Vec4 forward_dynamics(const ChainModel& model, const FrictionSet& friction_true,
                      const JointState& state, const Vec4& tau, const Wrench& ext) {
  LinkTrig trig;
  return accelerations(model, &friction_true, state, tau,
                       [&ext](double, const JointState&, const TaskState&) { return ext; }, trig)
      .with_friction;
}

namespace {

Accel accelerations(const ChainModel& model, const FrictionSet* friction,
                    const JointState& state, const Vec4& tau, const ExternalLoad& load,
                    LinkTrig& trig) {
  const PlantTerms terms = plant_terms(model, state.q, state.qd, trig);
  const Mat4& mass = terms.mass;
  const Wrench ext =
      load(state.t, state, TaskState{terms.pose, terms.jacobian * state.qd});
  Eigen::Matrix<double, 4, 2> rhs;
  rhs.col(0) = tau - terms.bias + terms.jacobian.transpose() * ext.as_vector();
  rhs.col(1).setZero();
  if (friction) {
    for (int i = model.base_fixed ? 1 : 0; i < kNumJoints; ++i) {
      rhs(i, 1) = stribeck_torque((*friction)[i], state.qd[i]);
    }
  }

  // Fixed-size closed-form inverses; M is small and well conditioned.
  Eigen::Matrix<double, 4, 2> sol = Eigen::Matrix<double, 4, 2>::Zero();
  if (model.base_fixed) {
    const Mat3 m_r = mass.bottomRightCorner<3, 3>();
    sol.bottomRows<3>().noalias() = m_r.inverse() * rhs.bottomRows<3>();
  } else {
    sol.noalias() = mass.inverse() * rhs;
  }
  return {sol.col(0) - sol.col(1), sol.col(0), mass};
}

}  // namespace

JointState plant_step(const ChainModel& model, const PlantConfig& plant,
                      const JointState& state, const Vec4& tau, const ExternalLoad& load) {
  const int substeps =
      std::max(1, static_cast<int>(std::lround(plant.control_dt / plant.integrator_dt)));
  const double h = plant.control_dt / substeps;
  const FrictionSet& fr = plant.friction_true;

  // Explicit steps while friction is non-stiff. Near zero velocity the tanh
  // branch has slope tau_s * beta, far beyond the explicit stability bound, and
  // the substep falls back to an IMEX Euler step with friction implicit:
  //   M (v+ - v) = h (tau - bias - f(v+)),  q+ = q + h v+,
  // which is L-stable and keeps the stick equilibrium exact.
  const double inv_mass = 1.0 / smallest_inertia(model, state.q);
  const int first = model.base_fixed ? 1 : 0;

  JointState s = state;
  if (model.base_fixed) s.qd[0] = 0.0;
  LinkTrig trig;
  for (int k = 0; k < substeps; ++k) {
    const Accel a1 = accelerations(model, &fr, s, tau, load, trig);
    const Derivative k1{s.qd, a1.with_friction};
    const bool stiff = friction_stiffness(fr, s, k1.qdd, h, inv_mass, first) > kStableStep;
    if (stiff) {
      s.qd = implicit_friction_velocity(model, a1.mass, fr, s.qd + h * a1.frictionless, s.qd, h);
      s.q += h * s.qd;
    } else if (plant.integrator == Integrator::kRk4) {
      const Derivative k2 = eval_rhs(model, &fr, advance(s, k1, 0.5 * h), tau, load, trig);
      const Derivative k3 = eval_rhs(model, &fr, advance(s, k2, 0.5 * h), tau, load, trig);
      const Derivative k4 = eval_rhs(model, &fr, advance(s, k3, h), tau, load, trig);
      s.q += (h / 6.0) * (k1.qd + 2.0 * k2.qd + 2.0 * k3.qd + k4.qd);
      s.qd += (h / 6.0) * (k1.qdd + 2.0 * k2.qdd + 2.0 * k3.qdd + k4.qdd);
    } else {
      s.qd += h * k1.qdd;
      s.q += h * s.qd;
    }
    s.t = state.t + (k + 1) * h;
    if (model.base_fixed) s.qd[0] = 0.0;
  }
  if (!s.q.allFinite() || !s.qd.allFinite()) {
    std::ostringstream os;
    os << "integration blowup at t = " << state.t;
    throw IntegrationError(os.str());
  }
  return s;
}

JointState plant_step(const ChainModel& model, const PlantConfig& plant,
                      const JointState& state, const Vec4& tau, const Wrench& ext) {
  return plant_step(model, plant, state, tau,
                    [ext](double, const JointState&, const TaskState&) { return ext; });
}

LoopResult run_closed_loop(const ChainModel& model, const PlantConfig& plant,
                           const ControlLaw& law, const TaskTarget& target,
                           const JointState& initial, const ExternalLoad& load,
                           const double t_end, const double record_from,
                           std::mt19937_64& rng, const double abort_displacement) {
  LoopResult result;
  const double t0 = initial.t;
  const long n_ticks = std::max(0L, std::lround((t_end - t0) / plant.control_dt));
  std::normal_distribution<double> noise(0.0, 1.0);

  JointState s = initial;
  for (long tick = 0; tick < n_ticks; ++tick) {
    s.t = t0 + static_cast<double>(tick) * plant.control_dt;
    const ControlOutput out = law(model, s, target);
    const TaskState ts = task_state(model, s);
    const Wrench applied = load(s.t, s, ts);
    const double sensor = plant.force_sensor_noise_sd > 0.0
                              ? plant.force_sensor_noise_sd * noise(rng)
                              : 0.0;
    ++result.ticks;
    if (out.saturated_joints > 0) ++result.saturated_ticks;

    if (s.t >= record_from - 1e-12) {
      TrialSample row;
      row.t = s.t;
      row.q = s.q;
      row.qd = s.qd;
      row.x = ts.pos;
      row.xd = ts.vel;
      row.tau_cmd = out.tau_cmd;
      row.applied = applied;
      row.measured_fx = applied.fx + sensor;
      row.saturated_joints = out.saturated_joints;
      result.samples.push_back(row);
    }
    if (abort_displacement > 0.0 && (ts.pos - target.pos_d).norm() > abort_displacement) {
      result.aborted = true;
      break;
    }
    try {
      s = plant_step(model, plant, s, out.tau_cmd, load);
    } catch (const IntegrationError&) {
      result.aborted = true;
      break;
    }
  }
  if (!result.aborted) s.t = t0 + static_cast<double>(n_ticks) * plant.control_dt;
  result.final_state = s;
  return result;
}

// --- Static push-pull -------------------------------------------------------

double pushpull_duration(const StaticProtocol& p) {
  return p.settle_time + 4.0 * p.max_force / p.ramp_rate;
}

double pushpull_force(const StaticProtocol& p, const double t) {
  const double tau = t - p.settle_time;
  const double leg = p.max_force / p.ramp_rate;
  if (tau <= 0.0 || p.max_force <= 0.0) return 0.0;
  if (tau < leg) return p.ramp_rate * tau;
  if (tau < 3.0 * leg) return p.max_force - p.ramp_rate * (tau - leg);
  if (tau < 4.0 * leg) return -p.max_force + p.ramp_rate * (tau - 3.0 * leg);
  return 0.0;
}

TrialRecord run_static_pushpull(const ChainModel& model, ImpedanceGains gains,
                                const std::optional<FrictionSet>& friction_est,
                                const PlantConfig& plant, const StaticProtocol& protocol) {
  if (!(protocol.ramp_rate > 0.0) || !(protocol.max_force >= 0.0) ||
      protocol.sample_every < 1) {
    throw ConfigError("static protocol: need ramp_rate > 0, max_force >= 0, sample_every >= 1");
  }
  gains.k.x() = protocol.k_x;
  Controller ctrl{ControllerKind::kImpedance, gains, friction_est, kDefaultTorqueLimit};

  TaskTarget target;
  target.pos_d = bench_equilibrium();
  JointState start;
  start.q = equilibrium_configuration(model, target.pos_d);

  const ExternalLoad load = [&protocol](double t, const JointState&, const TaskState&) {
    return Wrench{pushpull_force(protocol, t), 0.0, 0.0};
  };
  std::mt19937_64 rng(plant.noise_seed);
  LoopResult loop = run_closed_loop(model, plant, ctrl, target, start, load,
                                    pushpull_duration(protocol), 0.0, rng);

  TrialRecord rec;
  rec.samples = std::move(loop.samples);
  auto& meta = rec.meta;
  meta.protocol = "static";
  meta.controller = ControllerKind::kImpedance;
  meta.gains = gains;
  meta.friction_true = plant.friction_true;
  meta.friction_est = friction_est;
  meta.plant = plant;
  meta.seed = plant.noise_seed;
  meta.params = {{"k_x", protocol.k_x},
                 {"ramp_rate", protocol.ramp_rate},
                 {"max_force", protocol.max_force},
                 {"settle_time", protocol.settle_time},
                 {"velocity_gate", protocol.velocity_gate},
                 {"sample_every", protocol.sample_every},
                 {"x_d", target.pos_d.x()}};
  meta.saturation_fraction =
      loop.ticks > 0 ? static_cast<double>(loop.saturated_ticks) / loop.ticks : 0.0;
  if (loop.aborted) {
    meta.invalid = true;
    meta.note = "integration blowup";
  }
  if (meta.saturation_fraction > 0.10) {
    meta.invalid = true;
    meta.note = "torque saturation on more than 10% of ticks";
  }
  const bool excited = std::any_of(rec.samples.begin(), rec.samples.end(),
                                   [](const TrialSample& s) { return s.applied.fx != 0.0; });
  if (!excited) {
    meta.degenerate = true;
    meta.note = "no applied force; stiffness undefined";
  }
  return rec;
}

std::vector<ForcePair> static_fit_pairs(const TrialRecord& record,
                                        const StaticProtocol& protocol) {
  const auto it = record.meta.params.find("x_d");
  const double x_d = it != record.meta.params.end() ? it->second : bench_equilibrium().x();
  std::vector<ForcePair> pairs;
  for (std::size_t i = 0; i < record.samples.size(); ++i) {
    const auto& s = record.samples[i];
    if (i % static_cast<std::size_t>(protocol.sample_every) != 0) continue;
    if (s.t < protocol.settle_time) continue;
    if (std::abs(s.xd.x()) > protocol.velocity_gate) continue;
    pairs.push_back({s.x.x() - x_d, s.measured_fx});
  }
  return pairs;
}

// --- Displace and release ---------------------------------------------------

ReleaseResult run_release(const ChainModel& model, ImpedanceGains gains,
                          const std::optional<FrictionSet>& friction_est,
                          const PlantConfig& plant, const ReleaseProtocol& protocol,
                          const int jobs) {
  if (protocol.n_trials < 1 || !(protocol.duration > 0.0) || !(protocol.k_x > 0.0)) {
    throw ConfigError("release protocol: need n_trials >= 1, duration > 0, k_x > 0");
  }
  gains.k.x() = protocol.k_x;
  gains.d.x() = protocol.d_x;
  const Controller ctrl{ControllerKind::kImpedance, gains, friction_est, kDefaultTorqueLimit};

  TaskTarget target;
  target.pos_d = bench_equilibrium();
  const Vec4 q_eq = equilibrium_configuration(model, target.pos_d);
  const double m_eff = effective_mass(model, q_eq, gains.lambda_dls);
  const double k_hold = protocol.hold_stiffness_ratio * protocol.k_x;
  const double c_hold = 2.0 * std::sqrt((k_hold + protocol.k_x) * m_eff);
  const double x_d = target.pos_d.x();
  const double x0 = protocol.x0_offset;
  const double abort_at = std::max(0.1, 3.0 * std::abs(x0));

  // Stiff temporary spring whose anchor ramps out to x_d + x0; the k_x x0
  // preload makes x_d + x0 the exact equilibrium of the held system.
  const ExternalLoad hold = [&](double t, const JointState&, const TaskState& ts) {
    const double u = std::clamp((t + protocol.hold_time) / protocol.hold_ramp, 0.0, 1.0);
    const double ramp = u * u * (3.0 - 2.0 * u);
    const double offset = ramp * x0;
    const double x = ts.pos.x();
    const double vx = ts.vel.x();
    return Wrench{protocol.k_x * offset + k_hold * (x_d + offset - x) - c_hold * vx, 0.0, 0.0};
  };

  ReleaseResult result;
  result.trials.resize(protocol.n_trials);
  parallel_for(protocol.n_trials, jobs, [&](int trial) {
    const std::uint64_t seed = plant.noise_seed + static_cast<std::uint64_t>(trial);
    std::mt19937_64 rng(seed);
    JointState start;
    start.q = q_eq;
    start.t = -protocol.hold_time;
    const LoopResult held =
        run_closed_loop(model, plant, ctrl, target, start, hold, 0.0, 0.0, rng);
    LoopResult free = run_closed_loop(model, plant, ctrl, target, held.final_state, no_load,
                                      protocol.duration, 0.0, rng, abort_at);

    TrialRecord& rec = result.trials[trial];
    rec.samples = std::move(free.samples);
    auto& meta = rec.meta;
    meta.protocol = "release";
    meta.gains = gains;
    meta.friction_true = plant.friction_true;
    meta.friction_est = friction_est;
    meta.plant = plant;
    meta.seed = seed;
    meta.trial_index = trial;
    meta.params = {{"k_x", protocol.k_x},       {"d_x", protocol.d_x},
                   {"x0_offset", x0},            {"duration", protocol.duration},
                   {"hold_time", protocol.hold_time}, {"hold_ramp", protocol.hold_ramp},
                   {"hold_stiffness_ratio", protocol.hold_stiffness_ratio},
                   {"x_d", x_d},                 {"m_eff", m_eff}};
    meta.saturation_fraction =
        free.ticks > 0 ? static_cast<double>(free.saturated_ticks) / free.ticks : 0.0;

    // Amplitude growth: aborted, an extremum larger than the release offset,
    // or, on either side of zero, a last extremum larger than the first.
    const auto t = time_series(rec);
    const auto d = displacement_series(rec);
    const auto peaks = find_peaks(t, d, 1e-3 * std::abs(x0));
    bool growing = false;
    for (const int side : {1, -1}) {
      std::vector<double> amp;
      for (const auto& pk : peaks) {
        if (pk.value * side > 0.0) amp.push_back(std::abs(pk.value));
      }
      growing = growing || (amp.size() >= 3 && amp.back() > amp.front());
    }
    for (const auto& pk : peaks) growing = growing || std::abs(pk.value) > std::abs(x0);
    meta.divergent = free.aborted || growing;
    if (free.aborted) meta.note = "divergent: displacement or state blew up; capped";
    else if (growing) meta.note = "divergent: oscillation amplitude grows";
  });

  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& rec : result.trials) len = std::min(len, rec.samples.size());
  result.t.resize(len);
  result.mean_displacement.assign(len, 0.0);
  result.sd_displacement.assign(len, 0.0);
  const double n = static_cast<double>(result.trials.size());
  for (const auto& rec : result.trials) {
    result.divergent = result.divergent || rec.meta.divergent;
    for (std::size_t i = 0; i < len; ++i) {
      result.mean_displacement[i] += (rec.samples[i].x.x() - x_d) / n;
    }
    if (len > 0) result.initial_displacement += (rec.samples[0].x.x() - x_d) / n;
  }
  for (std::size_t i = 0; i < len; ++i) {
    result.t[i] = result.trials.front().samples[i].t;
    if (result.trials.size() < 2) continue;
    double var = 0.0;
    for (const auto& rec : result.trials) {
      const double e = rec.samples[i].x.x() - x_d - result.mean_displacement[i];
      var += e * e;
    }
    result.sd_displacement[i] = std::sqrt(var / (n - 1.0));
  }
  return result;
}

// --- PD characterization ----------------------------------------------------

std::optional<Vec4> static_equilibrium(const ChainModel& model, const ControlLaw& law,
                                       const TaskTarget& target, const double fx,
                                       const Vec4& seed) {
  const int first = model.base_fixed ? 1 : 0;
  const int dim = kNumJoints - first;
  const Wrench ext{fx, 0.0, 0.0};

  // Net joint torque at rest; friction vanishes at zero velocity.
  auto residual = [&](const Vec4& q) -> Eigen::VectorXd {
    JointState s;
    s.q = q;
    const Vec4 tau = law(model, s, target).tau_cmd;
    const Vec4 net = tau - rnea(model, q, Vec4::Zero(), Vec4::Zero(), ext);
    return net.tail(dim);
  };

  Vec4 q = seed;
  Eigen::VectorXd r = residual(q);
  for (int it = 0; it < 60; ++it) {
    if (r.norm() < 1e-11) return q;
    Eigen::MatrixXd jac(dim, dim);
    constexpr double h = 1e-7;
    for (int j = 0; j < dim; ++j) {
      Vec4 qp = q, qm = q;
      qp[first + j] += h;
      qm[first + j] -= h;
      jac.col(j) = (residual(qp) - residual(qm)) / (2.0 * h);
    }
    const Eigen::VectorXd step = jac.fullPivLu().solve(-r);
    double alpha = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 30; ++ls) {
      Vec4 trial = q;
      trial.tail(dim) += alpha * step;
      const Eigen::VectorXd rt = residual(trial);
      if (rt.allFinite() && rt.norm() < r.norm()) {
        q = trial;
        r = rt;
        improved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!improved) break;
  }
  if (r.norm() < 1e-9) return q;
  return std::nullopt;
}

HoldSolution solve_hold_force(const ChainModel& model, const ControlLaw& law,
                              const TaskTarget& target, const double delta, const Vec4& seed,
                              const double k_guess) {
  // Secant search on fx so that the static x displacement equals delta.
  Vec4 q_seed = seed;
  auto miss = [&](double fx, Vec4& q_out) -> std::optional<double> {
    const auto q = static_equilibrium(model, law, target, fx, q_seed);
    if (!q) return std::nullopt;
    q_out = *q;
    return forward_kinematics(model, *q).x() - target.pos_d.x() - delta;
  };
  HoldSolution out;
  double f0 = k_guess * delta;
  double f1 = f0 + 0.05 * k_guess * std::max(std::abs(delta), 1e-3);
  Vec4 q0, q1;
  auto e0 = miss(f0, q0);
  auto e1 = e0 ? miss(f1, q1) : std::nullopt;
  for (int it = 0; it < 60 && e0 && e1; ++it) {
    if (std::abs(*e1) < 1e-11) {
      out.converged = true;
      out.force = f1;
      out.q = q1;
      break;
    }
    if (*e1 == *e0) break;
    const double f2 = f1 - *e1 * (f1 - f0) / (*e1 - *e0);
    f0 = f1;
    e0 = e1;
    q0 = q1;
    q_seed = q1;
    f1 = f2;
    e1 = miss(f1, q1);
  }
  return out;
}

PdSweepResult run_pd_sweep(const ChainModel& model, ImpedanceGains gains,
                           const PlantConfig& plant, const PdProtocol& protocol,
                           const int jobs) {
  if (protocol.displacements.empty() || protocol.k_x.empty()) {
    throw ConfigError("pd protocol: k_x list and displacement grid must be non-empty");
  }
  if (protocol.repeats < 1) throw ConfigError("pd protocol: repeats must be >= 1");

  TaskTarget target;
  target.pos_d = bench_equilibrium();
  const Vec4 q_eq = equilibrium_configuration(model, target.pos_d);

  const int n_disp = static_cast<int>(protocol.displacements.size());
  const int n_points = static_cast<int>(protocol.k_x.size()) * n_disp;
  PdSweepResult result;
  result.points.resize(n_points);
  result.trials.resize(static_cast<std::size_t>(n_points) * protocol.repeats);

  parallel_for(n_points, jobs, [&](int idx) {
    ImpedanceGains g = gains;
    g.k.x() = protocol.k_x[idx / n_disp];
    const double delta = protocol.displacements[idx % n_disp];
    const Controller ctrl{ControllerKind::kPD, g, std::nullopt, kDefaultTorqueLimit};

    PdPoint& pt = result.points[idx];
    pt.k_x = g.k.x();
    pt.displacement = delta;

    const HoldSolution hold = solve_hold_force(model, ctrl, target, delta, q_eq, g.k.x());
    if (!hold.converged) return;
    pt.converged = true;
    pt.hold_force = hold.force;
    const double f1 = hold.force;
    const Vec4 q1 = hold.q;

    const ExternalLoad load = [f = f1](double, const JointState&, const TaskState&) {
      return Wrench{f, 0.0, 0.0};
    };
    std::vector<double> means;
    double achieved = 0.0;
    for (int r = 0; r < protocol.repeats; ++r) {
      const std::uint64_t seed =
          plant.noise_seed + static_cast<std::uint64_t>(idx * protocol.repeats + r);
      std::mt19937_64 rng(seed);
      JointState start;
      start.q = q1;
      LoopResult loop = run_closed_loop(model, plant, ctrl, target, start, load,
                                        protocol.hold_time, 0.0, rng);
      double sum = 0.0;
      double xsum = 0.0;
      for (const auto& s : loop.samples) {
        sum += s.measured_fx;
        xsum += s.x.x() - target.pos_d.x();
      }
      const double cnt = std::max<double>(1.0, static_cast<double>(loop.samples.size()));
      means.push_back(sum / cnt);
      achieved += xsum / cnt / protocol.repeats;

      TrialRecord& rec = result.trials[static_cast<std::size_t>(idx) * protocol.repeats + r];
      rec.samples = std::move(loop.samples);
      rec.meta.protocol = "pd";
      rec.meta.controller = ControllerKind::kPD;
      rec.meta.gains = g;
      rec.meta.friction_true = plant.friction_true;
      rec.meta.plant = plant;
      rec.meta.seed = seed;
      rec.meta.trial_index = r;
      rec.meta.params = {{"k_x", g.k.x()},
                         {"displacement", delta},
                         {"hold_force", f1},
                         {"x_d", target.pos_d.x()}};
    }
    double mean = 0.0;
    for (double m : means) mean += m / static_cast<double>(means.size());
    double var = 0.0;
    for (double m : means) var += (m - mean) * (m - mean);
    pt.force_mean = mean;
    pt.force_sd = means.size() > 1 ? std::sqrt(var / static_cast<double>(means.size() - 1)) : 0.0;
    pt.achieved_displacement = achieved;
  });
  return result;
}

}  // namespace sparc
