#pragma once

#include "sparc/control.hpp"
#include "sparc/dynamics.hpp"
#include "sparc/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace sparc {

enum class Integrator { kSemiImplicitEuler, kRk4 };

struct PlantConfig {
  FrictionSet friction_true = uniform_friction(default_true_friction());
  double integrator_dt = 1e-4;  // s, plant substep
  double control_dt = 1e-3;     // s, controller period (ZOH)
  Integrator integrator = Integrator::kRk4;
  std::uint64_t noise_seed = 42;
  double force_sensor_noise_sd = 0.05;  // N

  bool operator==(const PlantConfig&) const = default;
};

std::vector<std::string> check(const PlantConfig& plant);

// External load on the end-effector as a function of time and plant state.
// Evaluated at every integrator stage, so it behaves like a physical spring;
// `task` is the end-effector pose and velocity at that stage.
using ExternalLoad =
    std::function<Wrench(double t, const JointState& state, const TaskState& task)>;

// Control law signature used by the closed-loop runner.
using ControlLaw =
    std::function<ControlOutput(const ChainModel&, const JointState&, const TaskTarget&)>;

// q̈ of the plant: M^-1 (tau - friction(qd) - bias + J^T ext). With a fixed
// base the base row is dropped and q̈_0 = 0.
Vec4 forward_dynamics(const ChainModel& model, const FrictionSet& friction_true,
                      const JointState& state, const Vec4& tau, const Wrench& ext);

// Advance the plant by one control period with tau held constant.
JointState plant_step(const ChainModel& model, const PlantConfig& plant,
                      const JointState& state, const Vec4& tau, const ExternalLoad& load);
JointState plant_step(const ChainModel& model, const PlantConfig& plant,
                      const JointState& state, const Vec4& tau, const Wrench& ext);

// One row per control tick. State and wrench are sampled at the start of
// the tick, when the controller runs.
struct TrialSample {
  double t = 0.0;
  Vec4 q = Vec4::Zero();
  Vec4 qd = Vec4::Zero();
  Vec3 x = Vec3::Zero();     // task position
  Vec3 xd = Vec3::Zero();    // task velocity
  Vec4 tau_cmd = Vec4::Zero();
  Wrench applied;
  double measured_fx = 0.0;  // applied fx + sensor noise
  int saturated_joints = 0;
};

struct TrialMeta {
  std::string protocol;
  ControllerKind controller = ControllerKind::kImpedance;
  ImpedanceGains gains;
  FrictionSet friction_true{};
  std::optional<FrictionSet> friction_est;
  PlantConfig plant;
  std::map<std::string, double> params;
  std::uint64_t seed = 0;
  int trial_index = 0;

  bool invalid = false;
  bool degenerate = false;
  bool divergent = false;
  double saturation_fraction = 0.0;
  std::string note;
};

struct TrialRecord {
  std::vector<TrialSample> samples;
  TrialMeta meta;
};

// Zero-order-hold closed loop: the law is evaluated once per control_dt and
// its torque held across the plant substeps. Samples are appended for ticks
// with t >= record_from. Sensor noise is drawn from rng on every tick.
// Throws IntegrationError on a non-finite state.
struct LoopResult {
  JointState final_state;
  std::vector<TrialSample> samples;
  long saturated_ticks = 0;
  long ticks = 0;
  bool aborted = false;  // |x - x_d| exceeded abort_displacement
};

LoopResult run_closed_loop(const ChainModel& model, const PlantConfig& plant,
                           const ControlLaw& law, const TaskTarget& target,
                           const JointState& initial, const ExternalLoad& load,
                           double t_end, double record_from, std::mt19937_64& rng,
                           double abort_displacement = 0.0);

// --- Static push-pull -------------------------------------------------------

struct StaticProtocol {
  double k_x = 500.0;
  double ramp_rate = 1.0;      // N/s
  double max_force = 8.0;      // N
  double settle_time = 0.5;    // s, excluded from the fit
  double velocity_gate = 5e-3; // m/s, samples moving faster are excluded
  int sample_every = 15;       // ticks between fit samples

  bool operator==(const StaticProtocol&) const = default;
};

TrialRecord run_static_pushpull(const ChainModel& model, ImpedanceGains gains,
                                const std::optional<FrictionSet>& friction_est,
                                const PlantConfig& plant, const StaticProtocol& protocol);

// Applied triangular push-pull force at time t.
double pushpull_force(const StaticProtocol& protocol, double t);
double pushpull_duration(const StaticProtocol& protocol);

// (displacement from x_d, measured F_x) pairs after transient exclusion.
struct ForcePair {
  double x = 0.0;
  double f = 0.0;
};
std::vector<ForcePair> static_fit_pairs(const TrialRecord& record,
                                        const StaticProtocol& protocol);

// --- Displace and release ---------------------------------------------------

struct ReleaseProtocol {
  double k_x = 300.0;
  double d_x = 20.0;
  double x0_offset = 0.037;  // m
  double duration = 3.0;     // s after release
  int n_trials = 10;
  double hold_time = 1.0;            // s before release
  double hold_ramp = 0.5;            // s to reach the full offset
  double hold_stiffness_ratio = 10.0;

  bool operator==(const ReleaseProtocol&) const = default;
};

struct ReleaseResult {
  std::vector<TrialRecord> trials;
  std::vector<double> t;
  std::vector<double> mean_displacement;  // x - x_d, m
  std::vector<double> sd_displacement;
  double initial_displacement = 0.0;      // at release, trial mean
  bool divergent = false;
};

ReleaseResult run_release(const ChainModel& model, ImpedanceGains gains,
                          const std::optional<FrictionSet>& friction_est,
                          const PlantConfig& plant, const ReleaseProtocol& protocol,
                          int jobs = 1);

// --- PD characterization ----------------------------------------------------

struct PdProtocol {
  std::vector<double> k_x{300.0, 400.0, 500.0, 600.0};
  std::vector<double> displacements{0.005, 0.01, 0.015, 0.02, 0.025};
  int repeats = 5;
  double hold_time = 0.5;  // s of recording per repeat

  bool operator==(const PdProtocol&) const = default;
};

struct PdPoint {
  double k_x = 0.0;
  double displacement = 0.0;
  double force_mean = 0.0;
  double force_sd = 0.0;
  double hold_force = 0.0;        // root-search result
  double achieved_displacement = 0.0;
  bool converged = false;
};

struct PdSweepResult {
  std::vector<PdPoint> points;
  std::vector<TrialRecord> trials;
};

// Static equilibrium of the closed loop under a constant end-effector
// force fx. Returns nullopt if Newton fails.
std::optional<Vec4> static_equilibrium(const ChainModel& model, const ControlLaw& law,
                                       const TaskTarget& target, double fx,
                                       const Vec4& seed);

// External x force that holds the closed loop statically at x_d + delta,
// found by a secant search over static_equilibrium started from
// k_guess * delta.
struct HoldSolution {
  bool converged = false;
  double force = 0.0;
  Vec4 q = Vec4::Zero();
};
HoldSolution solve_hold_force(const ChainModel& model, const ControlLaw& law,
                              const TaskTarget& target, double delta, const Vec4& seed,
                              double k_guess = 500.0);

PdSweepResult run_pd_sweep(const ChainModel& model, ImpedanceGains gains,
                           const PlantConfig& plant, const PdProtocol& protocol,
                           int jobs = 1);

}  // namespace sparc
