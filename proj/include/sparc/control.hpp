#pragma once

#include "sparc/dynamics.hpp"
#include "sparc/model.hpp"

#include <optional>

namespace sparc {

// Peak torque per actuator, N m.
inline constexpr double kDefaultTorqueLimit = 12.0;

struct TorqueBreakdown {
  Vec4 inertial = Vec4::Zero();    // M J^+ (xdd_d - Jdot qd)
  Vec4 impedance = Vec4::Zero();   // J^T (D e_dot + K e)
  Vec4 bias = Vec4::Zero();        // C qd + g
  Vec4 friction = Vec4::Zero();    // Stribeck feedforward
  Vec4 saturation = Vec4::Zero();  // clamp correction, zero when unsaturated

  Vec4 sum() const { return inertial + impedance + bias + friction + saturation; }
};

struct ControlOutput {
  Vec4 tau_cmd = Vec4::Zero();
  Vec3 task_error = Vec3::Zero();      // x_d - x
  Vec3 velocity_error = Vec3::Zero();  // xd_d - J qd
  TorqueBreakdown terms;
  // Base joint torque the law asked for before it was dropped (bench mode).
  double base_torque_unused = 0.0;
  bool base_unused = false;
  int saturated_joints = 0;
};

// Damped least-squares pseudoinverse J^T (J J^T + lambda^2 I)^-1. With
// lambda = 0 a singular J J^T raises SingularityError.
Mat43 dls_pinv(const Mat34& jac, double lambda);

// Smooth Stribeck friction torque for a single joint.
double stribeck_torque(const FrictionParams& params, double qd);

// d(stribeck_torque)/d(qd).
double stribeck_slope(const FrictionParams& params, double qd);

struct FrictionEval {
  double torque = 0.0;
  double slope = 0.0;
};
FrictionEval stribeck_eval(const FrictionParams& params, double qd);

// Per-joint friction feedforward; the base entry is zeroed when base_fixed.
Vec4 friction_compensation(const FrictionSet& params_est, const Vec4& qd,
                           bool base_fixed);

// Cartesian impedance law with computed-acceleration feedforward:
//   tau = M J^+ (xdd_d - Jdot qd) + J^T (D e_dot + K e) + C qd + g [+ friction].
ControlOutput impedance_torque(const ChainModel& model, const JointState& state,
                               const TaskTarget& target, const ImpedanceGains& gains,
                               const std::optional<FrictionSet>& friction_est = std::nullopt,
                               double torque_limit = kDefaultTorqueLimit);

// Task-space PD: tau = J^T (D e_dot + K e). No model compensation.
ControlOutput pd_torque(const ChainModel& model, const JointState& state,
                        const TaskTarget& target, const ImpedanceGains& gains,
                        double torque_limit = kDefaultTorqueLimit);

enum class ControllerKind { kImpedance, kPD };

// Bundles a control law with its parameters so the simulator can call it
// once per control tick.
struct Controller {
  ControllerKind kind = ControllerKind::kImpedance;
  ImpedanceGains gains;
  std::optional<FrictionSet> friction_est;
  double torque_limit = kDefaultTorqueLimit;

  ControlOutput operator()(const ChainModel& model, const JointState& state,
                           const TaskTarget& target) const;
};

}  // namespace sparc
