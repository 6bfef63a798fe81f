#include "sparc/control.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace sparc {

namespace {

// r^a with the common integer shapes spelled out; pow dominates otherwise.
inline double shape_pow(double r, double a) {
  if (a == 2.0) return r * r;
  if (a == 1.0) return r;
  if (a == 0.0) return 1.0;
  return std::pow(r, a);
}

// exp(-x) for the Stribeck decay. Beyond x = 40 the result is below 5e-18
// and vanishes against tau_c in double precision, so exp is skipped.
inline double stribeck_decay(double x) { return x > 40.0 ? 0.0 : std::exp(-x); }

// tanh through a single exp; libm tanh goes through expm1 and is about
// three times slower. The series branch avoids cancellation near zero.
inline double fast_tanh(double x) {
  const double ax = std::abs(x);
  if (ax < 0.02) {
    const double x2 = x * x;
    return x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 + x2 * (-17.0 / 315.0))));
  }
  if (ax > 20.0) return std::copysign(1.0, x);
  const double e = std::exp(2.0 * ax);
  return std::copysign((e - 1.0) / (e + 1.0), x);
}

// Zero the base entry of every term (bench mode), then clamp and record the
// clamp correction so the breakdown still sums to tau_cmd.
void finalize(const ChainModel& model, double torque_limit, ControlOutput& out) {
  const Vec4 raw = out.terms.sum();
  if (model.base_fixed) {
    out.base_unused = true;
    out.base_torque_unused = raw[0];
    out.terms.inertial[0] = 0.0;
    out.terms.impedance[0] = 0.0;
    out.terms.bias[0] = 0.0;
    out.terms.friction[0] = 0.0;
  }
  const Vec4 unclamped = out.terms.sum();
  Vec4 tau = unclamped;
  for (int i = 0; i < kNumJoints; ++i) {
    if (std::abs(tau[i]) > torque_limit) {
      tau[i] = std::clamp(tau[i], -torque_limit, torque_limit);
      ++out.saturated_joints;
    }
  }
  out.terms.saturation = tau - unclamped;
  out.tau_cmd = tau;
}

}  // namespace

Mat43 dls_pinv(const Mat34& jac, const double lambda) {
  Mat3 jjt = jac * jac.transpose();
  jjt.diagonal().array() += lambda * lambda;
  if (lambda == 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(jjt, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 1e-12 * std::max(hi, 1e-300))) {
      throw SingularityError("dls_pinv: J J^T is singular and lambda = 0");
    }
  }
  return jac.transpose() * jjt.ldlt().solve(Mat3::Identity());
}

double stribeck_torque(const FrictionParams& p, const double qd) {
  const double decay = stribeck_decay(shape_pow(std::abs(qd) / std::abs(p.qd_s), p.a_shape));
  return (p.tau_c + (p.tau_s - p.tau_c) * decay) * fast_tanh(p.beta * qd) + p.b_visc * qd;
}

FrictionEval stribeck_eval(const FrictionParams& p, const double qd) {
  const double th = fast_tanh(p.beta * qd);
  const double r = std::abs(qd) / std::abs(p.qd_s);
  const double decay = stribeck_decay(shape_pow(r, p.a_shape));
  const double level = p.tau_c + (p.tau_s - p.tau_c) * decay;
  double dlevel = 0.0;
  if (r > 0.0) {
    dlevel = -(p.tau_s - p.tau_c) * decay * p.a_shape * shape_pow(r, p.a_shape - 1.0) /
             std::abs(p.qd_s) * (qd > 0.0 ? 1.0 : -1.0);
  }
  return {level * th + p.b_visc * qd, level * p.beta * (1.0 - th * th) + dlevel * th + p.b_visc};
}

double stribeck_slope(const FrictionParams& p, const double qd) { return stribeck_eval(p, qd).slope; }

Vec4 friction_compensation(const FrictionSet& params_est, const Vec4& qd,
                           const bool base_fixed) {
  Vec4 tau;
  for (int i = 0; i < kNumJoints; ++i) tau[i] = stribeck_torque(params_est[i], qd[i]);
  if (base_fixed) tau[0] = 0.0;
  return tau;
}

ControlOutput impedance_torque(const ChainModel& model, const JointState& state,
                               const TaskTarget& target, const ImpedanceGains& gains,
                               const std::optional<FrictionSet>& friction_est,
                               const double torque_limit) {
  const PlantTerms dyn = plant_terms(model, state.q, state.qd);
  const Mat34& jac = dyn.jacobian;
  const Mat43 jpinv = dls_pinv(jac, gains.lambda_dls);

  ControlOutput out;
  out.task_error = target.pos_d - dyn.pose;
  out.velocity_error = target.vel_d - jac * state.qd;

  const Vec3 task_acc = target.acc_d - jdot_qd(model, state.q, state.qd);
  out.terms.inertial = dyn.mass * (jpinv * task_acc);
  out.terms.impedance = jac.transpose() * (gains.d.cwiseProduct(out.velocity_error) +
                                           gains.k.cwiseProduct(out.task_error));
  out.terms.bias = dyn.bias;
  if (friction_est) {
    out.terms.friction = friction_compensation(*friction_est, state.qd, model.base_fixed);
  }
  finalize(model, torque_limit, out);
  return out;
}

ControlOutput pd_torque(const ChainModel& model, const JointState& state,
                        const TaskTarget& target, const ImpedanceGains& gains,
                        const double torque_limit) {
  const Mat34 jac = jacobian(model, state.q);
  ControlOutput out;
  out.task_error = target.pos_d - forward_kinematics(model, state.q);
  out.velocity_error = target.vel_d - jac * state.qd;
  out.terms.impedance = jac.transpose() * (gains.d.cwiseProduct(out.velocity_error) +
                                           gains.k.cwiseProduct(out.task_error));
  finalize(model, torque_limit, out);
  return out;
}

ControlOutput Controller::operator()(const ChainModel& model, const JointState& state,
                                     const TaskTarget& target) const {
  if (kind == ControllerKind::kPD) return pd_torque(model, state, target, gains, torque_limit);
  return impedance_torque(model, state, target, gains, friction_est, torque_limit);
}

}  // namespace sparc
