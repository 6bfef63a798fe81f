#pragma once

#include "sparc/model.hpp"
#include "sparc/types.hpp"

namespace sparc {

// M(q), C(q, qd) qd + g(q), and g(q) for one configuration.
struct DynamicsTerms {
  Mat4 mass_matrix = Mat4::Zero();
  Vec4 bias = Vec4::Zero();
  Vec4 gravity_vec = Vec4::Zero();
};

// End-effector (x, z, theta) in the base frame.
Vec3 forward_kinematics(const ChainModel& model, const Vec4& q);

// Positions of the four joints and the end-effector tip, in chain order.
std::array<Vec2, kNumJoints + 1> joint_positions(const ChainModel& model, const Vec4& q);

// Geometric Jacobian with rows (x, z, theta).
Mat34 jacobian(const ChainModel& model, const Vec4& q);

// Jdot(q, qd) * qd, the velocity-product part of the end-effector acceleration.
Vec3 jdot_qd(const ChainModel& model, const Vec4& q, const Vec4& qd);

TaskState task_state(const ChainModel& model, const JointState& s);

// Inverse dynamics by recursive Newton-Euler on the planar chain:
//   tau = M(q) qdd + C(q, qd) qd + g(q) - J(q)^T ext.
// The external wrench acts on the end-effector tip.
Vec4 rnea(const ChainModel& model, const Vec4& q, const Vec4& qd, const Vec4& qdd,
          const Wrench& ext = {});

// M, C qd + g and g from six RNEA evaluations.
DynamicsTerms extract_terms(const ChainModel& model, const Vec4& q, const Vec4& qd);

// Mass matrix assembled from the per-link CoM Jacobians,
// M = sum_k m_k Jc_k^T Jc_k + I_k jw_k^T jw_k. Independent of RNEA; the
// simulator uses it for forward dynamics.
Mat4 mass_matrix_direct(const ChainModel& model, const Vec4& q);

// Mass matrix, bias, Jacobian and pose at one state, sharing a single
// trigonometric pass. Same values as the individual functions.
struct PlantTerms {
  Mat4 mass;
  Vec4 bias;  // C(q, qd) qd + g(q)
  Mat34 jacobian;
  Vec3 pose;
};
PlantTerms plant_terms(const ChainModel& model, const Vec4& q, const Vec4& qd);

// Absolute link angles with their cosines and sines. When passed to
// plant_terms, angles within kMaxRotation of the cached ones are obtained by
// rotating the cached values through a short series instead of calling
// sin/cos; otherwise the cache is refilled. Agrees with the direct evaluation
// to a few ulp.
struct LinkTrig {
  static constexpr double kMaxRotation = 0.05;
  bool valid = false;
  Vec4 phi = Vec4::Zero();
  Vec4 c = Vec4::Zero();
  Vec4 s = Vec4::Zero();
};
PlantTerms plant_terms(const ChainModel& model, const Vec4& q, const Vec4& qd, LinkTrig& trig);

// Task-space inertia Lambda = (J M^-1 J^T + lambda^2 I)^-1. With a fixed base
// the base joint is removed from the chain before inverting, so Lambda is the
// inertia felt at the end-effector of the clamped mechanism.
Mat3 task_inertia(const ChainModel& model, const Vec4& q, double lambda_dls);

// Joint configuration placing the end-effector at `pose` with the base joint
// held at q0. Damped Newton iteration from `seed`; throws SingularityError if
// it does not converge.
Vec4 inverse_kinematics(const ChainModel& model, const Vec3& pose, const Vec4& seed,
                        double q0 = 0.0);

// Bench equilibrium configuration (elbow up, base joint at zero).
Vec4 equilibrium_configuration(const ChainModel& model, const Vec3& pose);

}  // namespace sparc
