#include "sparc/dynamics.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>

namespace sparc {

namespace {

// Planar cross product (out-of-plane component).
inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Link directions u_i = (cos phi_i, sin phi_i) for the absolute link angles
// phi_i = q_0 + ... + q_i, and the joint positions p_0 .. p_4.
struct Frames {
  std::array<Vec2, kNumJoints> u;
  std::array<Vec2, kNumJoints + 1> p;
  double phi = 0.0;
};

Frames frames(const ChainModel& model, const Vec4& q) {
  Frames f;
  f.p[0] = Vec2::Zero();
  for (int i = 0; i < kNumJoints; ++i) {
    f.phi += q[i];
    f.u[i] = Vec2(std::cos(f.phi), std::sin(f.phi));
    f.p[i + 1] = f.p[i] + model.links[i].length * f.u[i];
  }
  return f;
}

// In-plane normal, u rotated by +90 deg.
inline Vec2 perp(const Vec2& u) { return {-u.y(), u.x()}; }

Vec4 rnea_pass(const ChainModel& model, const Frames& f, const Vec4& qd, const Vec4& qdd,
               const Wrench& ext) {
  std::array<double, kNumJoints> alpha{};
  std::array<Vec2, kNumJoints> com_force;

  // Outward pass. Gravity enters as an upward acceleration of the base.
  Vec2 joint_acc = -model.gravity;
  double omega = 0.0, alpha_acc = 0.0;
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& link = model.links[i];
    omega += qd[i];
    alpha_acc += qdd[i];
    const Vec2& u = f.u[i];
    const Vec2 n = perp(u);
    alpha[i] = alpha_acc;

    const Vec2 com_acc =
        joint_acc + alpha_acc * link.com_offset * n - omega * omega * link.com_offset * u;
    com_force[i] = link.mass * com_acc;
    joint_acc += alpha_acc * link.length * n - omega * omega * link.length * u;
  }

  // Inward pass. f/moment are what link i receives from its parent.
  Vec4 tau;
  Vec2 f_child(-ext.fx, -ext.fz);
  double m_child = -ext.tau;
  for (int i = kNumJoints - 1; i >= 0; --i) {
    const auto& link = model.links[i];
    const double moment = link.inertia_planar * alpha[i] +
                          cross2(link.com_offset * f.u[i], com_force[i]) + m_child +
                          cross2(link.length * f.u[i], f_child);
    f_child = com_force[i] + f_child;
    m_child = moment;
    tau[i] = moment;
  }
  return tau;
}

// M_ij = sum_{k >= max(i,j)} m_k (c_k - p_i).(c_k - p_j) + I_k, where c_k - p_i is
// the lever of link k's CoM about joint i. For i <= j this is
// A_j + (p_j - p_i).B_j + I_j with A_j, B_j the moments about joint j.
Mat4 mass_pass(const ChainModel& model, const Frames& f) {
  std::array<Vec2, kNumJoints> com;
  for (int k = 0; k < kNumJoints; ++k) {
    com[k] = f.p[k] + model.links[k].com_offset * f.u[k];
  }
  Mat4 mass;
  double inertia = 0.0;
  for (int j = kNumJoints - 1; j >= 0; --j) {
    inertia += model.links[j].inertia_planar;
    double a = 0.0;
    Vec2 b = Vec2::Zero();
    for (int k = j; k < kNumJoints; ++k) {
      const Vec2 r = com[k] - f.p[j];
      a += model.links[k].mass * r.squaredNorm();
      b += model.links[k].mass * r;
    }
    for (int i = 0; i <= j; ++i) {
      const double v = a + (f.p[j] - f.p[i]).dot(b) + inertia;
      mass(i, j) = v;
      mass(j, i) = v;
    }
  }
  return mass;
}

Mat34 jacobian_pass(const Frames& f) {
  const Vec2& tip = f.p[kNumJoints];
  Mat34 jac;
  for (int j = 0; j < kNumJoints; ++j) {
    const Vec2 r = tip - f.p[j];
    jac(0, j) = -r.y();
    jac(1, j) = r.x();
    jac(2, j) = 1.0;
  }
  return jac;
}

}  // namespace

std::array<Vec2, kNumJoints + 1> joint_positions(const ChainModel& model, const Vec4& q) {
  return frames(model, q).p;
}

Vec3 forward_kinematics(const ChainModel& model, const Vec4& q) {
  const Frames f = frames(model, q);
  return {f.p[kNumJoints].x(), f.p[kNumJoints].y(), f.phi};
}

Mat34 jacobian(const ChainModel& model, const Vec4& q) {
  return jacobian_pass(frames(model, q));
}

Vec3 jdot_qd(const ChainModel& model, const Vec4& q, const Vec4& qd) {
  const Frames f = frames(model, q);
  Vec2 acc = Vec2::Zero();
  double omega = 0.0;
  for (int i = 0; i < kNumJoints; ++i) {
    omega += qd[i];
    acc -= omega * omega * model.links[i].length * f.u[i];
  }
  return {acc.x(), acc.y(), 0.0};
}

TaskState task_state(const ChainModel& model, const JointState& s) {
  const Frames f = frames(model, s.q);
  return {Vec3(f.p[kNumJoints].x(), f.p[kNumJoints].y(), f.phi),
          jacobian_pass(f) * s.qd};
}

Vec4 rnea(const ChainModel& model, const Vec4& q, const Vec4& qd, const Vec4& qdd,
          const Wrench& ext) {
  return rnea_pass(model, frames(model, q), qd, qdd, ext);
}

// Scalar version of frames + mass_pass + rnea_pass(qdd = 0) + jacobian_pass.
// This sits in the innermost integrator loop, so it avoids the small-vector
// temporaries of the readable versions above.
namespace {

// sin and cos of a small angle by truncated Taylor series; for |d| <= 0.05 the
// truncation error is below 1e-21.
inline void small_sincos(const double d, double& sd, double& cd) {
  constexpr double s3 = -1.0 / 6.0, s5 = 1.0 / 120.0, s7 = -1.0 / 5040.0, s9 = 1.0 / 362880.0;
  constexpr double c2 = -0.5, c4 = 1.0 / 24.0, c6 = -1.0 / 720.0, c8 = 1.0 / 40320.0,
                   c10 = -1.0 / 3628800.0;
  const double d2 = d * d;
  sd = d + d * d2 * (s3 + d2 * (s5 + d2 * (s7 + d2 * s9)));
  cd = 1.0 + d2 * (c2 + d2 * (c4 + d2 * (c6 + d2 * (c8 + d2 * c10))));
}

PlantTerms plant_terms_impl(const ChainModel& model, const Vec4& q, const Vec4& qd,
                            LinkTrig* trig) {
  constexpr int n = kNumJoints;
  double c[n], s[n], px[n + 1], py[n + 1];
  double phi = 0.0;
  double ang[n];
  for (int i = 0; i < n; ++i) {
    phi += q[i];
    ang[i] = phi;
  }
  bool rotate = trig != nullptr && trig->valid;
  for (int i = 0; rotate && i < n; ++i) {
    rotate = std::abs(ang[i] - trig->phi[i]) <= LinkTrig::kMaxRotation;
  }
  if (rotate) {
    for (int i = 0; i < n; ++i) {
      double sd, cd;
      small_sincos(ang[i] - trig->phi[i], sd, cd);
      c[i] = trig->c[i] * cd - trig->s[i] * sd;
      s[i] = trig->s[i] * cd + trig->c[i] * sd;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      c[i] = std::cos(ang[i]);
      s[i] = std::sin(ang[i]);
    }
    if (trig != nullptr) {
      trig->valid = true;
      for (int i = 0; i < n; ++i) {
        trig->phi[i] = ang[i];
        trig->c[i] = c[i];
        trig->s[i] = s[i];
      }
    }
  }
  px[0] = py[0] = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& link = model.links[i];
    px[i + 1] = px[i] + link.length * c[i];
    py[i + 1] = py[i] + link.length * s[i];
  }

  PlantTerms out;
  // Composite inertia of links j..n-1 about joint j, shifted joint by joint
  // toward the base (parallel-axis recursion).
  double inertia = 0.0, a = 0.0, bx = 0.0, by = 0.0, mc = 0.0;
  for (int j = n - 1; j >= 0; --j) {
    const auto& link = model.links[j];
    const double dx = px[j + 1] - px[j];
    const double dy = py[j + 1] - py[j];
    a += 2.0 * (dx * bx + dy * by) + mc * (dx * dx + dy * dy);
    bx += mc * dx;
    by += mc * dy;
    const double m = link.mass;
    const double lc = link.com_offset;
    a += m * lc * lc;
    bx += m * lc * c[j];
    by += m * lc * s[j];
    mc += m;
    inertia += link.inertia_planar;
    for (int i = 0; i <= j; ++i) {
      const double v = a + (px[j] - px[i]) * bx + (py[j] - py[i]) * by + inertia;
      out.mass(i, j) = v;
      out.mass(j, i) = v;
    }
  }

  double fx[n], fy[n];
  double ax = -model.gravity.x(), ay = -model.gravity.y(), omega = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& link = model.links[i];
    omega += qd[i];
    const double w2 = omega * omega;
    fx[i] = link.mass * (ax - w2 * link.com_offset * c[i]);
    fy[i] = link.mass * (ay - w2 * link.com_offset * s[i]);
    ax -= w2 * link.length * c[i];
    ay -= w2 * link.length * s[i];
  }
  double fcx = 0.0, fcy = 0.0, moment = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const auto& link = model.links[i];
    moment += link.com_offset * (c[i] * fy[i] - s[i] * fx[i]) +
              link.length * (c[i] * fcy - s[i] * fcx);
    fcx += fx[i];
    fcy += fy[i];
    out.bias[i] = moment;
  }

  for (int j = 0; j < n; ++j) {
    out.jacobian(0, j) = -(py[n] - py[j]);
    out.jacobian(1, j) = px[n] - px[j];
    out.jacobian(2, j) = 1.0;
  }
  out.pose = Vec3(px[n], py[n], phi);
  return out;
}

}  // namespace

PlantTerms plant_terms(const ChainModel& model, const Vec4& q, const Vec4& qd) {
  return plant_terms_impl(model, q, qd, nullptr);
}

PlantTerms plant_terms(const ChainModel& model, const Vec4& q, const Vec4& qd, LinkTrig& trig) {
  return plant_terms_impl(model, q, qd, &trig);
}

DynamicsTerms extract_terms(const ChainModel& model, const Vec4& q, const Vec4& qd) {
  const Frames f = frames(model, q);
  DynamicsTerms terms;
  const Vec4 zero = Vec4::Zero();
  terms.gravity_vec = rnea_pass(model, f, zero, zero, {});
  terms.bias = rnea_pass(model, f, qd, zero, {});
  for (int i = 0; i < kNumJoints; ++i) {
    terms.mass_matrix.col(i) = rnea_pass(model, f, zero, Vec4::Unit(i), {}) - terms.gravity_vec;
  }
  return terms;
}

Mat4 mass_matrix_direct(const ChainModel& model, const Vec4& q) {
  return mass_pass(model, frames(model, q));
}

Mat3 task_inertia(const ChainModel& model, const Vec4& q, const double lambda_dls) {
  const Mat4 mass = mass_matrix_direct(model, q);
  const Mat34 jac = jacobian(model, q);

  Mat3 mobility;
  if (model.base_fixed) {
    const Mat3 m_r = mass.bottomRightCorner<3, 3>();
    const Mat3 j_r = jac.rightCols<3>();
    mobility = j_r * m_r.ldlt().solve(j_r.transpose());
  } else {
    mobility = jac * mass.ldlt().solve(jac.transpose());
  }
  mobility += lambda_dls * lambda_dls * Mat3::Identity();
  mobility = 0.5 * (mobility + mobility.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat3> eig(mobility, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 1e-12 * std::max(hi, 1e-300))) {
    throw SingularityError("task_inertia: J M^-1 J^T is singular at this configuration");
  }
  Mat3 lambda = mobility.inverse();
  return 0.5 * (lambda + lambda.transpose());
}

Vec4 inverse_kinematics(const ChainModel& model, const Vec3& pose, const Vec4& seed,
                        const double q0) {
  Vec4 q = seed;
  q[0] = q0;
  for (int it = 0; it < 200; ++it) {
    const Vec3 err = pose - forward_kinematics(model, q);
    if (err.norm() < 1e-14) return q;
    const Mat3 j_r = jacobian(model, q).rightCols<3>();
    const Mat3 jjt = j_r * j_r.transpose() + 1e-12 * Mat3::Identity();
    q.tail<3>() += j_r.transpose() * jjt.ldlt().solve(err);
  }
  const Vec3 err = pose - forward_kinematics(model, q);
  if (err.norm() < 1e-10) return q;
  throw SingularityError("inverse_kinematics did not converge");
}

Vec4 equilibrium_configuration(const ChainModel& model, const Vec3& pose) {
  return inverse_kinematics(model, pose, Vec4(0.0, 0.9, -1.8, 0.9), 0.0);
}

}  // namespace sparc
