#include "sparc/dynamics.hpp"
#include "sparc/sim.hpp"
#include "support.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace sparc {
namespace {

using testing::Gen;

// Homogeneous transforms Rot(q_i) * Trans(l_i, 0), composed link by link.
Eigen::Matrix3d joint_transform(double q, double length) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  t << std::cos(q), -std::sin(q), std::cos(q) * length,  //
      std::sin(q), std::cos(q), std::sin(q) * length,    //
      0.0, 0.0, 1.0;
  return t;
}

Vec3 fk_oracle(const ChainModel& m, const Vec4& q) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  for (int i = 0; i < kNumJoints; ++i) t = t * joint_transform(q[i], m.links[i].length);
  return {t(0, 2), t(1, 2), std::atan2(t(1, 0), t(0, 0))};
}

// CoM of link k from the same transform chain.
Vec2 com_oracle(const ChainModel& m, const Vec4& q, int k) {
  Eigen::Matrix3d t = Eigen::Matrix3d::Identity();
  for (int i = 0; i < k; ++i) t = t * joint_transform(q[i], m.links[i].length);
  t = t * joint_transform(q[k], m.links[k].com_offset);
  return {t(0, 2), t(1, 2)};
}

double kinetic_energy_oracle(const ChainModel& m, const Vec4& q, const Vec4& qd) {
  const double h = 1e-6;
  double energy = 0.0, omega = 0.0;
  for (int k = 0; k < kNumJoints; ++k) {
    omega += qd[k];
    const Vec2 v = (com_oracle(m, q + h * qd, k) - com_oracle(m, q - h * qd, k)) / (2.0 * h);
    energy += 0.5 * m.links[k].mass * v.squaredNorm() +
              0.5 * m.links[k].inertia_planar * omega * omega;
  }
  return energy;
}

double potential_oracle(const ChainModel& m, const Vec4& q) {
  double v = 0.0;
  for (int k = 0; k < kNumJoints; ++k) v -= m.links[k].mass * m.gravity.dot(com_oracle(m, q, k));
  return v;
}

TEST(ForwardKinematics, StraightChain) {
  const Vec3 x = forward_kinematics(default_sparc_model(), Vec4::Zero());
  EXPECT_NEAR(x.x(), 0.3614, 1e-12);
  EXPECT_EQ(x.y(), 0.0);
  EXPECT_EQ(x.z(), 0.0);
}

TEST(ForwardKinematics, RotatedStraightChain) {
  const Vec3 x =
      forward_kinematics(default_sparc_model(), Vec4(std::numbers::pi / 2, 0.0, 0.0, 0.0));
  EXPECT_NEAR(x.x(), 0.0, 1e-15);
  EXPECT_NEAR(x.y(), 0.3614, 1e-12);
  EXPECT_DOUBLE_EQ(x.z(), std::numbers::pi / 2);
}

TEST(ForwardKinematics, MatchesHomogeneousTransformOracle) {
  Gen gen(11);
  for (int n = 0; n < 200; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles(0.7);
    const Vec3 x = forward_kinematics(m, q);
    const Vec3 o = fk_oracle(m, q);
    EXPECT_NEAR(x.x(), o.x(), 1e-12);
    EXPECT_NEAR(x.y(), o.y(), 1e-12);
    EXPECT_NEAR(x.z(), o.z(), 1e-12);
    EXPECT_NEAR(x.z(), q.sum(), 1e-14);
  }
}

TEST(ForwardKinematics, JointPositionsEndAtTip) {
  const ChainModel m = default_sparc_model();
  const Vec4 q(0.1, 0.4, -0.3, 0.2);
  const auto p = joint_positions(m, q);
  EXPECT_EQ(p[0], Vec2::Zero());
  EXPECT_NEAR((p[4] - forward_kinematics(m, q).head<2>()).norm(), 0.0, 1e-15);
  for (int i = 0; i < kNumJoints; ++i) EXPECT_NEAR((p[i + 1] - p[i]).norm(), m.links[i].length, 1e-15);
}

TEST(Jacobian, ThetaRowIsOnes) {
  Gen gen(3);
  for (int n = 0; n < 20; ++n) {
    const Mat34 j = jacobian(default_sparc_model(), gen.angles());
    EXPECT_EQ(j.row(2), Eigen::RowVector4d::Ones());
  }
}

TEST(Jacobian, StraightChainHasZeroXRow) {
  const Mat34 j = jacobian(default_sparc_model(), Vec4::Zero());
  EXPECT_EQ(j.row(0), Eigen::RowVector4d::Zero());
}

TEST(Jacobian, MatchesCentralDifferences) {
  Gen gen(5);
  const double h = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles();
    const Mat34 j = jacobian(m, q);
    for (int c = 0; c < kNumJoints; ++c) {
      const Vec4 e = Vec4::Unit(c);
      const Vec3 fd = (forward_kinematics(m, q + h * e) - forward_kinematics(m, q - h * e)) / (2 * h);
      EXPECT_LT((j.col(c) - fd).cwiseAbs().maxCoeff(), 1e-6);
    }
  }
}

TEST(Jacobian, TransposeDuality) {
  Gen gen(6);
  for (int n = 0; n < 100; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles();
    const Vec4 qd = gen.rates();
    const Vec3 f = gen.vec3(10.0);
    const Mat34 j = jacobian(m, q);
    const double joint_power = (j.transpose() * f).dot(qd);
    const double task_power = f.dot(j * qd);
    EXPECT_NEAR(joint_power, task_power, 1e-13 * (1.0 + std::abs(task_power)));
  }
}

TEST(JdotQd, ZeroAtRest) {
  EXPECT_EQ(jdot_qd(default_sparc_model(), Vec4(0.1, 0.2, 0.3, 0.4), Vec4::Zero()), Vec3::Zero());
}

TEST(JdotQd, MatchesDifferenceOfJacobians) {
  Gen gen(7);
  const double h = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles();
    const Vec4 qd = gen.rates();
    const Vec3 a = jdot_qd(m, q, qd);
    EXPECT_EQ(a.z(), 0.0);
    const Vec3 fd = (jacobian(m, q + h * qd) - jacobian(m, q - h * qd)) / (2 * h) * qd;
    EXPECT_LT((a - fd).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Rnea, SingleLinkPendulum) {
  ChainModel m = default_sparc_model();
  for (int i = 1; i < kNumJoints; ++i) m.links[i].mass = 0.0;
  const Vec4 tau = rnea(m, Vec4::Zero(), Vec4::Zero(), Vec4::Zero());
  EXPECT_NEAR(tau[0], 0.377 * 9.81 * 0.0316, 1e-12);
  EXPECT_NEAR(tau[0], 0.1169, 5e-5);
  EXPECT_NEAR(tau.tail<3>().norm(), 0.0, 1e-15);
}

TEST(Rnea, NoForcesNoTorque) {
  ChainModel m = default_sparc_model();
  m.gravity = Vec2::Zero();
  EXPECT_EQ(rnea(m, Vec4(0.3, -0.2, 0.5, 0.1), Vec4::Zero(), Vec4::Zero()), Vec4::Zero());
}

TEST(Rnea, MatchesExtractedTerms) {
  Gen gen(8);
  for (int n = 0; n < 200; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles(), qd = gen.rates(), qdd = gen.rates(5.0);
    const Wrench ext{gen.uniform(-5, 5), gen.uniform(-5, 5), gen.uniform(-1, 1)};
    const DynamicsTerms t = extract_terms(m, q, qd);
    const Vec4 rhs = t.mass_matrix * qdd + t.bias - jacobian(m, q).transpose() * ext.as_vector();
    EXPECT_LT((rnea(m, q, qd, qdd, ext) - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Rnea, LinearInAcceleration) {
  Gen gen(9);
  for (int n = 0; n < 100; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles(), qd = gen.rates(), a1 = gen.rates(3), a2 = gen.rates(3);
    const double alpha = gen.uniform(-2, 2), beta = gen.uniform(-2, 2);
    const Vec4 bias = rnea(m, q, qd, Vec4::Zero());
    const Vec4 lhs = rnea(m, q, qd, alpha * a1 + beta * a2) - bias;
    const Vec4 rhs = alpha * (rnea(m, q, qd, a1) - bias) + beta * (rnea(m, q, qd, a2) - bias);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(ExtractTerms, MassMatrixSymmetricPositiveDefinite) {
  Gen gen(10);
  for (int n = 0; n < 1000; ++n) {
    const ChainModel m = gen.model();
    const Mat4 mass = extract_terms(m, gen.angles(3.0), Vec4::Zero()).mass_matrix;
    EXPECT_LE((mass - mass.transpose()).cwiseAbs().maxCoeff(), 1e-9 * mass.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat4> es(mass);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(ExtractTerms, BiasEqualsGravityAtRest) {
  const ChainModel m = default_sparc_model();
  const DynamicsTerms t = extract_terms(m, Vec4(0.2, 0.5, -0.4, 0.1), Vec4::Zero());
  EXPECT_EQ(t.bias, t.gravity_vec);
}

TEST(ExtractTerms, KineticEnergyMatchesTransformOracle) {
  Gen gen(12);
  for (int n = 0; n < 100; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles(), qd = gen.rates();
    const Mat4 mass = extract_terms(m, q, qd).mass_matrix;
    const double t = 0.5 * qd.dot(mass * qd);
    EXPECT_NEAR(t, kinetic_energy_oracle(m, q, qd), 1e-8 * (1.0 + t));
  }
}

TEST(ExtractTerms, GravityIsPotentialGradient) {
  Gen gen(13);
  const double h = 1e-6;
  for (int n = 0; n < 100; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles();
    const Vec4 g = extract_terms(m, q, Vec4::Zero()).gravity_vec;
    for (int i = 0; i < kNumJoints; ++i) {
      const Vec4 e = Vec4::Unit(i);
      const double fd = (potential_oracle(m, q + h * e) - potential_oracle(m, q - h * e)) / (2 * h);
      EXPECT_NEAR(g[i], fd, 1e-7);
    }
  }
}

TEST(ExtractTerms, DirectMassMatrixAndFusedTermsAgree) {
  Gen gen(14);
  for (int n = 0; n < 200; ++n) {
    const ChainModel m = gen.model();
    const Vec4 q = gen.angles(3.0), qd = gen.rates();
    const DynamicsTerms t = extract_terms(m, q, qd);
    const PlantTerms p = plant_terms(m, q, qd);
    EXPECT_LT((mass_matrix_direct(m, q) - t.mass_matrix).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.mass - t.mass_matrix).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.bias - t.bias).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.jacobian - jacobian(m, q)).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_EQ(p.pose, forward_kinematics(m, q));
  }
}

TEST(ExtractTerms, CachedTrigMatchesDirect) {
  Gen gen(15);
  const ChainModel m = default_sparc_model();
  for (int n = 0; n < 50; ++n) {
    LinkTrig trig;
    const Vec4 q0 = gen.angles(), qd = gen.rates();
    plant_terms(m, q0, qd, trig);
    for (const double step : {1e-6, 1e-3, 0.01, 0.02, 0.1}) {
      const Vec4 q = q0 + Vec4::Constant(step * gen.uniform(-1, 1));
      LinkTrig copy = trig;
      const PlantTerms a = plant_terms(m, q, qd, copy);
      const PlantTerms b = plant_terms(m, q, qd);
      EXPECT_LT((a.mass - b.mass).cwiseAbs().maxCoeff(), 1e-15);
      EXPECT_LT((a.bias - b.bias).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_LT((a.jacobian - b.jacobian).cwiseAbs().maxCoeff(), 1e-15);
    }
  }
}

// d/dt (1/2 qd' M qd) = qd' (tau - g) along a frictionless trajectory, checked
// in integrated form with the trapezoid rule over 1 s.
TEST(ExtractTerms, PowerBalanceAlongTrajectory) {
  Gen gen(16);
  for (int trial = 0; trial < 3; ++trial) {
    ChainModel m = default_sparc_model();
    m.base_fixed = false;
    PlantConfig plant;
    plant.friction_true = uniform_friction(FrictionParams{0.0, 0.0, 0.0, 0.1, 2.0, 100.0});
    const Vec4 tau = 0.02 * gen.rates(1.0);
    JointState s;
    s.q = gen.angles(0.5);
    s.qd = gen.rates(0.5);
    auto kinetic = [&](const JointState& st) {
      return 0.5 * st.qd.dot(extract_terms(m, st.q, st.qd).mass_matrix * st.qd);
    };
    auto power = [&](const JointState& st) {
      return st.qd.dot(tau - extract_terms(m, st.q, Vec4::Zero()).gravity_vec);
    };
    const double k0 = kinetic(s);
    double work = 0.0, scale = 0.0, p_prev = power(s);
    for (int i = 0; i < 1000; ++i) {
      s = plant_step(m, plant, s, tau, Wrench{});
      const double p = power(s);
      work += 0.5 * plant.control_dt * (p_prev + p);
      scale += 0.5 * plant.control_dt * (std::abs(p_prev) + std::abs(p));
      p_prev = p;
    }
    EXPECT_NEAR(kinetic(s) - k0, work, 1e-4 * scale);
  }
}

TEST(TaskInertia, SymmetricPositiveDefinite) {
  Gen gen(17);
  for (int n = 0; n < 200; ++n) {
    const ChainModel m = gen.model(n % 2 == 0);
    const Vec4 q = gen.angles();
    const Mat3 lambda = task_inertia(m, q, 1e-3);
    EXPECT_LE((lambda - lambda.transpose()).cwiseAbs().maxCoeff(),
              1e-9 * lambda.cwiseAbs().maxCoeff());
    Eigen::SelfAdjointEigenSolver<Mat3> es(lambda);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(TaskInertia, MatchesExplicitFormula) {
  Gen gen(18);
  for (int n = 0; n < 50; ++n) {
    ChainModel m = gen.model(false);
    const Vec4 q = gen.angles();
    const double lam = 1e-2;
    const Mat4 mass = extract_terms(m, q, Vec4::Zero()).mass_matrix;
    const Mat34 j = jacobian(m, q);
    Mat3 inv = j * mass.inverse() * j.transpose() + lam * lam * Mat3::Identity();
    EXPECT_LT((task_inertia(m, q, lam) - inv.inverse()).cwiseAbs().maxCoeff(),
              1e-9 * inv.inverse().cwiseAbs().maxCoeff());

    m.base_fixed = true;
    const Eigen::Matrix3d mr = mass.bottomRightCorner<3, 3>();
    const Eigen::Matrix3d jr = j.rightCols<3>();
    inv = jr * mr.inverse() * jr.transpose() + lam * lam * Mat3::Identity();
    EXPECT_LT((task_inertia(m, q, lam) - inv.inverse()).cwiseAbs().maxCoeff(),
              1e-9 * inv.inverse().cwiseAbs().maxCoeff());
  }
}

TEST(TaskInertia, CouplingAtGenericConfiguration) {
  const Mat3 lambda = task_inertia(default_sparc_model(), Vec4(0.0, 0.3, -0.5, 0.2), 1e-2);
  EXPECT_GT(std::abs(lambda(0, 1)), 1e-3 * lambda(0, 0));
  EXPECT_GT(std::abs(lambda(0, 2)), 0.0);
  EXPECT_GT(std::abs(lambda(1, 2)), 0.0);
}

TEST(TaskInertia, SingularWithoutDamping) {
  ChainModel m = default_sparc_model();
  m.base_fixed = false;
  EXPECT_THROW(task_inertia(m, Vec4::Zero(), 0.0), SingularityError);
}

TEST(InverseKinematics, BenchEquilibrium) {
  const ChainModel m = default_sparc_model();
  const Vec4 q = equilibrium_configuration(m, bench_equilibrium());
  EXPECT_EQ(q[0], 0.0);
  EXPECT_LT((forward_kinematics(m, q) - bench_equilibrium()).norm(), 1e-10);
  EXPECT_NEAR(q[1], 0.897163, 1e-6);
  EXPECT_NEAR(q[2], -1.79433, 1e-5);
  EXPECT_NEAR(q[3], 0.897163, 1e-6);
}

TEST(InverseKinematics, RandomReachableTargets) {
  Gen gen(19);
  const ChainModel m = default_sparc_model();
  for (int n = 0; n < 50; ++n) {
    Vec4 q = gen.angles(0.8);
    q[0] = 0.0;
    const Vec3 pose = forward_kinematics(m, q);
    const Vec4 sol = inverse_kinematics(m, pose, q + 0.05 * gen.angles(1.0));
    EXPECT_LT((forward_kinematics(m, sol) - pose).norm(), 1e-10);
  }
}

TEST(InverseKinematics, UnreachableThrows) {
  EXPECT_THROW(inverse_kinematics(default_sparc_model(), Vec3(1.0, 0.0, 0.0), Vec4::Zero()),
               SingularityError);
}

}  // namespace
}  // namespace sparc
