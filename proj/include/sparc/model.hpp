#pragma once

#include "sparc/types.hpp"

#include <array>
#include <string>
#include <vector>

namespace sparc {

// Inertial and kinematic parameters of one link of the planar chain.
// com_offset is measured along the link axis from the proximal joint;
// inertia_planar is about the out-of-plane axis through the CoM.
struct LinkParams {
  double mass = 0.0;            // kg
  double length = 0.0;          // m
  double com_offset = 0.0;      // m
  double inertia_planar = 0.0;  // kg m^2

  bool operator==(const LinkParams&) const = default;
};

// Planar 4-R chain ordered hind body, hind spine, front spine, front body.
// Joint i sits at the proximal end of link i; joint 0 is the base joint.
// When base_fixed is set the base joint is clamped (bench mode).
struct ChainModel {
  std::array<LinkParams, kNumJoints> links{};
  Vec2 gravity{0.0, -9.81};  // (x, z) in the base frame, m/s^2
  bool base_fixed = true;

  double total_mass() const;
  double total_length() const;

  bool operator==(const ChainModel&) const = default;
};

struct JointState {
  Vec4 q = Vec4::Zero();
  Vec4 qd = Vec4::Zero();
  double t = 0.0;
};

// End-effector pose and twist in the sagittal plane.
struct TaskState {
  Vec3 pos = Vec3::Zero();  // (x, z, theta)
  Vec3 vel = Vec3::Zero();  // (xd, zd, thetad)
};

struct TaskTarget {
  Vec3 pos_d = Vec3::Zero();
  Vec3 vel_d = Vec3::Zero();
  Vec3 acc_d = Vec3::Zero();
};

struct ImpedanceGains {
  Vec3 k{500.0, 1000.0, 15.0};  // N/m, N/m, N m/rad
  Vec3 d{20.0, 10.0, 0.05};     // N s/m, N s/m, N m s/rad
  double lambda_dls = 1e-2;

  bool operator==(const ImpedanceGains&) const = default;
};

// Smooth Stribeck friction parameters for one joint.
struct FrictionParams {
  double tau_c = 0.0;   // Coulomb level, N m
  double tau_s = 0.0;   // static level, N m
  double b_visc = 0.0;  // N m s/rad
  double qd_s = 0.1;    // Stribeck velocity, rad/s
  double a_shape = 2.0;
  double beta = 100.0;  // tanh sharpness, s/rad

  bool operator==(const FrictionParams&) const = default;
};

using FrictionSet = std::array<FrictionParams, kNumJoints>;

// External wrench acting on the end-effector, expressed in the base frame.
struct Wrench {
  double fx = 0.0;
  double fz = 0.0;
  double tau = 0.0;

  Vec3 as_vector() const { return {fx, fz, tau}; }
  bool operator==(const Wrench&) const = default;
};

ChainModel default_sparc_model();

// Plant-truth friction used by the simulator unless configured otherwise.
FrictionParams default_true_friction();
FrictionSet uniform_friction(const FrictionParams& p);

// Equilibrium used by the bench experiments: x = 0.273 m, z = 0, theta = 0.
Vec3 bench_equilibrium();

// Invariant checks. Each returns a list of violations, one human-readable
// line per broken field; an empty list means the value is valid.
std::vector<std::string> check(const LinkParams& link, const std::string& name);
std::vector<std::string> check(const ChainModel& model);
std::vector<std::string> check(const ImpedanceGains& gains);
std::vector<std::string> check(const FrictionParams& f, const std::string& name);
std::vector<std::string> check(const FrictionSet& f, const std::string& name);

// Throw ConfigError listing all violations, if any.
void ensure_valid(const std::vector<std::string>& violations);

}  // namespace sparc
