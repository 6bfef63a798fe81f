#pragma once

#include "sparc/model.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace sparc::testing {

// Seeded generator for property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }

  Vec4 angles(double span = 1.2) {
    return {uniform(-span, span), uniform(-span, span), uniform(-span, span),
            uniform(-span, span)};
  }

  Vec4 rates(double span = 2.0) { return angles(span); }

  Vec3 vec3(double span) { return {uniform(-span, span), uniform(-span, span), uniform(-span, span)}; }

  // Link with positive mass and length, CoM inside the link.
  LinkParams link() {
    LinkParams l;
    l.mass = uniform(0.05, 1.0);
    l.length = uniform(0.03, 0.2);
    l.com_offset = uniform(0.0, 1.0) * l.length;
    l.inertia_planar = uniform(1e-5, 1e-3);
    return l;
  }

  ChainModel model(bool base_fixed = false) {
    ChainModel m;
    for (auto& l : m.links) l = link();
    m.gravity = Vec2(uniform(-3.0, 3.0), uniform(-10.0, -5.0));
    m.base_fixed = base_fixed;
    return m;
  }

 private:
  std::mt19937_64 rng_;
};

inline double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace sparc::testing
