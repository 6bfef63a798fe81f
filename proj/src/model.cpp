#include "sparc/model.hpp"

#include <cmath>
#include <sstream>

namespace sparc {

namespace {

constexpr double kMaxGravity = 20.0;

bool finite(double v) { return std::isfinite(v); }

}  // namespace

double ChainModel::total_mass() const {
  double m = 0.0;
  for (const auto& l : links) m += l.mass;
  return m;
}

double ChainModel::total_length() const {
  double len = 0.0;
  for (const auto& l : links) len += l.length;
  return len;
}

ChainModel default_sparc_model() {
  // mass kg, length m, planar inertia = I_yy converted from kg mm^2.
  auto link = [](double mass, double length, double iyy_kg_mm2) {
    return LinkParams{mass, length, 0.5 * length, iyy_kg_mm2 * 1e-6};
  };
  ChainModel model;
  model.links = {
      link(0.377, 0.0632, 328.0),  // hind body
      link(0.376, 0.1175, 502.0),  // hind spine
      link(0.414, 0.1175, 175.0),  // front spine
      link(0.060, 0.0632, 92.0),   // front body
  };
  model.gravity = Vec2(0.0, -9.81);
  model.base_fixed = true;
  return model;
}

FrictionParams default_true_friction() {
  return FrictionParams{0.05, 0.12, 0.005, 0.1, 2.0, 200.0};
}

FrictionSet uniform_friction(const FrictionParams& p) { return {p, p, p, p}; }

Vec3 bench_equilibrium() { return {0.273, 0.0, 0.0}; }

std::vector<std::string> check(const LinkParams& link, const std::string& name) {
  std::vector<std::string> out;
  if (!(link.mass > 0.0) || !finite(link.mass)) out.push_back(name + ".mass must be > 0");
  if (!(link.length > 0.0) || !finite(link.length))
    out.push_back(name + ".length must be > 0");
  if (!(link.com_offset >= 0.0 && link.com_offset <= link.length))
    out.push_back(name + ".com_offset must lie in [0, length]");
  if (!(link.inertia_planar >= 0.0) || !finite(link.inertia_planar))
    out.push_back(name + ".inertia_planar must be >= 0");
  return out;
}

std::vector<std::string> check(const ChainModel& model) {
  std::vector<std::string> out;
  for (int i = 0; i < kNumJoints; ++i) {
    auto v = check(model.links[i], "ChainModel.links[" + std::to_string(i) + "]");
    out.insert(out.end(), v.begin(), v.end());
  }
  if (!model.gravity.allFinite() || model.gravity.norm() > kMaxGravity)
    out.push_back("ChainModel.gravity magnitude must be <= 20 m/s^2");
  return out;
}

std::vector<std::string> check(const ImpedanceGains& gains) {
  std::vector<std::string> out;
  const char* axes[] = {"x", "z", "theta"};
  for (int i = 0; i < 3; ++i) {
    if (!(gains.k[i] >= 0.0) || !finite(gains.k[i]))
      out.push_back(std::string("ImpedanceGains.k_") + axes[i] + " must be >= 0");
    if (!(gains.d[i] >= 0.0) || !finite(gains.d[i]))
      out.push_back(std::string("ImpedanceGains.d_") + axes[i] + " must be >= 0");
  }
  if (!(gains.lambda_dls >= 0.0) || !finite(gains.lambda_dls))
    out.push_back("ImpedanceGains.lambda_dls must be >= 0");
  return out;
}

std::vector<std::string> check(const FrictionParams& f, const std::string& name) {
  std::vector<std::string> out;
  if (!(f.tau_c >= 0.0)) out.push_back(name + ".tau_c must be >= 0");
  if (!(f.tau_s >= f.tau_c)) out.push_back(name + ".tau_s must be >= tau_c");
  if (!(f.qd_s > 0.0)) out.push_back(name + ".qd_s must be > 0");
  if (!(f.a_shape > 0.0)) out.push_back(name + ".a_shape must be > 0");
  if (!(f.beta > 0.0)) out.push_back(name + ".beta must be > 0");
  if (!(f.b_visc >= 0.0)) out.push_back(name + ".b_visc must be >= 0");
  return out;
}

std::vector<std::string> check(const FrictionSet& f, const std::string& name) {
  std::vector<std::string> out;
  for (int i = 0; i < kNumJoints; ++i) {
    auto v = check(f[i], name + "[" + std::to_string(i) + "]");
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

void ensure_valid(const std::vector<std::string>& violations) {
  if (violations.empty()) return;
  std::ostringstream os;
  os << "invalid configuration:";
  for (const auto& v : violations) os << "\n  " << v;
  throw ConfigError(os.str());
}

}  // namespace sparc
