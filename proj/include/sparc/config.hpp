#pragma once

#include "sparc/model.hpp"
#include "sparc/sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sparc {

// Multiplicative factors applied to plant-truth friction to form the
// controller's estimate. All ones is a perfect estimate.
struct FrictionScale {
  double tau_c = 1.0;
  double tau_s = 1.0;
  double b_visc = 1.0;
  double qd_s = 1.0;
  double a_shape = 1.0;
  double beta = 1.0;

  bool operator==(const FrictionScale&) const = default;
};

// Uniform scale of every parameter.
FrictionScale uniform_scale(double factor);
FrictionSet scaled(const FrictionSet& truth, const FrictionScale& scale);

struct FrictionEstimate {
  bool enabled = true;
  FrictionScale scale;

  bool operator==(const FrictionEstimate&) const = default;
};

struct StaticSweepConfig {
  std::vector<double> k_x{300.0, 400.0, 500.0, 600.0, 700.0};
  StaticProtocol protocol;  // k_x is overwritten per sweep entry
  std::size_t chunk_size = 200;

  bool operator==(const StaticSweepConfig&) const = default;
};

struct ReleaseSweepConfig {
  std::vector<double> k_x{300.0, 500.0};
  std::vector<double> d_x{0.0, 2.0, 20.0, 40.0};
  ReleaseProtocol protocol;  // k_x, d_x are overwritten per cell
  FrictionEstimate friction_est;

  bool operator==(const ReleaseSweepConfig&) const = default;
};

struct PdSweepConfig {
  PdProtocol protocol;

  bool operator==(const PdSweepConfig&) const = default;
};

// Everything needed to reproduce an experiment, together with the seed in
// plant.noise_seed.
struct ExperimentConfig {
  ChainModel model = default_sparc_model();
  ImpedanceGains gains;
  PlantConfig plant;
  FrictionEstimate friction_est;  // static sweep; release has its own
  StaticSweepConfig static_sweep;
  ReleaseSweepConfig release;
  PdSweepConfig pd;

  bool operator==(const ExperimentConfig&) const = default;

  std::optional<FrictionSet> static_friction_estimate() const;
  std::optional<FrictionSet> release_friction_estimate() const;
};

// All invariant violations, one line per field.
std::vector<std::string> check(const ExperimentConfig& config);

// Parse a JSON document. Missing fields keep their defaults and an empty or
// whitespace-only document gives the defaults. Throws ConfigError on syntax
// errors, unknown keys, wrong types, and invariant violations; messages
// name the offending field.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Complete JSON document; parse_config(serialize_config(c)) == c.
std::string serialize_config(const ExperimentConfig& config);

}  // namespace sparc
