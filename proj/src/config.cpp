#include "sparc/config.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <exception>
#include <fstream>
#include <set>
#include <sstream>

namespace sparc {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// leftovers (typos) can be reported with their full path.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : node_.items()) {
      if (!used_.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    used_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + " must be a number");
      out = v->get<double>();
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + " must be an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned() || v->get<long long>() >= 0) {
          out = v->get<Int>();
          return;
        }
        throw ConfigError(field(key) + " must be >= 0");
      } else {
        out = v->get<Int>();
      }
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + " must be true or false");
      out = v->get<bool>();
    }
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ConfigError(field(key) + " must be an array of numbers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number()) throw ConfigError(field(key) + " must be an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

void read_link(const json& node, const std::string& path, LinkParams& link) {
  Section s(node, path);
  s.number("mass", link.mass);
  s.number("length", link.length);
  s.number("com_offset", link.com_offset);
  s.number("inertia_planar", link.inertia_planar);
}

void read_model(Section& parent, ChainModel& model) {
  const json* node = parent.find("model");
  if (!node) return;
  Section s(*node, parent.field("model"));
  if (const json* g = s.find("gravity")) {
    if (!g->is_array() || g->size() != 2 || !(*g)[0].is_number() || !(*g)[1].is_number())
      throw ConfigError(s.field("gravity") + " must be [g_x, g_z]");
    model.gravity = Vec2((*g)[0].get<double>(), (*g)[1].get<double>());
  }
  s.boolean("base_fixed", model.base_fixed);
  if (const json* links = s.find("links")) {
    if (!links->is_array() || links->size() != kNumJoints)
      throw ConfigError(s.field("links") + " must be an array of 4 link objects");
    for (int i = 0; i < kNumJoints; ++i) {
      read_link((*links)[i], s.field("links") + "[" + std::to_string(i) + "]", model.links[i]);
    }
  }
}

void read_gains(Section& parent, ImpedanceGains& gains) {
  const json* node = parent.find("gains");
  if (!node) return;
  Section s(*node, parent.field("gains"));
  s.number("k_x", gains.k.x());
  s.number("k_z", gains.k.y());
  s.number("k_theta", gains.k.z());
  s.number("d_x", gains.d.x());
  s.number("d_z", gains.d.y());
  s.number("d_theta", gains.d.z());
  s.number("lambda_dls", gains.lambda_dls);
}

void read_friction(const json& node, const std::string& path, FrictionParams& f) {
  Section s(node, path);
  s.number("tau_c", f.tau_c);
  s.number("tau_s", f.tau_s);
  s.number("b_visc", f.b_visc);
  s.number("qd_s", f.qd_s);
  s.number("a_shape", f.a_shape);
  s.number("beta", f.beta);
}

// One object applied to every joint, or an array of four.
void read_friction_set(const json& node, const std::string& path, FrictionSet& set) {
  if (node.is_array()) {
    if (node.size() != kNumJoints)
      throw ConfigError(path + " must be one object or an array of 4 objects");
    for (int i = 0; i < kNumJoints; ++i) {
      read_friction(node[i], path + "[" + std::to_string(i) + "]", set[i]);
    }
    return;
  }
  FrictionParams f = set[0];
  read_friction(node, path, f);
  set = uniform_friction(f);
}

void read_scale(const json& node, const std::string& path, FrictionScale& scale) {
  Section s(node, path);
  s.number("tau_c", scale.tau_c);
  s.number("tau_s", scale.tau_s);
  s.number("b_visc", scale.b_visc);
  s.number("qd_s", scale.qd_s);
  s.number("a_shape", scale.a_shape);
  s.number("beta", scale.beta);
}

void read_estimate(Section& parent, FrictionEstimate& est) {
  const json* node = parent.find("friction_est");
  if (!node) return;
  Section s(*node, parent.field("friction_est"));
  s.boolean("enabled", est.enabled);
  if (const json* sc = s.find("scale")) {
    if (sc->is_number()) {
      est.scale = uniform_scale(sc->get<double>());
    } else {
      read_scale(*sc, s.field("scale"), est.scale);
    }
  }
}

void read_plant(Section& parent, PlantConfig& plant) {
  const json* node = parent.find("plant");
  if (!node) return;
  Section s(*node, parent.field("plant"));
  s.number("integrator_dt", plant.integrator_dt);
  s.number("control_dt", plant.control_dt);
  if (const json* v = s.find("integrator")) {
    const std::string name = v->is_string() ? v->get<std::string>() : "";
    if (name == "rk4") {
      plant.integrator = Integrator::kRk4;
    } else if (name == "semi-implicit-euler") {
      plant.integrator = Integrator::kSemiImplicitEuler;
    } else {
      throw ConfigError(s.field("integrator") + " must be \"rk4\" or \"semi-implicit-euler\"");
    }
  }
  s.integer("seed", plant.noise_seed);
  s.number("force_sensor_noise_sd", plant.force_sensor_noise_sd);
  if (const json* f = s.find("friction_true")) {
    read_friction_set(*f, s.field("friction_true"), plant.friction_true);
  }
}

void read_static(Section& parent, StaticSweepConfig& cfg) {
  const json* node = parent.find("static");
  if (!node) return;
  Section s(*node, parent.field("static"));
  s.numbers("k_x", cfg.k_x);
  s.number("ramp_rate", cfg.protocol.ramp_rate);
  s.number("max_force", cfg.protocol.max_force);
  s.number("settle_time", cfg.protocol.settle_time);
  s.number("velocity_gate", cfg.protocol.velocity_gate);
  s.integer("sample_every", cfg.protocol.sample_every);
  s.integer("chunk_size", cfg.chunk_size);
}

void read_release(Section& parent, ReleaseSweepConfig& cfg) {
  const json* node = parent.find("release");
  if (!node) return;
  Section s(*node, parent.field("release"));
  s.numbers("k_x", cfg.k_x);
  s.numbers("d_x", cfg.d_x);
  s.number("x0_offset", cfg.protocol.x0_offset);
  s.number("duration", cfg.protocol.duration);
  s.integer("n_trials", cfg.protocol.n_trials);
  s.number("hold_time", cfg.protocol.hold_time);
  s.number("hold_ramp", cfg.protocol.hold_ramp);
  s.number("hold_stiffness_ratio", cfg.protocol.hold_stiffness_ratio);
  read_estimate(s, cfg.friction_est);
}

void read_pd(Section& parent, PdSweepConfig& cfg) {
  const json* node = parent.find("pd");
  if (!node) return;
  Section s(*node, parent.field("pd"));
  s.numbers("k_x", cfg.protocol.k_x);
  s.numbers("displacements", cfg.protocol.displacements);
  s.integer("repeats", cfg.protocol.repeats);
  s.number("hold_time", cfg.protocol.hold_time);
}

json friction_json(const FrictionParams& f) {
  return {{"tau_c", f.tau_c},   {"tau_s", f.tau_s},     {"b_visc", f.b_visc},
          {"qd_s", f.qd_s},     {"a_shape", f.a_shape}, {"beta", f.beta}};
}

json estimate_json(const FrictionEstimate& e) {
  const auto& s = e.scale;
  return {{"enabled", e.enabled},
          {"scale",
           {{"tau_c", s.tau_c},
            {"tau_s", s.tau_s},
            {"b_visc", s.b_visc},
            {"qd_s", s.qd_s},
            {"a_shape", s.a_shape},
            {"beta", s.beta}}}};
}

void check_positive_list(const std::vector<double>& v, const std::string& name,
                         bool allow_zero, std::vector<std::string>& out) {
  if (v.empty()) out.push_back(name + " must not be empty");
  for (const double x : v) {
    if (!std::isfinite(x) || x < 0.0 || (!allow_zero && x == 0.0)) {
      out.push_back(name + (allow_zero ? " entries must be >= 0" : " entries must be > 0"));
      break;
    }
  }
}

void check_scale(const FrictionScale& s, const std::string& name,
                 std::vector<std::string>& out) {
  const std::pair<const char*, double> fields[] = {
      {"tau_c", s.tau_c}, {"tau_s", s.tau_s},     {"b_visc", s.b_visc},
      {"qd_s", s.qd_s},   {"a_shape", s.a_shape}, {"beta", s.beta}};
  for (const auto& [key, v] : fields) {
    if (!(v > 0.0) || !std::isfinite(v)) out.push_back(name + ".scale." + key + " must be > 0");
  }
}

}  // namespace

FrictionScale uniform_scale(const double f) { return {f, f, f, f, f, f}; }

FrictionSet scaled(const FrictionSet& truth, const FrictionScale& s) {
  FrictionSet out = truth;
  for (auto& f : out) {
    f.tau_c *= s.tau_c;
    f.tau_s *= s.tau_s;
    f.b_visc *= s.b_visc;
    f.qd_s *= s.qd_s;
    f.a_shape *= s.a_shape;
    f.beta *= s.beta;
  }
  return out;
}

std::optional<FrictionSet> ExperimentConfig::static_friction_estimate() const {
  if (!friction_est.enabled) return std::nullopt;
  return scaled(plant.friction_true, friction_est.scale);
}

std::optional<FrictionSet> ExperimentConfig::release_friction_estimate() const {
  if (!release.friction_est.enabled) return std::nullopt;
  return scaled(plant.friction_true, release.friction_est.scale);
}

std::vector<std::string> check(const ExperimentConfig& c) {
  std::vector<std::string> out = check(c.model);
  auto append = [&out](const std::vector<std::string>& v) {
    out.insert(out.end(), v.begin(), v.end());
  };
  append(check(c.gains));
  append(check(c.plant));

  check_scale(c.friction_est.scale, "friction_est", out);
  check_scale(c.release.friction_est.scale, "release.friction_est", out);
  if (out.empty()) {
    if (auto est = c.static_friction_estimate())
      append(check(*est, "FrictionParams.friction_est"));
    if (auto est = c.release_friction_estimate())
      append(check(*est, "FrictionParams.release.friction_est"));
  }

  const auto& st = c.static_sweep;
  check_positive_list(st.k_x, "static.k_x", false, out);
  if (!(st.protocol.ramp_rate > 0.0)) out.push_back("static.ramp_rate must be > 0");
  if (!(st.protocol.max_force >= 0.0)) out.push_back("static.max_force must be >= 0");
  if (!(st.protocol.settle_time >= 0.0)) out.push_back("static.settle_time must be >= 0");
  if (!(st.protocol.velocity_gate > 0.0)) out.push_back("static.velocity_gate must be > 0");
  if (st.protocol.sample_every < 1) out.push_back("static.sample_every must be >= 1");
  if (st.chunk_size < 2) out.push_back("static.chunk_size must be >= 2");

  const auto& rl = c.release;
  check_positive_list(rl.k_x, "release.k_x", false, out);
  check_positive_list(rl.d_x, "release.d_x", true, out);
  if (!std::isfinite(rl.protocol.x0_offset)) out.push_back("release.x0_offset must be finite");
  if (!(rl.protocol.duration > 0.0)) out.push_back("release.duration must be > 0");
  if (rl.protocol.n_trials < 1) out.push_back("release.n_trials must be >= 1");
  if (!(rl.protocol.hold_ramp > 0.0)) out.push_back("release.hold_ramp must be > 0");
  if (!(rl.protocol.hold_time >= rl.protocol.hold_ramp))
    out.push_back("release.hold_time must be >= hold_ramp");
  if (!(rl.protocol.hold_stiffness_ratio > 0.0))
    out.push_back("release.hold_stiffness_ratio must be > 0");

  const auto& pd = c.pd.protocol;
  check_positive_list(pd.k_x, "pd.k_x", false, out);
  if (pd.displacements.empty()) out.push_back("pd.displacements must not be empty");
  for (const double d : pd.displacements) {
    if (!std::isfinite(d) || std::abs(d) > 0.1) {
      out.push_back("pd.displacements entries must lie within +/-0.1 m");
      break;
    }
  }
  if (pd.repeats < 1) out.push_back("pd.repeats must be >= 1");
  if (!(pd.hold_time > 0.0)) out.push_back("pd.hold_time must be > 0");
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return cfg;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  {
    Section s(root, "");
    read_model(s, cfg.model);
    read_gains(s, cfg.gains);
    read_plant(s, cfg.plant);
    read_estimate(s, cfg.friction_est);
    read_static(s, cfg.static_sweep);
    read_release(s, cfg.release);
    read_pd(s, cfg.pd);
  }
  ensure_valid(check(cfg));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  json links = json::array();
  for (const auto& l : c.model.links) {
    links.push_back({{"mass", l.mass},
                     {"length", l.length},
                     {"com_offset", l.com_offset},
                     {"inertia_planar", l.inertia_planar}});
  }
  json friction = json::array();
  for (const auto& f : c.plant.friction_true) friction.push_back(friction_json(f));

  json root;
  root["model"] = {{"gravity", {c.model.gravity.x(), c.model.gravity.y()}},
                   {"base_fixed", c.model.base_fixed},
                   {"links", links}};
  root["gains"] = {{"k_x", c.gains.k.x()},   {"k_z", c.gains.k.y()},
                   {"k_theta", c.gains.k.z()}, {"d_x", c.gains.d.x()},
                   {"d_z", c.gains.d.y()},   {"d_theta", c.gains.d.z()},
                   {"lambda_dls", c.gains.lambda_dls}};
  root["plant"] = {
      {"integrator_dt", c.plant.integrator_dt},
      {"control_dt", c.plant.control_dt},
      {"integrator", c.plant.integrator == Integrator::kRk4 ? "rk4" : "semi-implicit-euler"},
      {"seed", c.plant.noise_seed},
      {"force_sensor_noise_sd", c.plant.force_sensor_noise_sd},
      {"friction_true", friction}};
  root["friction_est"] = estimate_json(c.friction_est);
  const auto& st = c.static_sweep;
  root["static"] = {{"k_x", st.k_x},
                    {"ramp_rate", st.protocol.ramp_rate},
                    {"max_force", st.protocol.max_force},
                    {"settle_time", st.protocol.settle_time},
                    {"velocity_gate", st.protocol.velocity_gate},
                    {"sample_every", st.protocol.sample_every},
                    {"chunk_size", st.chunk_size}};
  const auto& rl = c.release;
  root["release"] = {{"k_x", rl.k_x},
                     {"d_x", rl.d_x},
                     {"x0_offset", rl.protocol.x0_offset},
                     {"duration", rl.protocol.duration},
                     {"n_trials", rl.protocol.n_trials},
                     {"hold_time", rl.protocol.hold_time},
                     {"hold_ramp", rl.protocol.hold_ramp},
                     {"hold_stiffness_ratio", rl.protocol.hold_stiffness_ratio},
                     {"friction_est", estimate_json(rl.friction_est)}};
  root["pd"] = {{"k_x", c.pd.protocol.k_x},
                {"displacements", c.pd.protocol.displacements},
                {"repeats", c.pd.protocol.repeats},
                {"hold_time", c.pd.protocol.hold_time}};
  return root.dump(2) + "\n";
}

}  // namespace sparc
