#include "sparc/analysis.hpp"
#include "sparc/commands.hpp"
#include "sparc/config.hpp"
#include "sparc/control.hpp"
#include "sparc/dynamics.hpp"
#include "sparc/validate.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace sparc;

namespace {

CommandResult dispatch(const std::string& command, const std::string& config_path,
                       const std::string& out_dir, std::optional<std::uint64_t> seed, int jobs) {
  CommandOptions opt;
  opt.config_path = config_path;
  opt.out_dir = out_dir;
  opt.seed = seed;
  opt.jobs = jobs;
  if (command == "validate") return cmd_validate({}, opt);
  ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : load_config(config_path);
  if (command == "static-sweep") return cmd_static_sweep(std::move(config), opt);
  if (command == "release") return cmd_release(std::move(config), opt);
  if (command == "pd-sweep") return cmd_pd_sweep(std::move(config), opt);
  throw py::value_error("unknown command: " + command);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Planar four-joint spine model, Cartesian impedance control and bench experiments";
  m.attr("__version__") = SPARC_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
  py::register_exception<DegenerateFitError>(m, "DegenerateFitError", PyExc_ValueError);

  py::class_<LinkParams>(m, "LinkParams")
      .def(py::init<>())
      .def_readwrite("mass", &LinkParams::mass)
      .def_readwrite("length", &LinkParams::length)
      .def_readwrite("com_offset", &LinkParams::com_offset)
      .def_readwrite("inertia_planar", &LinkParams::inertia_planar);

  py::class_<ChainModel>(m, "ChainModel")
      .def(py::init<>())
      .def_readwrite("links", &ChainModel::links)
      .def_readwrite("gravity", &ChainModel::gravity)
      .def_readwrite("base_fixed", &ChainModel::base_fixed)
      .def("total_mass", &ChainModel::total_mass)
      .def("total_length", &ChainModel::total_length)
      .def("violations", [](const ChainModel& c) { return check(c); });

  py::class_<ImpedanceGains>(m, "ImpedanceGains")
      .def(py::init<>())
      .def_readwrite("k", &ImpedanceGains::k)
      .def_readwrite("d", &ImpedanceGains::d)
      .def_readwrite("lambda_dls", &ImpedanceGains::lambda_dls);

  py::class_<FrictionParams>(m, "FrictionParams")
      .def(py::init<>())
      .def_readwrite("tau_c", &FrictionParams::tau_c)
      .def_readwrite("tau_s", &FrictionParams::tau_s)
      .def_readwrite("b_visc", &FrictionParams::b_visc)
      .def_readwrite("qd_s", &FrictionParams::qd_s)
      .def_readwrite("a_shape", &FrictionParams::a_shape)
      .def_readwrite("beta", &FrictionParams::beta);

  m.def("default_sparc_model", &default_sparc_model);
  m.def("default_true_friction", &default_true_friction);
  m.def("bench_equilibrium", &bench_equilibrium, "Task pose (x, z, theta) of the bench target");

  m.def("forward_kinematics", &forward_kinematics, py::arg("model"), py::arg("q"));
  m.def("jacobian", &jacobian, py::arg("model"), py::arg("q"));
  m.def("rnea",
        [](const ChainModel& model, const Vec4& q, const Vec4& qd, const Vec4& qdd) {
          return rnea(model, q, qd, qdd);
        },
        py::arg("model"), py::arg("q"), py::arg("qd"), py::arg("qdd"));
  m.def("mass_matrix", &mass_matrix_direct, py::arg("model"), py::arg("q"));
  m.def("task_inertia", &task_inertia, py::arg("model"), py::arg("q"), py::arg("lambda_dls"));
  m.def("equilibrium_configuration", &equilibrium_configuration, py::arg("model"),
        py::arg("pose"));
  m.def("dls_pinv", &dls_pinv, py::arg("jac"), py::arg("lambda_dls"));
  m.def("stribeck_torque", &stribeck_torque, py::arg("params"), py::arg("qd"));

  py::class_<StiffnessFit>(m, "StiffnessFit")
      .def_readonly("n", &StiffnessFit::n)
      .def_readonly("slope", &StiffnessFit::slope)
      .def_readonly("intercept", &StiffnessFit::intercept)
      .def_readonly("r2", &StiffnessFit::r2)
      .def_readonly("ci95_lo", &StiffnessFit::ci95_lo)
      .def_readonly("ci95_hi", &StiffnessFit::ci95_hi)
      .def_readonly("rel_err_pct", &StiffnessFit::rel_err_pct)
      .def_readonly("chunk_mean", &StiffnessFit::chunk_mean)
      .def_readonly("chunk_sd", &StiffnessFit::chunk_sd);

  m.def("ols_fit",
        [](const std::vector<double>& x, const std::vector<double>& f, double k_commanded,
           std::size_t chunk_size) {
          if (x.size() != f.size()) throw py::value_error("x and f differ in length");
          std::vector<ForcePair> pairs(x.size());
          for (std::size_t i = 0; i < x.size(); ++i) pairs[i] = {x[i], f[i]};
          return ols_fit(pairs, k_commanded, chunk_size);
        },
        py::arg("x"), py::arg("f"), py::arg("k_commanded"), py::arg("chunk_size") = 200);

  py::class_<MsdReference>(m, "MsdReference")
      .def_readonly("m_eff", &MsdReference::m_eff)
      .def_readonly("k", &MsdReference::k)
      .def_readonly("b", &MsdReference::b)
      .def_readonly("x0", &MsdReference::x0)
      .def_readonly("t", &MsdReference::t)
      .def_readonly("x", &MsdReference::x)
      .def_property_readonly("regime", [](const MsdReference& r) { return to_string(r.regime); })
      .def("position", &MsdReference::position);

  m.def("msd_reference", &msd_reference, py::arg("m_eff"), py::arg("k"), py::arg("b"),
        py::arg("x0"), py::arg("duration"), py::arg("dt") = 1e-3);
  m.def("effective_mass", &effective_mass, py::arg("model"), py::arg("q_eq"),
        py::arg("lambda_dls") = 1e-2);

  m.def("default_config_json", [] { return serialize_config(ExperimentConfig{}); });

  m.def("validate",
        [](int timing_evaluations) {
          ValidationOptions v;
          v.timing_evaluations = timing_evaluations;
          const ValidationReport r = run_validation(v);
          py::dict out;
          for (const auto& p : r.properties) out[py::str(p.name)] = p.pass;
          return py::make_tuple(r.all_pass(), out, r.timing.rnea_mean_us);
        },
        py::arg("timing_evaluations") = 0,
        "Runs the invariant suite; returns (all_pass, {property: pass}, rnea_mean_us).");

  m.def("run_command",
        [](const std::string& command, const std::string& config, const std::string& out,
           std::optional<std::uint64_t> seed, int jobs) {
          CommandResult r;
          {
            py::gil_scoped_release release;
            r = dispatch(command, config, out, seed, jobs);
          }
          return py::make_tuple(r.exit_code, r.report);
        },
        py::arg("command"), py::arg("config") = "", py::arg("out") = "sparc_out",
        py::arg("seed") = py::none(), py::arg("jobs") = 1,
        "Runs static-sweep, release, pd-sweep or validate; returns (exit_code, report).");
}
