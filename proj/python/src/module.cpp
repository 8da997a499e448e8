#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gridvc/analysis.hpp"
#include "gridvc/experiment.hpp"

namespace py = pybind11;
using namespace gridvc;

namespace {

ExperimentConfig config_from(const std::map<std::string, std::string>& overrides) {
  ExperimentConfig c;
  for (const auto& [k, v] : overrides) c.set(k, v);
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_gridvc, m) {
  m.doc() = "Grid voltage-control core: power flow, environment, agents and experiment driver";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NetworkError>(m, "NetworkError", PyExc_ValueError);

  py::enum_<SolveStatus>(m, "SolveStatus")
      .value("converged", SolveStatus::converged)
      .value("max_iterations", SolveStatus::max_iterations)
      .value("singular_jacobian", SolveStatus::singular_jacobian)
      .value("non_finite", SolveStatus::non_finite);

  py::class_<GridNetwork>(m, "GridNetwork")
      .def_readonly("name", &GridNetwork::name)
      .def_readonly("base_mva", &GridNetwork::base_mva)
      .def_property_readonly("n_bus", &GridNetwork::n_bus)
      .def_property_readonly("n_branch", &GridNetwork::n_branch)
      .def_property_readonly("n_gen", &GridNetwork::n_gen)
      .def_property_readonly("n_plant", &GridNetwork::n_plant)
      .def("plant_setpoints", &GridNetwork::plant_setpoints)
      .def("v_min", &GridNetwork::v_min)
      .def("v_max", &GridNetwork::v_max)
      .def("s_max", &GridNetwork::s_max)
      .def("p_load", &GridNetwork::p_load)
      .def("q_load", &GridNetwork::q_load)
      .def("__repr__", [](const GridNetwork& n) {
        return "<GridNetwork " + n.name + ": " + std::to_string(n.n_bus()) + " buses, " +
               std::to_string(n.n_plant()) + " plants>";
      });
  m.def("load_network", [](const std::filesystem::path& p) { return load_network(p); }, py::arg("path"));
  m.def("builtin_network_path", [] { return ExperimentConfig().network_path(); });
  m.def("parse_network", [](const std::string& text) {
    std::istringstream in(text);
    return parse_network(in, "<string>");
  });

  py::class_<PowerFlowOptions>(m, "PowerFlowOptions")
      .def(py::init<>())
      .def_readwrite("tolerance", &PowerFlowOptions::tolerance)
      .def_readwrite("max_iterations", &PowerFlowOptions::max_iterations)
      .def_readwrite("enforce_q_limits", &PowerFlowOptions::enforce_q_limits);

  py::class_<PowerFlowSolution>(m, "PowerFlowSolution")
      .def_readonly("v_m", &PowerFlowSolution::v_m)
      .def_readonly("v_a", &PowerFlowSolution::v_a)
      .def_readonly("s_line", &PowerFlowSolution::s_line)
      .def_readonly("p_g", &PowerFlowSolution::p_g)
      .def_readonly("q_g", &PowerFlowSolution::q_g)
      .def_readonly("converged", &PowerFlowSolution::converged)
      .def_readonly("status", &PowerFlowSolution::status)
      .def_readonly("iterations", &PowerFlowSolution::iterations)
      .def_readonly("max_mismatch", &PowerFlowSolution::max_mismatch)
      .def_readonly("q_limited_buses", &PowerFlowSolution::q_limited_buses);

  m.def("solve_power_flow", &solve_power_flow, py::arg("network"), py::arg("setpoints"),
        py::arg("options") = PowerFlowOptions{});
  m.def("admittance", &build_admittance, py::arg("network"));
  m.def("is_terminal", &is_terminal, py::arg("solution"), py::arg("network"));
  m.def("state_vector", &raw_state_vector, py::arg("solution"));

  m.def("line_overflow", &line_overflow, py::arg("s_line"), py::arg("s_max"));
  m.def("bus_violation", &bus_violation, py::arg("v_m"), py::arg("lower"), py::arg("upper"));
  m.def(
      "f_penalty",
      [](const Vector& v_m, const Vector& s_line, const Vector& lower, const Vector& upper, const Vector& s_max,
         double alpha, double beta) {
        RewardConfig cfg;
        cfg.alpha = alpha;
        cfg.beta = beta;
        cfg.validate();
        return f_penalty(v_m, s_line, ViolationLimits{lower, upper, s_max}, cfg);
      },
      py::arg("v_m"), py::arg("s_line"), py::arg("lower"), py::arg("upper"), py::arg("s_max"),
      py::arg("alpha") = -0.1, py::arg("beta") = -1000.0);

  py::class_<Case>(m, "Case")
      .def_readonly("id", &Case::id)
      .def_readonly("p_load", &Case::p_load)
      .def_readonly("q_load", &Case::q_load)
      .def_readonly("setpoints", &Case::setpoints)
      .def_readonly("initial_state", &Case::initial_state);
  m.def(
      "generate_cases",
      [](const GridNetwork& net, int n, std::uint64_t seed) { return generate_cases(net, n, seed).cases; },
      py::arg("network"), py::arg("n"), py::arg("seed"));

  py::class_<StepResult>(m, "StepResult")
      .def_readonly("next_state", &StepResult::next_state)
      .def_readonly("reward", &StepResult::reward)
      .def_readonly("done", &StepResult::done)
      .def_property_readonly("done_reason", [](const StepResult& r) { return to_string(r.done_reason); });

  py::class_<VoltageControlEnv>(m, "VoltageControlEnv")
      .def(py::init([](const GridNetwork& net, int horizon) {
             MdpConfig mdp;
             mdp.horizon = horizon;
             return std::make_unique<VoltageControlEnv>(std::make_shared<const GridNetwork>(net), mdp);
           }),
           py::arg("network"), py::arg("horizon") = 50)
      .def("reset", &VoltageControlEnv::reset, py::arg("case"))
      .def(
          "step",
          [](VoltageControlEnv& env, const ActionVec& a, int strategy, double r_plus) {
            RewardConfig cfg;
            cfg.strategy = parse_strategy(std::to_string(strategy));
            cfg.r_plus = r_plus;
            return env.step(a, cfg);
          },
          py::arg("action"), py::arg("strategy") = 1, py::arg("r_plus") = 1000.0)
      .def_property_readonly("state_dim", &VoltageControlEnv::state_dim)
      .def_property_readonly("action_dim", &VoltageControlEnv::action_dim)
      .def_property_readonly("steps_taken", &VoltageControlEnv::steps_taken);

  py::class_<PcaResult>(m, "PcaResult")
      .def_readonly("components", &PcaResult::components)
      .def_readonly("eigenvalues", &PcaResult::eigenvalues)
      .def_readonly("ratios", &PcaResult::ratios)
      .def_readonly("mean", &PcaResult::mean)
      .def_readonly("projections", &PcaResult::projections);
  m.def("pca", &pca, py::arg("data"));

  m.def(
      "config_hash", [](const std::map<std::string, std::string>& o) { return config_from(o).hash(); },
      py::arg("overrides") = std::map<std::string, std::string>{});
  m.def(
      "config_defaults", [] { return ExperimentConfig().values(); });
  m.def(
      "run_command",
      [](const std::string& command, const std::filesystem::path& out,
         const std::map<std::string, std::string>& overrides, const std::string& checkpoint,
         const std::string& split) {
        const ExperimentConfig cfg = config_from(overrides);
        std::ostringstream log;
        int status;
        {
          py::gil_scoped_release release;
          status = run_command(command, cfg, out, CommandOptions{checkpoint, split}, log);
        }
        return py::make_tuple(status, log.str());
      },
      py::arg("command"), py::arg("out"), py::arg("overrides") = std::map<std::string, std::string>{},
      py::arg("checkpoint") = "", py::arg("split") = "both");
}
