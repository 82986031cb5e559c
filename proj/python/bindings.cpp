#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bilevel_rl/config.hpp"
#include "bilevel_rl/design.hpp"
#include "bilevel_rl/errors.hpp"
#include "bilevel_rl/pipeline.hpp"
#include "bilevel_rl/policy.hpp"
#include "bilevel_rl/rollout.hpp"
#include "bilevel_rl/training.hpp"

namespace py = pybind11;
using namespace bilevel_rl;

namespace {

RunConfig config_from_str(const std::string& text) {
  return validate_config(nlohmann::json::parse(text));
}

StageOptions stage_options(const std::string& out_dir, std::optional<std::uint64_t> seed,
                           std::optional<int> runs, bool quiet) {
  StageOptions o;
  o.out_dir = out_dir;
  o.quiet = quiet;
  o.seed = seed;
  o.runs = runs;
  return o;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "policy-gradient process control with an embedded design optimizer";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);
  py::register_exception<IntegrationError>(m, "IntegrationError", PyExc_RuntimeError);

  py::class_<ControlDistribution>(m, "ControlDistribution")
      .def_readonly("mean", &ControlDistribution::mean)
      .def_readonly("std", &ControlDistribution::std);

  py::class_<ObsStats>(m, "ObsStats")
      .def_static("identity", &ObsStats::identity)
      .def_static("from_samples", &ObsStats::from_samples)
      .def("normalize",
           [](const ObsStats& s, const std::vector<double>& x) { return s.normalize(x); })
      .def("denormalize",
           [](const ObsStats& s, const std::vector<double>& x) { return s.denormalize(x); })
      .def_readwrite("mean", &ObsStats::mean)
      .def_readwrite("std", &ObsStats::std);

  py::class_<PolicyNetwork>(m, "PolicyNetwork")
      .def(py::init([](int input_dim, const std::vector<int>& hidden, int n_controls,
                       std::vector<double> low, std::vector<double> high, double std_floor) {
             std::vector<LayerSpec> specs;
             for (int w : hidden) specs.push_back({w, Activation::Tanh});
             return PolicyNetwork(input_dim, specs, n_controls, std::move(low),
                                  std::move(high), std_floor);
           }),
           py::arg("input_dim"), py::arg("hidden"), py::arg("n_controls"),
           py::arg("action_low"), py::arg("action_high"), py::arg("std_floor") = 0.01)
      .def("init_params", &PolicyNetwork::init_params)
      .def("forward",
           [](const PolicyNetwork& n, const std::vector<double>& obs) {
             return n.forward(obs);
           })
      .def("grad_log_prob",
           [](const PolicyNetwork& n, const std::vector<double>& obs,
              const std::vector<double>& u) { return n.grad_log_prob(obs, u); })
      .def("sample",
           [](const PolicyNetwork& n, const ControlDistribution& d, std::uint64_t seed) {
             RngStream rng(seed);
             std::vector<double> raw;
             auto clipped = n.sample(d, rng, &raw);
             return py::make_tuple(clipped, raw);
           })
      .def_property("params",
                    [](const PolicyNetwork& n) { return n.params(); },
                    [](PolicyNetwork& n, const std::vector<double>& p) { n.set_params(p); })
      .def_property_readonly("n_params", &PolicyNetwork::n_params)
      .def_property_readonly("input_dim", &PolicyNetwork::input_dim)
      .def_property_readonly("n_controls", &PolicyNetwork::n_controls)
      .def("to_json", [](const PolicyNetwork& n) { return n.to_json().dump(); })
      .def_static("from_json", [](const std::string& s) {
        return PolicyNetwork::from_json(nlohmann::json::parse(s));
      });

  m.def("log_prob", [](const ControlDistribution& d, const std::vector<double>& u) {
    return log_prob(d, u);
  });

  py::class_<Policy>(m, "Policy")
      .def(py::init<PolicyNetwork, ObsStats>())
      .def_readwrite("net", &Policy::net)
      .def_readwrite("stats", &Policy::stats)
      .def("save", &Policy::save)
      .def_static("load", &Policy::load);

  py::class_<Trajectory>(m, "Trajectory")
      .def_readonly("states", &Trajectory::states)
      .def_readonly("observations", &Trajectory::observations)
      .def_readonly("raw_actions", &Trajectory::raw_actions)
      .def_readonly("applied_actions", &Trajectory::applied_actions)
      .def_readonly("rewards", &Trajectory::rewards)
      .def_readonly("log_probs", &Trajectory::log_probs)
      .def("total_return", &Trajectory::total_return, py::arg("gamma") = 1.0);

  m.def("compute_returns", [](const std::vector<double>& rewards, double gamma) {
    return compute_returns(rewards, gamma);
  });

  py::class_<TimeGrid>(m, "TimeGrid")
      .def(py::init<double, int, int>(), py::arg("t_final"), py::arg("n_steps"),
           py::arg("substeps") = 1)
      .def_readonly("t_final", &TimeGrid::t_final)
      .def_readonly("n_steps", &TimeGrid::n_steps)
      .def_readonly("substeps", &TimeGrid::substeps)
      .def_property_readonly("dt", &TimeGrid::dt);

  py::class_<TankDesign>(m, "TankDesign")
      .def(py::init([](double v_tank, double f_nom, double f_dev, double v0) {
             return TankDesign{v_tank, f_nom, f_dev, v0};
           }),
           py::arg("v_tank"), py::arg("f_nom"), py::arg("f_dev"), py::arg("v0"))
      .def_readwrite("v_tank", &TankDesign::v_tank)
      .def_readwrite("f_nom", &TankDesign::f_nom)
      .def_readwrite("f_dev", &TankDesign::f_dev)
      .def_readwrite("v0", &TankDesign::v0)
      .def_property_readonly("setpoint", &TankDesign::setpoint);

  py::class_<CstrParams>(m, "CstrParams")
      .def(py::init<>())
      .def_readwrite("rho", &CstrParams::rho)
      .def_readwrite("k0", &CstrParams::k0)
      .def_readwrite("ea", &CstrParams::ea)
      .def_readwrite("r_gas", &CstrParams::r_gas)
      .def_readwrite("dh_rxn", &CstrParams::dh_rxn)
      .def_readwrite("cp", &CstrParams::cp)
      .def_readwrite("ua", &CstrParams::ua)
      .def_readwrite("t0", &CstrParams::t0)
      .def_readwrite("t_max", &CstrParams::t_max)
      .def_readwrite("th_min", &CstrParams::th_min)
      .def_readwrite("th_max", &CstrParams::th_max);
  py::class_<CstrDesign>(m, "CstrDesign")
      .def(py::init<>())
      .def_readwrite("v", &CstrDesign::v)
      .def_readwrite("m_nom", &CstrDesign::m_nom)
      .def_readwrite("m_dev", &CstrDesign::m_dev)
      .def_readwrite("ca0_nom", &CstrDesign::ca0_nom)
      .def_readwrite("ca0_dev", &CstrDesign::ca0_dev)
      .def_readwrite("ca_init", &CstrDesign::ca_init)
      .def_readwrite("t_init", &CstrDesign::t_init)
      .def_readwrite("y_exists", &CstrDesign::y_exists)
      .def("set_prefix_schedule", [](CstrDesign& d, int k, int n_steps) {
        d.y_schedule = CstrDesign::prefix_schedule(k, n_steps);
        d.y_exists = k > 0;
      });

  py::class_<Environment>(m, "Environment");
  py::class_<TankEnv, Environment>(m, "TankEnv")
      .def(py::init<TankDesign, TimeGrid>());
  py::class_<CstrEnv, Environment>(m, "CstrEnv")
      .def(py::init<CstrDesign, CstrParams, TimeGrid>(), py::arg("design"),
           py::arg("params") = CstrParams{}, py::arg("grid") = TimeGrid(100.0, 100, 10));

  py::enum_<RolloutMode>(m, "RolloutMode")
      .value("Stochastic", RolloutMode::Stochastic)
      .value("MeanAction", RolloutMode::MeanAction);

  m.def(
      "rollout",
      [](const Environment& env, const Policy& policy, RolloutMode mode, double noise_pct,
         std::uint64_t seed) {
        PolicyController controller(policy.net, policy.stats, mode);
        return rollout(env, controller, noise_pct, RngStream(seed, rng_domain::kEval));
      },
      py::arg("env"), py::arg("policy"), py::arg("mode") = RolloutMode::MeanAction,
      py::arg("noise_pct") = 0.0, py::arg("seed") = 0);

  m.def("validate_config", [](const std::string& text) {
    return config_from_str(text).to_json().dump(2);
  });

  const auto stage = [](void (*fn)(const RunConfig&, const StageOptions&)) {
    return [fn](const std::string& config_text, const std::string& out_dir,
                std::optional<std::uint64_t> seed, std::optional<int> runs, bool quiet) {
      fn(config_from_str(config_text), stage_options(out_dir, seed, runs, quiet));
    };
  };
  m.def("run_pretrain", stage(&run_pretrain), py::arg("config"), py::arg("out_dir"),
        py::arg("seed") = std::nullopt, py::arg("runs") = std::nullopt,
        py::arg("quiet") = true);
  m.def("run_train", stage(&run_train), py::arg("config"), py::arg("out_dir"),
        py::arg("seed") = std::nullopt, py::arg("runs") = std::nullopt,
        py::arg("quiet") = true);
  m.def("run_design", stage(&run_design), py::arg("config"), py::arg("out_dir"),
        py::arg("seed") = std::nullopt, py::arg("runs") = std::nullopt,
        py::arg("quiet") = true);
  m.def("run_evaluate", stage(&run_evaluate), py::arg("config"), py::arg("out_dir"),
        py::arg("seed") = std::nullopt, py::arg("runs") = std::nullopt,
        py::arg("quiet") = true);
  m.def("run_pipeline", stage(&run_pipeline), py::arg("config"), py::arg("out_dir"),
        py::arg("seed") = std::nullopt, py::arg("runs") = std::nullopt,
        py::arg("quiet") = true);
}
