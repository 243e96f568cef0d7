#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "roed/design.hpp"
#include "roed/errors.hpp"
#include "roed/experiment.hpp"
#include "roed/log.hpp"
#include "roed/problem.hpp"
#include "roed/utility.hpp"

namespace py = pybind11;
using namespace roed;

namespace {

py::dict result_summary(const RunArtifacts& a) {
  py::dict d;
  d["design"] = a.result.design;
  d["policy"] = a.result.policy;
  d["theta_opt"] = a.result.theta_opt;
  d["value"] = a.result.value;
  d["theta_bar"] = a.result.theta_bar;
  d["sampled_designs"] = a.result.sampled_designs;
  d["infeasible_designs"] = a.result.infeasible_designs;
  d["utility_evaluations"] = a.result.utility_evaluations;
  d["converged"] = a.result.converged;
  d["stop_reason"] = a.result.stop_reason;
  d["results"] = a.results;
  d["trajectory"] = a.trajectory;
  return d;
}

}  // namespace

PYBIND11_MODULE(_pyroed, m) {
  m.doc() = "Budget-constrained robust sensor placement for an elliptic inverse problem";

  py::register_exception<Error>(m, "RoedError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("set_log_level", [](const std::string& level) { log::set_level(log::level_from_string(level)); },
        py::arg("level"));
  m.def("r_poly", &r_poly, py::arg("k"), py::arg("weights"));
  m.def("info_gain_low_rank", py::overload_cast<const Vector&, double>(&info_gain_low_rank),
        py::arg("eigenvalues"), py::arg("constant") = 0.0);
  m.def("sensor_grid", [](int nx, int ny) {
    std::vector<std::pair<double, double>> out;
    for (const auto& s : sensor_grid(nx, ny)) out.emplace_back(s.x(), s.y());
    return out;
  });

  py::class_<ConditionalBernoulli>(m, "ConditionalBernoulli")
      .def(py::init<Vector, int>(), py::arg("policy"), py::arg("budget"))
      .def_property_readonly("size", &ConditionalBernoulli::size)
      .def_property_readonly("budget", &ConditionalBernoulli::budget)
      .def_property_readonly("policy", &ConditionalBernoulli::policy)
      .def_property_readonly("inclusion_probs", &ConditionalBernoulli::inclusion_probs)
      .def("pmf", &ConditionalBernoulli::pmf, py::arg("design"))
      .def("log_pmf", &ConditionalBernoulli::log_pmf, py::arg("design"))
      .def("grad_log_pmf", &ConditionalBernoulli::grad_log_pmf, py::arg("design"))
      .def(
          "sample",
          [](const ConditionalBernoulli& d, std::uint64_t seed, int count) {
            return d.sample(seed, count);
          },
          py::arg("seed"), py::arg("count"));

  py::class_<Box>(m, "Box")
      .def_readonly("lower", &Box::lower)
      .def_readonly("upper", &Box::upper)
      .def("midpoint", &Box::midpoint);

  py::class_<ExperimentConfig>(m, "ExperimentConfig")
      .def_readonly("name", &ExperimentConfig::name)
      .def_readonly("seed", &ExperimentConfig::seed)
      .def_readonly("output_dir", &ExperimentConfig::output_dir)
      .def_property_readonly("budget", [](const ExperimentConfig& c) { return c.optimizer.budget; })
      .def_property_readonly("num_sensors",
                             [](const ExperimentConfig& c) { return c.problem.sensors.size(); })
      .def("hash", &ExperimentConfig::hash);

  m.def("parse_config", &parse_config, py::arg("text"), py::arg("seed_override") = py::none());
  m.def("load_config", &load_config, py::arg("path"), py::arg("seed_override") = py::none());

  py::class_<PdeProblem>(m, "Problem")
      .def(py::init([](const ExperimentConfig& c, std::optional<Vector> theta_bar) {
             py::gil_scoped_release release;
             return std::make_unique<PdeProblem>(c.problem, theta_bar);
           }),
           py::arg("config"), py::arg("theta_bar") = py::none())
      .def_property_readonly("num_sensors", &PdeProblem::num_sensors)
      .def_property_readonly("box", &PdeProblem::box, py::return_value_policy::copy)
      .def_property_readonly("theta_bar", &PdeProblem::theta_bar)
      .def("value", &PdeProblem::value, py::arg("design"), py::arg("theta"),
           py::call_guard<py::gil_scoped_release>())
      .def("value_and_gradient", &PdeProblem::value_and_gradient, py::arg("design"),
           py::arg("theta"), py::call_guard<py::gil_scoped_release>())
      .def("forward_solves",
           [](const PdeProblem& p, const Design& design, const Vector& theta, bool gradient) {
             py::gil_scoped_release release;
             return gradient ? p.evaluator().value_and_gradient(design, theta).gradient.counts.forward_solves
                             : p.evaluator().value(design, theta).counts.forward_solves;
           },
           py::arg("design"), py::arg("theta"), py::arg("gradient") = false);

  m.def(
      "run",
      [](const ExperimentConfig& c, const std::filesystem::path& out, int workers) {
        RunArtifacts a;
        {
          py::gil_scoped_release release;
          a = run_experiment(c, out, workers);
        }
        return result_summary(a);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);

  m.def(
      "compare",
      [](const ExperimentConfig& c, const std::filesystem::path& out, int workers) {
        CompareReport r;
        {
          py::gil_scoped_release release;
          r = compare_random_designs(c, out, workers);
        }
        py::dict d;
        d["optimal_value"] = r.optimal_value;
        d["beaten"] = r.beaten;
        d["count"] = static_cast<int>(r.rows.size()) - 1;
        d["percentile"] = r.percentile;
        d["table"] = r.table;
        return d;
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);

  m.def(
      "verify",
      [](const ExperimentConfig& c, const std::filesystem::path& out, int workers) {
        VerifyReport r;
        {
          py::gil_scoped_release release;
          r = verify_results(c, out, workers);
        }
        return py::make_tuple(r.ok, r.lines);
      },
      py::arg("config"), py::arg("out_dir"), py::arg("workers") = 1);

  m.def(
      "landscape",
      [](const ExperimentConfig& c, PdeProblem& problem) {
        std::vector<LandscapeRow> rows;
        {
          py::gil_scoped_release release;
          rows = evaluate_landscape(c, problem);
        }
        py::list out;
        for (const LandscapeRow& r : rows) out.append(py::make_tuple(r.design, r.theta, r.value));
        return out;
      },
      py::arg("config"), py::arg("problem"));
}
