#include <optional>

#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "avglemma/errors.hpp"
#include "avglemma/fields.hpp"
#include "avglemma/oscillatory.hpp"
#include "avglemma/report.hpp"
#include "avglemma/scenario.hpp"
#include "avglemma/sobolev.hpp"
#include "avglemma/sphere.hpp"
#include "avglemma/sublevel.hpp"
#include "avglemma/transport.hpp"

namespace py = pybind11;
using namespace avglemma;

namespace {

VelocityField field(const std::string& name, int N, int M) { return catalog(name, N, M).field; }

}  // namespace

PYBIND11_MODULE(_avglemma, m) {
  m.doc() = "Averaging-lemma numerics";

  py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError");

  m.def("vdc_constant", &vdc_constant, py::arg("k"));
  m.def("cbar_constant", &cbar_constant, py::arg("k"));

  m.def(
      "oscillatory_integral",
      [](const Vec& coefficients, double alpha, double beta, double lambda) {
        OscillatorySpec s;
        s.phi = PhaseFunction::polynomial(coefficients);
        s.alpha = alpha;
        s.beta = beta;
        s.lambda = lambda;
        return integrate(s);
      },
      py::arg("coefficients"), py::arg("alpha"), py::arg("beta"), py::arg("lambda_"),
      "int_alpha^beta exp(i lambda phi(u)) du for a polynomial phase.");

  m.def(
      "sublevel_measure",
      [](const Vec& coefficients, double eps, double A) {
        return measure(PhaseFunction::polynomial(coefficients), eps, A);
      },
      py::arg("coefficients"), py::arg("eps"), py::arg("A"));

  m.def(
      "fit_alpha",
      [](const std::string& name, int N, int M, double A, const std::vector<double>& eps,
         int sphere_points) {
        const AlphaFit f = fit_alpha(field(name, N, M), A, eps, SphereSampler(N + 1, sphere_points));
        py::dict d;
        d["alpha"] = f.alpha;
        d["r2"] = f.r2;
        d["degenerate"] = f.degenerate;
        d["sup_measures"] = f.sup_measures;
        return d;
      },
      py::arg("name"), py::arg("N"), py::arg("M"), py::arg("A"), py::arg("eps"),
      py::arg("sphere_points") = 1024);

  m.def(
      "gamma_opt",
      [](const std::string& name, int N, int M, double A, int gamma_max,
         int sphere_points) -> std::optional<int> {
        const CatalogEntry e = catalog(name, N, M);
        return gamma_opt(e.field, e.force, A, gamma_max, SphereSampler(N + 1, sphere_points)).gamma;
      },
      py::arg("name"), py::arg("N"), py::arg("M"), py::arg("A") = 1.0, py::arg("gamma_max") = 8,
      py::arg("sphere_points") = 1024);

  m.def(
      "compare_exponents",
      [](int N, int M) {
        const ExponentComparison c = compare_exponents(N, M);
        py::dict d;
        d["half_alpha_opt"] = c.half_alpha_opt;
        d["inv_gamma_opt"] = c.inv_gamma_opt;
        d["verdict"] = c.verdict;
        return d;
      },
      py::arg("N"), py::arg("M"));

  m.def(
      "B_primitive",
      [](const std::string& name, int N, double F, double v1_0, double v1) {
        return B_primitive(field(name, N, 1), ForceField::constant({F}), v1_0, v1);
      },
      py::arg("name"), py::arg("N"), py::arg("F"), py::arg("v1_0"), py::arg("v1"));

  m.def("chi", &chi, py::arg("y"));
  m.def("m0_eval", &m0_eval, py::arg("y"));
  m.def("m0_jet", &m0_jet, py::arg("y"), py::arg("k"));

  m.def(
      "series_check",
      [](int N, int K) {
        const SeriesCheck s = series_check(N, K);
        return py::make_tuple(s.sum_K, s.sum_2K, s.relative_tail);
      },
      py::arg("N"), py::arg("K"));

  m.def("subcommands", &subcommands);
  m.def(
      "run_scenario",
      [](const std::string& command, const std::string& config) {
        const RunResult r = run_scenario(command, Json::parse(config));
        return py::make_tuple(canonical_json(r.report), r.pass);
      },
      py::arg("command"), py::arg("config"),
      "Runs one scenario; returns (canonical report JSON, pass).");
}
