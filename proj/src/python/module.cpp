#include <pybind11/eigen.h>
#include <numbers>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "levolve/diffusion.hpp"
#include "levolve/errors.hpp"
#include "levolve/experiment.hpp"
#include "levolve/geometry.hpp"
#include "levolve/lgeodesic.hpp"
#include "levolve/monitors.hpp"
#include "levolve/ot_solvers.hpp"
#include "levolve/serialize.hpp"
#include "levolve/transport.hpp"

namespace py = pybind11;
using namespace levolve;

namespace {

CurveOptions curve_options(std::size_t samples, std::uint64_t seed) {
  CurveOptions o;
  o.samples = samples;
  o.seed = seed;
  return o;
}

SolverMode solver_mode(const std::string& mode, double epsilon) {
  if (mode == "exact") return SolverMode::exact();
  if (mode == "entropic") return SolverMode::entropic(epsilon);
  throw ConfigError("mode must be 'exact' or 'entropic'");
}

py::dict geodesic_dict(const Geometry& geom, const GeodesicResult& r) {
  py::dict d;
  d["length"] = r.length;
  d["converged"] = r.converged;
  d["near_cut"] = r.near_cut;
  d["gradient_norm"] = r.gradient_norm;
  d["iterations"] = r.iterations;
  d["positions"] = r.curve.positions;
  d["velocity_start"] = r.velocity.front();
  d["velocity_end"] = r.velocity.back();
  d["kappa"] = kappa_integral(geom, r);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Optimal transport and monotone quantities on evolving manifolds";
  m.attr("__version__") = std::string(tool_version());

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DomainError>(m, "DomainError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<NoConvergence>(m, "NoConvergence", error.ptr());
  py::register_exception<NearCutLocus>(m, "NearCutLocus", error.ptr());
  py::register_exception<ConjugatePoint>(m, "ConjugatePoint", error.ptr());
  py::register_exception<Infeasible>(m, "Infeasible", error.ptr());
  py::register_exception<NonFiniteCost>(m, "NonFiniteCost", error.ptr());
  py::register_exception<StabilityError>(m, "StabilityError", error.ptr());
  py::register_exception<NegativeDensity>(m, "NegativeDensity", error.ptr());
  py::register_exception<NonPositiveDensity>(m, "NonPositiveDensity", error.ptr());
  py::register_exception<InvalidFieldEntry>(m, "InvalidFieldEntry", error.ptr());
  py::register_exception<ParseError>(m, "ParseError", error.ptr());
  py::register_exception<SemanticError>(m, "SemanticError", error.ptr());

  py::class_<FlowModel>(m, "FlowModel")
      .def_static("flat_circle", &FlowModel::flat_circle, py::arg("circumference") = 2 * std::numbers::pi)
      .def_static("static_sphere", &FlowModel::static_sphere, py::arg("radius") = 1.0)
      .def_static("ricci_sphere", &FlowModel::ricci_sphere, py::arg("radius") = 1.0)
      .def_static("dilaton", &FlowModel::dilaton, py::arg("phi0_squared"), py::arg("coupling"),
                  py::arg("winding"))
      .def_property_readonly("kind", [](const FlowModel& f) { return std::string(to_string(f.kind)); })
      .def_property_readonly("dimension", &FlowModel::dimension);

  py::class_<Geometry>(m, "Geometry")
      .def_property_readonly("node_count", &Geometry::node_count)
      .def_property_readonly("dimension", &Geometry::dimension)
      .def_property_readonly("nodes", &Geometry::nodes)
      .def_property_readonly("tau_domain",
                             [](const Geometry& g) {
                               return py::make_tuple(g.tau_domain().lo, g.tau_domain().hi);
                             })
      .def("metric_coefficient",
           [](const Geometry& g, double coordinate, double tau) {
             return g.chart(coordinate, tau).metric;
           })
      .def("trace_s",
           [](const Geometry& g, std::size_t node, double tau) {
             return g.flow_sample(node, tau).trace;
           })
      .def("volume_weights", [](const Geometry& g, double tau) { return g.volume_weights(tau).values; })
      .def("laplace_beltrami", [](const Geometry& g, std::vector<double> f, double tau) {
        return g.laplace_beltrami(ScalarField{std::move(f), tau}, tau).values;
      });

  m.def("build_geometry",
        [](const FlowModel& model, std::size_t nodes, double tau_min, double tau_max) {
          return build_geometry(model, nodes, {tau_min, tau_max});
        },
        py::arg("model"), py::arg("nodes"), py::arg("tau_min"), py::arg("tau_max"));

  m.def("d_quantity",
        [](const Geometry& g, std::size_t node, double tau, double x) {
          return d_quantity(g, node, tau, TangentVector::along_chart(g.dimension(), x, tau));
        },
        py::arg("geometry"), py::arg("node"), py::arg("tau"), py::arg("x"));
  m.def("h_quantity",
        [](const Geometry& g, std::size_t node, double tau, double x) {
          return h_quantity(g, node, tau, TangentVector::along_chart(g.dimension(), x, tau));
        },
        py::arg("geometry"), py::arg("node"), py::arg("tau"), py::arg("x"));

  m.def("q_distance",
        [](const Geometry& g, double x, double tau1, double y, double tau2, std::size_t samples,
           std::uint64_t seed) {
          return geodesic_dict(g, q_distance(g, x, tau1, y, tau2, curve_options(samples, seed)));
        },
        py::arg("geometry"), py::arg("x"), py::arg("tau1"), py::arg("y"), py::arg("tau2"),
        py::arg("samples") = 64, py::arg("seed") = 0);

  m.def("l_exp",
        [](const Geometry& g, double x, double tau1, double z, double tau2, std::size_t samples) {
          return l_exp(g, x, tau1, TangentVector::along_chart(g.dimension(), z, tau1), tau2,
                       curve_options(samples, 0));
        },
        py::arg("geometry"), py::arg("x"), py::arg("tau1"), py::arg("z"), py::arg("tau2"),
        py::arg("samples") = 64);

  m.def("uniform_profile", &uniform_profile, py::arg("geometry"), py::arg("tau"));
  m.def("bump_profile", &bump_profile, py::arg("geometry"), py::arg("tau"), py::arg("center"),
        py::arg("width"));
  m.def("evolve_density",
        [](const Geometry& g, std::vector<double> u, double tau0, double tau) {
          return evolve_density(g, DiffusionState{std::move(u), tau0}, tau).u;
        },
        py::arg("geometry"), py::arg("u"), py::arg("tau0"), py::arg("tau"));
  m.def("total_mass",
        [](const Geometry& g, std::vector<double> u, double tau) {
          return total_mass(g, DiffusionState{std::move(u), tau});
        },
        py::arg("geometry"), py::arg("u"), py::arg("tau"));
  m.def("entropy", &entropy, py::arg("geometry"), py::arg("density"), py::arg("tau"));
  m.def("w_entropy",
        [](const Geometry& g, std::vector<double> u, double tau) {
          return w_entropy(g, DiffusionState{std::move(u), tau});
        },
        py::arg("geometry"), py::arg("u"), py::arg("tau"));

  m.def("solve_transport",
        [](const std::vector<double>& a, const std::vector<double>& b, const Eigen::MatrixXd& cost,
           const std::string& mode, double epsilon) {
          py::dict d;
          if (mode == "exact") {
            const ExactSolution s = solve_transport_exact(a, b, cost);
            d["plan"] = s.plan;
            d["cost"] = s.cost;
            d["u"] = s.u;
            d["v"] = s.v;
          } else {
            const EntropicSolution s = solve_transport_entropic(a, b, cost, solver_mode(mode, epsilon).epsilon);
            d["plan"] = s.plan;
            d["cost"] = s.cost;
            d["marginal_error"] = s.marginal_error;
          }
          return d;
        },
        py::arg("a"), py::arg("b"), py::arg("cost"), py::arg("mode") = "exact",
        py::arg("epsilon") = 1e-2);

  m.def("wasserstein_v",
        [](const Geometry& g, std::vector<double> support1, std::vector<double> weights1,
           double tau1, std::vector<double> support2, std::vector<double> weights2, double tau2,
           const std::string& mode, double epsilon) {
          const DiscreteMeasure m1{std::move(support1), std::move(weights1), tau1, {}};
          const DiscreteMeasure m2{std::move(support2), std::move(weights2), tau2, {}};
          return wasserstein_v(g, m1, m2, solver_mode(mode, epsilon));
        },
        py::arg("geometry"), py::arg("support1"), py::arg("weights1"), py::arg("tau1"),
        py::arg("support2"), py::arg("weights2"), py::arg("tau2"), py::arg("mode") = "exact",
        py::arg("epsilon") = 1e-2);

  m.def("pl_margin",
        [](const Geometry& g, const std::vector<double>& u1, const std::vector<double>& u2,
           double lambda, double tau1, double tau2) {
          const PLReport r = pl_check(g, u1, u2, lambda, tau1, tau2);
          return py::make_tuple(r.margin, r.pass);
        },
        py::arg("geometry"), py::arg("u1"), py::arg("u2"), py::arg("lam"), py::arg("tau1"),
        py::arg("tau2"));

  m.def("validate_config",
        [](const std::string& path) {
          const ExperimentConfig c = validate_config(path);
          py::dict d;
          d["nodes"] = c.geometry.nodes;
          d["seed"] = c.seed;
          py::list names;
          for (const MonitorConfig& mc : c.monitors) names.append(mc.name);
          d["monitors"] = names;
          return d;
        },
        py::arg("path"));

  m.def("run_config",
        [](const std::string& path, std::optional<std::string> out_dir,
           std::optional<std::uint64_t> seed) {
          RunOptions o;
          o.out_dir = std::move(out_dir);
          o.seed = seed;
          o.write_files = o.out_dir.has_value();
          const RunReport r = run_experiment(validate_config(path), o);
          return py::make_tuple(exit_code(r), report_json(r).dump());
        },
        py::arg("path"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none());
}
