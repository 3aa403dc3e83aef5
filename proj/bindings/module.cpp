#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ergo/simulate.hpp"
#include "ergo/solvers.hpp"

namespace py = pybind11;
using namespace ergo;

namespace {

// numpy (N, m) <-> stacked one-form
OneForm one_form_from_array(const Geometry& g, const Eigen::MatrixXd& a) {
  if (a.rows() != g.size() || a.cols() != g.dim())
    throw ConfigError("one-form array must have shape (nodes, dim)");
  OneForm w(g.dim(), g.size());
  for (int k = 0; k < g.dim(); ++k) w.comp(k) = a.col(k);
  return w;
}

Eigen::MatrixXd one_form_to_array(const OneForm& w) {
  Eigen::MatrixXd a(w.nodes(), w.m);
  for (int k = 0; k < w.m; ++k) a.col(k) = w.comp(k);
  return a;
}

ProblemSpec make_spec(std::shared_ptr<Geometry> geom, double lambda, const ScalarField& V,
                      const Eigen::MatrixXd& f, const Eigen::MatrixXd& A) {
  ProblemSpec spec;
  spec.geom = geom;
  spec.lambda = lambda;
  spec.V = V;
  spec.f = one_form_from_array(*geom, f);
  spec.A = one_form_from_array(*geom, A);
  return spec;
}

py::dict result_to_dict(const SolveResult& r) {
  py::dict d;
  d["rho"] = r.rho;
  d["u"] = one_form_to_array(r.u);
  d["J"] = one_form_to_array(r.J);
  d["potential"] = r.potential;
  if (r.mu) d["mu"] = *r.mu;
  if (r.value_identity_cost) d["value_identity_cost"] = *r.value_identity_cost;
  py::dict cost;
  cost["state"] = r.cost.state;
  cost["control"] = r.cost.control;
  cost["gauge"] = r.cost.gauge;
  cost["total"] = r.cost.total;
  d["cost"] = cost;
  py::dict res;
  res["pde"] = r.residuals.pde;
  res["delta_J"] = r.residuals.delta_J;
  res["fokker_planck"] = r.residuals.fokker_planck;
  res["triple"] = r.residuals.triple;
  d["residuals"] = res;
  d["warnings"] = r.warnings;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ergoctrl, m) {
  m.doc() = "ergodic control solvers on the circle and the flat torus";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<SolverError>(m, "SolverError");
  py::register_exception<SimulationError>(m, "SimulationError");

  py::class_<Geometry, std::shared_ptr<Geometry>>(m, "Geometry")
      .def_property_readonly("size", [](const Geometry& g) { return g.size(); })
      .def_property_readonly("dim", &Geometry::dim)
      .def_property_readonly("theta1", [](const Geometry& g) { return g.grid.theta1; })
      .def_property_readonly("theta2", [](const Geometry& g) { return g.grid.theta2; })
      .def("d0", [](const Geometry& g, const ScalarField& f) { return one_form_to_array(g.d0(f)); })
      .def("codifferential",
           [](const Geometry& g, const Eigen::MatrixXd& w) {
             return g.codifferential(one_form_from_array(g, w));
           })
      .def("laplace_beltrami", &Geometry::laplace_beltrami)
      .def("inner0", &Geometry::inner0)
      .def("inner1",
           [](const Geometry& g, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
             return g.inner1(one_form_from_array(g, a), one_form_from_array(g, b));
           })
      .def("quad", &Geometry::quad);

  m.def(
      "circle",
      [](int n, py::object g11) {
        if (g11.is_none()) return std::make_shared<Geometry>(build_flat_geometry(ManifoldKind::Circle, n));
        MetricSamples s;
        s.g11 = g11.cast<ScalarField>();
        return std::make_shared<Geometry>(build_geometry(ManifoldKind::Circle, n, 1, s));
      },
      py::arg("n"), py::arg("g11") = py::none());
  m.def(
      "torus",
      [](int nx, int ny) { return std::make_shared<Geometry>(build_flat_geometry(ManifoldKind::Torus, nx, ny)); },
      py::arg("nx"), py::arg("ny"));

  m.def(
      "solve_unconstrained",
      [](std::shared_ptr<Geometry> geom, double lam, const ScalarField& V,
         const Eigen::MatrixXd& f, const Eigen::MatrixXd& A) {
        ProblemSpec spec = make_spec(geom, lam, V, f, A);
        spec.variant = ProblemVariant::Unconstrained;
        return result_to_dict(solve_unconstrained(spec));
      },
      py::arg("geom"), py::arg("lam"), py::arg("V"), py::arg("f"), py::arg("A"));

  m.def(
      "solve_symmetrizable",
      [](std::shared_ptr<Geometry> geom, double lam, const ScalarField& V,
         const Eigen::MatrixXd& f) {
        ProblemSpec spec = make_spec(geom, lam, V, f,
                                     Eigen::MatrixXd::Zero(geom->size(), geom->dim()));
        spec.variant = ProblemVariant::Symmetrizable;
        return result_to_dict(solve_symmetrizable(spec));
      },
      py::arg("geom"), py::arg("lam"), py::arg("V"), py::arg("f"));

  m.def(
      "solve_fixed_density",
      [](std::shared_ptr<Geometry> geom, double lam, const ScalarField& V,
         const Eigen::MatrixXd& f, const Eigen::MatrixXd& A, const ScalarField& rho) {
        ProblemSpec spec = make_spec(geom, lam, V, f, A);
        spec.variant = ProblemVariant::FixedDensity;
        spec.rho_target = rho;
        return result_to_dict(solve_fixed_density(spec));
      },
      py::arg("geom"), py::arg("lam"), py::arg("V"), py::arg("f"), py::arg("A"), py::arg("rho"));

  m.def(
      "solve_fixed_current",
      [](std::shared_ptr<Geometry> geom, double lam, const ScalarField& V,
         const Eigen::MatrixXd& f, const Eigen::MatrixXd& J) {
        ProblemSpec spec = make_spec(geom, lam, V, f,
                                     Eigen::MatrixXd::Zero(geom->size(), geom->dim()));
        spec.variant = ProblemVariant::FixedCurrent;
        spec.J_target = one_form_from_array(*geom, J);
        return result_to_dict(solve_fixed_current(spec));
      },
      py::arg("geom"), py::arg("lam"), py::arg("V"), py::arg("f"), py::arg("J"));

  m.def(
      "closed_form_phi",
      [](std::shared_ptr<Geometry> geom, const ScalarField& rho, double k) {
        return circle_fixed_density_closed_form(*geom, rho, k);
      },
      py::arg("geom"), py::arg("rho"), py::arg("k"));

  m.def(
      "harmonic_gauge_circle",
      [](std::shared_ptr<Geometry> geom, double weight) {
        return one_form_to_array(harmonic_gauge(*geom, {CyclePoint{0.0, weight}}));
      },
      py::arg("geom"), py::arg("weight") = 1.0);

  m.def(
      "flux",
      [](std::shared_ptr<Geometry> geom, const Eigen::MatrixXd& A, const Eigen::MatrixXd& J) {
        return flux(*geom, one_form_from_array(*geom, A), one_form_from_array(*geom, J));
      },
      py::arg("geom"), py::arg("A"), py::arg("J"));

  m.def(
      "simulate",
      [](std::shared_ptr<Geometry> geom, double lam, const ScalarField& V,
         const Eigen::MatrixXd& f, const Eigen::MatrixXd& A, const Eigen::MatrixXd& u, double dt,
         double T, std::uint64_t seed, int bins, int trajectories, int threads) {
        ProblemSpec spec = make_spec(geom, lam, V, f, A);
        SimConfig cfg;
        cfg.dt = dt;
        cfg.T = T;
        cfg.seed = seed;
        cfg.bins = bins;
        cfg.trajectories = trajectories;
        cfg.threads = threads;
        TrajectoryStats st = simulate(spec, one_form_from_array(*geom, u), cfg);
        py::dict d;
        d["density"] = st.density;
        d["current"] = one_form_to_array(st.current);
        d["cost_total"] = st.cost_total.mean;
        d["cost_total_stderr"] = st.cost_total.stderr_;
        d["winding_rate"] = st.winding[0].mean;
        d["winding_stderr"] = st.winding[0].stderr_;
        d["strat_minus_ito"] = st.strat_minus_ito.mean;
        d["T_effective"] = st.T_effective;
        return d;
      },
      py::arg("geom"), py::arg("lam"), py::arg("V"), py::arg("f"), py::arg("A"), py::arg("u"),
      py::arg("dt") = 1e-3, py::arg("T") = 100.0, py::arg("seed") = 1, py::arg("bins") = 64,
      py::arg("trajectories") = 1, py::arg("threads") = 1);

  m.attr("__version__") = "0.1.0";
}
