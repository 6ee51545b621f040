#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "infarn/nep.hpp"
#include "infarn/oracle.hpp"
#include "infarn/restart.hpp"

namespace py = pybind11;
using namespace infarn;

PYBIND11_MODULE(_infarn, m) {
  m.doc() = "Restarted infinite Arnoldi solver for nonlinear eigenvalue problems";

  py::class_<NepProblem>(m, "NepProblem")
      .def_property_readonly("size", &NepProblem::size)
      .def_property_readonly("num_terms", &NepProblem::num_terms)
      .def("m_eval", &NepProblem::m_eval, py::arg("lam"))
      .def("m_deriv_eval", &NepProblem::m_deriv_eval, py::arg("lam"))
      .def("m0_solve", &NepProblem::m0_solve, py::arg("b"));

  m.def("hadeler_like", &hadeler_like, py::arg("n"), py::arg("mu"),
        py::arg("seed") = 1);
  m.def("gun_like", &gun_like, py::arg("n") = 200, py::arg("mu") = Cplx(62500.0),
        py::arg("gamma") = Cplx(50000.0), py::arg("seed") = 1);
  m.def("delay_like", &delay_like, py::arg("n"), py::arg("tau"),
        py::arg("seed") = 1);
  m.def("load_manifest", &load_manifest, py::arg("path"));

  py::class_<OuterRecord>(m, "OuterRecord")
      .def_readonly("iteration", &OuterRecord::iteration)
      .def_readonly("p_l", &OuterRecord::p_l)
      .def_readonly("gamma", &OuterRecord::gamma)
      .def_readonly("ritz_values", &OuterRecord::ritz_values)
      .def_readonly("ritz_residuals", &OuterRecord::ritz_residuals)
      .def_readonly("locked_eigenvalues", &OuterRecord::locked_eigenvalues)
      .def_readonly("basis_degree", &OuterRecord::basis_degree)
      .def_readonly("basis_columns", &OuterRecord::basis_columns)
      .def_readonly("seconds", &OuterRecord::seconds);

  m.def(
      "solve",
      [](const NepProblem& p, const Vec& x0, Cplx lambda0, int k_max, int num_wanted,
         double lock_tol, int max_outer, const std::string& selector, Cplx target) {
        RestartOptions opts;
        opts.k_max = k_max;
        opts.p = num_wanted;
        opts.lock_tol = lock_tol;
        opts.max_outer = max_outer;
        opts.selector = selector == "nearest" ? Selector::NearestTarget
                                              : Selector::LargestTheta;
        opts.target = target;
        SolveResult res = infarn_restart(p, x0, lambda0, opts);
        const char* status = res.record.status == SolveStatus::Converged
                                 ? "converged"
                                 : res.record.status == SolveStatus::Stalled
                                       ? "stalled"
                                       : "max_outer_reached";
        py::dict out;
        out["eigenvalues"] = res.pair.eigenvalues;
        out["residuals"] = res.pair.per_eig_residuals;
        out["y"] = res.pair.y;
        out["lambda"] = res.pair.lambda;
        out["gamma"] = res.pair.residual_gamma;
        out["status"] = status;
        out["history"] = res.record.outer;
        return out;
      },
      py::arg("problem"), py::arg("x0"), py::arg("lambda0") = Cplx(1.0),
      py::arg("k_max") = 20, py::arg("p") = 6,
      py::arg("lock_tol") = 1000.0 * 2.220446049250313e-16,
      py::arg("max_outer") = 30, py::arg("selector") = "largest",
      py::arg("target") = Cplx(0.0),
      "Run the restarted solver; returns a dict with eigenvalues, residuals, "
      "the invariant pair, and the outer-iteration history.");

  m.def(
      "taylor_companion_eigs",
      [](const NepProblem& p, int degree, double radius) {
        OracleResult r = taylor_companion_eigs(p, degree, radius);
        py::dict out;
        out["eigenvalues"] = r.eigenvalues;
        out["residuals"] = r.residuals;
        return out;
      },
      py::arg("problem"), py::arg("degree") = 30, py::arg("radius") = 1.0,
      "Companion-linearization verification eigensolve.");
}
