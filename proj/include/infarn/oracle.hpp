#pragma once

#include <vector>

#include "infarn/nep.hpp"

namespace infarn {

/// Verification eigensolve output: refined pairs inside the trust radius,
/// sorted by ascending |lambda|; every pair passes the residual bar.
struct OracleResult {
  std::vector<Cplx> eigenvalues;
  std::vector<Vec> eigenvectors;
  std::vector<double> residuals;  // ||M(lambda) v|| / ||v||
};

/// Eigenvalues of the companion linearization of the degree-d Taylor
/// polynomial of M at 0, in the reciprocal variable so the constant block is
/// the invertible M(0). Filtered to |lambda| <= radius and cross-checked
/// against degree d+4 (only eigenvalues stable to 1e-6 are kept), then
/// Newton-refined.
OracleResult taylor_companion_eigs(const NepProblem& p, int degree = 30,
                                   double radius = 1.0);

struct NewtonResult {
  Cplx lambda;
  Vec v;
  double residual = 0.0;
  bool converged = false;
};

/// Newton iteration on the bordered system [M(lambda) v; c^H v - 1] starting
/// from the given approximate pair; at most 20 steps, returns the best
/// iterate with a convergence flag.
NewtonResult newton_refine(const NepProblem& p, Cplx lambda, const Vec& v);

}  // namespace infarn
