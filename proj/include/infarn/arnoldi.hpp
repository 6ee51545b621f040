#pragma once

#include <memory>

#include "infarn/nep.hpp"
#include "infarn/structfn.hpp"

namespace infarn {

struct ArnoldiOptions {
  double orth_check_tol = 1e-8;  // input basis Gram deviation allowed
  double ip_target = 2.3e-16;    // scalar-product truncation target
};

/// Arnoldi factorization B F_k = F_{k+1} H_k over structured functions.
/// basis has steps()+1 columns (steps() on breakdown), h is
/// (steps()+1) x steps() Hessenberg with the locked leading p_l x p_l block
/// upper triangular.
struct ArnoldiFactorization {
  std::shared_ptr<const FunctionEnv> env;
  StructuredBasis basis;
  Mat h;
  int p_l = 0;
  bool breakdown = false;

  int steps() const { return static_cast<int>(h.cols()); }
  /// Square part H_k of the Hessenberg matrix.
  Mat h_square() const { return h.topRows(h.cols()); }
  /// Top n x steps() block of the polynomial coefficients (the basis values
  /// at theta = 0).
  Mat value_head() const;
};

/// The locked infinite Arnoldi sweep: starts from the invariant-pair columns
/// e_1..e_{p_l} and the start coefficient c (all against the shared (y, s)),
/// and performs k_max - p_l operator-apply / orthogonalize steps.
ArnoldiFactorization infarn_exp(const NepProblem& p, const Mat& y, const Mat& s,
                                const Vec& c, int p_l, int k_max,
                                const ArnoldiOptions& opts = {});

/// Max relative coefficient-space residual of the Arnoldi relation over the
/// non-locked columns, verified by independent re-application of the operator.
double arnoldi_relation_residual(const NepProblem& p, const ArnoldiFactorization& f);

}  // namespace infarn
