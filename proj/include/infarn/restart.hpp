#pragma once

#include <functional>
#include <vector>

#include "infarn/arnoldi.hpp"
#include "infarn/nep.hpp"

namespace infarn {

enum class RitzClass { Lock, Want, Unwant };

struct RitzInfo {
  Cplx theta;       // eigenvalue of H_k
  Cplx lambda;      // 1/theta (NEP eigenvalue approximation); 0 when theta ~ 0
  double residual;  // ||M(lambda) v|| / ||v||
  RitzClass cls = RitzClass::Unwant;
};

enum class Selector { LargestTheta, NearestTarget };

/// Classifies every eigenvalue of H_k: Lock when the NEP residual is at or
/// below lock_tol, then up to `wanted` of the rest by selector order, the
/// remainder Unwant. theta ~ 0 is always Unwant.
std::vector<RitzInfo> classify_ritz(const NepProblem& p, const Mat& h_k,
                                    const Mat& value_head, double lock_tol,
                                    int wanted,
                                    Selector selector = Selector::LargestTheta,
                                    Cplx target = Cplx(0, 0));

/// Ordered Schur partition of the bordered Hessenberg matrix, with
/// locked / wanted / unwanted blocks and the transformed trailing row.
struct SchurPartition {
  Mat q1, q2, q3;        // column blocks of the ordering unitary
  Mat r11, r22, r33;     // triangular diagonal blocks
  Mat r12, r13, r23;     // off-diagonal blocks
  Vec a1, a2, a3;        // trailing-row segments
  int p_l = 0;           // locked block size
};

SchurPartition schur_partition(const Mat& h_underbar,
                               const std::vector<RitzInfo>& ritz);

/// Imposes exponential structure on the leading p columns: returns
/// y_hat = (V1 Q1, V1 Q2 P2) and s_hat = [[R11, Z],[0, Hhat]]^{-1} computed
/// blockwise.
struct ImposedStructure {
  Mat y;  // n x p
  Mat s;  // p x p, block triangular with leading block R11^{-1}
};

ImposedStructure impose_structure(const SchurPartition& sp, const Mat& value_head);

/// ||M(0)^{-1} MM(Y, S_lock) S_lock^{-1}||_2 for the locked pair; 0 for p_l = 0.
double gamma_indicator(const NepProblem& p, const Mat& y, const Mat& s_lock);

struct InvariantPair {
  Mat y;                                  // n x p_l
  Mat lambda;                             // p_l x p_l upper triangular
  std::vector<Cplx> eigenvalues;          // diagonal of lambda
  std::vector<double> per_eig_residuals;  // ||M(lambda_i) v_i|| / ||v_i||
  double residual_gamma = 0.0;
};

struct OuterRecord {
  int iteration = 0;
  int p_l = 0;
  double gamma = 0.0;
  std::vector<Cplx> ritz_values;
  std::vector<double> ritz_residuals;
  std::vector<Cplx> locked_eigenvalues;
  int basis_degree = 0;
  int basis_columns = 0;
  double seconds = 0.0;
};

enum class SolveStatus { Converged, MaxOuterReached, Stalled };

struct ConvergenceRecord {
  std::vector<OuterRecord> outer;
  SolveStatus status = SolveStatus::Converged;
};

struct RestartOptions {
  int k_max = 20;
  int p = 6;
  double lock_tol = 1000.0 * 2.220446049250313e-16;
  int max_outer = 30;
  int stall_limit = 10;
  Selector selector = Selector::LargestTheta;
  Cplx target = Cplx(0, 0);
  double ip_target = 2.3e-16;
  std::function<void(const OuterRecord&)> callback;
};

struct SolveResult {
  InvariantPair pair;
  ConvergenceRecord record;
};

/// The outer iteration: restarted locked infinite Arnoldi started from the
/// function e^(lambda0*theta) x0, until p eigenvalues are locked.
SolveResult infarn_restart(const NepProblem& p, const Vec& x0, Cplx lambda0,
                           const RestartOptions& opts);

}  // namespace infarn
