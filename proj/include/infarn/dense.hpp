#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace infarn {

using Cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;

/// Complex Schur form a = q t q^H with t upper triangular and q unitary.
struct SchurForm {
  Mat q;
  Mat t;
};

SchurForm schur_decompose(const Mat& a);

/// Reorders the diagonal of a Schur form with adjacent unitary swaps so that
/// positions with select=true end up leading, preserving relative order.
SchurForm reorder_schur(const SchurForm& s, const std::vector<bool>& select);

/// Generalization used by the restart: entries are sorted by ascending rank
/// (stable), so a three-way locked/wanted/unwanted split is a single call.
SchurForm reorder_schur_ranked(const SchurForm& s, const std::vector<int>& rank);

Mat matrix_exp(const Mat& s);

/// Tail of the exponential Taylor series: exp(theta*s) - sum_{i=0}^{n} (theta*s)^i/i!.
/// n = -1 returns exp(theta*s). Computed by direct series summation of the tail
/// in extended precision so the result is accurate relative to its own size,
/// not just relative to exp(theta*s).
Mat exp_tail(const Mat& s, int n, Cplx theta);

/// Principal matrix square root. Fails when an eigenvalue lies on the closed
/// negative real axis.
Mat matrix_sqrt(const Mat& s);

class LuFactorization {
 public:
  explicit LuFactorization(const Mat& a);
  Mat solve(const Mat& b) const;
  Eigen::Index size() const { return lu_.rows(); }

 private:
  Eigen::PartialPivLU<Mat> lu_;
};

inline LuFactorization lu_factor(const Mat& a) { return LuFactorization(a); }
inline Mat lu_solve(const LuFactorization& f, const Mat& b) { return f.solve(b); }

/// Result of the Householder back-reduction of the bordered block
/// [[r22],[a2^T]]: p2 unitary with
///   [[p2^H, 0],[0, 1]] * [[r22],[a2^T]] * p2 = [[hhat],[beta*e_q^T]]
/// and hhat Hessenberg.
struct BackReduction {
  Mat p2;
  Mat hhat;
  Cplx beta;
};

BackReduction householder_back_reduce(const Mat& r22, const Vec& a2);

}  // namespace infarn
