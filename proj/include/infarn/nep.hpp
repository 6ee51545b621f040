#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "infarn/dense.hpp"

namespace infarn {

using SpMat = Eigen::SparseMatrix<Cplx>;  // compressed column storage

/// One scalar nonlinearity f_i of the splitting M(lambda) = sum_i M_i f_i(lambda).
/// Provides Taylor data at 0, pointwise evaluation, and the matrix function
/// f(S) for small square S.
class ScalarTerm {
 public:
  virtual ~ScalarTerm() = default;
  virtual Cplx taylor_coeff(int i) const = 0;  // f^(i)(0)/i!
  virtual Cplx eval(Cplx lambda) const = 0;
  virtual Cplx eval_deriv(Cplx lambda) const = 0;
  virtual Mat matfun(const Mat& s) const = 0;
  virtual double radius() const = 0;  // convergence radius of the Taylor series
  virtual std::string describe() const = 0;
};

/// poly(c0,...,cd): f(lambda) = c0 + c1*lambda + ... + cd*lambda^d
class PolyTerm final : public ScalarTerm {
 public:
  explicit PolyTerm(std::vector<Cplx> coeffs);
  Cplx taylor_coeff(int i) const override;
  Cplx eval(Cplx lambda) const override;
  Cplx eval_deriv(Cplx lambda) const override;
  Mat matfun(const Mat& s) const override;
  double radius() const override;
  std::string describe() const override;

 private:
  std::vector<Cplx> coeffs_;
};

/// exp(a,b): f(lambda) = e^(a + b*lambda)
class ExpTerm final : public ScalarTerm {
 public:
  ExpTerm(Cplx a, Cplx b);
  Cplx taylor_coeff(int i) const override;
  Cplx eval(Cplx lambda) const override;
  Cplx eval_deriv(Cplx lambda) const override;
  Mat matfun(const Mat& s) const override;
  double radius() const override;
  std::string describe() const override;

 private:
  Cplx a_, b_;
};

/// sqrtshift(gamma,mu,sigma): f(lambda) = sqrt(gamma*lambda + mu - sigma^2),
/// principal branch.
class SqrtShiftTerm final : public ScalarTerm {
 public:
  SqrtShiftTerm(Cplx gamma, Cplx mu, double sigma);
  Cplx taylor_coeff(int i) const override;
  Cplx eval(Cplx lambda) const override;
  Cplx eval_deriv(Cplx lambda) const override;
  Mat matfun(const Mat& s) const override;
  double radius() const override;
  std::string describe() const override;

 private:
  Cplx gamma_, mu_;
  double sigma_;
};

/// k-th Taylor coefficient of lambda -> sqrt(gamma*lambda + mu - sigma^2) at 0.
Cplx sqrt_taylor_coeffs(double sigma, Cplx mu, Cplx gamma, int k);

struct NepTerm {
  SpMat matrix;
  std::shared_ptr<const ScalarTerm> fun;
};

/// A nonlinear eigenvalue problem M(lambda) = sum_i M_i f_i(lambda) with a
/// cached factorization of M(0). Immutable after construction.
class NepProblem {
 public:
  NepProblem(int n, std::vector<NepTerm> terms);

  int size() const { return n_; }
  int num_terms() const { return static_cast<int>(terms_.size()); }
  const std::vector<NepTerm>& terms() const { return terms_; }

  Mat m_eval(Cplx lambda) const;
  Mat m_deriv_eval(Cplx lambda) const;  // M'(lambda)
  Mat m0_solve(const Mat& b) const;

  /// M^(i)(0) * x
  Vec m_deriv_apply(int i, const Vec& x) const;

  /// M^(i)(0)/i! as a dense matrix (used by the companion oracle).
  Mat taylor_matrix(int i) const;

  /// MM(Y,S)*c = sum_i M_i * Y * f_i(S) * c
  Vec mm_apply(const Mat& y, const Mat& s, const Vec& c) const;

  /// MM_N(Y,S)*c: the Taylor tail after removing orders 0..n; n = -1 gives
  /// mm_apply. Summed adaptively per term.
  Vec mm_tail_apply(const Mat& y, const Mat& s, const Vec& c, int n) const;

 private:
  int n_;
  std::vector<NepTerm> terms_;
  std::shared_ptr<const LuFactorization> m0_lu_;
};

// Built-in benchmark problems; seeded deterministic generators.
NepProblem hadeler_like(int n, Cplx mu, unsigned seed = 1);
NepProblem gun_like(int n = 200, Cplx mu = 62500.0, Cplx gamma = 50000.0,
                    unsigned seed = 1);
NepProblem delay_like(int n, double tau, unsigned seed = 1);

/// Loads {n, terms:[{matrix:"path.mtx", fun:"exp(0,1)"}]} with paths relative
/// to the manifest file.
NepProblem load_manifest(const std::string& path);

/// Parses a scalar-function descriptor: poly(...), exp(a,b), sqrtshift(g,m,s).
std::shared_ptr<const ScalarTerm> parse_scalar_fun(const std::string& descriptor);

SpMat load_matrix_market(const std::string& path);

}  // namespace infarn
