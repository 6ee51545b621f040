#pragma once

#include <memory>
#include <vector>

#include "infarn/dense.hpp"
#include "infarn/nep.hpp"

namespace infarn {

/// Smallest N_max such that e^(2s) * s^(2(N+1)) / ((N+1)!)^2 <= target, the
/// truncation bound of the Taylor-coefficient scalar product.
int choose_nmax(double s_norm, double target);

/// Shared environment (Y, S) of a family of structured functions
///   phi(theta) = Y exp_{N-1}(theta S) c + sum_i theta^i x_i.
/// Holds the cached S-solver and the W tables of the scalar product.
/// Immutable after construction.
class FunctionEnv {
 public:
  FunctionEnv(Mat y, Mat s, double ip_target = 2.3e-16);

  const Mat& y() const { return y_; }
  const Mat& s() const { return s_; }
  const Mat& yhy() const { return yhy_; }
  int dim() const { return static_cast<int>(y_.rows()); }
  int num_exp() const { return static_cast<int>(s_.rows()); }
  int n_max() const { return n_max_; }
  double s_norm() const { return s_norm_; }

  /// W_{n_lo} = sum_{i=n_lo}^{top} (S^i)^H Y^H Y S^i / (i!)^2, where the
  /// series is extended until the dropped tail is negligible relative to the
  /// leading term at n_lo. Tables are cached and grown on demand.
  const Mat& w_table(int n_lo) const;

  Vec solve_s(const Vec& c) const;  // S^{-1} c

 private:
  void extend_tables(int n_lo) const;

  Mat y_, s_, yhy_;
  double s_norm_;
  int n_max_;
  mutable std::vector<Mat> terms_;     // terms_[i] = (S^i/i!)^H Y^H Y (S^i/i!)
  mutable Mat power_;                  // S^top / top!
  mutable std::vector<Mat> w_suffix_;  // w_suffix_[k] = W_k, k = 0..top+1
  Eigen::PartialPivLU<Mat> s_lu_;
};

struct StructuredFunction {
  std::shared_ptr<const FunctionEnv> env;
  Vec c;                // exponential coefficients, length p
  std::vector<Vec> x;   // polynomial blocks x_0..x_{N-1}

  int degree() const { return static_cast<int>(x.size()); }
};

/// Block of k structured functions sharing one polynomial degree; the columns
/// of c_block/v_block are the coefficient vectors.
struct StructuredBasis {
  std::shared_ptr<const FunctionEnv> env;
  Mat c_block;  // p x k
  Mat v_block;  // (N*n) x k
  int degree = 0;

  int cols() const { return static_cast<int>(c_block.cols()); }
};

/// The action of the integration operator: phi -> B(phi) of degree N+1, with
/// c+ = S^{-1} c, x+_i = x_{i-1}/i and x+_0 from the Taylor boundary condition.
StructuredFunction apply_operator(const NepProblem& p, const StructuredFunction& phi);

/// Raises the basis degree by one without changing the represented functions:
/// appends the block row Y S^N C / N!.
void expand_degree(StructuredBasis& b);

/// Zero-pads phi to the given degree, moving leading exponential Taylor blocks
/// into the polynomial part.
StructuredFunction pad_to_degree(const StructuredFunction& phi, int degree);

Cplx inner_product(const StructuredFunction& phi, const StructuredFunction& psi);

double function_norm(const StructuredFunction& phi);

struct GramSchmidtResult {
  StructuredFunction orthonormal;  // valid only when !breakdown
  Vec h;
  double beta = 0.0;
  bool breakdown = false;
};

/// Orthogonalizes phi against the (orthonormal) basis columns, repeating the
/// projection until the remaining overlap is at the epsilon scale of the
/// complement.
GramSchmidtResult gram_schmidt(const StructuredFunction& phi, const StructuredBasis& b);

Vec evaluate(const StructuredFunction& phi, Cplx theta);

/// Taylor coefficient t_i of phi: x_i for i < N, Y S^i c / i! for i >= N.
Vec taylor_block(const StructuredFunction& phi, int i);

/// Column j of the basis as a standalone function.
StructuredFunction basis_column(const StructuredBasis& b, int j);

}  // namespace infarn
