#include "infarn/arnoldi.hpp"

#include <sstream>
#include <stdexcept>

namespace infarn {

Mat ArnoldiFactorization::value_head() const {
  const Eigen::Index n = env->dim();
  if (basis.v_block.rows() < n) {
    throw std::logic_error("value_head: basis has no polynomial part yet");
  }
  return basis.v_block.topRows(n).leftCols(steps());
}

ArnoldiFactorization infarn_exp(const NepProblem& p, const Mat& y, const Mat& s,
                                const Vec& c, int p_l, int k_max,
                                const ArnoldiOptions& opts) {
  if (p_l < 0 || p_l >= k_max) {
    throw std::invalid_argument("infarn_exp: need 0 <= p_l < k_max");
  }
  if (y.rows() != p.size() || y.cols() != s.rows() || c.size() != s.rows()) {
    throw std::invalid_argument("infarn_exp: dimension mismatch");
  }
  if (p_l > s.rows()) throw std::invalid_argument("infarn_exp: p_l exceeds exponential rank");

  ArnoldiFactorization fact;
  fact.env = std::make_shared<FunctionEnv>(y, s, opts.ip_target);
  fact.p_l = p_l;
  const auto env = fact.env;
  const int pe = env->num_exp();

  // Locked columns e_1..e_{p_l} and the start coefficient c must already be
  // orthonormal in the function scalar product.
  {
    Mat k0 = Mat::Zero(pe, p_l + 1);
    for (int j = 0; j < p_l; ++j) k0(j, j) = Cplx(1, 0);
    k0.col(p_l) = c;
    Mat gram = k0.adjoint() * env->w_table(0) * k0;
    const double dev = (gram - Mat::Identity(p_l + 1, p_l + 1)).norm();
    if (dev > opts.orth_check_tol) {
      std::ostringstream os;
      os << "infarn_exp: start state not orthonormal, Gram deviation " << dev;
      throw std::invalid_argument(os.str());
    }
  }

  // H gets the locked triangular block R = S11^{-1}.
  Mat h = Mat::Zero(k_max + 1, k_max);
  if (p_l > 0) {
    const Mat s11 = s.topLeftCorner(p_l, p_l);
    h.topLeftCorner(p_l, p_l) = s11.triangularView<Eigen::Upper>().solve(
        Mat::Identity(p_l, p_l));
  }

  StructuredBasis basis;
  basis.env = env;
  basis.degree = 0;
  basis.c_block = Mat::Zero(pe, p_l + 1);
  for (int j = 0; j < p_l; ++j) basis.c_block(j, j) = Cplx(1, 0);
  basis.c_block.col(p_l) = c;
  basis.v_block = Mat(0, p_l + 1);

  for (int k = p_l + 1; k <= k_max; ++k) {
    StructuredFunction phi = basis_column(basis, k - 1);
    StructuredFunction phi_plus = apply_operator(p, phi);
    expand_degree(basis);
    GramSchmidtResult gs = gram_schmidt(phi_plus, basis);

    h.col(k - 1).head(k) = gs.h;
    h(k, k - 1) = Cplx(gs.beta, 0);
    if (gs.breakdown) {
      fact.breakdown = true;
      fact.basis = std::move(basis);
      fact.h = h.topLeftCorner(k + 1, k);
      return fact;
    }

    Mat cb(pe, basis.cols() + 1);
    cb.leftCols(basis.cols()) = basis.c_block;
    cb.col(basis.cols()) = gs.orthonormal.c;
    Mat vb(basis.v_block.rows(), basis.cols() + 1);
    vb.leftCols(basis.cols()) = basis.v_block;
    for (int i = 0; i < basis.degree; ++i) {
      vb.col(basis.cols()).segment(i * env->dim(), env->dim()) = gs.orthonormal.x[i];
    }
    basis.c_block = std::move(cb);
    basis.v_block = std::move(vb);
  }

  fact.basis = std::move(basis);
  fact.h = std::move(h);
  return fact;
}

double arnoldi_relation_residual(const NepProblem& p, const ArnoldiFactorization& f) {
  const int k = f.steps();
  const int cols = f.basis.cols();
  const Eigen::Index n = f.env->dim();

  // Pad the basis one degree up so it can represent B applied to its columns.
  StructuredBasis padded = f.basis;
  expand_degree(padded);

  double worst = 0.0;
  for (int j = f.p_l; j < k && j < cols; ++j) {
    StructuredFunction phi = basis_column(f.basis, j);
    StructuredFunction lhs = apply_operator(p, phi);

    Vec rhs_c = padded.c_block.leftCols(std::min(cols, k + 1)) *
                f.h.col(j).head(std::min(cols, k + 1));
    Vec rhs_x = padded.v_block.leftCols(std::min(cols, k + 1)) *
                f.h.col(j).head(std::min(cols, k + 1));

    Vec lhs_x(static_cast<Eigen::Index>(lhs.degree()) * n);
    for (int i = 0; i < lhs.degree(); ++i) lhs_x.segment(i * n, n) = lhs.x[i];

    double num = (lhs.c - rhs_c).squaredNorm();
    num += (lhs_x - rhs_x.head(lhs_x.size())).squaredNorm();
    if (rhs_x.size() > lhs_x.size()) num += rhs_x.tail(rhs_x.size() - lhs_x.size()).squaredNorm();
    const double den = std::max(1e-300, lhs.c.norm() + lhs_x.norm());
    worst = std::max(worst, std::sqrt(num) / den);
  }
  return worst;
}

}  // namespace infarn
