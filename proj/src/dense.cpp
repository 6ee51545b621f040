#include "infarn/dense.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace infarn {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

void require_square(const Mat& a, const char* who) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << who << ": matrix must be square, got " << a.rows() << "x" << a.cols();
    throw std::invalid_argument(os.str());
  }
  if (!a.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": non-finite entries");
  }
}

// Swaps the diagonal entries t(j,j) and t(j+1,j+1) of an upper triangular
// matrix with a 2x2 unitary similarity, accumulating into q.
void swap_adjacent(Mat& t, Mat& q, Eigen::Index j, double norm_t) {
  const Cplx t11 = t(j, j);
  const Cplx t12 = t(j, j + 1);
  const Cplx t22 = t(j + 1, j + 1);

  // Eigenvector of [[t11,t12],[0,t22]] for t22; rotating it to e1 swaps the
  // diagonal.
  Eigen::Vector2cd v;
  v << t12, t22 - t11;
  const double nv = v.norm();
  if (nv == 0.0) return;  // equal eigenvalues, nothing to move
  v /= nv;

  Eigen::Matrix2cd g;
  g << v(0), -std::conj(v(1)), v(1), std::conj(v(0));

  const Eigen::Index n = t.rows();
  t.block(0, j, n, 2) = (t.block(0, j, n, 2) * g).eval();
  t.block(j, 0, 2, n) = (g.adjoint() * t.block(j, 0, 2, n)).eval();
  q.block(0, j, q.rows(), 2) = (q.block(0, j, q.rows(), 2) * g).eval();

  const double leak = std::abs(t(j + 1, j));
  if (leak > 1e-11 * std::max(norm_t, 1.0)) {
    std::ostringstream os;
    os << "reorder_schur: swap of eigenvalues " << t11 << " and " << t22
       << " lost triangularity (off-diagonal " << leak << ")";
    throw std::runtime_error(os.str());
  }
  t(j + 1, j) = Cplx(0, 0);
  // Clean any roundoff below the diagonal in the touched columns.
  for (Eigen::Index i = j + 2; i < n; ++i) {
    t(i, j) = Cplx(0, 0);
    t(i, j + 1) = Cplx(0, 0);
  }
}

// Householder reflection mapping w to gamma*e_last, with |gamma| = ||w|| and
// the phase of gamma matching w's last entry (no cancellation in v).
Mat householder_to_last(const Vec& w, Cplx& gamma) {
  const Eigen::Index m = w.size();
  Mat p = Mat::Identity(m, m);
  const double nw = w.norm();
  if (nw == 0.0) {
    gamma = Cplx(0, 0);
    return p;
  }
  Cplx phase(1, 0);
  if (std::abs(w(m - 1)) > 0) phase = w(m - 1) / std::abs(w(m - 1));
  gamma = phase * nw;

  // v = w - gamma*e_last with the last entry in the cancellation-free form
  // phase*(|w_last| - ||w||).
  Vec v = w;
  v(m - 1) = phase * (std::abs(w(m - 1)) - nw);
  const double nv2 = v.squaredNorm();
  if (nv2 == 0.0) return p;
  p -= (2.0 / nv2) * (v * v.adjoint());
  return p;
}

}  // namespace

SchurForm schur_decompose(const Mat& a) {
  require_square(a, "schur_decompose");
  Eigen::ComplexSchur<Mat> schur(a, /*computeU=*/true);
  if (schur.info() != Eigen::Success) {
    throw std::runtime_error("schur_decompose: QR iteration failed to converge");
  }
  SchurForm out{schur.matrixU(), schur.matrixT()};
  // Zero the strict lower part; ComplexSchur leaves exact zeros but keep the
  // invariant explicit.
  for (Eigen::Index j = 0; j < out.t.cols(); ++j)
    for (Eigen::Index i = j + 1; i < out.t.rows(); ++i) out.t(i, j) = Cplx(0, 0);
  return out;
}

SchurForm reorder_schur_ranked(const SchurForm& s, const std::vector<int>& rank) {
  const Eigen::Index n = s.t.rows();
  if (static_cast<Eigen::Index>(rank.size()) != n) {
    throw std::invalid_argument("reorder_schur: rank length mismatch");
  }
  SchurForm out = s;
  std::vector<int> r = rank;
  const double norm_t = s.t.norm();
  // Stable bubble sort by rank; each adjacent transposition is a unitary swap.
  bool moved = true;
  while (moved) {
    moved = false;
    for (Eigen::Index j = 0; j + 1 < n; ++j) {
      if (r[j] > r[j + 1]) {
        swap_adjacent(out.t, out.q, j, norm_t);
        std::swap(r[j], r[j + 1]);
        moved = true;
      }
    }
  }
  return out;
}

SchurForm reorder_schur(const SchurForm& s, const std::vector<bool>& select) {
  std::vector<int> rank(select.size());
  for (size_t i = 0; i < select.size(); ++i) rank[i] = select[i] ? 0 : 1;
  return reorder_schur_ranked(s, rank);
}

Mat matrix_exp(const Mat& s) {
  require_square(s, "matrix_exp");
  Mat e = s.exp();
  if (!e.allFinite()) {
    throw std::runtime_error("matrix_exp: overflow, norm too large");
  }
  return e;
}

Mat exp_tail(const Mat& s, int n, Cplx theta) {
  require_square(s, "exp_tail");
  if (n < -1) throw std::invalid_argument("exp_tail: n must be >= -1");
  if (n == -1) return matrix_exp(theta * s);

  using LMat = Eigen::Matrix<std::complex<long double>, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index m = s.rows();
  LMat a = (theta * s).cast<std::complex<long double>>();

  // term = (theta*s)^(n+1)/(n+1)!
  LMat term = LMat::Identity(m, m);
  for (int i = 1; i <= n + 1; ++i) term = (a * term) / static_cast<long double>(i);

  LMat acc = LMat::Zero(m, m);
  const int cap = 500;
  for (int i = n + 1; i <= cap; ++i) {
    acc += term;
    const long double tn = term.cwiseAbs().maxCoeff();
    const long double an = acc.cwiseAbs().maxCoeff();
    if (tn <= 1e-25L * std::max<long double>(an, 1e-300L) && i > n + 2) {
      return acc.cast<Cplx>();
    }
    term = (a * term) / static_cast<long double>(i + 1);
  }
  return acc.cast<Cplx>();
}

Mat matrix_sqrt(const Mat& s) {
  require_square(s, "matrix_sqrt");
  Eigen::ComplexSchur<Mat> schur(s, /*computeU=*/false);
  if (schur.info() != Eigen::Success) {
    throw std::runtime_error("matrix_sqrt: Schur factorization failed");
  }
  const double scale = std::max(1.0, s.norm());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const Cplx ev = schur.matrixT()(i, i);
    if (ev.real() <= 0.0 && std::abs(ev.imag()) <= 1e-14 * scale) {
      std::ostringstream os;
      os << "matrix_sqrt: eigenvalue " << ev << " on the closed negative real axis";
      throw std::runtime_error(os.str());
    }
  }
  return s.sqrt();
}

LuFactorization::LuFactorization(const Mat& a) {
  require_square(a, "lu_factor");
  lu_.compute(a);
  const double thresh = a.norm() * kEps * static_cast<double>(a.rows());
  const auto& packed = lu_.matrixLU();
  for (Eigen::Index i = 0; i < packed.rows(); ++i) {
    if (std::abs(packed(i, i)) <= thresh) {
      std::ostringstream os;
      os << "lu_factor: numerically singular, pivot " << i << " has magnitude "
         << std::abs(packed(i, i));
      throw std::runtime_error(os.str());
    }
  }
}

Mat LuFactorization::solve(const Mat& b) const {
  if (b.rows() != lu_.rows()) {
    throw std::invalid_argument("lu_solve: dimension mismatch");
  }
  return lu_.solve(b);
}

BackReduction householder_back_reduce(const Mat& r22, const Vec& a2) {
  require_square(r22, "householder_back_reduce");
  const Eigen::Index q = r22.rows();
  if (a2.size() != q) {
    throw std::invalid_argument("householder_back_reduce: a2 length mismatch");
  }
  BackReduction out;
  if (q == 0) {
    out.p2 = Mat(0, 0);
    out.hhat = Mat(0, 0);
    out.beta = Cplx(0, 0);
    return out;
  }

  // First reflection: a2^T * p2 = beta * e_q^T. The reflection is built for
  // conj(a2) -> conj(beta)*e_q; it is Hermitian so transposing works out.
  Cplx beta_bar;
  Mat r1 = householder_to_last(a2.conjugate(), beta_bar);
  out.beta = std::conj(beta_bar);

  Mat a = r1.adjoint() * r22 * r1;
  Mat p = r1;

  // Bottom-up Hessenberg reduction with reflections on leading coordinates
  // only, which leaves the trailing row beta*e_q^T untouched.
  for (Eigen::Index row = q - 1; row >= 2; --row) {
    // Zero a(row, 0..row-2) using a reflection on coordinates 0..row-1.
    Vec w = a.row(row).head(row).conjugate();
    Cplx gamma;
    Mat hh = householder_to_last(w, gamma);
    Mat full = Mat::Identity(q, q);
    full.topLeftCorner(row, row) = hh;
    a = full.adjoint() * a * full;
    p = p * full;
  }

  // Clean roundoff below the first subdiagonal.
  for (Eigen::Index j = 0; j + 2 < q; ++j)
    for (Eigen::Index i = j + 2; i < q; ++i) a(i, j) = Cplx(0, 0);

  out.p2 = p;
  out.hhat = a;
  return out;
}

}  // namespace infarn
