#include "infarn/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace infarn {

namespace {

// Roots of the reciprocal Taylor polynomial within |lambda| <= radius.
// With mu = 1/lambda the polynomial sum_{i<=d} B_i lambda^i becomes
// mu^d B_0 + mu^{d-1} B_1 + ... + B_d (up to the mu^{-d} factor); B_0 = M(0)
// is invertible, so the monic block companion in mu is well defined.
std::vector<Cplx> companion_roots(const NepProblem& p, int d, double radius) {
  const int n = p.size();
  std::vector<Mat> coeff(d + 1);
  for (int i = 0; i <= d; ++i) coeff[i] = p.m0_solve(p.taylor_matrix(i));

  Mat c = Mat::Zero(n * d, n * d);
  for (int j = 1; j < d; ++j) c.block(j * n, (j - 1) * n, n, n).setIdentity();
  // coefficient of mu^j in the monic polynomial is B_0^{-1} B_{d-j}
  for (int j = 0; j < d; ++j) c.block(j * n, (d - 1) * n, n, n) = -coeff[d - j];

  Eigen::ComplexEigenSolver<Mat> eig(c, /*computeEigenvectors=*/false);
  if (eig.info() != Eigen::Success) {
    throw std::runtime_error("taylor_companion_eigs: eigensolver failed");
  }

  std::vector<Cplx> out;
  for (int i = 0; i < n * d; ++i) {
    const Cplx mu = eig.eigenvalues()(i);
    if (std::abs(mu) * radius < 1.0) continue;  // |lambda| > radius
    out.push_back(Cplx(1, 0) / mu);
  }
  return out;
}

Vec smallest_singular_vector(const Mat& a) {
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinV);
  return svd.matrixV().col(a.cols() - 1);
}

}  // namespace

NewtonResult newton_refine(const NepProblem& p, Cplx lambda, const Vec& v) {
  const int n = p.size();
  if (v.size() != n) throw std::invalid_argument("newton_refine: vector size");
  if (v.norm() == 0.0) throw std::invalid_argument("newton_refine: zero vector");

  NewtonResult best;
  best.lambda = lambda;
  best.v = v / v.norm();
  const Vec ctil = best.v;  // normalization functional c^H v = 1
  best.residual = std::numeric_limits<double>::infinity();

  Cplx lam = lambda;
  Vec x = best.v;
  for (int step = 0; step < 20; ++step) {
    Mat m, mp;
    try {
      m = p.m_eval(lam);
      mp = p.m_deriv_eval(lam);
    } catch (const std::exception&) {
      return best;  // walked out of the domain; report best so far
    }
    const Vec r = m * x;
    const double res = r.norm() / x.norm();
    if (res < best.residual) {
      best.residual = res;
      best.lambda = lam;
      best.v = x / x.norm();
    }
    if (res <= 1e-14 * std::max(1.0, m.norm())) {
      best.converged = true;
      return best;
    }

    Mat jac = Mat::Zero(n + 1, n + 1);
    jac.topLeftCorner(n, n) = m;
    jac.block(0, n, n, 1) = mp * x;
    jac.block(n, 0, 1, n) = ctil.adjoint();
    Vec rhs(n + 1);
    rhs.head(n) = -r;
    rhs(n) = Cplx(1, 0) - ctil.dot(x);

    Eigen::PartialPivLU<Mat> lu(jac);
    Vec delta = lu.solve(rhs);
    if (!delta.allFinite() ||
        (jac * delta - rhs).norm() > 1e-6 * std::max(1.0, rhs.norm())) {
      return best;  // singular Jacobian (defective eigenvalue)
    }
    x += delta.head(n);
    lam += delta(n);
    if (x.norm() == 0.0) return best;
  }
  best.converged = best.residual <= 1e-12;
  return best;
}

OracleResult taylor_companion_eigs(const NepProblem& p, int degree, double radius) {
  if (degree < 2) throw std::invalid_argument("taylor_companion_eigs: degree >= 2");
  if (radius <= 0) throw std::invalid_argument("taylor_companion_eigs: radius > 0");

  const std::vector<Cplx> base = companion_roots(p, degree, radius);
  const std::vector<Cplx> check = companion_roots(p, degree + 4, radius);

  OracleResult out;
  for (const Cplx& lam : base) {
    // Stability across degrees: keep only eigenvalues the higher-degree
    // linearization confirms.
    double d_min = std::numeric_limits<double>::infinity();
    for (const Cplx& mu : check) d_min = std::min(d_min, std::abs(lam - mu));
    if (d_min > 1e-6 * std::max(1.0, std::abs(lam))) continue;

    Mat m;
    try {
      m = p.m_eval(lam);
    } catch (const std::exception&) {
      continue;
    }
    NewtonResult nr = newton_refine(p, lam, smallest_singular_vector(m));
    if (nr.residual > 1e-8 || std::abs(nr.lambda) > radius * (1.0 + 1e-6)) continue;

    // De-duplicate (companion multiplicities, cluster refinement collapse).
    bool dup = false;
    for (const Cplx& seen : out.eigenvalues) {
      if (std::abs(seen - nr.lambda) <= 1e-7 * std::max(1.0, std::abs(seen))) {
        dup = true;
        break;
      }
    }
    if (dup) continue;

    out.eigenvalues.push_back(nr.lambda);
    out.eigenvectors.push_back(nr.v);
    out.residuals.push_back(nr.residual);
  }

  // Sort by ascending |lambda|.
  std::vector<size_t> order(out.eigenvalues.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return std::abs(out.eigenvalues[a]) < std::abs(out.eigenvalues[b]);
  });
  OracleResult sorted;
  for (size_t i : order) {
    sorted.eigenvalues.push_back(out.eigenvalues[i]);
    sorted.eigenvectors.push_back(out.eigenvectors[i]);
    sorted.residuals.push_back(out.residuals[i]);
  }
  return sorted;
}

}  // namespace infarn
