#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <complex>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"
#include "infarn/oracle.hpp"
#include "infarn/restart.hpp"

using namespace infarn;

namespace {

Mat seeded_matrix(int rows, int cols, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  Mat a(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) a(i, j) = Cplx(dist(rng), dist(rng));
  return a;
}

SpMat dense_to_sparse(const Mat& a) {
  SpMat s(a.rows(), a.cols());
  for (int j = 0; j < a.cols(); ++j)
    for (int i = 0; i < a.rows(); ++i)
      if (a(i, j) != Cplx(0, 0)) s.insert(i, j) = a(i, j);
  s.makeCompressed();
  return s;
}

// Linear problem M(lambda) = I - lambda*A: eigenvalues are reciprocals of the
// eigenvalues of A, eigenvectors coincide.
NepProblem linear_problem(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<NepTerm> terms;
  terms.push_back({dense_to_sparse(Mat::Identity(n, n)),
                   parse_scalar_fun("poly(1)")});
  terms.push_back({dense_to_sparse(a), parse_scalar_fun("poly(0,-1)")});
  return NepProblem(n, std::move(terms));
}

Mat random_hessenberg(int k, unsigned seed) {
  Mat h = seeded_matrix(k, k, seed);
  for (int j = 0; j < k; ++j)
    for (int i = j + 2; i < k; ++i) h(i, j) = Cplx(0, 0);
  return h;
}

}  // namespace

TEST_CASE("classify_ritz: exact pairs of a linear problem all lock") {
  const int n = 6;
  Mat q = seeded_matrix(n, n, 11);
  Eigen::HouseholderQR<Mat> qr(q);
  Mat u = qr.householderQ();
  Vec d(n);
  for (int i = 0; i < n; ++i) d(i) = Cplx(1.0 + 0.5 * i, 0.3 * i);
  Mat a = u * d.asDiagonal() * u.adjoint();
  NepProblem p = linear_problem(a);

  // H_k = A and value_head = I make every Ritz pair exact.
  std::vector<RitzInfo> ritz =
      classify_ritz(p, a, Mat::Identity(n, n), 1e-10, 0);
  REQUIRE(static_cast<int>(ritz.size()) == n);
  for (const RitzInfo& r : ritz) {
    CHECK(r.cls == RitzClass::Lock);
    CHECK(r.residual <= 1e-10);
    CHECK(std::abs(r.lambda - 1.0 / r.theta) <= 1e-12 * std::abs(r.lambda));
  }
  // Every eigenvalue of A appears as some theta.
  for (int i = 0; i < n; ++i) {
    double best = 1e100;
    for (const RitzInfo& r : ritz) best = std::min(best, std::abs(r.theta - d(i)));
    CHECK(best <= 1e-10);
  }
}

TEST_CASE("classify_ritz: no locks, wanted count and selector order") {
  NepProblem p = hadeler_like(8, Cplx(-1, 0), 1);
  const int k = 7;
  Mat h = random_hessenberg(k, 23);
  Mat head = seeded_matrix(8, k, 29);

  SUBCASE("largest |theta| selector") {
    std::vector<RitzInfo> ritz = classify_ritz(p, h, head, 1e-14, 3);
    int locks = 0, wants = 0;
    double min_want = 1e100, max_unwant = 0;
    for (const RitzInfo& r : ritz) {
      if (r.cls == RitzClass::Lock) ++locks;
      if (r.cls == RitzClass::Want) {
        ++wants;
        min_want = std::min(min_want, std::abs(r.theta));
      }
      if (r.cls == RitzClass::Unwant)
        max_unwant = std::max(max_unwant, std::abs(r.theta));
    }
    CHECK(locks == 0);
    CHECK(wants == 3);
    CHECK(min_want >= max_unwant);
  }

  SUBCASE("nearest-target selector") {
    const Cplx target(0.5, 0.25);
    std::vector<RitzInfo> ritz =
        classify_ritz(p, h, head, 1e-14, 2, Selector::NearestTarget, target);
    double max_want = 0, min_unwant = 1e100;
    int wants = 0;
    for (const RitzInfo& r : ritz) {
      // Selector works on the reciprocal eigenvalue approximations.
      if (r.cls == RitzClass::Want) {
        ++wants;
        max_want = std::max(max_want, std::abs(r.lambda - target));
      }
      if (r.cls == RitzClass::Unwant)
        min_unwant = std::min(min_unwant, std::abs(r.lambda - target));
    }
    CHECK(wants == 2);
    CHECK(max_want <= min_unwant + 1e-12);
  }

  SUBCASE("huge residuals never lock even with tiny tolerance") {
    std::vector<RitzInfo> ritz = classify_ritz(p, h, head, 1e-300, k);
    for (const RitzInfo& r : ritz) CHECK(r.cls != RitzClass::Lock);
  }
}

TEST_CASE("schur_partition: reconstruction and block ordering") {
  NepProblem p = hadeler_like(8, Cplx(-1, 0), 1);
  const int k = 12;
  Mat h_under = seeded_matrix(k + 1, k, 31);
  for (int j = 0; j < k; ++j)
    for (int i = j + 2; i <= k; ++i) h_under(i, j) = Cplx(0, 0);
  h_under(k, k - 1) = Cplx(0.37, 0);
  Mat h_k = h_under.topRows(k);

  std::vector<RitzInfo> ritz =
      classify_ritz(p, h_k, seeded_matrix(8, k, 37), 1e-14, 4);
  SchurPartition sp = schur_partition(h_under, ritz);

  const int q1 = static_cast<int>(sp.q1.cols());
  const int q2 = static_cast<int>(sp.q2.cols());
  const int q3 = static_cast<int>(sp.q3.cols());
  CHECK(q1 + q2 + q3 == k);
  CHECK(sp.p_l == q1);
  CHECK(q2 == 4);

  Mat q(k, k);
  q << sp.q1, sp.q2, sp.q3;
  CHECK((q.adjoint() * q - Mat::Identity(k, k)).norm() <= 1e-12);

  Mat r = Mat::Zero(k, k);
  r.topLeftCorner(q1, q1) = sp.r11;
  r.block(0, q1, q1, q2) = sp.r12;
  r.block(0, q1 + q2, q1, q3) = sp.r13;
  r.block(q1, q1, q2, q2) = sp.r22;
  r.block(q1, q1 + q2, q2, q3) = sp.r23;
  r.bottomRightCorner(q3, q3) = sp.r33;
  CHECK((q.adjoint() * h_k * q - r).norm() <= 1e-11 * h_k.norm());

  // Trailing row transforms with the same unitary.
  Vec a(k);
  a << sp.a1, sp.a2, sp.a3;
  Vec expected = h_under(k, k - 1) * q.row(k - 1).transpose().conjugate().conjugate();
  CHECK((a.transpose() - h_under(k, k - 1) * q.row(k - 1)).norm() <= 1e-12);

  // Eigenvalues are preserved as a multiset.
  std::vector<double> orig, reord;
  Eigen::ComplexEigenSolver<Mat> es(h_k, false);
  for (int i = 0; i < k; ++i) orig.push_back(std::abs(es.eigenvalues()(i)));
  for (int i = 0; i < k; ++i) reord.push_back(std::abs(r(i, i)));
  std::sort(orig.begin(), orig.end());
  std::sort(reord.begin(), reord.end());
  for (int i = 0; i < k; ++i) CHECK(orig[i] == doctest::Approx(reord[i]).epsilon(1e-10));
}

TEST_CASE("impose_structure: all-locked case inverts the leading block") {
  NepProblem p = hadeler_like(6, Cplx(-1, 0), 1);
  const int k = 5;
  Mat h_under = seeded_matrix(k + 1, k, 41);
  for (int j = 0; j < k; ++j)
    for (int i = j + 2; i <= k; ++i) h_under(i, j) = Cplx(0, 0);
  Mat h_k = h_under.topRows(k);
  // Shift the spectrum away from zero so the leading block is invertible.
  h_k += 3.0 * Mat::Identity(k, k);
  h_under.topRows(k) = h_k;

  std::vector<RitzInfo> ritz =
      classify_ritz(p, h_k, seeded_matrix(6, k, 43), 1e300, 0);  // lock all
  SchurPartition sp = schur_partition(h_under, ritz);
  REQUIRE(sp.p_l == k);

  Mat head = seeded_matrix(6, k, 47);
  ImposedStructure st = impose_structure(sp, head);
  CHECK(st.s.rows() == k);
  CHECK((st.s * sp.r11 - Mat::Identity(k, k)).norm() <= 1e-10);
  CHECK((st.y - head * sp.q1).norm() <= 1e-12);
}

TEST_CASE("impose_structure: mixed locked/wanted satisfies the blockwise inverse") {
  NepProblem p = hadeler_like(6, Cplx(-1, 0), 1);
  const int k = 8;
  Mat h_under = seeded_matrix(k + 1, k, 53);
  for (int j = 0; j < k; ++j)
    for (int i = j + 2; i <= k; ++i) h_under(i, j) = Cplx(0, 0);
  Mat h_k = h_under.topRows(k) + 2.5 * Mat::Identity(k, k);
  h_under.topRows(k) = h_k;

  // Force exactly one lock by planting the classification directly.
  std::vector<RitzInfo> ritz = classify_ritz(p, h_k, seeded_matrix(6, k, 59), 1e-14, 3);
  int locked = 0;
  for (RitzInfo& r : ritz) {
    if (locked == 0 && r.cls == RitzClass::Want) {
      r.cls = RitzClass::Lock;
      ++locked;
    }
  }
  REQUIRE(locked == 1);

  SchurPartition sp = schur_partition(h_under, ritz);
  REQUIRE(sp.p_l == 1);
  const int q2 = static_cast<int>(sp.q2.cols());
  REQUIRE(q2 >= 1);

  Mat head = seeded_matrix(6, k, 61);
  ImposedStructure st = impose_structure(sp, head);
  const int pp = 1 + q2;
  REQUIRE(st.s.rows() == pp);
  REQUIRE(st.y.cols() == pp);

  // The leading block of S-hat must be the inverse of R11, and S-hat itself
  // must be invertible with eigenvalues 1/theta over the locked and wanted
  // Ritz values.
  CHECK((st.s.topLeftCorner(1, 1) * sp.r11 - Mat::Identity(1, 1)).norm() <= 1e-10);
  std::vector<double> expect, got;
  for (int i = 0; i < 1; ++i) expect.push_back(std::abs(1.0 / sp.r11(i, i)));
  for (int i = 0; i < q2; ++i) expect.push_back(std::abs(1.0 / sp.r22(i, i)));
  Eigen::ComplexEigenSolver<Mat> es(st.s, false);
  for (int i = 0; i < pp; ++i) got.push_back(std::abs(es.eigenvalues()(i)));
  std::sort(expect.begin(), expect.end());
  std::sort(got.begin(), got.end());
  for (int i = 0; i < pp; ++i)
    CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-8));

  // The locked head columns transform by Q1 only.
  CHECK((st.y.leftCols(1) - head * sp.q1).norm() <= 1e-12);
}

TEST_CASE("gamma_indicator: exact eigenpair gives a tiny value, empty gives 0") {
  NepProblem p = delay_like(4, 0.5, 3);
  CHECK(gamma_indicator(p, Mat(4, 0), Mat(0, 0)) == 0.0);

  OracleResult oc = taylor_companion_eigs(p, 30, 1.5);
  REQUIRE(!oc.eigenvalues.empty());
  int pick = -1;
  for (int i = 0; i < static_cast<int>(oc.eigenvalues.size()); ++i)
    if (std::abs(oc.eigenvalues[i]) > 0.2) { pick = i; break; }
  REQUIRE(pick >= 0);
  Mat y = oc.eigenvectors[pick];
  y /= y.norm();
  Mat s = Mat::Constant(1, 1, oc.eigenvalues[pick]);
  CHECK(gamma_indicator(p, y, s) <= 1e-5);
}

TEST_CASE("infarn_restart: delay problem converges and matches the oracle") {
  NepProblem p = delay_like(5, 1.0, 1);
  Vec x0 = seeded_matrix(5, 1, 71).col(0);
  RestartOptions opts;
  opts.k_max = 12;
  opts.p = 4;
  opts.max_outer = 20;
  SolveResult res = infarn_restart(p, x0, Cplx(1, 0), opts);

  REQUIRE(res.record.status == SolveStatus::Converged);
  REQUIRE(static_cast<int>(res.pair.eigenvalues.size()) >= 4);
  for (double r : res.pair.per_eig_residuals) CHECK(r <= 1e-10);
  CHECK(res.pair.residual_gamma <= 10.0 * opts.lock_tol);

  // Every locked eigenvalue appears in the companion-oracle list.
  OracleResult oc = taylor_companion_eigs(p, 30, 4.0);
  REQUIRE(!oc.eigenvalues.empty());
  for (const Cplx& lam : res.pair.eigenvalues) {
    double best = 1e100;
    for (const Cplx& mu : oc.eigenvalues) best = std::min(best, std::abs(lam - mu));
    CHECK(best <= 1e-8 * std::max(1.0, std::abs(lam)));
  }
}

TEST_CASE("infarn_restart: locked count is monotone and locked values persist") {
  NepProblem p = hadeler_like(8, Cplx(-1, 0), 1);
  Vec x0 = seeded_matrix(8, 1, 83).col(0);
  RestartOptions opts;
  opts.k_max = 20;
  opts.p = 10;
  opts.max_outer = 15;
  SolveResult res = infarn_restart(p, x0, Cplx(1, 0), opts);

  REQUIRE(res.record.status == SolveStatus::Converged);
  CHECK(static_cast<int>(res.record.outer.size()) <= 15);

  int prev = 0;
  std::vector<Cplx> prev_locked;
  for (const OuterRecord& rec : res.record.outer) {
    CHECK(rec.p_l >= prev);
    // Everything locked before stays locked (up to a tiny drift).
    for (const Cplx& lam : prev_locked) {
      double best = 1e100;
      for (const Cplx& cur : rec.locked_eigenvalues)
        best = std::min(best, std::abs(cur - lam));
      CHECK(best <= 1e-10 * std::max(1.0, std::abs(lam)));
    }
    prev = rec.p_l;
    prev_locked = rec.locked_eigenvalues;
  }

  REQUIRE(static_cast<int>(res.pair.eigenvalues.size()) >= 10);
  for (double r : res.pair.per_eig_residuals) CHECK(r <= 1e-8);
  CHECK(res.pair.residual_gamma <= 10.0 * opts.lock_tol);

  // The locked eigenvalues are pairwise distinct.
  for (size_t i = 0; i < res.pair.eigenvalues.size(); ++i)
    for (size_t j = i + 1; j < res.pair.eigenvalues.size(); ++j)
      CHECK(std::abs(res.pair.eigenvalues[i] - res.pair.eigenvalues[j]) > 1e-8);
}

TEST_CASE("infarn_restart: p = 0 returns an empty pair immediately") {
  NepProblem p = delay_like(4, 0.5, 1);
  Vec x0 = Vec::Ones(4);
  RestartOptions opts;
  opts.p = 0;
  SolveResult res = infarn_restart(p, x0, Cplx(1, 0), opts);
  CHECK(res.pair.eigenvalues.empty());
  CHECK(res.record.status == SolveStatus::Converged);
}

TEST_CASE("infarn_restart: rejects a zero shift point") {
  NepProblem p = delay_like(4, 0.5, 1);
  Vec x0 = Vec::Ones(4);
  RestartOptions opts;
  CHECK_THROWS(infarn_restart(p, x0, Cplx(0, 0), opts));
}
