#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <complex>
#include <random>

#include "infarn/dense.hpp"

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

std::vector<Cplx> sorted_by_abs(std::vector<Cplx> v) {
  std::sort(v.begin(), v.end(), [](Cplx a, Cplx b) {
    if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
    return std::arg(a) < std::arg(b);
  });
  return v;
}

// Characteristic polynomial by the Faddeev-LeVerrier recurrence, then the
// eigenvalues as companion-matrix roots: an eigensolver independent of the
// Schur code under test.
std::vector<Cplx> char_poly_roots(const Mat& a) {
  const int n = static_cast<int>(a.rows());
  std::vector<Cplx> c(n + 1);  // monic: lambda^n + c1 lambda^{n-1} + ... + cn
  c[0] = Cplx(1, 0);
  Mat m = Mat::Zero(n, n);
  for (int k = 1; k <= n; ++k) {
    m = a * m + c[k - 1] * Mat::Identity(n, n);
    c[k] = -(a * m).trace() / static_cast<double>(k);
  }
  Mat comp = Mat::Zero(n, n);
  for (int i = 1; i < n; ++i) comp(i, i - 1) = Cplx(1, 0);
  for (int i = 0; i < n; ++i) comp(i, n - 1) = -c[n - i];
  Eigen::ComplexEigenSolver<Mat> eig(comp, false);
  std::vector<Cplx> out(n);
  for (int i = 0; i < n; ++i) out[i] = eig.eigenvalues()(i);
  return out;
}

void check_schur_invariants(const Mat& a, const SchurForm& s) {
  const int n = static_cast<int>(a.rows());
  CHECK((s.q.adjoint() * s.q - Mat::Identity(n, n)).norm() <= n * 1e-13);
  for (int j = 0; j < n; ++j)
    for (int i = j + 1; i < n; ++i)
      CHECK(std::abs(s.t(i, j)) <= 1e-13 * std::max(1.0, s.t.norm()));
  CHECK((s.q * s.t * s.q.adjoint() - a).norm() <= 1e-12 * std::max(1.0, a.norm()));
}

}  // namespace

TEST_CASE("schur_decompose: diagonal input") {
  Mat a = Mat::Zero(2, 2);
  a(0, 0) = Cplx(2, 0);
  a(1, 1) = Cplx(1, 0);
  SchurForm s = schur_decompose(a);
  check_schur_invariants(a, s);
  auto d = sorted_by_abs({s.t(0, 0), s.t(1, 1)});
  CHECK(std::abs(d[0] - Cplx(1, 0)) < 1e-14);
  CHECK(std::abs(d[1] - Cplx(2, 0)) < 1e-14);
}

TEST_CASE("schur_decompose: symmetric permutation") {
  Mat a(2, 2);
  a << Cplx(0, 0), Cplx(1, 0), Cplx(1, 0), Cplx(0, 0);
  SchurForm s = schur_decompose(a);
  check_schur_invariants(a, s);
  auto d = sorted_by_abs({s.t(0, 0), s.t(1, 1)});
  // eigenvalues {1, -1}
  CHECK(std::abs(std::abs(d[0]) - 1.0) < 1e-13);
  CHECK(std::abs(d[0] + d[1]) < 1e-13);
}

TEST_CASE("schur_decompose: seeded Hessenberg vs characteristic polynomial") {
  Mat a = seeded_matrix(8, 8, 42);
  for (int j = 0; j < 8; ++j)
    for (int i = j + 2; i < 8; ++i) a(i, j) = Cplx(0, 0);
  SchurForm s = schur_decompose(a);
  check_schur_invariants(a, s);
  std::vector<Cplx> got(8), want = char_poly_roots(a);
  for (int i = 0; i < 8; ++i) got[i] = s.t(i, i);
  got = sorted_by_abs(got);
  want = sorted_by_abs(want);
  for (int i = 0; i < 8; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-8);
}

TEST_CASE("reorder_schur: select moves eigenvalues to the front") {
  Mat a = Mat::Zero(3, 3);
  a(0, 0) = Cplx(1, 0);
  a(1, 1) = Cplx(2, 0);
  a(2, 2) = Cplx(3, 0);
  SchurForm s{Mat::Identity(3, 3), a};
  SchurForm r = reorder_schur(s, {false, false, true});
  CHECK(std::abs(r.t(0, 0) - Cplx(3, 0)) < 1e-13);
  check_schur_invariants(a, r);

  SchurForm all = reorder_schur(s, {true, true, true});
  CHECK((all.q - Mat::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("reorder_schur: seeded 6x6 split by magnitude") {
  Mat a = seeded_matrix(6, 6, 7);
  SchurForm s = schur_decompose(a);
  std::vector<bool> sel(6);
  std::vector<Cplx> outside, all;
  for (int i = 0; i < 6; ++i) {
    sel[i] = std::abs(s.t(i, i)) > 1.0;
    all.push_back(s.t(i, i));
    if (sel[i]) outside.push_back(s.t(i, i));
  }
  SchurForm r = reorder_schur(s, sel);
  check_schur_invariants(a, r);
  // leading block spectrum = selected set, multiset preserved overall
  std::vector<Cplx> lead, after;
  for (size_t i = 0; i < outside.size(); ++i) lead.push_back(r.t(i, i));
  for (int i = 0; i < 6; ++i) after.push_back(r.t(i, i));
  lead = sorted_by_abs(lead);
  auto want = sorted_by_abs(outside);
  for (size_t i = 0; i < lead.size(); ++i) CHECK(std::abs(lead[i] - want[i]) < 1e-10);
  after = sorted_by_abs(after);
  auto all_s = sorted_by_abs(all);
  for (int i = 0; i < 6; ++i) CHECK(std::abs(after[i] - all_s[i]) < 1e-10);
}

TEST_CASE("reorder_schur_ranked: three-way ordering") {
  Mat a = seeded_matrix(5, 5, 19);
  SchurForm s = schur_decompose(a);
  std::vector<int> rank = {2, 0, 1, 0, 2};
  SchurForm r = reorder_schur_ranked(s, rank);
  check_schur_invariants(a, r);
  // rank-0 eigenvalues lead, in their original relative order
  CHECK(std::abs(r.t(0, 0) - s.t(1, 1)) < 1e-10);
  CHECK(std::abs(r.t(1, 1) - s.t(3, 3)) < 1e-10);
  CHECK(std::abs(r.t(2, 2) - s.t(2, 2)) < 1e-10);
}

TEST_CASE("matrix_exp basics") {
  CHECK((matrix_exp(Mat::Zero(3, 3)) - Mat::Identity(3, 3)).norm() < 1e-14);
  Mat one = Mat::Constant(1, 1, Cplx(1, 0));
  CHECK(std::abs(matrix_exp(one)(0, 0) - Cplx(std::exp(1.0), 0)) < 1e-14);
}

TEST_CASE("matrix_exp: seeded 5x5 vs extended-precision series") {
  Mat a = seeded_matrix(5, 5, 3);
  using LD = std::complex<long double>;
  using MatL = Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic>;
  MatL al = a.cast<LD>();
  MatL acc = MatL::Identity(5, 5), term = MatL::Identity(5, 5);
  for (int i = 1; i <= 60; ++i) {
    term = (al * term) / static_cast<long double>(i);
    acc += term;
  }
  Mat want = acc.cast<Cplx>();
  CHECK((matrix_exp(a) - want).norm() < 1e-12 * want.norm());
}

TEST_CASE("exp_tail") {
  Mat a = seeded_matrix(4, 4, 11);
  CHECK((exp_tail(a, -1, Cplx(1, 0)) - matrix_exp(a)).norm() < 1e-13 * matrix_exp(a).norm());
  CHECK(exp_tail(Mat::Zero(2, 2), 0, Cplx(1, 0)).norm() == 0.0);

  Mat one = Mat::Constant(1, 1, Cplx(1, 0));
  const double want = std::exp(1.0) - 1.0 - 1.0 - 0.5;  // 0.21828...
  CHECK(std::abs(exp_tail(one, 2, Cplx(1, 0))(0, 0) - Cplx(want, 0)) < 1e-14);

  // consistency: tail + truncated series = full exponential
  const Cplx theta(0.3, -0.2);
  for (int n : {0, 1, 3, 7}) {
    Mat partial = Mat::Zero(4, 4), term = Mat::Identity(4, 4);
    for (int i = 0; i <= n; ++i) {
      if (i > 0) term = (theta * (a * term)) / static_cast<double>(i);
      partial += term;
    }
    CHECK((exp_tail(a, n, theta) + partial - matrix_exp(theta * a)).norm() <
          1e-12 * matrix_exp(theta * a).norm());
  }
}

TEST_CASE("householder_back_reduce: trivial forms") {
  // a2 = 0 with triangular R22: already in the required shape
  Mat r = seeded_matrix(3, 3, 5).triangularView<Eigen::Upper>();
  BackReduction br = householder_back_reduce(r, Vec::Zero(3));
  CHECK((br.p2 - Mat::Identity(3, 3)).norm() < 1e-14);
  CHECK((br.hhat - r).norm() < 1e-14);
  CHECK(std::abs(br.beta) < 1e-14);

  // 1x1: nothing to reduce
  Mat r1 = Mat::Constant(1, 1, Cplx(1.5, -0.5));
  Vec a1 = Vec::Constant(1, Cplx(0.25, 1.0));
  BackReduction b1 = householder_back_reduce(r1, a1);
  CHECK(std::abs(b1.hhat(0, 0) - r1(0, 0)) < 1e-14);
  CHECK(std::abs(b1.beta - a1(0)) < 1e-14);
}

TEST_CASE("householder_back_reduce: seeded 4x4 reconstruction") {
  Mat r22 = seeded_matrix(4, 4, 23).triangularView<Eigen::Upper>();
  Vec a2 = seeded_matrix(4, 1, 29).col(0);
  BackReduction br = householder_back_reduce(r22, a2);

  CHECK((br.p2.adjoint() * br.p2 - Mat::Identity(4, 4)).norm() < 1e-13);

  Mat bordered(5, 4);
  bordered.topRows(4) = r22;
  bordered.row(4) = a2.transpose();
  Mat trans = Mat::Zero(5, 5);
  trans.topLeftCorner(4, 4) = br.p2.adjoint();
  trans(4, 4) = Cplx(1, 0);
  Mat got = trans * bordered * br.p2;

  // top block Hessenberg, equal to hhat
  CHECK((got.topRows(4) - br.hhat).norm() < 1e-12 * std::max(1.0, bordered.norm()));
  for (int j = 0; j < 4; ++j)
    for (int i = j + 2; i < 4; ++i)
      CHECK(std::abs(br.hhat(i, j)) < 1e-12 * std::max(1.0, bordered.norm()));
  // trailing row beta * e_4^T
  for (int j = 0; j < 3; ++j)
    CHECK(std::abs(got(4, j)) < 1e-12 * std::max(1.0, bordered.norm()));
  CHECK(std::abs(got(4, 3) - br.beta) < 1e-12 * std::max(1.0, bordered.norm()));
}

TEST_CASE("lu factor/solve") {
  Vec b = seeded_matrix(4, 1, 31).col(0);
  CHECK((lu_solve(lu_factor(Mat::Identity(4, 4)), b) - b).norm() < 1e-14);

  Mat d2 = Mat::Constant(1, 1, Cplx(2, 0));
  Mat rhs = Mat::Constant(1, 1, Cplx(4, 0));
  CHECK(std::abs(lu_solve(lu_factor(d2), rhs)(0, 0) - Cplx(2, 0)) < 1e-14);

  Mat a = seeded_matrix(50, 50, 37);
  Mat bb = seeded_matrix(50, 3, 41);
  Mat x = lu_solve(lu_factor(a), bb);
  CHECK((a * x - bb).norm() <= 1e-11 * bb.norm());

  Mat sing = Mat::Ones(3, 3);
  CHECK_THROWS(lu_factor(sing));
}

TEST_CASE("matrix_sqrt") {
  CHECK((matrix_sqrt(Mat::Identity(3, 3)) - Mat::Identity(3, 3)).norm() < 1e-13);
  Mat d4 = Mat::Constant(1, 1, Cplx(4, 0));
  CHECK(std::abs(matrix_sqrt(d4)(0, 0) - Cplx(2, 0)) < 1e-13);

  Mat g = seeded_matrix(5, 5, 43);
  Mat spd = g * g.adjoint() + 5.0 * Mat::Identity(5, 5);
  Mat r = matrix_sqrt(spd);
  CHECK((r * r - spd).norm() <= 1e-11 * spd.norm());

  Mat neg = Mat::Constant(1, 1, Cplx(-1, 0));
  CHECK_THROWS(matrix_sqrt(neg));
}
