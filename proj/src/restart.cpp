#include "infarn/restart.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace infarn {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double spectral_norm(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  return a.jacobiSvd().singularValues()(0);
}

// Eigenvector of the upper-triangular t for the diagonal entry j, by backward
// substitution; clustered diagonals are regularized at the eps scale.
Vec triangular_eigvec(const Mat& t, int j) {
  Vec u = Vec::Zero(t.rows());
  u(j) = Cplx(1, 0);
  const double floor = kEps * std::max(1.0, t.norm());
  for (int i = j - 1; i >= 0; --i) {
    Cplx acc(0, 0);
    for (int l = i + 1; l <= j; ++l) acc += t(i, l) * u(l);
    Cplx d = t(i, i) - t(j, j);
    if (std::abs(d) < floor) d = Cplx(floor, 0);
    u(i) = -acc / d;
  }
  u /= u.norm();
  return u;
}

// Backward-error-scaled residual ||M(lambda) v|| / (||v|| * sum_i |f_i| ||M_i||):
// an absolute residual cannot reach 1000*eps when ||M(lambda)|| is large, so
// locking is judged at the problem's own scale.
double nep_residual(const NepProblem& p, Cplx lambda, const Vec& v) {
  double scale = 0.0;
  for (const NepTerm& t : p.terms()) {
    scale += std::abs(t.fun->eval(lambda)) * t.matrix.norm();
  }
  return (p.m_eval(lambda) * v).norm() / (v.norm() * std::max(scale, 1.0));
}

StructuredFunction unit_coeff_function(const std::shared_ptr<const FunctionEnv>& env,
                                       const Vec& c) {
  StructuredFunction f;
  f.env = env;
  f.c = c;
  return f;
}

}  // namespace

std::vector<RitzInfo> classify_ritz(const NepProblem& p, const Mat& h_k,
                                    const Mat& value_head, double lock_tol,
                                    int wanted, Selector selector, Cplx target) {
  const int k = static_cast<int>(h_k.cols());
  if (h_k.rows() != k) throw std::invalid_argument("classify_ritz: H_k not square");
  if (value_head.cols() != k) {
    throw std::invalid_argument("classify_ritz: basis head / H_k mismatch");
  }

  const SchurForm sf = schur_decompose(h_k);
  const double theta_floor = 1e-12 * std::max(h_k.norm(), 1.0);

  std::vector<RitzInfo> out(k);
  for (int j = 0; j < k; ++j) {
    RitzInfo& ri = out[j];
    ri.theta = sf.t(j, j);
    ri.cls = RitzClass::Unwant;
    ri.residual = std::numeric_limits<double>::infinity();
    if (std::abs(ri.theta) < theta_floor) continue;  // reciprocal undefined
    ri.lambda = Cplx(1, 0) / ri.theta;
    Vec w = sf.q * triangular_eigvec(sf.t, j);
    Vec v = value_head * w;
    if (v.norm() == 0.0) continue;
    try {
      ri.residual = nep_residual(p, ri.lambda, v);
    } catch (const std::exception&) {
      continue;  // lambda outside the problem domain
    }
    if (ri.residual <= lock_tol) ri.cls = RitzClass::Lock;
  }

  // Wanted: up to `wanted` of the remaining finite candidates by selector.
  std::vector<int> cand;
  for (int j = 0; j < k; ++j) {
    if (out[j].cls == RitzClass::Unwant &&
        std::abs(out[j].theta) >= theta_floor && std::isfinite(out[j].residual)) {
      cand.push_back(j);
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
    if (selector == Selector::LargestTheta) {
      return std::abs(out[a].theta) > std::abs(out[b].theta);
    }
    return std::abs(out[a].lambda - target) < std::abs(out[b].lambda - target);
  });
  for (int i = 0; i < std::min<int>(wanted, static_cast<int>(cand.size())); ++i) {
    out[cand[i]].cls = RitzClass::Want;
  }
  return out;
}

SchurPartition schur_partition(const Mat& h_underbar,
                               const std::vector<RitzInfo>& ritz) {
  const int k = static_cast<int>(h_underbar.cols());
  if (h_underbar.rows() != k + 1) {
    throw std::invalid_argument("schur_partition: expected a (k+1) x k matrix");
  }
  if (static_cast<int>(ritz.size()) != k) {
    throw std::invalid_argument("schur_partition: class list size mismatch");
  }
  const Mat h_k = h_underbar.topRows(k);
  const Cplx beta = h_underbar(k, k - 1);

  // Same deterministic Schur form as classify_ritz, so classes align with the
  // diagonal by index.
  SchurForm sf = schur_decompose(h_k);
  // Within the wanted block, order by ascending residual: the restart
  // continues from the first wanted column, so the nearly-converged Ritz
  // direction should lead.
  std::vector<int> want_idx;
  for (int j = 0; j < k; ++j)
    if (ritz[j].cls == RitzClass::Want) want_idx.push_back(j);
  std::stable_sort(want_idx.begin(), want_idx.end(), [&](int a, int b) {
    return ritz[a].residual < ritz[b].residual;
  });
  std::vector<int> rank(k);
  int p_l = 0, p_w = 0;
  for (int j = 0; j < k; ++j) {
    switch (ritz[j].cls) {
      case RitzClass::Lock: rank[j] = 0; ++p_l; break;
      case RitzClass::Want: rank[j] = 1; ++p_w; break;
      case RitzClass::Unwant: rank[j] = 2 + k; break;
    }
  }
  for (int i = 0; i < p_w; ++i) rank[want_idx[i]] = 1 + i;
  sf = reorder_schur_ranked(sf, rank);

  const int p_u = k - p_l - p_w;
  SchurPartition sp;
  sp.p_l = p_l;
  sp.q1 = sf.q.leftCols(p_l);
  sp.q2 = sf.q.middleCols(p_l, p_w);
  sp.q3 = sf.q.rightCols(p_u);
  sp.r11 = sf.t.topLeftCorner(p_l, p_l);
  sp.r22 = sf.t.block(p_l, p_l, p_w, p_w);
  sp.r33 = sf.t.bottomRightCorner(p_u, p_u);
  sp.r12 = sf.t.block(0, p_l, p_l, p_w);
  sp.r13 = sf.t.block(0, p_l + p_w, p_l, p_u);
  sp.r23 = sf.t.block(p_l, p_l + p_w, p_w, p_u);
  const Vec a = beta * sf.q.row(k - 1).transpose();
  sp.a1 = a.head(p_l);
  sp.a2 = a.segment(p_l, p_w);
  sp.a3 = a.tail(p_u);
  return sp;
}

ImposedStructure impose_structure(const SchurPartition& sp, const Mat& value_head) {
  const int p_l = sp.p_l;
  const int q = static_cast<int>(sp.r22.rows());
  const int p = p_l + q;

  ImposedStructure out;
  out.y = Mat(value_head.rows(), p);
  out.y.leftCols(p_l) = value_head * sp.q1;
  out.s = Mat::Zero(p, p);

  const double diag_floor = 1e-13 * std::max(1.0, sp.r11.norm() + sp.r22.norm());
  for (int j = 0; j < p_l; ++j) {
    if (std::abs(sp.r11(j, j)) < diag_floor) {
      throw std::runtime_error(
          "impose_structure: near-zero locked Ritz value; re-classify with the "
          "reciprocal-undefined guard");
    }
  }

  // Locked block: inverse of the triangular R11.
  const Mat s11 =
      sp.r11.triangularView<Eigen::Upper>().solve(Mat::Identity(p_l, p_l));
  out.s.topLeftCorner(p_l, p_l) = s11;

  if (q == 0) return out;

  const BackReduction br = householder_back_reduce(sp.r22, sp.a2);
  out.y.rightCols(q) = value_head * (sp.q2 * br.p2);

  // s = [[R11, Z],[0, Hhat]]^{-1} blockwise: the trailing block is Hhat^{-1},
  // the coupling block -R11^{-1} Z Hhat^{-1}.
  const Mat z = sp.r12 * br.p2;
  Eigen::PartialPivLU<Mat> lu(br.hhat);
  const Mat s22 = lu.solve(Mat::Identity(q, q));
  if (!s22.allFinite() ||
      (br.hhat * s22 - Mat::Identity(q, q)).norm() > 1e-8 * std::max(1.0, br.hhat.norm())) {
    throw std::runtime_error(
        "impose_structure: singular wanted block (a Ritz value near zero leaked "
        "into the wanted set); re-classify");
  }
  out.s.bottomRightCorner(q, q) = s22;
  out.s.topRightCorner(p_l, q) = -s11 * (z * s22);
  return out;
}

double gamma_indicator(const NepProblem& p, const Mat& y, const Mat& s_lock) {
  const int p_l = static_cast<int>(s_lock.cols());
  if (p_l == 0) return 0.0;
  if (y.cols() != p_l) throw std::invalid_argument("gamma_indicator: Y/S mismatch");

  Mat t(p.size(), p_l);
  for (int j = 0; j < p_l; ++j) {
    Vec e = Vec::Zero(p_l);
    e(j) = Cplx(1, 0);
    t.col(j) = p.m0_solve(p.mm_apply(y, s_lock, e));
  }
  // Right-solve by s_lock: G = T S^{-1}.
  const Mat g =
      s_lock.transpose().partialPivLu().solve(t.transpose()).transpose();
  if (!g.allFinite()) throw std::runtime_error("gamma_indicator: singular S");
  return spectral_norm(g);
}

namespace {

struct ReorthResult {
  Mat y;
  Mat s;
  std::shared_ptr<const FunctionEnv> env;  // environment of (y, s)
};

// Rebuilds an orthonormal locked basis e_1..e_{p_l} for the imposed pair by
// column-wise Gram-Schmidt, and applies the triangular change of coordinates
// to (y, s). Keeps the block-triangular shape of s.
ReorthResult reorthonormalize_locked(const Mat& y_hat, const Mat& s_hat, int p_l,
                                     double ip_target) {
  const int p = static_cast<int>(s_hat.cols());
  ReorthResult out;
  if (p_l == 0) {
    out.y = y_hat;
    out.s = s_hat;
    out.env = std::make_shared<FunctionEnv>(out.y, out.s, ip_target);
    return out;
  }

  auto env = std::make_shared<FunctionEnv>(y_hat, s_hat, ip_target);
  StructuredBasis locked;
  locked.env = env;
  locked.c_block = Mat(p, 0);
  locked.v_block = Mat(0, 0);
  locked.degree = 0;
  for (int j = 0; j < p_l; ++j) {
    Vec e = Vec::Zero(p);
    e(j) = Cplx(1, 0);
    GramSchmidtResult gs = gram_schmidt(unit_coeff_function(env, e), locked);
    if (gs.breakdown) {
      throw std::runtime_error("restart: locked columns linearly dependent");
    }
    Mat cb(p, locked.cols() + 1);
    cb.leftCols(locked.cols()) = locked.c_block;
    cb.col(locked.cols()) = gs.orthonormal.c;
    locked.c_block = std::move(cb);
    locked.v_block = Mat(0, locked.c_block.cols());
  }

  // Coefficients live in the leading p_l coordinates and form an upper
  // triangular K; the transformed pair is (Y K~, K~^{-1} S K~).
  const Mat kl = locked.c_block.topRows(p_l);
  Mat ktilde = Mat::Identity(p, p);
  ktilde.topLeftCorner(p_l, p_l) = kl;

  out.y = y_hat * ktilde;
  out.s = s_hat;
  out.s.topLeftCorner(p_l, p_l) =
      kl.triangularView<Eigen::Upper>().solve(
          Mat(s_hat.topLeftCorner(p_l, p_l) * kl));
  out.s.topRightCorner(p_l, p - p_l) =
      kl.triangularView<Eigen::Upper>().solve(
          Mat(s_hat.topRightCorner(p_l, p - p_l)));
  out.env = std::make_shared<FunctionEnv>(out.y, out.s, ip_target);
  return out;
}

// Polishes the locked block of the imposed pair to near machine precision.
// The locked columns act as exact invariant directions in the following
// sweeps, so an error left in them floors every later Ritz residual near the
// locking tolerance and the final wanted eigenvalues can fail to lock.
// Diagonalizes the triangular locked block, Newton-refines each eigenpair,
// and rebuilds the block in diagonal form; skipped when the block is too
// ill-conditioned to diagonalize safely.
void refine_locked_block(const NepProblem& p, Mat& y, Mat& s, int p_l) {
  if (p_l == 0) return;
  const int pp = static_cast<int>(s.cols());
  const Mat s11 = s.topLeftCorner(p_l, p_l);

  Mat k(p_l, p_l);
  for (int j = 0; j < p_l; ++j) k.col(j) = triangular_eigvec(s11, j);
  Eigen::PartialPivLU<Mat> klu(k);
  const Mat d = klu.solve(s11 * k);
  if (!d.allFinite()) return;
  Mat offdiag = d;
  offdiag.diagonal().setZero();
  if (offdiag.norm() > 1e-8 * std::max(1.0, s11.norm())) return;  // clustered

  Mat y1 = y.leftCols(p_l) * k;
  Vec lam(p_l);
  for (int j = 0; j < p_l; ++j) {
    Cplx l = d(j, j);
    Vec v = y1.col(j);
    const double col_scale = v.norm();  // keep: S12 is scaled consistently
    if (col_scale == 0.0) return;
    v /= col_scale;
    const Vec c = v;  // fixed normalization vector
    Cplx best_l = l;
    Vec best_v = v;
    double best_r;
    try {
      best_r = nep_residual(p, l, v);
    } catch (const std::exception&) {
      return;
    }
    const int n = p.size();
    for (int it = 0; it < 8; ++it) {
      Mat m;
      Mat mp;
      try {
        m = p.m_eval(l);
        mp = p.m_deriv_eval(l);
      } catch (const std::exception&) {
        break;
      }
      Mat jac(n + 1, n + 1);
      jac.topLeftCorner(n, n) = m;
      jac.topRightCorner(n, 1) = mp * v;
      jac.bottomLeftCorner(1, n) = c.adjoint();
      jac(n, n) = Cplx(0, 0);
      Vec rhs(n + 1);
      rhs.head(n) = m * v;
      rhs(n) = c.dot(v) - Cplx(1, 0);
      const Vec step = jac.partialPivLu().solve(rhs);
      if (!step.allFinite()) break;
      v -= step.head(n);
      l -= step(n);
      double r;
      try {
        r = nep_residual(p, l, v);
      } catch (const std::exception&) {
        break;
      }
      if (r < best_r) {
        best_r = r;
        best_l = l;
        best_v = v;
      }
      if (r <= 10.0 * kEps) break;
    }
    y1.col(j) = best_v * (col_scale / best_v.norm());
    lam(j) = best_l;
  }

  y.leftCols(p_l) = y1;
  s.topLeftCorner(p_l, p_l) = Mat(lam.asDiagonal());
  if (pp > p_l) {
    s.topRightCorner(p_l, pp - p_l) =
        klu.solve(s.topRightCorner(p_l, pp - p_l));
  }
}

// Next start coefficient: the first coordinate past the locked block,
// orthonormalized against the locked columns; falls back to later coordinates
// and finally random data if the obvious choice degenerates.
Vec next_start_coefficient(const std::shared_ptr<const FunctionEnv>& env, int p_l) {
  const int p = env->num_exp();
  StructuredBasis locked;
  locked.env = env;
  locked.c_block = Mat::Identity(p, p_l);
  locked.v_block = Mat(0, p_l);
  locked.degree = 0;

  std::mt19937_64 rng(12021);
  std::normal_distribution<double> dist;
  for (int attempt = 0; attempt < p - p_l + 4; ++attempt) {
    Vec c = Vec::Zero(p);
    if (p_l + attempt < p) {
      c(p_l + attempt) = Cplx(1, 0);
    } else {
      for (int i = 0; i < p; ++i) c(i) = Cplx(dist(rng), dist(rng));
    }
    GramSchmidtResult gs = gram_schmidt(unit_coeff_function(env, c), locked);
    if (!gs.breakdown) return gs.orthonormal.c;
  }
  throw std::runtime_error("restart: could not build a start coefficient");
}

std::vector<Cplx> triangular_diag(const Mat& t) {
  std::vector<Cplx> out(t.rows());
  for (int i = 0; i < t.rows(); ++i) out[i] = t(i, i);
  return out;
}

InvariantPair build_pair(const NepProblem& p, const Mat& y, const Mat& s_lock,
                         double gamma) {
  InvariantPair pair;
  pair.y = y;
  pair.lambda = s_lock;
  pair.residual_gamma = gamma;
  pair.eigenvalues = triangular_diag(s_lock);
  pair.per_eig_residuals.resize(pair.eigenvalues.size());
  for (size_t i = 0; i < pair.eigenvalues.size(); ++i) {
    Vec u = triangular_eigvec(s_lock, static_cast<int>(i));
    Vec v = y * u;
    double r = std::numeric_limits<double>::infinity();
    if (v.norm() > 0) {
      try {
        r = nep_residual(p, pair.eigenvalues[i], v);
      } catch (const std::exception&) {
      }
    }
    pair.per_eig_residuals[i] = r;
  }
  return pair;
}

}  // namespace

SolveResult infarn_restart(const NepProblem& p, const Vec& x0, Cplx lambda0,
                           const RestartOptions& opts) {
  if (opts.p < 0 || opts.p >= opts.k_max) {
    throw std::invalid_argument("infarn_restart: need 0 <= p < k_max");
  }
  if (x0.size() != p.size()) throw std::invalid_argument("infarn_restart: x0 size");
  if (x0.norm() == 0.0) throw std::invalid_argument("infarn_restart: x0 is zero");
  if (lambda0 == Cplx(0, 0)) {
    throw std::invalid_argument("infarn_restart: lambda0 = 0 makes S singular");
  }

  SolveResult result;
  if (opts.p == 0) {
    result.pair.y = Mat(p.size(), 0);
    result.pair.lambda = Mat(0, 0);
    result.record.status = SolveStatus::Converged;
    return result;
  }

  // Start function e^(lambda0*theta) x0, normalized in the function scalar
  // product norm.
  Mat y = x0;
  Mat s = Mat::Constant(1, 1, lambda0);
  {
    FunctionEnv env0(y, s, opts.ip_target);
    y /= std::sqrt(env0.w_table(0)(0, 0).real());
  }
  Vec c = Vec::Ones(1);
  int p_l = 0;
  std::vector<Cplx> locked_eigs;
  double gamma = 0.0;
  Mat y_lock(p.size(), 0), s_lock(0, 0);
  int stall = 0;

  ArnoldiOptions inner_opts;
  inner_opts.ip_target = opts.ip_target;

  for (int iter = 1; iter <= opts.max_outer; ++iter) {
    const auto t0 = std::chrono::steady_clock::now();
    ArnoldiFactorization fact = infarn_exp(p, y, s, c, p_l, opts.k_max, inner_opts);
    const int k = fact.steps();
    const Mat h_sq = fact.h_square();
    const Mat vhead = fact.value_head();

    std::vector<RitzInfo> ritz =
        classify_ritz(p, h_sq, vhead, opts.lock_tol, opts.p, opts.selector,
                      opts.target);

    // Previously locked eigenvalues stay locked: re-mark the nearest Ritz
    // value for each, so p_l never decreases across restarts.
    for (const Cplx& le : locked_eigs) {
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        if (ritz[j].lambda == Cplx(0, 0)) continue;  // reciprocal undefined
        const double d = std::abs(ritz[j].lambda - le);
        if (ritz[j].cls != RitzClass::Lock && d < best_d) {
          best = j;
          best_d = d;
        }
      }
      // Already covered when a locked-class Ritz value matches it.
      bool covered = false;
      for (int j = 0; j < k; ++j) {
        if (ritz[j].cls == RitzClass::Lock &&
            std::abs(ritz[j].lambda - le) <= 1e-8 * std::max(1.0, std::abs(le))) {
          covered = true;
          break;
        }
      }
      if (!covered && best >= 0) ritz[best].cls = RitzClass::Lock;
    }

    // Trim the wanted set to the want budget. Only p - p_l more eigenvalues
    // are needed, and every extra retained direction pollutes the restarted
    // start function through the exp(S theta) coupling of the wanted block;
    // near the end that pollution keeps the last pair from ever locking.
    // Also leaves room for new Arnoldi steps: p_l + q <= k_max - 1. The
    // least-converged wanted values are dropped first.
    {
      int n_lock = 0, n_want = 0;
      for (const auto& ri : ritz) {
        n_lock += ri.cls == RitzClass::Lock;
        n_want += ri.cls == RitzClass::Want;
      }
      const int budget =
          std::min(std::max(opts.p - n_lock, 1), opts.k_max - 1 - n_lock);
      int excess = n_want - budget;
      if (excess > 0) {
        std::vector<int> wanted_idx;
        for (int j = 0; j < k; ++j) {
          if (ritz[j].cls == RitzClass::Want) wanted_idx.push_back(j);
        }
        std::stable_sort(wanted_idx.begin(), wanted_idx.end(), [&](int a, int b) {
          return ritz[a].residual > ritz[b].residual;
        });
        for (int i = 0; i < excess && i < static_cast<int>(wanted_idx.size()); ++i) {
          ritz[wanted_idx[i]].cls = RitzClass::Unwant;
        }
      }
    }

    SchurPartition sp = schur_partition(fact.h, ritz);
    ImposedStructure imp = impose_structure(sp, vhead);
    const int new_p_l = sp.p_l;
    refine_locked_block(p, imp.y, imp.s, new_p_l);

    ReorthResult ro =
        reorthonormalize_locked(imp.y, imp.s, new_p_l, opts.ip_target);
    y_lock = ro.y.leftCols(new_p_l);
    s_lock = ro.s.topLeftCorner(new_p_l, new_p_l);
    gamma = gamma_indicator(p, y_lock, s_lock);
    locked_eigs = triangular_diag(s_lock);

    OuterRecord rec;
    rec.iteration = iter;
    rec.p_l = new_p_l;
    rec.gamma = gamma;
    for (const auto& ri : ritz) {
      rec.ritz_values.push_back(ri.lambda);
      rec.ritz_residuals.push_back(ri.residual);
    }
    rec.locked_eigenvalues = locked_eigs;
    rec.basis_degree = fact.basis.degree;
    rec.basis_columns = fact.basis.cols();
    rec.seconds = std::chrono::duration<double>(
        std::chrono::steady_clock::now() - t0).count();
    result.record.outer.push_back(rec);
    if (opts.callback) opts.callback(rec);

    if (new_p_l >= opts.p) {
      result.pair = build_pair(p, y_lock, s_lock, gamma);
      result.record.status = SolveStatus::Converged;
      return result;
    }

    stall = (new_p_l == p_l) ? stall + 1 : 0;
    if (stall >= opts.stall_limit) {
      result.pair = build_pair(p, y_lock, s_lock, gamma);
      result.record.status = SolveStatus::Stalled;
      return result;
    }
    p_l = new_p_l;

    // Restart state: the imposed pair, with a fresh start direction
    // orthogonal to the locked columns.
    y = ro.y;
    s = ro.s;
    if (s.cols() <= p_l) {
      // Everything in the pair is locked but more eigenvalues are wanted:
      // widen the pair with a random exponential direction at the shift.
      std::mt19937_64 rng(977 + iter);
      std::normal_distribution<double> dist;
      Mat y2(p.size(), s.cols() + 1);
      y2.leftCols(s.cols()) = y;
      for (int i = 0; i < p.size(); ++i) {
        y2(i, s.cols()) = Cplx(dist(rng), dist(rng));
      }
      y2.col(s.cols()) /= y2.col(s.cols()).norm();
      Mat s2 = Mat::Zero(s.rows() + 1, s.cols() + 1);
      s2.topLeftCorner(s.rows(), s.cols()) = s;
      s2(s.rows(), s.cols()) = lambda0;
      y = std::move(y2);
      s = std::move(s2);
      ro.env = std::make_shared<FunctionEnv>(y, s, opts.ip_target);
    }
    c = next_start_coefficient(ro.env, p_l);
  }

  result.pair = build_pair(p, y_lock, s_lock, gamma);
  result.record.status = SolveStatus::MaxOuterReached;
  return result;
}

}  // namespace infarn
