#include "infarn/structfn.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace infarn {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double spectral_norm(const Mat& a) {
  if (a.rows() == 0 || a.cols() == 0) return 0.0;
  return a.jacobiSvd().singularValues()(0);
}

void require_same_env(const StructuredFunction& phi, const StructuredFunction& psi) {
  if (phi.env != psi.env) {
    throw std::invalid_argument("structured functions must share an environment");
  }
}

Vec flatten(const std::vector<Vec>& blocks, Eigen::Index n) {
  Vec out(static_cast<Eigen::Index>(blocks.size()) * n);
  for (size_t i = 0; i < blocks.size(); ++i) out.segment(i * n, n) = blocks[i];
  return out;
}

}  // namespace

int choose_nmax(double s_norm, double target) {
  if (target <= 0.0) throw std::invalid_argument("choose_nmax: target must be > 0");
  if (s_norm < 0.0) throw std::invalid_argument("choose_nmax: negative norm");
  if (s_norm == 0.0) return 0;
  const double log_target = std::log(target);
  const double log_s = std::log(s_norm);
  for (int n = 0; n <= 10000; ++n) {
    // log of e^(2s) s^(2(n+1)) / ((n+1)!)^2
    const double log_bound =
        2.0 * s_norm + 2.0 * (n + 1) * log_s - 2.0 * std::lgamma(n + 2.0);
    if (log_bound <= log_target) return n;
  }
  throw std::runtime_error("choose_nmax: bound not attainable");
}

FunctionEnv::FunctionEnv(Mat y, Mat s, double ip_target)
    : y_(std::move(y)), s_(std::move(s)) {
  if (s_.rows() != s_.cols()) throw std::invalid_argument("FunctionEnv: S not square");
  if (y_.cols() != s_.rows()) throw std::invalid_argument("FunctionEnv: Y/S mismatch");
  yhy_ = y_.adjoint() * y_;
  s_norm_ = spectral_norm(s_);
  n_max_ = choose_nmax(s_norm_, ip_target);
  s_lu_.compute(s_);

  const int p = num_exp();
  power_ = Mat::Identity(p, p);  // S^0 / 0!
  terms_.push_back(power_.adjoint() * yhy_ * power_);
  extend_tables(n_max_);
}

// Grow the term list so that the suffix sum starting at n_lo carries its tail
// to full relative precision, then rebuild the cached suffix sums.
void FunctionEnv::extend_tables(int n_lo) const {
  int top = static_cast<int>(terms_.size()) - 1;
  const int hard_cap = n_lo + 500;
  while (top < hard_cap) {
    if (top >= n_lo) {
      const double lead = terms_[n_lo].norm();
      if (terms_[top].norm() <= kEps * kEps * lead) break;
    }
    ++top;
    power_ = (s_ * power_) / static_cast<double>(top);
    terms_.push_back(power_.adjoint() * yhy_ * power_);
  }
  w_suffix_.assign(terms_.size() + 1, Mat::Zero(s_.rows(), s_.cols()));
  for (int k = static_cast<int>(terms_.size()) - 1; k >= 0; --k) {
    w_suffix_[k] = w_suffix_[k + 1] + terms_[k];
    w_suffix_[k] = 0.5 * (w_suffix_[k] + w_suffix_[k].adjoint().eval());
  }
}

const Mat& FunctionEnv::w_table(int n_lo) const {
  if (n_lo < 0) throw std::invalid_argument("w_table: negative index");
  if (n_lo + 1 >= static_cast<int>(w_suffix_.size()) ||
      terms_[n_lo].norm() * kEps * kEps < terms_.back().norm()) {
    extend_tables(n_lo);
  }
  if (n_lo >= static_cast<int>(w_suffix_.size()))
    return w_suffix_.back();  // past the hard cap: tail is identically tiny
  return w_suffix_[n_lo];
}

Vec FunctionEnv::solve_s(const Vec& c) const {
  Vec out = s_lu_.solve(c);
  if (!out.allFinite()) throw std::runtime_error("FunctionEnv: S is singular");
  // Cheap singularity guard: PartialPivLU does not signal rank deficiency.
  const double res = (s_ * out - c).norm();
  if (res > 1e-8 * std::max(1.0, c.norm())) {
    throw std::runtime_error("FunctionEnv: S is numerically singular");
  }
  return out;
}

StructuredFunction apply_operator(const NepProblem& p, const StructuredFunction& phi) {
  const auto& env = *phi.env;
  if (p.size() != env.dim()) throw std::invalid_argument("apply_operator: dimension mismatch");
  const int n_deg = phi.degree();
  const Eigen::Index n = env.dim();

  StructuredFunction out;
  out.env = phi.env;
  out.c = env.solve_s(phi.c);

  out.x.assign(n_deg + 1, Vec::Zero(n));
  for (int i = 1; i <= n_deg; ++i) out.x[i] = phi.x[i - 1] / static_cast<double>(i);

  Vec rhs = p.mm_tail_apply(env.y(), env.s(), out.c, n_deg);
  for (int i = 1; i <= n_deg; ++i) rhs += p.m_deriv_apply(i, out.x[i]);
  out.x[0] = -p.m0_solve(rhs);
  return out;
}

void expand_degree(StructuredBasis& b) {
  const auto& env = *b.env;
  const Eigen::Index n = env.dim();
  const int n_deg = b.degree;

  // S^N C / N!
  Mat block = b.c_block;
  for (int i = 1; i <= n_deg; ++i) block = (env.s() * block) / static_cast<double>(i);
  Mat rows = env.y() * block;

  Mat v(b.v_block.rows() + n, b.cols());
  v.topRows(b.v_block.rows()) = b.v_block;
  v.bottomRows(n) = rows;
  b.v_block = std::move(v);
  b.degree = n_deg + 1;
}

StructuredFunction pad_to_degree(const StructuredFunction& phi, int degree) {
  if (degree < phi.degree()) {
    throw std::invalid_argument("pad_to_degree: cannot truncate");
  }
  StructuredFunction out = phi;
  const auto& env = *phi.env;
  Vec block = phi.c;  // S^i c / i!
  for (int i = 1; i <= phi.degree(); ++i) block = (env.s() * block) / static_cast<double>(i);
  for (int i = phi.degree(); i < degree; ++i) {
    out.x.push_back(env.y() * block);  // x_i = Y S^i c / i!
    block = (env.s() * block) / static_cast<double>(i + 1);
  }
  return out;
}

Cplx inner_product(const StructuredFunction& phi, const StructuredFunction& psi) {
  require_same_env(phi, psi);
  const int n_deg = std::max(phi.degree(), psi.degree());
  const StructuredFunction a = phi.degree() == n_deg ? phi : pad_to_degree(phi, n_deg);
  const StructuredFunction b = psi.degree() == n_deg ? psi : pad_to_degree(psi, n_deg);

  Cplx acc(0, 0);
  for (int i = 0; i < n_deg; ++i) acc += b.x[i].dot(a.x[i]);  // z_i^H x_i
  acc += b.c.dot(phi.env->w_table(n_deg) * a.c);
  return acc;
}

double function_norm(const StructuredFunction& phi) {
  double acc = 0.0;
  for (const auto& blk : phi.x) acc += blk.squaredNorm();
  acc += phi.c.dot(phi.env->w_table(phi.degree()) * phi.c).real();
  return std::sqrt(std::max(acc, 0.0));
}

GramSchmidtResult gram_schmidt(const StructuredFunction& phi, const StructuredBasis& b) {
  if (phi.env != b.env) throw std::invalid_argument("gram_schmidt: environment mismatch");
  if (phi.degree() != b.degree) throw std::invalid_argument("gram_schmidt: degree mismatch");
  const auto& env = *phi.env;
  const Eigen::Index n = env.dim();
  const Mat& w = env.w_table(b.degree);

  Vec x = flatten(phi.x, n);
  Vec c = phi.c;
  const double phi_scale = std::sqrt(
      std::max(x.squaredNorm() + c.dot(w * c).real(), 0.0));

  Vec h = Vec::Zero(b.cols());
  if (b.cols() > 0) {
    h = b.v_block.adjoint() * x + b.c_block.adjoint() * (w * c);
    c -= b.c_block * h;
    x -= b.v_block * h;
    // Iterative reorthogonalization: when the complement is small relative to
    // phi (a nearly converged Krylov direction), a single extra pass still
    // leaves O(eps * phi / beta) nonorthogonality in the normalized vector,
    // so repeat until the projection is eps-small relative to the complement
    // itself (in practice one or two extra passes).
    for (int pass = 0; pass < 4; ++pass) {
      Vec g = b.v_block.adjoint() * x + b.c_block.adjoint() * (w * c);
      const double cur =
          std::sqrt(std::max(x.squaredNorm() + c.dot(w * c).real(), 0.0));
      if (g.norm() <= 4.0 * kEps * cur) break;
      c -= b.c_block * g;
      x -= b.v_block * g;
      h += g;
    }
  }

  GramSchmidtResult out;
  out.h = h;
  const double beta2 = x.squaredNorm() + c.dot(w * c).real();
  out.beta = std::sqrt(std::max(beta2, 0.0));
  if (out.beta <= 100.0 * kEps * std::max(phi_scale, 1.0)) {
    out.breakdown = true;
    return out;
  }

  out.orthonormal.env = phi.env;
  out.orthonormal.c = c / out.beta;
  out.orthonormal.x.resize(b.degree);
  for (int i = 0; i < b.degree; ++i) {
    out.orthonormal.x[i] = x.segment(i * n, n) / out.beta;
  }
  return out;
}

Vec evaluate(const StructuredFunction& phi, Cplx theta) {
  const auto& env = *phi.env;
  const int n_deg = phi.degree();
  Vec acc = env.y() * (exp_tail(env.s(), n_deg - 1, theta) * phi.c);
  Cplx power(1, 0);
  for (int i = 0; i < n_deg; ++i) {
    acc += power * phi.x[i];
    power *= theta;
  }
  return acc;
}

Vec taylor_block(const StructuredFunction& phi, int i) {
  if (i < phi.degree()) return phi.x[i];
  const auto& env = *phi.env;
  Vec block = phi.c;
  for (int j = 1; j <= i; ++j) block = (env.s() * block) / static_cast<double>(j);
  return env.y() * block;
}

StructuredFunction basis_column(const StructuredBasis& b, int j) {
  if (j < 0 || j >= b.cols()) throw std::out_of_range("basis_column");
  StructuredFunction out;
  out.env = b.env;
  out.c = b.c_block.col(j);
  const Eigen::Index n = b.env->dim();
  out.x.resize(b.degree);
  for (int i = 0; i < b.degree; ++i) out.x[i] = b.v_block.col(j).segment(i * n, n);
  return out;
}

}  // namespace infarn
