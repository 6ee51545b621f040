#include "infarn/nep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace infarn {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kInf = std::numeric_limits<double>::infinity();

double factorial(int i) { return std::tgamma(static_cast<double>(i) + 1.0); }

[[noreturn]] void branch_cut_error(const std::string& who, Cplx arg) {
  std::ostringstream os;
  os << who << ": argument " << arg << " on the closed negative real axis";
  throw std::domain_error(os.str());
}

Cplx principal_sqrt(Cplx z, const std::string& who) {
  if (z.real() <= 0.0 && z.imag() == 0.0) branch_cut_error(who, z);
  return std::sqrt(z);
}

}  // namespace

// ---------------------------------------------------------------------------
// PolyTerm

PolyTerm::PolyTerm(std::vector<Cplx> coeffs) : coeffs_(std::move(coeffs)) {
  if (coeffs_.empty()) coeffs_.push_back(Cplx(0, 0));
}

Cplx PolyTerm::taylor_coeff(int i) const {
  if (i < 0 || i >= static_cast<int>(coeffs_.size())) return Cplx(0, 0);
  return coeffs_[i];
}

Cplx PolyTerm::eval(Cplx lambda) const {
  Cplx acc(0, 0);
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) acc = acc * lambda + *it;
  return acc;
}

Cplx PolyTerm::eval_deriv(Cplx lambda) const {
  Cplx acc(0, 0);
  for (int i = static_cast<int>(coeffs_.size()) - 1; i >= 1; --i) {
    acc = acc * lambda + static_cast<double>(i) * coeffs_[i];
  }
  return acc;
}

Mat PolyTerm::matfun(const Mat& s) const {
  Mat acc = Mat::Zero(s.rows(), s.cols());
  for (auto it = coeffs_.rbegin(); it != coeffs_.rend(); ++it) {
    acc = s * acc;
    acc.diagonal().array() += *it;
  }
  return acc;
}

double PolyTerm::radius() const { return kInf; }

std::string PolyTerm::describe() const {
  std::ostringstream os;
  os << "poly(";
  for (size_t i = 0; i < coeffs_.size(); ++i) {
    if (i) os << ",";
    os << coeffs_[i].real();
    if (coeffs_[i].imag() != 0) os << (coeffs_[i].imag() > 0 ? "+" : "") << coeffs_[i].imag() << "i";
  }
  os << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// ExpTerm

ExpTerm::ExpTerm(Cplx a, Cplx b) : a_(a), b_(b) {}

Cplx ExpTerm::taylor_coeff(int i) const {
  // e^a * b^i / i!
  Cplx acc = std::exp(a_);
  for (int j = 1; j <= i; ++j) acc *= b_ / static_cast<double>(j);
  return acc;
}

Cplx ExpTerm::eval(Cplx lambda) const { return std::exp(a_ + b_ * lambda); }

Cplx ExpTerm::eval_deriv(Cplx lambda) const { return b_ * std::exp(a_ + b_ * lambda); }

Mat ExpTerm::matfun(const Mat& s) const { return std::exp(a_) * matrix_exp(b_ * s); }

double ExpTerm::radius() const { return kInf; }

std::string ExpTerm::describe() const {
  std::ostringstream os;
  os << "exp(" << a_.real() << "," << b_.real() << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// SqrtShiftTerm

Cplx sqrt_taylor_coeffs(double sigma, Cplx mu, Cplx gamma, int k) {
  if (k < 0) throw std::invalid_argument("sqrt_taylor_coeffs: k must be >= 0");
  const Cplx base = mu - Cplx(sigma * sigma, 0);
  Cplx alpha = principal_sqrt(base, "sqrt_taylor_coeffs");
  // alpha_{j+1} = alpha_j * gamma * (1/2 - j) / ((j+1) * base)
  for (int j = 0; j < k; ++j) {
    alpha *= gamma * (0.5 - static_cast<double>(j)) /
             (static_cast<double>(j + 1) * base);
  }
  return alpha;
}

SqrtShiftTerm::SqrtShiftTerm(Cplx gamma, Cplx mu, double sigma)
    : gamma_(gamma), mu_(mu), sigma_(sigma) {
  principal_sqrt(mu_ - Cplx(sigma_ * sigma_, 0), "sqrtshift");
}

Cplx SqrtShiftTerm::taylor_coeff(int i) const {
  return sqrt_taylor_coeffs(sigma_, mu_, gamma_, i);
}

Cplx SqrtShiftTerm::eval(Cplx lambda) const {
  return principal_sqrt(gamma_ * lambda + mu_ - Cplx(sigma_ * sigma_, 0),
                        "sqrtshift eval");
}

Cplx SqrtShiftTerm::eval_deriv(Cplx lambda) const {
  return gamma_ / (2.0 * eval(lambda));
}

Mat SqrtShiftTerm::matfun(const Mat& s) const {
  Mat arg = gamma_ * s;
  arg.diagonal().array() += mu_ - Cplx(sigma_ * sigma_, 0);
  return matrix_sqrt(arg);
}

double SqrtShiftTerm::radius() const {
  if (gamma_ == Cplx(0, 0)) return kInf;
  return std::abs(mu_ - Cplx(sigma_ * sigma_, 0)) / std::abs(gamma_);
}

std::string SqrtShiftTerm::describe() const {
  std::ostringstream os;
  os << "sqrtshift(" << gamma_.real() << "," << mu_.real() << "," << sigma_ << ")";
  return os.str();
}

// ---------------------------------------------------------------------------
// NepProblem

NepProblem::NepProblem(int n, std::vector<NepTerm> terms)
    : n_(n), terms_(std::move(terms)) {
  if (n_ < 1) throw std::invalid_argument("NepProblem: n must be >= 1");
  if (terms_.empty()) throw std::invalid_argument("NepProblem: no terms");
  for (const auto& t : terms_) {
    if (t.matrix.rows() != n_ || t.matrix.cols() != n_) {
      throw std::invalid_argument("NepProblem: term matrix dimension mismatch");
    }
    if (!t.fun) throw std::invalid_argument("NepProblem: null scalar term");
  }
  Mat m0 = Mat::Zero(n_, n_);
  for (const auto& t : terms_) m0 += t.fun->taylor_coeff(0) * Mat(t.matrix);
  try {
    m0_lu_ = std::make_shared<LuFactorization>(m0);
  } catch (const std::runtime_error&) {
    throw std::invalid_argument(
        "NepProblem: M(0) is singular (lambda = 0 must not be an eigenvalue)");
  }
}

Mat NepProblem::m_eval(Cplx lambda) const {
  Mat acc = Mat::Zero(n_, n_);
  for (const auto& t : terms_) {
    Cplx f;
    try {
      f = t.fun->eval(lambda);
    } catch (const std::domain_error& e) {
      throw std::domain_error("m_eval, term " + t.fun->describe() + ": " + e.what());
    }
    acc += f * Mat(t.matrix);
  }
  return acc;
}

Mat NepProblem::m_deriv_eval(Cplx lambda) const {
  Mat acc = Mat::Zero(n_, n_);
  for (const auto& t : terms_) acc += t.fun->eval_deriv(lambda) * Mat(t.matrix);
  return acc;
}

Mat NepProblem::m0_solve(const Mat& b) const { return m0_lu_->solve(b); }

Vec NepProblem::m_deriv_apply(int i, const Vec& x) const {
  if (i < 0) throw std::invalid_argument("m_deriv_apply: i must be >= 0");
  Vec acc = Vec::Zero(n_);
  const double fact = factorial(i);
  for (const auto& t : terms_) {
    const Cplx w = fact * t.fun->taylor_coeff(i);
    if (w != Cplx(0, 0)) acc += w * (t.matrix * x);
  }
  return acc;
}

Mat NepProblem::taylor_matrix(int i) const {
  Mat acc = Mat::Zero(n_, n_);
  for (const auto& t : terms_) acc += t.fun->taylor_coeff(i) * Mat(t.matrix);
  return acc;
}

Vec NepProblem::mm_apply(const Mat& y, const Mat& s, const Vec& c) const {
  Vec acc = Vec::Zero(n_);
  for (const auto& t : terms_) {
    Mat fs;
    try {
      fs = t.fun->matfun(s);
    } catch (const std::exception& e) {
      throw std::domain_error("mm_apply, term " + t.fun->describe() + ": " + e.what());
    }
    acc += t.matrix * (y * (fs * c));
  }
  return acc;
}

Vec NepProblem::mm_tail_apply(const Mat& y, const Mat& s, const Vec& c, int n) const {
  if (n < -1) throw std::invalid_argument("mm_tail_apply: n must be >= -1");
  if (n == -1) return mm_apply(y, s, c);

  const int cap = 500;
  const double cnorm = std::max(c.norm(), 1e-300);
  Vec acc = Vec::Zero(n_);
  for (const auto& t : terms_) {
    // tail_j = sum_{i=n+1}^{i_max} f_j^{(i)}(0)/i! * S^i c
    Vec v = c;               // S^i c, incrementally
    Vec tail = Vec::Zero(s.rows());
    int small_streak = 0;
    bool converged = false;
    for (int i = 1; i <= cap; ++i) {
      v = s * v;
      if (i <= n) continue;
      const Cplx coeff = t.fun->taylor_coeff(i);
      tail += coeff * v;
      const double magnitude = std::abs(coeff) * v.norm();
      small_streak = (magnitude < kEps * cnorm) ? small_streak + 1 : 0;
      if (small_streak >= 2) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      std::ostringstream os;
      os << "mm_tail_apply: series for term " << t.fun->describe()
         << " did not converge within " << cap << " terms (||S|| = "
         << s.norm() << ", radius = " << t.fun->radius() << ")";
      throw std::runtime_error(os.str());
    }
    if (tail.norm() > 0) acc += t.matrix * (y * tail);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Built-in problems

namespace {

Mat random_symmetric(int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Mat a(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = Cplx(u(rng), 0);
  return 0.5 * (a + a.transpose());
}

SpMat to_sparse(const Mat& a) {
  SpMat s = a.sparseView(1.0, 1e-300);
  s.makeCompressed();
  return s;
}

SpMat random_sparse(int n, int nnz_per_row, double scale, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> col(0, n - 1);
  std::vector<Eigen::Triplet<Cplx>> trip;
  trip.reserve(static_cast<size_t>(n) * (nnz_per_row + 1));
  for (int i = 0; i < n; ++i) {
    trip.emplace_back(i, i, Cplx(scale * (2.0 + u(rng)), 0));
    for (int k = 0; k < nnz_per_row; ++k) {
      trip.emplace_back(i, col(rng), Cplx(scale * u(rng), 0));
    }
  }
  SpMat s(n, n);
  s.setFromTriplets(trip.begin(), trip.end());
  s.makeCompressed();
  return s;
}

bool m0_nonsingular(int n, const std::vector<NepTerm>& terms) {
  try {
    NepProblem probe(n, terms);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

}  // namespace

NepProblem hadeler_like(int n, Cplx mu, unsigned seed) {
  if (n < 2) throw std::invalid_argument("hadeler_like: n must be >= 2");
  for (unsigned attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 rng(seed + attempt);
    Mat a0 = random_symmetric(n, rng);
    a0 += static_cast<double>(n) * Mat::Identity(n, n);  // well away from singular
    Mat a1 = random_symmetric(n, rng);
    Mat a2 = random_symmetric(n, rng);

    // M(lambda) = -A0 + (lambda+mu)^2 A1 + (e^(lambda+mu) - 1) A2
    std::vector<NepTerm> terms;
    terms.push_back({to_sparse(a0), std::make_shared<PolyTerm>(std::vector<Cplx>{-1.0})});
    terms.push_back({to_sparse(a1),
                     std::make_shared<PolyTerm>(std::vector<Cplx>{mu * mu, 2.0 * mu, 1.0})});
    terms.push_back({to_sparse(a2), std::make_shared<ExpTerm>(mu, 1.0)});
    terms.push_back({to_sparse(a2), std::make_shared<PolyTerm>(std::vector<Cplx>{-1.0})});
    if (m0_nonsingular(n, terms)) return NepProblem(n, std::move(terms));
  }
  throw std::runtime_error("hadeler_like: could not draw a nonsingular M(0)");
}

NepProblem gun_like(int n, Cplx mu, Cplx gamma, unsigned seed) {
  if (n < 2) throw std::invalid_argument("gun_like: n must be >= 2");
  const double sigma2 = 108.8774;
  const Cplx iota(0.0, 1.0);
  for (unsigned attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 rng(seed + attempt);
    SpMat a0 = random_sparse(n, 4, 1.0, rng);
    SpMat a1 = random_sparse(n, 4, 1.0, rng);
    SpMat a2 = random_sparse(n, 4, 1.0, rng);
    SpMat a3 = random_sparse(n, 4, 1.0, rng);

    // M(lambda) = A0 - (gamma*lambda + mu) A1
    //           + i sqrt(gamma*lambda + mu) A2
    //           + i sqrt(gamma*lambda + mu - sigma2^2) A3
    std::vector<NepTerm> terms;
    terms.push_back({a0, std::make_shared<PolyTerm>(std::vector<Cplx>{1.0})});
    terms.push_back({a1, std::make_shared<PolyTerm>(std::vector<Cplx>{-mu, -gamma})});
    terms.push_back({SpMat(iota * a2), std::make_shared<SqrtShiftTerm>(gamma, mu, 0.0)});
    terms.push_back({SpMat(iota * a3), std::make_shared<SqrtShiftTerm>(gamma, mu, sigma2)});
    if (m0_nonsingular(n, terms)) return NepProblem(n, std::move(terms));
  }
  throw std::runtime_error("gun_like: could not draw a nonsingular M(0)");
}

NepProblem delay_like(int n, double tau, unsigned seed) {
  if (n < 2) throw std::invalid_argument("delay_like: n must be >= 2");
  for (unsigned attempt = 0; attempt < 8; ++attempt) {
    std::mt19937_64 rng(seed + attempt);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat a0(n, n), a1(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        a0(i, j) = Cplx(u(rng), 0);
        a1(i, j) = Cplx(u(rng), 0);
      }

    // M(lambda) = -lambda I + A0 + A1 e^(-tau*lambda)
    std::vector<NepTerm> terms;
    terms.push_back({to_sparse(Mat::Identity(n, n)),
                     std::make_shared<PolyTerm>(std::vector<Cplx>{0.0, -1.0})});
    terms.push_back({to_sparse(a0), std::make_shared<PolyTerm>(std::vector<Cplx>{1.0})});
    terms.push_back({to_sparse(a1), std::make_shared<ExpTerm>(0.0, -tau)});
    if (m0_nonsingular(n, terms)) return NepProblem(n, std::move(terms));
  }
  throw std::runtime_error("delay_like: could not draw a nonsingular M(0)");
}

// ---------------------------------------------------------------------------
// Manifest loading

std::shared_ptr<const ScalarTerm> parse_scalar_fun(const std::string& descriptor) {
  const auto open = descriptor.find('(');
  const auto close = descriptor.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw std::invalid_argument("bad scalar function descriptor: " + descriptor);
  }
  const std::string name = descriptor.substr(0, open);
  std::vector<double> args;
  std::string body = descriptor.substr(open + 1, close - open - 1);
  std::stringstream ss(body);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" \t") == std::string::npos) continue;
    args.push_back(std::stod(tok));
  }
  if (name == "poly") {
    std::vector<Cplx> coeffs(args.begin(), args.end());
    return std::make_shared<PolyTerm>(std::move(coeffs));
  }
  if (name == "exp") {
    if (args.size() != 2) throw std::invalid_argument("exp(a,b) needs 2 arguments");
    return std::make_shared<ExpTerm>(args[0], args[1]);
  }
  if (name == "sqrtshift") {
    if (args.size() != 3) throw std::invalid_argument("sqrtshift(g,mu,sigma) needs 3 arguments");
    return std::make_shared<SqrtShiftTerm>(args[0], args[1], args[2]);
  }
  throw std::invalid_argument("unknown scalar function: " + name);
}

SpMat load_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix file: " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("%%MatrixMarket", 0) != 0) {
    throw std::runtime_error("not a MatrixMarket file: " + path);
  }
  std::stringstream header(line);
  std::string tag, object, format, field, symmetry;
  header >> tag >> object >> format >> field >> symmetry;
  if (object != "matrix" || format != "coordinate") {
    throw std::runtime_error("only coordinate matrices supported: " + path);
  }
  const bool complex_field = (field == "complex");
  const bool pattern = (field == "pattern");
  const bool symmetric = (symmetry == "symmetric");

  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::stringstream dims(line);
  Eigen::Index rows = 0, cols = 0;
  long long nnz = 0;
  dims >> rows >> cols >> nnz;

  std::vector<Eigen::Triplet<Cplx>> trip;
  trip.reserve(static_cast<size_t>(nnz) * (symmetric ? 2 : 1));
  for (long long k = 0; k < nnz; ++k) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated matrix file: " + path);
    std::stringstream entry(line);
    Eigen::Index i = 0, j = 0;
    double re = 1.0, im = 0.0;
    entry >> i >> j;
    if (!pattern) entry >> re;
    if (complex_field) entry >> im;
    trip.emplace_back(i - 1, j - 1, Cplx(re, im));
    if (symmetric && i != j) trip.emplace_back(j - 1, i - 1, Cplx(re, im));
  }
  SpMat s(rows, cols);
  s.setFromTriplets(trip.begin(), trip.end());
  s.makeCompressed();
  return s;
}

NepProblem load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  nlohmann::json doc = nlohmann::json::parse(in);
  const int n = doc.at("n").get<int>();
  std::string dir = ".";
  const auto slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash);

  std::vector<NepTerm> terms;
  for (const auto& entry : doc.at("terms")) {
    std::string mpath = entry.at("matrix").get<std::string>();
    if (!mpath.empty() && mpath[0] != '/') mpath = dir + "/" + mpath;
    NepTerm t;
    t.matrix = load_matrix_market(mpath);
    t.fun = parse_scalar_fun(entry.at("fun").get<std::string>());
    terms.push_back(std::move(t));
  }
  return NepProblem(n, std::move(terms));
}

}  // namespace infarn
