#include <complex>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "infarn/nep.hpp"
#include "infarn/oracle.hpp"
#include "infarn/restart.hpp"

namespace {

using infarn::Cplx;
using infarn::NepProblem;
using infarn::Vec;

struct ProblemConfig {
  std::string problem;  // hadeler | gun | delay, or empty with manifest
  std::string manifest;
  int n = 8;
  double mu_re = -1.0, mu_im = 0.0;
  double tau = 1.0;
  double gamma = 50000.0;
  unsigned seed = 1;
};

struct SolverConfig {
  int k_max = 20;
  int p = 6;
  double lock_tol = 1000.0 * 2.220446049250313e-16;
  int max_outer = 30;
  int stall_limit = 10;
  std::string selector = "largest";
  double target_re = 0.0, target_im = 0.0;
  double lambda0_re = 1.0, lambda0_im = 0.0;
};

void add_problem_flags(CLI::App* cmd, ProblemConfig& pc) {
  cmd->add_option("--problem", pc.problem, "Built-in problem: hadeler, gun, delay")
      ->check(CLI::IsMember({"hadeler", "gun", "delay"}));
  cmd->add_option("--manifest", pc.manifest,
                  "JSON manifest describing the problem (overrides --problem)");
  cmd->add_option("--n", pc.n, "Problem size for built-ins");
  cmd->add_option("--mu", pc.mu_re, "Shift parameter (real part)");
  cmd->add_option("--mu-imag", pc.mu_im, "Shift parameter (imaginary part)");
  cmd->add_option("--tau", pc.tau, "Delay parameter (delay problem)");
  cmd->add_option("--gamma", pc.gamma, "Scaling parameter (gun problem)");
  cmd->add_option("--seed", pc.seed,
                  "Seed for the built-in matrix generators "
                  "(INFARN_SEED overrides)");
}

NepProblem make_problem(const ProblemConfig& pc) {
  unsigned seed = pc.seed;
  if (const char* env = std::getenv("INFARN_SEED")) {
    seed = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
  }
  if (!pc.manifest.empty()) return infarn::load_manifest(pc.manifest);
  const Cplx mu(pc.mu_re, pc.mu_im);
  if (pc.problem == "hadeler") return infarn::hadeler_like(pc.n, mu, seed);
  if (pc.problem == "gun") return infarn::gun_like(pc.n, mu, pc.gamma, seed);
  if (pc.problem == "delay") return infarn::delay_like(pc.n, pc.tau, seed);
  throw CLI::ValidationError("--problem or --manifest is required");
}

infarn::RestartOptions make_options(const SolverConfig& sc) {
  infarn::RestartOptions opts;
  opts.k_max = sc.k_max;
  opts.p = sc.p;
  opts.lock_tol = sc.lock_tol;
  opts.max_outer = sc.max_outer;
  opts.stall_limit = sc.stall_limit;
  opts.selector = sc.selector == "nearest" ? infarn::Selector::NearestTarget
                                           : infarn::Selector::LargestTheta;
  opts.target = Cplx(sc.target_re, sc.target_im);
  return opts;
}

Vec start_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed + 7919);
  std::normal_distribution<double> dist;
  Vec x0(n);
  for (int i = 0; i < n; ++i) x0(i) = Cplx(dist(rng), dist(rng));
  return x0 / x0.norm();
}

void write_eigenvalues(const std::string& path, const infarn::InvariantPair& pair) {
  nlohmann::json arr = nlohmann::json::array();
  for (size_t i = 0; i < pair.eigenvalues.size(); ++i) {
    arr.push_back({{"lambda_re", pair.eigenvalues[i].real()},
                   {"lambda_im", pair.eigenvalues[i].imag()},
                   {"residual", pair.per_eig_residuals[i]}});
  }
  std::ofstream out(path);
  out << arr.dump(2) << "\n";
}

void write_convergence(const std::string& path, const infarn::ConvergenceRecord& rec) {
  std::ofstream out(path);
  out << "outer_iter,inner_iter,ritz_index,residual,p_l,gamma\n";
  for (const auto& o : rec.outer) {
    for (size_t j = 0; j < o.ritz_residuals.size(); ++j) {
      out << o.iteration << ',' << o.basis_columns << ',' << j << ','
          << o.ritz_residuals[j] << ',' << o.p_l << ',' << o.gamma << "\n";
    }
  }
}

// Bijective nearest-neighbor matching; returns the max distance, or infinity
// when some computed eigenvalue finds no unused oracle partner.
double match_against_oracle(const std::vector<Cplx>& computed,
                            const std::vector<Cplx>& oracle) {
  std::vector<bool> used(oracle.size(), false);
  double worst = 0.0;
  for (const Cplx& lam : computed) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < oracle.size(); ++i) {
      if (used[i]) continue;
      const double d = std::abs(lam - oracle[i]);
      if (d < best_d) {
        best = static_cast<int>(i);
        best_d = d;
      }
    }
    if (best < 0) return std::numeric_limits<double>::infinity();
    used[best] = true;
    worst = std::max(worst, best_d);
  }
  return worst;
}

int run_verify(const NepProblem& problem, const std::vector<Cplx>& computed,
               int degree, double radius) {
  infarn::OracleResult oracle = infarn::taylor_companion_eigs(problem, degree, radius);
  std::vector<Cplx> in_radius;
  for (const Cplx& lam : computed) {
    if (std::abs(lam) <= radius) in_radius.push_back(lam);
  }
  const double worst = match_against_oracle(in_radius, oracle.eigenvalues);
  std::cout << "verification: " << in_radius.size()
            << " eigenvalue(s) inside radius " << radius << ", oracle found "
            << oracle.eigenvalues.size() << ", max mismatch " << worst << "\n";
  if (!(worst <= 1e-8)) {
    std::cout << "verification FAILED (threshold 1e-8)\n";
    return 1;
  }
  std::cout << "verification passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Restarted infinite Arnoldi solver for nonlinear eigenvalue problems"};
  app.require_subcommand(1);

  ProblemConfig pc;
  SolverConfig sc;
  std::string eig_path = "eigenvalues.json";
  std::string conv_path = "convergence.csv";
  bool verify_after = false;
  int oracle_degree = 30;
  double oracle_radius = 1.0;

  CLI::App* solve = app.add_subcommand("solve", "Run the restarted solver");
  add_problem_flags(solve, pc);
  solve->add_option("--kmax", sc.k_max, "Inner Arnoldi length");
  solve->add_option("--p", sc.p, "Number of eigenvalues to lock");
  solve->add_option("--lock-tol", sc.lock_tol, "Locking residual tolerance");
  solve->add_option("--max-outer", sc.max_outer, "Outer iteration cap");
  solve->add_option("--stall-limit", sc.stall_limit,
                    "Outer iterations without progress before giving up");
  solve->add_option("--selector", sc.selector, "Ritz selector: largest or nearest")
      ->check(CLI::IsMember({"largest", "nearest"}));
  solve->add_option("--target", sc.target_re, "Target (real part) for --selector nearest");
  solve->add_option("--target-imag", sc.target_im, "Target (imaginary part)");
  solve->add_option("--shift", sc.lambda0_re, "Start exponent lambda0 (real part)");
  solve->add_option("--shift-imag", sc.lambda0_im, "Start exponent lambda0 (imaginary part)");
  solve->add_option("--eigenvalues-out", eig_path, "Output JSON path");
  solve->add_option("--convergence-out", conv_path, "Output CSV path");
  solve->add_flag("--verify", verify_after, "Cross-check locked eigenvalues");
  solve->add_option("--oracle-degree", oracle_degree, "Companion degree for --verify");
  solve->add_option("--oracle-radius", oracle_radius, "Trust radius for --verify");

  ProblemConfig vpc;
  int v_degree = 30;
  double v_radius = 1.0;
  CLI::App* verify = app.add_subcommand("verify", "Run the companion oracle alone");
  add_problem_flags(verify, vpc);
  verify->add_option("--degree", v_degree, "Companion linearization degree");
  verify->add_option("--radius", v_radius, "Trust radius");

  CLI::App* list = app.add_subcommand("list-problems", "List built-in problems");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      std::cout << "hadeler  polynomial-plus-exponential test problem "
                   "(--n, --mu, --seed)\n"
                << "gun      square-root nonlinearity test problem "
                   "(--n, --mu, --gamma, --seed)\n"
                << "delay    delay characteristic-root problem "
                   "(--n, --tau, --seed)\n";
      return 0;
    }

    if (verify->parsed()) {
      NepProblem problem = make_problem(vpc);
      infarn::OracleResult r = infarn::taylor_companion_eigs(problem, v_degree, v_radius);
      std::cout << "oracle eigenvalues inside radius " << v_radius << ":\n";
      for (size_t i = 0; i < r.eigenvalues.size(); ++i) {
        std::cout << "  " << r.eigenvalues[i].real() << std::showpos
                  << r.eigenvalues[i].imag() << "i" << std::noshowpos
                  << "   residual " << r.residuals[i] << "\n";
      }
      return 0;
    }

    NepProblem problem = make_problem(pc);
    infarn::RestartOptions opts = make_options(sc);
    unsigned seed = pc.seed;
    if (const char* env = std::getenv("INFARN_SEED")) {
      seed = static_cast<unsigned>(std::strtoul(env, nullptr, 10));
    }
    const Vec x0 = start_vector(problem.size(), seed);
    const Cplx lambda0(sc.lambda0_re, sc.lambda0_im);

    infarn::SolveResult res = infarn_restart(problem, x0, lambda0, opts);

    write_eigenvalues(eig_path, res.pair);
    write_convergence(conv_path, res.record);

    std::cout << "locked " << res.pair.eigenvalues.size() << " eigenvalue(s) in "
              << res.record.outer.size() << " outer iteration(s), gamma "
              << res.pair.residual_gamma << "\n";
    for (size_t i = 0; i < res.pair.eigenvalues.size(); ++i) {
      std::cout << "  lambda = " << res.pair.eigenvalues[i].real() << std::showpos
                << res.pair.eigenvalues[i].imag() << "i" << std::noshowpos
                << "   residual " << res.pair.per_eig_residuals[i] << "\n";
    }

    int status = 0;
    if (res.record.status != infarn::SolveStatus::Converged) {
      std::cout << (res.record.status == infarn::SolveStatus::Stalled
                        ? "solver stalled"
                        : "outer iteration cap reached")
                << "; partial results written\n";
      status = 2;
    }
    if (verify_after) {
      status = std::max(status, run_verify(problem, res.pair.eigenvalues,
                                           oracle_degree, oracle_radius));
    }
    return status;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
