#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <limits>
#include <ostream>
#include <vector>

#include "siv/common.hpp"

namespace siv {

/// Conservative, irreducible CTMC generator on {1,...,N} (0-based indices in
/// code). Rates are per year.
struct RegimeChain {
  Eigen::MatrixXd generator;

  RegimeChain() : generator(Eigen::MatrixXd::Zero(1, 1)) {}
  explicit RegimeChain(Eigen::MatrixXd q) : generator(std::move(q)) { validate(); }

  int n_states() const { return static_cast<int>(generator.rows()); }

  void validate() const {
    const int n = n_states();
    if (n < 1 || generator.cols() != n)
      throw ValidationError("generator must be a square matrix with at least one state");
    const double scale = std::max(1.0, generator.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) {
      double row_sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i != j && generator(i, j) < 0.0)
          throw ValidationError("generator has a negative off-diagonal rate at (" +
                                std::to_string(i + 1) + "," + std::to_string(j + 1) + ")");
        row_sum += generator(i, j);
      }
      if (std::abs(row_sum) > 1e-9 * scale)
        throw ValidationError("generator row " + std::to_string(i + 1) +
                              " does not sum to zero (non-conservative)");
    }
    if (!irreducible())
      throw ValidationError("generator is reducible: positive-rate digraph is not strongly connected");
  }

  /// Strong connectivity of the positive-rate digraph: every state reachable
  /// from state 0 in both the graph and its transpose.
  bool irreducible() const {
    const int n = n_states();
    if (n == 1) return true;
    auto reach = [&](bool transpose) {
      std::vector<char> seen(static_cast<size_t>(n), 0);
      std::vector<int> stack{0};
      seen[0] = 1;
      while (!stack.empty()) {
        const int i = stack.back();
        stack.pop_back();
        for (int j = 0; j < n; ++j) {
          const double rate = transpose ? generator(j, i) : generator(i, j);
          if (i != j && rate > 0.0 && !seen[j]) {
            seen[j] = 1;
            stack.push_back(j);
          }
        }
      }
      return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach(false) && reach(true);
  }
};

/// Spectral quantities controlling p-th moment contraction:
/// q_p = Q + (p/2) diag(rho), eta_p the negated largest real part over the
/// spectrum of q_p, xi_p the positive
/// eigenvector of the dominant eigenvalue -eta_p.
struct SpectralReport {
  double p_exponent = 0.0;
  Eigen::VectorXd rho;
  Eigen::MatrixXd q_p;
  double eta_p = 0.0;
  Eigen::VectorXd xi_p;
  double p0 = 1.0;
  double pi_rho_sum = 0.0;       // sum_i pi_i rho_i
  bool mixing_condition = false; // pi_rho_sum < 0
  bool eta_positive = false;
};

struct RegimePath {
  std::vector<double> jump_times;  // strictly increasing, < horizon
  std::vector<int> states;         // one per segment, states[k] != states[k+1]
  double horizon = 0.0;

  int n_segments() const { return static_cast<int>(states.size()); }

  int state_at(double t) const {
    // segment k covers [jump_times[k-1], jump_times[k]) with jump_times[-1]=0
    int k = static_cast<int>(std::upper_bound(jump_times.begin(), jump_times.end(), t) -
                             jump_times.begin());
    return states[static_cast<size_t>(std::min(k, n_segments() - 1))];
  }

  /// Fraction of [0, horizon] spent in each state.
  std::vector<double> occupation_fractions(int n_states) const {
    std::vector<double> occ(static_cast<size_t>(n_states), 0.0);
    double prev = 0.0;
    for (size_t k = 0; k < jump_times.size(); ++k) {
      occ[static_cast<size_t>(states[k])] += jump_times[k] - prev;
      prev = jump_times[k];
    }
    occ[static_cast<size_t>(states.back())] += horizon - prev;
    for (double& x : occ) x /= horizon;
    return occ;
  }
};

/// pi with pi Q = 0, sum pi = 1, pi > 0. Solved as the least-squares solution
/// of [Q^T; 1^T] pi = [0; 1]; residual is refined once if needed.
inline Eigen::VectorXd stationary_distribution(const RegimeChain& chain) {
  const int n = chain.n_states();
  if (n == 1) return Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd a(n + 1, n);
  a.topRows(n) = chain.generator.transpose();
  a.bottomRows(1).setOnes();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b(n) = 1.0;
  Eigen::VectorXd pi = a.colPivHouseholderQr().solve(b);
  // one step of iterative refinement sharpens ||pi Q||_inf toward roundoff
  Eigen::VectorXd r = b - a * pi;
  pi += a.colPivHouseholderQr().solve(r);
  const double mass = pi.sum();
  if (!(mass > 0.0)) throw NumericError("stationary distribution solve failed");
  pi /= mass;
  if (pi.minCoeff() <= 0.0)
    throw NumericError("stationary distribution has a non-positive entry (chain effectively reducible)");
  return pi;
}

/// p0 = 1 ^ min over {i : rho_i > 0} of (-2 q_ii / rho_i); empty min is +inf.
inline double p0_threshold(const RegimeChain& chain, const Eigen::VectorXd& rho) {
  if (rho.size() != chain.n_states())
    throw ValidationError("rho length does not match number of regimes");
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < rho.size(); ++i)
    if (rho(i) > 0.0) m = std::min(m, -2.0 * chain.generator(i, i) / rho(i));
  return std::min(1.0, m);
}

inline SpectralReport spectral_report(const RegimeChain& chain, const Eigen::VectorXd& rho,
                                      double p) {
  if (!(p > 0.0)) throw ValidationError("moment exponent p must be > 0");
  if (rho.size() != chain.n_states())
    throw ValidationError("rho length does not match number of regimes");
  SpectralReport rep;
  rep.p_exponent = p;
  rep.rho = rho;
  rep.q_p = chain.generator + 0.5 * p * rho.asDiagonal().toDenseMatrix();
  rep.p0 = p0_threshold(chain, rho);

  const int n = chain.n_states();
  if (n == 1) {
    rep.eta_p = -rep.q_p(0, 0);
    rep.xi_p = Eigen::VectorXd::Ones(1);
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(rep.q_p);
    if (es.info() != Eigen::Success)
      throw NumericError("eigen decomposition of q_p did not converge (QR iteration limit " +
                         std::to_string(30 * n) + ")");
    int top = 0;
    for (int k = 1; k < n; ++k)
      if (es.eigenvalues()(k).real() > es.eigenvalues()(top).real()) top = k;
    rep.eta_p = -es.eigenvalues()(top).real();

    // q_p is Metzler, so the dominant eigenpair is real with a positive
    // eigenvector (Perron-Frobenius); normalize by the largest-magnitude entry.
    Eigen::VectorXcd xi = es.eigenvectors().col(top);
    int big = 0;
    for (int k = 1; k < n; ++k)
      if (std::abs(xi(k)) > std::abs(xi(big))) big = k;
    xi /= xi(big);
    rep.xi_p = xi.real();
    if (xi.imag().cwiseAbs().maxCoeff() > 1e-10)
      throw NumericError("dominant eigenvector of q_p is not real");
    if (rep.xi_p.minCoeff() <= 0.0)
      throw NumericError("dominant eigenvector of q_p is not strictly positive");
    const double resid =
        (rep.q_p * rep.xi_p + rep.eta_p * rep.xi_p).cwiseAbs().maxCoeff() / rep.xi_p.norm();
    if (resid > 1e-10)
      throw NumericError("eigenpair residual " + fmt17(resid) + " exceeds 1e-10");
  }

  const Eigen::VectorXd pi = stationary_distribution(chain);
  rep.pi_rho_sum = pi.dot(rho);
  rep.mixing_condition = rep.pi_rho_sum < 0.0;
  rep.eta_positive = rep.eta_p > 0.0;
  return rep;
}

/// Holding time in state i ~ Exp(-q_ii); next state j with probability
/// q_ij / (-q_ii). A zero exit rate ends the path (absorbing state).
inline RegimePath sample_path(const RegimeChain& chain, int initial, double horizon,
                              std::uint64_t rng_seed) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be > 0");
  if (initial < 0 || initial >= chain.n_states())
    throw ValidationError("initial regime index out of range");
  RegimePath path;
  path.horizon = horizon;
  path.states.push_back(initial);
  Rng rng(rng_seed);
  double t = 0.0;
  int state = initial;
  while (true) {
    const double exit_rate = -chain.generator(state, state);
    if (exit_rate <= 0.0) break;
    t += rng.exponential(exit_rate);
    if (t >= horizon) break;
    const double u = rng.uniform() * exit_rate;
    double acc = 0.0;
    int next = -1;
    for (int j = 0; j < chain.n_states(); ++j) {
      if (j == state) continue;
      acc += chain.generator(state, j);
      if (u < acc) {
        next = j;
        break;
      }
    }
    if (next < 0) {  // guard against roundoff at the CDF edge
      for (int j = chain.n_states() - 1; j >= 0; --j)
        if (j != state && chain.generator(state, j) > 0.0) {
          next = j;
          break;
        }
    }
    path.jump_times.push_back(t);
    path.states.push_back(next);
    state = next;
  }
  return path;
}

inline void write_regime_path_csv(std::ostream& os, const RegimePath& path) {
  os << "t_start,t_end,state\n";
  double prev = 0.0;
  for (size_t k = 0; k < path.states.size(); ++k) {
    const double end = (k < path.jump_times.size()) ? path.jump_times[k] : path.horizon;
    os << fmt17(prev) << ',' << fmt17(end) << ',' << (path.states[k] + 1) << '\n';
    prev = end;
  }
}

}  // namespace siv
