#pragma once

#include "siv/integrator.hpp"

namespace siv {

struct SweepConfig {
  int max_iters = 50;
  double relax = 0.5;   // damping of the control update
  double tol = 1e-3;    // relative L2 distance to the projected regular control
  std::array<double, 2> u1_bounds{0.0, 1.0};
  std::array<double, 2> u2_bounds{0.0, 1.0};

  void validate() const {
    if (max_iters < 1) throw ValidationError("sweep.max_iters must be >= 1");
    if (!(relax > 0.0 && relax <= 1.0)) throw ValidationError("sweep.relax must lie in (0,1]");
    if (!(tol > 0.0)) throw ValidationError("sweep.tol must be > 0");
    auto check = [](const std::array<double, 2>& b, const char* name) {
      if (!(b[0] <= b[1]) || b[0] < 0.0 || b[1] > 1.0)
        throw ValidationError(std::string(name) + " bounds must be ordered within [0,1]");
    };
    check(u1_bounds, "u1");
    check(u2_bounds, "u2");
  }
};

struct IterRecord {
  int iter = 0;
  double objective = 0.0;
  double std_error = 0.0;
  double control_change = 0.0;  // relative distance to the projected regular control
};

struct ControlSolution {
  std::vector<ControlField> control;  // one field per step
  double objective = 0.0;
  double std_error = 0.0;
  int iterations = 0;
  bool converged = false;
  double pg_residual = 0.0;
  std::vector<IterRecord> history;
};

/// Pointwise Hamiltonian H = f.p + sigma*.q + L_H. The control quadratic in
/// L_H carries tau u^2 (the Lyapunov-equation convention) rather than the
/// objective's tau u^2 / 2, so the regular control below is exactly the
/// stationary point of H in u. sigma* is the per-equation net noise
/// coefficient pairing with (q1,q2,q3).
inline Field hamiltonian(const FieldState& st, const ControlField& u, const AdjointState& adj,
                         const CostParams& c, const SivParams& pr) {
  const DriftFields f = drift(st, u, pr);
  Field h(st.s.grid, 0.0);
  const double one_e = 1.0 - pr.e;
  for (int k = 0; k < st.s.size(); ++k) {
    const double sig1 = -pr.sigma * st.s[k] * st.i[k];
    const double sig2 = pr.sigma * st.s[k] * st.i[k] + one_e * pr.sigma * st.v[k] * st.i[k];
    const double sig3 = -one_e * pr.sigma * st.v[k] * st.i[k];
    const double L = c.a1 * st.s[k] + c.a2 * st.i[k] + c.tau1 * u.u1[k] * u.u1[k] +
                     c.tau2 * u.u2[k] * u.u2[k];
    h[k] = f.f1[k] * adj.p1[k] + f.f2[k] * adj.p2[k] + f.f3[k] * adj.p3[k] +
           sig1 * adj.q1[k] + sig2 * adj.q2[k] + sig3 * adj.q3[k] + L;
  }
  return h;
}

/// Unclamped minimizers of the Hamiltonian:
///   u1 = (p1 - p3) S / (2 tau1)
///   u2 = (p2 - p3) m I / (2 tau2 (1 + eta I))
inline ControlField regular_control(const FieldState& st, const AdjointState& adj,
                                    const CostParams& c, const SivParams& pr) {
  ControlField u(st.s.grid);
  for (int k = 0; k < st.s.size(); ++k) {
    u.u1[k] = (adj.p1[k] - adj.p3[k]) * st.s[k] / (2.0 * c.tau1);
    u.u2[k] = (adj.p2[k] - adj.p3[k]) * pr.m * st.i[k] /
              (2.0 * c.tau2 * (1.0 + pr.eta * st.i[k]));
  }
  return u;
}

inline ControlField project_control(const ControlField& raw, const std::array<double, 2>& b1,
                                    const std::array<double, 2>& b2) {
  ControlField u = raw;
  for (double& x : u.u1.v) x = std::clamp(x, b1[0], b1[1]);
  for (double& x : u.u2.v) x = std::clamp(x, b2[0], b2[1]);
  return u;
}

struct ObjectiveEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> per_path;  // kept for paired comparisons
};

/// J for one recorded path under a per-step control sequence:
/// sum_k running_cost(state_k, u_k) dt + terminal_weight * terminal_cost.
inline double path_objective(const TrajectoryRecord& traj, const std::vector<ControlField>& u,
                             const CostParams& cost) {
  const int n = traj.n_steps();
  const double dt = traj.times[1] - traj.times[0];
  double j = 0.0;
  for (int k = 0; k < n; ++k)
    j += running_cost(traj.states[static_cast<size_t>(k)], u[static_cast<size_t>(k)], cost) * dt;
  j += cost.terminal_weight * terminal_cost(traj.states.back());
  return j;
}

/// Monte Carlo mean of the objective over an ensemble, with its standard error.
inline ObjectiveEstimate objective(const std::vector<TrajectoryRecord>& ensemble,
                                   const std::vector<ControlField>& u, const CostParams& cost) {
  if (ensemble.empty()) throw ValidationError("objective needs a nonempty ensemble");
  ObjectiveEstimate est;
  est.per_path.reserve(ensemble.size());
  for (const auto& traj : ensemble) est.per_path.push_back(path_objective(traj, u, cost));
  double acc = 0.0;
  for (double j : est.per_path) acc += j;
  est.mean = acc / static_cast<double>(est.per_path.size());
  if (est.per_path.size() > 1) {
    double ss = 0.0;
    for (double j : est.per_path) ss += (j - est.mean) * (j - est.mean);
    est.std_error = std::sqrt(ss / (static_cast<double>(est.per_path.size()) - 1.0) /
                              static_cast<double>(est.per_path.size()));
  }
  return est;
}

namespace detail {

inline double control_distance(const std::vector<ControlField>& a,
                               const std::vector<ControlField>& b) {
  double num = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    for (int c = 0; c < a[k].u1.size(); ++c) {
      const double d1 = a[k].u1[c] - b[k].u1[c];
      const double d2 = a[k].u2[c] - b[k].u2[c];
      num += d1 * d1 + d2 * d2;
    }
  }
  return std::sqrt(num);
}

inline double control_norm(const std::vector<ControlField>& a) {
  double num = 0.0;
  for (const auto& u : a)
    for (int c = 0; c < u.u1.size(); ++c) num += u.u1[c] * u.u1[c] + u.u2[c] * u.u2[c];
  return std::sqrt(num);
}

}  // namespace detail

/// Simulates the ensemble under a fixed per-step control sequence with common
/// random numbers: path j always uses seed derive_seed(master, j), so noise
/// and regime paths are identical across sweep iterations.
inline std::vector<TrajectoryRecord> simulate_ensemble(
    const FieldState& initial, const std::vector<ControlField>& u,
    const std::vector<SivParams>& regimes, const RegimeChain& chain, const StepConfig& cfg,
    int n_paths, int n_threads, int initial_regime = 0) {
  std::vector<TrajectoryRecord> out(static_cast<size_t>(n_paths));
  const double dt = cfg.dt;
  ControlPolicy lookup = [&u, dt](const FieldState&, double t, int) {
    const size_t k = std::min(u.size() - 1, static_cast<size_t>(std::llround(t / dt)));
    return u[k];
  };
  parallel_for(n_paths, n_threads, [&](int j) {
    StepConfig pc = cfg;
    pc.rng_seed = derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(j));
    out[static_cast<size_t>(j)] =
        simulate_path(initial, lookup, regimes, chain, pc, initial_regime);
  });
  return out;
}

/// Forward-backward sweep with projected controls and damped updates.
/// Convergence is declared when the relative L2 distance between the current
/// control and the projected ensemble-mean regular control drops below tol;
/// that same quantity is reported as the projected-gradient residual.
inline ControlSolution forward_backward_sweep(const FieldState& initial,
                                              const std::vector<SivParams>& regimes,
                                              const RegimeChain& chain, const CostParams& cost,
                                              const StepConfig& step_cfg,
                                              const SweepConfig& sweep_cfg, int n_paths,
                                              int n_threads = 1, int initial_regime = 0) {
  sweep_cfg.validate();
  cost.validate();
  const SpatialGrid& g = initial.s.grid;
  const int n = step_cfg.n_steps();

  ControlSolution sol;
  sol.control.assign(static_cast<size_t>(n), ControlField(g));

  for (int it = 0; it < sweep_cfg.max_iters; ++it) {
    auto ensemble =
        simulate_ensemble(initial, sol.control, regimes, chain, step_cfg, n_paths, n_threads,
                          initial_regime);
    const ObjectiveEstimate est = objective(ensemble, sol.control, cost);

    // ensemble-mean regular control per step (ordered reduction over paths)
    std::vector<ControlField> target(static_cast<size_t>(n), ControlField(g));
    std::vector<std::vector<AdjointState>> adjoints(ensemble.size());
    parallel_for(static_cast<int>(ensemble.size()), n_threads, [&](int j) {
      adjoints[static_cast<size_t>(j)] =
          adjoint_backward_sweep(ensemble[static_cast<size_t>(j)], sol.control, regimes, cost);
    });
    for (size_t j = 0; j < ensemble.size(); ++j) {
      const auto& traj = ensemble[j];
      for (int k = 0; k < n; ++k) {
        const ControlField raw = regular_control(
            traj.states[static_cast<size_t>(k)], adjoints[j][static_cast<size_t>(k)], cost,
            regimes[static_cast<size_t>(traj.regimes[static_cast<size_t>(k)])]);
        for (int c = 0; c < g.n_cells; ++c) {
          target[static_cast<size_t>(k)].u1[c] += raw.u1[c];
          target[static_cast<size_t>(k)].u2[c] += raw.u2[c];
        }
      }
    }
    const double inv_m = 1.0 / static_cast<double>(ensemble.size());
    for (auto& tf : target) {
      for (double& x : tf.u1.v) x *= inv_m;
      for (double& x : tf.u2.v) x *= inv_m;
      tf = project_control(tf, sweep_cfg.u1_bounds, sweep_cfg.u2_bounds);
    }

    const double dist = detail::control_distance(sol.control, target);
    const double norm = detail::control_norm(sol.control);
    const double rel_change = dist / std::max(norm, 1e-12);

    sol.history.push_back({it + 1, est.mean, est.std_error, rel_change});
    sol.objective = est.mean;
    sol.std_error = est.std_error;
    sol.iterations = it + 1;
    sol.pg_residual = rel_change;

    if (rel_change <= sweep_cfg.tol) {
      sol.converged = true;
      break;
    }
    for (int k = 0; k < n; ++k) {
      for (int c = 0; c < g.n_cells; ++c) {
        auto& cur = sol.control[static_cast<size_t>(k)];
        const auto& tgt = target[static_cast<size_t>(k)];
        cur.u1[c] = (1.0 - sweep_cfg.relax) * cur.u1[c] + sweep_cfg.relax * tgt.u1[c];
        cur.u2[c] = (1.0 - sweep_cfg.relax) * cur.u2[c] + sweep_cfg.relax * tgt.u2[c];
      }
    }
  }
  if (!sol.converged) {
    // report J of the control actually returned, not of the pre-update iterate
    auto ensemble = simulate_ensemble(initial, sol.control, regimes, chain, step_cfg, n_paths,
                                      n_threads, initial_regime);
    const ObjectiveEstimate est = objective(ensemble, sol.control, cost);
    sol.objective = est.mean;
    sol.std_error = est.std_error;
  }
  return sol;
}

}  // namespace siv
