#pragma once

#include <array>
#include <functional>
#include <ostream>

#include "siv/model.hpp"
#include "siv/regime.hpp"

namespace siv {

/// Explicit stepping configuration. The diffusion stability guard
/// dt * max(D) / dx^2 <= 1/2 is checked against the grid and parameter sets.
struct StepConfig {
  double dt = 0.01;
  double t_final = 10.0;
  bool clamp_negative = true;
  std::uint64_t rng_seed = 42;
  bool shared_zeta = false;  // reuse one draw for B1..B4 (scheme compatibility mode)

  void validate(const SpatialGrid& grid, const std::vector<SivParams>& regimes) const {
    if (!(dt > 0.0)) throw ValidationError("stepping.dt must be > 0");
    if (!(t_final > 0.0)) throw ValidationError("stepping.t_final must be > 0");
    if (dt > t_final) throw ValidationError("stepping.dt must not exceed stepping.t_final");
    double max_d = 0.0;
    for (const auto& pr : regimes) max_d = std::max(max_d, pr.max_diffusivity());
    const double dx = grid.dx();
    const double ratio = dt * max_d / (dx * dx);
    if (grid.n_cells > 1 && ratio > 0.5)
      throw ValidationError("diffusion stability violated: dt*D/dx^2 = " + fmt17(ratio) +
                            " exceeds the bound 0.5");
  }

  int n_steps() const { return static_cast<int>(std::llround(t_final / dt)); }
};

/// Costates (p1,p2,p3) and martingale fields (q1,q2,q3). q defaults to zero,
/// which makes the backward sweep pathwise deterministic; the q terms in the
/// stepping formulas activate when a caller supplies nonzero q.
struct AdjointState {
  Field p1, p2, p3, q1, q2, q3;

  AdjointState() = default;
  explicit AdjointState(const SpatialGrid& g, double a1 = 0.0, double a2 = 0.0, double a3 = 0.0)
      : p1(g, a1), p2(g, a2), p3(g, a3), q1(g, 0.0), q2(g, 0.0), q3(g, 0.0) {}

  bool finite() const {
    return p1.finite() && p2.finite() && p3.finite() && q1.finite() && q2.finite() && q3.finite();
  }
};

/// Gaussian draws for one step: one vector per Brownian motion B1..B4, one
/// entry per cell. Draws are independent across cells (spatially white noise).
struct StepDraws {
  std::array<std::vector<double>, 4> zeta;

  static StepDraws generate(Rng& rng, int n_cells, bool shared) {
    StepDraws d;
    for (auto& z : d.zeta) z.resize(static_cast<size_t>(n_cells));
    for (int k = 0; k < n_cells; ++k) {
      if (shared) {
        const double z = rng.normal();
        for (auto& zv : d.zeta) zv[static_cast<size_t>(k)] = z;
      } else {
        for (auto& zv : d.zeta) zv[static_cast<size_t>(k)] = rng.normal();
      }
    }
    return d;
  }

  static StepDraws constant(int n_cells, double z1, double z2, double z3, double z4) {
    StepDraws d;
    d.zeta[0].assign(static_cast<size_t>(n_cells), z1);
    d.zeta[1].assign(static_cast<size_t>(n_cells), z2);
    d.zeta[2].assign(static_cast<size_t>(n_cells), z3);
    d.zeta[3].assign(static_cast<size_t>(n_cells), z4);
    return d;
  }
};

struct TrajectoryRecord {
  std::vector<double> times;          // n_steps + 1
  std::vector<FieldState> states;     // n_steps + 1
  std::vector<int> regimes;           // n_steps, regime frozen per interval (left endpoint)
  std::vector<StepDraws> draws;       // n_steps, retained for adjoint replay and IRL
  RegimePath regime_path;
  long clamp_count = 0;
  long cell_steps = 0;  // 3 * n_cells * n_steps, denominator for the clamp rate

  int n_steps() const { return static_cast<int>(regimes.size()); }
};

namespace detail {

inline void check_component(double value, const char* component, int cell, long* bad_cell,
                            const char** bad_component) {
  if (!std::isfinite(value) && *bad_cell < 0) {
    *bad_cell = cell;
    *bad_component = component;
  }
}

}  // namespace detail

/// One Milstein step of the state system for a frozen regime. Drift uses the
/// full reaction + diffusion terms; each Brownian motion contributes its
/// sqrt(dt) zeta increment plus the diagonal correction
/// (1/2) g dg (zeta^2 - 1) dt. Negative results are clamped to zero when
/// configured, incrementing *clamp_counter per component-cell.
inline FieldState milstein_state_step(const FieldState& st, const ControlField& u,
                                      const SivParams& pr, double dt, const StepDraws& z,
                                      bool clamp_negative = true, long* clamp_counter = nullptr) {
  const DriftFields d = drift(st, u, pr);
  const double sdt = std::sqrt(dt);
  FieldState out(st.s.grid, 0.0, 0.0, 0.0, st.time + dt);
  long bad_cell = -1;
  const char* bad_component = nullptr;
  const double one_e = 1.0 - pr.e;
  for (int k = 0; k < st.s.size(); ++k) {
    const double S = st.s[k], I = st.i[k], V = st.v[k];
    const double z1 = z.zeta[0][static_cast<size_t>(k)];
    const double z2 = z.zeta[1][static_cast<size_t>(k)];
    const double z3 = z.zeta[2][static_cast<size_t>(k)];
    const double z4 = z.zeta[3][static_cast<size_t>(k)];
    const double s2 = pr.sigma * pr.sigma;

    double s_new = S + d.f1[k] * dt - pr.sigma * S * I * sdt * z1 +
                   0.5 * s2 * S * I * I * (z1 * z1 - 1.0) * dt;
    double i_new = I + d.f2[k] * dt + pr.sigma * S * I * sdt * z2 +
                   0.5 * s2 * S * S * I * (z2 * z2 - 1.0) * dt +
                   one_e * pr.sigma * V * I * sdt * z4 +
                   0.5 * one_e * one_e * s2 * V * V * I * (z4 * z4 - 1.0) * dt;
    double v_new = V + d.f3[k] * dt - one_e * pr.sigma * V * I * sdt * z3 +
                   0.5 * one_e * one_e * s2 * V * I * I * (z3 * z3 - 1.0) * dt;

    detail::check_component(s_new, "S", k, &bad_cell, &bad_component);
    detail::check_component(i_new, "I", k, &bad_cell, &bad_component);
    detail::check_component(v_new, "V", k, &bad_cell, &bad_component);

    if (clamp_negative) {
      if (s_new < 0.0) {
        s_new = 0.0;
        if (clamp_counter) ++*clamp_counter;
      }
      if (i_new < 0.0) {
        i_new = 0.0;
        if (clamp_counter) ++*clamp_counter;
      }
      if (v_new < 0.0) {
        v_new = 0.0;
        if (clamp_counter) ++*clamp_counter;
      }
    }
    out.s[k] = s_new;
    out.i[k] = i_new;
    out.v[k] = v_new;
  }
  if (bad_cell >= 0)
    throw BlowupError("state update produced a non-finite " + std::string(bad_component) +
                          " value at cell " + std::to_string(bad_cell),
                      -1, static_cast<int>(bad_cell), bad_component);
  return out;
}

/// One backward step of the adjoint scheme over [t_i, t_{i+1}]: inputs are the
/// costate and state at i+1, the control applied on the interval, and the
/// interval's recorded draws. The bracket terms follow the discretized adjoint
/// lines; the running-cost sources A1, A2 enter with +A dt going backward.
inline AdjointState adjoint_backward_step(const AdjointState& next, const FieldState& st,
                                          const ControlField& u, const SivParams& pr,
                                          const CostParams& cost, double dt,
                                          const StepDraws& z) {
  const SpatialGrid& g = st.s.grid;
  AdjointState out(g);
  out.q1 = next.q1;
  out.q2 = next.q2;
  out.q3 = next.q3;
  const Field lap1 = laplacian(next.p1, pr.d1);
  const Field lap2 = laplacian(next.p2, pr.d2);
  const Field lap3 = laplacian(next.p3, pr.d3);
  const double sdt = std::sqrt(dt);
  const double one_e = 1.0 - pr.e;
  for (int k = 0; k < g.n_cells; ++k) {
    const double S = st.s[k], I = st.i[k], V = st.v[k];
    const double u1 = u.u1[k], u2 = u.u2[k];
    const double p1 = next.p1[k], p2 = next.p2[k], p3 = next.p3[k];
    const double q1 = next.q1[k], q2 = next.q2[k], q3 = next.q3[k];
    const double z1 = z.zeta[0][static_cast<size_t>(k)];
    const double z2 = z.zeta[1][static_cast<size_t>(k)];
    const double sat2 = (1.0 + pr.eta * I) * (1.0 + pr.eta * I);
    const double treat_deriv = pr.m * u2 / sat2;

    const double bracket1 = ((pr.mu + u1) * S + pr.beta * I) * p1 + lap1[k] +
                            pr.beta * I * p2 + u1 * p3 - pr.sigma * I * q1 + pr.sigma * I * q2;
    const double bracket2 =
        (pr.alpha - pr.beta * S) * p1 +
        (pr.beta * S + one_e * pr.beta * V - (pr.mu + pr.alpha) - treat_deriv) * p2 + lap2[k] -
        (one_e * pr.beta * V - treat_deriv) * p3 - pr.sigma * S * q1 +
        (pr.sigma * S + one_e * pr.sigma * V) * q2 - one_e * pr.sigma * V * q3;
    const double bracket3 = one_e * pr.beta * I * p2 - (pr.mu + one_e * pr.beta * I) * p3 +
                            lap3[k] + one_e * pr.sigma * I * q2 - one_e * pr.sigma * I * q3;

    out.p1[k] = p1 + cost.a1 * dt - bracket1 * dt - q1 * sdt * z1 -
                0.5 * q1 * q1 * (z1 * z1 - 1.0) * dt;
    out.p2[k] = p2 + cost.a2 * dt - bracket2 * dt - q2 * sdt * z2 -
                0.5 * q2 * q2 * (z2 * z2 - 1.0) * dt;
    out.p3[k] = p3 + bracket3 * dt;
  }
  if (!out.finite())
    throw BlowupError("adjoint update produced a non-finite value", -1, -1, "p");
  return out;
}

using ControlPolicy = std::function<ControlField(const FieldState&, double, int)>;

/// Forward simulation: the regime path is sampled first and frozen over each
/// step at its left-endpoint value; the state advances by Milstein steps.
/// A null policy means zero control. Reproducible from cfg.rng_seed.
inline TrajectoryRecord simulate_path(const FieldState& initial, const ControlPolicy& policy,
                                      const std::vector<SivParams>& regimes,
                                      const RegimeChain& chain, const StepConfig& cfg,
                                      int initial_regime = 0) {
  const SpatialGrid& g = initial.s.grid;
  cfg.validate(g, regimes);
  const int n = cfg.n_steps();

  TrajectoryRecord rec;
  rec.regime_path =
      sample_path(chain, initial_regime, cfg.t_final, derive_seed(cfg.rng_seed, 0));
  Rng noise(derive_seed(cfg.rng_seed, 1));
  rec.times.reserve(static_cast<size_t>(n) + 1);
  rec.states.reserve(static_cast<size_t>(n) + 1);
  rec.regimes.reserve(static_cast<size_t>(n));
  rec.draws.reserve(static_cast<size_t>(n));
  rec.times.push_back(0.0);
  rec.states.push_back(initial);
  rec.states.back().time = 0.0;

  FieldState st = rec.states.back();
  const ControlField zero_u(g);
  for (int k = 0; k < n; ++k) {
    const double t = k * cfg.dt;
    const int regime = rec.regime_path.state_at(t);
    const ControlField u = policy ? policy(st, t, regime) : zero_u;
    StepDraws z = StepDraws::generate(noise, g.n_cells, cfg.shared_zeta);
    try {
      st = milstein_state_step(st, u, regimes[static_cast<size_t>(regime)], cfg.dt, z,
                               cfg.clamp_negative, &rec.clamp_count);
    } catch (const BlowupError& err) {
      throw BlowupError(std::string(err.what()) + " at step " + std::to_string(k), k, err.cell,
                        err.component);
    }
    rec.regimes.push_back(regime);
    rec.draws.push_back(std::move(z));
    rec.times.push_back((k + 1) * cfg.dt);
    rec.states.push_back(st);
  }
  rec.cell_steps = 3L * g.n_cells * n;
  return rec;
}

/// Backward sweep along a recorded trajectory: starts from the terminal
/// costate p(T) = (0, terminal_weight, 0) and replays the recorded states,
/// regimes, and draws. Controls are the per-interval fields used forward.
/// Returns one AdjointState per time node (aligned with traj.states).
inline std::vector<AdjointState> adjoint_backward_sweep(
    const TrajectoryRecord& traj, const std::vector<ControlField>& controls,
    const std::vector<SivParams>& regimes, const CostParams& cost) {
  const int n = traj.n_steps();
  if (static_cast<int>(controls.size()) != n)
    throw ValidationError("adjoint sweep needs one control field per step");
  const SpatialGrid& g = traj.states.front().s.grid;
  const double dt = n > 0 ? traj.times[1] - traj.times[0] : 0.0;
  std::vector<AdjointState> adj(static_cast<size_t>(n) + 1, AdjointState(g));
  adj[static_cast<size_t>(n)] = AdjointState(g, 0.0, cost.terminal_weight, 0.0);
  for (int k = n - 1; k >= 0; --k) {
    adj[static_cast<size_t>(k)] = adjoint_backward_step(
        adj[static_cast<size_t>(k) + 1], traj.states[static_cast<size_t>(k) + 1],
        controls[static_cast<size_t>(k)], regimes[static_cast<size_t>(traj.regimes[static_cast<size_t>(k)])],
        cost, dt, traj.draws[static_cast<size_t>(k)]);
  }
  return adj;
}

inline void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& rec) {
  os << "t,x,S,I,V,regime\n";
  for (size_t n = 0; n < rec.states.size(); ++n) {
    const FieldState& st = rec.states[n];
    const int regime = (n == 0) ? rec.regimes.front() : rec.regimes[n - 1];
    for (int k = 0; k < st.s.size(); ++k) {
      os << fmt17(rec.times[n]) << ',' << fmt17(st.s.grid.cell_center(k)) << ','
         << fmt17(st.s[k]) << ',' << fmt17(st.i[k]) << ',' << fmt17(st.v[k]) << ','
         << (regime + 1) << '\n';
    }
  }
}

/// Compact binary dump: all values little-endian. Layout:
///   bytes 0-7   magic "SIVTRAJ1"
///   u64         n_cells
///   u64         n_steps
///   f64         dt
///   f64[n_steps+1]            times
///   u64[n_steps]              regimes (0-based)
///   f64[3 (n_steps+1) n_cells] S,I,V per node, cell-major per component
inline void write_trajectory_binary(std::ostream& os, const TrajectoryRecord& rec) {
  auto put_u64 = [&](std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  auto put_f64 = [&](double v) { os.write(reinterpret_cast<const char*>(&v), 8); };
  os.write("SIVTRAJ1", 8);
  const std::uint64_t n_cells = static_cast<std::uint64_t>(rec.states.front().s.size());
  const std::uint64_t n_steps = static_cast<std::uint64_t>(rec.n_steps());
  put_u64(n_cells);
  put_u64(n_steps);
  put_f64(n_steps > 0 ? rec.times[1] - rec.times[0] : 0.0);
  for (double t : rec.times) put_f64(t);
  for (int r : rec.regimes) put_u64(static_cast<std::uint64_t>(r));
  for (const FieldState& st : rec.states) {
    for (double x : st.s.v) put_f64(x);
    for (double x : st.i.v) put_f64(x);
    for (double x : st.v.v) put_f64(x);
  }
}

}  // namespace siv
