#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <memory>

#include "siv/control.hpp"

namespace siv {

/// Value-function basis: ten monomials of the spatially averaged state,
/// {1, S, I, V, S^2, I^2, V^2, SI, SV, IV}, with coefficients piecewise
/// linear in t over the knots.
struct BasisSpec {
  std::vector<double> time_knots;
  static constexpr int n_monomials = 10;

  static BasisSpec uniform(double t_final, int n_knots) {
    BasisSpec b;
    b.time_knots.resize(static_cast<size_t>(n_knots));
    for (int k = 0; k < n_knots; ++k)
      b.time_knots[static_cast<size_t>(k)] = t_final * k / (n_knots - 1);
    b.validate();
    return b;
  }

  void validate() const {
    if (time_knots.size() < 2) throw ValidationError("basis needs at least two time knots");
    if (time_knots.front() != 0.0) throw ValidationError("first time knot must be 0");
    for (size_t k = 1; k < time_knots.size(); ++k)
      if (!(time_knots[k] > time_knots[k - 1]))
        throw ValidationError("time knots must be strictly increasing");
  }

  int n_knots() const { return static_cast<int>(time_knots.size()); }
  int n_params() const { return n_knots() * n_monomials; }
  double t_final() const { return time_knots.back(); }

  static std::array<double, n_monomials> monomials(double s, double i, double v) {
    return {1.0, s, i, v, s * s, i * i, v * v, s * i, s * v, i * v};
  }
  static std::array<double, n_monomials> d_ds(double s, double i, double v) {
    return {0.0, 1.0, 0.0, 0.0, 2.0 * s, 0.0, 0.0, i, v, 0.0};
  }
  static std::array<double, n_monomials> d_di(double s, double i, double v) {
    return {0.0, 0.0, 1.0, 0.0, 0.0, 2.0 * i, 0.0, s, 0.0, v};
  }
  static std::array<double, n_monomials> d_dv(double s, double i, double v) {
    return {0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 2.0 * v, 0.0, s, i};
  }

  static const char* monomial_name(int m) {
    static const char* names[n_monomials] = {"1", "S", "I", "V", "S^2", "I^2", "V^2",
                                             "SI", "SV", "IV"};
    return names[m];
  }

  /// Linear interpolation weights of t over the knots: (index, weight) pairs.
  std::array<std::pair<int, double>, 2> time_weights(double t) const {
    const auto& kts = time_knots;
    if (t <= kts.front()) return {{{0, 1.0}, {1, 0.0}}};
    if (t >= kts.back()) return {{{n_knots() - 1, 1.0}, {n_knots() - 2, 0.0}}};
    int hi = static_cast<int>(std::upper_bound(kts.begin(), kts.end(), t) - kts.begin());
    const int lo = hi - 1;
    const double span = kts[static_cast<size_t>(hi)] - kts[static_cast<size_t>(lo)];
    const double w_hi = (t - kts[static_cast<size_t>(lo)]) / span;
    return {{{lo, 1.0 - w_hi}, {hi, w_hi}}};
  }
};

struct ValueApprox {
  BasisSpec basis;
  Eigen::MatrixXd coeffs;  // n_knots x n_monomials

  ValueApprox() = default;
  ValueApprox(BasisSpec b, Eigen::MatrixXd c) : basis(std::move(b)), coeffs(std::move(c)) {}

  double eval(double t, double s, double i, double v) const {
    const auto mono = BasisSpec::monomials(s, i, v);
    const auto tw = basis.time_weights(t);
    double acc = 0.0;
    for (const auto& [knot, w] : tw)
      for (int m = 0; m < BasisSpec::n_monomials; ++m)
        acc += w * coeffs(knot, m) * mono[static_cast<size_t>(m)];
    return acc;
  }

  /// (dV/dS, dV/dI, dV/dV-compartment) at (t, s, i, v).
  std::array<double, 3> grad(double t, double s, double i, double v) const {
    const auto gs = BasisSpec::d_ds(s, i, v);
    const auto gi = BasisSpec::d_di(s, i, v);
    const auto gv = BasisSpec::d_dv(s, i, v);
    const auto tw = basis.time_weights(t);
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (const auto& [knot, w] : tw)
      for (int m = 0; m < BasisSpec::n_monomials; ++m) {
        const double c = w * coeffs(knot, m);
        out[0] += c * gs[static_cast<size_t>(m)];
        out[1] += c * gi[static_cast<size_t>(m)];
        out[2] += c * gv[static_cast<size_t>(m)];
      }
    return out;
  }
};

/// Scalar feedback policy on the spatially averaged state.
using PolicyFn =
    std::function<std::array<double, 2>(double t, double s, double i, double v, int regime)>;

inline PolicyFn zero_policy() {
  return [](double, double, double, double, int) { return std::array<double, 2>{0.0, 0.0}; };
}

/// Greedy (Hamiltonian-minimizing) policy induced by a fitted value function:
///   u1 = clamp( S (V_S - V_V) / (2 tau1) )
///   u2 = clamp( m I (V_I - V_V) / (2 tau2 (1 + eta I)) )
inline PolicyFn value_policy(const ValueApprox& value, const CostParams& cost,
                             const std::vector<SivParams>& regimes,
                             std::array<double, 2> u1_bounds = {0.0, 1.0},
                             std::array<double, 2> u2_bounds = {0.0, 1.0}) {
  return [value, cost, regimes, u1_bounds, u2_bounds](double t, double s, double i, double v,
                                                      int regime) {
    const auto g = value.grad(t, s, i, v);
    const SivParams& pr = regimes[static_cast<size_t>(regime)];
    const double raw1 = s * (g[0] - g[2]) / (2.0 * cost.tau1);
    const double raw2 =
        pr.m * i * (g[1] - g[2]) / (2.0 * cost.tau2 * (1.0 + pr.eta * i));
    return std::array<double, 2>{std::clamp(raw1, u1_bounds[0], u1_bounds[1]),
                                 std::clamp(raw2, u2_bounds[0], u2_bounds[1])};
  };
}

struct SubStep {
  double s, i, v;
  int regime;
  double u1, u2;
};

/// One integration window [t0, t1] of width delta: endpoint states, the
/// per-substep applied controls, and the policy-independent part of the cost.
struct TransitionWindow {
  double t0 = 0.0, t1 = 0.0;
  std::array<double, 3> x0{}, x1{};
  double state_cost = 0.0;     // int (A1 S + A2 I) ds over the window
  double behavior_cost = 0.0;  // running-cost integral under the applied u (objective quadrature)
  std::vector<SubStep> steps;
};

struct IrlDataset {
  std::vector<TransitionWindow> windows;
  std::vector<std::pair<std::array<double, 3>, double>> terminals;  // (x(tf), phi(x(tf)))
  double dt = 0.0, delta = 0.0, t_final = 0.0;
};

/// Behavior control drawn once per window; receives the path's RNG so the
/// dataset is reproducible from the master seed. A ControlSampler is a
/// factory invoked once per path, so samplers may carry per-path state.
using WindowSampler = std::function<std::array<double, 2>(
    Rng&, double t, const std::array<double, 3>& xbar, int regime)>;
using ControlSampler = std::function<WindowSampler()>;

inline ControlSampler uniform_behavior(std::array<double, 2> u1_bounds = {0.0, 1.0},
                                       std::array<double, 2> u2_bounds = {0.0, 1.0}) {
  return [u1_bounds, u2_bounds]() -> WindowSampler {
    return [u1_bounds, u2_bounds](Rng& rng, double, const std::array<double, 3>&, int) {
      return std::array<double, 2>{rng.uniform(u1_bounds[0], u1_bounds[1]),
                                   rng.uniform(u2_bounds[0], u2_bounds[1])};
    };
  };
}

/// Default behavior: a persistent per-path base level plus per-window jitter.
/// Window-level variation feeds the cross-term rank condition; the path-level
/// bias makes different paths accumulate different compartment levels, which
/// decorrelates the slow state directions from the time knots in the fit.
inline ControlSampler biased_uniform_behavior(std::array<double, 2> u1_bounds = {0.0, 1.0},
                                              std::array<double, 2> u2_bounds = {0.0, 1.0},
                                              double jitter = 0.25) {
  return [u1_bounds, u2_bounds, jitter]() -> WindowSampler {
    auto state = std::make_shared<std::array<double, 3>>(
        std::array<double, 3>{0.0, 0.0, 0.0});  // (initialized flag, base1, base2)
    return [u1_bounds, u2_bounds, jitter, state](Rng& rng, double,
                                                 const std::array<double, 3>&, int) {
      if ((*state)[0] == 0.0) {
        (*state)[0] = 1.0;
        (*state)[1] = rng.uniform(u1_bounds[0], u1_bounds[1]);
        (*state)[2] = rng.uniform(u2_bounds[0], u2_bounds[1]);
      }
      return std::array<double, 2>{
          std::clamp((*state)[1] + rng.uniform(-jitter, jitter), u1_bounds[0], u1_bounds[1]),
          std::clamp((*state)[2] + rng.uniform(-jitter, jitter), u2_bounds[0], u2_bounds[1])};
    };
  };
}

struct IrlConfig {
  double delta = 0.1;
  int i_max = 8;
  double ridge = 1e-8;
  int n_paths = 500;
  int n_eval_paths = 200;  // objective estimation ensemble per iterate
  int n_knots = 11;
  std::array<double, 2> u1_bounds{0.0, 1.0};
  std::array<double, 2> u2_bounds{0.0, 1.0};
  std::uint64_t probe_seed = 777;
  int n_probes = 100;
  // every second data path starts uniform in [0, explore_hi]^3 so the value
  // fit sees the probe region, not just the tube from the configured initial
  bool explore_initials = true;
  double explore_hi = 2.0;
  // soft policy update u <- (1-w) u + w greedy(V); the Hamiltonian is a
  // convex quadratic in u, so any w in (0,1] keeps pointwise improvement
  double policy_damping = 0.5;

  void validate(const StepConfig& step) const {
    if (i_max < 1) throw ValidationError("irl.i_max must be >= 1");
    if (!(ridge >= 0.0)) throw ValidationError("irl.ridge must be >= 0");
    if (n_paths < 1) throw ValidationError("irl.n_paths must be >= 1");
    const double r = delta / step.dt;
    if (!(delta > 0.0) || std::abs(r - std::llround(r)) > 1e-9)
      throw ValidationError("irl.delta must be a positive multiple of stepping.dt");
    const double n_win = step.t_final / delta;
    if (std::abs(n_win - std::llround(n_win)) > 1e-9)
      throw ValidationError("irl horizon must be an integer number of delta windows");
    if (n_knots < 2) throw ValidationError("irl.n_knots must be >= 2");
    if (!(policy_damping > 0.0 && policy_damping <= 1.0))
      throw ValidationError("irl.policy_damping must lie in (0,1]");
  }
};

/// Simulates the behavior policy and slices each path into consecutive
/// windows of width delta. Window integrals use the same left-endpoint
/// quadrature as the objective.
inline IrlDataset collect_transitions(const ControlSampler& behavior,
                                      const std::vector<SivParams>& regimes,
                                      const RegimeChain& chain, const FieldState& initial,
                                      const StepConfig& step_cfg, const IrlConfig& irl_cfg,
                                      const CostParams& cost, int n_threads = 1,
                                      int initial_regime = 0) {
  irl_cfg.validate(step_cfg);
  step_cfg.validate(initial.s.grid, regimes);
  const int substeps = static_cast<int>(std::llround(irl_cfg.delta / step_cfg.dt));
  const int n_steps = step_cfg.n_steps();
  const int n_windows = n_steps / substeps;
  const SpatialGrid& g = initial.s.grid;

  std::vector<IrlDataset> per_path(static_cast<size_t>(irl_cfg.n_paths));
  parallel_for(irl_cfg.n_paths, n_threads, [&](int j) {
    IrlDataset& ds = per_path[static_cast<size_t>(j)];
    const std::uint64_t path_seed = derive_seed(step_cfg.rng_seed, static_cast<std::uint64_t>(j));
    RegimePath rpath = sample_path(chain, initial_regime, step_cfg.t_final,
                                   derive_seed(path_seed, 0));
    Rng noise(derive_seed(path_seed, 1));
    Rng behavior_rng(derive_seed(path_seed, 2));
    WindowSampler sample_window = behavior();

    FieldState st = initial;
    if (irl_cfg.explore_initials && j % 2 == 1) {
      Rng explore(derive_seed(path_seed, 3));
      st = FieldState(g, explore.uniform(0.0, irl_cfg.explore_hi),
                      explore.uniform(0.0, irl_cfg.explore_hi),
                      explore.uniform(0.0, irl_cfg.explore_hi));
    }
    st.time = 0.0;
    long clamp = 0;
    for (int w = 0; w < n_windows; ++w) {
      TransitionWindow win;
      win.t0 = w * irl_cfg.delta;
      win.t1 = (w + 1) * irl_cfg.delta;
      win.x0 = {spatial_mean(st.s), spatial_mean(st.i), spatial_mean(st.v)};
      const int regime0 = rpath.state_at(win.t0);
      const auto u = sample_window(behavior_rng, win.t0, win.x0, regime0);
      win.steps.reserve(static_cast<size_t>(substeps));
      for (int s = 0; s < substeps; ++s) {
        const double t = win.t0 + s * step_cfg.dt;
        const int regime = rpath.state_at(t);
        const std::array<double, 3> xbar{spatial_mean(st.s), spatial_mean(st.i),
                                         spatial_mean(st.v)};
        win.steps.push_back({xbar[0], xbar[1], xbar[2], regime, u[0], u[1]});
        win.state_cost += (cost.a1 * xbar[0] + cost.a2 * xbar[1]) * step_cfg.dt;
        win.behavior_cost +=
            (cost.a1 * xbar[0] + cost.a2 * xbar[1] +
             0.5 * (cost.tau1 * u[0] * u[0] + cost.tau2 * u[1] * u[1])) *
            step_cfg.dt;
        ControlField uf(g, u[0], u[1]);
        StepDraws z = StepDraws::generate(noise, g.n_cells, step_cfg.shared_zeta);
        st = milstein_state_step(st, uf, regimes[static_cast<size_t>(regime)], step_cfg.dt, z,
                                 step_cfg.clamp_negative, &clamp);
      }
      win.x1 = {spatial_mean(st.s), spatial_mean(st.i), spatial_mean(st.v)};
      ds.windows.push_back(std::move(win));
    }
    ds.terminals.emplace_back(
        std::array<double, 3>{spatial_mean(st.s), spatial_mean(st.i), spatial_mean(st.v)},
        cost.terminal_weight * spatial_mean(st.i) * g.length);
  });

  IrlDataset ds;
  ds.dt = step_cfg.dt;
  ds.delta = irl_cfg.delta;
  ds.t_final = step_cfg.t_final;
  for (auto& p : per_path) {
    std::move(p.windows.begin(), p.windows.end(), std::back_inserter(ds.windows));
    std::move(p.terminals.begin(), p.terminals.end(), std::back_inserter(ds.terminals));
  }
  return ds;
}

struct LeSolution {
  ValueApprox value;
  double fit_std_error = 0.0;
  int n_rows = 0;
};

namespace detail {

inline void add_basis_row(Eigen::VectorXd& row, const BasisSpec& basis, double t,
                          const std::array<double, BasisSpec::n_monomials>& mono, double factor) {
  const auto tw = basis.time_weights(t);
  for (const auto& [knot, w] : tw) {
    if (w == 0.0) continue;
    for (int m = 0; m < BasisSpec::n_monomials; ++m)
      row(knot * BasisSpec::n_monomials + m) += factor * w * mono[static_cast<size_t>(m)];
  }
}

}  // namespace detail

/// Least-squares solve of the windowed integral Lyapunov identity
///   V(x(t-d), t-d) - V(x(t), t)
///     = 2 int u^{(i+1)T} tau (u - u^{(i)}) ds + int (A1 S + A2 I + u^{(i)T} tau u^{(i)}) ds
/// with the improved policy substituted through the value gradients, so the
/// system stays linear in the value coefficients. The terminal condition
/// V(., tf) = phi is enforced through heavily weighted rows.
inline LeSolution solve_integral_le(const IrlDataset& ds, const PolicyFn& current_policy,
                                    const BasisSpec& basis, double ridge, const CostParams& cost,
                                    const std::vector<SivParams>& regimes) {
  if (ds.windows.empty()) throw ValidationError("integral LE needs a nonempty dataset");
  basis.validate();
  const int n_params = basis.n_params();
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(n_params, n_params);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(n_params);
  Eigen::VectorXd row(n_params);

  std::vector<std::pair<Eigen::VectorXd, double>> window_rows;
  window_rows.reserve(ds.windows.size());

  for (const TransitionWindow& win : ds.windows) {
    row.setZero();
    detail::add_basis_row(row, basis, win.t0, BasisSpec::monomials(win.x0[0], win.x0[1], win.x0[2]),
                          1.0);
    detail::add_basis_row(row, basis, win.t1, BasisSpec::monomials(win.x1[0], win.x1[1], win.x1[2]),
                          -1.0);
    double rhs = win.state_cost;
    double t = win.t0;
    for (const SubStep& s : win.steps) {
      const auto ui = current_policy(t, s.s, s.i, s.v, s.regime);
      const SivParams& pr = regimes[static_cast<size_t>(s.regime)];
      rhs += (cost.tau1 * ui[0] * ui[0] + cost.tau2 * ui[1] * ui[1]) * ds.dt;

      // 2 u1^{(i+1)} tau1 (u1 - u1^{(i)}) = (u1 - u1^{(i)}) S (V_S - V_V), etc.
      const double c1 = (s.u1 - ui[0]) * s.s * ds.dt;
      const double gfac = pr.m * s.i / (1.0 + pr.eta * s.i);
      const double c2 = (s.u2 - ui[1]) * gfac * ds.dt;
      auto grad_s = BasisSpec::d_ds(s.s, s.i, s.v);
      auto grad_i = BasisSpec::d_di(s.s, s.i, s.v);
      auto grad_v = BasisSpec::d_dv(s.s, s.i, s.v);
      std::array<double, BasisSpec::n_monomials> comb;
      for (int m = 0; m < BasisSpec::n_monomials; ++m)
        comb[static_cast<size_t>(m)] = c1 * (grad_s[static_cast<size_t>(m)] -
                                             grad_v[static_cast<size_t>(m)]) +
                                       c2 * (grad_i[static_cast<size_t>(m)] -
                                             grad_v[static_cast<size_t>(m)]);
      detail::add_basis_row(row, basis, t, comb, -1.0);
      t += ds.dt;
    }
    ata.selfadjointView<Eigen::Lower>().rankUpdate(row, 1.0);
    atb += row * rhs;
    window_rows.emplace_back(row, rhs);
  }

  const double terminal_weight = 1e2;
  for (const auto& [x, phi] : ds.terminals) {
    row.setZero();
    detail::add_basis_row(row, basis, basis.t_final(), BasisSpec::monomials(x[0], x[1], x[2]),
                          terminal_weight);
    ata.selfadjointView<Eigen::Lower>().rankUpdate(row, 1.0);
    atb += row * (terminal_weight * phi);
  }
  ata = ata.selfadjointView<Eigen::Lower>();

  // column equilibration: the monomials span wildly different scales, so both
  // the rank test and the ridge act on the normalized system
  Eigen::VectorXd scale(n_params);
  for (int k = 0; k < n_params; ++k) scale(k) = std::sqrt(std::max(ata(k, k), 1e-300));
  Eigen::MatrixXd normalized = ata;
  for (int r = 0; r < n_params; ++r)
    for (int c = 0; c < n_params; ++c) normalized(r, c) /= scale(r) * scale(c);

  // The window rows are value differences, so the global constant is pinned
  // only through the terminal rows; deficiency below is therefore checked on
  // the combined system. Exact deficiency shows up at machine-noise level,
  // honest near-collinearity (which the ridge absorbs) stays well above it.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(normalized);
  if (es.eigenvalues().minCoeff() <= 1e-14) {
    std::string names;
    Eigen::VectorXd v = es.eigenvectors().col(0).cwiseAbs();
    for (int pick = 0; pick < 3; ++pick) {
      int arg = 0;
      v.maxCoeff(&arg);
      const int knot = arg / BasisSpec::n_monomials;
      const int mono = arg % BasisSpec::n_monomials;
      if (!names.empty()) names += ", ";
      names += std::string(BasisSpec::monomial_name(mono)) + "@t=" +
               fmt17(basis.time_knots[static_cast<size_t>(knot)]);
      v(arg) = 0.0;
    }
    throw ExcitationError(
        "integral LE data matrix is rank deficient; unexcited basis directions: " + names +
        " (richer behavior policy or more paths needed)");
  }

  Eigen::MatrixXd reg = normalized;
  reg.diagonal().array() += ridge;
  Eigen::VectorXd rhs = atb.cwiseQuotient(scale);
  Eigen::VectorXd sol = reg.ldlt().solve(rhs).cwiseQuotient(scale);

  double rss = 0.0;
  for (const auto& [r, b] : window_rows) {
    const double resid = r.dot(sol) - b;
    rss += resid * resid;
  }
  const int dof = std::max(1, static_cast<int>(window_rows.size()) - n_params);

  LeSolution out;
  Eigen::MatrixXd coeffs(basis.n_knots(), BasisSpec::n_monomials);
  for (int k = 0; k < basis.n_knots(); ++k)
    for (int m = 0; m < BasisSpec::n_monomials; ++m)
      coeffs(k, m) = sol(k * BasisSpec::n_monomials + m);
  out.value = ValueApprox(basis, std::move(coeffs));
  out.fit_std_error = std::sqrt(rss / dof);
  out.n_rows = static_cast<int>(window_rows.size());
  return out;
}

struct ProbeSet {
  std::vector<std::array<double, 3>> points;
  std::vector<double> times;
};

/// Latin-hypercube probe states in [0,2]^3 with a uniform time grid; used for
/// the monotonicity audit of the value iterates.
inline ProbeSet make_probe_set(int n_probes, double t_final, std::uint64_t seed,
                               int n_times = 11) {
  ProbeSet ps;
  Rng rng(seed);
  std::array<std::vector<int>, 3> perms;
  for (auto& perm : perms) {
    perm.resize(static_cast<size_t>(n_probes));
    for (int i = 0; i < n_probes; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = n_probes - 1; i > 0; --i)
      std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(rng.below(i + 1))]);
  }
  for (int i = 0; i < n_probes; ++i) {
    std::array<double, 3> x{};
    for (int d = 0; d < 3; ++d)
      x[static_cast<size_t>(d)] =
          2.0 * (perms[static_cast<size_t>(d)][static_cast<size_t>(i)] + rng.uniform()) /
          n_probes;
    ps.points.push_back(x);
  }
  ps.times.resize(static_cast<size_t>(n_times));
  for (int k = 0; k < n_times; ++k)
    ps.times[static_cast<size_t>(k)] = t_final * k / (n_times - 1);
  return ps;
}

inline double mean_probe_value(const ValueApprox& value, const ProbeSet& probes) {
  double acc = 0.0;
  for (const auto& x : probes.points)
    for (double t : probes.times) acc += value.eval(t, x[0], x[1], x[2]);
  return acc / (static_cast<double>(probes.points.size()) *
                static_cast<double>(probes.times.size()));
}

struct IrlIterate {
  ValueApprox value;
  double fit_std_error = 0.0;
  double mean_probe_value = 0.0;
  double j_mean = 0.0;       // objective of the improved (clamped) policy
  double j_std_error = 0.0;
  double policy_change = 0.0;
};

/// Objective of a feedback policy on the spatially averaged state, estimated
/// over a CRN ensemble.
inline ObjectiveEstimate policy_objective(const PolicyFn& policy, const FieldState& initial,
                                          const std::vector<SivParams>& regimes,
                                          const RegimeChain& chain, const StepConfig& step_cfg,
                                          const CostParams& cost, int n_paths, int n_threads = 1,
                                          int initial_regime = 0) {
  const SpatialGrid& g = initial.s.grid;
  ControlPolicy field_policy = [&policy, &g](const FieldState& st, double t, int regime) {
    const auto u = policy(t, spatial_mean(st.s), spatial_mean(st.i), spatial_mean(st.v), regime);
    return ControlField(g, u[0], u[1]);
  };
  std::vector<double> per_path(static_cast<size_t>(n_paths));
  parallel_for(n_paths, n_threads, [&](int j) {
    StepConfig pc = step_cfg;
    pc.rng_seed = derive_seed(step_cfg.rng_seed, static_cast<std::uint64_t>(j));
    TrajectoryRecord traj =
        simulate_path(initial, field_policy, regimes, chain, pc, initial_regime);
    const int n = traj.n_steps();
    double j_acc = 0.0;
    for (int k = 0; k < n; ++k) {
      const FieldState& st = traj.states[static_cast<size_t>(k)];
      const int regime = traj.regimes[static_cast<size_t>(k)];
      const auto u =
          policy(traj.times[static_cast<size_t>(k)], spatial_mean(st.s), spatial_mean(st.i),
                 spatial_mean(st.v), regime);
      j_acc += running_cost(st, ControlField(g, u[0], u[1]), cost) * pc.dt;
    }
    j_acc += cost.terminal_weight * terminal_cost(traj.states.back());
    per_path[static_cast<size_t>(j)] = j_acc;
  });
  ObjectiveEstimate est;
  est.per_path = std::move(per_path);
  double acc = 0.0;
  for (double v : est.per_path) acc += v;
  est.mean = acc / static_cast<double>(est.per_path.size());
  if (est.per_path.size() > 1) {
    double ss = 0.0;
    for (double v : est.per_path) ss += (v - est.mean) * (v - est.mean);
    est.std_error = std::sqrt(ss / (static_cast<double>(est.per_path.size()) - 1.0) /
                              static_cast<double>(est.per_path.size()));
  }
  return est;
}

/// Off-policy policy iteration: one dataset collected under the behavior
/// policy, then i_max integral-LE solves. The emitted policy after iterate i
/// is the damped mix of the clamped greedy policies, kept as an explicit
/// weighted sum so evaluation cost stays linear in the iterate count.
inline std::vector<IrlIterate> irl_policy_iteration(
    const FieldState& initial, const std::vector<SivParams>& regimes, const RegimeChain& chain,
    const CostParams& cost, const StepConfig& step_cfg, const IrlConfig& irl_cfg,
    const ControlSampler& behavior, int n_threads = 1, int initial_regime = 0) {
  irl_cfg.validate(step_cfg);
  const IrlDataset ds = collect_transitions(behavior, regimes, chain, initial, step_cfg, irl_cfg,
                                            cost, n_threads, initial_regime);
  const BasisSpec basis = BasisSpec::uniform(step_cfg.t_final, irl_cfg.n_knots);
  const ProbeSet probes = make_probe_set(irl_cfg.n_probes, step_cfg.t_final, irl_cfg.probe_seed);

  StepConfig eval_cfg = step_cfg;
  eval_cfg.rng_seed = derive_seed(step_cfg.rng_seed, 0xEE11AA77ull);

  auto greedy_pool = std::make_shared<std::vector<PolicyFn>>();
  auto mixed_policy = [greedy_pool](std::vector<double> weights) -> PolicyFn {
    return [greedy_pool, weights](double t, double s, double i, double v, int r) {
      std::array<double, 2> acc{0.0, 0.0};
      for (size_t k = 0; k < weights.size(); ++k) {
        if (weights[k] == 0.0) continue;
        const auto u = (*greedy_pool)[k](t, s, i, v, r);
        acc[0] += weights[k] * u[0];
        acc[1] += weights[k] * u[1];
      }
      return acc;
    };
  };

  std::vector<IrlIterate> history;
  std::vector<double> weights;  // mixture over greedy_pool; deficit from 1 is the zero policy
  PolicyFn current = zero_policy();
  const double w = irl_cfg.policy_damping;
  for (int i = 0; i < irl_cfg.i_max; ++i) {
    LeSolution le = solve_integral_le(ds, current, basis, irl_cfg.ridge, cost, regimes);
    greedy_pool->push_back(
        value_policy(le.value, cost, regimes, irl_cfg.u1_bounds, irl_cfg.u2_bounds));
    for (double& wk : weights) wk *= 1.0 - w;
    weights.push_back(w);
    PolicyFn improved = mixed_policy(weights);

    IrlIterate it;
    it.value = le.value;
    it.fit_std_error = le.fit_std_error;
    it.mean_probe_value = mean_probe_value(le.value, probes);
    const ObjectiveEstimate est =
        policy_objective(improved, initial, regimes, chain, eval_cfg, cost,
                         irl_cfg.n_eval_paths, n_threads, initial_regime);
    it.j_mean = est.mean;
    it.j_std_error = est.std_error;

    double change = 0.0;
    int count = 0;
    for (const auto& x : probes.points)
      for (double t : probes.times) {
        const auto a = improved(t, x[0], x[1], x[2], 0);
        const auto b = current(t, x[0], x[1], x[2], 0);
        change += std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
        count += 2;
      }
    it.policy_change = change / count;
    history.push_back(std::move(it));
    current = improved;
  }
  return history;
}

}  // namespace siv
