#include <catch2/catch_amalgamated.hpp>

#include "siv/control.hpp"

using namespace siv;

namespace {

RegimeChain one_state() { return RegimeChain(Eigen::MatrixXd::Zero(1, 1)); }

FieldState random_state(Rng& rng, const SpatialGrid& g) {
  FieldState st(g, 0, 0, 0);
  for (int k = 0; k < g.n_cells; ++k) {
    st.s[k] = rng.uniform(0.0, 2.0);
    st.i[k] = rng.uniform(0.0, 2.0);
    st.v[k] = rng.uniform(0.0, 2.0);
  }
  return st;
}

AdjointState random_adjoint(Rng& rng, const SpatialGrid& g, bool with_q) {
  AdjointState adj(g);
  for (int k = 0; k < g.n_cells; ++k) {
    adj.p1[k] = rng.uniform(-2.0, 2.0);
    adj.p2[k] = rng.uniform(-2.0, 2.0);
    adj.p3[k] = rng.uniform(-2.0, 2.0);
    if (with_q) {
      adj.q1[k] = rng.uniform(-1.0, 1.0);
      adj.q2[k] = rng.uniform(-1.0, 1.0);
      adj.q3[k] = rng.uniform(-1.0, 1.0);
    }
  }
  return adj;
}

}  // namespace

TEST_CASE("hamiltonian reductions") {
  Rng rng(41);
  const SpatialGrid g(3, 1.0);
  const FieldState st = random_state(rng, g);
  const ControlField u(g, 0.4, 0.6);
  const SivParams pr = regime1_params();
  CostParams cost;

  SECTION("p = q = 0 leaves only the running-cost integrand") {
    const Field h = hamiltonian(st, u, AdjointState(g), cost, pr);
    for (int k = 0; k < g.n_cells; ++k) {
      const double l = cost.a1 * st.s[k] + cost.a2 * st.i[k] + cost.tau1 * 0.16 +
                       cost.tau2 * 0.36;
      REQUIRE(h[k] == Catch::Approx(l).margin(1e-14));
    }
  }

  SECTION("zero weights and q = 0 leave the drift pairing") {
    CostParams zero;
    zero.a1 = zero.a2 = 0.0;
    zero.tau1 = zero.tau2 = 1e-300;  // keep tau positive but negligible
    const AdjointState adj = random_adjoint(rng, g, false);
    const Field h = hamiltonian(st, u, adj, zero, pr);
    const DriftFields d = drift(st, u, pr);
    for (int k = 0; k < g.n_cells; ++k) {
      const double dot = d.f1[k] * adj.p1[k] + d.f2[k] * adj.p2[k] + d.f3[k] * adj.p3[k];
      REQUIRE(h[k] == Catch::Approx(dot).margin(1e-12));
    }
  }

  SECTION("all-zero inputs give zero") {
    CostParams zero;
    zero.a1 = zero.a2 = 0.0;
    const Field h = hamiltonian(FieldState(g, 0, 0, 0), ControlField(g), AdjointState(g), zero,
                                pr);
    for (int k = 0; k < g.n_cells; ++k) REQUIRE(h[k] == 0.0);
  }
}

TEST_CASE("regular control formulas") {
  const SpatialGrid g(1, 1.0);
  CostParams cost;
  cost.tau1 = 0.5;
  cost.tau2 = 0.5;
  const SivParams pr = regime1_params();  // m = 0.01, eta = 1.03

  SECTION("p1 = p3 gives zero vaccination effort") {
    FieldState st(g, 1.7, 0.3, 0.2);
    AdjointState adj(g, 0.8, 0.1, 0.8);
    REQUIRE(regular_control(st, adj, cost, pr).u1[0] == 0.0);
  }

  SECTION("u1 formula arithmetic") {
    FieldState st(g, 1.0, 0.0, 0.0);
    AdjointState adj(g, 0.5, 0.0, 0.0);
    REQUIRE(regular_control(st, adj, cost, pr).u1[0] == Catch::Approx(0.5));
  }

  SECTION("u2 formula arithmetic with regime-1 m and eta") {
    FieldState st(g, 0.0, 1.0, 0.0);
    AdjointState adj(g, 0.0, 1.0, 0.0);
    REQUIRE(regular_control(st, adj, cost, pr).u2[0] ==
            Catch::Approx(0.01 / (2.0 * 0.5 * 2.03)).epsilon(1e-9));  // ~0.0049261
  }
}

TEST_CASE("hamiltonian is stationary at the regular control") {
  Rng rng(42);
  const SpatialGrid g(1, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const FieldState st = random_state(rng, g);
    const AdjointState adj = random_adjoint(rng, g, true);
    CostParams cost;
    cost.tau1 = rng.uniform(0.2, 2.0);
    cost.tau2 = rng.uniform(0.2, 2.0);
    const SivParams pr = (trial % 2 == 0) ? regime1_params() : regime2_params();
    const ControlField u_star = regular_control(st, adj, cost, pr);

    const double h_step = 1e-6;
    auto h_at = [&](double du1, double du2) {
      ControlField u = u_star;
      u.u1[0] += du1;
      u.u2[0] += du2;
      return hamiltonian(st, u, adj, cost, pr)[0];
    };
    const double d1 = (h_at(h_step, 0) - h_at(-h_step, 0)) / (2 * h_step);
    const double d2 = (h_at(0, h_step) - h_at(0, -h_step)) / (2 * h_step);
    const double scale1 = std::max(1.0, std::abs(h_at(0, 0)));
    REQUIRE(std::abs(d1) <= 1e-6 * scale1);
    REQUIRE(std::abs(d2) <= 1e-6 * scale1);
  }
}

TEST_CASE("projection clamps into the box and is idempotent") {
  const SpatialGrid g(1, 1.0);
  ControlField raw(g);
  const std::array<double, 2> box{0.0, 1.0};

  raw.u1[0] = 0.5;
  REQUIRE(project_control(raw, box, box).u1[0] == 0.5);
  raw.u1[0] = -3.0;
  REQUIRE(project_control(raw, box, box).u1[0] == 0.0);
  raw.u1[0] = 7.0;
  REQUIRE(project_control(raw, box, box).u1[0] == 1.0);

  Rng rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    raw.u1[0] = rng.uniform(-5.0, 5.0);
    raw.u2[0] = rng.uniform(-5.0, 5.0);
    const ControlField once = project_control(raw, box, box);
    const ControlField twice = project_control(once, box, box);
    REQUIRE(once.u1[0] == twice.u1[0]);
    REQUIRE(once.u2[0] == twice.u2[0]);
  }
}

TEST_CASE("objective on a constant deterministic state") {
  // S = I = 1 held fixed, u = 0, T = 1: J = (A1 + A2) * 1 + terminal I = 3
  const SpatialGrid g(1, 1.0);
  const int n = 100;
  TrajectoryRecord traj;
  traj.times.resize(n + 1);
  for (int k = 0; k <= n; ++k) traj.times[static_cast<size_t>(k)] = k * 0.01;
  traj.states.assign(n + 1, FieldState(g, 1.0, 1.0, 0.0));
  traj.regimes.assign(n, 0);
  const std::vector<ControlField> u(n, ControlField(g));
  CostParams cost;
  const auto est = objective({traj}, u, cost);
  REQUIRE(est.mean == Catch::Approx(3.0).margin(1e-12));
  REQUIRE(est.std_error == 0.0);

  SECTION("doubling A2 increases J when infections are present") {
    CostParams heavier = cost;
    heavier.a2 = 2.0;
    REQUIRE(objective({traj}, u, heavier).mean > est.mean);
  }

  SECTION("zero ensemble") {
    TrajectoryRecord z = traj;
    for (auto& st : z.states) st = FieldState(g, 0.0, 0.0, 0.0);
    REQUIRE(objective({z}, u, cost).mean == 0.0);
  }
}

TEST_CASE("sweep with zero cost gradient converges immediately to u = 0") {
  const SpatialGrid g(1, 1.0);
  CostParams cost;
  cost.a1 = cost.a2 = 0.0;
  cost.terminal_weight = 0.0;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  SweepConfig sweep;
  const ControlSolution sol = forward_backward_sweep(FieldState(g, 0.6, 0.1, 1.0),
                                                     {regime1_params()}, one_state(), cost, step,
                                                     sweep, 4);
  REQUIRE(sol.converged);
  REQUIRE(sol.iterations == 1);
  REQUIRE(sol.objective == 0.0);
  for (const ControlField& u : sol.control) {
    REQUIRE(u.u1[0] == 0.0);
    REQUIRE(u.u2[0] == 0.0);
  }
}

TEST_CASE("prohibitive vaccination cost drives u1 to zero") {
  const SpatialGrid g(1, 1.0);
  CostParams cost;
  cost.tau1 = 1e6;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 2.0;
  step.rng_seed = 5;
  SweepConfig sweep;
  sweep.tol = 1e-4;
  const ControlSolution sol = forward_backward_sweep(FieldState(g, 0.6, 0.1, 1.0),
                                                     {regime1_params()}, one_state(), cost, step,
                                                     sweep, 8);
  double sup_u1 = 0.0;
  for (const ControlField& u : sol.control) sup_u1 = std::max(sup_u1, u.u1[0]);
  REQUIRE(sup_u1 <= 1e-4);
}

TEST_CASE("sweep reports non-convergence honestly") {
  const SpatialGrid g(1, 1.0);
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  step.rng_seed = 3;
  SweepConfig sweep;
  sweep.max_iters = 2;
  sweep.tol = 1e-12;  // unreachable in two iterations
  const ControlSolution sol = forward_backward_sweep(FieldState(g, 0.6, 0.1, 1.0),
                                                     {regime1_params()}, one_state(), cost, step,
                                                     sweep, 4);
  REQUIRE_FALSE(sol.converged);
  REQUIRE(sol.iterations == 2);
  REQUIRE(sol.history.size() == 2);
  REQUIRE(std::isfinite(sol.objective));
  REQUIRE(sol.pg_residual > sweep.tol);
}

TEST_CASE("sweep on the regime-1 setup beats both constant baselines") {
  const SpatialGrid g(1, 1.0);
  const FieldState init(g, 0.6, 0.1, 1.0);
  const std::vector<SivParams> regimes{regime1_params()};
  const RegimeChain chain = one_state();
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 2.0;
  step.rng_seed = 77;
  SweepConfig sweep;
  sweep.tol = 1e-3;
  const int n_paths = 50;
  const ControlSolution sol =
      forward_backward_sweep(init, regimes, chain, cost, step, sweep, n_paths, 2);
  REQUIRE(sol.converged);
  REQUIRE(sol.pg_residual <= sweep.tol);

  for (const ControlField& u : sol.control)
    REQUIRE(u.within_box(0.0, 1.0, 0.0, 1.0));

  // descent under common random numbers, within one standard error per step
  for (size_t k = 1; k < sol.history.size(); ++k)
    REQUIRE(sol.history[k].objective <=
            sol.history[k - 1].objective + sol.history[k - 1].std_error + 1e-12);

  auto baseline = [&](double level) {
    const std::vector<ControlField> u(static_cast<size_t>(step.n_steps()),
                                      ControlField(g, level, level));
    const auto ens = simulate_ensemble(init, u, regimes, chain, step, n_paths, 2);
    return objective(ens, u, cost);
  };
  const auto j0 = baseline(0.0);
  const auto j1 = baseline(1.0);
  REQUIRE(sol.objective <= j0.mean + j0.std_error);
  REQUIRE(sol.objective <= j1.mean + j1.std_error);
}
