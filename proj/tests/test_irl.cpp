#include <catch2/catch_amalgamated.hpp>

#include "siv/irl.hpp"

using namespace siv;

namespace {

RegimeChain one_state() { return RegimeChain(Eigen::MatrixXd::Zero(1, 1)); }

ControlSampler constant_behavior(double u1, double u2) {
  return [u1, u2]() -> WindowSampler {
    return [u1, u2](Rng&, double, const std::array<double, 3>&, int) {
      return std::array<double, 2>{u1, u2};
    };
  };
}

}  // namespace

TEST_CASE("window count: delta = dt gives one window per step") {
  const SpatialGrid g(1, 1.0);
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  IrlConfig irl;
  irl.delta = 0.01;
  irl.n_paths = 3;
  const IrlDataset ds = collect_transitions(uniform_behavior(), {regime1_params()}, one_state(),
                                            FieldState(g, 0.6, 0.1, 1.0), step, irl,
                                            CostParams{});
  REQUIRE(ds.windows.size() == 3 * 100);
  REQUIRE(ds.terminals.size() == 3);
}

TEST_CASE("zero-noise constant-control window cost matches the closed form") {
  // all rates zero: only the u1 S transfer moves the state, so the recorded
  // integral equals delta * (A1 S + A2 I + (tau1 u1^2 + tau2 u2^2)/2) up to
  // the left-endpoint quadrature error O(delta^2 u1 S)
  const SpatialGrid g(1, 1.0);
  const SivParams quiet{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, {}};
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 0.5;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 1;
  CostParams cost;
  const double u1 = 0.4, u2 = 0.8;
  const IrlDataset ds =
      collect_transitions(constant_behavior(u1, u2), {quiet}, one_state(),
                          FieldState(g, 0.7, 0.2, 0.4), step, irl, cost);
  REQUIRE(ds.windows.size() == 5);
  REQUIRE(ds.windows.front().x0[0] == 0.7);
  for (const TransitionWindow& w : ds.windows) {
    const double constant_state_oracle =
        irl.delta * (cost.a1 * w.x0[0] + cost.a2 * w.x0[1] +
                     0.5 * (cost.tau1 * u1 * u1 + cost.tau2 * u2 * u2));
    const double quadrature_slack = irl.delta * irl.delta * cost.a1 * u1 * w.x0[0];
    REQUIRE(w.behavior_cost == Catch::Approx(constant_state_oracle).margin(quadrature_slack));

    // and exactly the left-endpoint Riemann sum of its own substeps
    double riemann = 0.0;
    for (const SubStep& s : w.steps)
      riemann += (cost.a1 * s.s + cost.a2 * s.i +
                  0.5 * (cost.tau1 * s.u1 * s.u1 + cost.tau2 * s.u2 * s.u2)) *
                 step.dt;
    REQUIRE(w.behavior_cost == Catch::Approx(riemann).margin(1e-15));
  }
}

TEST_CASE("dataset is deterministic in the seed") {
  const SpatialGrid g(1, 1.0);
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  step.rng_seed = 321;
  IrlConfig irl;
  irl.delta = 0.05;
  irl.n_paths = 4;
  auto collect = [&] {
    return collect_transitions(uniform_behavior(), default_regimes(),
                               RegimeChain([] {
                                 Eigen::MatrixXd q(2, 2);
                                 q << -5.5, 5.5, 8.0, -8.0;
                                 return q;
                               }()),
                               FieldState(g, 0.6, 0.1, 1.0), step, irl, CostParams{}, 2);
  };
  const IrlDataset a = collect();
  const IrlDataset b = collect();
  REQUIRE(a.windows.size() == b.windows.size());
  for (size_t w = 0; w < a.windows.size(); ++w) {
    REQUIRE(a.windows[w].x0 == b.windows[w].x0);
    REQUIRE(a.windows[w].x1 == b.windows[w].x1);
    REQUIRE(a.windows[w].behavior_cost == b.windows[w].behavior_cost);
    REQUIRE(a.windows[w].steps.size() == b.windows[w].steps.size());
    for (size_t s = 0; s < a.windows[w].steps.size(); ++s) {
      REQUIRE(a.windows[w].steps[s].u1 == b.windows[w].steps[s].u1);
      REQUIRE(a.windows[w].steps[s].s == b.windows[w].steps[s].s);
    }
  }
}

TEST_CASE("zero cost gives a zero value and a zero improved policy") {
  const SpatialGrid g(1, 1.0);
  CostParams cost;
  cost.a1 = cost.a2 = 0.0;
  cost.terminal_weight = 0.0;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 40;
  const std::vector<SivParams> regimes{regime1_params()};
  const IrlDataset ds = collect_transitions(uniform_behavior(), regimes, one_state(),
                                            FieldState(g, 0.6, 0.1, 1.0), step, irl, cost, 2);
  const BasisSpec basis = BasisSpec::uniform(step.t_final, 6);
  const LeSolution le = solve_integral_le(ds, zero_policy(), basis, irl.ridge, cost, regimes);
  REQUIRE(le.value.coeffs.cwiseAbs().maxCoeff() <= 1e-8);
  const PolicyFn improved = value_policy(le.value, cost, regimes);
  const auto u = improved(0.5, 1.0, 1.0, 1.0, 0);
  REQUIRE(std::abs(u[0]) <= 1e-8);
  REQUIRE(std::abs(u[1]) <= 1e-8);
}

TEST_CASE("on-policy fit matches the path-integral value oracle") {
  // decoupled linear toy: beta = sigma = m = 0, constant behavior = current
  // policy, several deterministic starts; the fitted V must reproduce the
  // discrete cost-to-go computed directly from the recorded substeps.
  const SpatialGrid g(1, 1.0);
  SivParams pr{0.5, 0.3, 0, 0.2, 0, 0, 0, 0, 0, 0, 0, 0, {}};  // b=0.3, mu=0.2
  const std::vector<SivParams> regimes{pr};
  CostParams cost;
  StepConfig step;
  step.dt = 0.005;
  step.t_final = 2.0;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 1;
  const double u1 = 0.3, u2 = 0.1;
  const PolicyFn on_policy = [&](double, double, double, double, int) {
    return std::array<double, 2>{u1, u2};
  };

  IrlDataset merged;
  std::vector<std::array<double, 3>> initials{{0.2, 0.1, 0.3}, {1.5, 0.6, 0.2},
                                              {0.8, 1.2, 1.4}, {0.1, 0.9, 0.8},
                                              {1.9, 0.3, 1.1}, {0.5, 1.8, 0.6},
                                              {1.2, 1.0, 1.9}, {0.9, 0.2, 0.1},
                                              {1.7, 1.5, 0.5}, {0.3, 0.7, 1.6},
                                              {1.1, 0.4, 0.9}, {0.6, 1.3, 0.2}};
  for (const auto& x0 : initials) {
    const IrlDataset ds =
        collect_transitions(constant_behavior(u1, u2), regimes, one_state(),
                            FieldState(g, x0[0], x0[1], x0[2]), step, irl, cost);
    merged.windows.insert(merged.windows.end(), ds.windows.begin(), ds.windows.end());
    merged.terminals.insert(merged.terminals.end(), ds.terminals.begin(), ds.terminals.end());
    merged.dt = ds.dt;
    merged.delta = ds.delta;
    merged.t_final = ds.t_final;
  }

  const BasisSpec basis = BasisSpec::uniform(step.t_final, 17);
  const LeSolution le = solve_integral_le(merged, on_policy, basis, 1e-10, cost, regimes);

  // cost-to-go oracle per path: suffix sums of the LE-convention running cost
  const size_t windows_per_path = merged.windows.size() / initials.size();
  for (size_t path = 0; path < initials.size(); ++path) {
    const size_t base = path * windows_per_path;
    double togo = merged.terminals[path].second;
    std::vector<double> suffix(windows_per_path + 1, 0.0);
    suffix[windows_per_path] = togo;
    for (size_t w = windows_per_path; w-- > 0;) {
      const TransitionWindow& win = merged.windows[base + w];
      double window_cost = win.state_cost;
      for (const SubStep& s : win.steps)
        window_cost += (cost.tau1 * s.u1 * s.u1 + cost.tau2 * s.u2 * s.u2) * merged.dt;
      suffix[w] = suffix[w + 1] + window_cost;
    }
    for (size_t w = 0; w < windows_per_path; w += 4) {
      const TransitionWindow& win = merged.windows[base + w];
      const double fitted = le.value.eval(win.t0, win.x0[0], win.x0[1], win.x0[2]);
      REQUIRE(fitted == Catch::Approx(suffix[w]).margin(1e-3));
    }
  }
}

TEST_CASE("duplicated dataset rows leave the solution unchanged") {
  const SpatialGrid g(1, 1.0);
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  step.rng_seed = 4;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 60;
  const std::vector<SivParams> regimes{regime1_params()};
  IrlDataset ds = collect_transitions(uniform_behavior(), regimes, one_state(),
                                      FieldState(g, 0.6, 0.1, 1.0), step, irl, cost, 2);
  const BasisSpec basis = BasisSpec::uniform(step.t_final, 5);
  const LeSolution once = solve_integral_le(ds, zero_policy(), basis, 1e-10, cost, regimes);

  IrlDataset doubled = ds;
  doubled.windows.insert(doubled.windows.end(), ds.windows.begin(), ds.windows.end());
  doubled.terminals.insert(doubled.terminals.end(), ds.terminals.begin(), ds.terminals.end());
  const LeSolution twice = solve_integral_le(doubled, zero_policy(), basis, 1e-10, cost, regimes);
  REQUIRE((once.value.coeffs - twice.value.coeffs).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("degenerate dataset raises an excitation error naming directions") {
  const SpatialGrid g(1, 1.0);
  SivParams pr = regime1_params();
  pr.sigma = 0.0;
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 1;  // a single noise-free path cannot excite 10 monomials
  const IrlDataset ds = collect_transitions(constant_behavior(0.2, 0.2), {pr}, one_state(),
                                            FieldState(g, 0.6, 0.1, 1.0), step, irl, cost);
  const BasisSpec basis = BasisSpec::uniform(step.t_final, 11);
  REQUIRE_THROWS_AS(solve_integral_le(ds, zero_policy(), basis, 1e-8, cost, {pr}),
                    ExcitationError);
  try {
    solve_integral_le(ds, zero_policy(), basis, 1e-8, cost, {pr});
  } catch (const ExcitationError& e) {
    REQUIRE(std::string(e.what()).find("@t=") != std::string::npos);
  }
}

TEST_CASE("policy iteration: single iteration history") {
  const SpatialGrid g(1, 1.0);
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  step.rng_seed = 17;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.i_max = 1;
  irl.n_paths = 50;
  irl.n_eval_paths = 20;
  irl.n_knots = 5;
  const auto history =
      irl_policy_iteration(FieldState(g, 0.6, 0.1, 1.0), {regime1_params()}, one_state(),
                           CostParams{}, step, irl, biased_uniform_behavior(), 2);
  REQUIRE(history.size() == 1);
  REQUIRE(std::isfinite(history[0].j_mean));
}

TEST_CASE("policy iteration: monotone values, feasible policies, fixed point") {
  const SpatialGrid g(1, 1.0);
  const FieldState init(g, 0.6, 0.1, 1.0);
  const std::vector<SivParams> regimes{regime1_params()};
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 2.0;
  step.rng_seed = 23;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.i_max = 5;
  irl.n_paths = 150;
  irl.n_eval_paths = 60;
  irl.n_knots = 6;
  const auto history = irl_policy_iteration(init, regimes, one_state(), cost, step, irl,
                                            biased_uniform_behavior(), 2);
  REQUIRE(history.size() == 5);

  for (size_t i = 1; i < history.size(); ++i)
    REQUIRE(history[i].mean_probe_value <=
            history[i - 1].mean_probe_value + history[i - 1].fit_std_error);

  const ProbeSet probes = make_probe_set(50, step.t_final, 99);
  for (const auto& it : history) {
    const PolicyFn policy = value_policy(it.value, cost, regimes);
    for (const auto& x : probes.points)
      for (double t : probes.times) {
        const auto u = policy(t, x[0], x[1], x[2], 0);
        REQUIRE(u[0] >= 0.0);
        REQUIRE(u[0] <= 1.0);
        REQUIRE(u[1] >= 0.0);
        REQUIRE(u[1] <= 1.0);
      }
  }

  // improved policy should not be worse than doing nothing
  const auto j_zero = policy_objective(zero_policy(), init, regimes, one_state(), step, cost,
                                       irl.n_eval_paths, 2);
  REQUIRE(history.back().j_mean <=
          j_zero.mean + 2.0 * (j_zero.std_error + history.back().j_std_error));

  // near the fixed point a refit with the converged policy moves V very little
  const PolicyFn final_policy = value_policy(history.back().value, cost, regimes);
  const IrlDataset ds = collect_transitions(biased_uniform_behavior(), regimes, one_state(), init,
                                            step, irl, cost, 2);
  const BasisSpec basis = BasisSpec::uniform(step.t_final, irl.n_knots);
  const LeSolution refit = solve_integral_le(ds, final_policy, basis, irl.ridge, cost, regimes);
  const double probe_refit = mean_probe_value(refit.value, probes);
  const double probe_final = mean_probe_value(history.back().value, probes);
  REQUIRE(std::abs(probe_refit - probe_final) <=
          3.0 * (refit.fit_std_error + history.back().fit_std_error) + 1e-6);
}

TEST_CASE("terminal slice reproduces the terminal cost on sampled states") {
  const SpatialGrid g(1, 1.0);
  const FieldState init(g, 0.6, 0.1, 1.0);
  const std::vector<SivParams> regimes{regime1_params()};
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 1.0;
  step.rng_seed = 29;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 100;
  irl.n_knots = 5;
  const IrlDataset ds = collect_transitions(uniform_behavior(), regimes, one_state(), init, step,
                                            irl, cost, 2);
  const BasisSpec basis = BasisSpec::uniform(step.t_final, irl.n_knots);
  const LeSolution le = solve_integral_le(ds, zero_policy(), basis, irl.ridge, cost, regimes);
  for (const auto& [x, phi] : ds.terminals) {
    const double v = le.value.eval(step.t_final, x[0], x[1], x[2]);
    REQUIRE(v == Catch::Approx(phi).margin(std::max(0.05, 3.0 * le.fit_std_error)));
  }
}

TEST_CASE("off-policy consistency: the improved policy ignores the behavior") {
  const SpatialGrid g(1, 1.0);
  const FieldState init(g, 0.6, 0.1, 1.0);
  const std::vector<SivParams> regimes{regime1_params()};
  CostParams cost;
  StepConfig step;
  step.dt = 0.01;
  step.t_final = 2.0;
  step.rng_seed = 37;
  IrlConfig irl;
  irl.delta = 0.1;
  irl.n_paths = 200;
  irl.n_knots = 6;
  const BasisSpec basis = BasisSpec::uniform(step.t_final, irl.n_knots);

  const IrlDataset ds_a = collect_transitions(biased_uniform_behavior(), regimes, one_state(),
                                              init, step, irl, cost, 2);
  StepConfig step_b = step;
  step_b.rng_seed = 38;
  const IrlDataset ds_b =
      collect_transitions(biased_uniform_behavior({0.1, 0.9}, {0.2, 0.8}, 0.15), regimes,
                          one_state(), init, step_b, irl, cost, 2);

  const LeSolution le_a = solve_integral_le(ds_a, zero_policy(), basis, irl.ridge, cost, regimes);
  const LeSolution le_b = solve_integral_le(ds_b, zero_policy(), basis, irl.ridge, cost, regimes);
  const PolicyFn pa = value_policy(le_a.value, cost, regimes);
  const PolicyFn pb = value_policy(le_b.value, cost, regimes);

  const ProbeSet probes = make_probe_set(60, step.t_final, 55);
  const double eps = 3.0 * (le_a.fit_std_error + le_b.fit_std_error);
  double mean_diff = 0.0;
  int count = 0;
  for (const auto& x : probes.points)
    for (double t : probes.times) {
      const auto ua = pa(t, x[0], x[1], x[2], 0);
      const auto ub = pb(t, x[0], x[1], x[2], 0);
      mean_diff += std::abs(ua[0] - ub[0]) + std::abs(ua[1] - ub[1]);
      count += 2;
    }
  mean_diff /= count;
  REQUIRE(mean_diff <= std::max(0.05, eps));
}
