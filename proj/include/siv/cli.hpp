#pragma once

#include <filesystem>
#include <iostream>

#include "siv/config.hpp"

namespace siv {

struct DispatchOptions {
  int n_threads = 1;
  std::ostream* out = &std::cout;  // table/progress output
};

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name,
                                 const RunConfig& cfg, bool binary = false) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / name, binary ? std::ios::binary : std::ios::out);
  if (!f) throw Error("cannot open output file: " + (dir / name).string());
  if (!binary)
    f << "# config_hash=" << config_hash_hex(cfg) << " seed=" << cfg.stepping.rng_seed << "\n";
  return f;
}

inline nlohmann::json json_header(const RunConfig& cfg) {
  return {{"config_hash", config_hash_hex(cfg)}, {"seed", cfg.stepping.rng_seed}};
}

}  // namespace detail

/// `simulate`: one recorded ensemble; path 0 is exported in full (CSV, binary,
/// regime segments), all paths contribute one summary row.
inline int run_simulate(const RunConfig& cfg, const DispatchOptions& opt) {
  const std::filesystem::path dir(cfg.output_dir);
  const FieldState initial = cfg.initial_state();
  std::vector<std::array<double, 4>> summary(static_cast<size_t>(cfg.n_paths));
  std::vector<long> clamps(static_cast<size_t>(cfg.n_paths));

  TrajectoryRecord first;
  parallel_for(cfg.n_paths, opt.n_threads, [&](int j) {
    StepConfig pc = cfg.stepping;
    pc.rng_seed = derive_seed(cfg.stepping.rng_seed, static_cast<std::uint64_t>(j));
    TrajectoryRecord rec =
        simulate_path(initial, nullptr, cfg.regimes, cfg.chain, pc, cfg.initial_regime);
    const FieldState& last = rec.states.back();
    summary[static_cast<size_t>(j)] = {spatial_mean(last.s), spatial_mean(last.i),
                                       spatial_mean(last.v), last.total_mass()};
    clamps[static_cast<size_t>(j)] = rec.clamp_count;
    if (j == 0) first = std::move(rec);
  });

  {
    auto f = detail::open_output(dir, "trajectory.csv", cfg);
    write_trajectory_csv(f, first);
  }
  {
    auto f = detail::open_output(dir, "regime-path.csv", cfg);
    write_regime_path_csv(f, first.regime_path);
  }
  {
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "trajectory.bin", std::ios::binary);
    write_trajectory_binary(f, first);
  }
  {
    auto f = detail::open_output(dir, "ensemble-summary.csv", cfg);
    f << "path,S_mean,I_mean,V_mean,total_mass,clamped_cells\n";
    for (size_t j = 0; j < summary.size(); ++j)
      f << j << ',' << fmt17(summary[j][0]) << ',' << fmt17(summary[j][1]) << ','
        << fmt17(summary[j][2]) << ',' << fmt17(summary[j][3]) << ',' << clamps[j] << '\n';
  }
  *opt.out << "simulate: " << cfg.n_paths << " paths, t_final=" << cfg.stepping.t_final
           << ", outputs in " << dir.string() << "\n";
  return 0;
}

/// `spectral`: stationary distribution, eta_p over a p-grid on (0, p0], p0.
inline int run_spectral(const RunConfig& cfg, const DispatchOptions& opt) {
  const Eigen::VectorXd rho = Eigen::Map<const Eigen::VectorXd>(
      cfg.spectral.rho.data(), static_cast<Eigen::Index>(cfg.spectral.rho.size()));
  const Eigen::VectorXd pi = stationary_distribution(cfg.chain);
  const double p0 = p0_threshold(cfg.chain, rho);

  nlohmann::json j = detail::json_header(cfg);
  j["stationary_distribution"] = std::vector<double>(pi.data(), pi.data() + pi.size());
  j["p0"] = p0;
  j["pi_rho_sum"] = pi.dot(rho);

  std::ostream& os = *opt.out;
  os << "stationary distribution pi:";
  for (int i = 0; i < pi.size(); ++i) os << ' ' << fmt17(pi(i));
  os << "\np0 = " << fmt17(p0) << "\n";
  os << "p, eta_p, mixing (sum pi_i rho_i < 0)\n";
  std::vector<nlohmann::json> table;
  for (int k = 1; k <= cfg.spectral.p_grid; ++k) {
    const double p = p0 * k / cfg.spectral.p_grid;
    const SpectralReport rep = spectral_report(cfg.chain, rho, p);
    os << fmt17(p) << ", " << fmt17(rep.eta_p) << ", " << (rep.mixing_condition ? "yes" : "no")
       << "\n";
    table.push_back({{"p", p}, {"eta_p", rep.eta_p}, {"eta_positive", rep.eta_positive}});
  }
  j["eta_table"] = table;

  auto f = detail::open_output(std::filesystem::path(cfg.output_dir), "spectral.json", cfg,
                               /*binary=*/true);
  f << j.dump(2) << '\n';
  return 0;
}

/// `control`: forward-backward sweep; writes the per-iteration history and the
/// final control fields.
inline int run_control(const RunConfig& cfg, const DispatchOptions& opt) {
  const ControlSolution sol =
      forward_backward_sweep(cfg.initial_state(), cfg.regimes, cfg.chain, cfg.cost, cfg.stepping,
                             cfg.sweep, cfg.control_paths, opt.n_threads, cfg.initial_regime);
  const std::filesystem::path dir(cfg.output_dir);
  {
    auto f = detail::open_output(dir, "iter-history.csv", cfg);
    f << "iter,J,stderr,control_change\n";
    for (const IterRecord& r : sol.history)
      f << r.iter << ',' << fmt17(r.objective) << ',' << fmt17(r.std_error) << ','
        << fmt17(r.control_change) << '\n';
  }
  {
    auto f = detail::open_output(dir, "control-field.csv", cfg);
    f << "t,x,u1,u2\n";
    const double dt = cfg.stepping.dt;
    for (size_t k = 0; k < sol.control.size(); ++k) {
      const ControlField& u = sol.control[k];
      for (int c = 0; c < cfg.grid.n_cells; ++c)
        f << fmt17(static_cast<double>(k) * dt) << ',' << fmt17(cfg.grid.cell_center(c)) << ','
          << fmt17(u.u1[c]) << ',' << fmt17(u.u2[c]) << '\n';
    }
  }
  *opt.out << "control: J = " << sol.objective << " +- " << sol.std_error << " after "
           << sol.iterations << " iterations, converged=" << (sol.converged ? "yes" : "no")
           << "\n";
  return sol.converged ? 0 : 1;
}

/// `irl`: off-policy policy iteration on the homogeneous state.
inline int run_irl(const RunConfig& cfg, const DispatchOptions& opt) {
  StepConfig step = cfg.stepping;
  step.t_final = cfg.irl_t_final;
  IrlConfig irl = cfg.irl;
  irl.u1_bounds = cfg.sweep.u1_bounds;
  irl.u2_bounds = cfg.sweep.u2_bounds;
  const auto history = irl_policy_iteration(
      cfg.initial_state(), cfg.regimes, cfg.chain, cfg.cost, step, irl,
      biased_uniform_behavior(irl.u1_bounds, irl.u2_bounds), opt.n_threads, cfg.initial_regime);

  const std::filesystem::path dir(cfg.output_dir);
  {
    auto f = detail::open_output(dir, "irl-history.csv", cfg);
    f << "iter,mean_probe_V,J,policy_change\n";
    for (size_t i = 0; i < history.size(); ++i)
      f << (i + 1) << ',' << fmt17(history[i].mean_probe_value) << ','
        << fmt17(history[i].j_mean) << ',' << fmt17(history[i].policy_change) << '\n';
  }
  {
    nlohmann::json j = detail::json_header(cfg);
    const ValueApprox& value = history.back().value;
    j["time_knots"] = value.basis.time_knots;
    std::vector<std::string> names;
    for (int m = 0; m < BasisSpec::n_monomials; ++m) names.emplace_back(BasisSpec::monomial_name(m));
    j["monomials"] = names;
    std::vector<std::vector<double>> coeffs;
    for (int k = 0; k < value.basis.n_knots(); ++k) {
      std::vector<double> row;
      for (int m = 0; m < BasisSpec::n_monomials; ++m) row.push_back(value.coeffs(k, m));
      coeffs.push_back(row);
    }
    j["coefficients"] = coeffs;
    j["fit_std_error"] = history.back().fit_std_error;
    auto f = detail::open_output(dir, "value-coefficients.json", cfg, /*binary=*/true);
    f << j.dump(2) << '\n';
  }
  *opt.out << "irl: " << history.size() << " iterations, final J = " << history.back().j_mean
           << " +- " << history.back().j_std_error << "\n";
  return 0;
}

/// `measure`: two-ensemble reproduction run, density curves and the
/// ergodicity audit.
inline int run_measure(const RunConfig& cfg, const DispatchOptions& opt) {
  std::vector<SivParams> regimes = cfg.regimes;
  for (SivParams& pr : regimes) {
    if (cfg.measure.beta_override) pr.beta = *cfg.measure.beta_override;
    if (cfg.measure.sigma_override) pr.sigma = *cfg.measure.sigma_override;
  }
  std::vector<double> checkpoints = cfg.measure.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  StepConfig step = cfg.stepping;
  step.t_final = checkpoints.back();

  // common random numbers across the two ensembles: path j sees the same
  // regime path and noise draws in both, so the cross distance measures the
  // pathwise contraction of the coupled copies
  const auto& a0 = cfg.measure.initial_a;
  const auto& b0 = cfg.measure.initial_b;
  const EnsembleCheckpoints ens_a = run_checkpoint_ensemble(
      FieldState(cfg.grid, a0[0], a0[1], a0[2]), nullptr, regimes, cfg.chain, step, checkpoints,
      cfg.measure.n_paths, opt.n_threads, cfg.initial_regime);
  const EnsembleCheckpoints ens_b = run_checkpoint_ensemble(
      FieldState(cfg.grid, b0[0], b0[1], b0[2]), nullptr, regimes, cfg.chain, step, checkpoints,
      cfg.measure.n_paths, opt.n_threads, cfg.initial_regime);

  const ErgodicityReport rep = ergodicity_audit(ens_a, ens_b, cfg.measure.p);

  const std::filesystem::path dir(cfg.output_dir);
  {
    auto f = detail::open_output(dir, "density.csv", cfg);
    f << "component,t,x,density\n";
    const char comps[3] = {'S', 'I', 'V'};
    for (size_t t = 0; t < checkpoints.size(); ++t)
      for (char c : comps) {
        const DensityCurve curve = kde(ens_a.marginal(t, c), cfg.measure.bandwidth);
        for (size_t g = 0; g < curve.grid.size(); ++g)
          f << c << ',' << fmt17(checkpoints[t]) << ',' << fmt17(curve.grid[g]) << ','
            << fmt17(curve.density[g]) << '\n';
      }
  }
  {
    nlohmann::json j = detail::json_header(cfg);
    j["p"] = rep.p;
    j["checkpoints"] = rep.checkpoint_times;
    auto arr3 = [](const std::array<double, 3>& a) {
      return std::vector<double>{a[0], a[1], a[2]};
    };
    std::vector<nlohmann::json> consecutive;
    for (size_t t = 0; t < rep.consecutive.size(); ++t)
      consecutive.push_back({{"from", rep.checkpoint_times[t]},
                             {"to", rep.checkpoint_times[t + 1]},
                             {"w_distance", arr3(rep.consecutive[t])}});
    j["consecutive"] = consecutive;
    std::vector<nlohmann::json> cross;
    for (size_t t = 0; t < rep.cross.size(); ++t)
      cross.push_back({{"t", rep.checkpoint_times[t]},
                       {"w_distance", arr3(rep.cross[t])},
                       {"total", rep.cross_total[t]}});
    j["cross"] = cross;
    j["fitted_decay_rate"] = rep.fitted_decay_rate;
    j["moment_bound"] = rep.moment_bound;
    j["sup_moment"] = rep.sup_moment;
    std::vector<nlohmann::json> spread;
    for (size_t t = 0; t < rep.spread.size(); ++t)
      spread.push_back({{"t", rep.checkpoint_times[t]}, {"std_dev", arr3(rep.spread[t])}});
    j["ensemble_spread"] = spread;
    j["clamped_cells"] = {{"ensemble_a", ens_a.clamp_count}, {"ensemble_b", ens_b.clamp_count}};
    auto f = detail::open_output(dir, "audit.json", cfg, /*binary=*/true);
    f << j.dump(2) << '\n';
  }
  *opt.out << "measure: " << cfg.measure.n_paths << " paths x2 ensembles, decay rate "
           << rep.fitted_decay_rate << ", outputs in " << dir.string() << "\n";
  return 0;
}

inline int dispatch(const std::string& subcommand, const RunConfig& cfg,
                    const DispatchOptions& opt = {}) {
  try {
    if (subcommand == "simulate") return run_simulate(cfg, opt);
    if (subcommand == "spectral") return run_spectral(cfg, opt);
    if (subcommand == "control") return run_control(cfg, opt);
    if (subcommand == "irl") return run_irl(cfg, opt);
    if (subcommand == "measure") return run_measure(cfg, opt);
  } catch (const Error& e) {
    nlohmann::json err{{"error", "runtime"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  std::cerr << "unknown subcommand '" << subcommand
            << "'; expected simulate | control | irl | measure | spectral\n";
  return 2;
}

}  // namespace siv
