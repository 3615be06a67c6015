#pragma once

#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "siv/control.hpp"
#include "siv/irl.hpp"
#include "siv/measure.hpp"

namespace siv {

/// Reproduction-run defaults follow the density-figure setup: transmission
/// and noise overridden to beta = 0.2, sigma = 0.05 (these also keep the
/// explicit scheme tail-stable at the endemic mass b/mu = 100, where the
/// baseline coefficient pair is not). Both initial conditions sit at mass
/// 100 so the slow mass mode is quiet by the first checkpoint; they differ
/// in the I-vs-V composition, the observable contraction channel.
struct MeasureConfig {
  std::vector<double> checkpoints{5.0, 25.0, 28.0, 30.0};
  int n_paths = 10000;
  double p = 1.0;
  std::array<double, 3> initial_a{0.2, 98.7, 1.1};
  std::array<double, 3> initial_b{0.2, 88.7, 11.1};
  std::optional<double> beta_override = 0.2;   // figure-reproduction overrides applied
  std::optional<double> sigma_override = 0.05; // to every regime; null disables
  double bandwidth = 0.0;                      // 0 = Silverman
};

struct SpectralConfig {
  std::vector<double> rho{-1.0, -1.0};
  int p_grid = 20;
};

struct RunConfig {
  std::vector<SivParams> regimes = default_regimes();
  RegimeChain chain{[] {
    Eigen::MatrixXd q(2, 2);
    q << -5.5, 5.5, 8.0, -8.0;
    return q;
  }()};
  SpatialGrid grid{1, 1.0};
  StepConfig stepping;
  int n_paths = 1000;
  std::array<double, 3> initial{0.6, 0.1, 1.0};
  int initial_regime = 0;  // 0-based
  CostParams cost;
  SweepConfig sweep;
  int control_paths = 200;
  IrlConfig irl;
  double irl_t_final = 5.0;
  MeasureConfig measure;
  SpectralConfig spectral;
  std::string output_dir = "out";

  FieldState initial_state() const {
    return FieldState(grid, initial[0], initial[1], initial[2]);
  }
};

namespace detail {

inline void get_double(const nlohmann::json& j, const char* key, double& out) {
  if (j.contains(key)) out = j.at(key).get<double>();
}
inline void get_int(const nlohmann::json& j, const char* key, int& out) {
  if (j.contains(key)) out = j.at(key).get<int>();
}
inline void get_bool(const nlohmann::json& j, const char* key, bool& out) {
  if (j.contains(key)) out = j.at(key).get<bool>();
}

inline SivParams parse_regime(const nlohmann::json& j, const SivParams& defaults) {
  SivParams p = defaults;
  get_double(j, "p", p.p);
  get_double(j, "b", p.b);
  get_double(j, "beta", p.beta);
  get_double(j, "mu", p.mu);
  get_double(j, "alpha", p.alpha);
  get_double(j, "e", p.e);
  get_double(j, "sigma", p.sigma);
  get_double(j, "m", p.m);
  get_double(j, "eta", p.eta);
  get_double(j, "d1", p.d1);
  get_double(j, "d2", p.d2);
  get_double(j, "d3", p.d3);
  return p;
}

}  // namespace detail

/// Parses a config JSON document over the built-in defaults (the two-regime
/// coefficient sets and the 2x2 generator). Does not validate; see
/// validate_config.
inline RunConfig parse_config(const nlohmann::json& j) {
  RunConfig cfg;
  if (j.contains("regime")) {
    const auto& r = j.at("regime");
    std::vector<SivParams> regimes;
    if (r.is_array()) {
      for (size_t i = 0; i < r.size(); ++i) {
        const SivParams base = i < cfg.regimes.size() ? cfg.regimes[i] : cfg.regimes.back();
        regimes.push_back(detail::parse_regime(r[i], base));
      }
    } else {
      for (int i = 1; r.contains(std::to_string(i)); ++i) {
        const SivParams base = static_cast<size_t>(i - 1) < cfg.regimes.size()
                                   ? cfg.regimes[static_cast<size_t>(i - 1)]
                                   : cfg.regimes.back();
        regimes.push_back(detail::parse_regime(r.at(std::to_string(i)), base));
      }
    }
    if (!regimes.empty()) cfg.regimes = std::move(regimes);
  }
  if (j.contains("chain") && j.at("chain").contains("generator")) {
    const auto& rows = j.at("chain").at("generator");
    const int n = static_cast<int>(rows.size());
    Eigen::MatrixXd q(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) q(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)].get<double>();
    cfg.chain.generator = q;
  }
  if (j.contains("grid")) {
    detail::get_int(j.at("grid"), "n_cells", cfg.grid.n_cells);
    detail::get_double(j.at("grid"), "length", cfg.grid.length);
  }
  if (j.contains("stepping")) {
    const auto& s = j.at("stepping");
    detail::get_double(s, "dt", cfg.stepping.dt);
    detail::get_double(s, "t_final", cfg.stepping.t_final);
    if (s.contains("seed")) cfg.stepping.rng_seed = s.at("seed").get<std::uint64_t>();
    detail::get_int(s, "n_paths", cfg.n_paths);
    detail::get_bool(s, "clamp_negative", cfg.stepping.clamp_negative);
    detail::get_bool(s, "shared_zeta", cfg.stepping.shared_zeta);
  }
  if (j.contains("initial")) {
    const auto& s = j.at("initial");
    detail::get_double(s, "s", cfg.initial[0]);
    detail::get_double(s, "i", cfg.initial[1]);
    detail::get_double(s, "v", cfg.initial[2]);
    int regime = cfg.initial_regime + 1;
    detail::get_int(s, "regime", regime);
    cfg.initial_regime = regime - 1;
  }
  if (j.contains("cost")) {
    const auto& c = j.at("cost");
    detail::get_double(c, "a1", cfg.cost.a1);
    detail::get_double(c, "a2", cfg.cost.a2);
    detail::get_double(c, "tau1", cfg.cost.tau1);
    detail::get_double(c, "tau2", cfg.cost.tau2);
    detail::get_double(c, "terminal_weight", cfg.cost.terminal_weight);
  }
  if (j.contains("control")) {
    const auto& c = j.at("control");
    detail::get_int(c, "max_iters", cfg.sweep.max_iters);
    detail::get_double(c, "relax", cfg.sweep.relax);
    detail::get_double(c, "tol", cfg.sweep.tol);
    detail::get_int(c, "n_paths", cfg.control_paths);
    if (c.contains("u1_bounds"))
      cfg.sweep.u1_bounds = {c.at("u1_bounds")[0].get<double>(), c.at("u1_bounds")[1].get<double>()};
    if (c.contains("u2_bounds"))
      cfg.sweep.u2_bounds = {c.at("u2_bounds")[0].get<double>(), c.at("u2_bounds")[1].get<double>()};
  }
  if (j.contains("irl")) {
    const auto& c = j.at("irl");
    detail::get_double(c, "delta", cfg.irl.delta);
    detail::get_int(c, "i_max", cfg.irl.i_max);
    detail::get_double(c, "ridge", cfg.irl.ridge);
    detail::get_int(c, "n_paths", cfg.irl.n_paths);
    detail::get_int(c, "n_eval_paths", cfg.irl.n_eval_paths);
    detail::get_int(c, "n_knots", cfg.irl.n_knots);
    detail::get_double(c, "t_final", cfg.irl_t_final);
  }
  if (j.contains("measure")) {
    const auto& c = j.at("measure");
    if (c.contains("checkpoints"))
      cfg.measure.checkpoints = c.at("checkpoints").get<std::vector<double>>();
    detail::get_int(c, "n_paths", cfg.measure.n_paths);
    detail::get_double(c, "p", cfg.measure.p);
    if (c.contains("initial_a")) {
      const auto& a = c.at("initial_a");
      cfg.measure.initial_a = {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
    }
    if (c.contains("initial_b")) {
      const auto& b = c.at("initial_b");
      cfg.measure.initial_b = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>()};
    }
    if (c.contains("beta_override"))
      cfg.measure.beta_override = c.at("beta_override").is_null()
                                      ? std::nullopt
                                      : std::optional<double>(c.at("beta_override").get<double>());
    if (c.contains("sigma_override"))
      cfg.measure.sigma_override =
          c.at("sigma_override").is_null()
              ? std::nullopt
              : std::optional<double>(c.at("sigma_override").get<double>());
    detail::get_double(c, "bandwidth", cfg.measure.bandwidth);
  }
  if (j.contains("spectral")) {
    const auto& c = j.at("spectral");
    if (c.contains("rho")) cfg.spectral.rho = c.at("rho").get<std::vector<double>>();
    detail::get_int(c, "p_grid", cfg.spectral.p_grid);
  }
  if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
  return cfg;
}

/// Every module precondition checked up front; violations are aggregated into
/// one error listing all of them.
inline void validate_config(const RunConfig& cfg) {
  std::vector<std::string> errors;
  auto guard = [&errors](const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      errors.emplace_back(e.what());
    }
  };
  for (size_t i = 0; i < cfg.regimes.size(); ++i)
    guard([&] {
      try {
        cfg.regimes[i].validate();
      } catch (const ValidationError& e) {
        throw ValidationError("regime." + std::to_string(i + 1) + ": " + e.what());
      }
    });
  guard([&] { cfg.chain.validate(); });
  guard([&] { cfg.grid.validate(); });
  guard([&] {
    if (!(cfg.stepping.dt > 0.0)) throw ValidationError("stepping.dt must be > 0");
    cfg.stepping.validate(cfg.grid, cfg.regimes);
  });
  guard([&] {
    if (cfg.n_paths < 1) throw ValidationError("stepping.n_paths must be >= 1");
  });
  guard([&] {
    if (cfg.initial_regime < 0 || cfg.initial_regime >= static_cast<int>(cfg.regimes.size()))
      throw ValidationError("initial.regime out of range");
    for (double x : cfg.initial)
      if (!(x >= 0.0)) throw ValidationError("initial state must be nonnegative");
  });
  guard([&] {
    if (!(cfg.cost.a1 > 0.0 && cfg.cost.a2 > 0.0))
      throw ValidationError("cost.a1 and cost.a2 must be > 0");
    cfg.cost.validate();
  });
  guard([&] { cfg.sweep.validate(); });
  guard([&] {
    StepConfig irl_step = cfg.stepping;
    irl_step.t_final = cfg.irl_t_final;
    cfg.irl.validate(irl_step);
  });
  guard([&] {
    if (cfg.measure.checkpoints.size() < 2)
      throw ValidationError("measure.checkpoints needs at least two times");
    if (!(cfg.measure.p > 0.0 && cfg.measure.p <= 1.0))
      throw ValidationError("measure.p must lie in (0,1]");
    if (cfg.measure.n_paths < 2) throw ValidationError("measure.n_paths must be >= 2");
  });
  guard([&] {
    if (cfg.spectral.rho.size() != static_cast<size_t>(cfg.chain.n_states()))
      throw ValidationError("spectral.rho length must match the number of regimes");
    if (cfg.spectral.p_grid < 1) throw ValidationError("spectral.p_grid must be >= 1");
  });
  if (!errors.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& e : errors) msg += "\n  - " + e;
    throw ValidationError(msg);
  }
}

inline RunConfig load_config_json(const nlohmann::json& j) {
  RunConfig cfg;
  try {
    cfg = parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config field error: ") + e.what());
  }
  validate_config(cfg);
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config parse error in " + path + ": " + e.what());
  }
  return load_config_json(j);
}

/// Canonical serialization of the effective config (defaults applied); the
/// hash of this string identifies a run in every output header.
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  for (size_t i = 0; i < cfg.regimes.size(); ++i) {
    const SivParams& p = cfg.regimes[i];
    j["regime"][std::to_string(i + 1)] = {
        {"p", p.p},         {"b", p.b},   {"beta", p.beta}, {"mu", p.mu}, {"alpha", p.alpha},
        {"e", p.e},         {"sigma", p.sigma}, {"m", p.m}, {"eta", p.eta}, {"d1", p.d1},
        {"d2", p.d2},       {"d3", p.d3}};
  }
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < cfg.chain.n_states(); ++r) {
    std::vector<double> row;
    for (int c = 0; c < cfg.chain.n_states(); ++c) row.push_back(cfg.chain.generator(r, c));
    rows.push_back(row);
  }
  j["chain"]["generator"] = rows;
  j["grid"] = {{"n_cells", cfg.grid.n_cells}, {"length", cfg.grid.length}};
  j["stepping"] = {{"dt", cfg.stepping.dt},
                   {"t_final", cfg.stepping.t_final},
                   {"seed", cfg.stepping.rng_seed},
                   {"n_paths", cfg.n_paths},
                   {"clamp_negative", cfg.stepping.clamp_negative},
                   {"shared_zeta", cfg.stepping.shared_zeta}};
  j["initial"] = {{"s", cfg.initial[0]},
                  {"i", cfg.initial[1]},
                  {"v", cfg.initial[2]},
                  {"regime", cfg.initial_regime + 1}};
  j["cost"] = {{"a1", cfg.cost.a1},
               {"a2", cfg.cost.a2},
               {"tau1", cfg.cost.tau1},
               {"tau2", cfg.cost.tau2},
               {"terminal_weight", cfg.cost.terminal_weight}};
  j["control"] = {{"max_iters", cfg.sweep.max_iters},
                  {"relax", cfg.sweep.relax},
                  {"tol", cfg.sweep.tol},
                  {"n_paths", cfg.control_paths},
                  {"u1_bounds", {cfg.sweep.u1_bounds[0], cfg.sweep.u1_bounds[1]}},
                  {"u2_bounds", {cfg.sweep.u2_bounds[0], cfg.sweep.u2_bounds[1]}}};
  j["irl"] = {{"delta", cfg.irl.delta},     {"i_max", cfg.irl.i_max},
              {"ridge", cfg.irl.ridge},     {"n_paths", cfg.irl.n_paths},
              {"n_eval_paths", cfg.irl.n_eval_paths}, {"n_knots", cfg.irl.n_knots},
              {"t_final", cfg.irl_t_final}};
  j["measure"] = {{"checkpoints", cfg.measure.checkpoints},
                  {"n_paths", cfg.measure.n_paths},
                  {"p", cfg.measure.p},
                  {"initial_a", {cfg.measure.initial_a[0], cfg.measure.initial_a[1],
                                 cfg.measure.initial_a[2]}},
                  {"initial_b", {cfg.measure.initial_b[0], cfg.measure.initial_b[1],
                                 cfg.measure.initial_b[2]}},
                  {"bandwidth", cfg.measure.bandwidth}};
  if (cfg.measure.beta_override) j["measure"]["beta_override"] = *cfg.measure.beta_override;
  if (cfg.measure.sigma_override) j["measure"]["sigma_override"] = *cfg.measure.sigma_override;
  j["spectral"] = {{"rho", cfg.spectral.rho}, {"p_grid", cfg.spectral.p_grid}};
  // output_dir identifies where results land, not what is computed, so it
  // stays out of the canonical dump (and hence out of the config hash)
  return j;
}

/// FNV-1a over the canonical dump: stable across runs of the same build.
inline std::uint64_t config_hash(const RunConfig& cfg) {
  const std::string s = config_to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash_hex(const RunConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  return buf;
}

}  // namespace siv
