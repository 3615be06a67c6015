#pragma once

#include <algorithm>
#include <map>
#include <string>

#include "siv/integrator.hpp"

namespace siv {

/// One component of the spatially averaged state across the ensemble at a
/// fixed time.
struct EmpiricalMarginal {
  std::vector<double> samples;
  double time = 0.0;
  char component = 'S';  // 'S', 'I' or 'V'

  void validate() const {
    if (samples.empty()) throw ValidationError("empirical marginal must be nonempty");
    for (double x : samples)
      if (!std::isfinite(x)) throw ValidationError("empirical marginal has a non-finite sample");
  }
};

struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
};

/// Gaussian-kernel density estimate. Automatic bandwidth is Silverman's rule
/// 1.06 sigma n^{-1/5}; pass an explicit bandwidth for degenerate samples.
inline DensityCurve kde(const EmpiricalMarginal& marginal, double bandwidth = 0.0,
                        int n_grid = 256) {
  marginal.validate();
  const auto& xs = marginal.samples;
  const auto n = static_cast<double>(xs.size());
  double h = bandwidth;
  if (h <= 0.0) {
    if (xs.size() < 2)
      throw ValidationError("automatic bandwidth needs at least two samples");
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd <= 0.0)
      throw ValidationError(
          "samples have zero variance; pass an explicit bandwidth to kde");
    h = 1.06 * sd * std::pow(n, -0.2);
  }
  const double lo = *std::min_element(xs.begin(), xs.end()) - 4.0 * h;
  const double hi = *std::max_element(xs.begin(), xs.end()) + 4.0 * h;
  DensityCurve curve;
  curve.bandwidth = h;
  curve.grid.resize(static_cast<size_t>(n_grid));
  curve.density.resize(static_cast<size_t>(n_grid));
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * M_PI));
  for (int g = 0; g < n_grid; ++g) {
    const double x = lo + (hi - lo) * g / (n_grid - 1);
    double acc = 0.0;
    for (double s : xs) {
      const double z = (x - s) / h;
      acc += std::exp(-0.5 * z * z);
    }
    curve.grid[static_cast<size_t>(g)] = x;
    curve.density[static_cast<size_t>(g)] = norm * acc;
  }
  return curve;
}

/// Trapezoid integral of a density curve (normalization check).
inline double integrate_density(const DensityCurve& c) {
  double acc = 0.0;
  for (size_t g = 1; g < c.grid.size(); ++g)
    acc += 0.5 * (c.density[g] + c.density[g - 1]) * (c.grid[g] - c.grid[g - 1]);
  return acc;
}

/// Empirical W_p on the line via the comonotone (sorted) pairing:
/// mean over sorted pairs of |a_i - b_i|^p. For p = 1 this is the exact
/// optimal-transport cost; for p < 1 it is the comonotone upper-bound
/// surrogate (still a metric on equal-size sample sets). Unequal sizes are
/// matched by interpolating both empirical quantile functions at the
/// midpoint quantiles of the larger size.
inline double wasserstein_1d(const EmpiricalMarginal& a, const EmpiricalMarginal& b, double p) {
  a.validate();
  b.validate();
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("wasserstein exponent p must lie in (0,1]");
  std::vector<double> xs = a.samples, ys = b.samples;
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());

  auto quantile = [](const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size()) - 0.5;
    if (pos <= 0.0) return sorted.front();
    if (pos >= static_cast<double>(sorted.size() - 1)) return sorted.back();
    const auto lo = static_cast<size_t>(pos);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * sorted[lo] + w * sorted[lo + 1];
  };

  const size_t n = std::max(xs.size(), ys.size());
  double acc = 0.0;
  if (xs.size() == ys.size()) {
    for (size_t i = 0; i < n; ++i) acc += std::pow(std::abs(xs[i] - ys[i]), p);
  } else {
    for (size_t i = 0; i < n; ++i) {
      const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      acc += std::pow(std::abs(quantile(xs, q) - quantile(ys, q)), p);
    }
  }
  return acc / static_cast<double>(n);
}

/// d_p((s,i),(s',i')) = sum_k |s_k - s'_k|^p + 1{i != i'} on state x regime.
inline double dp_metric(const std::array<double, 3>& a, int regime_a,
                        const std::array<double, 3>& b, int regime_b, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("metric exponent p must lie in (0,1]");
  double acc = (regime_a != regime_b) ? 1.0 : 0.0;
  for (int k = 0; k < 3; ++k) acc += std::pow(std::abs(a[static_cast<size_t>(k)] -
                                                       b[static_cast<size_t>(k)]), p);
  return acc;
}

/// Spatially averaged ensemble snapshots at the requested checkpoint times.
struct EnsembleCheckpoints {
  std::vector<double> times;
  // snapshots[t][path] = (Sbar, Ibar, Vbar)
  std::vector<std::vector<std::array<double, 3>>> snapshots;
  std::vector<std::vector<int>> regimes;  // regimes[t][path]
  long clamp_count = 0;

  EmpiricalMarginal marginal(size_t t_index, char component) const {
    EmpiricalMarginal m;
    m.time = times[t_index];
    m.component = component;
    const int c = component == 'S' ? 0 : component == 'I' ? 1 : 2;
    m.samples.reserve(snapshots[t_index].size());
    for (const auto& x : snapshots[t_index]) m.samples.push_back(x[static_cast<size_t>(c)]);
    return m;
  }
};

/// Streaming ensemble run that stores only the checkpoint snapshots
/// (10^4-path reproduction runs would not fit in memory as full records).
inline EnsembleCheckpoints run_checkpoint_ensemble(
    const FieldState& initial, const ControlPolicy& policy,
    const std::vector<SivParams>& regimes, const RegimeChain& chain, const StepConfig& cfg,
    const std::vector<double>& checkpoints, int n_paths, int n_threads = 1,
    int initial_regime = 0) {
  if (checkpoints.empty()) throw ValidationError("checkpoint list must be nonempty");
  const SpatialGrid& g = initial.s.grid;
  cfg.validate(g, regimes);
  std::vector<long> check_steps;
  for (double t : checkpoints) {
    const auto step = std::llround(t / cfg.dt);
    if (step < 0 || step > cfg.n_steps())
      throw ValidationError("checkpoint time " + fmt17(t) + " outside [0, t_final]");
    check_steps.push_back(step);
  }

  EnsembleCheckpoints out;
  out.times = checkpoints;
  out.snapshots.assign(checkpoints.size(),
                       std::vector<std::array<double, 3>>(static_cast<size_t>(n_paths)));
  out.regimes.assign(checkpoints.size(), std::vector<int>(static_cast<size_t>(n_paths)));
  std::vector<long> clamp_per_path(static_cast<size_t>(n_paths), 0);

  parallel_for(n_paths, n_threads, [&](int j) {
    const std::uint64_t path_seed = derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(j));
    RegimePath rpath =
        sample_path(chain, initial_regime, cfg.t_final, derive_seed(path_seed, 0));
    Rng noise(derive_seed(path_seed, 1));
    FieldState st = initial;
    st.time = 0.0;
    long clamp = 0;
    const ControlField zero_u(g);
    const int n = cfg.n_steps();
    auto record = [&](long step) {
      for (size_t c = 0; c < check_steps.size(); ++c)
        if (check_steps[c] == step) {
          out.snapshots[c][static_cast<size_t>(j)] = {spatial_mean(st.s), spatial_mean(st.i),
                                                      spatial_mean(st.v)};
          out.regimes[c][static_cast<size_t>(j)] =
              rpath.state_at(std::min(step * cfg.dt, cfg.t_final - 1e-12));
        }
    };
    record(0);
    for (int k = 0; k < n; ++k) {
      const double t = k * cfg.dt;
      const int regime = rpath.state_at(t);
      const ControlField u = policy ? policy(st, t, regime) : zero_u;
      StepDraws z = StepDraws::generate(noise, g.n_cells, cfg.shared_zeta);
      st = milstein_state_step(st, u, regimes[static_cast<size_t>(regime)], cfg.dt, z,
                               cfg.clamp_negative, &clamp);
      record(k + 1);
    }
    clamp_per_path[static_cast<size_t>(j)] = clamp;
  });
  for (long c : clamp_per_path) out.clamp_count += c;
  return out;
}

struct ErgodicityReport {
  double p = 1.0;
  std::vector<double> checkpoint_times;
  // consecutive[t] = per-component W distances between checkpoints t and t+1 of ensemble A
  std::vector<std::array<double, 3>> consecutive;
  // cross[t] = per-component W distances between ensembles A and B at checkpoint t
  std::vector<std::array<double, 3>> cross;
  std::vector<double> cross_total;        // componentwise sum + regime disagreement frequency
  double fitted_decay_rate = 0.0;         // least-squares slope of log(cross_total) vs t
  std::vector<double> moment_bound;       // per checkpoint: mean(|S|^p + |I|^p + |V|^p), ens. A
  double sup_moment = 0.0;
  std::vector<std::array<double, 3>> spread;  // ensemble-A std dev per component per checkpoint
};

/// Empirical invariant-measure audit: (a) consecutive-checkpoint marginal
/// distances (stationarity), (b) cross distances between two ensembles with
/// different initial conditions plus a fitted exponential contraction rate,
/// (c) p-th moment bounds.
inline ErgodicityReport ergodicity_audit(const EnsembleCheckpoints& a,
                                         const EnsembleCheckpoints& b, double p) {
  if (a.times.size() < 2) throw ValidationError("ergodicity audit needs >= 2 checkpoints");
  if (a.times != b.times)
    throw ValidationError("ensembles must share checkpoint times");
  ErgodicityReport rep;
  rep.p = p;
  rep.checkpoint_times = a.times;
  const char comps[3] = {'S', 'I', 'V'};

  for (size_t t = 0; t + 1 < a.times.size(); ++t) {
    std::array<double, 3> d{};
    for (int c = 0; c < 3; ++c)
      d[static_cast<size_t>(c)] =
          wasserstein_1d(a.marginal(t, comps[c]), a.marginal(t + 1, comps[c]), p);
    rep.consecutive.push_back(d);
  }

  for (size_t t = 0; t < a.times.size(); ++t) {
    std::array<double, 3> d{};
    for (int c = 0; c < 3; ++c)
      d[static_cast<size_t>(c)] =
          wasserstein_1d(a.marginal(t, comps[c]), b.marginal(t, comps[c]), p);
    rep.cross.push_back(d);
    double regime_disagreement = 0.0;
    const size_t n_paths = std::min(a.regimes[t].size(), b.regimes[t].size());
    for (size_t j = 0; j < n_paths; ++j)
      if (a.regimes[t][j] != b.regimes[t][j]) regime_disagreement += 1.0;
    regime_disagreement /= static_cast<double>(n_paths);
    rep.cross_total.push_back(d[0] + d[1] + d[2] + regime_disagreement);
  }

  // least-squares fit of log cross_total against t (guard zero distances)
  {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (size_t t = 0; t < rep.cross_total.size(); ++t) {
      if (rep.cross_total[t] <= 0.0) continue;
      const double x = rep.checkpoint_times[t];
      const double y = std::log(rep.cross_total[t]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
    if (n >= 2 && sxx * n - sx * sx > 0.0)
      rep.fitted_decay_rate = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
  }

  for (size_t t = 0; t < a.times.size(); ++t) {
    double acc = 0.0;
    for (const auto& x : a.snapshots[t])
      acc += std::pow(std::abs(x[0]), p) + std::pow(std::abs(x[1]), p) +
             std::pow(std::abs(x[2]), p);
    rep.moment_bound.push_back(acc / static_cast<double>(a.snapshots[t].size()));
  }
  rep.sup_moment = *std::max_element(rep.moment_bound.begin(), rep.moment_bound.end());

  for (size_t t = 0; t < a.times.size(); ++t) {
    std::array<double, 3> sd{};
    for (int c = 0; c < 3; ++c) {
      const auto m = a.marginal(t, comps[c]);
      double mean = 0.0;
      for (double x : m.samples) mean += x;
      mean /= static_cast<double>(m.samples.size());
      double ss = 0.0;
      for (double x : m.samples) ss += (x - mean) * (x - mean);
      sd[static_cast<size_t>(c)] = std::sqrt(ss / std::max<size_t>(1, m.samples.size() - 1));
    }
    rep.spread.push_back(sd);
  }
  return rep;
}

}  // namespace siv
