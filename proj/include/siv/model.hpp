#pragma once

#include <span>
#include <vector>

#include "siv/grid.hpp"

namespace siv {

/// Coefficients of one regime. Scalars per regime; spatial_scale is an
/// optional per-cell multiplier on the reaction terms (empty = homogeneous).
struct SivParams {
  double p = 0.5;      // vaccinated-at-birth fraction
  double b = 4.0;      // birth rate (1/year)
  double beta = 0.02;  // transmission coefficient
  double mu = 0.04;    // natural death rate
  double alpha = 0.001;  // recovery rate
  double e = 0.8;      // vaccine effectiveness
  double sigma = 0.035;  // white-noise intensity
  double m = 0.01;     // cure rate
  double eta = 1.03;   // treatment-delay coefficient
  double d1 = 0.01, d2 = 0.01, d3 = 0.01;  // diffusivities
  std::vector<double> spatial_scale;       // per-cell reaction multiplier

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0)) throw ValidationError(std::string(name) + " must be >= 0");
    };
    nonneg(p, "p");
    nonneg(b, "b");
    nonneg(beta, "beta");
    nonneg(mu, "mu");
    nonneg(alpha, "alpha");
    nonneg(e, "e");
    nonneg(sigma, "sigma");
    nonneg(m, "m");
    nonneg(eta, "eta");
    nonneg(d1, "d1");
    nonneg(d2, "d2");
    nonneg(d3, "d3");
    if (p > 1.0) throw ValidationError("p must lie in [0,1]");
    if (e > 1.0) throw ValidationError("e must lie in [0,1]");
  }

  double max_diffusivity() const { return std::max(d1, std::max(d2, d3)); }
  double scale_at(int cell) const {
    return spatial_scale.empty() ? 1.0 : spatial_scale[static_cast<size_t>(cell)];
  }
};

/// Regime-1 and regime-2 coefficient sets used throughout the numerics.
/// The second per-regime 0.8/0.9 value is read as the vaccine effectiveness e
/// (the source lists alpha twice; see README).
inline SivParams regime1_params() { return SivParams{}; }

inline SivParams regime2_params() {
  SivParams p;
  p.p = 0.6;
  p.b = 5.0;
  p.beta = 0.04;
  p.mu = 0.05;
  p.alpha = 0.002;
  p.e = 0.9;
  p.sigma = 0.036;
  p.m = 0.02;
  p.eta = 1.05;
  return p;
}

inline std::vector<SivParams> default_regimes() { return {regime1_params(), regime2_params()}; }

struct FieldState {
  Field s, i, v;
  double time = 0.0;

  FieldState() = default;
  FieldState(const SpatialGrid& g, double s0, double i0, double v0, double t = 0.0)
      : s(g, s0), i(g, i0), v(g, v0), time(t) {}

  bool finite() const { return s.finite() && i.finite() && v.finite(); }
  double spatial_mean_s() const { return spatial_mean(s); }
  double spatial_mean_i() const { return spatial_mean(i); }
  double spatial_mean_v() const { return spatial_mean(v); }
  /// integral of S + I + V over the domain
  double total_mass() const { return integrate(s) + integrate(i) + integrate(v); }
};

struct ControlField {
  Field u1, u2;

  ControlField() = default;
  ControlField(const SpatialGrid& g, double c1 = 0.0, double c2 = 0.0) : u1(g, c1), u2(g, c2) {}

  bool within_box(double lo1, double hi1, double lo2, double hi2) const {
    return u1.min() >= lo1 && u1.max() <= hi1 && u2.min() >= lo2 && u2.max() <= hi2;
  }
};

/// Weights of the objective. a1, a2 price time spent susceptible/infected;
/// tau1, tau2 price the squared control effort. terminal_weight scales the
/// terminal infected mass (set 0 to drop the terminal term).
struct CostParams {
  double a1 = 1.0, a2 = 1.0;
  double tau1 = 0.5, tau2 = 0.5;
  double terminal_weight = 1.0;

  void validate() const {
    if (!(a1 >= 0.0 && a2 >= 0.0)) throw ValidationError("state cost weights must be >= 0");
    if (!(tau1 > 0.0 && tau2 > 0.0)) throw ValidationError("control cost weights must be > 0");
    if (!(terminal_weight >= 0.0)) throw ValidationError("terminal weight must be >= 0");
  }
};

struct DriftFields {
  Field f1, f2, f3;
};

/// Noise coefficients, one per independent Brownian motion:
///   B1 acts on S with coefficient -g1,        g1  = sigma S I
///   B2 acts on I with coefficient +g2a,       g2a = sigma S I
///   B4 acts on I with coefficient +g2b,       g2b = (1-e) sigma V I
///   B3 acts on V with coefficient -g3,        g3  = (1-e) sigma V I
/// Signs are applied by the integrator.
struct NoiseCoeffs {
  Field g1, g2a, g2b, g3;
};

inline double saturated_treatment(double m, double u2, double i, double eta) {
  return m * u2 * i / (1.0 + eta * i);
}

/// Reaction + diffusion drift of the three compartments for one regime.
inline DriftFields drift(const FieldState& st, const ControlField& u, const SivParams& pr) {
  DriftFields d{laplacian(st.s, pr.d1), laplacian(st.i, pr.d2), laplacian(st.v, pr.d3)};
  for (int k = 0; k < st.s.size(); ++k) {
    const double S = st.s[k], I = st.i[k], V = st.v[k];
    const double scale = pr.scale_at(k);
    const double infect_s = pr.beta * S * I;
    const double infect_v = (1.0 - pr.e) * pr.beta * V * I;
    const double treat = saturated_treatment(pr.m, u.u2[k], I, pr.eta);
    d.f1[k] += scale * ((1.0 - pr.p) * pr.b + pr.alpha * I - (pr.mu + u.u1[k]) * S - infect_s);
    d.f2[k] += scale * (infect_s + infect_v - (pr.mu + pr.alpha) * I - treat);
    d.f3[k] += scale * (pr.p * pr.b + u.u1[k] * S - pr.mu * V - infect_v + treat);
  }
  return d;
}

inline NoiseCoeffs diffusion_coeffs(const FieldState& st, const SivParams& pr) {
  NoiseCoeffs n{Field(st.s.grid), Field(st.s.grid), Field(st.s.grid), Field(st.s.grid)};
  for (int k = 0; k < st.s.size(); ++k) {
    const double si = pr.sigma * st.s[k] * st.i[k];
    const double vi = (1.0 - pr.e) * pr.sigma * st.v[k] * st.i[k];
    n.g1[k] = si;
    n.g2a[k] = si;
    n.g2b[k] = vi;
    n.g3[k] = vi;
  }
  return n;
}

/// integral of A1 S + A2 I + (tau1 u1^2 + tau2 u2^2)/2 over the domain.
inline double running_cost(const FieldState& st, const ControlField& u, const CostParams& c) {
  double s = 0.0;
  for (int k = 0; k < st.s.size(); ++k)
    s += c.a1 * st.s[k] + c.a2 * st.i[k] +
         0.5 * (c.tau1 * u.u1[k] * u.u1[k] + c.tau2 * u.u2[k] * u.u2[k]);
  return s * st.s.grid.dx();
}

/// Terminal cost h: integral of I(x,T) over the domain.
inline double terminal_cost(const FieldState& st) { return integrate(st.i); }

struct MassReport {
  double expected_mass = 0.0;   // Monte Carlo estimate of E int (S+I+V) dx
  double initial_mass = 0.0;    // N = int (S0+I0+V0) dx
  double deviation = 0.0;       // expected_mass - N
};

/// Expected total mass stays at N only under the birth/death balance b = mu N;
/// reported as a diagnostic, not enforced.
inline MassReport mass_diagnostic(std::span<const FieldState> ensemble, double initial_mass) {
  if (ensemble.empty()) throw ValidationError("mass diagnostic needs a nonempty ensemble");
  double acc = 0.0;
  for (const FieldState& st : ensemble) acc += st.total_mass();
  MassReport r;
  r.expected_mass = acc / static_cast<double>(ensemble.size());
  r.initial_mass = initial_mass;
  r.deviation = r.expected_mass - initial_mass;
  return r;
}

}  // namespace siv
