// Independent hand transcription of the discretized state and adjoint update
// lines, kept free of any production stepping code so it can serve as the
// oracle for the single-step tests. Scalar arithmetic only; the Laplacian is
// re-derived here with its own mirror-ghost arithmetic.

#pragma once

#include <cmath>
#include <vector>

#include "siv/integrator.hpp"

namespace oracle {

struct Cells {
  std::vector<double> s, i, v;
};

inline double lap(const std::vector<double>& f, int k, double d, double dx) {
  const int n = static_cast<int>(f.size());
  if (n == 1 || d == 0.0) return 0.0;
  const double left = k == 0 ? f[0] : f[static_cast<size_t>(k - 1)];
  const double right = k == n - 1 ? f[static_cast<size_t>(n - 1)] : f[static_cast<size_t>(k + 1)];
  return d * (left - 2.0 * f[static_cast<size_t>(k)] + right) / (dx * dx);
}

/// State update: drift * dt, then per-Brownian sqrt(dt) zeta increments with
/// the (1/2) g g' (zeta^2 - 1) dt diagonal corrections.
inline Cells state_step(const Cells& x, double u1, double u2, const siv::SivParams& pr,
                        double dt, double dx, const std::vector<double>& z1,
                        const std::vector<double>& z2, const std::vector<double>& z3,
                        const std::vector<double>& z4, bool clamp) {
  const int n = static_cast<int>(x.s.size());
  Cells out{x.s, x.i, x.v};
  const double sdt = std::sqrt(dt);
  for (int k = 0; k < n; ++k) {
    const double S = x.s[static_cast<size_t>(k)];
    const double I = x.i[static_cast<size_t>(k)];
    const double V = x.v[static_cast<size_t>(k)];
    const double treat = pr.m * u2 * I / (1.0 + pr.eta * I);
    const double f1 = (1.0 - pr.p) * pr.b + pr.alpha * I - pr.mu * S - pr.beta * S * I -
                      u1 * S + lap(x.s, k, pr.d1, dx);
    const double f2 = pr.beta * S * I + (1.0 - pr.e) * pr.beta * V * I -
                      (pr.mu + pr.alpha) * I - treat + lap(x.i, k, pr.d2, dx);
    const double f3 = pr.p * pr.b + u1 * S - pr.mu * V - (1.0 - pr.e) * pr.beta * V * I +
                      treat + lap(x.v, k, pr.d3, dx);
    const double sg = pr.sigma;
    const double oe = 1.0 - pr.e;
    double S1 = S + f1 * dt - sg * S * I * sdt * z1[static_cast<size_t>(k)] +
                0.5 * sg * sg * S * I * I *
                    (z1[static_cast<size_t>(k)] * z1[static_cast<size_t>(k)] - 1.0) * dt;
    double I1 = I + f2 * dt + sg * S * I * sdt * z2[static_cast<size_t>(k)] +
                0.5 * sg * sg * S * S * I *
                    (z2[static_cast<size_t>(k)] * z2[static_cast<size_t>(k)] - 1.0) * dt +
                oe * sg * V * I * sdt * z4[static_cast<size_t>(k)] +
                0.5 * oe * oe * sg * sg * V * V * I *
                    (z4[static_cast<size_t>(k)] * z4[static_cast<size_t>(k)] - 1.0) * dt;
    double V1 = V + f3 * dt - oe * sg * V * I * sdt * z3[static_cast<size_t>(k)] +
                0.5 * oe * oe * sg * sg * V * I * I *
                    (z3[static_cast<size_t>(k)] * z3[static_cast<size_t>(k)] - 1.0) * dt;
    if (clamp) {
      S1 = std::max(0.0, S1);
      I1 = std::max(0.0, I1);
      V1 = std::max(0.0, V1);
    }
    out.s[static_cast<size_t>(k)] = S1;
    out.i[static_cast<size_t>(k)] = I1;
    out.v[static_cast<size_t>(k)] = V1;
  }
  return out;
}

struct AdjCells {
  std::vector<double> p1, p2, p3, q1, q2, q3;
};

/// Backward costate update over one interval, evaluated at the right-endpoint
/// states, with the running-cost sources entering as +A dt.
inline AdjCells adjoint_step(const AdjCells& a, const Cells& x, double u1, double u2,
                             const siv::SivParams& pr, double a1_weight, double a2_weight,
                             double dt, double dx, const std::vector<double>& z1,
                             const std::vector<double>& z2) {
  const int n = static_cast<int>(x.s.size());
  AdjCells out = a;
  const double sdt = std::sqrt(dt);
  const double oe = 1.0 - pr.e;
  for (int k = 0; k < n; ++k) {
    const double S = x.s[static_cast<size_t>(k)];
    const double I = x.i[static_cast<size_t>(k)];
    const double V = x.v[static_cast<size_t>(k)];
    const double p1 = a.p1[static_cast<size_t>(k)];
    const double p2 = a.p2[static_cast<size_t>(k)];
    const double p3 = a.p3[static_cast<size_t>(k)];
    const double q1 = a.q1[static_cast<size_t>(k)];
    const double q2 = a.q2[static_cast<size_t>(k)];
    const double q3 = a.q3[static_cast<size_t>(k)];
    const double zeta1 = z1[static_cast<size_t>(k)];
    const double zeta2 = z2[static_cast<size_t>(k)];
    const double denom = (1.0 + pr.eta * I) * (1.0 + pr.eta * I);

    const double b1 = ((pr.mu + u1) * S + pr.beta * I) * p1 + lap(a.p1, k, pr.d1, dx) +
                      pr.beta * I * p2 + u1 * p3 - pr.sigma * I * q1 + pr.sigma * I * q2;
    const double b2 = (pr.alpha - pr.beta * S) * p1 +
                      (pr.beta * S + oe * pr.beta * V - (pr.mu + pr.alpha) -
                       pr.m * u2 / denom) *
                          p2 +
                      lap(a.p2, k, pr.d2, dx) - (oe * pr.beta * V - pr.m * u2 / denom) * p3 -
                      pr.sigma * S * q1 + (pr.sigma * S + oe * pr.sigma * V) * q2 -
                      oe * pr.sigma * V * q3;
    const double b3 = oe * pr.beta * I * p2 - (pr.mu + oe * pr.beta * I) * p3 +
                      lap(a.p3, k, pr.d3, dx) + oe * pr.sigma * I * q2 - oe * pr.sigma * I * q3;

    out.p1[static_cast<size_t>(k)] = p1 + a1_weight * dt - b1 * dt - q1 * sdt * zeta1 -
                                     0.5 * q1 * q1 * (zeta1 * zeta1 - 1.0) * dt;
    out.p2[static_cast<size_t>(k)] = p2 + a2_weight * dt - b2 * dt - q2 * sdt * zeta2 -
                                     0.5 * q2 * q2 * (zeta2 * zeta2 - 1.0) * dt;
    out.p3[static_cast<size_t>(k)] = p3 + b3 * dt;
  }
  return out;
}

}  // namespace oracle
