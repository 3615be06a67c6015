#pragma once

#include <ostream>
#include <vector>

#include "siv/common.hpp"

namespace siv {

/// Cell-centered 1-D grid on [0, length] with zero-flux boundaries.
/// n_cells = 1 is the homogeneous (well-mixed) mode; the stencil then
/// degenerates to zero, as mirror ghosts require.
struct SpatialGrid {
  int n_cells = 1;
  double length = 1.0;

  SpatialGrid() = default;
  SpatialGrid(int n, double len) : n_cells(n), length(len) { validate(); }

  void validate() const {
    if (n_cells < 1) throw ValidationError("grid.n_cells must be >= 1");
    if (!(length > 0.0)) throw ValidationError("grid.length must be > 0");
  }

  double dx() const { return length / n_cells; }
  double cell_center(int k) const { return (k + 0.5) * dx(); }

  bool operator==(const SpatialGrid& o) const {
    return n_cells == o.n_cells && length == o.length;
  }
};

struct Field {
  SpatialGrid grid;
  std::vector<double> v;

  Field() : v(1, 0.0) {}
  explicit Field(const SpatialGrid& g, double fill = 0.0)
      : grid(g), v(static_cast<size_t>(g.n_cells), fill) {}
  Field(const SpatialGrid& g, std::vector<double> values) : grid(g), v(std::move(values)) {
    if (static_cast<int>(v.size()) != g.n_cells)
      throw ValidationError("field length does not match grid");
  }

  int size() const { return static_cast<int>(v.size()); }
  double& operator[](int k) { return v[static_cast<size_t>(k)]; }
  double operator[](int k) const { return v[static_cast<size_t>(k)]; }

  double min() const {
    double m = v[0];
    for (double x : v) m = std::min(m, x);
    return m;
  }
  double max() const {
    double m = v[0];
    for (double x : v) m = std::max(m, x);
    return m;
  }
  bool finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// D * (f_{k-1} - 2 f_k + f_{k+1}) / dx^2 with mirror ghosts f_{-1} = f_0,
/// f_n = f_{n-1}. The telescoping sum of the stencil is exactly zero, which
/// gives discrete conservation under integrate().
inline Field laplacian(const Field& f, double diffusivity) {
  const int n = f.size();
  Field out(f.grid, 0.0);
  if (diffusivity == 0.0 || n == 1) return out;
  const double inv_dx2 = diffusivity / (f.grid.dx() * f.grid.dx());
  for (int k = 0; k < n; ++k) {
    const double left = (k == 0) ? f[0] : f[k - 1];
    const double right = (k == n - 1) ? f[n - 1] : f[k + 1];
    out[k] = inv_dx2 * (left - 2.0 * f[k] + right);
  }
  return out;
}

/// Midpoint rule: sum f_k * dx.
inline double integrate(const Field& f) {
  double s = 0.0;
  for (double x : f.v) s += x;
  return s * f.grid.dx();
}

/// <f, g> = sum f_k g_k * dx.
inline double l2_dot(const Field& a, const Field& b) {
  double s = 0.0;
  for (int k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s * a.grid.dx();
}

/// Spatial mean over the domain (integral / length).
inline double spatial_mean(const Field& f) { return integrate(f) / f.grid.length; }

inline void write_field_csv(std::ostream& os, const Field& f) {
  os << "x,value\n";
  for (int k = 0; k < f.size(); ++k)
    os << fmt17(f.grid.cell_center(k)) << ',' << fmt17(f[k]) << '\n';
}

}  // namespace siv
