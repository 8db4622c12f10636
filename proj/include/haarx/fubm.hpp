#pragma once

// Spectral density of the free unitary Brownian motion at large times and the
// induced change of variable that maps it to the uniform measure.
//
// For t > 4 the spectral measure on the unit circle has a positive analytic
// density.  Writing omega = e^{is}, the density value kappa(t, omega) is the
// real part of the unique solution z with Re z > 0 of
//     (z - 1)/(z + 1) * exp(t z / 2) = omega,
// normalized so that (1/2pi) Int kappa ds = 1.  G(s) = Int_0^s kappa is then
// a circle diffeomorphism (G(2pi) = 2pi) and e^{is} -> e^{iG(s)} pushes the
// measure forward to the uniform one.

#include <complex>
#include <vector>

#include "haarx/common.hpp"

namespace haarx::fubm {

struct DensityTable {
  double t = 0.0;
  int grid = 0;                  // number of uniformly spaced angles
  std::vector<double> angles;    // s_k = 2 pi k / grid
  std::vector<cplx> roots;       // z(s_k)
  std::vector<double> kappa;     // Re z(s_k)
  std::vector<double> G;         // cumulative trapezoid of kappa, G[0] = 0
  double G_2pi = 0.0;
  double max_residual = 0.0;     // worst |(z-1)/(z+1) e^{tz/2} - omega| on grid
  int max_newton_iters = 0;
};

// Builds the table by Newton continuation around the circle, starting from
// the real solution at omega = 1.  Requires t > 4 and grid >= 16.
DensityTable build_table(double t, int grid = 4096);

// kappa(t, e^{i s}) by table lookup with linear interpolation (table cached
// per t at the default grid).
double density(double t, double s);

// (1/2pi) Int e^{i n s} kappa(s) ds by the periodic rectangle rule.
double moment_by_quadrature(const DensityTable& tab, int n);
double moment_by_quadrature(int n, double t);

// Int e^{i k G(s)} dnu(s); equals 1 at k = 0 and 0 otherwise when the
// pushforward is uniform.
cplx pushforward_moment(const DensityTable& tab, int k);

double normalization_defect(const DensityTable& tab);

// G(s) with linear interpolation, extended by G(s + 2pi) = G(s) + 2pi.
double G_value(const DensityTable& tab, double s);

// The circle map f_t: e^{is} -> e^{iG(s)} applied to a unimodular argument.
cplx haarize_point(const DensityTable& tab, cplx omega);

// sup over the grid of |e^{is} - e^{iG(s)}|
double haarize_distance(const DensityTable& tab);

}  // namespace haarx::fubm
