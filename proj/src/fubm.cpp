#include "haarx/fubm.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace haarx::fubm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

cplx implicit_lhs(double t, cplx z) {
  return (z - 1.0) / (z + 1.0) * std::exp(0.5 * t * z);
}

cplx implicit_dz(double t, cplx z) {
  const cplx w = std::exp(0.5 * t * z);
  return w * (2.0 / ((z + 1.0) * (z + 1.0)) + 0.5 * t * (z - 1.0) / (z + 1.0));
}

struct NewtonOut {
  cplx z;
  double residual;
  int iters;
};

NewtonOut newton(double t, cplx omega, cplx z0) {
  cplx z = z0;
  double res = std::abs(implicit_lhs(t, z) - omega);
  int it = 0;
  for (; it < 60 && res > 1e-13; ++it) {
    const cplx h = implicit_lhs(t, z) - omega;
    const cplx dh = implicit_dz(t, z);
    cplx step = -h / dh;
    double lam = 1.0;
    cplx zn = z + step;
    double rn = std::abs(implicit_lhs(t, zn) - omega);
    while (rn > (1.0 - 0.25 * lam) * res && lam > 1e-6) {
      lam *= 0.5;
      zn = z + lam * step;
      rn = std::abs(implicit_lhs(t, zn) - omega);
    }
    z = zn;
    res = rn;
  }
  return {z, res, it};
}

// real root > 1 of (z-1)/(z+1) e^{tz/2} = 1, bisection on the log form
double real_root(double t) {
  auto psi = [t](double z) { return std::log((z - 1.0) / (z + 1.0)) + 0.5 * t * z; };
  double lo = 1.0 + 1e-14, hi = 2.0;
  while (psi(hi) < 0.0) hi *= 2.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    (psi(mid) < 0.0 ? lo : hi) = mid;
    if (hi - lo < 1e-16 * hi) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

DensityTable build_table(double t, int grid) {
  if (!(t > 4.0)) throw std::domain_error("build_table requires t > 4");
  if (grid < 16) throw std::invalid_argument("build_table: grid too small");

  DensityTable tab;
  tab.t = t;
  tab.grid = grid;
  tab.angles.resize(grid);
  tab.roots.resize(grid);
  tab.kappa.resize(grid);
  tab.G.resize(grid);

  cplx z = real_root(t);
  for (int k = 0; k < grid; ++k) {
    const double s = kTwoPi * k / grid;
    tab.angles[k] = s;
    const cplx omega = std::polar(1.0, s);
    const NewtonOut out = newton(t, omega, z);
    if (!(out.z.real() > 0.0))
      throw std::runtime_error("density solve left the right half plane");
    if (out.residual > 1e-10)
      throw std::runtime_error("density solve did not converge on the grid");
    z = out.z;
    tab.roots[k] = z;
    tab.kappa[k] = z.real();
    tab.max_residual = std::max(tab.max_residual, out.residual);
    tab.max_newton_iters = std::max(tab.max_newton_iters, out.iters);
  }

  const double h = kTwoPi / grid;
  tab.G[0] = 0.0;
  for (int k = 1; k < grid; ++k)
    tab.G[k] = tab.G[k - 1] + 0.5 * h * (tab.kappa[k - 1] + tab.kappa[k]);
  tab.G_2pi = tab.G[grid - 1] + 0.5 * h * (tab.kappa[grid - 1] + tab.kappa[0]);
  return tab;
}

namespace {

std::map<double, DensityTable>& table_cache() {
  static std::map<double, DensityTable> cache;
  return cache;
}
std::mutex cache_mutex;

const DensityTable& cached_table(double t) {
  std::lock_guard<std::mutex> lock(cache_mutex);
  auto& cache = table_cache();
  auto it = cache.find(t);
  if (it == cache.end()) it = cache.emplace(t, build_table(t)).first;
  return it->second;
}

double wrap_angle(double s) {
  s = std::fmod(s, kTwoPi);
  if (s < 0.0) s += kTwoPi;
  return s;
}

}  // namespace

double density(double t, double s) {
  const DensityTable& tab = cached_table(t);
  const double x = wrap_angle(s) / kTwoPi * tab.grid;
  const int k = static_cast<int>(x) % tab.grid;
  const double frac = x - std::floor(x);
  const double a = tab.kappa[k];
  const double b = tab.kappa[(k + 1) % tab.grid];
  return a + frac * (b - a);
}

double moment_by_quadrature(const DensityTable& tab, int n) {
  cplx acc{0.0, 0.0};
  for (int k = 0; k < tab.grid; ++k)
    acc += std::polar(tab.kappa[k], n * tab.angles[k]);
  return (acc / static_cast<double>(tab.grid)).real();
}

double moment_by_quadrature(int n, double t) {
  return moment_by_quadrature(cached_table(t), n);
}

cplx pushforward_moment(const DensityTable& tab, int k) {
  cplx acc{0.0, 0.0};
  for (int j = 0; j < tab.grid; ++j)
    acc += std::polar(tab.kappa[j], k * tab.G[j]);
  return acc / static_cast<double>(tab.grid);
}

double normalization_defect(const DensityTable& tab) {
  double acc = 0.0;
  for (double v : tab.kappa) acc += v;
  return std::abs(acc / tab.grid - 1.0);
}

double G_value(const DensityTable& tab, double s) {
  const double w = wrap_angle(s);
  const double turns = std::floor((s - w) / kTwoPi + 0.5);
  const double x = w / kTwoPi * tab.grid;
  const int k = static_cast<int>(x) % tab.grid;
  const double frac = x - std::floor(x);
  const double a = tab.G[k];
  const double b = (k + 1 < tab.grid) ? tab.G[k + 1] : tab.G_2pi;
  return a + frac * (b - a) + kTwoPi * turns;
}

cplx haarize_point(const DensityTable& tab, cplx omega) {
  return std::polar(1.0, G_value(tab, std::arg(omega)));
}

double haarize_distance(const DensityTable& tab) {
  double worst = 0.0;
  for (int k = 0; k < tab.grid; ++k) {
    const cplx d = std::polar(1.0, tab.angles[k]) - std::polar(1.0, tab.G[k]);
    worst = std::max(worst, std::abs(d));
  }
  return worst;
}

}  // namespace haarx::fubm
