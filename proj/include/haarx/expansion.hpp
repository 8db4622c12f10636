#pragma once

// The second-order expansion operators and the numerical order-0/order-1
// coefficients of E[ts f(P(U, Z))] in 1/N^2.
//
// Unitary letters inside the operator pipeline carry integer index sets.
// Rather than duplicating the polynomial calculus for decorated letters,
// each distinct (direction, index set) pair is encoded as a fresh plain
// letter index through a table (IndexedPoly); derivatives, Duhamel calculus,
// and trace evaluation then run on ordinary polynomials, and the slot maps
// become letter renamings.
//
// The operator at position s applied to a level-n input:
//   L_s(Q) = 1/2 sum_{i,j} sum_{(I,J) tail-matching at s} sum over the three
//            nested derivatives (indexed second derivatives at I and J on the
//            two legs of delta_i applied to the cyclic derivative D_i Q),
//            each output word assembled from four slot parts whose letters
//            are pushed through the maps F[s,1], Ft[s,1], Ft[s,2], F[s,2].
// A level-(n+1) letter U_{i,K} evaluates, at sorted times (t_1,...,t_{2n+2}),
// to the word u^{(K at position 1)}_{i, t_1} u^{(K at position 2)}_{i, t_2-t_1}
// ... u_i with one Brownian factor per time gap and a trailing Haar unitary;
// distinct integer labels are free from one another.

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "haarx/common.hpp"
#include "haarx/freetrace.hpp"
#include "haarx/indexsets.hpp"
#include "haarx/ncalg.hpp"

namespace haarx::expansion {

// A polynomial over decorated unitary letters, encoded through plain letter
// indices.  Z letters keep their own indices and never enter the table.
struct IndexedPoly {
  ncalg::NCPoly poly;
  // plain letter index -> (direction, index set of order `level`)
  std::map<int, std::pair<int, indexsets::IndexSet>> letters;
  int level = 0;
  int directions = 1;
  std::vector<int> branch;  // positions s chosen by the L applications so far
};

// lift a plain polynomial (unitary letters with index <= directions) to
// level 0; every unitary letter receives the empty index set
IndexedPoly lift(const ncalg::NCPoly& p, int directions);

// one operator term before flattening: the four slot words in product order
// (parts 0 and 3 carry plain-map images, parts 1 and 2 tilde images)
struct SlotTerm {
  cplx coef{0.0, 0.0};
  std::array<ncalg::NCWord, 4> parts;
};

struct LOutput {
  std::vector<SlotTerm> terms;
  IndexedPoly value;  // flattened sum, level raised by one, branch extended by s
};

// Apply the operator at position s (1 <= s <= 2*level+1) to a level <= 2
// input.  params are the four Duhamel parameters (rho, beta, delta, gamma)
// in [0,1], consulted only when q contains exponential atoms.
LOutput build_L(int s, const IndexedPoly& q,
                const std::array<double, 4>& params = {0.0, 0.0, 0.0, 0.0});

// evaluation of a level-n encoded polynomial at sorted times (size 2n),
// with Z_j backed by the registered matrix handles (1-based j)
cplx eval_indexed(const IndexedPoly& ip, const std::vector<double>& times,
                  freetrace::TraceContext& ctx, const std::vector<int>& zhandles,
                  const indexsets::IndexUniverse& uni,
                  const freetrace::EvalOptions& opts = {}, double* tail_bound = nullptr);

// ---------------------------------------------------------------------------

struct FourierSpec {
  enum class Mode { Polynomial, Atomic };
  Mode mode = Mode::Polynomial;
  int moment_power = 1;                        // f(x) = x^m
  std::vector<std::pair<double, cplx>> atoms;  // f(x) = sum c e^{i x y}

  static FourierSpec moment(int m);
  static FourierSpec trig(std::vector<std::pair<double, cplx>> atoms);

  // Atomic specs are self-adjoint iff atoms pair up as (y, c), (-y, conj c)
  bool self_adjoint(double tol = 1e-12) const;
  cplx eval(double x) const;
};

struct QuadCfg {
  int time_nodes = 32;         // Gauss-Legendre nodes per time axis
  int coarse_time_nodes = 16;  // embedded grid for the error estimate
  int alpha_nodes = 8;         // nodes per Duhamel axis (exponential inputs)
  double time_scale = 4.0;     // t2 = -time_scale * ln(1 - y)
};

struct ExpansionResult {
  cplx alpha0{0.0, 0.0};
  cplx alpha1{0.0, 0.0};
  double quadrature_error = 0.0;  // grid comparison + tail estimate
  double truncation_T = 0.0;      // largest time reached by the node grid
};

// order 0: the trace of Q at free Haar unitaries; order 1 adds the double
// time integral of the traced operator output over 0 <= t1 <= t2
ExpansionResult alpha(int order, const ncalg::NCPoly& q,
                      const std::vector<Eigen::MatrixXcd>& zmats, int directions,
                      const QuadCfg& cfg = {});

// f(P): Polynomial mode reduces to the plain overload on P^m; Atomic mode
// applies the operator to exp(i y P) and integrates the Duhamel parameters
ExpansionResult alpha(int order, const FourierSpec& f, const ncalg::NCPoly& p,
                      const std::vector<Eigen::MatrixXcd>& zmats, int directions,
                      const QuadCfg& cfg = {});

// the order-1 integrand value at one (t1, t2) point (diagnostic, slow path)
cplx alpha1_integrand(const ncalg::NCPoly& q,
                      const std::vector<Eigen::MatrixXcd>& zmats, int directions,
                      double t1, double t2);

// ---------------------------------------------------------------------------

// ||f|| * (C * K^(deg+1) * Cmax * m * deg*(deg+1))^(4k+6) * k^(14k), with
// m the monomial count, Cmax = max(1, largest |coefficient|), K = max(1, K),
// and 0^0 := 1 at k = 0
double remainder_bound(const ncalg::NCPoly& p, double f_norm, double k_n, int k,
                       double c = 1.0);

struct FitRow {
  int n = 0;
  cplx estimate{0.0, 0.0};
  double stderr_ = 0.0;
};

struct FitReport {
  std::vector<FitRow> rows;
  cplx intercept{0.0, 0.0};
  cplx slope{0.0, 0.0};
  double intercept_se = 0.0;
  double slope_se = 0.0;
  // log-log fit of |residual| vs N over rows whose residual clears 3 sigma
  double resid_slope = 0.0;
  double resid_slope_se = 0.0;
  int resid_points = 0;
  bool insufficient = false;  // slope indistinguishable from noise
  cplx alpha0_ref{0.0, 0.0};
  cplx alpha1_ref{0.0, 0.0};
};

// weighted least squares of the rows against {1, N^-2}
FitReport fit_rows(const std::vector<FitRow>& rows);

// Monte Carlo estimates of ts f(P) for each N (per-N sample counts aligned
// with ns), fitted against {1, N^-2} and compared with alpha(1).  zfamily
// supplies the matrix letters at each dimension; it must realize an
// N-independent trace pattern for the comparison to make sense.
FitReport expansion_fit(
    const ncalg::NCPoly& p, const FourierSpec& f,
    const std::function<std::vector<Eigen::MatrixXcd>(int)>& zfamily,
    const std::vector<int>& ns, const std::vector<long long>& samples,
    std::uint64_t seed, int directions, const QuadCfg& cfg = {});

struct ContinuityReport {
  double dalpha_eps = 0.0;   // |alpha1(Z + eps H) - alpha1(Z)|
  double dalpha_half = 0.0;  // |alpha1(Z + eps/2 H) - alpha1(Z)|
  double ratio = 0.0;        // dalpha_eps / dalpha_half, ~2 for Lipschitz alpha1
};

// finite-difference Lipschitz probe of alpha1 in the matrix letters along a
// seeded random Hermitian direction of unit norm applied to Z_1
ContinuityReport continuity_check(const ncalg::NCPoly& q,
                                  const std::vector<Eigen::MatrixXcd>& zmats,
                                  int directions, double eps, std::uint64_t seed,
                                  const QuadCfg& cfg = {});

// Gauss-Legendre nodes and weights on [0,1]
std::pair<std::vector<double>, std::vector<double>> gauss_legendre01(int n);

}  // namespace haarx::expansion
