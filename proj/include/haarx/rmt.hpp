#pragma once

// Matrix-model sampling: Haar unitaries, the unitary Brownian motion, and
// Monte Carlo estimators for normalized traces of words evaluated on them.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "haarx/common.hpp"
#include "haarx/ncalg.hpp"
#include "haarx/rng.hpp"

namespace haarx::rmt {

// Haar distributed N x N unitary: QR of a complex Ginibre matrix with the
// phases of the R diagonal pushed back into Q.
Eigen::MatrixXcd haar_sample(RngStream& rng, int n);

// Frobenius norm of U*U - I
double unitarity_defect(const Eigen::MatrixXcd& u);

// One Hermitian Brownian increment over a time step dt: diagonal entries are
// real N(0, dt/N), off-diagonal real and imaginary parts N(0, dt/(2N)).
Eigen::MatrixXcd hbm_increment(RngStream& rng, int n, double dt);

// Evolve u (assumed unitary) by the unitary Brownian motion for time t using
// uniform steps of size at most dt (dt <= 1e-2 enforced).  Each step applies
// the Ito-corrected Euler update followed by a truncated polar projection;
// the endpoint is polished back to unitarity below 1e-12.
void ubm_evolve(Eigen::MatrixXcd& u, RngStream& rng, double t, double dt);

// Evaluate a plain noncommutative polynomial (no exponential atoms) with
// U_i -> us[i], Z_j -> zs[j] and adjoints for the starred letters.  Index
// lookups are 1-based and must be present in the maps.
struct MatrixAssignment {
  std::vector<Eigen::MatrixXcd> u;  // u[i-1] backs U_i
  std::vector<Eigen::MatrixXcd> z;  // z[j-1] backs Z_j
};

Eigen::MatrixXcd eval_on_matrices(const ncalg::NCPoly& p, const MatrixAssignment& asg, int n);

// f applied to a Hermitian matrix through its eigendecomposition
Eigen::MatrixXcd apply_function(const Eigen::MatrixXcd& h,
                                const std::function<cplx(double)>& f,
                                double herm_tol = 1e-10);

// normalized trace of the product of a word's letters, cheapest association
cplx trace_of_word(const ncalg::NCWord& w, const MatrixAssignment& asg, int n);

// Monte Carlo mean of ts P_k(U, Z) over Haar samples of the U letters, all
// polynomials sharing the same samples.  One RNG stream per sample keeps the
// result independent of evaluation order.
std::vector<McEstimateC> mc_expect_traces(const std::vector<ncalg::NCPoly>& ps,
                                          const std::vector<Eigen::MatrixXcd>& zmats,
                                          int n, long long samples, std::uint64_t seed);

McEstimateC mc_expect_trace(const ncalg::NCPoly& p,
                            const std::vector<Eigen::MatrixXcd>& zmats,
                            int n, long long samples, std::uint64_t seed);

// Monte Carlo mean of (1/N) sum_i f(lambda_i(P)) with P self-adjoint on each
// sample; the eigenvalues come from the Hermitian part, and the defect
// ||P - P*|| is required to stay below herm_tol.
McEstimateC mc_expect_trace_function(const ncalg::NCPoly& p,
                                     const std::function<cplx(double)>& f,
                                     const std::vector<Eigen::MatrixXcd>& zmats,
                                     int n, long long samples, std::uint64_t seed,
                                     double herm_tol = 1e-8);

// E[ts(U_t^power)] for the Brownian unitary at time t
McEstimateC mc_ubm_trace_moment(int power, int n, double t, double dt,
                                long long paths, std::uint64_t seed);

// Both sides of the covariance identity for traces at time T:
//   cov(Tr P(U_T, Z), Tr Q(U_T, Z))
//     = -(1/N) int_0^T E[ Tr( DP(V_t U_{T-t}, Z) DQ(W_t U_{T-t}, Z) ) ] dt
// with V, W, U independent Brownian unitaries, D the cyclic derivative in the
// single unitary letter, and Tr unnormalized on both sides.  P and Q may use
// only U_1 (any Z letters).  The left side is estimated from lhs_paths
// endpoint paths (covariance in the bilinear sense, batched for the error
// bar); the right side samples rhs_triples fresh (V, W, U) triples at each
// trapezoid node of the path grid.
struct CovarianceResult {
  McEstimateC lhs;
  McEstimateC rhs;
  int nodes = 0;
};

CovarianceResult covariance_check(const ncalg::NCPoly& p, const ncalg::NCPoly& q,
                                  const std::vector<Eigen::MatrixXcd>& zmats,
                                  int n, double t_final, double dt,
                                  long long lhs_paths, long long rhs_triples,
                                  std::uint64_t seed, int node_stride = 2);

// several (P, Q) pairs sharing the same endpoint paths and the same
// (V, W, U) triples; the path generation cost is paid once
std::vector<CovarianceResult> covariance_check_pairs(
    const std::vector<std::pair<ncalg::NCPoly, ncalg::NCPoly>>& pairs,
    const std::vector<Eigen::MatrixXcd>& zmats, int n, double t_final, double dt,
    long long lhs_paths, long long rhs_triples, std::uint64_t seed,
    int node_stride = 2);

}  // namespace haarx::rmt
