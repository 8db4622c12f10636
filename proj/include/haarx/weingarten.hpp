#pragma once

// Exact moments of products of traces of words in Haar unitary matrices and
// fixed matrix letters.
//
// The k-th order table solves the Gram system
//     sum_tau N^{#cycles(sigma tau^-1)} wg(tau) = [sigma == id]
// exactly in rationals, with the full identity re-verified for every sigma.
// A second, independent route keeps N symbolic: the character expansion
//     wg(sigma) = (1/k!) sum_{lambda |- k} f_lambda chi_lambda(sigma)
//                  / prod_{cells (i,j)} (N + j - i)
// gives each value as a rational function of N, and word expectations become
// rational functions whose large-N series is extracted exactly.
//
// Word expectations use the pairing expansion: for each pair (sigma, tau) of
// pairings between the U and U* occurrences, the index contractions glue the
// matrix segments between occurrences into cycles; each cycle contributes the
// trace of its segment product (N for an empty cycle).

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <functional>
#include <map>
#include <vector>

#include "haarx/common.hpp"
#include "haarx/ncalg.hpp"

namespace haarx::wg {

using bigint = boost::multiprecision::cpp_int;
using bigrat = boost::multiprecision::cpp_rational;

// ---------------------------------------------------------------------------
// permutations (of {0..k-1}) and partitions

using Perm = std::vector<int>;

Perm p_identity(int k);
Perm p_mul(const Perm& a, const Perm& b);  // (a b)(x) = a[b[x]]
Perm p_inv(const Perm& a);
int p_cycles(const Perm& a);
std::vector<int> p_type(const Perm& a);  // cycle type, descending
std::vector<Perm> all_perms(int k);
std::vector<std::vector<int>> partitions(int k);

long long hook_dimension(const std::vector<int>& lambda);
// Murnaghan-Nakayama character chi_lambda at the class of cycle type mu
long long character(const std::vector<int>& lambda, const std::vector<int>& mu);

// ---------------------------------------------------------------------------
// rational functions of the dimension N

struct Poly {
  std::vector<bigrat> c;  // c[i] is the coefficient of N^i, no trailing zeros

  static Poly zero();
  static Poly constant(const bigrat& v);
  static Poly N();
  static Poly monomial(int power, const bigrat& v);

  int deg() const { return static_cast<int>(c.size()) - 1; }
  bool is_zero() const { return c.empty(); }
  void trim();
  bigrat eval(const bigrat& x) const;
};

Poly operator+(const Poly& a, const Poly& b);
Poly operator-(const Poly& a, const Poly& b);
Poly operator*(const Poly& a, const Poly& b);
bool operator==(const Poly& a, const Poly& b);
Poly poly_gcd(Poly a, Poly b);
// quotient and remainder of a by b (b nonzero)
std::pair<Poly, Poly> poly_divmod(const Poly& a, const Poly& b);

struct RatFn {
  Poly num = Poly::zero();
  Poly den = Poly::constant(1);

  static RatFn zero();
  static RatFn constant(const bigrat& v);
  static RatFn from_poly(Poly p);
  static RatFn N();

  void normalize();  // reduced, monic denominator
  bool is_zero() const { return num.is_zero(); }
  bigrat eval(const bigrat& x) const;
};

RatFn operator+(const RatFn& a, const RatFn& b);
RatFn operator-(const RatFn& a, const RatFn& b);
RatFn operator*(const RatFn& a, const RatFn& b);
RatFn operator/(const RatFn& a, const RatFn& b);
bool operator==(const RatFn& a, const RatFn& b);

// Coefficients of N^0, N^-1, ..., N^-order of the large-N expansion.
// Throws std::domain_error if the function grows with N, and
// std::runtime_error ("odd power ...") if an odd inverse power survives.
std::vector<bigrat> series_coefficients(const RatFn& f, int order,
                                        bool require_even = true);

// ---------------------------------------------------------------------------
// Weingarten values

class WgTable {
 public:
  WgTable(int k, long long N);  // requires 1 <= k <= 5 and N >= k
  int order() const { return k_; }
  long long dim() const { return N_; }
  const bigrat& at(const Perm& sigma) const;
  const bigrat& at_type(const std::vector<int>& type) const;

 private:
  int k_;
  long long N_;
  std::map<std::vector<int>, bigrat> by_type_;
};

// symbolic-N value via the character expansion (cached per (k, type))
RatFn wg_symbolic(int k, const Perm& sigma);

// ---------------------------------------------------------------------------
// word expectations

struct Tok {
  enum class Kind : unsigned char { U, Ustar, Mat };
  Kind kind = Kind::Mat;
  int uidx = 0;  // which independent unitary (0-based)
  int id = 0;    // matrix letter id (Kind::Mat)
};

using TraceWord = std::vector<Tok>;

// normalized trace pattern for matrix-letter words; must satisfy pattern({})=1
using PatternTs = std::function<bigrat(const std::vector<int>&)>;

// E[ prod_i ts(words[i]) ] with N symbolic.  Single unitary index: up to 5
// occurrence pairs; two distinct indices: up to 3 pairs each.  Unbalanced
// words give exactly zero.
RatFn expect_product_ts(const std::vector<TraceWord>& words, const PatternTs& pattern);

// same with concrete matrix letters (mats[id]) at their common dimension
cplx expect_product_ts_numeric(const std::vector<TraceWord>& words,
                               const std::vector<Eigen::MatrixXcd>& mats);

// Convert a plain noncommutative word to tokens: U_i / V_i become unitary
// occurrences (unitary label i-1), Z_j / Y_j matrix letters (Y maps to the
// same id with a star flag folded in; see the implementation note).
// Exponential atoms are rejected.
TraceWord tokens_from_ncword(const ncalg::NCWord& w);

// the balanced-diagonal trace pattern: ts of a product of diag(+-1) letters
// (all equal), i.e. 1 for even length, 0 for odd
bigrat balanced_diag_pattern(const std::vector<int>& ids);

}  // namespace haarx::wg
