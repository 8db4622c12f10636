#pragma once

// Noncommutative polynomials in the letters U_i, V_i, Z_j, Y_j, where V_i and
// Y_j play the role of the adjoints of U_i and Z_j.  Words may additionally
// contain opaque exponential atoms exp(scalar * R) with a polynomial exponent
// R; those are never expanded here, only differentiated and moved around.
//
// Conventions fixed across the library:
//   * adjoint swaps U<->V and Z<->Y, reverses words, conjugates scalars;
//   * delta(i, .) is the free difference quotient in direction i:
//         delta_i U_i = U_i (x) 1,   delta_i V_i = -(1 (x) V_i),
//     and 0 on Z, Y and on letters of other directions;
//   * cyclic(i, P) = m(delta_i P) with m(A (x) B) = B*A;
//   * sharp:  (A (x) B) # C  = A*C*B;   sharp_tilde: (A (x) B) #~ C = B*C*A.

#include <compare>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "haarx/common.hpp"

namespace haarx::ncalg {

enum class Kind : unsigned char { U = 0, V = 1, Z = 2, Y = 3 };

bool is_unitary_kind(Kind k);
Kind adjoint_kind(Kind k);

struct Letter {
  Kind kind;
  int index;  // 1-based
};

int cmp(const Letter& a, const Letter& b);
inline bool operator==(const Letter& a, const Letter& b) { return cmp(a, b) == 0; }
Letter adjoint(const Letter& l);

class NCPoly;

// exp(scalar * exponent).  The identity is never stored as an atom: factories
// drop atoms whose scalar is exactly zero or whose exponent is the zero
// polynomial.
struct ExpAtom {
  std::shared_ptr<const NCPoly> exponent;
  cplx scalar{1.0, 0.0};
};

int cmp(const ExpAtom& a, const ExpAtom& b);

using Factor = std::variant<Letter, ExpAtom>;
int cmp(const Factor& a, const Factor& b);

struct NCWord {
  std::vector<Factor> factors;

  int deg() const;  // counts Letter factors only; exp atoms contribute 0
  bool has_exp() const;
  bool empty() const { return factors.empty(); }
};

int cmp(const NCWord& a, const NCWord& b);
inline bool operator==(const NCWord& a, const NCWord& b) { return cmp(a, b) == 0; }

struct WordLess {
  bool operator()(const NCWord& a, const NCWord& b) const { return cmp(a, b) < 0; }
};

NCWord concat(const NCWord& a, const NCWord& b);
NCWord adjoint(const NCWord& w);

class NCPoly {
 public:
  using TermMap = std::map<NCWord, cplx, WordLess>;

  NCPoly() = default;

  static NCPoly zero() { return NCPoly(); }
  static NCPoly unit();
  static NCPoly letter(Kind k, int index);
  static NCPoly from_word(NCWord w, cplx c = cplx{1.0, 0.0});
  // exp(scalar * exponent) as a one-word polynomial
  static NCPoly exp_atom(const NCPoly& exponent, cplx scalar);

  const TermMap& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int deg() const;        // max term degree, 0 for the zero polynomial
  bool has_exp() const;
  std::size_t n_terms() const { return terms_.size(); }

  // Merges into the canonical form; terms with coefficient exactly 0 are
  // dropped (no epsilon pruning anywhere in this module).
  void add_term(const NCWord& w, cplx c);

 private:
  TermMap terms_;
};

int cmp(const NCPoly& a, const NCPoly& b);
inline bool operator==(const NCPoly& a, const NCPoly& b) { return cmp(a, b) == 0; }

NCPoly add(const NCPoly& a, const NCPoly& b);
NCPoly sub(const NCPoly& a, const NCPoly& b);
NCPoly scale(const NCPoly& a, cplx c);
NCPoly mul(const NCPoly& a, const NCPoly& b);

inline NCPoly operator+(const NCPoly& a, const NCPoly& b) { return add(a, b); }
inline NCPoly operator-(const NCPoly& a, const NCPoly& b) { return sub(a, b); }
inline NCPoly operator*(const NCPoly& a, const NCPoly& b) { return mul(a, b); }
inline NCPoly operator*(cplx c, const NCPoly& a) { return scale(a, c); }

NCPoly adjoint(const NCPoly& p);

// sum over terms of |coeff| * A^deg(word)
double norm_a(const NCPoly& p, double A);

struct TensorTerm {
  cplx coef;
  NCWord left;
  NCWord right;
};

class TensorPoly {
 public:
  TensorPoly() = default;

  static TensorPoly zero() { return TensorPoly(); }
  static TensorPoly simple(cplx c, NCWord l, NCWord r);

  void add_term(cplx c, const NCWord& l, const NCWord& r);
  const std::vector<TensorTerm>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

 private:
  void canonicalize() const;
  // kept sorted by (left, right) with no zero coefficients once canonicalized
  mutable std::vector<TensorTerm> terms_;
  mutable bool dirty_ = false;
};

bool operator==(const TensorPoly& a, const TensorPoly& b);

TensorPoly add(const TensorPoly& a, const TensorPoly& b);
TensorPoly scale(const TensorPoly& a, cplx c);
// (A (x) B) * (C (x) D) = AC (x) BD
TensorPoly mul(const TensorPoly& a, const TensorPoly& b);
TensorPoly tensor(const NCPoly& l, const NCPoly& r);

inline TensorPoly operator+(const TensorPoly& a, const TensorPoly& b) { return add(a, b); }
inline TensorPoly operator*(const TensorPoly& a, const TensorPoly& b) { return mul(a, b); }

// Free difference quotient in direction i (letters only; throws
// std::invalid_argument if P contains exponential atoms, use delta_alpha for
// those; throws std::out_of_range for i < 1).
TensorPoly delta(int i, const NCPoly& p);

// m(delta_i P) with m(A (x) B) = B*A
NCPoly cyclic(int i, const NCPoly& p);

NCPoly sharp(const TensorPoly& t, const NCPoly& c);
NCPoly sharp_tilde(const TensorPoly& t, const NCPoly& c);

// One-parameter difference quotient that also acts on exponential atoms:
//   a factor exp(s*R) contributes (exp(alpha*s*R) A (x) B exp((1-alpha)*s*R))
//   for each term A (x) B of s*delta_i(R).
// Exponents of atoms must themselves be exponential-free.
// alpha must lie in [0,1].
TensorPoly delta_alpha(int i, double alpha, const NCPoly& p);

std::string to_string(const NCWord& w);
std::string to_string(const NCPoly& p);

}  // namespace haarx::ncalg
