#pragma once

// Evaluation of the trace functional on words in free unitaries, unitary
// Brownian motions at fixed times, and concrete matrices.
//
// The algebra generated by the matrix letters, the Haar unitaries u_i, and
// each (family, direction) Brownian-motion unitary are treated as free from
// one another.  A word is evaluated by the centering recursion: write the
// leftmost uncentered factor as (mean + centered part), split linearly, merge
// neighbours that share an algebra (using traciality at the word ends), and
// use that alternating products of centered elements from distinct algebras
// have trace zero.  Results are memoized per context.

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "haarx/common.hpp"
#include "haarx/ncalg.hpp"

namespace haarx::freetrace {

struct Atom {
  enum class Tag : unsigned char { HaarU, Fubm, Matrix };
  Tag tag = Tag::HaarU;
  int dir = 0;      // unitary direction (HaarU, Fubm)
  int family = 0;   // independence label within a direction (Fubm)
  double time = 0;  // evolution time (Fubm)
  int handle = -1;  // matrix registry handle (Matrix)
};

Atom haar_atom(int dir);
Atom fubm_atom(int dir, int family, double time);
Atom matrix_atom(int handle);

// power < 0 means the adjoint taken |power| times
struct FreeFactor {
  Atom atom;
  int power = 1;
};

using FreeWord = std::vector<FreeFactor>;

FreeWord adjoint(const FreeWord& w);
FreeWord concat(const FreeWord& a, const FreeWord& b);

// images of the letters; V_i and Y_j are derived by adjoint
struct Assignment {
  std::map<int, FreeWord> u;
  std::map<int, FreeWord> z;
};

struct EvalOptions {
  int max_series_order = 30;
  double tail_tol = 1e-12;   // target for the exponential series tail
  double guard_tol = 1e-6;   // hard error above this
  std::size_t term_budget = 400000;
};

struct EvalReport {
  cplx value{0.0, 0.0};
  double tail_bound = 0.0;  // certified bound on the truncated series mass
  int series_order = 0;     // highest power used by any exponential factor
};

class TraceContext {
 public:
  explicit TraceContext(int matrix_dim = 0) : dim_(matrix_dim) {}

  int matrix_dim() const { return dim_; }
  int add_matrix(Eigen::MatrixXcd m);
  const Eigen::MatrixXcd& matrix(int handle) const;

  // n-th moment of the Brownian-motion unitary at time t, from the coupled
  // moment ODE hierarchy (fixed-step RK4, memoized per time)
  double fubm_moment(int n, double t);

  cplx trace(const FreeWord& w);

  cplx eval_ncpoly(const ncalg::NCPoly& p, const Assignment& asg);
  EvalReport eval_ncpoly_report(const ncalg::NCPoly& p, const Assignment& asg,
                                const EvalOptions& opts = {});

  void clear_trace_memo();
  std::size_t trace_memo_size() const { return memo_.size(); }

  struct Block;
  struct BlockTerm;  // (blocks, coefficient); both defined in the .cpp only

 private:
  int alg_id(const Atom& a);
  std::vector<Block> word_to_blocks(const FreeWord& w);
  void append_atom_blocks(std::vector<Block>& bs, const FreeFactor& f);

  cplx block_mean(const Block& b);
  double block_norm1(const Block& b);
  cplx mat_ts(const std::vector<int>& seq);

  bool normalize(std::vector<Block>& bs, cplx& scalar);
  cplx trace_blocks(std::vector<Block> bs);
  cplx trace_core(std::vector<Block>& bs);
  std::string serialize(const std::vector<Block>& bs) const;

  std::vector<BlockTerm> letters_to_terms(const ncalg::NCWord& w, const Assignment& asg,
                                          const EvalOptions& opts, EvalReport& rep);

  int dim_ = 0;
  std::vector<Eigen::MatrixXcd> matrices_;
  std::vector<double> mat_fro_;  // Frobenius norms, for series tail bounds

  struct AlgInfo {
    Atom::Tag tag;
    int dir;
    int family;
    std::uint64_t time_bits;
  };
  std::map<std::tuple<int, int, int, std::uint64_t>, int> alg_ids_;
  std::vector<AlgInfo> algs_;

  std::map<std::uint64_t, std::vector<double>> fubm_cache_;  // time bits -> m_1..m_k
  std::map<std::vector<int>, cplx> ts_cache_;
  std::unordered_map<std::string, cplx> memo_;
};

}  // namespace haarx::freetrace
