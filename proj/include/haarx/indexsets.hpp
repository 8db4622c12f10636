#pragma once

// Integer index-set combinatorics used by the expansion operators.
//
// A level-n index set is a tuple of 2n positive integers.  Level 0 is the
// empty tuple.  The four maps F[j,1], F[j,2], Ft[j,1], Ft[j,2] send level-n
// sets to level-(n+1) sets; the universe J_{n+1} is built from J_n by taking,
// for each j in 1..2n+1, the union of all four images.  Branches refine this:
// a branch keyed by (i_0, ..., i_{n-1}) applies the four maps with j = i_m
// at level m, so each key yields 4^n sets.

#include <cstdint>
#include <map>
#include <tuple>
#include <utility>
#include <vector>

namespace haarx::indexsets {

// c_0 = 0, c_{n+1} = 6 c_n + 6.  Guarded against overflow; n must be <= 12.
long long c_seq(int n);

struct IndexSet {
  int order = 0;                  // number of entries is 2*order
  std::vector<long long> entries; // 1-based positions 1..2*order
};

bool operator==(const IndexSet& a, const IndexSet& b);
bool operator<(const IndexSet& a, const IndexSet& b);

enum class MapFamily : unsigned char { Plain, Tilde };  // F vs F-tilde

// Applies F[j,v] (or the tilde variant) to a level-n set.
// Requires 1 <= j <= 2n+1 and v in {1,2}.
IndexSet apply_map(MapFamily fam, int j, int v, const IndexSet& in);

struct IndexUniverse {
  int order = 0;
  std::vector<IndexSet> all;  // J_order, in construction order

  // single-map images of J_{order-1}, keyed by (family, j, v); empty at order 0
  std::map<std::tuple<MapFamily, int, int>, std::vector<IndexSet>> images;

  // recursive branches keyed by (i_0, ..., i_{order-1}); the empty key is J_0
  std::map<std::vector<int>, std::vector<IndexSet>> branches;

  // value -> the unique position (1..2*order) at which it can appear
  std::map<long long, int> position_of;
};

// Builds J_n together with its images and branches; n must be <= 4.
IndexUniverse build_universe(int n);

// The position (1..2n) at which value s occurs within sets of the universe.
// Throws std::out_of_range if s never occurs.
int depth(const IndexUniverse& u, long long s);

// Ordered pairs (I, J) from the branch keyed by `key` whose entries agree at
// every position >= s.  s may be 2*order+1, in which case the tail condition
// is vacuous and all |branch|^2 pairs are returned.
std::vector<std::pair<IndexSet, IndexSet>> tail_matching_pairs(
    const IndexUniverse& u, const std::vector<int>& key, int s);

}  // namespace haarx::indexsets
