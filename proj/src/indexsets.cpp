#include "haarx/indexsets.hpp"

#include <limits>
#include <stdexcept>
#include <string>

namespace haarx::indexsets {

long long c_seq(int n) {
  if (n < 0) throw std::out_of_range("c_seq: n must be >= 0");
  if (n > 12) throw std::out_of_range("c_seq: n must be <= 12 (overflow guard)");
  long long c = 0;
  for (int k = 0; k < n; ++k) {
    if (c > (std::numeric_limits<long long>::max() - 6) / 6)
      throw std::overflow_error("c_seq overflow");
    c = 6 * c + 6;
  }
  return c;
}

bool operator==(const IndexSet& a, const IndexSet& b) {
  return a.order == b.order && a.entries == b.entries;
}

bool operator<(const IndexSet& a, const IndexSet& b) {
  if (a.order != b.order) return a.order < b.order;
  return a.entries < b.entries;
}

IndexSet apply_map(MapFamily fam, int j, int v, const IndexSet& in) {
  const int n = in.order;
  if (v != 1 && v != 2) throw std::invalid_argument("apply_map: v must be 1 or 2");
  if (j < 1 || j > 2 * n + 1)
    throw std::invalid_argument("apply_map: j must lie in [1, 2n+1], got j=" +
                                std::to_string(j) + " at order " + std::to_string(n));
  const long long c = c_seq(n);
  const long long shift = (v == 1) ? c : 2 * c;

  IndexSet out;
  out.order = n + 1;
  out.entries.reserve(2 * n + 2);
  if (j <= 2 * n) {
    // entries 1..j shifted, then the j-th entry again unshifted, then the
    // unshifted tail, then the closing marker
    for (int l = 0; l < j; ++l) out.entries.push_back(in.entries[l] + shift);
    for (int l = j - 1; l < 2 * n; ++l) out.entries.push_back(in.entries[l]);
    out.entries.push_back(3 * c + 1);
  } else {
    for (int l = 0; l < 2 * n; ++l) out.entries.push_back(in.entries[l] + shift);
    out.entries.push_back(v == 1 ? 3 * c + 2 : 3 * c + 3);
    out.entries.push_back(3 * c + 1);
  }
  if (fam == MapFamily::Tilde) {
    const long long t = 3 * c + 3;
    for (auto& e : out.entries) e += t;
  }
  return out;
}

IndexUniverse build_universe(int n) {
  if (n < 0) throw std::out_of_range("build_universe: n must be >= 0");
  if (n > 4) throw std::out_of_range("build_universe: n must be <= 4");

  IndexUniverse u;
  u.order = 0;
  u.all.push_back(IndexSet{});  // J_0 = { empty tuple }
  u.branches[{}] = u.all;

  for (int level = 0; level < n; ++level) {
    IndexUniverse next;
    next.order = level + 1;

    for (int j = 1; j <= 2 * level + 1; ++j) {
      for (int v = 1; v <= 2; ++v) {
        for (MapFamily fam : {MapFamily::Plain, MapFamily::Tilde}) {
          std::vector<IndexSet> img;
          img.reserve(u.all.size());
          for (const auto& s : u.all) img.push_back(apply_map(fam, j, v, s));
          next.images[{fam, j, v}] = std::move(img);
        }
      }
    }

    // J_{level+1}: for each j, the plain images for v=1,2 then the tilde ones
    for (int j = 1; j <= 2 * level + 1; ++j) {
      for (MapFamily fam : {MapFamily::Plain, MapFamily::Tilde}) {
        for (int v = 1; v <= 2; ++v) {
          const auto& img = next.images.at({fam, j, v});
          next.all.insert(next.all.end(), img.begin(), img.end());
        }
      }
    }

    for (const auto& [key, sets] : u.branches) {
      for (int j = 1; j <= 2 * level + 1; ++j) {
        std::vector<int> nk = key;
        nk.push_back(j);
        std::vector<IndexSet> out;
        out.reserve(4 * sets.size());
        for (MapFamily fam : {MapFamily::Plain, MapFamily::Tilde}) {
          for (int v = 1; v <= 2; ++v) {
            for (const auto& s : sets) out.push_back(apply_map(fam, j, v, s));
          }
        }
        next.branches[std::move(nk)] = std::move(out);
      }
    }

    u = std::move(next);
  }

  for (const auto& s : u.all) {
    for (int pos = 1; pos <= 2 * u.order; ++pos) {
      const long long val = s.entries[pos - 1];
      auto [it, fresh] = u.position_of.try_emplace(val, pos);
      if (!fresh && it->second != pos)
        throw std::logic_error("index value " + std::to_string(val) +
                               " occurs at two distinct positions");
    }
  }
  return u;
}

int depth(const IndexUniverse& u, long long s) {
  auto it = u.position_of.find(s);
  if (it == u.position_of.end())
    throw std::out_of_range("depth: value " + std::to_string(s) +
                            " does not occur at order " + std::to_string(u.order));
  return it->second;
}

std::vector<std::pair<IndexSet, IndexSet>> tail_matching_pairs(
    const IndexUniverse& u, const std::vector<int>& key, int s) {
  auto it = u.branches.find(key);
  if (it == u.branches.end())
    throw std::out_of_range("tail_matching_pairs: unknown branch key");
  const int width = 2 * u.order;
  if (s < 1 || s > width + 1)
    throw std::out_of_range("tail_matching_pairs: s must lie in [1, 2n+1]");

  std::vector<std::pair<IndexSet, IndexSet>> out;
  const auto& sets = it->second;
  for (const auto& a : sets) {
    for (const auto& b : sets) {
      bool ok = true;
      for (int pos = s; pos <= width; ++pos) {
        if (a.entries[pos - 1] != b.entries[pos - 1]) {
          ok = false;
          break;
        }
      }
      if (ok) out.emplace_back(a, b);
    }
  }
  return out;
}

}  // namespace haarx::indexsets
