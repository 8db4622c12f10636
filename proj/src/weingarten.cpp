#include "haarx/weingarten.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <stdexcept>

namespace haarx::wg {

// ---------------------------------------------------------------------------
// permutations and partitions

Perm p_identity(int k) {
  Perm p(k);
  std::iota(p.begin(), p.end(), 0);
  return p;
}

Perm p_mul(const Perm& a, const Perm& b) {
  Perm out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[b[i]];
  return out;
}

Perm p_inv(const Perm& a) {
  Perm out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[a[i]] = static_cast<int>(i);
  return out;
}

std::vector<int> p_type(const Perm& a) {
  std::vector<bool> seen(a.size(), false);
  std::vector<int> type;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (seen[i]) continue;
    int len = 0;
    for (std::size_t j = i; !seen[j]; j = a[j]) {
      seen[j] = true;
      ++len;
    }
    type.push_back(len);
  }
  std::sort(type.rbegin(), type.rend());
  return type;
}

int p_cycles(const Perm& a) { return static_cast<int>(p_type(a).size()); }

std::vector<Perm> all_perms(int k) {
  Perm p = p_identity(k);
  std::vector<Perm> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

static void partitions_rec(int rest, int maxpart, std::vector<int>& cur,
                           std::vector<std::vector<int>>& out) {
  if (rest == 0) {
    out.push_back(cur);
    return;
  }
  for (int p = std::min(rest, maxpart); p >= 1; --p) {
    cur.push_back(p);
    partitions_rec(rest - p, p, cur, out);
    cur.pop_back();
  }
}

std::vector<std::vector<int>> partitions(int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  partitions_rec(k, k, cur, out);
  return out;
}

static std::vector<int> conjugate(const std::vector<int>& lambda) {
  if (lambda.empty()) return {};
  std::vector<int> out(lambda[0], 0);
  for (int row : lambda)
    for (int j = 0; j < row; ++j) ++out[j];
  return out;
}

long long hook_dimension(const std::vector<int>& lambda) {
  const std::vector<int> conj = conjugate(lambda);
  long long total = 0;
  for (int r : lambda) total += r;
  // k! / prod(hooks), computed as an exact rational to stay integral
  bigrat acc = 1;
  for (long long v = 2; v <= total; ++v) acc *= v;
  for (std::size_t i = 0; i < lambda.size(); ++i)
    for (int j = 0; j < lambda[i]; ++j) {
      const long long hook = (lambda[i] - j) + (conj[j] - static_cast<long long>(i)) - 1;
      acc /= hook;
    }
  return acc.convert_to<long long>();
}

long long character(const std::vector<int>& lambda, const std::vector<int>& mu) {
  long long size = 0;
  for (int r : lambda) size += r;
  if (size == 0) return 1;
  const int r = mu.front();
  const std::vector<int> rest(mu.begin() + 1, mu.end());
  const int rows = static_cast<int>(lambda.size());
  long long total = 0;
  for (int s = 0; s < rows; ++s) {
    for (int e = s; e < rows; ++e) {
      // border strip spanning rows s..e
      std::vector<int> next = lambda;
      bool ok = true;
      for (int j = s; j < e; ++j) {
        next[j] = lambda[j + 1] - 1;
        if (next[j] < 0) ok = false;
      }
      next[e] = lambda[s] - r + (e - s);
      if (next[e] < 0) ok = false;
      for (std::size_t j = 0; ok && j + 1 < next.size(); ++j)
        if (next[j] < next[j + 1]) ok = false;
      if (!ok) continue;
      while (!next.empty() && next.back() == 0) next.pop_back();
      const long long sign = ((e - s) % 2 == 0) ? 1 : -1;
      total += sign * character(next, rest);
    }
  }
  return total;
}

// ---------------------------------------------------------------------------
// polynomials and rational functions of N

Poly Poly::zero() { return Poly{}; }

Poly Poly::constant(const bigrat& v) {
  Poly p;
  if (v != 0) p.c.push_back(v);
  return p;
}

Poly Poly::N() { return monomial(1, 1); }

Poly Poly::monomial(int power, const bigrat& v) {
  Poly p;
  if (v != 0) {
    p.c.assign(power + 1, bigrat(0));
    p.c[power] = v;
  }
  return p;
}

void Poly::trim() {
  while (!c.empty() && c.back() == 0) c.pop_back();
}

bigrat Poly::eval(const bigrat& x) const {
  bigrat acc = 0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * x + *it;
  return acc;
}

Poly operator+(const Poly& a, const Poly& b) {
  Poly out;
  out.c.resize(std::max(a.c.size(), b.c.size()), bigrat(0));
  for (std::size_t i = 0; i < a.c.size(); ++i) out.c[i] += a.c[i];
  for (std::size_t i = 0; i < b.c.size(); ++i) out.c[i] += b.c[i];
  out.trim();
  return out;
}

Poly operator-(const Poly& a, const Poly& b) {
  Poly out;
  out.c.resize(std::max(a.c.size(), b.c.size()), bigrat(0));
  for (std::size_t i = 0; i < a.c.size(); ++i) out.c[i] += a.c[i];
  for (std::size_t i = 0; i < b.c.size(); ++i) out.c[i] -= b.c[i];
  out.trim();
  return out;
}

Poly operator*(const Poly& a, const Poly& b) {
  if (a.is_zero() || b.is_zero()) return Poly::zero();
  Poly out;
  out.c.assign(a.c.size() + b.c.size() - 1, bigrat(0));
  for (std::size_t i = 0; i < a.c.size(); ++i)
    for (std::size_t j = 0; j < b.c.size(); ++j) out.c[i + j] += a.c[i] * b.c[j];
  out.trim();
  return out;
}

bool operator==(const Poly& a, const Poly& b) { return a.c == b.c; }

std::pair<Poly, Poly> poly_divmod(const Poly& a, const Poly& b) {
  if (b.is_zero()) throw std::domain_error("poly_divmod by zero");
  Poly rem = a;
  Poly quot;
  if (rem.deg() >= b.deg()) quot.c.assign(rem.deg() - b.deg() + 1, bigrat(0));
  while (!rem.is_zero() && rem.deg() >= b.deg()) {
    const int shift = rem.deg() - b.deg();
    const bigrat f = rem.c.back() / b.c.back();
    quot.c[shift] += f;
    for (std::size_t i = 0; i < b.c.size(); ++i) rem.c[shift + i] -= f * b.c[i];
    rem.trim();
  }
  quot.trim();
  return {quot, rem};
}

Poly poly_gcd(Poly a, Poly b) {
  while (!b.is_zero()) {
    Poly r = poly_divmod(a, b).second;
    a = std::move(b);
    b = std::move(r);
  }
  if (!a.is_zero()) {
    const bigrat lead = a.c.back();
    for (auto& x : a.c) x /= lead;
  }
  return a;
}

RatFn RatFn::zero() { return RatFn{}; }

RatFn RatFn::constant(const bigrat& v) {
  RatFn f;
  f.num = Poly::constant(v);
  return f;
}

RatFn RatFn::from_poly(Poly p) {
  RatFn f;
  f.num = std::move(p);
  return f;
}

RatFn RatFn::N() { return from_poly(Poly::N()); }

void RatFn::normalize() {
  if (num.is_zero()) {
    den = Poly::constant(1);
    return;
  }
  const Poly g = poly_gcd(num, den);
  if (g.deg() > 0) {
    num = poly_divmod(num, g).first;
    den = poly_divmod(den, g).first;
  }
  const bigrat lead = den.c.back();
  for (auto& x : num.c) x /= lead;
  for (auto& x : den.c) x /= lead;
}

bigrat RatFn::eval(const bigrat& x) const {
  const bigrat d = den.eval(x);
  if (d == 0) throw std::domain_error("RatFn::eval at a pole");
  return num.eval(x) / d;
}

RatFn operator+(const RatFn& a, const RatFn& b) {
  RatFn out;
  out.num = a.num * b.den + b.num * a.den;
  out.den = a.den * b.den;
  out.normalize();
  return out;
}

RatFn operator-(const RatFn& a, const RatFn& b) {
  RatFn out;
  out.num = a.num * b.den - b.num * a.den;
  out.den = a.den * b.den;
  out.normalize();
  return out;
}

RatFn operator*(const RatFn& a, const RatFn& b) {
  RatFn out;
  out.num = a.num * b.num;
  out.den = a.den * b.den;
  out.normalize();
  return out;
}

RatFn operator/(const RatFn& a, const RatFn& b) {
  if (b.is_zero()) throw std::domain_error("RatFn division by zero");
  RatFn out;
  out.num = a.num * b.den;
  out.den = a.den * b.num;
  out.normalize();
  return out;
}

bool operator==(const RatFn& a, const RatFn& b) {
  RatFn x = a, y = b;
  x.normalize();
  y.normalize();
  return x.num == y.num && x.den == y.den;
}

std::vector<bigrat> series_coefficients(const RatFn& f, int order, bool require_even) {
  if (f.is_zero()) return std::vector<bigrat>(order + 1, bigrat(0));
  const int dn = f.num.deg();
  const int dd = f.den.deg();
  // in x = 1/N: f = N^{dn-dd} * A(x)/B(x) with A, B the reversed polynomials
  const int lead = dn - dd;
  const int need = order + std::max(lead, 0);
  std::vector<bigrat> A(need + 1, bigrat(0)), B(need + 1, bigrat(0));
  for (int i = 0; i <= dn && i <= need; ++i) A[i] = f.num.c[dn - i];
  for (int i = 0; i <= dd && i <= need; ++i) B[i] = f.den.c[dd - i];
  std::vector<bigrat> S(need + 1, bigrat(0));
  for (int m = 0; m <= need; ++m) {
    bigrat acc = A[m];
    for (int j = 1; j <= m; ++j) acc -= B[j] * S[m - j];
    S[m] = acc / B[0];
  }
  // coefficient of N^{-p} is S[p + lead]; powers N^{+q}, q>0, must vanish
  for (int q = 1; q <= lead; ++q)
    if (S[lead - q] != 0)
      throw std::domain_error("expectation grows with N (positive power survives)");
  std::vector<bigrat> out(order + 1, bigrat(0));
  for (int p = 0; p <= order; ++p) {
    const int idx = p + lead;
    if (idx >= 0 && idx <= need) out[p] = S[idx];
  }
  if (require_even) {
    for (int p = 1; p <= order; p += 2)
      if (out[p] != 0)
        throw std::runtime_error(
            "odd power 1/N^" + std::to_string(p) +
            " has nonzero coefficient; expected an even expansion");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weingarten values

WgTable::WgTable(int k, long long N) : k_(k), N_(N) {
  if (k < 1 || k > 5) throw std::invalid_argument("WgTable: k must lie in [1,5]");
  if (N < k) throw std::invalid_argument("WgTable: requires N >= k");

  const std::vector<Perm> perms = all_perms(k);
  std::vector<std::vector<int>> types;
  std::vector<Perm> reps;
  std::map<std::vector<int>, int> type_index;
  for (const auto& p : perms) {
    auto t = p_type(p);
    if (type_index.emplace(t, static_cast<int>(types.size())).second) {
      types.push_back(t);
      reps.push_back(p);
    }
  }
  const int m = static_cast<int>(types.size());

  std::vector<bigrat> npow(k + 1, bigrat(1));
  for (int i = 1; i <= k; ++i) npow[i] = npow[i - 1] * N;

  std::vector<std::vector<bigrat>> A(m, std::vector<bigrat>(m + 1, bigrat(0)));
  const std::vector<int> id_type(static_cast<std::size_t>(k), 1);
  for (int s = 0; s < m; ++s) {
    for (const auto& tau : perms) {
      const Perm prod = p_mul(reps[s], p_inv(tau));
      A[s][type_index.at(p_type(tau))] += npow[p_cycles(prod)];
    }
    A[s][m] = (types[s] == id_type) ? 1 : 0;
  }

  // Gaussian elimination
  for (int col = 0; col < m; ++col) {
    int piv = -1;
    for (int r = col; r < m; ++r)
      if (A[r][col] != 0) {
        piv = r;
        break;
      }
    if (piv < 0) throw std::logic_error("WgTable: singular Gram system");
    std::swap(A[col], A[piv]);
    const bigrat d = A[col][col];
    for (int j = col; j <= m; ++j) A[col][j] /= d;
    for (int r = 0; r < m; ++r) {
      if (r == col || A[r][col] == 0) continue;
      const bigrat f = A[r][col];
      for (int j = col; j <= m; ++j) A[r][j] -= f * A[col][j];
    }
  }
  for (int s = 0; s < m; ++s) by_type_[types[s]] = A[s][m];

  // re-verify the defining identity for every sigma, not just representatives
  for (const auto& sigma : perms) {
    bigrat acc = 0;
    for (const auto& tau : perms)
      acc += npow[p_cycles(p_mul(sigma, p_inv(tau)))] * by_type_.at(p_type(tau));
    const bigrat want = (p_type(sigma) == id_type) ? 1 : 0;
    if (acc != want) throw std::logic_error("WgTable: Gram identity failed");
  }
}

const bigrat& WgTable::at_type(const std::vector<int>& type) const {
  auto it = by_type_.find(type);
  if (it == by_type_.end()) throw std::out_of_range("WgTable: unknown cycle type");
  return it->second;
}

const bigrat& WgTable::at(const Perm& sigma) const { return at_type(p_type(sigma)); }

RatFn wg_symbolic(int k, const Perm& sigma) {
  static std::map<std::pair<int, std::vector<int>>, RatFn> cache;
  const auto key = std::make_pair(k, p_type(sigma));
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  bigrat kfact = 1;
  for (int i = 2; i <= k; ++i) kfact *= i;

  RatFn acc = RatFn::zero();
  for (const auto& lambda : partitions(k)) {
    const long long f = hook_dimension(lambda);
    const long long chi = character(lambda, key.second);
    if (chi == 0) continue;
    Poly den = Poly::constant(1);
    for (std::size_t i = 0; i < lambda.size(); ++i)
      for (int j = 0; j < lambda[i]; ++j)
        den = den * (Poly::N() + Poly::constant(j - static_cast<int>(i)));
    RatFn term;
    term.num = Poly::constant(bigrat(f) * chi / kfact);
    term.den = den;
    term.normalize();
    acc = acc + term;
  }
  cache[key] = acc;
  return acc;
}

// ---------------------------------------------------------------------------
// word expectations

namespace {

std::string serialize_words(std::vector<TraceWord> words) {
  // canonical: rotate each word to its minimal form, then sort the list
  auto tok_le = [](const Tok& a, const Tok& b) {
    if (a.kind != b.kind) return a.kind < b.kind;
    if (a.uidx != b.uidx) return a.uidx < b.uidx;
    return a.id < b.id;
  };
  auto word_lt = [&](const TraceWord& a, const TraceWord& b) {
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      if (tok_le(a[i], b[i]) && !tok_le(b[i], a[i])) return true;
      if (tok_le(b[i], a[i]) && !tok_le(a[i], b[i])) return false;
    }
    return a.size() < b.size();
  };
  for (auto& w : words) {
    if (w.empty()) continue;
    TraceWord best = w;
    TraceWord rot = w;
    for (std::size_t r = 1; r < w.size(); ++r) {
      std::rotate(rot.begin(), rot.begin() + 1, rot.end());
      if (word_lt(rot, best)) best = rot;
    }
    w = best;
  }
  std::sort(words.begin(), words.end(), word_lt);
  std::string s;
  for (const auto& w : words) {
    s += '[';
    for (const auto& t : w) {
      s.push_back(static_cast<char>('a' + static_cast<int>(t.kind)));
      s += std::to_string(t.uidx);
      s += ',';
      s += std::to_string(t.id);
      s += ';';
    }
    s += ']';
  }
  return s;
}

std::vector<int> mat_ids(const TraceWord& w) {
  std::vector<int> ids;
  ids.reserve(w.size());
  for (const auto& t : w) ids.push_back(t.id);
  return ids;
}

template <class Pol>
typename Pol::value_t expect_rec(const std::vector<TraceWord>& words, Pol& pol) {
  using V = typename Pol::value_t;

  V pref = pol.one();
  std::vector<TraceWord> active;
  std::set<int> uset;
  for (const auto& w : words) {
    bool hasu = false;
    for (const auto& t : w)
      if (t.kind != Tok::Kind::Mat) {
        hasu = true;
        uset.insert(t.uidx);
      }
    if (hasu)
      active.push_back(w);
    else
      pref = pol.mul(pref, pol.tr_word(mat_ids(w)));
  }
  if (active.empty()) return pref;
  if (uset.size() > 2)
    throw std::invalid_argument("at most two distinct unitaries are supported");

  const std::string memo_key = serialize_words(active);
  if (auto it = pol.memo.find(memo_key); it != pol.memo.end())
    return pol.mul(pref, it->second);

  const int uidx = *uset.rbegin();

  // occurrences of the unitary being integrated, with their trailing segments
  struct Occ {
    bool star;
    TraceWord seg;
    int next = -1;  // filled below: following occurrence in the same word
  };
  std::vector<Occ> occs;
  std::vector<TraceWord> passthrough;
  for (const auto& w : active) {
    std::vector<int> pos;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i].kind != Tok::Kind::Mat && w[i].uidx == uidx)
        pos.push_back(static_cast<int>(i));
    if (pos.empty()) {
      passthrough.push_back(w);
      continue;
    }
    const int base = static_cast<int>(occs.size());
    for (std::size_t a = 0; a < pos.size(); ++a) {
      Occ o;
      o.star = (w[pos[a]].kind == Tok::Kind::Ustar);
      const int from = pos[a] + 1;
      const int to = (a + 1 < pos.size()) ? pos[a + 1] : static_cast<int>(w.size());
      o.seg.assign(w.begin() + from, w.begin() + to);
      if (a + 1 == pos.size())  // wrap: prefix before the first occurrence
        o.seg.insert(o.seg.end(), w.begin(), w.begin() + pos[0]);
      o.next = base + static_cast<int>((a + 1) % pos.size());
      occs.push_back(std::move(o));
    }
  }

  std::vector<int> ulist, slist;  // indices into occs
  for (std::size_t i = 0; i < occs.size(); ++i)
    (occs[i].star ? slist : ulist).push_back(static_cast<int>(i));
  if (ulist.size() != slist.size()) {
    pol.memo.emplace(memo_key, pol.zero());
    return pol.zero();  // unbalanced: exactly zero by invariance
  }
  const int k = static_cast<int>(ulist.size());
  const int limit = (uset.size() > 1) ? 3 : 5;
  if (k > limit)
    throw std::invalid_argument("word order exceeds the supported pairing size");

  // group identical subproblems: (sigma tau^-1 type, residual words) -> count
  std::map<std::pair<std::vector<int>, std::string>,
           std::pair<long long, std::vector<TraceWord>>>
      groups;
  std::vector<int> occ_to_rank(occs.size());
  for (int r = 0; r < k; ++r) occ_to_rank[ulist[r]] = r;
  for (int s = 0; s < k; ++s) occ_to_rank[slist[s]] = s;

  const std::vector<Perm> perms = all_perms(k);
  for (const auto& sigma : perms) {
    for (const auto& tau : perms) {
      const Perm tauinv = p_inv(tau);
      // jump(next(o)) orbit structure; each orbit is one glued trace cycle
      auto jump = [&](int occ_idx) {
        const Occ& o = occs[occ_idx];
        if (!o.star) return slist[sigma[occ_to_rank[occ_idx]]];
        return ulist[tauinv[occ_to_rank[occ_idx]]];
      };
      std::vector<TraceWord> sub = passthrough;
      std::vector<bool> visited(occs.size(), false);
      for (std::size_t start = 0; start < occs.size(); ++start) {
        if (visited[start]) continue;
        TraceWord cyc;
        int cur = static_cast<int>(start);
        do {
          visited[cur] = true;
          cyc.insert(cyc.end(), occs[cur].seg.begin(), occs[cur].seg.end());
          cur = jump(occs[cur].next);
        } while (cur != static_cast<int>(start));
        sub.push_back(std::move(cyc));
      }
      auto key = std::make_pair(p_type(p_mul(sigma, p_inv(tau))), serialize_words(sub));
      auto [it, fresh] = groups.try_emplace(key, std::make_pair(0LL, sub));
      it->second.first += 1;
    }
  }

  V acc = pol.zero();
  for (const auto& [key, grp] : groups) {
    const V wgv = pol.wgvalue(k, key.first);
    const V subv = expect_rec(grp.second, pol);
    acc = pol.add(acc, pol.mul(pol.mul(wgv, pol.count(grp.first)), subv));
  }
  pol.memo.emplace(memo_key, acc);
  return pol.mul(pref, acc);
}

struct SymPolicy {
  using value_t = RatFn;
  const PatternTs* pattern;
  std::map<std::string, RatFn> memo;

  RatFn one() const { return RatFn::constant(1); }
  RatFn zero() const { return RatFn::zero(); }
  RatFn add(const RatFn& a, const RatFn& b) const { return a + b; }
  RatFn mul(const RatFn& a, const RatFn& b) const { return a * b; }
  RatFn count(long long c) const { return RatFn::constant(c); }
  RatFn tr_word(const std::vector<int>& ids) const {
    if (ids.empty()) return RatFn::N();
    return RatFn::N() * RatFn::constant((*pattern)(ids));
  }
  RatFn wgvalue(int k, const std::vector<int>& type) const {
    Perm rep;
    for (int len : type)
      for (int j = 0; j < len; ++j)
        rep.push_back(static_cast<int>(rep.size()) + ((j + 1 < len) ? 1 : -(len - 1)));
    return wg_symbolic(k, rep);
  }
};

struct NumPolicy {
  using value_t = cplx;
  long long N;
  const std::vector<Eigen::MatrixXcd>* mats;
  std::map<int, WgTable> tables;
  std::map<std::vector<int>, cplx> trcache;
  std::map<std::string, cplx> memo;

  cplx one() const { return cplx{1.0, 0.0}; }
  cplx zero() const { return cplx{0.0, 0.0}; }
  cplx add(cplx a, cplx b) const { return a + b; }
  cplx mul(cplx a, cplx b) const { return a * b; }
  cplx count(long long c) const { return cplx{static_cast<double>(c), 0.0}; }

  Eigen::MatrixXcd fetch(int id) const {
    const Eigen::MatrixXcd& m = (*mats)[std::abs(id) - 1];
    return id > 0 ? m : Eigen::MatrixXcd(m.adjoint());
  }
  cplx tr_word(const std::vector<int>& ids) {
    if (ids.empty()) return cplx{static_cast<double>(N), 0.0};
    auto it = trcache.find(ids);
    if (it != trcache.end()) return it->second;
    Eigen::MatrixXcd p = fetch(ids[0]);
    for (std::size_t i = 1; i < ids.size(); ++i) p = p * fetch(ids[i]);
    const cplx v = p.trace();
    trcache[ids] = v;
    return v;
  }
  cplx wgvalue(int k, const std::vector<int>& type) {
    auto it = tables.find(k);
    if (it == tables.end()) it = tables.emplace(k, WgTable(k, N)).first;
    return cplx{it->second.at_type(type).convert_to<double>(), 0.0};
  }
};

}  // namespace

RatFn expect_product_ts(const std::vector<TraceWord>& words, const PatternTs& pattern) {
  SymPolicy pol;
  pol.pattern = &pattern;
  RatFn v = expect_rec(words, pol);
  RatFn norm = RatFn::from_poly(Poly::monomial(static_cast<int>(words.size()), 1));
  return v / norm;
}

cplx expect_product_ts_numeric(const std::vector<TraceWord>& words,
                               const std::vector<Eigen::MatrixXcd>& mats) {
  long long N = 0;
  for (const auto& m : mats) N = m.rows();
  if (N == 0 && !mats.empty()) throw std::invalid_argument("empty matrix letters");
  if (mats.empty())
    throw std::invalid_argument("numeric expectation needs at least one matrix letter "
                                "to fix the dimension");
  NumPolicy pol;
  pol.N = N;
  pol.mats = &mats;
  cplx v = expect_rec(words, pol);
  return v / std::pow(static_cast<double>(N), static_cast<double>(words.size()));
}

TraceWord tokens_from_ncword(const ncalg::NCWord& w) {
  using ncalg::Kind;
  TraceWord out;
  for (const auto& f : w.factors) {
    const ncalg::Letter* l = std::get_if<ncalg::Letter>(&f);
    if (!l) throw std::invalid_argument("exponential atoms have no token form");
    Tok t;
    switch (l->kind) {
      case Kind::U: t.kind = Tok::Kind::U; t.uidx = l->index - 1; break;
      case Kind::V: t.kind = Tok::Kind::Ustar; t.uidx = l->index - 1; break;
      case Kind::Z: t.kind = Tok::Kind::Mat; t.id = l->index; break;
      case Kind::Y: t.kind = Tok::Kind::Mat; t.id = -l->index; break;
    }
    out.push_back(t);
  }
  return out;
}

bigrat balanced_diag_pattern(const std::vector<int>& ids) {
  return (ids.size() % 2 == 0) ? bigrat(1) : bigrat(0);
}

}  // namespace haarx::wg
