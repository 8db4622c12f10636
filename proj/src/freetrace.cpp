#include "haarx/freetrace.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <functional>

namespace haarx::freetrace {

Atom haar_atom(int dir) {
  Atom a;
  a.tag = Atom::Tag::HaarU;
  a.dir = dir;
  return a;
}

Atom fubm_atom(int dir, int family, double time) {
  Atom a;
  a.tag = Atom::Tag::Fubm;
  a.dir = dir;
  a.family = family;
  a.time = time;
  return a;
}

Atom matrix_atom(int handle) {
  Atom a;
  a.tag = Atom::Tag::Matrix;
  a.handle = handle;
  return a;
}

FreeWord adjoint(const FreeWord& w) {
  FreeWord out;
  out.reserve(w.size());
  for (auto it = w.rbegin(); it != w.rend(); ++it)
    out.push_back(FreeFactor{it->atom, -it->power});
  return out;
}

FreeWord concat(const FreeWord& a, const FreeWord& b) {
  FreeWord out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// ---------------------------------------------------------------------------
// blocks

struct TraceContext::Block {
  int alg = 0;  // 0 = matrix algebra, >0 = a unitary algebra
  std::map<int, cplx> lau;                // Laurent coefficients (unitary blocks)
  std::map<std::vector<int>, cplx> mat;   // handle-sequence combination (matrix blocks)
  bool centered = false;

  bool is_unitary() const { return alg > 0; }
  bool is_zero() const { return is_unitary() ? lau.empty() : mat.empty(); }
  bool is_scalar() const {
    if (is_unitary()) return lau.size() == 1 && lau.begin()->first == 0;
    return mat.size() == 1 && mat.begin()->first.empty();
  }
  cplx scalar_value() const {
    return is_unitary() ? lau.begin()->second : mat.begin()->second;
  }
};

struct TraceContext::BlockTerm {
  std::vector<Block> blocks;
  cplx coef{1.0, 0.0};
};

namespace {

TraceContext::Block block_mul(const TraceContext::Block& a, const TraceContext::Block& b) {
  TraceContext::Block out;
  out.alg = a.alg;
  out.centered = false;
  if (a.alg > 0) {
    for (const auto& [ka, ca] : a.lau)
      for (const auto& [kb, cb] : b.lau) {
        cplx& slot = out.lau[ka + kb];
        slot += ca * cb;
        if (slot == cplx{0.0, 0.0}) out.lau.erase(ka + kb);
      }
  } else {
    for (const auto& [pa, ca] : a.mat)
      for (const auto& [pb, cb] : b.mat) {
        std::vector<int> seq = pa;
        seq.insert(seq.end(), pb.begin(), pb.end());
        cplx& slot = out.mat[seq];
        slot += ca * cb;
        if (slot == cplx{0.0, 0.0}) out.mat.erase(seq);
      }
  }
  return out;
}

void push_bytes(std::string& s, const void* p, std::size_t n) {
  s.append(static_cast<const char*>(p), n);
}

void push_i32(std::string& s, int v) { push_bytes(s, &v, 4); }

void push_cplx(std::string& s, cplx c) {
  const double re = c.real(), im = c.imag();
  push_bytes(s, &re, 8);
  push_bytes(s, &im, 8);
}

std::uint64_t double_bits(double x) { return std::bit_cast<std::uint64_t>(x); }

// m_1..m_nmax of the Brownian-motion unitary via the closed ODE hierarchy
//   dm_n/dt = -(n/2) m_n - (n/2) sum_{k=1}^{n-1} m_k m_{n-k}
std::vector<double> fubm_integrate(int nmax, double t) {
  std::vector<double> m(nmax + 1, 1.0);  // m[0] stays 1
  auto deriv = [nmax](const std::vector<double>& v, std::vector<double>& d) {
    d[0] = 0.0;
    for (int n = 1; n <= nmax; ++n) {
      double conv = 0.0;
      for (int k = 1; k < n; ++k) conv += v[k] * v[n - k];
      d[n] = -0.5 * n * (v[n] + conv);
    }
  };
  const double h0 = 1e-3;
  const long long full = static_cast<long long>(t / h0);
  std::vector<double> k1(nmax + 1), k2(nmax + 1), k3(nmax + 1), k4(nmax + 1),
      tmp(nmax + 1);
  double done = 0.0;
  for (long long s = 0; s <= full; ++s) {
    const double h = (s < full) ? h0 : t - done;
    if (h <= 0.0) break;
    deriv(m, k1);
    for (int i = 0; i <= nmax; ++i) tmp[i] = m[i] + 0.5 * h * k1[i];
    deriv(tmp, k2);
    for (int i = 0; i <= nmax; ++i) tmp[i] = m[i] + 0.5 * h * k2[i];
    deriv(tmp, k3);
    for (int i = 0; i <= nmax; ++i) tmp[i] = m[i] + h * k3[i];
    deriv(tmp, k4);
    for (int i = 0; i <= nmax; ++i)
      m[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    done += h;
  }
  return std::vector<double>(m.begin() + 1, m.end());
}

}  // namespace

// ---------------------------------------------------------------------------
// registry

int TraceContext::add_matrix(Eigen::MatrixXcd m) {
  if (dim_ == 0) dim_ = static_cast<int>(m.rows());
  if (m.rows() != dim_ || m.cols() != dim_)
    throw std::invalid_argument("add_matrix: dimension mismatch");
  matrices_.push_back(std::move(m));
  mat_fro_.push_back(matrices_.back().norm());
  return static_cast<int>(matrices_.size()) - 1;
}

const Eigen::MatrixXcd& TraceContext::matrix(int handle) const {
  if (handle < 0 || handle >= static_cast<int>(matrices_.size()))
    throw std::out_of_range("matrix handle out of range");
  return matrices_[handle];
}

double TraceContext::fubm_moment(int n, double t) {
  n = std::abs(n);
  if (n == 0) return 1.0;
  if (t < 0.0) throw std::domain_error("fubm_moment: negative time");
  if (t == 0.0) return 1.0;
  auto& v = fubm_cache_[double_bits(t)];
  if (static_cast<int>(v.size()) < n) v = fubm_integrate(std::max(n, 8), t);
  return v[n - 1];
}

int TraceContext::alg_id(const Atom& a) {
  const auto key = std::make_tuple(static_cast<int>(a.tag), a.dir, a.family,
                                   a.tag == Atom::Tag::Fubm ? double_bits(a.time) : 0);
  auto [it, fresh] = alg_ids_.try_emplace(key, static_cast<int>(algs_.size()) + 1);
  if (fresh) algs_.push_back(AlgInfo{a.tag, a.dir, a.family,
                                     a.tag == Atom::Tag::Fubm ? double_bits(a.time) : 0});
  return it->second;
}

void TraceContext::append_atom_blocks(std::vector<Block>& bs, const FreeFactor& f) {
  if (f.power == 0) return;
  Block b;
  if (f.atom.tag == Atom::Tag::Matrix) {
    if (f.atom.handle < 0 || f.atom.handle >= static_cast<int>(matrices_.size()))
      throw std::out_of_range("matrix handle out of range");
    b.alg = 0;
    std::vector<int> seq;
    const int e = (f.power > 0) ? f.atom.handle + 1 : -(f.atom.handle + 1);
    for (int k = 0; k < std::abs(f.power); ++k) seq.push_back(e);
    b.mat[seq] = cplx{1.0, 0.0};
  } else {
    b.alg = alg_id(f.atom);
    b.lau[f.power] = cplx{1.0, 0.0};
  }
  if (!bs.empty() && bs.back().alg == b.alg)
    bs.back() = block_mul(bs.back(), b);
  else
    bs.push_back(std::move(b));
}

std::vector<TraceContext::Block> TraceContext::word_to_blocks(const FreeWord& w) {
  // one Brownian family must not appear at two distinct times in one word
  std::map<std::pair<int, int>, double> seen;
  for (const auto& f : w) {
    if (f.atom.tag != Atom::Tag::Fubm) continue;
    auto [it, fresh] = seen.try_emplace({f.atom.dir, f.atom.family}, f.atom.time);
    if (!fresh && it->second != f.atom.time)
      throw std::invalid_argument("one Brownian family used at two times in a word");
  }
  std::vector<Block> bs;
  for (const auto& f : w) append_atom_blocks(bs, f);
  return bs;
}

// ---------------------------------------------------------------------------
// means and norms

cplx TraceContext::mat_ts(const std::vector<int>& seq) {
  if (seq.empty()) return cplx{1.0, 0.0};
  auto it = ts_cache_.find(seq);
  if (it != ts_cache_.end()) return it->second;
  auto fetch = [this](int e) -> Eigen::MatrixXcd {
    const Eigen::MatrixXcd& m = matrices_[std::abs(e) - 1];
    return e > 0 ? m : Eigen::MatrixXcd(m.adjoint());
  };
  cplx tr;
  if (seq.size() == 1) {
    tr = fetch(seq[0]).trace();
  } else {
    Eigen::MatrixXcd p = fetch(seq[0]);
    for (std::size_t i = 1; i + 1 < seq.size(); ++i) p = p * fetch(seq[i]);
    const Eigen::MatrixXcd last = fetch(seq.back());
    tr = (p.cwiseProduct(last.transpose())).sum();
  }
  const cplx val = tr / static_cast<double>(dim_);
  ts_cache_[seq] = val;
  return val;
}

cplx TraceContext::block_mean(const Block& b) {
  cplx acc{0.0, 0.0};
  if (b.is_unitary()) {
    const AlgInfo& info = algs_[b.alg - 1];
    for (const auto& [k, c] : b.lau) {
      if (info.tag == Atom::Tag::HaarU) {
        if (k == 0) acc += c;
      } else {
        acc += c * fubm_moment(k, std::bit_cast<double>(info.time_bits));
      }
    }
  } else {
    for (const auto& [seq, c] : b.mat) acc += c * mat_ts(seq);
  }
  return acc;
}

double TraceContext::block_norm1(const Block& b) {
  double acc = 0.0;
  if (b.is_unitary()) {
    for (const auto& [k, c] : b.lau) acc += std::abs(c);
  } else {
    for (const auto& [seq, c] : b.mat) {
      double n = std::abs(c);
      for (int e : seq) n *= mat_fro_[std::abs(e) - 1];
      acc += n;
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// the centering recursion

bool TraceContext::normalize(std::vector<Block>& bs, cplx& scalar) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < bs.size(); ++i) {
      if (bs[i].is_zero()) return false;
      if (bs[i].is_scalar()) {
        scalar *= bs[i].scalar_value();
        bs.erase(bs.begin() + i);
        changed = true;
        break;
      }
    }
    if (changed) continue;
    for (std::size_t i = 0; i + 1 < bs.size(); ++i) {
      if (bs[i].alg == bs[i + 1].alg) {
        bs[i] = block_mul(bs[i], bs[i + 1]);
        bs.erase(bs.begin() + i + 1);
        changed = true;
        break;
      }
    }
    if (changed) continue;
    if (bs.size() >= 2 && bs.front().alg == bs.back().alg) {
      Block merged = block_mul(bs.back(), bs.front());
      bs.pop_back();
      bs.front() = std::move(merged);
      changed = true;
    }
  }
  return true;
}

std::string TraceContext::serialize(const std::vector<Block>& bs) const {
  std::string s;
  s.reserve(bs.size() * 48);
  for (const auto& b : bs) {
    push_i32(s, b.alg);
    s.push_back(b.centered ? 1 : 0);
    if (b.is_unitary()) {
      push_i32(s, static_cast<int>(b.lau.size()));
      for (const auto& [k, c] : b.lau) {
        push_i32(s, k);
        push_cplx(s, c);
      }
    } else {
      push_i32(s, static_cast<int>(b.mat.size()));
      for (const auto& [seq, c] : b.mat) {
        push_i32(s, static_cast<int>(seq.size()));
        for (int e : seq) push_i32(s, e);
        push_cplx(s, c);
      }
    }
  }
  return s;
}

cplx TraceContext::trace_blocks(std::vector<Block> bs) {
  cplx scalar{1.0, 0.0};
  if (!normalize(bs, scalar)) return cplx{0.0, 0.0};
  return scalar * trace_core(bs);
}

cplx TraceContext::trace_core(std::vector<Block>& bs) {
  if (bs.empty()) return cplx{1.0, 0.0};
  if (bs.size() == 1) return block_mean(bs[0]);

  const std::string key = serialize(bs);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  std::size_t j = bs.size();
  for (std::size_t i = 0; i < bs.size(); ++i) {
    if (!bs[i].centered) {
      j = i;
      break;
    }
  }

  cplx result{0.0, 0.0};
  if (j == bs.size()) {
    // alternating product of centered elements from distinct algebras
    result = cplx{0.0, 0.0};
  } else {
    const cplx mu = block_mean(bs[j]);
    std::vector<Block> centered = bs;
    Block& cb = centered[j];
    if (cb.is_unitary()) {
      cplx& slot = cb.lau[0];
      slot -= mu;
      if (slot == cplx{0.0, 0.0}) cb.lau.erase(0);
    } else {
      cplx& slot = cb.mat[{}];
      slot -= mu;
      if (slot == cplx{0.0, 0.0}) cb.mat.erase(std::vector<int>{});
    }
    cb.centered = true;
    result = trace_blocks(std::move(centered));
    if (mu != cplx{0.0, 0.0}) {
      std::vector<Block> rest = bs;
      rest.erase(rest.begin() + j);
      result += mu * trace_blocks(std::move(rest));
    }
  }
  memo_[key] = result;
  return result;
}

cplx TraceContext::trace(const FreeWord& w) { return trace_blocks(word_to_blocks(w)); }

void TraceContext::clear_trace_memo() { memo_.clear(); }

// ---------------------------------------------------------------------------
// polynomial evaluation with exponential atoms

namespace {

double exp_tail(double rho, int k) {
  // sum_{j > k} rho^j / j!
  double term = 1.0;
  for (int j = 1; j <= k + 1; ++j) term *= rho / j;
  double acc = 0.0;
  for (int j = k + 1; j < k + 400; ++j) {
    acc += term;
    term *= rho / (j + 1);
    if (term < 1e-300) break;
  }
  return acc;
}

}  // namespace

std::vector<TraceContext::BlockTerm> TraceContext::letters_to_terms(
    const ncalg::NCWord& w, const Assignment& asg, const EvalOptions& opts,
    EvalReport& rep) {
  using ncalg::Kind;
  using ncalg::Letter;
  using ncalg::ExpAtom;

  auto lookup = [&asg](const Letter& l) -> FreeWord {
    if (l.kind == Kind::U || l.kind == Kind::V) {
      auto it = asg.u.find(l.index);
      if (it == asg.u.end())
        throw std::invalid_argument("no assignment for U" + std::to_string(l.index));
      return l.kind == Kind::U ? it->second : adjoint(it->second);
    }
    auto it = asg.z.find(l.index);
    if (it == asg.z.end())
      throw std::invalid_argument("no assignment for Z" + std::to_string(l.index));
    return l.kind == Kind::Z ? it->second : adjoint(it->second);
  };

  auto combine = [](std::vector<BlockTerm>&& in, const TraceContext* self) {
    std::map<std::string, BlockTerm> bykey;
    for (auto& t : in) {
      std::string k = self->serialize(t.blocks);
      auto [it, fresh] = bykey.try_emplace(std::move(k), t);
      if (!fresh) it->second.coef += t.coef;
    }
    std::vector<BlockTerm> out;
    out.reserve(bykey.size());
    for (auto& [k, t] : bykey)
      if (t.coef != cplx{0.0, 0.0}) out.push_back(std::move(t));
    return out;
  };

  auto mul_states = [&](const std::vector<BlockTerm>& a,
                        const std::vector<BlockTerm>& b) {
    std::vector<BlockTerm> out;
    out.reserve(a.size() * b.size());
    for (const auto& ta : a) {
      for (const auto& tb : b) {
        BlockTerm t;
        t.coef = ta.coef * tb.coef;
        t.blocks = ta.blocks;
        for (const auto& blk : tb.blocks) {
          if (!t.blocks.empty() && t.blocks.back().alg == blk.alg)
            t.blocks.back() = block_mul(t.blocks.back(), blk);
          else
            t.blocks.push_back(blk);
        }
        out.push_back(std::move(t));
      }
    }
    if (out.size() > opts.term_budget)
      throw std::runtime_error("series expansion exceeded the term budget");
    return combine(std::move(out), this);
  };

  auto state_norm1 = [this](const std::vector<BlockTerm>& st) {
    double acc = 0.0;
    for (const auto& t : st) {
      double n = std::abs(t.coef);
      for (const auto& b : t.blocks) n *= block_norm1(b);
      acc += n;
    }
    return acc;
  };

  std::function<std::vector<BlockTerm>(const ncalg::NCPoly&)> poly_state =
      [&](const ncalg::NCPoly& p) {
        std::vector<BlockTerm> acc;
        for (const auto& [pw, pc] : p.terms()) {
          auto st = letters_to_terms(pw, asg, opts, rep);
          for (auto& t : st) {
            t.coef *= pc;
            acc.push_back(std::move(t));
          }
        }
        return combine(std::move(acc), this);
      };

  std::vector<BlockTerm> state;
  state.push_back(BlockTerm{});  // empty word, coefficient 1

  for (const auto& f : w.factors) {
    if (const Letter* l = std::get_if<Letter>(&f)) {
      const FreeWord img = lookup(*l);
      for (auto& t : state)
        for (const auto& ff : img) append_atom_blocks(t.blocks, ff);
      continue;
    }
    const ExpAtom& e = std::get<ExpAtom>(f);
    const std::vector<BlockTerm> rstate = poly_state(*e.exponent);
    const double rho = std::abs(e.scalar) * state_norm1(rstate);

    std::vector<BlockTerm> series;
    series.push_back(BlockTerm{});
    std::vector<BlockTerm> power;
    power.push_back(BlockTerm{});
    double tail = exp_tail(rho, 0);
    int used = 0;
    for (int k = 1; k <= opts.max_series_order; ++k) {
      power = mul_states(power, rstate);
      for (auto& t : power) t.coef *= e.scalar / static_cast<double>(k);
      std::vector<BlockTerm> merged = series;
      merged.insert(merged.end(), power.begin(), power.end());
      series = combine(std::move(merged), this);
      used = k;
      tail = exp_tail(rho, k);
      if (tail <= opts.tail_tol) break;
    }
    if (tail > opts.guard_tol)
      throw std::runtime_error("exponential series did not converge (tail bound " +
                               fmt_double(tail) + ")");
    rep.series_order = std::max(rep.series_order, used);
    rep.tail_bound += tail;
    state = mul_states(state, series);
  }
  return state;
}

EvalReport TraceContext::eval_ncpoly_report(const ncalg::NCPoly& p, const Assignment& asg,
                                            const EvalOptions& opts) {
  EvalReport rep;
  cplx acc{0.0, 0.0};
  for (const auto& [w, c] : p.terms()) {
    auto state = letters_to_terms(w, asg, opts, rep);
    cplx wval{0.0, 0.0};
    for (const auto& t : state) wval += t.coef * trace_blocks(t.blocks);
    acc += c * wval;
  }
  rep.value = acc;
  return rep;
}

cplx TraceContext::eval_ncpoly(const ncalg::NCPoly& p, const Assignment& asg) {
  return eval_ncpoly_report(p, asg).value;
}

}  // namespace haarx::freetrace
