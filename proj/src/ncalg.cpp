#include "haarx/ncalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace haarx::ncalg {

bool is_unitary_kind(Kind k) { return k == Kind::U || k == Kind::V; }

Kind adjoint_kind(Kind k) {
  switch (k) {
    case Kind::U: return Kind::V;
    case Kind::V: return Kind::U;
    case Kind::Z: return Kind::Y;
    case Kind::Y: return Kind::Z;
  }
  return Kind::U;  // unreachable
}

int cmp(const Letter& a, const Letter& b) {
  if (a.kind != b.kind) return static_cast<int>(a.kind) < static_cast<int>(b.kind) ? -1 : 1;
  if (a.index != b.index) return a.index < b.index ? -1 : 1;
  return 0;
}

Letter adjoint(const Letter& l) { return Letter{adjoint_kind(l.kind), l.index}; }

static int cmp_double(double a, double b) {
  if (a < b) return -1;
  if (a > b) return 1;
  return 0;
}

static int cmp_cplx(cplx a, cplx b) {
  if (int c = cmp_double(a.real(), b.real())) return c;
  return cmp_double(a.imag(), b.imag());
}

int cmp(const ExpAtom& a, const ExpAtom& b) {
  if (int c = cmp_cplx(a.scalar, b.scalar)) return c;
  if (a.exponent == b.exponent) return 0;
  return cmp(*a.exponent, *b.exponent);
}

int cmp(const Factor& a, const Factor& b) {
  const bool la = std::holds_alternative<Letter>(a);
  const bool lb = std::holds_alternative<Letter>(b);
  if (la != lb) return la ? -1 : 1;  // letters sort before exp atoms
  if (la) return cmp(std::get<Letter>(a), std::get<Letter>(b));
  return cmp(std::get<ExpAtom>(a), std::get<ExpAtom>(b));
}

int NCWord::deg() const {
  int d = 0;
  for (const auto& f : factors)
    if (std::holds_alternative<Letter>(f)) ++d;
  return d;
}

bool NCWord::has_exp() const {
  for (const auto& f : factors)
    if (std::holds_alternative<ExpAtom>(f)) return true;
  return false;
}

int cmp(const NCWord& a, const NCWord& b) {
  const std::size_t n = std::min(a.factors.size(), b.factors.size());
  for (std::size_t i = 0; i < n; ++i)
    if (int c = cmp(a.factors[i], b.factors[i])) return c;
  if (a.factors.size() != b.factors.size())
    return a.factors.size() < b.factors.size() ? -1 : 1;
  return 0;
}

NCWord concat(const NCWord& a, const NCWord& b) {
  NCWord w;
  w.factors.reserve(a.factors.size() + b.factors.size());
  w.factors = a.factors;
  w.factors.insert(w.factors.end(), b.factors.begin(), b.factors.end());
  return w;
}

static Factor adjoint_factor(const Factor& f) {
  if (const Letter* l = std::get_if<Letter>(&f)) return adjoint(*l);
  const ExpAtom& e = std::get<ExpAtom>(f);
  // (exp(s R))* = exp(conj(s) R*)
  auto adj_exp = std::make_shared<NCPoly>(adjoint(*e.exponent));
  return ExpAtom{std::move(adj_exp), std::conj(e.scalar)};
}

NCWord adjoint(const NCWord& w) {
  NCWord out;
  out.factors.reserve(w.factors.size());
  for (auto it = w.factors.rbegin(); it != w.factors.rend(); ++it)
    out.factors.push_back(adjoint_factor(*it));
  return out;
}

NCPoly NCPoly::unit() {
  NCPoly p;
  p.add_term(NCWord{}, cplx{1.0, 0.0});
  return p;
}

NCPoly NCPoly::letter(Kind k, int index) {
  if (index < 1) throw std::out_of_range("letter index must be >= 1");
  NCWord w;
  w.factors.push_back(Letter{k, index});
  return from_word(w);
}

NCPoly NCPoly::from_word(NCWord w, cplx c) {
  NCPoly p;
  p.add_term(w, c);
  return p;
}

NCPoly NCPoly::exp_atom(const NCPoly& exponent, cplx scalar) {
  if (exponent.is_zero() || scalar == cplx{0.0, 0.0}) return unit();
  if (exponent.has_exp())
    throw std::invalid_argument("nested exponential atoms are not supported");
  NCWord w;
  w.factors.push_back(ExpAtom{std::make_shared<NCPoly>(exponent), scalar});
  return from_word(w);
}

int NCPoly::deg() const {
  int d = 0;
  for (const auto& [w, c] : terms_) d = std::max(d, w.deg());
  return d;
}

bool NCPoly::has_exp() const {
  for (const auto& [w, c] : terms_)
    if (w.has_exp()) return true;
  return false;
}

void NCPoly::add_term(const NCWord& w, cplx c) {
  if (c == cplx{0.0, 0.0}) return;
  auto [it, fresh] = terms_.try_emplace(w, c);
  if (!fresh) {
    it->second += c;
    if (it->second == cplx{0.0, 0.0}) terms_.erase(it);
  }
}

int cmp(const NCPoly& a, const NCPoly& b) {
  auto ia = a.terms().begin(), ib = b.terms().begin();
  for (; ia != a.terms().end() && ib != b.terms().end(); ++ia, ++ib) {
    if (int c = cmp(ia->first, ib->first)) return c;
    if (int c = cmp_cplx(ia->second, ib->second)) return c;
  }
  if (ia != a.terms().end()) return 1;
  if (ib != b.terms().end()) return -1;
  return 0;
}

NCPoly add(const NCPoly& a, const NCPoly& b) {
  NCPoly out = a;
  for (const auto& [w, c] : b.terms()) out.add_term(w, c);
  return out;
}

NCPoly sub(const NCPoly& a, const NCPoly& b) {
  NCPoly out = a;
  for (const auto& [w, c] : b.terms()) out.add_term(w, -c);
  return out;
}

NCPoly scale(const NCPoly& a, cplx c) {
  NCPoly out;
  for (const auto& [w, k] : a.terms()) out.add_term(w, k * c);
  return out;
}

NCPoly mul(const NCPoly& a, const NCPoly& b) {
  NCPoly out;
  for (const auto& [wa, ca] : a.terms())
    for (const auto& [wb, cb] : b.terms()) out.add_term(concat(wa, wb), ca * cb);
  return out;
}

NCPoly adjoint(const NCPoly& p) {
  NCPoly out;
  for (const auto& [w, c] : p.terms()) out.add_term(adjoint(w), std::conj(c));
  return out;
}

double norm_a(const NCPoly& p, double A) {
  double s = 0.0;
  for (const auto& [w, c] : p.terms()) s += std::abs(c) * std::pow(A, w.deg());
  return s;
}

TensorPoly TensorPoly::simple(cplx c, NCWord l, NCWord r) {
  TensorPoly t;
  t.add_term(c, l, r);
  return t;
}

void TensorPoly::add_term(cplx c, const NCWord& l, const NCWord& r) {
  if (c == cplx{0.0, 0.0}) return;
  terms_.push_back(TensorTerm{c, l, r});
  dirty_ = true;
  canonicalize();
}

void TensorPoly::canonicalize() const {
  if (!dirty_) return;
  std::sort(terms_.begin(), terms_.end(), [](const TensorTerm& a, const TensorTerm& b) {
    if (int c = cmp(a.left, b.left)) return c < 0;
    return cmp(a.right, b.right) < 0;
  });
  std::vector<TensorTerm> merged;
  merged.reserve(terms_.size());
  for (const auto& t : terms_) {
    if (!merged.empty() && cmp(merged.back().left, t.left) == 0 &&
        cmp(merged.back().right, t.right) == 0) {
      merged.back().coef += t.coef;
    } else {
      merged.push_back(t);
    }
  }
  std::erase_if(merged, [](const TensorTerm& t) { return t.coef == cplx{0.0, 0.0}; });
  terms_ = std::move(merged);
  dirty_ = false;
}

bool operator==(const TensorPoly& a, const TensorPoly& b) {
  const auto& ta = a.terms();
  const auto& tb = b.terms();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].coef != tb[i].coef || cmp(ta[i].left, tb[i].left) != 0 ||
        cmp(ta[i].right, tb[i].right) != 0)
      return false;
  }
  return true;
}

TensorPoly add(const TensorPoly& a, const TensorPoly& b) {
  TensorPoly out = a;
  for (const auto& t : b.terms()) out.add_term(t.coef, t.left, t.right);
  return out;
}

TensorPoly scale(const TensorPoly& a, cplx c) {
  TensorPoly out;
  for (const auto& t : a.terms()) out.add_term(t.coef * c, t.left, t.right);
  return out;
}

TensorPoly mul(const TensorPoly& a, const TensorPoly& b) {
  TensorPoly out;
  for (const auto& ta : a.terms())
    for (const auto& tb : b.terms())
      out.add_term(ta.coef * tb.coef, concat(ta.left, tb.left), concat(ta.right, tb.right));
  return out;
}

TensorPoly tensor(const NCPoly& l, const NCPoly& r) {
  TensorPoly out;
  for (const auto& [wl, cl] : l.terms())
    for (const auto& [wr, cr] : r.terms()) out.add_term(cl * cr, wl, wr);
  return out;
}

namespace {

NCWord slice(const NCWord& w, std::size_t from, std::size_t to) {
  NCWord out;
  out.factors.assign(w.factors.begin() + from, w.factors.begin() + to);
  return out;
}

}  // namespace

TensorPoly delta(int i, const NCPoly& p) {
  if (i < 1) throw std::out_of_range("direction index must be >= 1");
  TensorPoly out;
  for (const auto& [w, c] : p.terms()) {
    if (w.has_exp())
      throw std::invalid_argument(
          "delta is defined on plain polynomials; use delta_alpha for exponential atoms");
    for (std::size_t k = 0; k < w.factors.size(); ++k) {
      const Letter& l = std::get<Letter>(w.factors[k]);
      if (l.index != i) continue;
      if (l.kind == Kind::U) {
        // prefix including the U letter goes left, rest right
        out.add_term(c, slice(w, 0, k + 1), slice(w, k + 1, w.factors.size()));
      } else if (l.kind == Kind::V) {
        out.add_term(-c, slice(w, 0, k), slice(w, k, w.factors.size()));
      }
    }
  }
  return out;
}

NCPoly cyclic(int i, const NCPoly& p) {
  NCPoly out;
  for (const auto& t : delta(i, p).terms()) out.add_term(concat(t.right, t.left), t.coef);
  return out;
}

NCPoly sharp(const TensorPoly& t, const NCPoly& c) {
  NCPoly out;
  for (const auto& term : t.terms())
    for (const auto& [w, k] : c.terms())
      out.add_term(concat(term.left, concat(w, term.right)), term.coef * k);
  return out;
}

NCPoly sharp_tilde(const TensorPoly& t, const NCPoly& c) {
  NCPoly out;
  for (const auto& term : t.terms())
    for (const auto& [w, k] : c.terms())
      out.add_term(concat(term.right, concat(w, term.left)), term.coef * k);
  return out;
}

namespace {

// exp(s R) as a word factor; empty word when s == 0
NCWord exp_word(const std::shared_ptr<const NCPoly>& exponent, cplx s) {
  NCWord w;
  if (s != cplx{0.0, 0.0}) w.factors.push_back(ExpAtom{exponent, s});
  return w;
}

}  // namespace

TensorPoly delta_alpha(int i, double alpha, const NCPoly& p) {
  if (i < 1) throw std::out_of_range("direction index must be >= 1");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw std::invalid_argument("alpha must lie in [0,1]");
  TensorPoly out;
  for (const auto& [w, c] : p.terms()) {
    for (std::size_t k = 0; k < w.factors.size(); ++k) {
      const NCWord pre = slice(w, 0, k);
      const NCWord suf = slice(w, k + 1, w.factors.size());
      if (const Letter* l = std::get_if<Letter>(&w.factors[k])) {
        if (l->index != i) continue;
        if (l->kind == Kind::U) {
          NCWord left = pre;
          left.factors.push_back(*l);
          out.add_term(c, left, suf);
        } else if (l->kind == Kind::V) {
          NCWord right;
          right.factors.push_back(*l);
          right = concat(right, suf);
          out.add_term(-c, pre, right);
        }
        continue;
      }
      const ExpAtom& e = std::get<ExpAtom>(w.factors[k]);
      if (e.exponent->has_exp())
        throw std::invalid_argument("nested exponential atoms are not supported");
      const NCWord head = exp_word(e.exponent, alpha * e.scalar);
      const NCWord tail = exp_word(e.exponent, (1.0 - alpha) * e.scalar);
      for (const auto& t : delta(i, *e.exponent).terms()) {
        const NCWord left = concat(pre, concat(head, t.left));
        const NCWord right = concat(t.right, concat(tail, suf));
        out.add_term(c * e.scalar * t.coef, left, right);
      }
    }
  }
  return out;
}

namespace {

void append_factor_run(std::string& s, const Factor& f, int run) {
  if (const Letter* l = std::get_if<Letter>(&f)) {
    switch (l->kind) {
      case Kind::U: s += "U" + std::to_string(l->index); break;
      case Kind::V: s += "U" + std::to_string(l->index) + "*"; break;
      case Kind::Z: s += "Z" + std::to_string(l->index); break;
      case Kind::Y: s += "Z" + std::to_string(l->index) + "*"; break;
    }
  } else {
    const ExpAtom& e = std::get<ExpAtom>(f);
    s += "exp((" + fmt_double(e.scalar.real()) + "+" + fmt_double(e.scalar.imag()) +
         "i); " + to_string(*e.exponent) + ")";
  }
  if (run > 1) s += "^" + std::to_string(run);
}

std::string coeff_str(cplx c) {
  return "(" + fmt_double(c.real()) + "+" + fmt_double(c.imag()) + "i)";
}

}  // namespace

std::string to_string(const NCWord& w) {
  std::string s;
  std::size_t i = 0;
  while (i < w.factors.size()) {
    std::size_t j = i + 1;
    while (j < w.factors.size() && cmp(w.factors[j], w.factors[i]) == 0) ++j;
    if (!s.empty()) s += " ";
    append_factor_run(s, w.factors[i], static_cast<int>(j - i));
    i = j;
  }
  return s;
}

std::string to_string(const NCPoly& p) {
  if (p.is_zero()) return "0";
  std::string s;
  for (const auto& [w, c] : p.terms()) {
    if (!s.empty()) s += " + ";
    if (w.empty()) {
      s += coeff_str(c);
    } else if (c == cplx{1.0, 0.0}) {
      s += to_string(w);
    } else {
      s += coeff_str(c) + " " + to_string(w);
    }
  }
  return s;
}

}  // namespace haarx::ncalg
