#include "haarx/expansion.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "haarx/rmt.hpp"
#include "haarx/rng.hpp"

namespace haarx::expansion {

namespace {

using indexsets::IndexSet;
using indexsets::IndexUniverse;
using indexsets::MapFamily;
using ncalg::Kind;
using ncalg::Letter;
using ncalg::NCPoly;
using ncalg::NCWord;
using ncalg::TensorPoly;

using RemapFn = std::function<int(int)>;
using ExpCache = std::map<const void*, NCPoly>;

NCPoly remap_poly(const NCPoly& p, const RemapFn& fn, ExpCache& cache);

// Rename every unitary letter index through fn, recursing into exponents.
// The cache is only valid for a fixed fn.
NCWord remap_word(const NCWord& w, const RemapFn& fn, ExpCache& cache) {
  NCWord out;
  out.factors.reserve(w.factors.size());
  for (const auto& f : w.factors) {
    if (const auto* l = std::get_if<Letter>(&f)) {
      Letter nl = *l;
      if (nl.kind == Kind::U || nl.kind == Kind::V) nl.index = fn(nl.index);
      out.factors.emplace_back(nl);
    } else {
      const auto& e = std::get<ncalg::ExpAtom>(f);
      auto it = cache.find(e.exponent.get());
      if (it == cache.end())
        it = cache.emplace(e.exponent.get(), remap_poly(*e.exponent, fn, cache)).first;
      const NCPoly atom = NCPoly::exp_atom(it->second, e.scalar);
      for (const auto& [aw, ac] : atom.terms()) {
        (void)ac;
        for (const auto& af : aw.factors) out.factors.push_back(af);
      }
    }
  }
  return out;
}

NCPoly remap_poly(const NCPoly& p, const RemapFn& fn, ExpCache& cache) {
  NCPoly out;
  for (const auto& [w, c] : p.terms()) out.add_term(remap_word(w, fn, cache), c);
  return out;
}

// D_i Q summed over every encoded letter of direction i; on exponential
// inputs this is the Duhamel form at parameter rho.
NCPoly cyclic_dir(const IndexedPoly& q, int i, double rho, bool exp_mode) {
  NCPoly acc;
  for (const auto& [synth, dk] : q.letters) {
    if (dk.first != i) continue;
    if (!exp_mode) {
      acc = acc + ncalg::cyclic(synth, q.poly);
    } else {
      const TensorPoly t = ncalg::delta_alpha(synth, rho, q.poly);
      for (const auto& term : t.terms())
        acc.add_term(ncalg::concat(term.right, term.left), term.coef);
    }
  }
  return acc;
}

TensorPoly delta_dir(const IndexedPoly& q, const NCPoly& r, int i, double a,
                     bool exp_mode) {
  TensorPoly acc;
  for (const auto& [synth, dk] : q.letters) {
    if (dk.first != i) continue;
    acc = acc + (exp_mode ? ncalg::delta_alpha(synth, a, r) : ncalg::delta(synth, r));
  }
  return acc;
}

// Derivative with respect to the single letter carrying (j, iset); zero when
// that decorated letter never occurs in the input.
TensorPoly delta_at(const std::map<std::pair<int, std::vector<long long>>, int>& rev,
                    const NCPoly& p, int j, const IndexSet& iset, double a,
                    bool exp_mode) {
  const auto it = rev.find({j, iset.entries});
  if (it == rev.end()) return TensorPoly::zero();
  return exp_mode ? ncalg::delta_alpha(it->second, a, p) : ncalg::delta(it->second, p);
}

NCPoly poly_pow(const NCPoly& p, int m) {
  if (m < 0) throw std::invalid_argument("poly_pow: negative power");
  NCPoly acc = NCPoly::unit();
  for (int i = 0; i < m; ++i) acc = acc * p;
  return acc;
}

int common_dim(const std::vector<Eigen::MatrixXcd>& zmats) {
  int dim = 0;
  for (const auto& z : zmats) {
    if (z.rows() != z.cols())
      throw std::invalid_argument("matrix letters must be square");
    if (dim == 0)
      dim = static_cast<int>(z.rows());
    else if (static_cast<int>(z.rows()) != dim)
      throw std::invalid_argument("matrix letters must share one dimension");
  }
  return dim;
}

}  // namespace

IndexedPoly lift(const NCPoly& p, int directions) {
  if (directions < 1) throw std::invalid_argument("lift: directions must be >= 1");
  IndexedPoly ip;
  ip.poly = p;
  ip.level = 0;
  ip.directions = directions;
  std::function<void(const NCPoly&)> scan = [&](const NCPoly& q) {
    for (const auto& [w, c] : q.terms()) {
      (void)c;
      for (const auto& f : w.factors) {
        if (const auto* l = std::get_if<Letter>(&f)) {
          if (l->kind != Kind::U && l->kind != Kind::V) continue;
          if (l->index < 1 || l->index > directions)
            throw std::invalid_argument("lift: unitary letter index out of range");
          ip.letters.emplace(l->index, std::make_pair(l->index, IndexSet{}));
        } else {
          scan(*std::get<ncalg::ExpAtom>(f).exponent);
        }
      }
    }
  };
  scan(p);
  return ip;
}

LOutput build_L(int s, const IndexedPoly& q, const std::array<double, 4>& params) {
  const int n = q.level;
  if (n < 0 || n > 2) throw std::invalid_argument("build_L: input level out of range");
  if (s < 1 || s > 2 * n + 1)
    throw std::invalid_argument("build_L: position out of range");
  for (double a : params)
    if (!(a >= 0.0 && a <= 1.0))
      throw std::invalid_argument("build_L: parameters must lie in [0,1]");
  const bool exp_mode = q.poly.has_exp();

  const IndexUniverse uni = indexsets::build_universe(n);
  const auto pairs = indexsets::tail_matching_pairs(uni, q.branch, s);

  std::map<std::pair<int, std::vector<long long>>, int> rev;
  for (const auto& [synth, dk] : q.letters) rev[{dk.first, dk.second.entries}] = synth;

  LOutput out;
  out.value.level = n + 1;
  out.value.directions = q.directions;
  out.value.branch = q.branch;
  out.value.branch.push_back(s);

  int next_synth = 1;
  std::map<std::pair<int, std::vector<long long>>, int> alloc;
  auto synth_out = [&](int dir, const IndexSet& k) {
    auto [it, fresh] = alloc.try_emplace(std::make_pair(dir, k.entries), 0);
    if (fresh) {
      it->second = next_synth++;
      out.value.letters.emplace(it->second, std::make_pair(dir, k));
    }
    return it->second;
  };

  // slot order is the product order of the output word; slots 0 and 3 push
  // letters through the plain maps, 1 and 2 through the tilde maps
  struct Slot {
    MapFamily fam;
    int v;
  };
  const std::array<Slot, 4> slots = {{{MapFamily::Plain, 1},
                                      {MapFamily::Tilde, 1},
                                      {MapFamily::Tilde, 2},
                                      {MapFamily::Plain, 2}}};
  std::array<ExpCache, 4> caches;
  auto map_word = [&](const NCWord& w, int slot) {
    const Slot sl = slots[static_cast<std::size_t>(slot)];
    const RemapFn fn = [&, sl](int idx) {
      const auto& dk = q.letters.at(idx);
      const IndexSet img = indexsets::apply_map(sl.fam, s, sl.v, dk.second);
      return synth_out(dk.first, img);
    };
    return remap_word(w, fn, caches[static_cast<std::size_t>(slot)]);
  };

  for (int i = 1; i <= q.directions; ++i) {
    const NCPoly r = cyclic_dir(q, i, params[0], exp_mode);
    if (r.is_zero()) continue;
    const TensorPoly db = delta_dir(q, r, i, params[1], exp_mode);
    for (const auto& bt : db.terms()) {
      const NCPoly aleg = NCPoly::from_word(bt.left);
      const NCPoly bleg = NCPoly::from_word(bt.right);
      for (int j = 1; j <= q.directions; ++j) {
        for (const auto& [iset, jset] : pairs) {
          const TensorPoly dsp = delta_at(rev, aleg, j, iset, params[2], exp_mode);
          if (dsp.is_zero()) continue;
          const TensorPoly dtp = delta_at(rev, bleg, j, jset, params[3], exp_mode);
          if (dtp.is_zero()) continue;
          for (const auto& st : dsp.terms()) {
            for (const auto& tt : dtp.terms()) {
              SlotTerm term;
              term.coef = 0.5 * bt.coef * st.coef * tt.coef;
              term.parts[0] = map_word(st.right, 0);
              term.parts[1] = map_word(st.left, 1);
              term.parts[2] = map_word(tt.right, 2);
              term.parts[3] = map_word(tt.left, 3);
              const NCWord w =
                  ncalg::concat(ncalg::concat(term.parts[0], term.parts[1]),
                                ncalg::concat(term.parts[2], term.parts[3]));
              out.value.poly.add_term(w, term.coef);
              out.terms.push_back(std::move(term));
            }
          }
        }
      }
    }
  }
  return out;
}

cplx eval_indexed(const IndexedPoly& ip, const std::vector<double>& times,
                  freetrace::TraceContext& ctx, const std::vector<int>& zhandles,
                  const IndexUniverse& uni, const freetrace::EvalOptions& opts,
                  double* tail_bound) {
  if (uni.order != ip.level)
    throw std::invalid_argument("eval_indexed: universe order mismatch");
  if (static_cast<int>(times.size()) != 2 * ip.level)
    throw std::invalid_argument("eval_indexed: need 2*level times");
  double prev = 0.0;
  for (double t : times) {
    if (!(t >= prev))
      throw std::invalid_argument("eval_indexed: times must be sorted and nonnegative");
    prev = t;
  }
  freetrace::Assignment asg;
  for (const auto& [synth, dk] : ip.letters) {
    const auto& [dir, iset] = dk;
    if (static_cast<int>(iset.entries.size()) != 2 * ip.level)
      throw std::invalid_argument("eval_indexed: letter set order mismatch");
    freetrace::FreeWord w;
    double t_prev = 0.0;
    for (std::size_t l = 0; l < iset.entries.size(); ++l) {
      const long long label = iset.entries[l];
      const auto pit = uni.position_of.find(label);
      if (pit == uni.position_of.end() || pit->second != static_cast<int>(l) + 1)
        throw std::logic_error("eval_indexed: entry out of position");
      w.push_back({freetrace::fubm_atom(dir, static_cast<int>(label),
                                        times[l] - t_prev),
                   1});
      t_prev = times[l];
    }
    w.push_back({freetrace::haar_atom(dir), 1});
    asg.u[synth] = std::move(w);
  }
  for (std::size_t j = 0; j < zhandles.size(); ++j)
    asg.z[static_cast<int>(j) + 1] = {
        freetrace::FreeFactor{freetrace::matrix_atom(zhandles[j]), 1}};
  if (tail_bound != nullptr) {
    const freetrace::EvalReport rep = ctx.eval_ncpoly_report(ip.poly, asg, opts);
    *tail_bound = rep.tail_bound;
    return rep.value;
  }
  return ctx.eval_ncpoly(ip.poly, asg);
}

FourierSpec FourierSpec::moment(int m) {
  if (m < 0) throw std::invalid_argument("FourierSpec::moment: power must be >= 0");
  FourierSpec f;
  f.mode = Mode::Polynomial;
  f.moment_power = m;
  return f;
}

FourierSpec FourierSpec::trig(std::vector<std::pair<double, cplx>> atoms) {
  FourierSpec f;
  f.mode = Mode::Atomic;
  f.atoms = std::move(atoms);
  return f;
}

bool FourierSpec::self_adjoint(double tol) const {
  if (mode == Mode::Polynomial) return true;
  std::vector<bool> used(atoms.size(), false);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (used[i]) continue;
    bool found = false;
    for (std::size_t j = i; j < atoms.size() && !found; ++j) {
      if (j != i && used[j]) continue;
      if (std::abs(atoms[i].first + atoms[j].first) <= tol &&
          std::abs(atoms[i].second - std::conj(atoms[j].second)) <= tol) {
        used[i] = used[j] = true;
        found = true;
      }
    }
    if (!found) return false;
  }
  return true;
}

cplx FourierSpec::eval(double x) const {
  if (mode == Mode::Polynomial) return cplx{std::pow(x, moment_power), 0.0};
  cplx acc{0.0, 0.0};
  for (const auto& [y, c] : atoms) acc += c * std::exp(cplx{0.0, x * y});
  return acc;
}

std::pair<std::vector<double>, std::vector<double>> gauss_legendre01(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre01: n must be >= 1");
  const double pi = std::acos(-1.0);
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
      const double step = p1 / dp;
      t -= step;
      if (std::abs(step) < 1e-15) break;
    }
    {
      double p0 = 1.0, p1 = t;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (t * p1 - p0) / (t * t - 1.0);
    }
    // roots come out descending in t; reflection gives ascending [0,1] nodes
    x[i] = 0.5 * (1.0 - t);
    w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
  }
  return {std::move(x), std::move(w)};
}

ExpansionResult alpha(int order, const NCPoly& q,
                      const std::vector<Eigen::MatrixXcd>& zmats, int directions,
                      const QuadCfg& cfg) {
  if (order < 0 || order > 1)
    throw std::invalid_argument("alpha: order must be 0 or 1");
  if (q.has_exp())
    throw std::invalid_argument(
        "alpha: exponential arguments go through the FourierSpec overload");
  freetrace::TraceContext ctx(common_dim(zmats));
  std::vector<int> zh;
  zh.reserve(zmats.size());
  for (const auto& z : zmats) zh.push_back(ctx.add_matrix(z));

  const IndexedPoly ip0 = lift(q, directions);
  const IndexUniverse uni0 = indexsets::build_universe(0);
  ExpansionResult res;
  res.alpha0 = eval_indexed(ip0, {}, ctx, zh, uni0);
  if (order == 0) return res;

  const LOutput lo = build_L(1, ip0);
  if (lo.value.poly.is_zero()) return res;
  const IndexUniverse uni1 = indexsets::build_universe(1);

  // substitute t2 = -S log(1-y) so a Gauss grid on the unit square covers the
  // full wedge 0 <= t1 <= t2 < infinity
  const auto integrate = [&](int nodes, double* tail_row, double* t_max) {
    const auto [xs, wx] = gauss_legendre01(nodes);
    cplx acc{0.0, 0.0};
    for (int b = 0; b < nodes; ++b) {
      const double y = xs[b];
      const double t2 = -cfg.time_scale * std::log1p(-y);
      const double jac = cfg.time_scale / (1.0 - y) * t2;
      cplx row{0.0, 0.0};
      for (int a = 0; a < nodes; ++a) {
        ctx.clear_trace_memo();
        row += wx[a] * eval_indexed(lo.value, {xs[a] * t2, t2}, ctx, zh, uni1);
      }
      const cplx contrib = wx[b] * jac * row;
      acc += contrib;
      if (tail_row != nullptr) *tail_row = std::abs(contrib);
      if (t_max != nullptr) *t_max = t2;
    }
    return acc;
  };
  double tail_row = 0.0;
  double tmax = 0.0;
  const cplx fine = integrate(cfg.time_nodes, &tail_row, &tmax);
  const cplx coarse = integrate(cfg.coarse_time_nodes, nullptr, nullptr);
  res.alpha1 = fine;
  res.quadrature_error = std::abs(fine - coarse) + tail_row;
  res.truncation_T = tmax;
  return res;
}

ExpansionResult alpha(int order, const FourierSpec& f, const NCPoly& p,
                      const std::vector<Eigen::MatrixXcd>& zmats, int directions,
                      const QuadCfg& cfg) {
  if (f.mode == FourierSpec::Mode::Polynomial)
    return alpha(order, poly_pow(p, f.moment_power), zmats, directions, cfg);
  if (order < 0 || order > 1)
    throw std::invalid_argument("alpha: order must be 0 or 1");
  if (p.has_exp())
    throw std::invalid_argument("alpha: the argument must be exponential-free");
  freetrace::TraceContext ctx(common_dim(zmats));
  std::vector<int> zh;
  zh.reserve(zmats.size());
  for (const auto& z : zmats) zh.push_back(ctx.add_matrix(z));
  const IndexUniverse uni0 = indexsets::build_universe(0);
  const IndexUniverse uni1 = indexsets::build_universe(1);
  const freetrace::EvalOptions opts;

  ExpansionResult res;
  for (const auto& [y, c] : f.atoms) {
    const IndexedPoly ip = lift(NCPoly::exp_atom(p, cplx{0.0, y}), directions);
    double tail = 0.0;
    res.alpha0 += c * eval_indexed(ip, {}, ctx, zh, uni0, opts, &tail);
    res.quadrature_error += std::abs(c) * tail;
  }
  if (order == 0) return res;

  // four Duhamel axes around the time quadrature; cost scales with
  // alpha_nodes^4 * time_nodes^2, so shrink the config for exploratory runs
  const auto [as, aw] = gauss_legendre01(cfg.alpha_nodes);
  const auto [xs_f, wx_f] = gauss_legendre01(cfg.time_nodes);
  const auto [xs_c, wx_c] = gauss_legendre01(cfg.coarse_time_nodes);
  res.truncation_T = -cfg.time_scale * std::log1p(-xs_f.back());

  const auto time_integral = [&](const LOutput& lo, const std::vector<double>& xs,
                                 const std::vector<double>& wx, double* tailmax,
                                 double* rowmag) {
    cplx acc{0.0, 0.0};
    for (std::size_t b = 0; b < xs.size(); ++b) {
      const double t2 = -cfg.time_scale * std::log1p(-xs[b]);
      const double jac = cfg.time_scale / (1.0 - xs[b]) * t2;
      cplx row{0.0, 0.0};
      for (std::size_t a = 0; a < xs.size(); ++a) {
        ctx.clear_trace_memo();
        double tl = 0.0;
        row += wx[a] * eval_indexed(lo.value, {xs[a] * t2, t2}, ctx, zh, uni1,
                                    opts, tailmax != nullptr ? &tl : nullptr);
        if (tailmax != nullptr && tl > *tailmax) *tailmax = tl;
      }
      const cplx contrib = wx[b] * jac * row;
      acc += contrib;
      if (rowmag != nullptr) *rowmag = std::abs(contrib);
    }
    return acc;
  };

  for (const auto& [y, c] : f.atoms) {
    const IndexedPoly ip = lift(NCPoly::exp_atom(p, cplx{0.0, y}), directions);
    cplx fine{0.0, 0.0};
    cplx coarse{0.0, 0.0};
    double tailmax = 0.0;
    double row_acc = 0.0;
    for (int a0 = 0; a0 < cfg.alpha_nodes; ++a0)
      for (int a1 = 0; a1 < cfg.alpha_nodes; ++a1)
        for (int a2 = 0; a2 < cfg.alpha_nodes; ++a2)
          for (int a3 = 0; a3 < cfg.alpha_nodes; ++a3) {
            const double w4 = aw[a0] * aw[a1] * aw[a2] * aw[a3];
            const LOutput lo =
                build_L(1, ip, {as[a0], as[a1], as[a2], as[a3]});
            if (lo.value.poly.is_zero()) continue;
            double rowmag = 0.0;
            fine += w4 * time_integral(lo, xs_f, wx_f, &tailmax, &rowmag);
            row_acc += w4 * rowmag;
            coarse += w4 * time_integral(lo, xs_c, wx_c, nullptr, nullptr);
          }
    res.alpha1 += c * fine;
    res.quadrature_error +=
        std::abs(c) * (std::abs(fine - coarse) + row_acc + tailmax);
  }
  return res;
}

cplx alpha1_integrand(const NCPoly& q, const std::vector<Eigen::MatrixXcd>& zmats,
                      int directions, double t1, double t2) {
  if (!(t1 >= 0.0 && t1 <= t2))
    throw std::invalid_argument("alpha1_integrand: need 0 <= t1 <= t2");
  if (q.has_exp())
    throw std::invalid_argument("alpha1_integrand: polynomial arguments only");
  freetrace::TraceContext ctx(common_dim(zmats));
  std::vector<int> zh;
  zh.reserve(zmats.size());
  for (const auto& z : zmats) zh.push_back(ctx.add_matrix(z));
  const LOutput lo = build_L(1, lift(q, directions));
  if (lo.value.poly.is_zero()) return cplx{0.0, 0.0};
  return eval_indexed(lo.value, {t1, t2}, ctx, zh, indexsets::build_universe(1));
}

double remainder_bound(const NCPoly& p, double f_norm, double k_n, int k, double c) {
  if (k < 0) throw std::invalid_argument("remainder_bound: order must be >= 0");
  if (!(f_norm >= 0.0) || !(k_n >= 0.0) || !(c > 0.0))
    throw std::invalid_argument("remainder_bound: scales must be nonnegative");
  const int n = p.deg();
  const double m = static_cast<double>(p.n_terms());
  double cmax = 1.0;
  for (const auto& [w, coef] : p.terms()) {
    (void)w;
    cmax = std::max(cmax, std::abs(coef));
  }
  const double kk = std::max(1.0, k_n);
  const double base = c * std::pow(kk, n + 1) * cmax * m * n * (n + 1.0);
  const double kfac = (k == 0) ? 1.0 : std::pow(static_cast<double>(k), 14.0 * k);
  return f_norm * std::pow(base, 4.0 * k + 6.0) * kfac;
}

FitReport fit_rows(const std::vector<FitRow>& rows) {
  if (rows.size() < 2) throw std::invalid_argument("fit_rows: need at least two rows");
  FitReport rep;
  rep.rows = rows;
  double sw = 0.0, swx = 0.0, swxx = 0.0;
  cplx swy{0.0, 0.0}, swxy{0.0, 0.0};
  for (const auto& r : rows) {
    if (r.n < 1) throw std::invalid_argument("fit_rows: dimensions must be positive");
    const double x = 1.0 / (static_cast<double>(r.n) * r.n);
    const double sig = std::max(r.stderr_, 1e-14 * (1.0 + std::abs(r.estimate)));
    const double w = 1.0 / (sig * sig);
    sw += w;
    swx += w * x;
    swxx += w * x * x;
    swy += w * r.estimate;
    swxy += w * x * r.estimate;
  }
  const double det = sw * swxx - swx * swx;
  if (!(det > 0.0))
    throw std::invalid_argument("fit_rows: need at least two distinct dimensions");
  rep.intercept = (swxx * swy - swx * swxy) / det;
  rep.slope = (sw * swxy - swx * swy) / det;
  rep.intercept_se = std::sqrt(swxx / det);
  rep.slope_se = std::sqrt(sw / det);

  std::vector<double> lx, ly;
  for (const auto& r : rows) {
    const double x = 1.0 / (static_cast<double>(r.n) * r.n);
    const double resid = std::abs(r.estimate - rep.intercept - rep.slope * x);
    if (resid > 3.0 * std::max(r.stderr_, 1e-300)) {
      lx.push_back(std::log(static_cast<double>(r.n)));
      ly.push_back(std::log(resid));
    }
  }
  rep.resid_points = static_cast<int>(lx.size());
  if (lx.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      mx += lx[i];
      my += ly[i];
    }
    mx /= lx.size();
    my /= ly.size();
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
      sxx += (lx[i] - mx) * (lx[i] - mx);
      sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx > 0.0) {
      rep.resid_slope = sxy / sxx;
      if (lx.size() >= 3) {
        double sse = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
          const double e = ly[i] - my - rep.resid_slope * (lx[i] - mx);
          sse += e * e;
        }
        rep.resid_slope_se = std::sqrt(sse / (lx.size() - 2) / sxx);
      }
    }
  }
  rep.insufficient = !(std::abs(rep.slope) > 2.0 * rep.slope_se);
  return rep;
}

FitReport expansion_fit(const NCPoly& p, const FourierSpec& f,
                        const std::function<std::vector<Eigen::MatrixXcd>(int)>& zfamily,
                        const std::vector<int>& ns,
                        const std::vector<long long>& samples, std::uint64_t seed,
                        int directions, const QuadCfg& cfg) {
  if (ns.empty() || ns.size() != samples.size())
    throw std::invalid_argument("expansion_fit: ns and samples must align");
  std::vector<FitRow> rows;
  rows.reserve(ns.size());
  for (std::size_t idx = 0; idx < ns.size(); ++idx) {
    const int n = ns[idx];
    if (n < 1 || samples[idx] < 1)
      throw std::invalid_argument("expansion_fit: bad grid row");
    const std::vector<Eigen::MatrixXcd> zm = zfamily(n);
    for (const auto& z : zm)
      if (z.rows() != n || z.cols() != n)
        throw std::invalid_argument("expansion_fit: zfamily dimension mismatch");
    const std::uint64_t sd =
        detail::mix64(seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(idx) + 1));
    McEstimateC est;
    if (f.mode == FourierSpec::Mode::Polynomial) {
      est = rmt::mc_expect_trace(poly_pow(p, f.moment_power), zm, n, samples[idx], sd);
    } else {
      est = rmt::mc_expect_trace_function(
          p, [&f](double x) { return f.eval(x); }, zm, n, samples[idx], sd);
    }
    rows.push_back({n, est.mean, est.stderr_});
  }
  FitReport rep = fit_rows(rows);
  const ExpansionResult ar = alpha(1, f, p, zfamily(ns.front()), directions, cfg);
  rep.alpha0_ref = ar.alpha0;
  rep.alpha1_ref = ar.alpha1;
  return rep;
}

ContinuityReport continuity_check(const NCPoly& q,
                                  const std::vector<Eigen::MatrixXcd>& zmats,
                                  int directions, double eps, std::uint64_t seed,
                                  const QuadCfg& cfg) {
  if (zmats.empty())
    throw std::invalid_argument("continuity_check: needs a matrix letter to perturb");
  if (!(eps > 0.0)) throw std::invalid_argument("continuity_check: eps must be positive");
  const int n = static_cast<int>(zmats.front().rows());
  RngStream rng(seed, 0);
  Eigen::MatrixXcd g(n, n);
  for (int r = 0; r < n; ++r)
    for (int col = 0; col < n; ++col)
      g(r, col) = cplx{rng.next_normal(), rng.next_normal()};
  Eigen::MatrixXcd h = 0.5 * (g + g.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  const double nrm = std::max(std::abs(es.eigenvalues().minCoeff()),
                              std::abs(es.eigenvalues().maxCoeff()));
  if (nrm > 0.0) h /= nrm;

  const cplx base = alpha(1, q, zmats, directions, cfg).alpha1;
  const auto shifted = [&](double t) {
    std::vector<Eigen::MatrixXcd> zm = zmats;
    zm[0] += t * h;
    return alpha(1, q, zm, directions, cfg).alpha1;
  };
  ContinuityReport rep;
  rep.dalpha_eps = std::abs(shifted(eps) - base);
  rep.dalpha_half = std::abs(shifted(0.5 * eps) - base);
  rep.ratio = rep.dalpha_half > 1e-300 ? rep.dalpha_eps / rep.dalpha_half : 0.0;
  return rep;
}

}  // namespace haarx::expansion
