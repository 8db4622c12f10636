#include "haarx/rmt.hpp"

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

namespace haarx::rmt {

namespace {

McEstimateC summarize(const std::vector<cplx>& vals) {
  McEstimateC out;
  out.samples = static_cast<long long>(vals.size());
  if (vals.empty()) return out;
  out.mean = pairwise_sum(vals) / static_cast<double>(vals.size());
  if (vals.size() > 1) {
    std::vector<double> dev(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) dev[i] = std::norm(vals[i] - out.mean);
    const double var = pairwise_sum(dev) / static_cast<double>(vals.size() - 1);
    out.stderr_ = std::sqrt(var / static_cast<double>(vals.size()));
  }
  return out;
}

}  // namespace

Eigen::MatrixXcd haar_sample(RngStream& rng, int n) {
  Eigen::MatrixXcd g(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) g(i, j) = cplx{rng.next_normal(), rng.next_normal()};
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd u = qr.householderQ();
  const auto diag = qr.matrixQR().diagonal();
  for (int j = 0; j < n; ++j) {
    const cplx d = diag(j);
    const double a = std::abs(d);
    u.col(j) *= (a > 0.0) ? d / a : cplx{1.0, 0.0};
  }
  return u;
}

double unitarity_defect(const Eigen::MatrixXcd& u) {
  const int n = static_cast<int>(u.rows());
  return (u.adjoint() * u - Eigen::MatrixXcd::Identity(n, n)).norm();
}

Eigen::MatrixXcd hbm_increment(RngStream& rng, int n, double dt) {
  const double sd = std::sqrt(dt / n);
  const double so = std::sqrt(dt / (2.0 * n));
  Eigen::MatrixXcd h(n, n);
  for (int j = 0; j < n; ++j) {
    h(j, j) = cplx{sd * rng.next_normal(), 0.0};
    for (int i = 0; i < j; ++i) {
      const cplx v{so * rng.next_normal(), so * rng.next_normal()};
      h(i, j) = v;
      h(j, i) = std::conj(v);
    }
  }
  return h;
}

void ubm_evolve(Eigen::MatrixXcd& u, RngStream& rng, double t, double dt) {
  if (dt <= 0.0 || dt > 1e-2 + 1e-15)
    throw std::invalid_argument("ubm_evolve: step size must lie in (0, 1e-2]");
  if (t < 0.0) throw std::invalid_argument("ubm_evolve: negative time");
  const int n = static_cast<int>(u.rows());
  const long long steps = static_cast<long long>(std::ceil(t / dt - 1e-12));
  if (steps > 0) {
    const double h = t / static_cast<double>(steps);
    const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(n, n);
    for (long long s = 0; s < steps; ++s) {
      const Eigen::MatrixXcd dx = hbm_increment(rng, n, h);
      // Ito step B = u (I + i dX - h/2), then pull B back to the unitary
      // group with B (B*B)^{-1/2}, (I+S)^{-1/2} ~ I - S/2 + (3/8) S^2 where
      // S = B*B - I = dX^2 + (h^2/4 - h) I
      Eigen::MatrixXcd b = u + cplx{0.0, 1.0} * (u * dx) - (h / 2.0) * u;
      Eigen::MatrixXcd s2 = dx * dx + (h * h / 4.0 - h) * eye;
      Eigen::MatrixXcd w = s2 - 0.75 * (s2 * s2);
      u = b - 0.5 * (b * w);
    }
  }
  for (int it = 0; it < 50; ++it) {
    const Eigen::MatrixXcd gram = u.adjoint() * u;
    const double defect = (gram - Eigen::MatrixXcd::Identity(n, n)).norm();
    if (defect <= 1e-12) return;
    if (defect > 0.5) throw std::runtime_error("ubm_evolve: projection diverged");
    u = 1.5 * u - 0.5 * (u * gram);
  }
  throw std::runtime_error("ubm_evolve: unitarity polish did not converge");
}

namespace {

// letter lookup with adjoints materialized on demand, once per assignment
struct Fetch {
  const MatrixAssignment* asg;
  std::map<std::pair<int, int>, Eigen::MatrixXcd> adj;  // (0 for U*, 1 for Z*) x index

  const Eigen::MatrixXcd& base(const std::vector<Eigen::MatrixXcd>& v, int idx,
                               const char* what) const {
    if (idx < 1 || static_cast<std::size_t>(idx) > v.size())
      throw std::out_of_range(std::string("no matrix assigned to ") + what);
    return v[idx - 1];
  }
  const Eigen::MatrixXcd& get(const ncalg::Letter& l) {
    using ncalg::Kind;
    switch (l.kind) {
      case Kind::U: return base(asg->u, l.index, "a unitary letter");
      case Kind::Z: return base(asg->z, l.index, "a matrix letter");
      case Kind::V: {
        auto [it, fresh] = adj.try_emplace({0, l.index});
        if (fresh) it->second = base(asg->u, l.index, "a unitary letter").adjoint();
        return it->second;
      }
      default: {
        auto [it, fresh] = adj.try_emplace({1, l.index});
        if (fresh) it->second = base(asg->z, l.index, "a matrix letter").adjoint();
        return it->second;
      }
    }
  }
};

std::vector<const ncalg::Letter*> letters_of(const ncalg::NCWord& w) {
  std::vector<const ncalg::Letter*> ls;
  ls.reserve(w.factors.size());
  for (const auto& f : w.factors) {
    const auto* l = std::get_if<ncalg::Letter>(&f);
    if (!l)
      throw std::invalid_argument("matrix evaluation handles plain letters only");
    ls.push_back(l);
  }
  return ls;
}

cplx word_trace(const std::vector<const ncalg::Letter*>& ls, Fetch& fetch, int n) {
  if (ls.empty()) return cplx{1.0, 0.0};
  if (ls.size() == 1) return fetch.get(*ls[0]).trace() / static_cast<double>(n);
  Eigen::MatrixXcd p = fetch.get(*ls[0]);
  for (std::size_t i = 1; i + 1 < ls.size(); ++i) p = p * fetch.get(*ls[i]);
  // tr(P L) without forming the product
  const cplx tr = p.cwiseProduct(fetch.get(*ls.back()).transpose()).sum();
  return tr / static_cast<double>(n);
}

}  // namespace

Eigen::MatrixXcd eval_on_matrices(const ncalg::NCPoly& p, const MatrixAssignment& asg, int n) {
  Fetch fetch{&asg, {}};
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(n, n);
  for (const auto& [word, coef] : p.terms()) {
    const auto ls = letters_of(word);
    if (ls.empty()) {
      acc += coef * Eigen::MatrixXcd::Identity(n, n);
      continue;
    }
    Eigen::MatrixXcd prod = fetch.get(*ls[0]);
    for (std::size_t i = 1; i < ls.size(); ++i) prod = prod * fetch.get(*ls[i]);
    acc += coef * prod;
  }
  return acc;
}

Eigen::MatrixXcd apply_function(const Eigen::MatrixXcd& h,
                                const std::function<cplx(double)>& f,
                                double herm_tol) {
  if ((h - Eigen::MatrixXcd(h.adjoint())).norm() > herm_tol)
    throw std::invalid_argument("apply_function: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  const int n = static_cast<int>(h.rows());
  Eigen::VectorXcd fv(n);
  for (int i = 0; i < n; ++i) fv(i) = f(es.eigenvalues()(i));
  return es.eigenvectors() * fv.asDiagonal() * es.eigenvectors().adjoint();
}

cplx trace_of_word(const ncalg::NCWord& w, const MatrixAssignment& asg, int n) {
  Fetch fetch{&asg, {}};
  const auto ls = letters_of(w);
  return word_trace(ls, fetch, n);
}

std::vector<McEstimateC> mc_expect_traces(const std::vector<ncalg::NCPoly>& ps,
                                          const std::vector<Eigen::MatrixXcd>& zmats,
                                          int n, long long samples, std::uint64_t seed) {
  int max_u = 0;
  for (const auto& p : ps)
    for (const auto& [word, coef] : p.terms())
      for (const auto* l : letters_of(word)) {
        if (l->kind == ncalg::Kind::U || l->kind == ncalg::Kind::V)
          max_u = std::max(max_u, l->index);
        else if (static_cast<std::size_t>(l->index) > zmats.size())
          throw std::out_of_range("matrix letter index exceeds the supplied letters");
      }

  std::vector<std::vector<cplx>> vals(ps.size());
  for (auto& v : vals) v.reserve(samples);

  MatrixAssignment asg;
  asg.z = zmats;
  for (long long s = 0; s < samples; ++s) {
    RngStream rng(seed, static_cast<std::uint64_t>(s));
    asg.u.clear();
    for (int i = 0; i < max_u; ++i) asg.u.push_back(haar_sample(rng, n));
    Fetch fetch{&asg, {}};
    for (std::size_t k = 0; k < ps.size(); ++k) {
      cplx acc{0.0, 0.0};
      for (const auto& [word, coef] : ps[k].terms())
        acc += coef * word_trace(letters_of(word), fetch, n);
      vals[k].push_back(acc);
    }
  }

  std::vector<McEstimateC> out;
  out.reserve(ps.size());
  for (const auto& v : vals) out.push_back(summarize(v));
  return out;
}

McEstimateC mc_expect_trace(const ncalg::NCPoly& p,
                            const std::vector<Eigen::MatrixXcd>& zmats,
                            int n, long long samples, std::uint64_t seed) {
  return mc_expect_traces({p}, zmats, n, samples, seed)[0];
}

McEstimateC mc_expect_trace_function(const ncalg::NCPoly& p,
                                     const std::function<cplx(double)>& f,
                                     const std::vector<Eigen::MatrixXcd>& zmats,
                                     int n, long long samples, std::uint64_t seed,
                                     double herm_tol) {
  int max_u = 0;
  for (const auto& [word, coef] : p.terms())
    for (const auto* l : letters_of(word))
      if (l->kind == ncalg::Kind::U || l->kind == ncalg::Kind::V)
        max_u = std::max(max_u, l->index);

  std::vector<cplx> vals;
  vals.reserve(samples);
  MatrixAssignment asg;
  asg.z = zmats;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es;
  for (long long s = 0; s < samples; ++s) {
    RngStream rng(seed, static_cast<std::uint64_t>(s));
    asg.u.clear();
    for (int i = 0; i < max_u; ++i) asg.u.push_back(haar_sample(rng, n));
    Eigen::MatrixXcd m = eval_on_matrices(p, asg, n);
    if ((m - Eigen::MatrixXcd(m.adjoint())).norm() > herm_tol)
      throw std::runtime_error("mc_expect_trace_function: argument is not self-adjoint");
    es.compute(m, Eigen::EigenvaluesOnly);
    cplx acc{0.0, 0.0};
    for (int i = 0; i < n; ++i) acc += f(es.eigenvalues()(i));
    vals.push_back(acc / static_cast<double>(n));
  }
  return summarize(vals);
}

McEstimateC mc_ubm_trace_moment(int power, int n, double t, double dt,
                                long long paths, std::uint64_t seed) {
  if (power < 1) throw std::invalid_argument("mc_ubm_trace_moment: power must be >= 1");
  std::vector<cplx> vals;
  vals.reserve(paths);
  for (long long p = 0; p < paths; ++p) {
    RngStream rng(seed, static_cast<std::uint64_t>(p));
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n, n);
    ubm_evolve(u, rng, t, dt);
    Eigen::MatrixXcd m = u;
    for (int k = 1; k < power; ++k) m = m * u;
    vals.push_back(m.trace() / static_cast<double>(n));
  }
  return summarize(vals);
}

std::vector<CovarianceResult> covariance_check_pairs(
    const std::vector<std::pair<ncalg::NCPoly, ncalg::NCPoly>>& pairs,
    const std::vector<Eigen::MatrixXcd>& zmats, int n, double t_final, double dt,
    long long lhs_paths, long long rhs_triples, std::uint64_t seed, int node_stride) {
  for (const auto& [p, q] : pairs)
    for (const ncalg::NCPoly* poly : {&p, &q})
      for (const auto& [word, coef] : poly->terms())
        for (const auto* l : letters_of(word))
          if ((l->kind == ncalg::Kind::U || l->kind == ncalg::Kind::V) && l->index != 1)
            throw std::invalid_argument("covariance_check supports a single unitary letter");

  const long long steps = static_cast<long long>(std::ceil(t_final / dt - 1e-12));
  if (steps < 1) throw std::invalid_argument("covariance_check: needs t_final > 0");
  const double h = t_final / static_cast<double>(steps);
  if (node_stride < 1) node_stride = 1;

  const std::size_t np = pairs.size();
  std::vector<CovarianceResult> res(np);

  // endpoint side: Tr P and Tr Q on shared paths, covariance from batches
  {
    std::vector<std::vector<cplx>> xs(np), ys(np), xy(np);
    for (std::size_t k = 0; k < np; ++k) {
      xs[k].reserve(lhs_paths);
      ys[k].reserve(lhs_paths);
      xy[k].reserve(lhs_paths);
    }
    MatrixAssignment asg;
    asg.z = zmats;
    for (long long pa = 0; pa < lhs_paths; ++pa) {
      RngStream rng(seed, static_cast<std::uint64_t>(pa));
      Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n, n);
      ubm_evolve(u, rng, t_final, h);
      asg.u.assign(1, u);
      Fetch fetch{&asg, {}};
      for (std::size_t k = 0; k < np; ++k) {
        cplx trp{0.0, 0.0}, trq{0.0, 0.0};
        for (const auto& [word, coef] : pairs[k].first.terms())
          trp += coef * word_trace(letters_of(word), fetch, n) * static_cast<double>(n);
        for (const auto& [word, coef] : pairs[k].second.terms())
          trq += coef * word_trace(letters_of(word), fetch, n) * static_cast<double>(n);
        xs[k].push_back(trp);
        ys[k].push_back(trq);
        xy[k].push_back(trp * trq);
      }
    }
    auto cov_of = [](std::span<const cplx> x, std::span<const cplx> y,
                     std::span<const cplx> prod) {
      const double m = static_cast<double>(x.size());
      const cplx c =
          pairwise_sum(prod) / m - (pairwise_sum(x) / m) * (pairwise_sum(y) / m);
      return c * (m / (m - 1.0));  // bilinear covariance, small-sample corrected
    };
    for (std::size_t k = 0; k < np; ++k) {
      res[k].lhs.mean = cov_of(xs[k], ys[k], xy[k]);
      res[k].lhs.samples = lhs_paths;
      const int nbatch = 20;
      if (lhs_paths >= 2 * nbatch) {
        std::vector<double> dev;
        const std::size_t bs = xs[k].size() / nbatch;
        for (int b = 0; b < nbatch; ++b) {
          const std::size_t lo = b * bs;
          const std::size_t len = (b == nbatch - 1) ? xs[k].size() - lo : bs;
          const cplx cb = cov_of(std::span<const cplx>(xs[k]).subspan(lo, len),
                                 std::span<const cplx>(ys[k]).subspan(lo, len),
                                 std::span<const cplx>(xy[k]).subspan(lo, len));
          dev.push_back(std::norm(cb - res[k].lhs.mean));
        }
        const double var = pairwise_sum(dev) / (nbatch - 1.0);
        res[k].lhs.stderr_ = std::sqrt(var / nbatch);
      }
    }
  }

  // integral side on trapezoid nodes of the path grid, triples shared
  std::vector<ncalg::NCPoly> dps, dqs;
  for (const auto& [p, q] : pairs) {
    dps.push_back(ncalg::cyclic(1, p));
    dqs.push_back(ncalg::cyclic(1, q));
  }
  std::vector<long long> node_steps;
  for (long long k = 0; k < steps; k += node_stride) node_steps.push_back(k);
  node_steps.push_back(steps);

  std::vector<cplx> rhs_acc(np, cplx{0.0, 0.0});
  std::vector<double> rhs_var(np, 0.0);
  MatrixAssignment asg1, asg2;
  asg1.z = zmats;
  asg2.z = zmats;
  for (std::size_t m = 0; m < node_steps.size(); ++m) {
    const double tm = node_steps[m] * h;
    const double t_prev = (m == 0) ? tm : node_steps[m - 1] * h;
    const double t_next = (m + 1 == node_steps.size()) ? tm : node_steps[m + 1] * h;
    const double w = (t_next - t_prev) / 2.0;
    std::vector<std::vector<cplx>> vals(np);
    for (auto& v : vals) v.reserve(rhs_triples);
    for (long long j = 0; j < rhs_triples; ++j) {
      RngStream rng(seed, (1ULL << 32) + static_cast<std::uint64_t>(m) * rhs_triples + j);
      Eigen::MatrixXcd v = Eigen::MatrixXcd::Identity(n, n);
      Eigen::MatrixXcd wmat = Eigen::MatrixXcd::Identity(n, n);
      Eigen::MatrixXcd uc = Eigen::MatrixXcd::Identity(n, n);
      if (node_steps[m] > 0) {
        ubm_evolve(v, rng, tm, h);
        ubm_evolve(wmat, rng, tm, h);
      }
      if (node_steps[m] < steps) ubm_evolve(uc, rng, t_final - tm, h);
      asg1.u.assign(1, v * uc);
      asg2.u.assign(1, wmat * uc);
      for (std::size_t k = 0; k < np; ++k) {
        const Eigen::MatrixXcd m1 = eval_on_matrices(dps[k], asg1, n);
        const Eigen::MatrixXcd m2 = eval_on_matrices(dqs[k], asg2, n);
        vals[k].push_back(m1.cwiseProduct(m2.transpose()).sum());
      }
    }
    for (std::size_t k = 0; k < np; ++k) {
      const McEstimateC node = summarize(vals[k]);
      rhs_acc[k] += w * node.mean;
      rhs_var[k] += w * w * node.stderr_ * node.stderr_;
      res[k].rhs.samples += node.samples;
    }
  }
  for (std::size_t k = 0; k < np; ++k) {
    res[k].nodes = static_cast<int>(node_steps.size());
    res[k].rhs.mean = -rhs_acc[k] / static_cast<double>(n);
    res[k].rhs.stderr_ = std::sqrt(rhs_var[k]) / static_cast<double>(n);
  }
  return res;
}

CovarianceResult covariance_check(const ncalg::NCPoly& p, const ncalg::NCPoly& q,
                                  const std::vector<Eigen::MatrixXcd>& zmats,
                                  int n, double t_final, double dt,
                                  long long lhs_paths, long long rhs_triples,
                                  std::uint64_t seed, int node_stride) {
  return covariance_check_pairs({{p, q}}, zmats, n, t_final, dt, lhs_paths,
                                rhs_triples, seed, node_stride)[0];
}

}  // namespace haarx::rmt
