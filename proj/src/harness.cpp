#include "haarx/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "haarx/freetrace.hpp"
#include "haarx/fubm.hpp"
#include "haarx/indexsets.hpp"
#include "haarx/parse.hpp"
#include "haarx/rng.hpp"

namespace haarx::harness {

using ncalg::Kind;
using ncalg::NCPoly;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// config

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  return a.schema == b.schema && a.kind == b.kind && a.d == b.d && a.q == b.q &&
         a.polys == b.polys && a.fspec == b.fspec && a.zkind == b.zkind &&
         a.n_grid == b.n_grid && a.m_grid == b.m_grid && a.samples == b.samples &&
         a.seed == b.seed && a.runs == b.runs && a.t_final == b.t_final &&
         a.dt == b.dt && a.lhs_paths == b.lhs_paths &&
         a.rhs_triples == b.rhs_triples && a.node_stride == b.node_stride &&
         a.t_density == b.t_density && a.alpha_exponent == b.alpha_exponent &&
         a.moments == b.moments && a.ygap == b.ygap &&
         a.lemma_samples == b.lemma_samples &&
         a.quad.time_nodes == b.quad.time_nodes &&
         a.quad.coarse_time_nodes == b.quad.coarse_time_nodes &&
         a.quad.alpha_nodes == b.quad.alpha_nodes &&
         a.quad.time_scale == b.quad.time_scale && a.out_dir == b.out_dir;
}

namespace {

const std::set<std::string>& known_kinds() {
  static const std::set<std::string> k = {"fit",     "covcheck",    "fubm-density",
                                          "confine", "tensor-probe", "conjugate-freeness"};
  return k;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
  ordered_json j;
  j["schema"] = cfg.schema;
  j["kind"] = cfg.kind;
  j["d"] = cfg.d;
  j["q"] = cfg.q;
  j["polys"] = cfg.polys;
  j["fspec"] = cfg.fspec;
  j["zkind"] = cfg.zkind;
  j["n_grid"] = cfg.n_grid;
  j["m_grid"] = cfg.m_grid;
  j["samples"] = cfg.samples;
  j["seed"] = cfg.seed;
  j["runs"] = cfg.runs;
  j["t_final"] = cfg.t_final;
  j["dt"] = cfg.dt;
  j["lhs_paths"] = cfg.lhs_paths;
  j["rhs_triples"] = cfg.rhs_triples;
  j["node_stride"] = cfg.node_stride;
  j["t_density"] = cfg.t_density;
  j["alpha_exponent"] = cfg.alpha_exponent;
  j["moments"] = cfg.moments;
  j["ygap"] = cfg.ygap;
  j["lemma_samples"] = cfg.lemma_samples;
  j["quad"] = ordered_json{{"time_nodes", cfg.quad.time_nodes},
                           {"coarse_time_nodes", cfg.quad.coarse_time_nodes},
                           {"alpha_nodes", cfg.quad.alpha_nodes},
                           {"time_scale", cfg.quad.time_scale}};
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  if (!j.contains("schema") || !j["schema"].is_number_integer() ||
      j["schema"].get<int>() != 1)
    throw std::invalid_argument("config: unsupported schema (expected 1)");

  ExperimentConfig cfg;
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "schema") {
        cfg.schema = val.get<int>();
      } else if (key == "kind") {
        cfg.kind = val.get<std::string>();
      } else if (key == "d") {
        cfg.d = val.get<int>();
      } else if (key == "q") {
        cfg.q = val.get<int>();
      } else if (key == "polys") {
        cfg.polys = val.get<std::vector<std::string>>();
      } else if (key == "fspec") {
        cfg.fspec = val.get<std::string>();
      } else if (key == "zkind") {
        cfg.zkind = val.get<std::string>();
      } else if (key == "n_grid") {
        cfg.n_grid = val.get<std::vector<int>>();
      } else if (key == "m_grid") {
        cfg.m_grid = val.get<std::vector<int>>();
      } else if (key == "samples") {
        cfg.samples = val.get<std::vector<long long>>();
      } else if (key == "seed") {
        cfg.seed = val.get<std::uint64_t>();
      } else if (key == "runs") {
        cfg.runs = val.get<int>();
      } else if (key == "t_final") {
        cfg.t_final = val.get<double>();
      } else if (key == "dt") {
        cfg.dt = val.get<double>();
      } else if (key == "lhs_paths") {
        cfg.lhs_paths = val.get<long long>();
      } else if (key == "rhs_triples") {
        cfg.rhs_triples = val.get<int>();
      } else if (key == "node_stride") {
        cfg.node_stride = val.get<int>();
      } else if (key == "t_density") {
        cfg.t_density = val.get<double>();
      } else if (key == "alpha_exponent") {
        cfg.alpha_exponent = val.get<double>();
      } else if (key == "moments") {
        cfg.moments = val.get<int>();
      } else if (key == "ygap") {
        cfg.ygap = val.get<double>();
      } else if (key == "lemma_samples") {
        cfg.lemma_samples = val.get<long long>();
      } else if (key == "quad") {
        if (!val.is_object()) throw std::invalid_argument("quad must be an object");
        for (const auto& [qk, qv] : val.items()) {
          if (qk == "time_nodes")
            cfg.quad.time_nodes = qv.get<int>();
          else if (qk == "coarse_time_nodes")
            cfg.quad.coarse_time_nodes = qv.get<int>();
          else if (qk == "alpha_nodes")
            cfg.quad.alpha_nodes = qv.get<int>();
          else if (qk == "time_scale")
            cfg.quad.time_scale = qv.get<double>();
          else
            throw std::invalid_argument("config: unknown key quad." + qk);
        }
      } else if (key == "out_dir") {
        cfg.out_dir = val.get<std::string>();
      } else {
        throw std::invalid_argument("config: unknown key " + key);
      }
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument("config: bad value for " + key + ": " + e.what());
    }
  }
  if (!cfg.kind.empty() && known_kinds().count(cfg.kind) == 0)
    throw std::invalid_argument("config: unknown kind " + cfg.kind);
  return cfg;
}

// ---------------------------------------------------------------------------
// f spec

expansion::FourierSpec parse_fspec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("fspec: expected moment:<m> or trig:(y,re,im);...");
  const std::string head = text.substr(0, colon);
  const std::string body = text.substr(colon + 1);
  if (head == "moment") {
    std::size_t pos = 0;
    int m = 0;
    try {
      m = std::stoi(body, &pos);
    } catch (const std::exception&) {
      throw std::invalid_argument("fspec: bad moment power: " + body);
    }
    if (pos != body.size()) throw std::invalid_argument("fspec: trailing text: " + body);
    return expansion::FourierSpec::moment(m);
  }
  if (head == "trig") {
    std::vector<std::pair<double, cplx>> atoms;
    std::size_t i = 0;
    while (i < body.size()) {
      if (body[i] == ';') {
        ++i;
        continue;
      }
      if (body[i] != '(') throw std::invalid_argument("fspec: expected '(' in trig atom");
      ++i;
      double vals[3];
      for (int v = 0; v < 3; ++v) {
        std::size_t used = 0;
        try {
          vals[v] = std::stod(body.substr(i), &used);
        } catch (const std::exception&) {
          throw std::invalid_argument("fspec: bad number in trig atom");
        }
        i += used;
        if (v < 2) {
          if (i >= body.size() || body[i] != ',')
            throw std::invalid_argument("fspec: expected ',' in trig atom");
          ++i;
        }
      }
      if (i >= body.size() || body[i] != ')')
        throw std::invalid_argument("fspec: expected ')' in trig atom");
      ++i;
      atoms.emplace_back(vals[0], cplx{vals[1], vals[2]});
    }
    if (atoms.empty()) throw std::invalid_argument("fspec: empty trig list");
    return expansion::FourierSpec::trig(std::move(atoms));
  }
  throw std::invalid_argument("fspec: unknown head " + head);
}

std::string fspec_to_string(const expansion::FourierSpec& f) {
  if (f.mode == expansion::FourierSpec::Mode::Polynomial)
    return "moment:" + std::to_string(f.moment_power);
  std::string out = "trig:";
  bool first = true;
  for (const auto& [y, c] : f.atoms) {
    if (!first) out += ';';
    first = false;
    out += '(' + fmt_double(y) + ',' + fmt_double(c.real()) + ',' +
           fmt_double(c.imag()) + ')';
  }
  return out;
}

// ---------------------------------------------------------------------------
// output plumbing

std::string csv_to_string(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (i) out += ',';
    out += t.header[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    if (row.size() != t.header.size())
      throw std::logic_error("csv_to_string: ragged row");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

void write_file(const std::string& path, const std::string& bytes) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write: " + path);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string svg_line_plot(
    const std::string& title,
    const std::vector<std::vector<std::pair<double, double>>>& series,
    const std::vector<std::string>& labels) {
  const int w = 640, h = 400, pad = 48;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& [x, y] : s) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!(x1 > x0)) x1 = x0 + 1.0;
  if (!(y1 > y0)) y1 = y0 + 1.0;
  const auto px = [&](double x) {
    return pad + (x - x0) / (x1 - x0) * (w - 2 * pad);
  };
  const auto py = [&](double y) {
    return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) +
         "\" height=\"" + std::to_string(h) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + std::to_string(w / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\">" + title +
         "</text>\n";
  out += "<line x1=\"" + fmt_double(pad) + "\" y1=\"" + fmt_double(h - pad) +
         "\" x2=\"" + fmt_double(w - pad) + "\" y2=\"" + fmt_double(h - pad) +
         "\" stroke=\"black\"/>\n";
  out += "<line x1=\"" + fmt_double(pad) + "\" y1=\"" + fmt_double(pad) +
         "\" x2=\"" + fmt_double(pad) + "\" y2=\"" + fmt_double(h - pad) +
         "\" stroke=\"black\"/>\n";
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % 4];
    std::string pts;
    for (const auto& [x, y] : series[s])
      pts += fmt_double(px(x)) + "," + fmt_double(py(y)) + " ";
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" points=\"" + pts + "\"/>\n";
    if (s < labels.size())
      out += "<text x=\"" + std::to_string(w - pad) + "\" y=\"" +
             std::to_string(pad + 16 * static_cast<int>(s)) +
             "\" text-anchor=\"end\" font-family=\"monospace\" fill=\"" + color +
             "\">" + labels[s] + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::vector<Eigen::MatrixXcd> make_zfamily(const std::string& zkind, int q, int n) {
  if (q < 0) throw std::invalid_argument("make_zfamily: q must be >= 0");
  if (zkind == "none" || q == 0) return {};
  std::vector<Eigen::MatrixXcd> out;
  out.reserve(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) {
    Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n, n);
    if (zkind == "identity") {
      z.setIdentity();
    } else if (zkind == "signdiag") {
      const int block = std::max(1, n >> (j + 1));
      for (int i = 0; i < n; ++i) z(i, i) = ((i / block) % 2 == 0) ? 1.0 : -1.0;
    } else {
      throw std::invalid_argument("make_zfamily: unknown zkind " + zkind);
    }
    out.push_back(std::move(z));
  }
  return out;
}

// ---------------------------------------------------------------------------
// shared experiment helpers

namespace {

struct LetterCensus {
  int max_u = 0;
  int max_z = 0;
  std::set<int> uidx;
};

LetterCensus census(const NCPoly& p) {
  LetterCensus c;
  for (const auto& [w, coef] : p.terms()) {
    (void)coef;
    for (const auto& f : w.factors) {
      const auto* l = std::get_if<ncalg::Letter>(&f);
      if (l == nullptr)
        throw std::invalid_argument("experiments accept letter polynomials only");
      if (l->kind == Kind::U || l->kind == Kind::V) {
        c.max_u = std::max(c.max_u, l->index);
        c.uidx.insert(l->index);
      } else {
        c.max_z = std::max(c.max_z, l->index);
      }
    }
  }
  return c;
}

NCPoly parsed_poly(const ExperimentConfig& cfg, std::size_t i) {
  if (cfg.polys.size() <= i)
    throw std::invalid_argument(cfg.kind + ": missing polynomial " + std::to_string(i));
  return parse::parse_poly(cfg.polys[i]);
}

struct MeanSe {
  cplx mean{0.0, 0.0};
  double se = 0.0;
};

MeanSe mean_se(const std::vector<cplx>& xs) {
  MeanSe r;
  if (xs.empty()) return r;
  r.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  if (xs.size() < 2) return r;
  std::vector<double> dev(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) dev[i] = std::norm(xs[i] - r.mean);
  r.se = std::sqrt(pairwise_sum(dev) /
                   (static_cast<double>(xs.size()) * (xs.size() - 1.0)));
  return r;
}

Eigen::MatrixXcd hermitian_part(const Eigen::MatrixXcd& a, double tol_scale) {
  const double defect = (a - a.adjoint()).norm();
  const double scale = std::max(1.0, a.norm());
  if (defect > tol_scale * scale)
    throw std::runtime_error("matrix is not self-adjoint within tolerance");
  return 0.5 * (a + a.adjoint());
}

// diag(exp(i y lambda)) conjugated back: V e^{iyL} V^*
Eigen::MatrixXcd unitary_phase(const Eigen::MatrixXcd& vecs,
                               const Eigen::VectorXd& lam, double y) {
  Eigen::VectorXcd ph(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i)
    ph(i) = std::exp(cplx{0.0, y * lam(i)});
  return vecs * ph.asDiagonal() * vecs.adjoint();
}

using Laurent = std::map<long long, cplx>;

Laurent laurent_mul(const Laurent& a, const Laurent& b) {
  Laurent out;
  for (const auto& [ea, ca] : a)
    for (const auto& [eb, cb] : b) out[ea + eb] += ca * cb;
  return out;
}

std::string fmt_int(long long v) { return std::to_string(v); }

}  // namespace

// ---------------------------------------------------------------------------
// spectrum confinement

ConfinementReport run_spectrum_confinement(const ExperimentConfig& cfg) {
  const NCPoly p = parsed_poly(cfg, 0);
  if (!(p == ncalg::adjoint(p)))
    throw std::invalid_argument("confine: polynomial must be self-adjoint");
  if (cfg.n_grid.empty()) throw std::invalid_argument("confine: empty dimension grid");
  const LetterCensus cs = census(p);

  ConfinementReport rep;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;

  // support bracketing from the limiting moments; exact for one unitary letter
  // and no matrix letters, where every word collapses to a power of u
  if (cs.max_z == 0 && cs.uidx.size() == 1) {
    Laurent base;
    for (const auto& [w, c] : p.terms()) {
      long long e = 0;
      for (const auto& f : w.factors)
        e += (std::get<ncalg::Letter>(f).kind == Kind::U) ? 1 : -1;
      base[e] += c;
    }
    const double mean = base[0].real();
    base[0] -= cplx{mean, 0.0};
    Laurent cur{{0, cplx{1.0, 0.0}}};
    double edge = 0.0;
    double prev_mu = 0.0;
    int used = 0;
    const int order = std::max(2, cfg.moments);
    for (int k = 1; k <= order; ++k) {
      cur = laurent_mul(cur, base);
      if (k % 2 != 0) continue;
      const auto it = cur.find(0);
      const double mu = it == cur.end() ? 0.0 : std::max(0.0, it->second.real());
      if (mu > 0.0) {
        edge = std::max(edge, std::pow(mu, 1.0 / k));
        if (prev_mu > 0.0) edge = std::max(edge, std::sqrt(mu / prev_mu));
      }
      prev_mu = mu;
      used = k;
    }
    rep.edge_estimate = edge;
    rep.moments_used = used;
    lo = mean - edge;
    hi = mean + edge;
  }

  // hull of one sample at an enlarged dimension
  const int maxn = *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());
  rep.proxy_n = std::min(2 * maxn, 1024);
  if (rep.proxy_n < maxn) rep.proxy_n = maxn;
  {
    RngStream rng(cfg.seed, 1);
    rmt::MatrixAssignment asg;
    for (int i = 0; i < cs.max_u; ++i) asg.u.push_back(rmt::haar_sample(rng, rep.proxy_n));
    asg.z = make_zfamily(cfg.zkind, cs.max_z, rep.proxy_n);
    const Eigen::MatrixXcd a = rmt::eval_on_matrices(p, asg, rep.proxy_n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian_part(a, 1e-8),
                                                       Eigen::EigenvaluesOnly);
    lo = std::min(lo, es.eigenvalues().minCoeff());
    hi = std::max(hi, es.eigenvalues().maxCoeff());
  }
  rep.lo = lo;
  rep.hi = hi;

  rep.csv.header = {"n", "run", "lo", "hi", "margin", "outliers", "total", "frac_outside"};
  for (std::size_t idx = 0; idx < cfg.n_grid.size(); ++idx) {
    const int n = cfg.n_grid[idx];
    if (n < 1) throw std::invalid_argument("confine: dimensions must be positive");
    const double margin = std::pow(static_cast<double>(n), -cfg.alpha_exponent);
    for (int run = 0; run < std::max(1, cfg.runs); ++run) {
      RngStream rng(cfg.seed, 1000 + 4096 * static_cast<std::uint64_t>(idx) + run);
      rmt::MatrixAssignment asg;
      for (int i = 0; i < cs.max_u; ++i) asg.u.push_back(rmt::haar_sample(rng, n));
      asg.z = make_zfamily(cfg.zkind, cs.max_z, n);
      const Eigen::MatrixXcd a = rmt::eval_on_matrices(p, asg, n);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian_part(a, 1e-8),
                                                         Eigen::EigenvaluesOnly);
      int outside = 0;
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        const double x = es.eigenvalues()(i);
        if (x < lo - margin || x > hi + margin) ++outside;
      }
      ConfinementRow row;
      row.n = n;
      row.run = run;
      row.outliers = outside;
      row.total = n;
      row.frac = static_cast<double>(outside) / n;
      rep.rows.push_back(row);
      rep.csv.rows.push_back({fmt_int(n), fmt_int(run), fmt_double(lo), fmt_double(hi),
                              fmt_double(margin), fmt_int(outside), fmt_int(n),
                              fmt_double(row.frac)});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// tensor probe

namespace {

Eigen::MatrixXcd kron(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
  Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// P(U (x) I, I (x) Y): every word splits as (product of U's) (x) (product of Y's)
Eigen::MatrixXcd eval_tensor(const NCPoly& p, const std::vector<Eigen::MatrixXcd>& us,
                             const std::vector<Eigen::MatrixXcd>& ys, int n, int m) {
  Eigen::MatrixXcd acc = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n) * m,
                                                static_cast<Eigen::Index>(n) * m);
  for (const auto& [w, c] : p.terms()) {
    Eigen::MatrixXcd au = Eigen::MatrixXcd::Identity(n, n);
    Eigen::MatrixXcd ay = Eigen::MatrixXcd::Identity(m, m);
    for (const auto& f : w.factors) {
      const auto& l = std::get<ncalg::Letter>(f);
      switch (l.kind) {
        case Kind::U:
          au = au * us.at(static_cast<std::size_t>(l.index) - 1);
          break;
        case Kind::V:
          au = au * us.at(static_cast<std::size_t>(l.index) - 1).adjoint();
          break;
        case Kind::Z:
          ay = ay * ys.at(static_cast<std::size_t>(l.index) - 1);
          break;
        case Kind::Y:
          ay = ay * ys.at(static_cast<std::size_t>(l.index) - 1).adjoint();
          break;
      }
    }
    acc += c * kron(au, ay);
  }
  return acc;
}

Eigen::MatrixXcd seeded_hermitian(std::uint64_t seed, std::uint64_t stream, int m,
                                  bool normalize) {
  RngStream rng(seed, stream);
  Eigen::MatrixXcd g(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) g(r, c) = cplx{rng.next_normal(), rng.next_normal()};
  Eigen::MatrixXcd h = 0.5 * (g + g.adjoint());
  if (normalize) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
    const double nrm = std::max(std::abs(es.eigenvalues().minCoeff()),
                                std::abs(es.eigenvalues().maxCoeff()));
    if (nrm > 0.0) h /= nrm;
  }
  return h;
}

Eigen::MatrixXcd seeded_ginibre(std::uint64_t seed, std::uint64_t stream, int m) {
  RngStream rng(seed, stream);
  Eigen::MatrixXcd g(m, m);
  const double s = 1.0 / std::sqrt(2.0 * m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      g(r, c) = cplx{rng.next_normal() * s, rng.next_normal() * s};
  return g;
}

}  // namespace

TensorReport run_tensor_probe(const ExperimentConfig& cfg) {
  const NCPoly p = parsed_poly(cfg, 0);
  const LetterCensus cs = census(p);
  if (cfg.n_grid.empty() || cfg.m_grid.empty())
    throw std::invalid_argument("tensor-probe: needs both dimension grids");
  const bool sa = (p == ncalg::adjoint(p));
  const int maxn = *std::max_element(cfg.n_grid.begin(), cfg.n_grid.end());

  TensorReport rep;
  rep.csv.header = {"record", "n", "m", "a", "b", "c", "d", "e"};

  std::map<int, std::vector<Eigen::MatrixXcd>> ys_by_m;
  for (const int m : cfg.m_grid) {
    if (m < 1) throw std::invalid_argument("tensor-probe: M must be positive");
    auto& ys = ys_by_m[m];
    if (!ys.empty()) continue;
    for (int j = 0; j < std::max(1, cs.max_z); ++j)
      ys.push_back(seeded_hermitian(cfg.seed, 7000 + 16ULL * m + j, m, true));
  }

  const auto norm_of = [&](const Eigen::MatrixXcd& a) {
    if (sa) {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian_part(a, 1e-8),
                                                         Eigen::EigenvaluesOnly);
      return std::max(std::abs(es.eigenvalues().minCoeff()),
                      std::abs(es.eigenvalues().maxCoeff()));
    }
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(a);
    return svd.singularValues()(0);
  };

  const auto sample_norm = [&](int n, int m, std::uint64_t stream) {
    RngStream rng(cfg.seed, stream);
    std::vector<Eigen::MatrixXcd> us;
    for (int i = 0; i < cs.max_u; ++i) us.push_back(rmt::haar_sample(rng, n));
    return norm_of(eval_tensor(p, us, ys_by_m.at(m), n, m));
  };

  std::map<int, double> proxy_by_m;
  for (const int m : cfg.m_grid) {
    if (proxy_by_m.count(m)) continue;
    int np = std::min(2 * maxn, 4096 / m);
    if (np < maxn) np = maxn;
    if (static_cast<long long>(np) * m > 4096)
      throw std::length_error("tensor-probe: N*M exceeds the memory guard");
    proxy_by_m[m] = sample_norm(np, m, 500000 + static_cast<std::uint64_t>(m));
  }

  for (std::size_t idx = 0; idx < cfg.n_grid.size(); ++idx) {
    const int n = cfg.n_grid[idx];
    for (const int m : cfg.m_grid) {
      if (static_cast<long long>(n) * m > 4096)
        throw std::length_error("tensor-probe: N*M exceeds the memory guard");
      const long long count =
          cfg.samples.empty()
              ? 4
              : cfg.samples[std::min(idx, cfg.samples.size() - 1)];
      double sum = 0.0;
      double mn = std::numeric_limits<double>::infinity();
      double mx = -mn;
      for (long long s = 0; s < count; ++s) {
        const double v = sample_norm(
            n, m,
            600000 + (static_cast<std::uint64_t>(idx) << 32) +
                (static_cast<std::uint64_t>(m) << 20) + static_cast<std::uint64_t>(s));
        sum += v;
        mn = std::min(mn, v);
        mx = std::max(mx, v);
      }
      TensorRow row;
      row.n = n;
      row.m = m;
      row.norm_mean = sum / static_cast<double>(count);
      row.norm_min = mn;
      row.norm_max = mx;
      row.proxy = proxy_by_m.at(m);
      rep.rows.push_back(row);
      rep.csv.rows.push_back({"norm", fmt_int(n), fmt_int(m), fmt_double(row.norm_mean),
                              fmt_double(row.norm_min), fmt_double(row.norm_max),
                              fmt_double(row.proxy),
                              fmt_double(std::abs(row.norm_mean - row.proxy))});
    }
  }

  // trace identity on random 4-tuples at M = 8
  {
    const int m0 = 8;
    const Eigen::MatrixXcd a = seeded_ginibre(cfg.seed, 9001, m0);
    const Eigen::MatrixXcd b = seeded_ginibre(cfg.seed, 9002, m0);
    const Eigen::MatrixXcd c = seeded_ginibre(cfg.seed, 9003, m0);
    const Eigen::MatrixXcd d = seeded_ginibre(cfg.seed, 9004, m0);
    rep.lemma_lhs = (a * b * c * d).trace() / static_cast<double>(m0);
    std::vector<cplx> vals;
    vals.reserve(static_cast<std::size_t>(cfg.lemma_samples));
    for (long long s = 0; s < cfg.lemma_samples; ++s) {
      RngStream rng(cfg.seed, 700000 + static_cast<std::uint64_t>(s));
      const Eigen::MatrixXcd w1 = rmt::haar_sample(rng, m0);
      const Eigen::MatrixXcd w2 = rmt::haar_sample(rng, m0);
      vals.push_back(
          (b * w1 * a * w2 * d * w1.adjoint() * c * w2.adjoint()).trace() /
          static_cast<double>(m0));
    }
    const MeanSe ms = mean_se(vals);
    rep.lemma_mc = static_cast<double>(m0) * m0 * ms.mean;
    rep.lemma_se = static_cast<double>(m0) * m0 * ms.se;
    rep.lemma_sigmas =
        rep.lemma_se > 0.0 ? std::abs(rep.lemma_lhs - rep.lemma_mc) / rep.lemma_se : 0.0;
    rep.csv.rows.push_back({"lemma", fmt_int(m0), fmt_int(m0),
                            fmt_double(rep.lemma_lhs.real()),
                            fmt_double(rep.lemma_lhs.imag()),
                            fmt_double(rep.lemma_mc.real()), fmt_double(rep.lemma_se),
                            fmt_double(rep.lemma_sigmas)});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// conjugation freeness

ConjReport run_conjugation_freeness(const ExperimentConfig& cfg) {
  const NCPoly p = parsed_poly(cfg, 0);
  if (!(p == ncalg::adjoint(p)))
    throw std::invalid_argument("conjugate-freeness: polynomial must be self-adjoint");
  if (p.deg() < 1)
    throw std::invalid_argument("conjugate-freeness: polynomial must be non-constant");
  const LetterCensus cs = census(p);
  if (cs.max_z > 0)
    throw std::invalid_argument("conjugate-freeness: unitary letters only");
  if (cfg.n_grid.empty())
    throw std::invalid_argument("conjugate-freeness: empty dimension grid");

  ConjReport rep;
  rep.csv.header = {"n", "moment_re", "moment_im", "stderr", "gap_high", "window_ok",
                    "samples"};
  for (std::size_t idx = 0; idx < cfg.n_grid.size(); ++idx) {
    const int n = cfg.n_grid[idx];
    const long long count =
        cfg.samples.empty() ? 200 : cfg.samples[std::min(idx, cfg.samples.size() - 1)];

    // two fixed diagonal projections with distinct block patterns
    Eigen::VectorXcd a1 = Eigen::VectorXcd::Zero(n), a2 = Eigen::VectorXcd::Zero(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) a1(i) = 1.0;
    const int block = std::max(1, n / 4);
    int c2n = 0;
    for (int i = 0; i < n; ++i)
      if ((i / block) % 2 == 0) {
        a2(i) = 1.0;
        ++c2n;
      }
    const double c1 = static_cast<double>(half) / n;
    const double c2 = static_cast<double>(c2n) / n;

    const double y1 = cfg.ygap, y2 = 2.0 * cfg.ygap;
    const double gap_high = std::sqrt(static_cast<double>(n) / std::log(std::max(3, n)));
    const bool window_ok = cfg.ygap > 1.0 && cfg.ygap < gap_high;

    std::vector<cplx> vals;
    vals.reserve(static_cast<std::size_t>(count));
    for (long long s = 0; s < count; ++s) {
      RngStream rng(cfg.seed, 800000 + (static_cast<std::uint64_t>(idx) << 32) +
                                  static_cast<std::uint64_t>(s));
      rmt::MatrixAssignment asg;
      for (int i = 0; i < cs.max_u; ++i) asg.u.push_back(rmt::haar_sample(rng, n));
      const Eigen::MatrixXcd pm =
          hermitian_part(rmt::eval_on_matrices(p, asg, n), 1e-8);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(pm);
      const Eigen::MatrixXcd e1 = unitary_phase(es.eigenvectors(), es.eigenvalues(), y1);
      const Eigen::MatrixXcd e2 = unitary_phase(es.eigenvectors(), es.eigenvalues(), y2);
      const Eigen::MatrixXcd m1 = e1 * a1.asDiagonal() * e1.adjoint();
      const Eigen::MatrixXcd m2 = e2 * a2.asDiagonal() * e2.adjoint();
      vals.push_back((m1 * m2).trace() / static_cast<double>(n) - c1 * c2);
    }
    const MeanSe ms = mean_se(vals);
    ConjRow row;
    row.n = n;
    row.moment = ms.mean;
    row.se = ms.se;
    row.gap_high = gap_high;
    row.window_ok = window_ok;
    rep.rows.push_back(row);
    rep.csv.rows.push_back({fmt_int(n), fmt_double(ms.mean.real()),
                            fmt_double(ms.mean.imag()), fmt_double(ms.se),
                            fmt_double(gap_high), window_ok ? "1" : "0",
                            fmt_int(count)});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// delegating experiments

FitOutput run_expansion_fit(const ExperimentConfig& cfg) {
  const NCPoly p = parsed_poly(cfg, 0);
  const expansion::FourierSpec f = parse_fspec(cfg.fspec);
  if (cfg.n_grid.size() < 2 || cfg.n_grid.size() != cfg.samples.size())
    throw std::invalid_argument("fit: n_grid and samples must align (>= 2 rows)");
  const std::string zkind = cfg.zkind;
  const int q = cfg.q;
  const auto zfam = [zkind, q](int n) { return make_zfamily(zkind, q, n); };

  FitOutput out;
  out.fit = expansion::expansion_fit(p, f, zfam, cfg.n_grid, cfg.samples, cfg.seed,
                                     std::max(1, cfg.d), cfg.quad);
  out.csv.header = {"n",           "estimate_re", "estimate_im", "stderr",
                    "intercept_re", "intercept_im", "intercept_se", "slope_re",
                    "slope_im",    "slope_se",    "resid_slope", "resid_slope_se",
                    "resid_points", "insufficient", "alpha0_re",  "alpha0_im",
                    "alpha1_re",   "alpha1_im"};
  for (const auto& r : out.fit.rows) {
    out.csv.rows.push_back(
        {fmt_int(r.n), fmt_double(r.estimate.real()), fmt_double(r.estimate.imag()),
         fmt_double(r.stderr_), fmt_double(out.fit.intercept.real()),
         fmt_double(out.fit.intercept.imag()), fmt_double(out.fit.intercept_se),
         fmt_double(out.fit.slope.real()), fmt_double(out.fit.slope.imag()),
         fmt_double(out.fit.slope_se), fmt_double(out.fit.resid_slope),
         fmt_double(out.fit.resid_slope_se), fmt_int(out.fit.resid_points),
         out.fit.insufficient ? "1" : "0", fmt_double(out.fit.alpha0_ref.real()),
         fmt_double(out.fit.alpha0_ref.imag()), fmt_double(out.fit.alpha1_ref.real()),
         fmt_double(out.fit.alpha1_ref.imag())});
  }
  std::vector<std::pair<double, double>> est, fitline;
  for (const auto& r : out.fit.rows) {
    const double x = 1.0 / (static_cast<double>(r.n) * r.n);
    est.emplace_back(x, r.estimate.real());
    fitline.emplace_back(x, (out.fit.intercept + out.fit.slope * x).real());
  }
  out.svg = svg_line_plot("trace estimate vs 1/N^2", {est, fitline},
                          {"estimate", "weighted fit"});
  return out;
}

CovOutput run_covcheck(const ExperimentConfig& cfg) {
  if (cfg.polys.size() < 2 || cfg.polys.size() % 2 != 0)
    throw std::invalid_argument("covcheck: polynomials come in (P, Q) pairs");
  if (cfg.n_grid.empty()) throw std::invalid_argument("covcheck: needs a dimension");
  std::vector<std::pair<NCPoly, NCPoly>> pairs;
  for (std::size_t i = 0; i + 1 < cfg.polys.size(); i += 2)
    pairs.emplace_back(parse::parse_poly(cfg.polys[i]), parse::parse_poly(cfg.polys[i + 1]));
  const int n = cfg.n_grid.front();
  const auto zm = make_zfamily(cfg.zkind, cfg.q, n);

  CovOutput out;
  out.results = rmt::covariance_check_pairs(pairs, zm, n, cfg.t_final, cfg.dt,
                                            cfg.lhs_paths, cfg.rhs_triples, cfg.seed,
                                            cfg.node_stride);
  out.csv.header = {"pair",   "lhs_re", "lhs_im", "lhs_se",        "rhs_re",
                    "rhs_im", "rhs_se", "sigma_combined", "gap_sigmas"};
  for (std::size_t i = 0; i < out.results.size(); ++i) {
    const auto& r = out.results[i];
    const double sig =
        std::sqrt(r.lhs.stderr_ * r.lhs.stderr_ + r.rhs.stderr_ * r.rhs.stderr_);
    const double gap = sig > 0.0 ? std::abs(r.lhs.mean - r.rhs.mean) / sig : 0.0;
    out.csv.rows.push_back({fmt_int(static_cast<long long>(i)),
                            fmt_double(r.lhs.mean.real()), fmt_double(r.lhs.mean.imag()),
                            fmt_double(r.lhs.stderr_), fmt_double(r.rhs.mean.real()),
                            fmt_double(r.rhs.mean.imag()), fmt_double(r.rhs.stderr_),
                            fmt_double(sig), fmt_double(gap)});
  }
  return out;
}

DensityOutput run_fubm_density(const ExperimentConfig& cfg) {
  if (!(cfg.t_density > 4.0))
    throw std::invalid_argument("fubm-density: needs t > 4");
  const fubm::DensityTable tab = fubm::build_table(cfg.t_density);
  DensityOutput out;
  out.normalization_defect = fubm::normalization_defect(tab);
  out.max_residual = tab.max_residual;
  {
    freetrace::TraceContext ctx(0);
    for (int n = 1; n <= 6; ++n)
      out.max_moment_defect =
          std::max(out.max_moment_defect,
                   std::abs(fubm::moment_by_quadrature(tab, n) -
                            ctx.fubm_moment(n, cfg.t_density)));
  }
  out.haarize_dist = fubm::haarize_distance(tab);
  out.haarize_bound =
      4.0 * std::exp(2.0) * std::acos(-1.0) * std::exp(-cfg.t_density / 2.0);
  for (int k = 0; k <= 4; ++k) {
    const cplx pf = fubm::pushforward_moment(tab, k);
    out.max_pushforward_defect = std::max(
        out.max_pushforward_defect, std::abs(pf - (k == 0 ? cplx{1.0, 0.0} : cplx{0.0, 0.0})));
  }
  out.csv.header = {"s", "kappa", "G"};
  std::vector<std::pair<double, double>> curve;
  for (int i = 0; i < tab.grid; ++i) {
    out.csv.rows.push_back({fmt_double(tab.angles[i]), fmt_double(tab.kappa[i]),
                            fmt_double(tab.G[i])});
    if (i % 16 == 0) curve.emplace_back(tab.angles[i], tab.kappa[i]);
  }
  out.svg = svg_line_plot("spectral density kappa(s)", {curve}, {"kappa"});
  return out;
}

// ---------------------------------------------------------------------------
// selftest

SelftestResult run_selftest(std::uint64_t seed, const std::string& out_dir) {
  SelftestResult res;
  std::string digest_bytes;
  const auto check = [&res](bool ok, const std::string& name) {
    res.lines.push_back(std::string(ok ? "[PASS] " : "[FAIL] ") + name);
    res.ok = res.ok && ok;
  };

  {
    bool ok = true;
    for (const std::string src :
         {"U1 + U1*", "(0+2i)*U1*Z1^2", "U1* Z1", "U1^3*Z2 - (1.5-0.25i)*Z1"}) {
      try {
        const NCPoly p = parse::parse_poly(src);
        ok = ok && (parse::parse_poly(parse::print_poly(p)) == p);
      } catch (const std::exception&) {
        ok = false;
      }
    }
    check(ok, "parser round trip");
  }
  {
    bool ok = true;
    try {
      ok = indexsets::build_universe(1).all.size() == 4 &&
           indexsets::build_universe(2).all.size() == 48;
    } catch (const std::exception&) {
      ok = false;
    }
    check(ok, "index universe sizes");
  }
  {
    bool ok = true;
    try {
      freetrace::TraceContext ctx(0);
      const NCPoly q = parse::parse_poly("U1 + U1*");
      const auto r = expansion::alpha(0, q * q * q * q, {}, 1);
      ok = std::abs(r.alpha0 - cplx{6.0, 0.0}) < 1e-12;
    } catch (const std::exception&) {
      ok = false;
    }
    check(ok, "free moment ts((u+u*)^4) = 6");
  }
  {
    bool ok = true;
    try {
      ExperimentConfig cfg;
      cfg.kind = "fit";
      cfg.polys = {"U1 + U1*"};
      cfg.fspec = "moment:2";
      cfg.zkind = "none";
      cfg.q = 0;
      cfg.n_grid = {4, 8, 16, 24};
      cfg.samples = {2000, 2000, 1000, 500};
      cfg.seed = seed;
      cfg.quad = {4, 3, 2, 4.0};
      const FitOutput fo = run_expansion_fit(cfg);
      const std::string bytes = csv_to_string(fo.csv);
      write_file(out_dir + "/selftest_fit.csv", bytes);
      digest_bytes += bytes;
      ok = std::isfinite(fo.fit.intercept.real()) &&
           std::abs(fo.fit.alpha0_ref - cplx{2.0, 0.0}) < 1e-6;
    } catch (const std::exception&) {
      ok = false;
    }
    check(ok, "small moment fit and csv");
  }
  {
    bool ok = true;
    try {
      ExperimentConfig cfg;
      cfg.kind = "covcheck";
      cfg.polys = {"U1", "U1"};
      cfg.zkind = "none";
      cfg.q = 0;
      cfg.n_grid = {8};
      cfg.t_final = 0.2;
      cfg.dt = 0.01;
      cfg.lhs_paths = 400;
      cfg.rhs_triples = 40;
      cfg.seed = seed;
      const CovOutput co = run_covcheck(cfg);
      const std::string bytes = csv_to_string(co.csv);
      write_file(out_dir + "/selftest_covcheck.csv", bytes);
      digest_bytes += bytes;
      ok = co.results.size() == 1 && std::isfinite(co.results[0].lhs.mean.real());
    } catch (const std::exception&) {
      ok = false;
    }
    check(ok, "small covariance check and csv");
  }
  {
    bool ok = true;
    try {
      ExperimentConfig cfg;
      cfg.kind = "fubm-density";
      cfg.t_density = 8.0;
      const DensityOutput dо = run_fubm_density(cfg);
      const std::string bytes = csv_to_string(dо.csv);
      write_file(out_dir + "/selftest_density.csv", bytes);
      digest_bytes += bytes;
      ok = dо.normalization_defect < 1e-8 && dо.max_moment_defect < 1e-5;
    } catch (const std::exception&) {
      ok = false;
    }
    check(ok, "density table and csv");
  }
  res.csv_digest = fnv1a(digest_bytes);
  return res;
}

}  // namespace haarx::harness
