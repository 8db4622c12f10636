#pragma once

// Experiment plumbing: JSON configs, CSV/SVG emission, and the runnable
// experiments behind the CLI subcommands.  Every experiment is a pure
// function of (config, seed) and writes deterministic bytes.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "haarx/common.hpp"
#include "haarx/expansion.hpp"
#include "haarx/ncalg.hpp"
#include "haarx/rmt.hpp"

namespace haarx::harness {

struct ExperimentConfig {
  int schema = 1;
  std::string kind;  // fit | covcheck | fubm-density | confine | tensor-probe | conjugate-freeness
  int d = 1;         // number of unitary letters
  int q = 1;         // number of matrix letters
  std::vector<std::string> polys;
  std::string fspec = "moment:1";
  std::string zkind = "signdiag";  // signdiag | identity | none
  std::vector<int> n_grid;
  std::vector<int> m_grid;
  std::vector<long long> samples;  // aligned with n_grid where applicable
  std::uint64_t seed = 1;
  int runs = 20;            // confinement repetitions per dimension
  double t_final = 1.0;     // covcheck horizon
  double dt = 5e-3;         // SDE step
  long long lhs_paths = 20000;
  int rhs_triples = 150;
  int node_stride = 2;
  double t_density = 8.0;   // density experiment time
  double alpha_exponent = 0.4;
  int moments = 64;         // confinement support bracketing order
  double ygap = 4.0;        // conjugation experiment spacing
  long long lemma_samples = 20000;
  expansion::QuadCfg quad;
  std::string out_dir = ".";
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

// strict, versioned: unknown keys and schema != 1 are errors
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);

// "moment:<m>" or "trig:(y,re,im);(y,re,im);..."
expansion::FourierSpec parse_fspec(const std::string& text);
std::string fspec_to_string(const expansion::FourierSpec& f);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string csv_to_string(const CsvTable& t);
void write_file(const std::string& path, const std::string& bytes);
std::uint64_t fnv1a(const std::string& bytes);

// decorative; the numbers live in the CSV next to it
std::string svg_line_plot(
    const std::string& title,
    const std::vector<std::vector<std::pair<double, double>>>& series,
    const std::vector<std::string>& labels);

// the deterministic matrix-letter families used by the experiments
std::vector<Eigen::MatrixXcd> make_zfamily(const std::string& zkind, int q, int n);

struct ConfinementRow {
  int n = 0;
  int run = 0;
  int outliers = 0;
  int total = 0;
  double frac = 0.0;
};

struct ConfinementReport {
  double lo = 0.0, hi = 0.0;    // reference interval before fattening
  double edge_estimate = 0.0;   // moment-bracketing radius about the mean
  int moments_used = 0;         // 0 when only the proxy hull was available
  int proxy_n = 0;
  std::vector<ConfinementRow> rows;
  CsvTable csv;
};

ConfinementReport run_spectrum_confinement(const ExperimentConfig& cfg);

struct TensorRow {
  int n = 0, m = 0;
  double norm_mean = 0.0, norm_min = 0.0, norm_max = 0.0;
  double proxy = 0.0;  // same M at the enlarged reference dimension
};

struct TensorReport {
  std::vector<TensorRow> rows;
  cplx lemma_lhs{0.0, 0.0};
  cplx lemma_mc{0.0, 0.0};  // M^2-scaled Monte Carlo mean
  double lemma_se = 0.0;    // on the scaled mean
  double lemma_sigmas = 0.0;
  CsvTable csv;
};

TensorReport run_tensor_probe(const ExperimentConfig& cfg);

struct ConjRow {
  int n = 0;
  cplx moment{0.0, 0.0};
  double se = 0.0;
  double gap_high = 0.0;  // upper end of the admissible spacing window
  bool window_ok = true;
};

struct ConjReport {
  std::vector<ConjRow> rows;
  CsvTable csv;
};

ConjReport run_conjugation_freeness(const ExperimentConfig& cfg);

struct FitOutput {
  expansion::FitReport fit;
  CsvTable csv;
  std::string svg;
};

FitOutput run_expansion_fit(const ExperimentConfig& cfg);

struct CovOutput {
  std::vector<rmt::CovarianceResult> results;  // one per (P, Q) pair
  CsvTable csv;
};

CovOutput run_covcheck(const ExperimentConfig& cfg);

struct DensityOutput {
  double normalization_defect = 0.0;
  double max_moment_defect = 0.0;   // ODE moments vs quadrature, n <= 6
  double haarize_dist = 0.0;        // sup |e^{is} - e^{iG(s)}|
  double haarize_bound = 0.0;       // 4 e^2 pi e^{-t/2}
  double max_pushforward_defect = 0.0;
  double max_residual = 0.0;
  CsvTable csv;
  std::string svg;
};

DensityOutput run_fubm_density(const ExperimentConfig& cfg);

struct SelftestResult {
  bool ok = true;
  std::vector<std::string> lines;
  std::uint64_t csv_digest = 0;  // over every byte written
};

SelftestResult run_selftest(std::uint64_t seed, const std::string& out_dir);

}  // namespace haarx::harness
