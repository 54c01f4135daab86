#pragma once

// Monte Carlo oracle experiments, the bias/variance decomposition of the
// excess risk, hypercube certificate audits and the report writers behind the
// `agg` command line tool.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "logagg/density_agg.hpp"
#include "logagg/fourier.hpp"
#include "logagg/measures.hpp"
#include "logagg/simplex_opt.hpp"
#include "logagg/simulate.hpp"
#include "logagg/spectral_agg.hpp"

#ifndef LOGAGG_VERSION
#define LOGAGG_VERSION "0.1.0-unknown"
#endif

namespace logagg {

inline const char* version_string() noexcept { return LOGAGG_VERSION; }

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flat `key = value` configuration files.

using KeyValues = std::map<std::string, std::string>;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  if (used != v.size() || !std::isfinite(out)) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' is out of range: '" + v + "'");
  }
}

}  // namespace detail

/// Lines `key = value`; `#` starts a comment; blank lines are ignored.
inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "config") {
  KeyValues out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

inline KeyValues read_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_key_values(in, path);
}

enum class Problem { density, spectral };

inline const char* to_string(Problem p) { return p == Problem::density ? "density" : "spectral"; }

inline Problem parse_problem(const std::string& v) {
  if (v == "density") return Problem::density;
  if (v == "spectral") return Problem::spectral;
  throw ConfigError("config: problem must be 'density' or 'spectral', got '" + v + "'");
}

struct ExperimentConfig {
  Problem problem = Problem::density;
  std::string truth;
  std::vector<std::string> bank;
  std::size_t n = 0;
  std::size_t N = 0;
  double x_dev = 3.0;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  std::size_t grid_size = 1024;
  double tol = 1e-8;
  std::string output_path = "agg-out";
  /// Sobolev smoothness of the spectral class.
  double r = 1.0;
};

inline ExperimentConfig parse_experiment_config(const KeyValues& kv) {
  static const std::set<std::string> allowed{"problem", "truth", "bank", "n", "N", "x_dev", "replicates",
                                             "seed", "grid_size", "tol", "output_path", "r"};
  for (const auto& [k, v] : kv) {
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }
  for (const char* req : {"problem", "truth", "bank", "n", "N"}) {
    if (!kv.count(req)) throw ConfigError(std::string("config: missing required key '") + req + "'");
  }
  ExperimentConfig c;
  c.problem = parse_problem(kv.at("problem"));
  c.truth = kv.at("truth");
  {
    std::stringstream ss(kv.at("bank"));
    std::string item;
    while (std::getline(ss, item, ';')) {
      item = detail::trim(item);
      if (!item.empty()) c.bank.push_back(item);
    }
  }
  c.n = detail::parse_uint("n", kv.at("n"));
  c.N = detail::parse_uint("N", kv.at("N"));
  if (kv.count("x_dev")) c.x_dev = detail::parse_double("x_dev", kv.at("x_dev"));
  if (kv.count("replicates")) c.replicates = detail::parse_uint("replicates", kv.at("replicates"));
  if (kv.count("seed")) c.seed = detail::parse_uint("seed", kv.at("seed"));
  if (kv.count("grid_size")) c.grid_size = detail::parse_uint("grid_size", kv.at("grid_size"));
  if (kv.count("tol")) c.tol = detail::parse_double("tol", kv.at("tol"));
  if (kv.count("output_path")) c.output_path = kv.at("output_path");
  if (kv.count("r")) c.r = detail::parse_double("r", kv.at("r"));

  if (c.replicates < 1) throw ConfigError("config: replicates must be at least 1");
  if (!(c.x_dev > 0.0)) throw ConfigError("config: x_dev must be positive");
  if (c.n < 1) throw ConfigError("config: n must be at least 1");
  if (c.bank.size() != c.N) {
    throw ConfigError("config: bank lists " + std::to_string(c.bank.size()) + " estimators but N = " +
                      std::to_string(c.N));
  }
  if (!(c.tol > 0.0)) throw ConfigError("config: tol must be positive");
  return c;
}

struct AuditConfig {
  Problem problem = Problem::density;
  std::size_t N = 2;
  std::size_t n = 10000;
  double x_dev = 1.0;
  double L = 1.0;
  double r = 1.0;
  /// 0 selects a default suited to the family.
  std::size_t grid_size = 0;
  std::uint64_t seed = 1;
  std::string output_path = "agg-audit";
};

inline AuditConfig parse_audit_config(const KeyValues& kv) {
  static const std::set<std::string> allowed{"problem", "N", "n", "x_dev", "L", "r", "grid_size", "seed",
                                             "output_path"};
  for (const auto& [k, v] : kv) {
    if (!allowed.count(k)) throw ConfigError("config: unknown key '" + k + "'");
  }
  for (const char* req : {"problem", "N", "n", "x_dev", "L"}) {
    if (!kv.count(req)) throw ConfigError(std::string("config: missing required key '") + req + "'");
  }
  AuditConfig c;
  c.problem = parse_problem(kv.at("problem"));
  c.N = detail::parse_uint("N", kv.at("N"));
  c.n = detail::parse_uint("n", kv.at("n"));
  c.x_dev = detail::parse_double("x_dev", kv.at("x_dev"));
  c.L = detail::parse_double("L", kv.at("L"));
  if (kv.count("r")) c.r = detail::parse_double("r", kv.at("r"));
  if (kv.count("grid_size")) c.grid_size = detail::parse_uint("grid_size", kv.at("grid_size"));
  if (kv.count("seed")) c.seed = detail::parse_uint("seed", kv.at("seed"));
  if (kv.count("output_path")) c.output_path = kv.at("output_path");
  if (c.N < 2) throw ConfigError("config: N must be at least 2");
  if (c.n < 1) throw ConfigError("config: n must be at least 1");
  if (!(c.x_dev > 0.0)) throw ConfigError("config: x_dev must be positive");
  return c;
}

// ---------------------------------------------------------------------------
// Log-function generators, e.g. "truth + cos(0.2, 3)" or "poly(0, 1, -1)".
//
//   sin(a, k)        a sin(2 pi k x) on [0,1], a sin(k x) on [-pi,pi]
//   cos(a, k)        likewise with cos
//   log1p_cos(a, k)  log(1 + a cos(.)), |a| < 1
//   poly(c0, c1..)   sum_i c_i x^i
//   const(c)         c
//   truth            the truth's log-ratio g_f (bank entries only)

struct LogTerm {
  std::string name;
  std::vector<double> args;
};

inline std::vector<LogTerm> parse_generator(const std::string& text) {
  std::vector<std::string> parts;
  int depth = 0;
  std::string cur;
  for (char ch : text) {
    if (ch == '(') ++depth;
    if (ch == ')') --depth;
    if (depth < 0) throw ConfigError("generator: unbalanced parentheses in '" + text + "'");
    if (ch == '+' && depth == 0) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (depth != 0) throw ConfigError("generator: unbalanced parentheses in '" + text + "'");
  parts.push_back(cur);

  std::vector<LogTerm> terms;
  for (std::string p : parts) {
    p = detail::trim(p);
    if (p.empty()) throw ConfigError("generator: empty term in '" + text + "'");
    LogTerm t;
    const auto open = p.find('(');
    if (open == std::string::npos) {
      t.name = p;
    } else {
      if (p.back() != ')') throw ConfigError("generator: malformed term '" + p + "'");
      t.name = detail::trim(p.substr(0, open));
      std::stringstream ss(p.substr(open + 1, p.size() - open - 2));
      std::string arg;
      while (std::getline(ss, arg, ',')) {
        arg = detail::trim(arg);
        if (!arg.empty()) t.args.push_back(detail::parse_double(t.name, arg));
      }
    }
    const std::size_t na = t.args.size();
    bool ok = false;
    if (t.name == "sin" || t.name == "cos") ok = na == 2;
    else if (t.name == "log1p_cos") ok = na == 2 && std::abs(t.args[0]) < 1.0;
    else if (t.name == "poly") ok = na >= 1;
    else if (t.name == "const") ok = na == 1;
    else if (t.name == "truth") ok = na == 0;
    else throw ConfigError("generator: unknown term '" + t.name + "'");
    if (!ok) throw ConfigError("generator: bad arguments for '" + p + "'");
    terms.push_back(std::move(t));
  }
  return terms;
}

/// Tabulates the sum of the terms; `truth_log` backs the `truth` term.
inline std::vector<double> evaluate_generator(const std::vector<LogTerm>& terms, const Domain& d,
                                              const std::vector<double>* truth_log = nullptr) {
  const bool unit = d.kind() == DomainKind::unit_interval;
  const double freq_scale = unit ? 2.0 * std::numbers::pi : 1.0;
  std::vector<double> out(d.num_nodes(), 0.0);
  for (const LogTerm& t : terms) {
    if (t.name == "truth" && truth_log == nullptr) {
      throw ConfigError("generator: 'truth' may only appear in bank entries");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double x = d.node(i);
      if (t.name == "sin") {
        out[i] += t.args[0] * std::sin(freq_scale * t.args[1] * x);
      } else if (t.name == "cos") {
        out[i] += t.args[0] * std::cos(freq_scale * t.args[1] * x);
      } else if (t.name == "log1p_cos") {
        out[i] += std::log1p(t.args[0] * std::cos(freq_scale * t.args[1] * x));
      } else if (t.name == "poly") {
        double v = 0.0;
        for (auto c = t.args.rbegin(); c != t.args.rend(); ++c) v = v * x + *c;
        out[i] += v;
      } else if (t.name == "const") {
        out[i] += t.args[0];
      } else {
        out[i] += (*truth_log)[i];
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Problem instances.

struct DensityInstance {
  GridFunction truth;
  LogProfile truth_profile;
  DensityBank bank;
  std::vector<double> kl_to_bank;
  std::size_t k_star = 0;
};

inline std::size_t argmin_index(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

inline DensityInstance make_density_instance(const ExperimentConfig& c) {
  const Domain d = Domain::unit(c.grid_size);
  GridFunction truth = normalized_exponential(d, evaluate_generator(parse_generator(c.truth), d));
  LogProfile tp = log_decompose(truth);
  std::vector<GridFunction> members;
  for (const std::string& b : c.bank) {
    members.push_back(normalized_exponential(d, evaluate_generator(parse_generator(b), d, &tp.g)));
  }
  DensityBank bank(std::move(members));
  std::vector<double> kl;
  for (std::size_t k = 0; k < bank.size(); ++k) kl.push_back(kl_divergence(truth, bank.estimator(k)));
  const std::size_t ks = argmin_index(kl);
  return {std::move(truth), std::move(tp), std::move(bank), std::move(kl), ks};
}

struct SpectralInstance {
  GridFunction truth;
  LogProfile truth_profile;
  SpectralBank bank;
  std::vector<double> kl_to_bank;
  std::size_t k_star = 0;
};

inline SpectralInstance make_spectral_instance(const ExperimentConfig& c) {
  const Domain d = Domain::circle(c.grid_size);
  GridFunction truth = exp_times_reference(d, evaluate_generator(parse_generator(c.truth), d));
  LogProfile tp = log_decompose(truth);
  std::vector<GridFunction> members;
  for (const std::string& b : c.bank) {
    members.push_back(exp_times_reference(d, evaluate_generator(parse_generator(b), d, &tp.g)));
  }
  // The declared Sobolev bound is the measured one.
  SpectralBank bank(std::move(members), c.r, std::numeric_limits<double>::infinity());
  std::vector<double> kl;
  for (std::size_t k = 0; k < bank.size(); ++k) kl.push_back(kl_divergence(truth, bank.estimator(k)));
  const std::size_t ks = argmin_index(kl);
  return {std::move(truth), std::move(tp), std::move(bank), std::move(kl), ks};
}

// ---------------------------------------------------------------------------
// Oracle-inequality constants.

/// beta = 2 e^{6K + 2L} + 4K/3 for the density aggregate.
inline double density_beta(double K, double L) { return 2.0 * std::exp(6.0 * K + 2.0 * L) + 4.0 * K / 3.0; }

/// beta = 4 (K e^L + e^{2L + 3K}) for the spectral aggregate.
inline double spectral_beta(double K, double L) { return 4.0 * (K * std::exp(L) + std::exp(2.0 * L + 3.0 * K)); }

/// alpha = 4 K M / C_r with M standing in for the regularity constant of e^{g_f}.
inline double spectral_alpha(double K, double M, double c_r) { return 4.0 * K * M / c_r; }

inline double oracle_threshold(double beta, double alpha, std::size_t N, double x, std::size_t n) {
  return (beta * (std::log(static_cast<double>(N)) + x) + alpha) / static_cast<double>(n);
}

/// Largest violation frequency compatible with P(violation) <= e^{-x} at three
/// binomial standard deviations.
inline double violation_allowance(double x, std::size_t replicates) {
  const double p = std::exp(-x);
  return p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(replicates));
}

// ---------------------------------------------------------------------------
// Excess-risk decomposition: excess <= B_n(l_hat - l_{k*}) + max_k V_n(e_k).

struct Decomposition {
  double bias = 0.0;
  std::vector<double> variance_terms;
  double bound() const {
    return bias + *std::max_element(variance_terms.begin(), variance_terms.end());
  }
};

/// Density case: the empirical measure is unbiased, so B_n = 0 and
/// V(e_k) = <I_n - f, t_k - t_{k*}> - e^{-6K}/4 ||t_k - t_{k*}||^2.
inline Decomposition decompose_deviation(const DensityInstance& inst, const DCriterion& crit) {
  const DensityBank& bank = inst.bank;
  const Domain& d = bank.domain();
  const std::size_t ks = inst.k_star;
  const double penalty = std::exp(-6.0 * bank.K_bound()) / 4.0;
  const auto c = crit.empirical_terms();
  const auto& tks = bank.profile(ks).t;
  Decomposition out;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto& tk = bank.profile(k).t;
    std::vector<double> diff(tk.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = tk[i] - tks[i];
    const double centered = (c[k] - c[ks]) - inner(d, diff, inst.truth.values());
    out.variance_terms.push_back(centered - penalty * l2h_norm_sq(d, diff));
  }
  return out;
}

/// Spectral pieces that depend only on (bank, truth, n): <g_k, fbar_n> and <g_k, f>.
struct SpectralMoments {
  std::vector<double> expected;
  std::vector<double> truth;
};

inline SpectralMoments spectral_moments(const SpectralInstance& inst, std::size_t n) {
  SpectralMoments m;
  for (std::size_t k = 0; k < inst.bank.size(); ++k) {
    const GridFunction g(inst.bank.domain(), inst.bank.profile(k).g);
    m.expected.push_back(pairing_expected_periodogram(g, inst.truth, n));
    m.truth.push_back(inner(g, inst.truth));
  }
  return m;
}

/// Spectral case, all terms linear in the log-ratios:
///   B_n = sum_k lambda_k (<g_k, fbar_n - f>) - <g_{k*}, fbar_n - f>,
///   V(e_k) = <g_k - g_{k*}, I_n - fbar_n> - e^{-3K}/4 ||g_k - g_{k*}||^2,
/// with K = max_k ||g_k||_inf.
inline Decomposition decompose_deviation(const SpectralInstance& inst, const SpectralMoments& mom,
                                         const SCriterion& crit, const SimplexWeights& lambda) {
  const SpectralBank& bank = inst.bank;
  const Domain& d = bank.domain();
  const std::size_t ks = inst.k_star;
  const double penalty = std::exp(-3.0 * bank.K_bound()) / 4.0;
  const auto p = crit.pairings();
  Decomposition out;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    out.bias += lambda[k] * (mom.expected[k] - mom.truth[k]);
  }
  out.bias -= mom.expected[ks] - mom.truth[ks];
  const auto& gks = bank.profile(ks).g;
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto& gk = bank.profile(k).g;
    std::vector<double> diff(gk.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = gk[i] - gks[i];
    const double centered = (p[k] - p[ks]) - (mom.expected[k] - mom.expected[ks]);
    out.variance_terms.push_back(centered - penalty * l2h_norm_sq(d, diff));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports.

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ReplicateRow {
  double excess_kl = 0.0;
  double threshold = 0.0;
  bool violated = false;
  std::vector<double> weights;
  double bias = 0.0;
  double variance_max = 0.0;
  bool decomposition_holds = false;
  double fw_gap = 0.0;
  int iterations = 0;
};

struct OracleReport {
  ExperimentConfig config;
  std::vector<ReplicateRow> rows;
  double violation_rate = 0.0;
  nlohmann::ordered_json constants;
  std::vector<Check> checks;
  double runtime_seconds = 0.0;

  bool all_pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
};

struct RunOptions {
  unsigned threads = 1;
};

namespace detail {

/// Runs body(i) for i in [0, count) on `threads` workers; results must be
/// written to per-index slots. The first exception is rethrown after joining.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next.store(count);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline void finish_report(OracleReport& rep, double min_bank_kl) {
  const std::size_t reps = rep.rows.size();
  std::size_t violated = 0;
  bool prop = true;
  bool nonneg = true;
  double worst_prop = -std::numeric_limits<double>::infinity();
  for (const ReplicateRow& r : rep.rows) {
    violated += r.violated ? 1 : 0;
    prop = prop && r.decomposition_holds;
    worst_prop = std::max(worst_prop, r.excess_kl - r.bias - r.variance_max);
    nonneg = nonneg && r.excess_kl >= -1e-9;
  }
  rep.violation_rate = static_cast<double>(violated) / static_cast<double>(reps);
  const double allowance = violation_allowance(rep.config.x_dev, reps);
  char buf[160];
  std::snprintf(buf, sizeof buf, "rate %.6g <= %.6g", rep.violation_rate, allowance);
  rep.checks.push_back({"violation_rate", rep.violation_rate <= allowance, buf});
  std::snprintf(buf, sizeof buf, "max(excess - bias - max V) = %.3e <= 1e-8", worst_prop);
  rep.checks.push_back({"decomposition_bound", prop, buf});
  if (min_bank_kl <= 1e-12) {
    rep.checks.push_back({"excess_nonnegative", nonneg, "bank contains the truth"});
  }
}

inline double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

inline OracleReport run_density_oracle(const ExperimentConfig& c, const RunOptions& opts = {}) {
  if (c.problem != Problem::density) throw ConfigError("run_density_oracle: problem must be density");
  const auto start = std::chrono::steady_clock::now();
  const DensityInstance inst = make_density_instance(c);
  const double K = inst.bank.K_bound();
  const double L = sup_norm(inst.truth_profile.t);
  const double beta = density_beta(K, L);
  const double threshold = oracle_threshold(beta, 0.0, c.N, c.x_dev, c.n);
  const double best = inst.kl_to_bank[inst.k_star];

  OracleReport rep;
  rep.config = c;
  rep.constants = {{"K", K}, {"L", L}, {"beta", beta}, {"alpha", 0.0}, {"threshold", threshold},
                   {"k_star", inst.k_star}, {"min_bank_kl", best},
                   {"gram_min_eigenvalue", inst.bank.gram_min_eigenvalue()}};
  rep.rows.resize(c.replicates);
  const OptimizerOptions oo{c.tol, 5000};
  detail::parallel_for(c.replicates, opts.threads, [&](std::size_t i) {
    const IidSample sample = sample_iid(inst.truth, c.n, {c.seed, i});
    const DCriterion crit(inst.bank, sample);
    const DensityAggregate agg = aggregate_density(inst.bank, sample, oo);
    const Decomposition dec = decompose_deviation(inst, crit);
    ReplicateRow& row = rep.rows[i];
    row.excess_kl = kl_divergence(inst.truth, agg.f_hat) - best;
    row.threshold = threshold;
    row.violated = row.excess_kl > threshold;
    row.weights.assign(agg.weights.values().begin(), agg.weights.values().end());
    row.bias = dec.bias;
    row.variance_max = dec.bound() - dec.bias;
    row.decomposition_holds = row.excess_kl <= dec.bound() + 1e-8;
    row.fw_gap = agg.optimizer.fw_gap;
    row.iterations = agg.optimizer.iterations;
  });
  detail::finish_report(rep, best);
  rep.runtime_seconds = detail::elapsed_seconds(start);
  return rep;
}

inline OracleReport run_spectral_oracle(const ExperimentConfig& c, const RunOptions& opts = {}) {
  if (c.problem != Problem::spectral) throw ConfigError("run_spectral_oracle: problem must be spectral");
  const auto start = std::chrono::steady_clock::now();
  const SpectralInstance inst = make_spectral_instance(c);
  const Domain& d = inst.bank.domain();
  const double c_r = c_r_constant(c.r).value;
  const int k_max = default_k_max(d);
  const double g_norm = sobolev_norm(GridFunction(d, inst.truth_profile.g), c.r, k_max).norm;
  const double M_f = sobolev_norm(inst.truth, c.r, k_max).norm;
  // Class radii: g in F^S_r(R) iff ||g||_{2,r} <= R / C_r.
  const double L = c_r * g_norm;
  const double K = c_r * inst.bank.max_sobolev_norm();
  const double beta = spectral_beta(K, L);
  const double alpha = spectral_alpha(K, M_f, c_r);
  const double threshold = oracle_threshold(beta, alpha, c.N, c.x_dev, c.n);
  const double best = inst.kl_to_bank[inst.k_star];
  const SpectralMoments mom = spectral_moments(inst, c.n);
  const GaussianSampler sampler(inst.truth, c.n);

  OracleReport rep;
  rep.config = c;
  rep.constants = {{"r", c.r}, {"C_r", c_r}, {"K", K}, {"L", L}, {"K_sup", inst.bank.K_bound()},
                   {"M_f", M_f}, {"beta", beta}, {"alpha", alpha}, {"threshold", threshold},
                   {"k_star", inst.k_star}, {"min_bank_kl", best}};
  rep.rows.resize(c.replicates);
  const OptimizerOptions oo{c.tol, 5000};
  detail::parallel_for(c.replicates, opts.threads, [&](std::size_t i) {
    const GaussianPath path = sampler.sample({c.seed, i});
    const SCriterion crit = spectral_criterion(inst.bank, path);
    OptimizerResult res = maximize_on_simplex([&](std::span<const double> l) { return crit.value(l); },
                                              [&](std::span<const double> l) { return crit.gradient(l); },
                                              inst.bank.size(), oo);
    if (!res.converged) {
      throw ConvergenceError("run_spectral_oracle: replicate " + std::to_string(i) + " stopped with gap " +
                                 std::to_string(res.fw_gap),
                             res);
    }
    const GridFunction f_hat = crit.aggregate(res.weights.values());
    const Decomposition dec = decompose_deviation(inst, mom, crit, res.weights);
    ReplicateRow& row = rep.rows[i];
    row.excess_kl = kl_divergence(inst.truth, f_hat) - best;
    row.threshold = threshold;
    row.violated = row.excess_kl > threshold;
    row.weights.assign(res.weights.values().begin(), res.weights.values().end());
    row.bias = dec.bias;
    row.variance_max = dec.bound() - dec.bias;
    row.decomposition_holds = row.excess_kl <= dec.bound() + 1e-8;
    row.fw_gap = res.fw_gap;
    row.iterations = res.iterations;
  });
  detail::finish_report(rep, best);
  rep.runtime_seconds = detail::elapsed_seconds(start);
  return rep;
}

inline OracleReport run_oracle(const ExperimentConfig& c, const RunOptions& opts = {}) {
  return c.problem == Problem::density ? run_density_oracle(c, opts) : run_spectral_oracle(c, opts);
}

// ---------------------------------------------------------------------------
// Lower-bound audits.

struct Certificate {
  std::string name;
  std::size_t i = 0;
  std::size_t j = 0;
  double value = 0.0;
  double bound = 0.0;
  /// true: value <= bound is required; false: value >= bound.
  bool upper = true;
  bool pass = false;
};

struct AuditReport {
  AuditConfig config;
  HypercubeFamily family;
  std::vector<Certificate> certificates;
  double runtime_seconds = 0.0;

  bool all_pass() const {
    return std::all_of(certificates.begin(), certificates.end(), [](const Certificate& c) { return c.pass; });
  }
};

/// Relative slack for certificates: the bounds are O(1/n) quantities, so a
/// fixed absolute slack would make the smallest ones vacuous.
inline constexpr double kCertificateSlack = 1e-6;

inline Certificate make_certificate(std::string name, std::size_t i, std::size_t j, double value, double bound,
                                    bool upper) {
  const double slack = kCertificateSlack * std::abs(bound);
  const bool pass = upper ? value <= bound + slack : value >= bound - slack;
  return {std::move(name), i, j, value, bound, upper, pass};
}

struct GaussianKl {
  /// Upper bound on KL(N(0, T_n(l)) || N(0, I)); exact when n <= m.
  double kl = 0.0;
  bool exact = false;
  std::size_t m = 0;
  double logdet_m = 0.0;
  /// Lower bound -m ||l - 1||^2 on log det T_m(l).
  double logdet_bound_m = 0.0;
};

/// KL between the Gaussian laws with covariances T_n(l) and the identity for a
/// symbol with int l h = 1: -log det T_n(l) / 2. Above m the determinant is
/// bounded through the prediction variances, which decrease towards
/// exp(int log l h); hence log det T_n >= log det T_m + (n - m) int log l h.
inline GaussianKl gaussian_kl_to_white_noise(const GridFunction& l, std::size_t n, std::size_t m = 4096) {
  GaussianKl out;
  out.m = std::min(n, m);
  const LogdetBound lb = toeplitz_logdet_bound_check(l, out.m);
  out.logdet_m = lb.logdet;
  out.logdet_bound_m = lb.bound;
  if (n <= m) {
    out.exact = true;
    out.kl = -0.5 * lb.logdet;
    return out;
  }
  const GridFunction logl = l.map([](double v) { return std::log(v); });
  const double mean_log = integrate(logl) * l.domain().reference_density();
  out.kl = -0.5 * (lb.logdet + static_cast<double>(n - out.m) * mean_log);
  return out;
}

inline AuditReport run_lower_bound_audit(const AuditConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  AuditReport rep;
  rep.config = c;
  const double budget = std::log(static_cast<double>(c.N)) + c.x_dev;
  const double nn = static_cast<double>(c.n);
  if (c.problem == Problem::density) {
    const int dim = hypercube_dimension(c.N);
    std::size_t grid = c.grid_size;
    if (grid == 0) {
      const std::size_t unit = 4 * static_cast<std::size_t>(dim);
      grid = unit * ((1024 + unit - 1) / unit);
    }
    rep.family = build_density_hypercube(c.N, c.L, c.n, c.x_dev, grid, {c.seed, 0});
    const auto& fam = rep.family;
    const double beta_prime = std::pow(2.0, -8.5) / 3.0;
    for (std::size_t i = 0; i < fam.members.size(); ++i) {
      const LogProfile p = log_decompose(fam.members[i]);
      rep.certificates.push_back(make_certificate("mass_error", i, i, std::abs(p.m - 1.0), 1e-9, true));
      rep.certificates.push_back(make_certificate("membership_t_sup", i, i, sup_norm(p.t), c.L, true));
      if (i > 0) {
        const double kl = nn * kl_divergence(fam.members[i], fam.members[0]);
        rep.certificates.push_back(make_certificate("kl_product", i, 0, kl, budget / 3.0, true));
      }
      for (std::size_t j = i + 1; j < fam.members.size(); ++j) {
        const double h2 = hellinger_sq(fam.members[i], fam.members[j]);
        rep.certificates.push_back(make_certificate("hellinger", i, j, h2, 4.0 * beta_prime * budget / nn, false));
      }
    }
  } else {
    const std::size_t grid = c.grid_size == 0 ? 8192 : c.grid_size;
    rep.family = build_spectral_hypercube(c.N, c.r, c.L, c.n, c.x_dev, grid, {c.seed, 0});
    const auto& fam = rep.family;
    const double beta_prime = std::pow(8.0, -2.5) / 3.0;
    const double c_r = c_r_constant(c.r).value;
    const int k_max = default_k_max(fam.members.front().domain());
    for (std::size_t i = 0; i < fam.members.size(); ++i) {
      const GridFunction& f = fam.members[i];
      const GridFunction l = f.map([](double v) { return 2.0 * std::numbers::pi * v; });
      const LogProfile p = log_decompose(f);
      rep.certificates.push_back(make_certificate("mass_error", i, i, std::abs(p.m - 1.0), 1e-9, true));
      rep.certificates.push_back(make_certificate(
          "envelope", i, i, std::max(l.max() - 1.0, 1.0 - l.min()), fam.amplitude * phi_sup_norm(), true));
      const double sob = sobolev_norm(GridFunction(f.domain(), p.g), c.r, k_max).norm;
      rep.certificates.push_back(make_certificate("membership_sobolev", i, i, sob, c.L / c_r, true));
      if (i > 0) {
        const GaussianKl kl = gaussian_kl_to_white_noise(l, c.n);
        rep.certificates.push_back(make_certificate("gaussian_kl", i, 0, kl.kl, budget / 3.0, true));
        rep.certificates.push_back(make_certificate("logdet_lower_bound", i, kl.m, kl.logdet_m, kl.logdet_bound_m, false));
      }
      for (std::size_t j = i + 1; j < fam.members.size(); ++j) {
        const double h2 = hellinger_sq(fam.members[i], fam.members[j]);
        rep.certificates.push_back(make_certificate("hellinger", i, j, h2, 4.0 * beta_prime * budget / nn, false));
      }
    }
  }
  for (std::size_t i = 0; i < rep.family.codewords.size(); ++i) {
    for (std::size_t j = i + 1; j < rep.family.codewords.size(); ++j) {
      const double dist = static_cast<double>(hamming_distance(rep.family.codewords[i], rep.family.codewords[j]));
      rep.certificates.push_back(make_certificate("hamming", i, j, dist, std::ceil(rep.family.D / 4.0), false));
    }
  }
  rep.runtime_seconds = detail::elapsed_seconds(start);
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::ordered_json config_json(const ExperimentConfig& c) {
  return {{"problem", to_string(c.problem)}, {"truth", c.truth},         {"bank", c.bank},
          {"n", c.n},                        {"N", c.N},                 {"x_dev", c.x_dev},
          {"replicates", c.replicates},      {"seed", c.seed},           {"grid_size", c.grid_size},
          {"tol", c.tol},                    {"output_path", c.output_path}, {"r", c.r}};
}

inline nlohmann::ordered_json checks_json(const std::vector<Check>& checks) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const Check& ch : checks) out.push_back({{"name", ch.name}, {"pass", ch.pass}, {"detail", ch.detail}});
  return out;
}

/// Summary plus per-replicate rows; runtime is the only non-deterministic field.
inline nlohmann::ordered_json report_json(const OracleReport& r) {
  double max_excess = -std::numeric_limits<double>::infinity();
  double max_gap = 0.0;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    max_excess = std::max(max_excess, row.excess_kl);
    max_gap = std::max(max_gap, row.fw_gap);
    rows.push_back({{"excess_kl", row.excess_kl}, {"threshold", row.threshold}, {"violated", row.violated},
                    {"weights", row.weights}, {"bias", row.bias}, {"variance_max", row.variance_max},
                    {"decomposition_holds", row.decomposition_holds}, {"fw_gap", row.fw_gap},
                    {"iterations", row.iterations}});
  }
  return {{"version", version_string()},
          {"config", config_json(r.config)},
          {"theorem_constants", r.constants},
          {"replicates", r.rows.size()},
          {"violation_rate", r.violation_rate},
          {"max_excess_kl", max_excess},
          {"max_fw_gap", max_gap},
          {"checks", checks_json(r.checks)},
          {"all_pass", r.all_pass()},
          {"per_replicate", rows},
          {"runtime_seconds", r.runtime_seconds}};
}

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string replicates_csv(const OracleReport& r) {
  std::string out = "replicate,excess_kl,threshold,violated";
  for (std::size_t k = 0; k < r.config.N; ++k) out += ",weight_" + std::to_string(k + 1);
  out += '\n';
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const ReplicateRow& row = r.rows[i];
    out += std::to_string(i) + ',' + format_g17(row.excess_kl) + ',' + format_g17(row.threshold) + ',' +
           (row.violated ? "1" : "0");
    for (double w : row.weights) out += ',' + format_g17(w);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json audit_json(const AuditReport& r) {
  const auto& f = r.family;
  nlohmann::ordered_json certs = nlohmann::ordered_json::array();
  for (const Certificate& c : r.certificates) {
    certs.push_back({{"name", c.name}, {"i", c.i}, {"j", c.j}, {"value", c.value}, {"bound", c.bound},
                     {"relation", c.upper ? "<=" : ">="}, {"pass", c.pass}});
  }
  std::vector<std::string> words;
  for (const Codeword& w : f.codewords) {
    std::string s;
    for (auto b : w) s += b ? '1' : '0';
    words.push_back(s);
  }
  nlohmann::ordered_json fam = {{"kind", f.kind == FamilyKind::density ? "density" : "spectral"},
                                {"D", f.D},
                                {"amplitude", f.amplitude},
                                {"precondition_lhs", f.precondition_lhs},
                                {"precondition_rhs", f.precondition_rhs},
                                {"codewords", words}};
  if (f.kind == FamilyKind::spectral) {
    fam["branch"] = f.branch;
    fam["cbar_rl"] = f.cbar_rl;
    fam["C_rl"] = f.c_rl;
  }
  return {{"version", version_string()},
          {"config",
           {{"problem", to_string(r.config.problem)}, {"N", r.config.N}, {"n", r.config.n},
            {"x_dev", r.config.x_dev}, {"L", r.config.L}, {"r", r.config.r}, {"seed", r.config.seed}}},
          {"family", fam},
          {"certificates", certs},
          {"all_pass", r.all_pass()},
          {"runtime_seconds", r.runtime_seconds}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Self-test: randomized invariant suites at modest sizes.

inline std::vector<Check> run_selftest(std::uint64_t seed, int instances = 200) {
  std::vector<Check> out;
  Rng rng({seed, 0});
  auto uni = [&](double a, double b) { return a + (b - a) * rng.uniform01(); };
  const Domain unit = Domain::unit(256);
  const Domain circle = Domain::circle(256);

  auto random_trig = [&](const Domain& d, int degree, double amp, bool even) {
    std::vector<double> a(static_cast<std::size_t>(degree) + 1);
    std::vector<double> b(static_cast<std::size_t>(degree) + 1);
    for (int k = 1; k <= degree; ++k) {
      a[static_cast<std::size_t>(k)] = uni(-amp, amp) / k;
      b[static_cast<std::size_t>(k)] = even ? 0.0 : uni(-amp, amp) / k;
    }
    const double scale = d.kind() == DomainKind::unit_interval ? 2.0 * std::numbers::pi : 1.0;
    return GridFunction::tabulate(d, [&, scale](double x) {
      double s = 0.0;
      for (int k = 1; k <= degree; ++k) {
        s += a[static_cast<std::size_t>(k)] * std::cos(scale * k * x) + b[static_cast<std::size_t>(k)] * std::sin(scale * k * x);
      }
      return s;
    });
  };

  {
    bool ok = true;
    double worst = 0.0;
    for (int it = 0; it < instances; ++it) {
      const GridFunction lp = random_trig(unit, 4, 1.0, false);
      const GridFunction lq = random_trig(unit, 4, 1.0, false);
      const GridFunction p = lp.map([](double v) { return std::exp(v); });
      const GridFunction q = lq.map([](double v) { return std::exp(v); });
      const double kl = kl_divergence(p, q);
      ok = ok && kl_divergence(p, p) == 0.0 && kl >= -1e-9 && hellinger_sq(p, q) <= kl + 1e-9;
      std::vector<double> u(p.size());
      double sup = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        u[i] = std::log(p[i] / q[i]);
        sup = std::max(sup, std::abs(u[i]));
      }
      std::vector<double> pu2(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) pu2[i] = p[i] * u[i] * u[i];
      const double barron = 0.5 * std::exp(-sup) * integrate(unit, pu2);
      worst = std::min(worst, kl - barron);
      ok = ok && kl >= barron - 1e-9;
      const LogProfile prof = log_decompose(p);
      const double gs = sup_norm(prof.g);
      ok = ok && std::abs(integrate(unit, prof.t)) <= 1e-9 && prof.m <= std::exp(gs) + 1e-9 &&
           std::abs(prof.psi) <= gs + 1e-9 && sup_norm(prof.t) <= 2.0 * gs + 1e-9;
    }
    out.push_back({"measures_identities", ok, "min(KL - Barron bound) = " + std::to_string(worst)});
  }
  {
    bool ok = true;
    for (int it = 0; it < instances / 4; ++it) {
      const GridFunction l = random_trig(circle, 5, 0.3, true).map([](double v) { return 1.0 + v; });
      const std::size_t n = 4 + static_cast<std::size_t>(rng.bits() % 28);
      const ToeplitzMatrix t = toeplitz_build(l, n);
      const Eigen::VectorXd ev =
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t.dense_real(), Eigen::EigenvaluesOnly).eigenvalues();
      ok = ok && ev.minCoeff() >= l.min() - 1e-8 && ev.maxCoeff() <= l.max() + 1e-8;
      ok = ok && std::abs(t.trace() - static_cast<double>(n) * integrate(l) / (2.0 * std::numbers::pi)) <= 1e-8;
    }
    out.push_back({"toeplitz_eigen_range_and_trace", ok, ""});
  }
  {
    bool ok = true;
    double worst = 0.0;
    for (int it = 0; it < instances / 10; ++it) {
      std::vector<GridFunction> members;
      for (int k = 0; k < 3; ++k) members.push_back(normalized_exponential(unit, random_trig(unit, 3, 0.8, false).values()));
      const DensityBank bank(members);
      std::vector<double> pts(200);
      for (double& v : pts) v = rng.uniform01();
      const IidSample sample(unit, pts);
      const DCriterion crit(bank, sample);
      const DensityAggregate agg = aggregate_density(bank, sample, {1e-10, 5000});
      for (int p = 0; p < 20; ++p) {
        std::vector<double> w{rng.uniform01(), rng.uniform01(), rng.uniform01()};
        const double s = w[0] + w[1] + w[2];
        for (double& v : w) v /= s;
        const double margin = strong_concavity_margin(crit, agg.weights.values(), w);
        worst = std::min(worst, margin);
        ok = ok && margin >= -1e-6;
      }
      const double gc = gradient_check([&](std::span<const double> l) { return crit.value(l); },
                                       [&](std::span<const double> l) { return crit.gradient(l); },
                                       SimplexWeights::uniform(3), 1e-5);
      ok = ok && gc <= 1e-5;
    }
    out.push_back({"density_strong_concavity_and_gradient", ok, "min margin = " + std::to_string(worst)});
  }
  return out;
}

}  // namespace logagg
