// agg: config-driven oracle experiments, lower-bound audits and self-tests.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "logagg/logagg.hpp"

namespace {

struct GlobalFlags {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replicates;
  std::optional<std::string> out;
  unsigned threads = 1;
  bool quiet = false;
};

void print_checks(const std::vector<logagg::Check>& checks) {
  for (const auto& c : checks) {
    std::printf("%-4s %s  %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  }
}

int cmd_run(const std::string& path, const GlobalFlags& g) {
  logagg::ExperimentConfig cfg = logagg::parse_experiment_config(logagg::read_key_values_file(path));
  if (g.seed) cfg.seed = *g.seed;
  if (g.replicates) cfg.replicates = *g.replicates;
  if (g.out) cfg.output_path = *g.out;
  if (cfg.replicates < 1) throw logagg::ConfigError("--replicates must be at least 1");

  const logagg::OracleReport rep = logagg::run_oracle(cfg, {g.threads});
  const std::filesystem::path dir(cfg.output_path);
  std::filesystem::create_directories(dir);
  logagg::write_text_file((dir / "report.json").string(), logagg::report_json(rep).dump(2) + "\n");
  logagg::write_text_file((dir / "replicates.csv").string(), logagg::replicates_csv(rep));
  if (!g.quiet) {
    std::printf("%s oracle: %zu replicates, violation rate %.4f, threshold %.6g, %.2f s\n",
                logagg::to_string(cfg.problem), rep.rows.size(), rep.violation_rate,
                rep.rows.front().threshold, rep.runtime_seconds);
    print_checks(rep.checks);
    std::printf("wrote %s\n", dir.string().c_str());
  }
  return rep.all_pass() ? 0 : 1;
}

int cmd_audit(const std::string& path, const GlobalFlags& g) {
  logagg::AuditConfig cfg = logagg::parse_audit_config(logagg::read_key_values_file(path));
  if (g.seed) cfg.seed = *g.seed;
  if (g.out) cfg.output_path = *g.out;

  const logagg::AuditReport rep = logagg::run_lower_bound_audit(cfg);
  const std::filesystem::path dir(cfg.output_path);
  std::filesystem::create_directories(dir);
  logagg::write_text_file((dir / "audit.json").string(), logagg::audit_json(rep).dump(2) + "\n");
  std::string csv = "name,i,j,value,relation,bound,pass\n";
  for (const auto& c : rep.certificates) {
    csv += c.name + ',' + std::to_string(c.i) + ',' + std::to_string(c.j) + ',' + logagg::format_g17(c.value) +
           ',' + (c.upper ? "<=" : ">=") + ',' + logagg::format_g17(c.bound) + ',' + (c.pass ? "1" : "0") + '\n';
  }
  logagg::write_text_file((dir / "certificates.csv").string(), csv);
  if (!g.quiet) {
    std::size_t failed = 0;
    for (const auto& c : rep.certificates) {
      if (!c.pass) {
        ++failed;
        std::printf("FAIL %s (%zu,%zu): %.10g %s %.10g\n", c.name.c_str(), c.i, c.j, c.value,
                    c.upper ? "<=" : ">=", c.bound);
      }
    }
    std::printf("%s hypercube: D = %d, amplitude %.6g, %zu certificates, %zu failed, %.2f s\n",
                logagg::to_string(cfg.problem), rep.family.D, rep.family.amplitude, rep.certificates.size(), failed,
                rep.runtime_seconds);
    std::printf("wrote %s\n", dir.string().c_str());
  }
  return rep.all_pass() ? 0 : 1;
}

int cmd_selftest(const GlobalFlags& g) {
  const auto checks = logagg::run_selftest(g.seed.value_or(1));
  if (!g.quiet) print_checks(checks);
  for (const auto& c : checks) {
    if (!c.pass) return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex aggregation of log-densities: oracle experiments and audits"};
  app.set_version_flag("--version", std::string(logagg::version_string()));
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  std::uint64_t seed = 0;
  std::size_t replicates = 0;
  std::string out;
  auto* seed_opt = app.add_option("--seed", seed, "Override the RNG seed");
  auto* rep_opt = app.add_option("--replicates", replicates, "Override the replicate count");
  auto* out_opt = app.add_option("--out", out, "Override the output directory");
  app.add_option("--threads", g.threads, "Worker threads for replicates")->check(CLI::Range(1u, 1024u));
  app.add_flag("--quiet", g.quiet, "Suppress console output");

  std::string run_path;
  auto* run = app.add_subcommand("run", "Run a Monte Carlo oracle experiment");
  run->add_option("config", run_path, "Experiment config file")->required();
  std::string audit_path;
  auto* audit = app.add_subcommand("audit-lower-bound", "Verify hypercube lower-bound certificates");
  audit->add_option("config", audit_path, "Audit config file")->required();
  auto* selftest = app.add_subcommand("selftest", "Run the randomized invariant suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  if (rep_opt->count() > 0) g.replicates = replicates;
  if (out_opt->count() > 0) g.out = out;

  try {
    if (run->parsed()) return cmd_run(run_path, g);
    if (audit->parsed()) return cmd_audit(audit_path, g);
    if (selftest->parsed()) return cmd_selftest(g);
  } catch (const std::exception& e) {
    std::cerr << "agg: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
