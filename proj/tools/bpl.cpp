// Command-line runner for the Bayesian pseudo-label PINN benchmarks.

#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>

#include "bpl/runner.hpp"

namespace {

struct RunFlags {
  std::string config_file;
  std::string system, method, out;
  std::string param, rho, d, beta, seed, iterations;
  std::vector<std::string> sets;
  bool desk_scale = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config_file, "key = value configuration file");
  cmd->add_option("--system", f.system,
                  "reaction | diffusion | reaction-diffusion | convection");
  cmd->add_option("--method", f.method, "bayes-pl | bayes-nopl | vanilla | ensemble-pl");
  cmd->add_option("--param", f.param, "primary system parameter (rho, d or beta)");
  cmd->add_option("--rho", f.rho, "reaction rate");
  cmd->add_option("--d", f.d, "diffusion parameter");
  cmd->add_option("--beta", f.beta, "wave speed");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--iterations", f.iterations, "outer-loop iteration budget");
  cmd->add_option("--out", f.out, "output directory for run artifacts");
  cmd->add_flag("--desk-scale", f.desk_scale,
                "reduced preset: N=50, burn-in 50, 64 leapfrog steps, 2 chains, half iterations");
  cmd->add_option("--set", f.sets, "extra overrides as key=value")->take_all();
}

bpl::ConfigMap collect(const RunFlags& f) {
  bpl::ConfigMap kv;
  if (!f.config_file.empty()) kv = bpl::parse_config_file(f.config_file);
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    kv[s.substr(0, eq)] = s.substr(eq + 1);
  }
  if (!f.system.empty()) kv["system"] = f.system;
  if (!f.method.empty()) kv["method"] = f.method;
  if (!f.param.empty()) kv["param"] = f.param;
  if (!f.rho.empty()) kv["rho"] = f.rho;
  if (!f.d.empty()) kv["d"] = f.d;
  if (!f.beta.empty()) kv["beta"] = f.beta;
  if (!f.seed.empty()) kv["seed"] = f.seed;
  if (!f.iterations.empty()) kv["iterations"] = f.iterations;
  if (!f.out.empty()) kv["out"] = f.out;
  return kv;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian pseudo-label PINN trainer and benchmark runner"};
  app.require_subcommand(1);

  RunFlags run_flags;
  CLI::App* run_cmd = app.add_subcommand("run", "execute one configured run");
  add_run_flags(run_cmd, run_flags);

  std::string suite_config, suite_out;
  std::string suite_seed;
  bool suite_desk = false;
  CLI::App* suite_cmd = app.add_subcommand("suite", "execute a benchmark suite");
  suite_cmd->add_option("--config", suite_config, "suite file with run lines")->required();
  suite_cmd->add_option("--out", suite_out, "output directory")->required();
  suite_cmd->add_option("--seed", suite_seed, "master seed for every run");
  suite_cmd->add_flag("--desk-scale", suite_desk, "apply the reduced preset to every run");

  std::string ref_system = "reaction-diffusion", ref_out;
  double ref_rho = 5.0, ref_d = 2.0;
  int ref_nx = 512, ref_nt = 2000;
  CLI::App* ref_cmd =
      app.add_subcommand("reference", "export a reaction-diffusion reference grid as CSV");
  ref_cmd->add_option("--rho", ref_rho, "reaction rate");
  ref_cmd->add_option("--d", ref_d, "diffusion parameter");
  ref_cmd->add_option("--nx", ref_nx, "spatial grid size (power of two)");
  ref_cmd->add_option("--nt", ref_nt, "time steps");
  ref_cmd->add_option("--out", ref_out, "output CSV path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const bpl::RunConfig cfg = bpl::resolve_config(collect(run_flags), run_flags.desk_scale);
      const bpl::RunResult r = bpl::run(cfg);
      std::printf("%s %s param=%.10g relative_l2=%.10g (%.1fs)\n", method_name(r.method),
                  r.system.c_str(), r.param, r.rel_l2, r.seconds_total);
    } else if (suite_cmd->parsed()) {
      bpl::SuiteConfig suite = bpl::parse_suite_file(suite_config);
      if (!suite_seed.empty()) suite.shared["seed"] = suite_seed;
      const auto results = bpl::run_suite(suite, suite_out, suite_desk);
      std::printf("suite finished: %zu/%zu runs ok; table at %s/results.csv\n", results.size(),
                  suite.runs.size(), suite_out.c_str());
      if (results.size() != suite.runs.size()) return 1;
    } else if (ref_cmd->parsed()) {
      const bpl::SystemSpec spec = bpl::SystemSpec::reaction_diffusion(ref_rho, ref_d);
      bpl::solve_reaction_diffusion(spec, ref_nx, ref_nt).write_csv(ref_out);
      std::printf("reference grid written to %s\n", ref_out.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
