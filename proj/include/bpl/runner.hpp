#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "bpl/config.hpp"
#include "bpl/eval.hpp"
#include "bpl/pltrain.hpp"

namespace bpl {

struct RunResult {
  std::string system;
  double param = 0.0;
  Method method = Method::bayes_pl;
  double rel_l2 = 0.0;
  double seconds_total = 0.0;
  std::map<std::string, double> phase_seconds;
  int iterations_run = 0;
  int final_pl = 0;
};

/// Executes one configured run and writes its artifacts (effective config,
/// summary, history, fields, checkpoints) into cfg.out_dir when set.
inline RunResult run(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const auto t_start = std::chrono::steady_clock::now();
  const bool emit = !cfg.out_dir.empty();
  if (emit) {
    fs::create_directories(cfg.out_dir);
    write_config(cfg, cfg.out_dir + "/effective_config.txt");
  }

  const Architecture arch; // the benchmark network: 2 -> 4x50 tanh -> 1
  const SystemSpec spec = cfg.make_system();
  const PseudoLabelConfig pl_cfg = cfg.make_pl_config();
  const DataBundle bundle = build_bundle(spec, mix_seed(cfg.seed, seed_stream::data), cfg.sizes);
  const ReferenceSolution ref(spec, cfg.rd_ref_nx, cfg.rd_ref_nt);
  const std::vector<Point> eval_pts =
      random_eval_points(spec, cfg.eval_points, mix_seed(cfg.seed, seed_stream::eval));
  Eigen::VectorXd eval_ref(eval_pts.size());
  for (std::size_t i = 0; i < eval_pts.size(); ++i)
    eval_ref[i] = ref(eval_pts[i].x, eval_pts[i].t);

  RunResult result;
  result.system = cfg.system;
  result.method = cfg.method;
  result.param = spec.primary_param();

  TrainHooks hooks;
  hooks.rel_l2 = [&](const std::vector<ParameterVector>& samples) {
    return relative_l2(predict_mean(arch, samples, eval_pts), eval_ref);
  };
  hooks.timing = [&result](const char* phase, double seconds) {
    result.phase_seconds[phase] += seconds;
  };
  if (emit && cfg.checkpoint_every > 0) {
    fs::create_directories(cfg.out_dir + "/checkpoints");
    hooks.checkpoint = [&](int iteration, const ParameterVector& theta) {
      if (iteration % cfg.checkpoint_every == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "/checkpoints/iter_%04d.bin", iteration);
        save_checkpoint(cfg.out_dir + name, arch, theta);
      }
    };
  }
  std::ofstream trace_file;
  if (emit && cfg.trace) {
    trace_file.open(cfg.out_dir + "/trace.csv");
    trace_file << "iteration,chain,sample,logp\n";
    hooks.sampler_diag = [&trace_file](int iteration, const SampleRun& run) {
      for (std::size_t c = 0; c < run.chains.size(); ++c)
        for (std::size_t s = 0; s < run.chains[c].logp_trace.size(); ++s)
          trace_file << iteration << ',' << c << ',' << s << ','
                     << run.chains[c].logp_trace[s] << "\n";
    };
  }

  std::vector<ParameterVector> prediction_ensemble;
  TrainHistory history;
  ParameterVector final_theta;

  switch (cfg.method) {
    case Method::bayes_pl:
    case Method::bayes_nopl: {
      BayesTrainResult r = train(arch, spec, cfg.posterior, cfg.sampler, pl_cfg, bundle,
                                 cfg.seed, cfg.pretrain_epochs, cfg.adam, hooks);
      prediction_ensemble = std::move(r.samples);
      history = std::move(r.history);
      final_theta = std::move(r.theta_last);
      result.iterations_run = static_cast<int>(history.rows.size());
      result.final_pl = static_cast<int>(r.bundle.pl.size());
      if (emit) bundle_to_csv(r.bundle, spec, cfg.out_dir + "/bundle.csv");
      break;
    }
    case Method::vanilla: {
      std::ofstream loss_csv;
      std::function<void(int, const LossBreakdown&)> on_epoch;
      if (emit) {
        loss_csv.open(cfg.out_dir + "/loss.csv");
        loss_csv << "epoch,total,ic,bc,pde\n";
        char buf[160];
        on_epoch = [&loss_csv, &buf](int e, const LossBreakdown& lb) {
          std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g\n", e, lb.total, lb.ic,
                        lb.bc, lb.pde);
          loss_csv << buf;
        };
      }
      final_theta = baseline_vanilla(arch, spec, bundle, cfg.resolved_vanilla_epochs(), cfg.seed,
                                     cfg.adam, on_epoch, hooks);
      prediction_ensemble = {final_theta};
      break;
    }
    case Method::ensemble_pl: {
      EnsembleTrainResult r =
          baseline_ensemble_pl(arch, spec, pl_cfg, bundle, cfg.ensemble_size,
                               cfg.ensemble_epochs, cfg.seed, cfg.adam, hooks);
      prediction_ensemble = std::move(r.members);
      history = std::move(r.history);
      result.iterations_run = static_cast<int>(history.rows.size());
      result.final_pl = static_cast<int>(r.bundle.pl.size());
      final_theta = prediction_ensemble[0];
      if (emit) bundle_to_csv(r.bundle, spec, cfg.out_dir + "/bundle.csv");
      break;
    }
  }

  result.rel_l2 = hooks.rel_l2(prediction_ensemble);
  result.seconds_total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  if (emit) {
    if (!history.rows.empty()) history.write_csv(cfg.out_dir + "/history.csv");
    export_fields(arch, prediction_ensemble, ref, cfg.grid_nx, cfg.grid_nt,
                  cfg.out_dir + "/fields.csv");
    save_checkpoint(cfg.out_dir + "/checkpoint.bin", arch, final_theta);
    if (cfg.method == Method::ensemble_pl)
      for (std::size_t m = 0; m < prediction_ensemble.size(); ++m) {
        char name[64];
        std::snprintf(name, sizeof name, "/member_%02zu.bin", m);
        save_checkpoint(cfg.out_dir + name, arch, prediction_ensemble[m]);
      }

    std::ofstream summary(cfg.out_dir + "/summary.txt");
    char buf[128];
    summary << "method = " << method_name(cfg.method) << "\n";
    summary << "system = " << cfg.system << "\n";
    std::snprintf(buf, sizeof buf, "param = %.10g\n", result.param);
    summary << buf;
    summary << "seed = " << cfg.seed << "\n";
    std::snprintf(buf, sizeof buf, "relative_l2 = %.10g\n", result.rel_l2);
    summary << buf;
    summary << "iterations_run = " << result.iterations_run << "\n";
    summary << "final_pl_count = " << result.final_pl << "\n";
    std::snprintf(buf, sizeof buf, "seconds_total = %.3f\n", result.seconds_total);
    summary << buf;
    for (const auto& [phase, secs] : result.phase_seconds) {
      std::snprintf(buf, sizeof buf, "seconds_%s = %.3f\n", phase.c_str(), secs);
      summary << buf;
    }
  }
  return result;
}

struct SuiteEntry {
  std::string system;
  double param = 0.0;
  std::string method;
};

struct SuiteConfig {
  std::vector<SuiteEntry> runs;
  ConfigMap shared; // applied to every run
};

/// Suite file: `run = <system> <param> <method>` lines plus shared
/// `key = value` overrides.
inline SuiteConfig parse_suite_file(const std::string& path) {
  SuiteConfig suite;
  ConfigMap kv = parse_config_file(path);
  // run-lines cannot repeat inside a map, so re-scan the file for them.
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key, eq;
    ls >> key >> eq;
    if (key != "run" || eq != "=") continue;
    SuiteEntry e;
    ls >> e.system >> e.param >> e.method;
    if (ls.fail()) throw std::runtime_error("suite: bad run line '" + line + "'");
    suite.runs.push_back(e);
  }
  kv.erase("run");
  suite.shared = kv;
  if (suite.runs.empty()) throw std::runtime_error("suite: no run lines in " + path);
  return suite;
}

/// Runs every entry, one subdirectory each, and aggregates a results table.
/// Individual failures are recorded per row and the suite continues.
inline std::vector<RunResult> run_suite(const SuiteConfig& suite, const std::string& out_dir,
                                        bool desk_scale = false) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream table(out_dir + "/results.csv");
  table << "system,param,method,relative_l2,seconds,status\n";
  std::vector<RunResult> results;
  for (const auto& e : suite.runs) {
    ConfigMap kv = suite.shared;
    kv["system"] = e.system;
    char pbuf[32];
    std::snprintf(pbuf, sizeof pbuf, "%.10g", e.param);
    kv["param"] = pbuf;
    kv["method"] = e.method;
    std::string sub = e.system + "_" + pbuf + "_" + e.method;
    kv["out"] = out_dir + "/" + sub;
    try {
      const RunConfig cfg = resolve_config(kv, desk_scale);
      const RunResult r = run(cfg);
      results.push_back(r);
      char buf[192];
      std::snprintf(buf, sizeof buf, "%s,%.10g,%s,%.10g,%.3f,ok\n", r.system.c_str(), r.param,
                    method_name(r.method), r.rel_l2, r.seconds_total);
      table << buf << std::flush;
    } catch (const std::exception& ex) {
      table << e.system << ',' << e.param << ',' << e.method << ",,,error: " << ex.what()
            << "\n"
            << std::flush;
    }
  }
  return results;
}

} // namespace bpl
