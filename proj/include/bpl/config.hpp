#pragma once

#include <climits>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpl/data.hpp"
#include "bpl/optimizer.hpp"
#include "bpl/pltrain.hpp"
#include "bpl/posterior.hpp"
#include "bpl/sampler.hpp"
#include "bpl/systems.hpp"

namespace bpl {

enum class Method { bayes_pl, bayes_nopl, vanilla, ensemble_pl };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::bayes_pl: return "bayes-pl";
    case Method::bayes_nopl: return "bayes-nopl";
    case Method::vanilla: return "vanilla";
    case Method::ensemble_pl: return "ensemble-pl";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "bayes-pl") return Method::bayes_pl;
  if (s == "bayes-nopl") return Method::bayes_nopl;
  if (s == "vanilla") return Method::vanilla;
  if (s == "ensemble-pl") return Method::ensemble_pl;
  throw std::invalid_argument("config key 'method': unknown value '" + s + "'");
}

inline SystemKind parse_system(const std::string& s) {
  if (s == "reaction") return SystemKind::reaction;
  if (s == "diffusion") return SystemKind::diffusion;
  if (s == "reaction-diffusion") return SystemKind::reaction_diffusion;
  if (s == "convection") return SystemKind::convection;
  throw std::invalid_argument("config key 'system': unknown value '" + s + "'");
}

/// A complete, resolved run configuration. Produced by resolve_config();
/// every field is concrete and the echoed form reproduces the run.
struct RunConfig {
  std::string system = "convection";
  Method method = Method::bayes_pl;
  std::uint64_t seed = 0;
  std::string out_dir;
  double rho = 0.0, d = 0.0, beta = 0.0; // resolved lambda (unused ones stay 0)
  int iterations = 0;
  bool early_stop = false;
  DataSizes sizes;
  PosteriorSpec posterior;
  SamplerConfig sampler;
  double delta = 0.05;
  double delta_pde = 0.1;
  double eps_anchor = 1e-3;
  double var_consensus = 2e-4;
  AdamConfig adam;
  int pretrain_epochs = 4000;
  long vanilla_epochs = -1; // <0: pretrain_epochs + iterations * ensemble_epochs
  int ensemble_size = 5;
  int ensemble_epochs = 5000;
  int eval_points = 10000;
  int grid_nx = 256, grid_nt = 100;
  int rd_ref_nx = 512, rd_ref_nt = 2000;
  bool trace = false;
  int checkpoint_every = 1; // 0 disables per-iteration checkpoints

  SystemSpec make_system() const {
    switch (parse_system(system)) {
      case SystemKind::reaction: return SystemSpec::reaction(rho);
      case SystemKind::diffusion: return SystemSpec::diffusion(d);
      case SystemKind::reaction_diffusion: return SystemSpec::reaction_diffusion(rho, d);
      case SystemKind::convection: return SystemSpec::convection(beta);
    }
    throw std::logic_error("make_system: bad system");
  }

  PseudoLabelConfig make_pl_config() const {
    PseudoLabelConfig c;
    c.delta = delta;
    c.delta_pde = delta_pde;
    c.eps_anchor = eps_anchor;
    c.var_consensus = var_consensus;
    c.use_pl_likelihood = method != Method::bayes_nopl;
    c.iterations = iterations;
    c.early_stop = early_stop;
    return c;
  }

  long resolved_vanilla_epochs() const {
    return vanilla_epochs >= 0
               ? vanilla_epochs
               : pretrain_epochs + static_cast<long>(iterations) * ensemble_epochs;
  }
};

using ConfigMap = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment; blank lines ignored.
inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  ConfigMap kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = value;
  }
  return kv;
}

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::string& value);

template <>
inline double parse_value<double>(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': invalid number '" + value + "'");
  }
}

template <>
inline long parse_value<long>(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': invalid integer '" + value + "'");
  }
}

template <>
inline int parse_value<int>(const std::string& key, const std::string& value) {
  const long v = parse_value<long>(key, value);
  if (v < INT_MIN || v > INT_MAX)
    throw std::invalid_argument("config key '" + key + "': out of range");
  return static_cast<int>(v);
}

template <>
inline std::uint64_t parse_value<std::uint64_t>(const std::string& key,
                                                const std::string& value) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': invalid integer '" + value + "'");
  }
}

template <>
inline bool parse_value<bool>(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw std::invalid_argument("config key '" + key + "': expected 0/1/true/false, got '" +
                              value + "'");
}

} // namespace detail

/// Builds the effective configuration: factory defaults, then the desk-scale
/// preset (when requested), then every explicit key. The desk preset shrinks
/// the sampler to N=50, burn-in 50, 64 leapfrog steps, 2 chains and halves
/// the per-system iteration default; explicit keys always win.
inline RunConfig resolve_config(const ConfigMap& kv, bool desk_scale_flag = false) {
  RunConfig c;
  bool desk = desk_scale_flag;
  if (auto it = kv.find("desk_scale"); it != kv.end())
    desk = desk || detail::parse_value<bool>("desk_scale", it->second);

  auto get = [&kv](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };

  static const std::vector<std::string> known = {
      "system", "method", "seed", "out", "rho", "d", "beta", "param", "iterations",
      "early_stop", "desk_scale", "ic_points", "bc_points", "pde_points", "sigma_p",
      "sigma_ic", "sigma_pl", "sigma_bc", "sigma_pde", "n_samples", "n_burnin",
      "n_leapfrog", "n_chains", "target_accept", "init_stepsize", "delta", "delta_pde",
      "eps_anchor", "var_consensus", "lr", "pretrain_epochs", "vanilla_epochs",
      "ensemble_size", "ensemble_epochs", "eval_points", "grid_nx", "grid_nt",
      "rd_ref_nx", "rd_ref_nt", "trace", "checkpoint_every"};
  for (const auto& [key, value] : kv) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw std::invalid_argument("unknown config key '" + key + "'");
  }

  if (auto v = get("system")) c.system = *v;
  const SystemKind kind = parse_system(c.system);
  if (auto v = get("method")) c.method = parse_method(*v);
  if (auto v = get("seed")) c.seed = detail::parse_value<std::uint64_t>("seed", *v);
  if (auto v = get("out")) c.out_dir = *v;

  // Benchmark lambda defaults; 'param' names the system's primary parameter.
  switch (kind) {
    case SystemKind::reaction: c.rho = 5.0; break;
    case SystemKind::diffusion: c.d = 5.0; break;
    case SystemKind::reaction_diffusion: c.rho = 5.0; c.d = 2.0; break;
    case SystemKind::convection: c.beta = 30.0; break;
  }
  if (auto v = get("param")) {
    const double p = detail::parse_value<double>("param", *v);
    switch (kind) {
      case SystemKind::reaction: c.rho = p; break;
      case SystemKind::diffusion:
      case SystemKind::reaction_diffusion: c.d = p; break;
      case SystemKind::convection: c.beta = p; break;
    }
  }
  if (auto v = get("rho")) c.rho = detail::parse_value<double>("rho", *v);
  if (auto v = get("d")) c.d = detail::parse_value<double>("d", *v);
  if (auto v = get("beta")) c.beta = detail::parse_value<double>("beta", *v);

  if (desk) {
    c.sampler.n_samples = 50;
    c.sampler.n_burnin = 50;
    c.sampler.n_leapfrog = 64;
    c.sampler.n_chains = 2;
  }
  const int full_iters = default_iterations(c.make_system());
  c.iterations = desk ? (full_iters + 1) / 2 : full_iters;
  if (auto v = get("iterations")) c.iterations = detail::parse_value<int>("iterations", *v);

  if (auto v = get("early_stop")) c.early_stop = detail::parse_value<bool>("early_stop", *v);
  if (auto v = get("ic_points")) c.sizes.ic = detail::parse_value<int>("ic_points", *v);
  if (auto v = get("bc_points")) c.sizes.bc = detail::parse_value<int>("bc_points", *v);
  if (auto v = get("pde_points")) c.sizes.pde = detail::parse_value<int>("pde_points", *v);
  if (auto v = get("sigma_p")) c.posterior.sigma_p = detail::parse_value<double>("sigma_p", *v);
  if (auto v = get("sigma_ic")) c.posterior.sigma_ic = detail::parse_value<double>("sigma_ic", *v);
  if (auto v = get("sigma_pl")) c.posterior.sigma_pl = detail::parse_value<double>("sigma_pl", *v);
  if (auto v = get("sigma_bc")) c.posterior.sigma_bc = detail::parse_value<double>("sigma_bc", *v);
  if (auto v = get("sigma_pde"))
    c.posterior.sigma_pde = detail::parse_value<double>("sigma_pde", *v);
  if (auto v = get("n_samples")) c.sampler.n_samples = detail::parse_value<int>("n_samples", *v);
  if (auto v = get("n_burnin")) c.sampler.n_burnin = detail::parse_value<int>("n_burnin", *v);
  if (auto v = get("n_leapfrog"))
    c.sampler.n_leapfrog = detail::parse_value<int>("n_leapfrog", *v);
  if (auto v = get("n_chains")) c.sampler.n_chains = detail::parse_value<int>("n_chains", *v);
  if (auto v = get("target_accept"))
    c.sampler.target_accept = detail::parse_value<double>("target_accept", *v);
  if (auto v = get("init_stepsize"))
    c.sampler.init_stepsize = detail::parse_value<double>("init_stepsize", *v);
  if (auto v = get("delta")) c.delta = detail::parse_value<double>("delta", *v);
  if (auto v = get("delta_pde")) c.delta_pde = detail::parse_value<double>("delta_pde", *v);
  if (auto v = get("eps_anchor")) c.eps_anchor = detail::parse_value<double>("eps_anchor", *v);
  if (auto v = get("var_consensus"))
    c.var_consensus = detail::parse_value<double>("var_consensus", *v);
  if (auto v = get("lr")) c.adam.lr = detail::parse_value<double>("lr", *v);
  if (auto v = get("pretrain_epochs"))
    c.pretrain_epochs = detail::parse_value<int>("pretrain_epochs", *v);
  if (auto v = get("vanilla_epochs"))
    c.vanilla_epochs = detail::parse_value<long>("vanilla_epochs", *v);
  if (auto v = get("ensemble_size"))
    c.ensemble_size = detail::parse_value<int>("ensemble_size", *v);
  if (auto v = get("ensemble_epochs"))
    c.ensemble_epochs = detail::parse_value<int>("ensemble_epochs", *v);
  if (auto v = get("eval_points")) c.eval_points = detail::parse_value<int>("eval_points", *v);
  if (auto v = get("grid_nx")) c.grid_nx = detail::parse_value<int>("grid_nx", *v);
  if (auto v = get("grid_nt")) c.grid_nt = detail::parse_value<int>("grid_nt", *v);
  if (auto v = get("rd_ref_nx")) c.rd_ref_nx = detail::parse_value<int>("rd_ref_nx", *v);
  if (auto v = get("rd_ref_nt")) c.rd_ref_nt = detail::parse_value<int>("rd_ref_nt", *v);
  if (auto v = get("trace")) c.trace = detail::parse_value<bool>("trace", *v);
  if (auto v = get("checkpoint_every"))
    c.checkpoint_every = detail::parse_value<int>("checkpoint_every", *v);

  c.posterior.validate();
  c.sampler.validate();
  c.make_pl_config().validate();
  c.make_system(); // validates lambda presence
  return c;
}

/// Writes the resolved configuration. Every value is concrete and
/// desk_scale is recorded as 0, so loading the echo reproduces the run.
inline void write_config(const RunConfig& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_config: cannot open " + path);
  char buf[64];
  auto num = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "system = " << c.system << "\n";
  out << "method = " << method_name(c.method) << "\n";
  out << "seed = " << c.seed << "\n";
  if (!c.out_dir.empty()) out << "out = " << c.out_dir << "\n";
  const SystemKind kind = parse_system(c.system);
  if (kind == SystemKind::reaction || kind == SystemKind::reaction_diffusion)
    out << "rho = " << num(c.rho) << "\n";
  if (kind == SystemKind::diffusion || kind == SystemKind::reaction_diffusion)
    out << "d = " << num(c.d) << "\n";
  if (kind == SystemKind::convection) out << "beta = " << num(c.beta) << "\n";
  out << "iterations = " << c.iterations << "\n";
  out << "early_stop = " << (c.early_stop ? 1 : 0) << "\n";
  out << "desk_scale = 0\n";
  out << "ic_points = " << c.sizes.ic << "\n";
  out << "bc_points = " << c.sizes.bc << "\n";
  out << "pde_points = " << c.sizes.pde << "\n";
  out << "sigma_p = " << num(c.posterior.sigma_p) << "\n";
  out << "sigma_ic = " << num(c.posterior.sigma_ic) << "\n";
  out << "sigma_pl = " << num(c.posterior.sigma_pl) << "\n";
  out << "sigma_bc = " << num(c.posterior.sigma_bc) << "\n";
  out << "sigma_pde = " << num(c.posterior.sigma_pde) << "\n";
  out << "n_samples = " << c.sampler.n_samples << "\n";
  out << "n_burnin = " << c.sampler.n_burnin << "\n";
  out << "n_leapfrog = " << c.sampler.n_leapfrog << "\n";
  out << "n_chains = " << c.sampler.n_chains << "\n";
  out << "target_accept = " << num(c.sampler.target_accept) << "\n";
  out << "init_stepsize = " << num(c.sampler.init_stepsize) << "\n";
  out << "delta = " << num(c.delta) << "\n";
  out << "delta_pde = " << num(c.delta_pde) << "\n";
  out << "eps_anchor = " << num(c.eps_anchor) << "\n";
  out << "var_consensus = " << num(c.var_consensus) << "\n";
  out << "lr = " << num(c.adam.lr) << "\n";
  out << "pretrain_epochs = " << c.pretrain_epochs << "\n";
  out << "vanilla_epochs = " << c.resolved_vanilla_epochs() << "\n";
  out << "ensemble_size = " << c.ensemble_size << "\n";
  out << "ensemble_epochs = " << c.ensemble_epochs << "\n";
  out << "eval_points = " << c.eval_points << "\n";
  out << "grid_nx = " << c.grid_nx << "\n";
  out << "grid_nt = " << c.grid_nt << "\n";
  out << "rd_ref_nx = " << c.rd_ref_nx << "\n";
  out << "rd_ref_nt = " << c.rd_ref_nt << "\n";
  out << "trace = " << (c.trace ? 1 : 0) << "\n";
  out << "checkpoint_every = " << c.checkpoint_every << "\n";
}

} // namespace bpl
