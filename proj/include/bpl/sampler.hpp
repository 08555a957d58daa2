#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <exception>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bpl/rng.hpp"

namespace bpl {

struct SamplerConfig {
  int n_samples = 100;
  int n_burnin = 100;
  int n_leapfrog = 128;
  int n_chains = 2;
  double target_accept = 0.6;
  double init_stepsize = 0.001;
  int threads = 0; // chain-level parallelism; 0 picks min(n_chains, hardware)

  void validate() const {
    if (n_samples < 1 || n_leapfrog < 1 || n_chains < 1 || n_burnin < 0)
      throw std::invalid_argument("SamplerConfig: counts must be positive");
    if (target_accept <= 0.0 || target_accept >= 1.0)
      throw std::invalid_argument("SamplerConfig: target acceptance must be in (0,1)");
    if (init_stepsize <= 0.0)
      throw std::invalid_argument("SamplerConfig: initial step size must be > 0");
    if (threads < 0) throw std::invalid_argument("SamplerConfig: threads must be >= 0");
  }
};

struct ChainResult {
  std::vector<Eigen::VectorXd> samples; // burn-in excluded, length n_samples
  double acceptance_rate = 0.0;         // over the retained phase
  double final_stepsize = 0.0;
  Eigen::VectorXd last_sample;
  std::vector<double> logp_trace;       // log posterior of each retained sample
};

/// Dual-averaging step-size controller (Nesterov-style primal averaging as
/// commonly used with HMC): drives the mean Metropolis acceptance toward the
/// target. Adaptation runs during burn-in only; adapted() is the frozen
/// step size afterwards.
class DualAveraging {
public:
  DualAveraging(double init_stepsize, double target)
      : target_(target), mu_(std::log(10.0 * init_stepsize)),
        log_eps_(std::log(init_stepsize)), log_eps_bar_(std::log(init_stepsize)) {}

  /// Records one acceptance statistic (the Metropolis probability);
  /// returns the step size for the next burn-in transition.
  double observe(double alpha) {
    ++m_;
    const double frac = 1.0 / (m_ + t0_);
    hbar_ = (1.0 - frac) * hbar_ + frac * (target_ - alpha);
    log_eps_ = mu_ - std::sqrt(static_cast<double>(m_)) / gamma_ * hbar_;
    const double eta = std::pow(static_cast<double>(m_), -kappa_);
    log_eps_bar_ = eta * log_eps_ + (1.0 - eta) * log_eps_bar_;
    return std::exp(log_eps_);
  }

  /// Averaged step size to freeze after burn-in.
  double adapted() const { return std::exp(log_eps_bar_); }

private:
  double target_;
  double mu_;
  double log_eps_;
  double log_eps_bar_;
  double hbar_ = 0.0;
  long m_ = 0;
  static constexpr double gamma_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

/// L leapfrog steps under H(theta, r) = -logp(theta) + |r|^2/2.
///
/// `oracle(theta, grad)` must return logp and fill grad with d logp/d theta.
/// On return theta/r hold the trajectory end, logp/grad the oracle outputs
/// there. Returns false if the trajectory left the finite domain (treated as
/// a rejection by the caller).
template <class Oracle>
bool leapfrog(Oracle&& oracle, Eigen::VectorXd& theta, Eigen::VectorXd& r, double stepsize, int L,
              double& logp, Eigen::VectorXd& grad) {
  if (L < 1) throw std::invalid_argument("leapfrog: L must be >= 1");
  if (stepsize <= 0.0) throw std::invalid_argument("leapfrog: stepsize must be > 0");
  r += 0.5 * stepsize * grad;
  for (int i = 0; i < L; ++i) {
    theta += stepsize * r;
    if (!theta.allFinite()) return false;
    logp = oracle(theta, grad);
    if (!std::isfinite(logp) || !grad.allFinite()) return false;
    r += (i + 1 < L ? stepsize : 0.5 * stepsize) * grad;
    if (!r.allFinite()) return false;
  }
  return true;
}

/// One HMC chain: standard-normal momentum refresh, leapfrog proposal,
/// Metropolis correction with min(1, exp(-dH)). Step size adapts by dual
/// averaging during the n_burnin discarded transitions and is frozen for the
/// n_samples retained ones. Rejected transitions repeat the previous state;
/// divergent trajectories count as rejections.
template <class Oracle>
ChainResult hmc_chain(Oracle&& oracle, const Eigen::VectorXd& theta_init,
                      const SamplerConfig& cfg, std::uint64_t chain_seed) {
  cfg.validate();
  const Eigen::Index dim = theta_init.size();
  Rng rng(chain_seed);

  Eigen::VectorXd theta = theta_init;
  Eigen::VectorXd grad(dim), r(dim), theta_prop(dim), grad_prop(dim);
  double logp = oracle(theta, grad);
  if (!std::isfinite(logp))
    throw std::invalid_argument("hmc_chain: non-finite log posterior at the initial state");

  DualAveraging adapt(cfg.init_stepsize, cfg.target_accept);
  double stepsize = cfg.init_stepsize;

  ChainResult result;
  result.samples.reserve(cfg.n_samples);
  long burnin_accepts = 0, retained_accepts = 0;

  const int total = cfg.n_burnin + cfg.n_samples;
  for (int k = 0; k < total; ++k) {
    for (Eigen::Index i = 0; i < dim; ++i) r[i] = rng.normal();
    const double h0 = -logp + 0.5 * r.squaredNorm();

    theta_prop = theta;
    grad_prop = grad;
    double logp_prop = logp;
    const bool finite =
        leapfrog(oracle, theta_prop, r, stepsize, cfg.n_leapfrog, logp_prop, grad_prop);

    double alpha = 0.0;
    if (finite) {
      const double h1 = -logp_prop + 0.5 * r.squaredNorm();
      alpha = std::isfinite(h1) ? std::min(1.0, std::exp(h0 - h1)) : 0.0;
    }
    const bool accept = rng.u01() < alpha;
    if (accept) {
      theta.swap(theta_prop);
      grad.swap(grad_prop);
      logp = logp_prop;
    }

    if (k < cfg.n_burnin) {
      burnin_accepts += accept;
      stepsize = adapt.observe(alpha);
      if (k + 1 == cfg.n_burnin) {
        stepsize = adapt.adapted();
        if (burnin_accepts == 0)
          throw std::runtime_error(
              "hmc_chain: no proposal accepted during burn-in (step size pathology; "
              "final step size " +
              std::to_string(stepsize) + ")");
      }
    } else {
      retained_accepts += accept;
      result.samples.push_back(theta);
      result.logp_trace.push_back(logp);
    }
  }

  result.acceptance_rate = static_cast<double>(retained_accepts) / cfg.n_samples;
  result.final_stepsize = stepsize;
  result.last_sample = theta;
  return result;
}

struct SampleRun {
  std::vector<Eigen::VectorXd> samples; // n_chains * n_samples, chain-major
  Eigen::VectorXd theta_last;           // last sample of the last chain
  std::vector<ChainResult> chains;

  double mean_acceptance() const {
    double a = 0.0;
    for (const auto& c : chains) a += c.acceptance_rate;
    return chains.empty() ? 0.0 : a / chains.size();
  }
  double mean_stepsize() const {
    double s = 0.0;
    for (const auto& c : chains) s += c.final_stepsize;
    return chains.empty() ? 0.0 : s / chains.size();
  }
};

/// Runs n_chains chains from the same initial point with distinct seeds and
/// concatenates the retained samples in chain order. `factory()` must
/// produce an independent oracle per chain (each chain owns its evaluator
/// workspace), which lets chains execute on separate threads; results are
/// identical either way.
template <class OracleFactory>
SampleRun sample_posterior(OracleFactory&& factory, const Eigen::VectorXd& theta_init,
                           const SamplerConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  cfg.validate();
  if (static_cast<int>(seeds.size()) != cfg.n_chains)
    throw std::invalid_argument("sample_posterior: one seed per chain required");
  std::vector<ChainResult> chains(cfg.n_chains);

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int want = cfg.threads == 0 ? static_cast<int>(hw) : cfg.threads;
  if (want > 1 && cfg.n_chains > 1) {
    std::vector<std::exception_ptr> errors(cfg.n_chains);
    std::vector<std::thread> workers;
    for (int c = 0; c < cfg.n_chains; ++c)
      workers.emplace_back([&, c] {
        try {
          auto oracle = factory();
          chains[c] = hmc_chain(oracle, theta_init, cfg, seeds[c]);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (int c = 0; c < cfg.n_chains; ++c) {
      auto oracle = factory();
      chains[c] = hmc_chain(oracle, theta_init, cfg, seeds[c]);
    }
  }

  SampleRun run;
  run.samples.reserve(static_cast<std::size_t>(cfg.n_chains) * cfg.n_samples);
  for (auto& chain : chains) {
    for (auto& s : chain.samples) run.samples.push_back(std::move(s));
    chain.samples.clear();
    run.chains.push_back(std::move(chain));
  }
  run.theta_last = run.chains.back().last_sample;
  return run;
}

} // namespace bpl
