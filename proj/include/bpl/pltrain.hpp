#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpl/optimizer.hpp"
#include "bpl/posterior.hpp"
#include "bpl/sampler.hpp"

namespace bpl {

/// Gating thresholds and loop settings of the domain-expansion training.
/// Distances are in normalized coordinates. PL mode feeds pseudo-labels into
/// the posterior; No-PL keeps them as anchors only.
struct PseudoLabelConfig {
  double delta = 0.05;          // max distance to the anchor
  double delta_pde = 0.1;       // activation radius for collocation/boundary points
  double eps_anchor = 1e-3;     // max |anchor label - ensemble mean at anchor|
  double var_consensus = 2e-4;  // max ensemble variance at the candidate
  bool use_pl_likelihood = true; // PL vs No-PL
  int iterations = 60;
  bool early_stop = false;      // stop once every collocation point is labeled

  void validate() const {
    if (delta <= 0 || delta_pde <= 0 || eps_anchor <= 0 || var_consensus <= 0)
      throw std::invalid_argument("PseudoLabelConfig: thresholds must be > 0");
    if (delta > delta_pde)
      throw std::invalid_argument("PseudoLabelConfig: delta must not exceed delta_pde");
    if (iterations < 0) throw std::invalid_argument("PseudoLabelConfig: iterations must be >= 0");
  }
};

/// Iteration budgets used for the benchmark parameterizations.
inline int default_iterations(const SystemSpec& spec) {
  switch (spec.kind) {
    case SystemKind::reaction:
    case SystemKind::reaction_diffusion: return 60;
    case SystemKind::diffusion: return spec.d.value() <= 5.0 ? 80 : 100;
    case SystemKind::convection: return spec.beta.value() <= 30.0 ? 100 : 150;
  }
  return 60;
}

/// Per-point statistics of the prediction ensemble {u_theta_l(x,t)}.
/// Variance is the population variance; the median of an even count is the
/// midpoint of the two central order statistics.
struct EnsembleStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd median;
  Eigen::VectorXd variance;
};

inline EnsembleStats ensemble_stats(const Architecture& arch,
                                    const std::vector<ParameterVector>& samples,
                                    const std::vector<Point>& points) {
  if (samples.empty()) throw std::invalid_argument("ensemble_stats: no samples");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index m = static_cast<Eigen::Index>(samples.size());
  EnsembleStats st{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  if (n == 0) return st;

  Batch batch(arch, Planes{}, n);
  std::vector<double> xs(n), ts(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    xs[i] = points[i].x;
    ts[i] = points[i].t;
  }
  batch.set_inputs(xs, ts);

  Eigen::MatrixXd preds(m, n);
  for (Eigen::Index l = 0; l < m; ++l) {
    batch.forward(samples[l]);
    preds.row(l) = batch.u();
  }

  std::vector<double> col(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = preds.col(i).mean();
    st.mean[i] = mean;
    st.variance[i] = (preds.col(i).array() - mean).square().sum() / m;
    for (Eigen::Index l = 0; l < m; ++l) col[l] = preds(l, i);
    std::nth_element(col.begin(), col.begin() + (m - 1) / 2, col.end());
    double med = col[(m - 1) / 2];
    if (m % 2 == 0) {
      std::nth_element(col.begin(), col.begin() + m / 2, col.end());
      med = 0.5 * (med + col[m / 2]);
    }
    st.median[i] = med;
  }
  return st;
}

struct GateDecision {
  bool accept = false;
  double label = 0.0;        // ensemble median at the candidate
  int anchor_index = -1;     // into the labeled set
  double distance = 0.0;     // candidate-anchor distance, normalized
  double anchor_error = 0.0; // |anchor label - ensemble mean at anchor|
  double variance = 0.0;     // ensemble variance at the candidate
};

/// Three-condition gate for one candidate collocation point. All three
/// comparisons are strict, so equality at a threshold rejects. The label of
/// an accepted point is the ensemble median at the candidate; the anchor
/// check uses the ensemble mean at the anchor.
inline GateDecision gate(Point candidate, double cand_variance, double cand_median,
                         const std::vector<LabeledPoint>& labeled,
                         const Eigen::VectorXd& labeled_mean, const PseudoLabelConfig& cfg,
                         const SystemSpec& spec) {
  if (labeled.size() != static_cast<std::size_t>(labeled_mean.size()))
    throw std::invalid_argument("gate: labeled set and prediction means disagree in size");
  GateDecision d;
  const Nearest near = nearest_labeled(candidate, labeled, spec);
  d.anchor_index = near.index;
  d.distance = near.distance;
  d.anchor_error = std::abs(labeled[near.index].u - labeled_mean[near.index]);
  d.variance = cand_variance;
  d.label = cand_median;
  d.accept = near.distance < cfg.delta && d.anchor_error < cfg.eps_anchor &&
             cand_variance < cfg.var_consensus;
  return d;
}

struct TrainHistoryRow {
  int iteration = 0;
  int pl_size = 0;
  int active_pde = 0;
  int active_bc = 0;
  int accepted = 0;       // pseudo-labels created this iteration
  double acceptance = 0.0; // sampler acceptance (bayes) / unused for ensemble
  double stepsize = 0.0;
  double rel_l2 = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<TrainHistoryRow> rows;

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("TrainHistory: cannot open " + path);
    out << "iteration,pl_size,active_pde,active_bc,accepted,acceptance_rate,step_size,rel_l2\n";
    char buf[192];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d,%.6g,%.6g,%.10g\n", r.iteration, r.pl_size,
                    r.active_pde, r.active_bc, r.accepted, r.acceptance, r.stepsize, r.rel_l2);
      out << buf;
    }
  }
};

/// Hooks the runner uses for metrics and artifacts; all optional.
struct TrainHooks {
  // rel-L2 of the current prediction ensemble (or single member).
  std::function<double(const std::vector<ParameterVector>&)> rel_l2 = {};
  std::function<void(int iteration, const ParameterVector& theta)> checkpoint = {};
  std::function<void(int iteration, const SampleRun&)> sampler_diag = {};
  std::function<void(const char* phase, double seconds)> timing = {};
};

namespace detail {

class PhaseTimer {
public:
  PhaseTimer(const TrainHooks& hooks, const char* phase) : hooks_(hooks), phase_(phase) {}
  ~PhaseTimer() {
    if (hooks_.timing) {
      const auto dt = std::chrono::steady_clock::now() - start_;
      hooks_.timing(phase_, std::chrono::duration<double>(dt).count());
    }
  }

private:
  const TrainHooks& hooks_;
  const char* phase_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace detail

/// Gating pass of one iteration: evaluates ensemble statistics over the
/// unlabeled active candidates and the labeled set, applies the gate against
/// the iteration-start labeled snapshot, and appends accepted pseudo-labels
/// in collocation-index order. Gating depends only on geometry and ensemble
/// statistics, never on the PL/No-PL mode. Returns the number accepted.
inline int gating_pass(const Architecture& arch, const SystemSpec& spec,
                       const PseudoLabelConfig& cfg, const std::vector<ParameterVector>& samples,
                       DataBundle& bundle, const std::vector<int>& pde_active) {
  std::vector<char> already(bundle.pde.size(), 0);
  for (int i : bundle.pl_from) already[i] = 1;
  std::vector<int> candidates;
  for (int i : pde_active)
    if (!already[i]) candidates.push_back(i);
  if (candidates.empty()) return 0;

  const std::vector<LabeledPoint> labeled = labeled_union(bundle);
  std::vector<Point> eval_pts;
  eval_pts.reserve(candidates.size() + labeled.size());
  for (int i : candidates) eval_pts.push_back(bundle.pde[i]);
  for (const auto& p : labeled) eval_pts.push_back({p.x, p.t});

  const EnsembleStats st = ensemble_stats(arch, samples, eval_pts);
  const Eigen::VectorXd labeled_mean =
      st.mean.tail(static_cast<Eigen::Index>(labeled.size()));

  int accepted = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const int idx = candidates[c];
    const GateDecision d = gate(bundle.pde[idx], st.variance[c], st.median[c], labeled,
                                labeled_mean, cfg, spec);
    if (d.accept) {
      bundle.pl.push_back({bundle.pde[idx].x, bundle.pde[idx].t, d.label});
      bundle.pl_from.push_back(idx);
      ++accepted;
    }
  }
  return accepted;
}

/// State carried across training iterations.
struct TrainState {
  DataBundle bundle;
  ParameterVector theta_init;
  bool pretrained = false;
  // Adapted step size of the previous iteration; warm-starts the next
  // iteration's burn-in so it refines the scale instead of re-finding it.
  double stepsize = 0.0;
};

struct IterationResult {
  std::vector<ParameterVector> samples;
  TrainHistoryRow row;
};

/// One outer-loop iteration: recompute the active subsets, pretrain on the
/// first call, sample the posterior, gate every unlabeled active collocation
/// point against the iteration-start labeled set, and warm-start the next
/// iteration from the last sample.
inline IterationResult train_iteration(TrainState& state, const Architecture& arch,
                                       const SystemSpec& spec, const PosteriorSpec& ps,
                                       const SamplerConfig& sampler_cfg,
                                       const PseudoLabelConfig& pl_cfg, int iteration,
                                       std::uint64_t master_seed, int pretrain_epochs,
                                       const AdamConfig& adam = {},
                                       const TrainHooks& hooks = {}) {
  pl_cfg.validate();
  IterationResult out;
  out.row.iteration = iteration;

  const ActiveBundle active = make_active(state.bundle, pl_cfg.delta_pde, spec);
  out.row.active_pde = static_cast<int>(active.pde_active.size());
  out.row.active_bc = static_cast<int>(active.bc_active.size());

  if (!state.pretrained) {
    detail::PhaseTimer timer(hooks, "pretrain");
    state.theta_init = pretrain(arch, spec, active, pretrain_epochs,
                                mix_seed(master_seed, seed_stream::init), adam);
    state.pretrained = true;
  }

  SampleRun run;
  {
    detail::PhaseTimer timer(hooks, "sampling");
    SamplerConfig cfg = sampler_cfg;
    if (state.stepsize > 0.0) cfg.init_stepsize = state.stepsize;
    auto oracle = [&] {
      return [ev = std::make_shared<PosteriorEvaluator>(arch, spec, ps, active,
                                                        pl_cfg.use_pl_likelihood)](
                 const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
        return ev->logp_grad(theta, grad);
      };
    };
    std::vector<std::uint64_t> seeds;
    for (int c = 0; c < sampler_cfg.n_chains; ++c)
      seeds.push_back(mix_seed(master_seed, seed_stream::chain_base +
                                                static_cast<std::uint64_t>(iteration) *
                                                    sampler_cfg.n_chains +
                                                c));
    try {
      run = sample_posterior(oracle, state.theta_init, cfg, seeds);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("iteration " + std::to_string(iteration) + ": " + e.what());
    }
  }
  out.row.acceptance = run.mean_acceptance();
  out.row.stepsize = run.mean_stepsize();
  if (hooks.sampler_diag) hooks.sampler_diag(iteration, run);

  {
    detail::PhaseTimer timer(hooks, "gating");
    out.row.accepted =
        gating_pass(arch, spec, pl_cfg, run.samples, state.bundle, active.pde_active);
  }
  out.row.pl_size = static_cast<int>(state.bundle.pl.size());

  state.theta_init = run.theta_last;
  state.stepsize = run.mean_stepsize();
  out.samples = std::move(run.samples);
  return out;
}

struct BayesTrainResult {
  std::vector<ParameterVector> samples; // retained samples of the final iteration
  DataBundle bundle;
  TrainHistory history;
  ParameterVector theta_last;
};

/// The full outer loop. Runs pl_cfg.iterations iterations (early-stopping
/// once every collocation point carries a pseudo-label, if enabled) and
/// returns the final posterior sample ensemble.
inline BayesTrainResult train(const Architecture& arch, const SystemSpec& spec,
                              const PosteriorSpec& ps, const SamplerConfig& sampler_cfg,
                              const PseudoLabelConfig& pl_cfg, DataBundle bundle,
                              std::uint64_t master_seed, int pretrain_epochs = 4000,
                              const AdamConfig& adam = {}, const TrainHooks& hooks = {}) {
  pl_cfg.validate();
  sampler_cfg.validate();
  BayesTrainResult result;
  TrainState state{std::move(bundle), ParameterVector(), false};

  for (int it = 0; it < pl_cfg.iterations; ++it) {
    IterationResult ir = train_iteration(state, arch, spec, ps, sampler_cfg, pl_cfg, it,
                                         master_seed, pretrain_epochs, adam, hooks);
    if (hooks.rel_l2) {
      detail::PhaseTimer timer(hooks, "eval");
      ir.row.rel_l2 = hooks.rel_l2(ir.samples);
    }
    if (hooks.checkpoint) hooks.checkpoint(it, state.theta_init);
    result.history.rows.push_back(ir.row);
    result.samples = std::move(ir.samples);
    if (pl_cfg.early_stop && state.bundle.pl.size() == state.bundle.pde.size()) break;
  }

  result.bundle = std::move(state.bundle);
  result.theta_last = std::move(state.theta_init);
  return result;
}

/// Vanilla PINN: Adam on the uniformly weighted loss over the full
/// (unfiltered) datasets for a fixed epoch budget.
inline ParameterVector baseline_vanilla(const Architecture& arch, const SystemSpec& spec,
                                        const DataBundle& bundle, long epochs,
                                        std::uint64_t master_seed, const AdamConfig& adam = {},
                                        const std::function<void(int, const LossBreakdown&)>&
                                            on_epoch = {},
                                        const TrainHooks& hooks = {}) {
  ActiveBundle all{&bundle, {}, {}};
  for (std::size_t j = 0; j < bundle.bc_times.size(); ++j)
    all.bc_active.push_back(static_cast<int>(j));
  for (std::size_t i = 0; i < bundle.pde.size(); ++i)
    all.pde_active.push_back(static_cast<int>(i));
  detail::PhaseTimer timer(hooks, "vanilla");
  return pretrain(arch, spec, all, static_cast<int>(epochs),
                  mix_seed(master_seed, seed_stream::init), adam, LossWeights{}, on_epoch);
}

struct EnsembleTrainResult {
  std::vector<ParameterVector> members;
  DataBundle bundle;
  TrainHistory history;
};

/// Ensemble pseudo-label baseline: n_members independently initialized
/// networks, each trained epochs_per_iteration Adam epochs per iteration on
/// the active subsets with ensemble loss weights; pseudo-labels join the
/// labeled loss (PL mode) and gating follows the same three conditions with
/// ensemble statistics.
inline EnsembleTrainResult baseline_ensemble_pl(const Architecture& arch, const SystemSpec& spec,
                                                const PseudoLabelConfig& pl_cfg, DataBundle bundle,
                                                int n_members, int epochs_per_iteration,
                                                std::uint64_t master_seed,
                                                const AdamConfig& adam = {},
                                                const TrainHooks& hooks = {}) {
  pl_cfg.validate();
  if (n_members < 2) throw std::invalid_argument("baseline_ensemble_pl: need at least 2 members");
  EnsembleTrainResult result;
  result.bundle = std::move(bundle);

  std::vector<ParameterVector> members;
  std::vector<AdamState> states;
  for (int m = 0; m < n_members; ++m) {
    members.push_back(
        init_parameters(arch, mix_seed(master_seed, seed_stream::member_base + m)));
    states.emplace_back(arch.param_count(), adam);
  }

  Eigen::VectorXd grad(arch.param_count());
  for (int it = 0; it < pl_cfg.iterations; ++it) {
    TrainHistoryRow row;
    row.iteration = it;
    const ActiveBundle active = make_active(result.bundle, pl_cfg.delta_pde, spec);
    row.active_pde = static_cast<int>(active.pde_active.size());
    row.active_bc = static_cast<int>(active.bc_active.size());
    const LossWeights w = ensemble_weights(active);
    {
      detail::PhaseTimer timer(hooks, "ensemble-train");
      LossEvaluator ev(arch, spec, active, pl_cfg.use_pl_likelihood);
      for (int m = 0; m < n_members; ++m) {
        for (int e = 0; e < epochs_per_iteration; ++e) {
          const LossBreakdown lb = ev.loss_grad(members[m], w, grad);
          if (!std::isfinite(lb.total))
            throw std::runtime_error("baseline_ensemble_pl: member " + std::to_string(m) +
                                     " diverged at iteration " + std::to_string(it));
          adam_step(states[m], members[m], grad);
        }
      }
    }
    {
      detail::PhaseTimer timer(hooks, "gating");
      row.accepted = gating_pass(arch, spec, pl_cfg, members, result.bundle,
                                         active.pde_active);
    }
    row.pl_size = static_cast<int>(result.bundle.pl.size());
    if (hooks.rel_l2) {
      detail::PhaseTimer timer(hooks, "eval");
      row.rel_l2 = hooks.rel_l2(members);
    }
    if (hooks.checkpoint) hooks.checkpoint(it, members[0]);
    result.history.rows.push_back(row);
    if (pl_cfg.early_stop && result.bundle.pl.size() == result.bundle.pde.size()) break;
  }
  result.members = std::move(members);
  return result;
}

} // namespace bpl
