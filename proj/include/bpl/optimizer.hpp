#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "bpl/posterior.hpp"

namespace bpl {

/// Weights of the composite PINN loss. Vanilla training uses all ones; the
/// ensemble baseline uses omega_bc = |D'_bc|/|D_bc| and
/// omega_pde = |D'_pde|/|D_pde|.
struct LossWeights {
  double ic = 1.0;
  double bc = 1.0;
  double pde = 1.0;
};

inline LossWeights ensemble_weights(const ActiveBundle& active) {
  const DataBundle& b = *active.bundle;
  return {1.0,
          b.bc_times.empty() ? 0.0 : static_cast<double>(active.bc_active.size()) / b.bc_times.size(),
          b.pde.empty() ? 0.0 : static_cast<double>(active.pde_active.size()) / b.pde.size()};
}

struct LossBreakdown {
  double total = 0.0;
  double ic = 0.0;  // unweighted MSE over the IC labels
  double bc = 0.0;  // unweighted mean square over active boundary residuals
  double pde = 0.0; // unweighted mean square over active collocation residuals
  double pl = 0.0;  // unweighted MSE over pseudo-labels (ensemble PL mode only)
};

/// Composite loss: weights.ic * MSE(ic) + weights.bc * mean|b|^2 over the
/// active boundary pairs + weights.pde * mean f^2 over the active collocation
/// points; a pseudo-label MSE term (weight 1) is added when `with_pl_term`
/// is set (the ensemble baseline in PL mode). Empty sets contribute zero.
///
/// Shares the collocation batch with the pseudo-label term the same way the
/// posterior evaluator does (pseudo-labeled points are always active).
class LossEvaluator {
public:
  LossEvaluator(const Architecture& arch, const SystemSpec& spec, const ActiveBundle& active,
                bool with_pl_term = false)
      : arch_(arch),
        spec_(spec),
        neumann_(spec.has_neumann_bc()),
        n_ic_(static_cast<Eigen::Index>(active.bundle->ic.size())),
        n_pl_(with_pl_term ? static_cast<Eigen::Index>(active.bundle->pl.size()) : 0),
        n_bc_(static_cast<Eigen::Index>(active.bc_active.size())),
        n_pde_(static_cast<Eigen::Index>(active.pde_active.size())),
        value_(arch, Planes{}, n_ic_ + (neumann_ ? 0 : 2 * n_bc_)),
        bc_(arch, Planes{.dx = true}, neumann_ ? 2 * n_bc_ : 0),
        pde_(arch, needed_planes(spec), n_pde_) {
    const DataBundle& b = *active.bundle;
    std::vector<double> xs, ts;
    ic_labels_.resize(n_ic_);
    for (Eigen::Index i = 0; i < n_ic_; ++i) {
      xs.push_back(b.ic[i].x);
      ts.push_back(b.ic[i].t);
      ic_labels_[i] = b.ic[i].u;
    }
    if (!neumann_)
      for (int j : active.bc_active) {
        xs.push_back(spec.x_min);
        ts.push_back(b.bc_times[j]);
        xs.push_back(spec.x_max);
        ts.push_back(b.bc_times[j]);
      }
    value_.set_inputs(xs, ts);

    if (neumann_) {
      xs.clear();
      ts.clear();
      for (int j : active.bc_active) {
        xs.push_back(spec.x_min);
        ts.push_back(b.bc_times[j]);
        xs.push_back(spec.x_max);
        ts.push_back(b.bc_times[j]);
      }
      bc_.set_inputs(xs, ts);
    }

    xs.clear();
    ts.clear();
    for (int i : active.pde_active) {
      xs.push_back(b.pde[i].x);
      ts.push_back(b.pde[i].t);
    }
    pde_.set_inputs(xs, ts);

    pl_cols_.resize(n_pl_);
    pl_labels_.resize(n_pl_);
    for (Eigen::Index i = 0; i < n_pl_; ++i) {
      const auto it = std::lower_bound(active.pde_active.begin(), active.pde_active.end(),
                                       b.pl_from[i]);
      if (it == active.pde_active.end() || *it != b.pl_from[i])
        throw std::logic_error("LossEvaluator: pseudo-labeled collocation point is not active");
      pl_cols_[i] = static_cast<Eigen::Index>(it - active.pde_active.begin());
      pl_labels_[i] = b.pl[i].u;
    }
  }

  LossBreakdown loss(const ParameterVector& params, const LossWeights& w) {
    return eval_impl(params, w, nullptr);
  }

  /// Loss and gradient of the weighted total; `grad` is overwritten.
  LossBreakdown loss_grad(const ParameterVector& params, const LossWeights& w,
                          Eigen::VectorXd& grad) {
    grad.setZero(params.size());
    return eval_impl(params, w, &grad);
  }

private:
  LossBreakdown eval_impl(const ParameterVector& params, const LossWeights& w,
                          Eigen::VectorXd* grad) {
    LossBreakdown out;
    if (value_.size() > 0) {
      value_.forward(params);
      const auto u = value_.u();
      if (grad) value_.clear_seed();
      auto seed = value_.seed_u();
      const double cic = n_ic_ > 0 ? 2.0 * w.ic / n_ic_ : 0.0;
      for (Eigen::Index i = 0; i < n_ic_; ++i) {
        const double r = u(0, i) - ic_labels_[i];
        out.ic += r * r;
        if (grad) seed(0, i) = cic * r;
      }
      if (n_ic_ > 0) out.ic /= n_ic_;
      if (!neumann_ && n_bc_ > 0) {
        const double cbc = 2.0 * w.bc / n_bc_;
        for (Eigen::Index j = 0; j < n_bc_; ++j) {
          const Eigen::Index c = n_ic_ + 2 * j;
          const double r = u(0, c) - u(0, c + 1);
          out.bc += r * r;
          if (grad) {
            seed(0, c) = cbc * r;
            seed(0, c + 1) = -cbc * r;
          }
        }
        out.bc /= n_bc_;
      }
      if (grad) value_.backward(params, *grad);
    }

    if (bc_.size() > 0) {
      bc_.forward(params);
      if (grad) bc_.clear_seed();
      const double c = 2.0 * w.bc / n_bc_;
      const auto u = bc_.u();
      const auto ux = bc_.ux();
      for (Eigen::Index j = 0; j < n_bc_; ++j) {
        const double r = u(0, 2 * j) - u(0, 2 * j + 1);
        const double rx = ux(0, 2 * j) - ux(0, 2 * j + 1);
        out.bc += r * r + rx * rx;
        if (grad) {
          bc_.seed_u()(0, 2 * j) = c * r;
          bc_.seed_u()(0, 2 * j + 1) = -c * r;
          bc_.seed_ux()(0, 2 * j) = c * rx;
          bc_.seed_ux()(0, 2 * j + 1) = -c * rx;
        }
      }
      out.bc /= n_bc_;
      if (grad) bc_.backward(params, *grad);
    }

    if (pde_.size() > 0) {
      pde_.forward(params);
      if (grad) pde_.clear_seed();
      const Planes pl = pde_.planes();
      const double c = 2.0 * w.pde / n_pde_;
      const auto u = pde_.u();
      const auto ut = pde_.ut();
      for (Eigen::Index i = 0; i < n_pde_; ++i) {
        SolutionDerivs<Dual4> s{Dual4::seeded(u(0, i), 0), Dual4::seeded(ut(0, i), 1),
                                Dual4::seeded(pl.dx ? pde_.ux()(0, i) : 0.0, 2),
                                Dual4::seeded(pl.dxx ? pde_.uxx()(0, i) : 0.0, 3)};
        const Dual4 f = residual(spec_, s);
        out.pde += f.v * f.v;
        if (grad) {
          const double cf = c * f.v;
          pde_.seed_u()(0, i) = cf * f.g[0];
          pde_.seed_ut()(0, i) = cf * f.g[1];
          if (pl.dx) pde_.seed_ux()(0, i) = cf * f.g[2];
          if (pl.dxx) pde_.seed_uxx()(0, i) = cf * f.g[3];
        }
      }
      out.pde /= n_pde_;
      if (n_pl_ > 0) {
        const double cpl = 2.0 / n_pl_;
        for (Eigen::Index i = 0; i < n_pl_; ++i) {
          const double r = u(0, pl_cols_[i]) - pl_labels_[i];
          out.pl += r * r;
          if (grad) pde_.seed_u()(0, pl_cols_[i]) += cpl * r;
        }
        out.pl /= n_pl_;
      }
      if (grad) pde_.backward(params, *grad);
    }

    out.total = w.ic * out.ic + w.bc * out.bc + w.pde * out.pde + out.pl;
    return out;
  }

  Architecture arch_;
  SystemSpec spec_;
  bool neumann_;
  Eigen::Index n_ic_, n_pl_, n_bc_, n_pde_;
  Batch value_, bc_, pde_;
  std::vector<double> ic_labels_;
  std::vector<Eigen::Index> pl_cols_;
  std::vector<double> pl_labels_;
};

/// Weighted PINN loss of Adam training (no pseudo-label term).
inline double pinn_loss(const Architecture& arch, const ParameterVector& params,
                        const SystemSpec& spec, const ActiveBundle& active,
                        const LossWeights& w) {
  LossEvaluator ev(arch, spec, active, false);
  return ev.loss(params, w).total;
}

// --- Adam ---

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  long step = 0;
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  explicit AdamState(Eigen::Index n, const AdamConfig& c = {})
      : cfg(c), m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam update, in place.
inline void adam_step(AdamState& st, ParameterVector& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size() || st.m.size() != params.size())
    throw std::invalid_argument("adam_step: size mismatch");
  if (!grad.allFinite())
    throw std::runtime_error("adam_step: non-finite gradient (diverged); aborting");
  ++st.step;
  st.m = st.cfg.beta1 * st.m + (1.0 - st.cfg.beta1) * grad;
  st.v = st.cfg.beta2 * st.v + (1.0 - st.cfg.beta2) * grad.array().square().matrix();
  const double mc = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step));
  const double vc = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step));
  params.array() -=
      st.cfg.lr * (st.m.array() / mc) / ((st.v.array() / vc).sqrt() + st.cfg.eps);
}

/// Full-batch Adam minimization of the PINN loss from a fresh Glorot
/// initialization. Active subsets are fixed for the whole run. `on_epoch`
/// (optional) observes the per-epoch loss breakdown, e.g. for CSV export.
inline ParameterVector pretrain(const Architecture& arch, const SystemSpec& spec,
                                const ActiveBundle& active, int epochs, std::uint64_t init_seed,
                                const AdamConfig& adam = {}, const LossWeights& w = {},
                                const std::function<void(int, const LossBreakdown&)>& on_epoch = {}) {
  if (epochs < 0) throw std::invalid_argument("pretrain: epochs must be >= 0");
  ParameterVector theta = init_parameters(arch, init_seed);
  if (epochs == 0) return theta;
  LossEvaluator ev(arch, spec, active, false);
  AdamState st(theta.size(), adam);
  Eigen::VectorXd grad(theta.size());
  for (int e = 0; e < epochs; ++e) {
    const LossBreakdown lb = ev.loss_grad(theta, w, grad);
    if (!std::isfinite(lb.total))
      throw std::runtime_error("pretrain: loss diverged to non-finite at epoch " +
                               std::to_string(e));
    adam_step(st, theta, grad);
    if (on_epoch) on_epoch(e, lb);
  }
  return theta;
}

} // namespace bpl
