#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "bpl/batch.hpp"
#include "bpl/data.hpp"
#include "bpl/systems.hpp"

namespace bpl {

/// Prior and likelihood standard deviations of the unnormalized posterior.
struct PosteriorSpec {
  double sigma_p = 5.0;
  double sigma_ic = 0.001;
  double sigma_pl = 0.005;
  double sigma_bc = 0.001;
  double sigma_pde = 0.01;

  void validate() const {
    if (sigma_p <= 0 || sigma_ic <= 0 || sigma_pl <= 0 || sigma_bc <= 0 || sigma_pde <= 0)
      throw std::invalid_argument("PosteriorSpec: all standard deviations must be > 0");
  }
};

/// A bundle plus the active subsets for the current iteration. bc_active and
/// pde_active index into bundle.bc_times and bundle.pde.
struct ActiveBundle {
  const DataBundle* bundle = nullptr;
  std::vector<int> bc_active;
  std::vector<int> pde_active;
};

inline ActiveBundle make_active(const DataBundle& b, double delta_pde, const SystemSpec& spec) {
  const std::vector<LabeledPoint> labeled = labeled_union(b);
  return {&b, active_bc_subset(b.bc_times, labeled, delta_pde, spec),
          active_subset(b.pde, labeled, delta_pde, spec)};
}

namespace detail {
inline double gauss_log_norm(double sigma) {
  return -0.5 * std::log(2.0 * M_PI * sigma * sigma);
}
} // namespace detail

inline double log_prior(const ParameterVector& params, double sigma_p) {
  if (sigma_p <= 0) throw std::invalid_argument("log_prior: sigma must be > 0");
  return params.size() * detail::gauss_log_norm(sigma_p) -
         params.squaredNorm() / (2.0 * sigma_p * sigma_p);
}

inline double log_likelihood_labeled(const Architecture& arch, const ParameterVector& params,
                                     const std::vector<LabeledPoint>& points, double sigma) {
  if (sigma <= 0) throw std::invalid_argument("log_likelihood_labeled: sigma must be > 0");
  double lp = 0.0;
  for (const auto& p : points) {
    const double r = forward(arch, params, p.x, p.t) - p.u;
    lp += detail::gauss_log_norm(sigma) - r * r / (2.0 * sigma * sigma);
  }
  return lp;
}

/// Unlabeled likelihood over collocation points: residuals in place of data
/// errors.
inline double log_likelihood_residual(const Architecture& arch, const ParameterVector& params,
                                      const SystemSpec& spec, const std::vector<Point>& points,
                                      double sigma) {
  if (sigma <= 0) throw std::invalid_argument("log_likelihood_residual: sigma must be > 0");
  double lp = 0.0;
  for (const auto& p : points) {
    const double f = residual(spec, forward_jet(arch, params, p.x, p.t));
    lp += detail::gauss_log_norm(sigma) - f * f / (2.0 * sigma * sigma);
  }
  return lp;
}

/// Unlabeled likelihood over boundary times: every boundary-residual
/// component contributes one Gaussian factor.
inline double log_likelihood_boundary(const Architecture& arch, const ParameterVector& params,
                                      const SystemSpec& spec, const std::vector<double>& times,
                                      double sigma) {
  if (sigma <= 0) throw std::invalid_argument("log_likelihood_boundary: sigma must be > 0");
  double lp = 0.0;
  for (double t : times)
    for (double r : boundary_residuals(spec, arch, params, t))
      lp += detail::gauss_log_norm(sigma) - r * r / (2.0 * sigma * sigma);
  return lp;
}

/// Batched evaluator of the unnormalized log posterior and its parameter
/// gradient. Construction snapshots the active point sets; eval() is then
/// called once per leapfrog step, so it allocates nothing.
///
/// Batch layout: the value batch holds the IC points and, for systems
/// without Neumann conditions, the boundary pairs; systems with Neumann
/// conditions get a dedicated {value,dx} boundary batch. Pseudo-labels are
/// read off the collocation batch's value plane: a pseudo-labeled point is
/// at distance zero from a labeled point, hence always active.
///
/// In No-PL mode (include_pl = false) the pseudo-label likelihood term is
/// omitted; pseudo-labels still shape the active subsets.
class PosteriorEvaluator {
public:
  PosteriorEvaluator(const Architecture& arch, const SystemSpec& spec, const PosteriorSpec& ps,
                     const ActiveBundle& active, bool include_pl)
      : arch_(arch),
        spec_(spec),
        ps_(ps),
        neumann_(spec.has_neumann_bc()),
        n_ic_(static_cast<Eigen::Index>(active.bundle->ic.size())),
        n_pl_(include_pl ? static_cast<Eigen::Index>(active.bundle->pl.size()) : 0),
        n_bc_(static_cast<Eigen::Index>(active.bc_active.size())),
        n_pde_(static_cast<Eigen::Index>(active.pde_active.size())),
        value_(arch, Planes{}, n_ic_ + (neumann_ ? 0 : 2 * n_bc_)),
        bc_(arch, Planes{.dx = true}, neumann_ ? 2 * n_bc_ : 0),
        pde_(arch, needed_planes(spec), n_pde_) {
    ps_.validate();
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

    // Pseudo-labels alias columns of the collocation batch.
    pl_cols_.resize(n_pl_);
    pl_labels_.resize(n_pl_);
    for (Eigen::Index i = 0; i < n_pl_; ++i) {
      const auto it = std::lower_bound(active.pde_active.begin(), active.pde_active.end(),
                                       b.pl_from[i]);
      if (it == active.pde_active.end() || *it != b.pl_from[i])
        throw std::logic_error(
            "PosteriorEvaluator: pseudo-labeled collocation point is not active");
      pl_cols_[i] = static_cast<Eigen::Index>(it - active.pde_active.begin());
      pl_labels_[i] = b.pl[i].u;
    }

    const int bc_components = boundary_residual_count(spec);
    const_term_ = detail::gauss_log_norm(ps.sigma_ic) * n_ic_ +
                  detail::gauss_log_norm(ps.sigma_pl) * n_pl_ +
                  detail::gauss_log_norm(ps.sigma_bc) * n_bc_ * bc_components +
                  detail::gauss_log_norm(ps.sigma_pde) * n_pde_ +
                  detail::gauss_log_norm(ps.sigma_p) * arch.param_count();
  }

  /// Log posterior only.
  double logp(const ParameterVector& params) { return eval_impl(params, nullptr); }

  /// Log posterior and its gradient. `grad` is overwritten.
  double logp_grad(const ParameterVector& params, Eigen::VectorXd& grad) {
    grad.setZero(params.size());
    return eval_impl(params, &grad);
  }

private:
  double eval_impl(const ParameterVector& params, Eigen::VectorXd* grad) {
    double quad = -params.squaredNorm() / (2.0 * ps_.sigma_p * ps_.sigma_p);
    if (grad) *grad = -params / (ps_.sigma_p * ps_.sigma_p);

    if (value_.size() > 0) {
      value_.forward(params);
      const auto u = value_.u();
      if (grad) value_.clear_seed();
      auto seed = value_.seed_u();
      const double inv_ic = 1.0 / (ps_.sigma_ic * ps_.sigma_ic);
      for (Eigen::Index i = 0; i < n_ic_; ++i) {
        const double r = u(0, i) - ic_labels_[i];
        quad -= 0.5 * r * r * inv_ic;
        if (grad) seed(0, i) = -r * inv_ic;
      }
      if (!neumann_) {
        const double inv_bc = 1.0 / (ps_.sigma_bc * ps_.sigma_bc);
        for (Eigen::Index j = 0; j < n_bc_; ++j) {
          const Eigen::Index c = n_ic_ + 2 * j;
          const double r = u(0, c) - u(0, c + 1);
          quad -= 0.5 * r * r * inv_bc;
          if (grad) {
            seed(0, c) = -r * inv_bc;
            seed(0, c + 1) = r * inv_bc;
          }
        }
      }
      if (grad) value_.backward(params, *grad);
    }

    if (bc_.size() > 0) {
      bc_.forward(params);
      if (grad) bc_.clear_seed();
      const double inv = 1.0 / (ps_.sigma_bc * ps_.sigma_bc);
      const auto u = bc_.u();
      const auto ux = bc_.ux();
      for (Eigen::Index j = 0; j < n_bc_; ++j) {
        const double r = u(0, 2 * j) - u(0, 2 * j + 1);
        const double rx = ux(0, 2 * j) - ux(0, 2 * j + 1);
        quad -= 0.5 * (r * r + rx * rx) * inv;
        if (grad) {
          bc_.seed_u()(0, 2 * j) = -r * inv;
          bc_.seed_u()(0, 2 * j + 1) = r * inv;
          bc_.seed_ux()(0, 2 * j) = -rx * inv;
          bc_.seed_ux()(0, 2 * j + 1) = rx * inv;
        }
      }
      if (grad) bc_.backward(params, *grad);
    }

    if (pde_.size() > 0) {
      pde_.forward(params);
      if (grad) pde_.clear_seed();
      const Planes pl = pde_.planes();
      const double inv = 1.0 / (ps_.sigma_pde * ps_.sigma_pde);
      const auto u = pde_.u();
      const auto ut = pde_.ut();
      for (Eigen::Index i = 0; i < n_pde_; ++i) {
        SolutionDerivs<Dual4> s{Dual4::seeded(u(0, i), 0), Dual4::seeded(ut(0, i), 1),
                                Dual4::seeded(pl.dx ? pde_.ux()(0, i) : 0.0, 2),
                                Dual4::seeded(pl.dxx ? pde_.uxx()(0, i) : 0.0, 3)};
        const Dual4 f = residual(spec_, s);
        quad -= 0.5 * f.v * f.v * inv;
        if (grad) {
          const double c = -f.v * inv;
          pde_.seed_u()(0, i) = c * f.g[0];
          pde_.seed_ut()(0, i) = c * f.g[1];
          if (pl.dx) pde_.seed_ux()(0, i) = c * f.g[2];
          if (pl.dxx) pde_.seed_uxx()(0, i) = c * f.g[3];
        }
      }
      const double inv_pl = 1.0 / (ps_.sigma_pl * ps_.sigma_pl);
      for (Eigen::Index i = 0; i < n_pl_; ++i) {
        const double r = u(0, pl_cols_[i]) - pl_labels_[i];
        quad -= 0.5 * r * r * inv_pl;
        if (grad) pde_.seed_u()(0, pl_cols_[i]) += -r * inv_pl;
      }
      if (grad) pde_.backward(params, *grad);
    }

    return const_term_ + quad;
  }

  Architecture arch_;
  SystemSpec spec_;
  PosteriorSpec ps_;
  bool neumann_;
  Eigen::Index n_ic_, n_pl_, n_bc_, n_pde_;
  Batch value_, bc_, pde_;
  std::vector<double> ic_labels_;
  std::vector<Eigen::Index> pl_cols_;
  std::vector<double> pl_labels_;
  double const_term_ = 0.0;
};

/// The full composed log posterior for one parameter vector. Builds a fresh
/// evaluator; training code holds a PosteriorEvaluator instead.
inline double log_posterior(const Architecture& arch, const ParameterVector& params,
                            const SystemSpec& spec, const ActiveBundle& active,
                            const PosteriorSpec& ps, bool include_pl = true) {
  PosteriorEvaluator ev(arch, spec, ps, active, include_pl);
  return ev.logp(params);
}

inline Eigen::VectorXd grad_log_posterior(const Architecture& arch, const ParameterVector& params,
                                          const SystemSpec& spec, const ActiveBundle& active,
                                          const PosteriorSpec& ps, bool include_pl = true) {
  PosteriorEvaluator ev(arch, spec, ps, active, include_pl);
  Eigen::VectorXd grad;
  ev.logp_grad(params, grad);
  return grad;
}

} // namespace bpl
