#pragma once

#include <fftw3.h>

#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bpl/batch.hpp"
#include "bpl/network.hpp"

namespace bpl {

enum class SystemKind { reaction, diffusion, reaction_diffusion, convection };

/// One benchmark PDE on [0,2pi) x [0,1]: u_t = N[u; lambda] with periodic
/// boundary conditions (Dirichlet for all systems, additionally Neumann for
/// the two diffusive ones). Only the lambda fields a kind uses are set.
struct SystemSpec {
  SystemKind kind = SystemKind::reaction;
  std::optional<double> rho;
  std::optional<double> d;
  std::optional<double> beta;

  double x_min = 0.0;
  double x_max = 2.0 * M_PI;
  double t_max = 1.0;

  bool has_neumann_bc() const {
    return kind == SystemKind::diffusion || kind == SystemKind::reaction_diffusion;
  }

  static SystemSpec reaction(double rho) {
    SystemSpec s;
    s.kind = SystemKind::reaction;
    s.rho = rho;
    return s;
  }
  static SystemSpec diffusion(double d) {
    SystemSpec s;
    s.kind = SystemKind::diffusion;
    s.d = d;
    return s;
  }
  static SystemSpec reaction_diffusion(double rho, double d) {
    SystemSpec s;
    s.kind = SystemKind::reaction_diffusion;
    s.rho = rho;
    s.d = d;
    return s;
  }
  static SystemSpec convection(double beta) {
    SystemSpec s;
    s.kind = SystemKind::convection;
    s.beta = beta;
    return s;
  }

  const char* name() const {
    switch (kind) {
      case SystemKind::reaction: return "reaction";
      case SystemKind::diffusion: return "diffusion";
      case SystemKind::reaction_diffusion: return "reaction-diffusion";
      case SystemKind::convection: return "convection";
    }
    return "?";
  }

  /// Value of the lambda parameter that names a run (rho, d, or beta; for
  /// reaction-diffusion the varying one is d).
  double primary_param() const {
    switch (kind) {
      case SystemKind::reaction: return rho.value();
      case SystemKind::diffusion: return d.value();
      case SystemKind::reaction_diffusion: return d.value();
      case SystemKind::convection: return beta.value();
    }
    return 0.0;
  }
};

/// Derivative planes the system's residual needs from the network.
inline Planes needed_planes(const SystemSpec& spec) {
  switch (spec.kind) {
    case SystemKind::reaction: return {.dx = false, .dt = true, .dxx = false};
    case SystemKind::convection: return {.dx = true, .dt = true, .dxx = false};
    case SystemKind::diffusion:
    case SystemKind::reaction_diffusion: return {.dx = true, .dt = true, .dxx = true};
  }
  return {};
}

/// Forward-mode scalar over the four residual inputs (u, u_t, u_x, u_xx);
/// evaluating the residual on these yields its exact partials, which seed
/// the batched reverse sweep.
struct Dual4 {
  double v = 0.0;
  std::array<double, 4> g{0.0, 0.0, 0.0, 0.0};

  static Dual4 seeded(double value, int slot) {
    Dual4 d;
    d.v = value;
    d.g[slot] = 1.0;
    return d;
  }
};

inline Dual4 operator+(const Dual4& a, const Dual4& b) {
  return {a.v + b.v, {a.g[0] + b.g[0], a.g[1] + b.g[1], a.g[2] + b.g[2], a.g[3] + b.g[3]}};
}
inline Dual4 operator-(const Dual4& a, const Dual4& b) {
  return {a.v - b.v, {a.g[0] - b.g[0], a.g[1] - b.g[1], a.g[2] - b.g[2], a.g[3] - b.g[3]}};
}
inline Dual4 operator*(double c, const Dual4& a) {
  return {c * a.v, {c * a.g[0], c * a.g[1], c * a.g[2], c * a.g[3]}};
}
inline Dual4 operator*(const Dual4& a, const Dual4& b) {
  return {a.v * b.v,
          {a.v * b.g[0] + b.v * a.g[0], a.v * b.g[1] + b.v * a.g[1],
           a.v * b.g[2] + b.v * a.g[2], a.v * b.g[3] + b.v * a.g[3]}};
}
inline Dual4 operator-(double c, const Dual4& a) {
  return {c - a.v, {-a.g[0], -a.g[1], -a.g[2], -a.g[3]}};
}

/// Physics residual f = u_t - N[u; lambda]. Generic over the scalar so the
/// same formula serves plain evaluation and the Dual4 linearization.
template <class S>
S residual(const SystemSpec& spec, const SolutionDerivs<S>& s) {
  switch (spec.kind) {
    case SystemKind::reaction: {
      const double rho = spec.rho.value();
      return s.ut - rho * (s.u * (1.0 - s.u));
    }
    case SystemKind::diffusion: {
      const double d = spec.d.value();
      return s.ut - (1.0 / (d * d)) * s.uxx;
    }
    case SystemKind::reaction_diffusion: {
      const double rho = spec.rho.value();
      const double d = spec.d.value();
      return (s.ut - d * s.uxx) - rho * (s.u * (1.0 - s.u));
    }
    case SystemKind::convection: {
      const double beta = spec.beta.value();
      return s.ut + beta * s.ux;
    }
  }
  throw std::logic_error("residual: bad system kind");
}

inline double initial_condition(const SystemSpec& spec, double x) {
  switch (spec.kind) {
    case SystemKind::reaction:
    case SystemKind::reaction_diffusion: {
      const double dx = x - M_PI;
      return std::exp(-8.0 * dx * dx / (M_PI * M_PI));
    }
    case SystemKind::diffusion: return std::sin(spec.d.value() * x);
    case SystemKind::convection: return std::sin(x);
  }
  throw std::logic_error("initial_condition: bad system kind");
}

/// Periodic boundary residuals at time t: always u(0,t)-u(2pi,t); for the
/// diffusive systems also u_x(0,t)-u_x(2pi,t).
inline std::vector<double> boundary_residuals(const SystemSpec& spec, const Architecture& arch,
                                              const ParameterVector& params, double t) {
  std::vector<double> r;
  if (spec.has_neumann_bc()) {
    const Derivs lo = forward_jet(arch, params, spec.x_min, t);
    const Derivs hi = forward_jet(arch, params, spec.x_max, t);
    r.push_back(lo.u - hi.u);
    r.push_back(lo.ux - hi.ux);
  } else {
    r.push_back(forward(arch, params, spec.x_min, t) - forward(arch, params, spec.x_max, t));
  }
  return r;
}

inline int boundary_residual_count(const SystemSpec& spec) {
  return spec.has_neumann_bc() ? 2 : 1;
}

// --- reaction-diffusion reference grid (Strang splitting) ---

/// Periodic solution grid: rows are time slices 0..nt, columns the nx grid
/// points x_j = 2pi j / nx.
class RdGrid {
public:
  RdGrid(int nx, int nt, double t_max) : nx_(nx), nt_(nt), t_max_(t_max), u_((nt + 1) * nx) {}

  int nx() const { return nx_; }
  int nt() const { return nt_; }
  double& at(int it, int ix) { return u_[static_cast<std::size_t>(it) * nx_ + ix]; }
  double at(int it, int ix) const { return u_[static_cast<std::size_t>(it) * nx_ + ix]; }

  /// Bilinear interpolation, periodic in x, clamped to [0, t_max] in t.
  double interpolate(double x, double t) const {
    const double two_pi = 2.0 * M_PI;
    double xf = std::fmod(x, two_pi);
    if (xf < 0) xf += two_pi;
    const double gx = xf / two_pi * nx_;
    const int ix = static_cast<int>(gx) % nx_;
    const double fx = gx - static_cast<int>(gx);
    const int ix1 = (ix + 1) % nx_;

    double tt = std::min(std::max(t / t_max_, 0.0), 1.0) * nt_;
    int it = static_cast<int>(tt);
    if (it >= nt_) it = nt_ - 1;
    const double ft = tt - it;

    const double lo = at(it, ix) * (1.0 - fx) + at(it, ix1) * fx;
    const double hi = at(it + 1, ix) * (1.0 - fx) + at(it + 1, ix1) * fx;
    return lo * (1.0 - ft) + hi * ft;
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("RdGrid: cannot open " + path);
    out << "x,t,u\n";
    char buf[96];
    for (int it = 0; it <= nt_; ++it) {
      const double t = t_max_ * it / nt_;
      for (int ix = 0; ix < nx_; ++ix) {
        const double x = 2.0 * M_PI * ix / nx_;
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", x, t, at(it, ix));
        out << buf;
      }
    }
  }

private:
  int nx_, nt_;
  double t_max_;
  std::vector<double> u_;
};

/// Strang splitting for u_t = d u_xx + rho u (1-u): half an exact spectral
/// diffusion step, one exact logistic step, half a diffusion step. Both
/// sub-flows are solved exactly, so the only error is the O(dt^2) splitting
/// term.
inline RdGrid solve_reaction_diffusion(const SystemSpec& spec, int nx = 512, int nt = 2000) {
  if (spec.kind != SystemKind::reaction_diffusion)
    throw std::invalid_argument("solve_reaction_diffusion: wrong system kind");
  if (nx < 2 || (nx & (nx - 1)) != 0)
    throw std::invalid_argument("solve_reaction_diffusion: nx must be a power of two");
  if (nt < 1) throw std::invalid_argument("solve_reaction_diffusion: nt must be >= 1");
  const double rho = spec.rho.value();
  const double d = spec.d.value();
  const double dt = spec.t_max / nt;

  RdGrid grid(nx, nt, spec.t_max);
  std::vector<double> u(nx);
  for (int j = 0; j < nx; ++j) u[j] = initial_condition(spec, 2.0 * M_PI * j / nx);
  for (int j = 0; j < nx; ++j) grid.at(0, j) = u[j];

  const int nk = nx / 2 + 1;
  std::vector<std::complex<double>> uhat(nk);
  fftw_plan fwd = fftw_plan_dft_r2c_1d(nx, u.data(), reinterpret_cast<fftw_complex*>(uhat.data()),
                                       FFTW_ESTIMATE);
  fftw_plan bwd = fftw_plan_dft_c2r_1d(nx, reinterpret_cast<fftw_complex*>(uhat.data()), u.data(),
                                       FFTW_ESTIMATE);

  // Domain length 2pi makes the wavenumbers integers.
  std::vector<double> decay(nk);
  for (int k = 0; k < nk; ++k) decay[k] = std::exp(-d * static_cast<double>(k) * k * dt / 2.0);

  auto diffuse_half = [&] {
    fftw_execute(fwd);
    for (int k = 0; k < nk; ++k) uhat[k] *= decay[k] / nx;
    fftw_execute(bwd);
  };
  const double growth = std::exp(rho * dt);
  auto react_full = [&] {
    for (int j = 0; j < nx; ++j) {
      const double v = u[j];
      u[j] = v * growth / (1.0 + v * (growth - 1.0));
    }
  };

  for (int it = 1; it <= nt; ++it) {
    diffuse_half();
    react_full();
    diffuse_half();
    for (int j = 0; j < nx; ++j) grid.at(it, j) = u[j];
  }
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(bwd);
  return grid;
}

/// Ground-truth oracle: closed forms for reaction, diffusion and convection;
/// the splitting grid for reaction-diffusion. Construct once per run.
class ReferenceSolution {
public:
  explicit ReferenceSolution(const SystemSpec& spec, int rd_nx = 512, int rd_nt = 2000)
      : spec_(spec) {
    if (spec.kind == SystemKind::reaction_diffusion)
      grid_ = std::make_shared<RdGrid>(solve_reaction_diffusion(spec, rd_nx, rd_nt));
  }

  double operator()(double x, double t) const {
    switch (spec_.kind) {
      case SystemKind::reaction: {
        const double u0 = initial_condition(spec_, x);
        const double e = std::exp(spec_.rho.value() * t);
        return u0 * e / (u0 * e + 1.0 - u0);
      }
      case SystemKind::diffusion:
        return std::sin(spec_.d.value() * x) * std::exp(-t);
      case SystemKind::convection:
        return std::sin(x - spec_.beta.value() * t);
      case SystemKind::reaction_diffusion:
        return grid_->interpolate(x, t);
    }
    throw std::logic_error("ReferenceSolution: bad system kind");
  }

  const SystemSpec& spec() const { return spec_; }

private:
  SystemSpec spec_;
  std::shared_ptr<const RdGrid> grid_;
};

} // namespace bpl
