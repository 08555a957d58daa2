#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "bpl/optimizer.hpp"
#include "bpl/rng.hpp"
#include "helpers.hpp"

using bpl::AdamConfig;
using bpl::AdamState;
using bpl::Architecture;
using bpl::DataBundle;
using bpl::LossWeights;
using bpl::ParameterVector;
using bpl::SystemSpec;
using oracle::rel_err;

namespace {

bpl::ActiveBundle all_active(const DataBundle& b) {
  bpl::ActiveBundle a{&b, {}, {}};
  for (std::size_t j = 0; j < b.bc_times.size(); ++j) a.bc_active.push_back(static_cast<int>(j));
  for (std::size_t i = 0; i < b.pde.size(); ++i) a.pde_active.push_back(static_cast<int>(i));
  return a;
}

ParameterVector random_params(const Architecture& arch, std::uint64_t seed, double scale = 0.6) {
  bpl::Rng rng(seed);
  ParameterVector p(arch.param_count());
  for (int i = 0; i < p.size(); ++i) p[i] = rng.uniform(-scale, scale);
  return p;
}

} // namespace

TEST_CASE("loss of the zero network on convection", "[optimizer]") {
  const Architecture arch;
  const SystemSpec spec = SystemSpec::convection(30.0);
  const DataBundle b = bpl::build_bundle(spec, 3);
  const ParameterVector zero = ParameterVector::Zero(arch.param_count());
  bpl::LossEvaluator ev(arch, spec, all_active(b));
  const bpl::LossBreakdown lb = ev.loss(zero, LossWeights{});
  CHECK(lb.pde == 0.0); // u == 0 annihilates u_t + beta u_x
  CHECK(lb.bc == 0.0);
  // Mean of sin^2 over the full even grid is exactly 1/2.
  CHECK(lb.ic == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(lb.total == Catch::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("perfect interpolant has zero loss", "[optimizer]") {
  // The zero network is an exact solution of the convection PDE and the
  // periodic BCs; give it matching (zero) IC labels and every term vanishes.
  const Architecture arch{2, 1, 8, 1};
  const SystemSpec spec = SystemSpec::convection(30.0);
  DataBundle b = bpl::build_bundle(spec, 4);
  for (auto& p : b.ic) p.u = 0.0;
  bpl::LossEvaluator ev(arch, spec, all_active(b));
  const bpl::LossBreakdown lb = ev.loss(ParameterVector::Zero(arch.param_count()), LossWeights{});
  CHECK(lb.total == 0.0);
}

TEST_CASE("empty component sets contribute zero", "[optimizer]") {
  const Architecture arch{2, 1, 4, 1};
  const SystemSpec spec = SystemSpec::reaction(5.0);
  DataBundle b; // all empty
  bpl::LossEvaluator ev(arch, spec, bpl::ActiveBundle{&b, {}, {}});
  const bpl::LossBreakdown lb = ev.loss(random_params(arch, 5), LossWeights{});
  CHECK(lb.total == 0.0);
}

TEST_CASE("loss equals hand-summed components", "[optimizer]") {
  const Architecture arch{2, 2, 9, 1};
  for (const auto& spec : {SystemSpec::convection(30.0), SystemSpec::diffusion(5.0),
                           SystemSpec::reaction_diffusion(5.0, 2.0)}) {
    const DataBundle b = bpl::build_bundle(spec, 6, {16, 5, 11});
    const bpl::ActiveBundle active = all_active(b);
    const ParameterVector p = random_params(arch, 7);
    const LossWeights w{1.0, 0.37, 2.5};

    double ic = 0;
    for (const auto& pt : b.ic) {
      const double r = bpl::forward(arch, p, pt.x, pt.t) - pt.u;
      ic += r * r;
    }
    ic /= b.ic.size();
    double bc = 0;
    for (double t : b.bc_times)
      for (double r : bpl::boundary_residuals(spec, arch, p, t)) bc += r * r;
    bc /= b.bc_times.size();
    double pde = 0;
    for (const auto& pt : b.pde) {
      const double f = bpl::residual(spec, bpl::forward_jet(arch, p, pt.x, pt.t));
      pde += f * f;
    }
    pde /= b.pde.size();

    bpl::LossEvaluator ev(arch, spec, active);
    const bpl::LossBreakdown lb = ev.loss(p, w);
    INFO(spec.name());
    CHECK(rel_err(lb.ic, ic) < 1e-12);
    CHECK(rel_err(lb.bc, bc) < 1e-12);
    CHECK(rel_err(lb.pde, pde) < 1e-12);
    CHECK(rel_err(lb.total, w.ic * ic + w.bc * bc + w.pde * pde) < 1e-12);
    CHECK(rel_err(bpl::pinn_loss(arch, p, spec, active, w), lb.total) < 1e-14);
  }
}

TEST_CASE("loss gradient matches finite differences", "[optimizer]") {
  const Architecture arch{2, 1, 7, 1};
  const SystemSpec spec = SystemSpec::reaction_diffusion(5.0, 2.0);
  const DataBundle b = bpl::build_bundle(spec, 8, {8, 4, 6});
  const bpl::ActiveBundle active = all_active(b);
  const LossWeights w{1.0, 0.5, 2.0};
  const ParameterVector theta = random_params(arch, 9);
  bpl::LossEvaluator ev(arch, spec, active);
  Eigen::VectorXd grad;
  ev.loss_grad(theta, w, grad);
  const double h = 1e-5;
  for (int i = 0; i < theta.size(); i += 3) {
    ParameterVector tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    const double fd = (ev.loss(tp, w).total - ev.loss(tm, w).total) / (2 * h);
    CHECK(rel_err(grad[i], fd) < 1e-6);
  }
}

TEST_CASE("pseudo-label term in ensemble mode", "[optimizer]") {
  const Architecture arch{2, 1, 5, 1};
  const SystemSpec spec = SystemSpec::convection(30.0);
  DataBundle b = bpl::build_bundle(spec, 10, {4, 2, 6});
  b.pl.push_back({b.pde[0].x, b.pde[0].t, 0.4});
  b.pl.push_back({b.pde[2].x, b.pde[2].t, -0.1});
  b.pl_from = {0, 2};
  const bpl::ActiveBundle active = all_active(b);
  const ParameterVector p = random_params(arch, 11);

  bpl::LossEvaluator with_pl(arch, spec, active, true);
  bpl::LossEvaluator without(arch, spec, active, false);
  const auto l1 = with_pl.loss(p, LossWeights{});
  const auto l0 = without.loss(p, LossWeights{});
  double mse = 0;
  for (const auto& pt : b.pl) {
    const double r = bpl::forward(arch, p, pt.x, pt.t) - pt.u;
    mse += r * r;
  }
  mse /= b.pl.size();
  CHECK(rel_err(l1.pl, mse) < 1e-12);
  CHECK(l0.pl == 0.0);
  CHECK(rel_err(l1.total - l0.total, mse) < 1e-10);
}

TEST_CASE("ensemble weights follow the active fractions", "[optimizer]") {
  const SystemSpec spec = SystemSpec::reaction(5.0);
  const DataBundle b = bpl::build_bundle(spec, 12);
  bpl::ActiveBundle active{&b, {0, 1, 2}, {}};
  for (int i = 0; i < 250; ++i) active.pde_active.push_back(i);
  const LossWeights w = bpl::ensemble_weights(active);
  CHECK(w.ic == 1.0);
  CHECK(w.bc == Catch::Approx(0.03));
  CHECK(w.pde == Catch::Approx(0.25));
}

TEST_CASE("adam first step on a constant gradient", "[optimizer][adam]") {
  ParameterVector theta(1);
  theta[0] = 1.0;
  AdamState st(1);
  Eigen::VectorXd g(1);
  g[0] = 2.0;
  bpl::adam_step(st, theta, g);
  // m-hat = 2, v-hat = 4: update = lr * 2 / (2 + eps) ~= lr
  CHECK(theta[0] == Catch::Approx(0.999).epsilon(1e-9));
}

TEST_CASE("adam ignores zero gradients", "[optimizer][adam]") {
  ParameterVector theta(3);
  theta << 1.0, -2.0, 0.5;
  const ParameterVector before = theta;
  AdamState st(3);
  const Eigen::VectorXd g = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 100; ++i) bpl::adam_step(st, theta, g);
  CHECK(theta == before);
}

TEST_CASE("adam minimizes a quadratic", "[optimizer][adam]") {
  ParameterVector theta(1);
  theta[0] = 1.0;
  AdamState st(1);
  Eigen::VectorXd g(1);
  for (int i = 0; i < 10000; ++i) {
    g[0] = 2.0 * theta[0];
    bpl::adam_step(st, theta, g);
  }
  CHECK(std::abs(theta[0]) < 1e-3);
}

TEST_CASE("adam rejects non-finite gradients", "[optimizer][adam]") {
  ParameterVector theta(2);
  theta << 1.0, 2.0;
  AdamState st(2);
  Eigen::VectorXd g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bpl::adam_step(st, theta, g), std::runtime_error);
}

TEST_CASE("pretrain with zero epochs returns the initialization", "[optimizer]") {
  const Architecture arch{2, 1, 6, 1};
  const SystemSpec spec = SystemSpec::convection(30.0);
  const DataBundle b = bpl::build_bundle(spec, 13, {8, 4, 10});
  const ParameterVector p = bpl::pretrain(arch, spec, all_active(b), 0, 99);
  CHECK(p == bpl::init_parameters(arch, 99));
}

TEST_CASE("pretrain reduces the loss deterministically", "[optimizer]") {
  const Architecture arch{2, 2, 10, 1};
  const SystemSpec spec = SystemSpec::convection(30.0);
  const DataBundle b = bpl::build_bundle(spec, 14, {32, 8, 40});
  const bpl::ActiveBundle active = all_active(b);

  std::vector<double> curve;
  const ParameterVector p1 =
      bpl::pretrain(arch, spec, active, 200, 7, AdamConfig{}, LossWeights{},
                    [&curve](int, const bpl::LossBreakdown& lb) { curve.push_back(lb.total); });
  REQUIRE(curve.size() == 200);
  CHECK(curve.back() < 0.5 * curve.front());

  const ParameterVector p2 = bpl::pretrain(arch, spec, active, 200, 7);
  CHECK(p1 == p2); // bitwise determinism
}
