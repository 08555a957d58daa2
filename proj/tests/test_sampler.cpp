#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bpl/data.hpp"
#include "bpl/optimizer.hpp"
#include "bpl/sampler.hpp"

using bpl::ChainResult;
using bpl::DualAveraging;
using bpl::SamplerConfig;
using Eigen::VectorXd;

namespace {

// logp and gradient of a diagonal Gaussian with the given variances.
struct GaussianOracle {
  VectorXd var;
  double operator()(const VectorXd& theta, VectorXd& grad) const {
    grad = (-theta.array() / var.array()).matrix();
    return -0.5 * (theta.array().square() / var.array()).sum();
  }
};

double normal_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

} // namespace

TEST_CASE("leapfrog reversibility", "[sampler][leapfrog]") {
  GaussianOracle oracle{VectorXd::Constant(5, 1.0)};
  bpl::Rng rng(1);
  VectorXd theta(5), r(5);
  for (int i = 0; i < 5; ++i) {
    theta[i] = rng.normal();
    r[i] = rng.normal();
  }
  const VectorXd theta0 = theta, r0 = r;
  VectorXd grad(5);
  double logp = oracle(theta, grad);

  REQUIRE(bpl::leapfrog(oracle, theta, r, 0.05, 25, logp, grad));
  // Negate momentum and integrate back.
  r = -r;
  REQUIRE(bpl::leapfrog(oracle, theta, r, 0.05, 25, logp, grad));
  CHECK((theta - theta0).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK((-r - r0).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("leapfrog drifts linearly in a zero field", "[sampler][leapfrog]") {
  const auto flat = [](const VectorXd& theta, VectorXd& grad) {
    grad.setZero(theta.size());
    return 0.0;
  };
  VectorXd theta = VectorXd::Zero(3), r(3);
  r << 1.0, -2.0, 0.5;
  VectorXd grad = VectorXd::Zero(3);
  double logp = 0.0;
  REQUIRE(bpl::leapfrog(flat, theta, r, 0.1, 7, logp, grad));
  CHECK((theta - 0.7 * r).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("leapfrog energy error scales as stepsize squared", "[sampler][leapfrog]") {
  GaussianOracle oracle{VectorXd::Constant(1, 1.0)};
  auto energy_error = [&](double eps) {
    VectorXd theta(1), r(1), grad(1);
    theta << 1.3;
    r << 0.7;
    double logp = oracle(theta, grad);
    const double h0 = -logp + 0.5 * r.squaredNorm();
    const int steps = static_cast<int>(std::round(1.0 / eps));
    REQUIRE(bpl::leapfrog(oracle, theta, r, eps, steps, logp, grad));
    return std::abs((-logp + 0.5 * r.squaredNorm()) - h0);
  };
  const double e1 = energy_error(0.02), e2 = energy_error(0.01);
  CHECK(e1 / e2 == Catch::Approx(4.0).epsilon(0.2));
}

TEST_CASE("leapfrog validates arguments", "[sampler][leapfrog]") {
  GaussianOracle oracle{VectorXd::Constant(1, 1.0)};
  VectorXd theta = VectorXd::Zero(1), r = VectorXd::Zero(1), grad = VectorXd::Zero(1);
  double logp = 0;
  CHECK_THROWS_AS(bpl::leapfrog(oracle, theta, r, 0.1, 0, logp, grad), std::invalid_argument);
  CHECK_THROWS_AS(bpl::leapfrog(oracle, theta, r, 0.0, 5, logp, grad), std::invalid_argument);
}

TEST_CASE("dual averaging moves in the right direction", "[sampler][adapt]") {
  // The controller shrinks toward 10x the initial step, so the very first
  // update may sit above it; monotonicity holds across successive updates.
  DualAveraging up(0.001, 0.6);
  double prev = up.observe(1.0); // everything accepted
  for (int i = 0; i < 50; ++i) {
    const double next = up.observe(1.0);
    CHECK(next > prev);
    prev = next;
  }
  CHECK(prev > 0.001);
  DualAveraging down(0.001, 0.6);
  prev = down.observe(0.0); // everything rejected
  for (int i = 0; i < 50; ++i) {
    const double next = down.observe(0.0);
    CHECK(next < prev);
    prev = next;
  }
  CHECK(prev < 0.001);
}

TEST_CASE("dual averaging reaches the target acceptance", "[sampler][adapt][acceptance2]") {
  GaussianOracle oracle{VectorXd::Constant(10, 1.0)};
  SamplerConfig cfg;
  cfg.n_samples = 2000;
  cfg.n_burnin = 500;
  cfg.n_leapfrog = 8;
  cfg.n_chains = 1;
  cfg.target_accept = 0.6;
  cfg.init_stepsize = 0.001;
  const ChainResult chain = bpl::hmc_chain(oracle, VectorXd::Zero(10), cfg, 99);
  CHECK(std::abs(chain.acceptance_rate - 0.6) < 0.15);
}

TEST_CASE("standard normal moments and KS distance", "[sampler][acceptance2]") {
  GaussianOracle oracle{VectorXd::Constant(2, 1.0)};
  SamplerConfig cfg;
  cfg.n_samples = 10000;
  cfg.n_burnin = 500;
  cfg.n_leapfrog = 16;
  cfg.n_chains = 1;
  cfg.target_accept = 0.6;
  cfg.init_stepsize = 0.1;
  const ChainResult chain = bpl::hmc_chain(oracle, VectorXd::Zero(2), cfg, 7);

  for (int d = 0; d < 2; ++d) {
    double mean = 0, m2 = 0;
    for (const auto& s : chain.samples) mean += s[d];
    mean /= chain.samples.size();
    for (const auto& s : chain.samples) m2 += (s[d] - mean) * (s[d] - mean);
    m2 /= chain.samples.size();
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(m2 - 1.0) < 0.1);
  }

  // Kolmogorov-Smirnov distance of the first coordinate against the exact
  // normal CDF.
  std::vector<double> xs;
  xs.reserve(chain.samples.size());
  for (const auto& s : chain.samples) xs.push_back(s[0]);
  std::sort(xs.begin(), xs.end());
  double ks = 0;
  const double n = static_cast<double>(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = normal_cdf(xs[i]);
    ks = std::max(ks, std::abs((i + 1) / n - cdf));
    ks = std::max(ks, std::abs(cdf - i / n));
  }
  CHECK(ks < 0.05);
}

TEST_CASE("anisotropic Gaussian variances", "[sampler][acceptance2]") {
  VectorXd var(2);
  var << 1.0, 100.0;
  GaussianOracle oracle{var};
  SamplerConfig cfg;
  cfg.n_samples = 20000;
  cfg.n_burnin = 1000;
  // A prime trajectory length avoids near-periodic orbits of the fast
  // coordinate under the identity mass matrix.
  cfg.n_leapfrog = 37;
  cfg.n_chains = 1;
  cfg.target_accept = 0.65;
  cfg.init_stepsize = 0.1;
  const ChainResult chain = bpl::hmc_chain(oracle, VectorXd::Zero(2), cfg, 11);
  for (int d = 0; d < 2; ++d) {
    double mean = 0, m2 = 0;
    for (const auto& s : chain.samples) mean += s[d];
    mean /= chain.samples.size();
    for (const auto& s : chain.samples) m2 += (s[d] - mean) * (s[d] - mean);
    m2 /= chain.samples.size();
    CHECK(std::abs(m2 - var[d]) < 0.1 * var[d]);
  }
}

TEST_CASE("chains are deterministic given seeds", "[sampler]") {
  GaussianOracle oracle{VectorXd::Constant(3, 2.0)};
  SamplerConfig cfg;
  cfg.n_samples = 50;
  cfg.n_burnin = 50;
  cfg.n_leapfrog = 8;
  cfg.n_chains = 2;
  const auto factory = [&] { return oracle; };
  const auto run1 = bpl::sample_posterior(factory, VectorXd::Ones(3), cfg, {1, 2});
  const auto run2 = bpl::sample_posterior(factory, VectorXd::Ones(3), cfg, {1, 2});
  REQUIRE(run1.samples.size() == 100); // n_chains * n_samples
  REQUIRE(run2.samples.size() == 100);
  for (std::size_t i = 0; i < run1.samples.size(); ++i)
    CHECK(run1.samples[i] == run2.samples[i]); // bitwise
  CHECK(run1.theta_last == run1.chains.back().last_sample);

  // Distinct seeds give distinct chains.
  const auto run3 = bpl::sample_posterior(factory, VectorXd::Ones(3), cfg, {1, 3});
  CHECK(run3.samples.back() != run1.samples.back());
}

TEST_CASE("threaded and sequential chains agree", "[sampler]") {
  GaussianOracle oracle{VectorXd::Constant(4, 1.0)};
  SamplerConfig cfg;
  cfg.n_samples = 40;
  cfg.n_burnin = 40;
  cfg.n_leapfrog = 8;
  cfg.n_chains = 2;
  const auto factory = [&] { return oracle; };
  cfg.threads = 1;
  const auto seq = bpl::sample_posterior(factory, VectorXd::Zero(4), cfg, {5, 6});
  cfg.threads = 2;
  const auto par = bpl::sample_posterior(factory, VectorXd::Zero(4), cfg, {5, 6});
  REQUIRE(seq.samples.size() == par.samples.size());
  for (std::size_t i = 0; i < seq.samples.size(); ++i) CHECK(seq.samples[i] == par.samples[i]);
}

TEST_CASE("rejected transitions repeat the previous state", "[sampler]") {
  // A huge frozen step size on a narrow Gaussian forces rejections.
  GaussianOracle oracle{VectorXd::Constant(2, 1e-6)};
  SamplerConfig cfg;
  cfg.n_samples = 30;
  cfg.n_burnin = 0; // keep the absurd step size
  cfg.n_leapfrog = 10;
  cfg.n_chains = 1;
  cfg.init_stepsize = 10.0;
  const ChainResult chain = bpl::hmc_chain(oracle, VectorXd::Zero(2), cfg, 3);
  REQUIRE(chain.samples.size() == 30);
  CHECK(chain.acceptance_rate < 0.2);
  int repeats = 0;
  for (std::size_t i = 1; i < chain.samples.size(); ++i)
    repeats += chain.samples[i] == chain.samples[i - 1];
  CHECK(repeats > 0);
}

TEST_CASE("burn-in with zero acceptances aborts with a diagnostic", "[sampler]") {
  // A target whose gradient explodes: every proposal diverges.
  const auto bad = [](const VectorXd& theta, VectorXd& grad) {
    grad = VectorXd::Constant(theta.size(), std::numeric_limits<double>::quiet_NaN());
    return theta[0] == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  };
  SamplerConfig cfg;
  cfg.n_samples = 5;
  cfg.n_burnin = 20;
  cfg.n_leapfrog = 4;
  cfg.n_chains = 1;
  CHECK_THROWS_AS(bpl::hmc_chain(bad, VectorXd::Zero(2), cfg, 1), std::runtime_error);
}

TEST_CASE("non-finite initial state is rejected", "[sampler]") {
  const auto oracle = [](const VectorXd&, VectorXd& grad) {
    grad.setZero(1);
    return std::numeric_limits<double>::quiet_NaN();
  };
  SamplerConfig cfg;
  cfg.n_samples = 1;
  cfg.n_burnin = 0;
  cfg.n_leapfrog = 1;
  cfg.n_chains = 1;
  CHECK_THROWS_AS(bpl::hmc_chain(oracle, VectorXd::Zero(1), cfg, 1), std::invalid_argument);
}

TEST_CASE("posterior over IC data concentrates on the labels", "[sampler][slow]") {
  // Sample a small network's posterior given only labeled IC points; the
  // ensemble mean prediction must sit within 3 sigma_ic of every label.
  const bpl::Architecture arch{2, 1, 16, 1};
  const bpl::SystemSpec spec = bpl::SystemSpec::convection(30.0);
  bpl::DataBundle b = bpl::build_bundle(spec, 5, {16, 1, 1});
  b.bc_times.clear();
  b.pde.clear();
  const bpl::ActiveBundle active{&b, {}, {}};

  bpl::PosteriorSpec ps;
  ps.sigma_ic = 0.001;
  // Long enough for the fit residual to drop well below sigma_ic, so the
  // chains start inside the posterior bulk.
  const bpl::ParameterVector theta0 = bpl::pretrain(arch, spec, active, 20000, 17);

  bpl::PosteriorEvaluator ev(arch, spec, ps, active, true);
  SamplerConfig cfg;
  cfg.n_samples = 200;
  cfg.n_burnin = 200;
  cfg.n_leapfrog = 64;
  cfg.n_chains = 2;
  const auto factory = [&] {
    return [e = std::make_shared<bpl::PosteriorEvaluator>(ev)](const VectorXd& t,
                                                               VectorXd& g) mutable {
      return e->logp_grad(t, g);
    };
  };
  const auto run = bpl::sample_posterior(factory, theta0, cfg, {21, 22});
  REQUIRE(run.samples.size() == 400);

  for (const auto& pt : b.ic) {
    double mean = 0;
    for (const auto& s : run.samples) mean += bpl::forward(arch, s, pt.x, pt.t);
    mean /= run.samples.size();
    CHECK(std::abs(mean - pt.u) < 3 * ps.sigma_ic);
  }
}
