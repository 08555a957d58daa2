#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "bpl/jet.hpp"
#include "bpl/rng.hpp"
#include "helpers.hpp"

using bpl::ElemOp;
using bpl::Jet2;
using oracle::rel_err;

namespace {

// Checks all four components of `jet` against finite differences of the
// scalar map (x,t) -> value(x,t).
void check_against_fd(const Jet2& jet, const std::function<double(double, double)>& f, double x,
                      double t, double tol = 1e-6) {
  CHECK(jet.val == Catch::Approx(f(x, t)).margin(1e-14));
  const auto fx = [&](double xx) { return f(xx, t); };
  const auto ft = [&](double tt) { return f(x, tt); };
  CHECK(rel_err(jet.dx, oracle::diff1(fx, x)) < tol);
  CHECK(rel_err(jet.dt, oracle::diff1(ft, t)) < tol);
  CHECK(rel_err(jet.dxx, oracle::diff2(fx, x)) < tol);
}

} // namespace

TEST_CASE("seeding rules", "[jet]") {
  const Jet2 x = Jet2::seed_x(1.5);
  CHECK(x.val == 1.5);
  CHECK(x.dx == 1.0);
  CHECK(x.dt == 0.0);
  CHECK(x.dxx == 0.0);
  const Jet2 t = Jet2::seed_t(0.25);
  CHECK(t.val == 0.25);
  CHECK(t.dx == 0.0);
  CHECK(t.dt == 1.0);
  const Jet2 c = Jet2::constant(7.0);
  CHECK(c.val == 7.0);
  CHECK(c.dx == 0.0);
  CHECK(c.dt == 0.0);
  CHECK(c.dxx == 0.0);
}

TEST_CASE("tanh of seeded x at zero", "[jet]") {
  const Jet2 r = tanh(Jet2::seed_x(0.0));
  CHECK(r.val == 0.0);
  CHECK(r.dx == 1.0);
  CHECK(r.dt == 0.0);
  CHECK(r.dxx == 0.0);
}

TEST_CASE("x*x at x=3", "[jet]") {
  const Jet2 x = Jet2::seed_x(3.0);
  const Jet2 r = x * x;
  CHECK(r.val == 9.0);
  CHECK(r.dx == 6.0);
  CHECK(r.dt == 0.0);
  CHECK(r.dxx == 2.0);
}

TEST_CASE("travelling wave time derivative", "[jet]") {
  // sin(x - 30 t) at (1, 0): d/dt = -30 cos(1)
  const double beta = 30.0;
  const Jet2 arg = Jet2::seed_x(1.0) - beta * Jet2::seed_t(0.0);
  const Jet2 r = sin(arg);
  CHECK(r.dt == Catch::Approx(-beta * std::cos(1.0)).epsilon(1e-12));
  check_against_fd(
      r, [&](double x, double t) { return std::sin(x - beta * t); }, 1.0, 0.0);
}

TEST_CASE("division by zero value", "[jet]") {
  const Jet2 num = Jet2::seed_x(1.0);
  const Jet2 den = Jet2::constant(0.0);
  CHECK_THROWS_AS(num / den, std::domain_error);
  const std::array<Jet2, 2> args{num, den};
  CHECK_THROWS_AS(bpl::jet_apply(ElemOp::div, args), std::domain_error);
}

TEST_CASE("every elementary op matches finite differences", "[jet]") {
  // Nonlinear operands so second-derivative paths are exercised.
  const auto a = [](double x, double t) { return std::sin(0.9 * x) + 0.4 * t + 0.3 * x * t; };
  const auto b = [](double x, double t) { return 2.1 + 0.5 * std::cos(x) + 0.2 * t * t; };
  const auto make_a = [&](double x, double t) {
    const Jet2 jx = Jet2::seed_x(x), jt = Jet2::seed_t(t);
    return sin(0.9 * jx) + 0.4 * jt + 0.3 * (jx * jt);
  };
  const auto make_b = [&](double x, double t) {
    const Jet2 jx = Jet2::seed_x(x), jt = Jet2::seed_t(t);
    // cos via sin(pi/2 - x) keeps to the supported op set
    return 2.1 + 0.5 * sin(Jet2::constant(M_PI / 2) - jx) + 0.2 * (jt * jt);
  };

  bpl::Rng rng(7);
  for (int rep = 0; rep < 25; ++rep) {
    const double x = rng.uniform(-1.2, 1.2), t = rng.uniform(0.1, 0.9);
    const Jet2 ja = make_a(x, t), jb = make_b(x, t);
    const std::array<Jet2, 2> args{ja, jb};

    check_against_fd(bpl::jet_apply(ElemOp::add, args),
                     [&](double xx, double tt) { return a(xx, tt) + b(xx, tt); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::sub, args),
                     [&](double xx, double tt) { return a(xx, tt) - b(xx, tt); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::mul, args),
                     [&](double xx, double tt) { return a(xx, tt) * b(xx, tt); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::div, args),
                     [&](double xx, double tt) { return a(xx, tt) / b(xx, tt); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::tanh, args),
                     [&](double xx, double tt) { return std::tanh(a(xx, tt)); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::sin, args),
                     [&](double xx, double tt) { return std::sin(a(xx, tt)); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::exp, args),
                     [&](double xx, double tt) { return std::exp(a(xx, tt)); }, x, t);
    check_against_fd(bpl::jet_apply(ElemOp::scale, args, -1.7),
                     [&](double xx, double tt) { return -1.7 * a(xx, tt); }, x, t);
  }
}

TEST_CASE("composed expressions match finite differences", "[jet]") {
  bpl::Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    const double c1 = rng.uniform(-2, 2), c2 = rng.uniform(-2, 2), c3 = rng.uniform(0.2, 1.5);
    const auto f = [&](double x, double t) {
      return std::exp(c3 * std::sin(c1 * x + c2 * t)) / (2.0 + std::tanh(x * t));
    };
    const double x = rng.uniform(-1, 1), t = rng.uniform(0.1, 0.9);
    const Jet2 jx = Jet2::seed_x(x), jt = Jet2::seed_t(t);
    const Jet2 jet = exp(c3 * sin(c1 * jx + c2 * jt)) / (2.0 + tanh(jx * jt));
    check_against_fd(jet, f, x, t);
  }
}
