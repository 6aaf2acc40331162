#include <doctest.h>

#include <cmath>

#include "bdsde/resolvent.hpp"

using namespace bdsde;

namespace {

FrozenDrift linear_drift(double a) {
  return [a](const Eigen::VectorXd& y) { return (a * y).eval(); };
}

FrozenDrift cubic_drift() {
  return [](const Eigen::VectorXd& y) {
    return y.unaryExpr([](double s) { return -s * s * s; }).eval();
  };
}

Eigen::VectorXd scalar(double x) { return Eigen::VectorXd::Constant(1, x); }

}  // namespace

TEST_CASE("resolvent of the linear drift") {
  ResolventConfig cfg;
  cfg.eps = 0.5;
  const Eigen::VectorXd y = resolve(linear_drift(-1.0), cfg, scalar(3.0));
  CHECK(y[0] == doctest::Approx(2.0).epsilon(1e-12));  // 3 / (1 + eps)
}

TEST_CASE("resolvent of the cubic drift solves y + y^3 = 2") {
  ResolventConfig cfg;
  cfg.eps = 1.0;
  const Eigen::VectorXd y = resolve(cubic_drift(), cfg, scalar(2.0));
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("small eps keeps the fixed point close") {
  ResolventConfig cfg;
  cfg.eps = 1e-6;
  const FrozenDrift f = cubic_drift();
  const Eigen::VectorXd x = scalar(1.7);
  const Eigen::VectorXd y = resolve(f, cfg, x);
  CHECK((y - x).norm() <= cfg.eps * (f(x).norm() + 1.0));
}

TEST_CASE("multidimensional Newton path") {
  ResolventConfig cfg;
  cfg.eps = 0.25;
  Eigen::MatrixXd a(2, 2);
  a << -2.0, 0.5, -0.5, -1.0;  // negative definite symmetric part
  const FrozenDrift f = [a](const Eigen::VectorXd& y) { return (a * y).eval(); };
  Eigen::VectorXd x(2);
  x << 1.0, -2.0;
  const Eigen::VectorXd y = resolve(f, cfg, x);
  const Eigen::VectorXd expect =
      (Eigen::MatrixXd::Identity(2, 2) - cfg.eps * a).fullPivLu().solve(x);
  CHECK((y - expect).norm() <= 1e-10);
  // residual contract
  CHECK((y - cfg.eps * f(y) - x).norm() <= cfg.tol);
}

TEST_CASE("resolvent is firmly non-expansive on sampled pairs") {
  ResolventConfig cfg;
  cfg.eps = 0.5;
  const FrozenDrift f = cubic_drift();
  CounterRng rng(3);
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd x = sample_ball(rng, 64 * k, 2, 3.0);
    const Eigen::VectorXd y = sample_ball(rng, 64 * k + 32, 2, 3.0);
    const FrozenDrift f2 = [](const Eigen::VectorXd& v) {
      return v.unaryExpr([](double s) { return -s * s * s; }).eval();
    };
    const Eigen::VectorXd rx = resolve(f2, cfg, x);
    const Eigen::VectorXd ry = resolve(f2, cfg, y);
    CHECK((rx - ry).norm() <= (x - y).norm() + 1e-10);
  }
}

TEST_CASE("implicit Euler step is the resolvent with eps = dt") {
  const double dt = 0.125;
  ResolventConfig cfg;
  cfg.eps = dt;
  const FrozenDrift f = cubic_drift();
  const Eigen::VectorXd x = scalar(0.8);
  const Eigen::VectorXd y = resolve(f, cfg, x);
  // same root problem: u = x + dt F(u)
  CHECK((y - x - dt * f(y)).norm() <= cfg.tol);
}

TEST_CASE("yosida value agrees with the drift at the resolvent point") {
  ResolventConfig cfg;
  cfg.eps = 0.5;
  SUBCASE("linear closed form") {
    const YosidaValue v = yosida_apply(linear_drift(-1.0), cfg, scalar(3.0));
    CHECK(v.value[0] == doctest::Approx(-2.0).epsilon(1e-12));  // -x/(1+eps)
    CHECK(v.discrepancy <= cfg.tol / cfg.eps);
  }
  SUBCASE("fixed point maps to zero") {
    const YosidaValue v = yosida_apply(cubic_drift(), cfg, scalar(0.0));
    CHECK(std::abs(v.value[0]) <= cfg.tol);
  }
  SUBCASE("cubic example") {
    cfg.eps = 1.0;
    const YosidaValue v = yosida_apply(cubic_drift(), cfg, scalar(2.0));
    CHECK(v.value[0] == doctest::Approx(-1.0).epsilon(1e-9));
  }
}

TEST_CASE("yosida property margins for the linear drift") {
  ResolventConfig cfg;
  cfg.eps = 0.5;
  const YosidaPropertyReport rep =
      verify_yosida_properties(linear_drift(-1.0), cfg, CounterRng(17), 1, 2.0, 200);
  CHECK(rep.lipschitz_margin <= 1e-9);
  CHECK(rep.bound_margin <= cfg.tol);
  CHECK(rep.monotone_margin <= 1e-9);
  CHECK(rep.approx_decreasing);
  // closed form: |f_eps(x) - f(x)| = |x| eps/(1+eps), decreasing linearly
  CHECK(rep.approx_sup[0] ==
        doctest::Approx(2.0 * 1e-2 / (1.0 + 1e-2)).epsilon(0.2));
}

TEST_CASE("yosida property margins for the cubic drift") {
  ResolventConfig cfg;
  cfg.eps = 0.5;
  const YosidaPropertyReport rep =
      verify_yosida_properties(cubic_drift(), cfg, CounterRng(23), 1, 2.0, 200);
  CHECK(rep.lipschitz_margin <= 1e-9);
  CHECK(rep.bound_margin <= cfg.tol);
  CHECK(rep.monotone_margin <= 1e-9);
  CHECK(rep.approx_decreasing);
}

TEST_CASE("non-convergence carries the last residual") {
  ResolventConfig cfg;
  cfg.eps = 1.0;
  cfg.max_iter = 3;
  cfg.tol = 1e-300;  // unreachable
  const FrozenDrift f = cubic_drift();
  CHECK_THROWS_AS(resolve(f, cfg, scalar(2.0)), SolverError);
}

TEST_CASE("config validation") {
  ResolventConfig cfg;
  cfg.eps = -1.0;
  CHECK_THROWS_AS(resolve(linear_drift(-1.0), cfg, scalar(1.0)), ConfigError);
}
