#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bdsde/galerkin.hpp"
#include "bdsde/models.hpp"

using namespace bdsde;

namespace {

constexpr double kPi = std::numbers::pi;

GalerkinModel heat_model(int n_basis) {
  GalerkinModel m;
  m.basis_size = n_basis;
  m.a = [](double, double) { return 1.0; };
  m.b2.lambda = 1.9;
  m.b2.Lambda = 2.1;
  m.b2.rho = 4.0;
  m.b2.rho_prime = 4.0;
  m.b2.delta = 0.5;
  m.terminal_profile = [](double x) { return x * (1.0 - x); };
  return m;
}

GalerkinModel mixed_model(int n_basis) {
  GalerkinModel m = heat_model(n_basis);
  m.sigma = {[](double, double) { return 0.3; }};
  m.b = [](double, double) { return 0.2; };
  m.c = [](double, double) { return 0.1; };
  m.varsigma_coef = {[](double, double) { return 0.1; }};
  m.f = [](double, double, double, double grad, const Eigen::VectorXd&) { return 0.05 * grad; };
  m.g = [](double, double, double theta, double, const Eigen::VectorXd&) { return 0.1 * theta; };
  m.h = {[](double, double, double theta, double, const Eigen::VectorXd&) {
    return 0.2 * theta;
  }};
  m.b2.lambda = 1.5;
  m.b2.Lambda = 2.5;
  m.b2.kappa = 0.1;
  m.b2.alpha = 0.0;
  m.b2.beta = 0.0;
  m.b2.L = 0.2;
  return m;
}

}  // namespace

TEST_CASE("quadrature rules") {
  const Quadrature t = Quadrature::trapezoid(64);
  CHECK(t.integrate([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-14));
  // trapezoid is spectrally accurate on full periods
  CHECK(t.integrate([](double x) { return std::sin(kPi * x) * std::sin(kPi * x); }) ==
        doctest::Approx(0.5).epsilon(1e-12));
  const Quadrature g = Quadrature::gauss_legendre(12);
  CHECK(g.integrate([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(g.integrate([](double x) { return x * x * x; }) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(g.integrate([](double x) { return std::exp(x); }) ==
        doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("sine basis invariants") {
  for (int n : {1, 4, 8}) {
    const SineBasis basis(n);
    CHECK(basis.gram_deviation() <= kQuadTol);
    CHECK(basis.stiffness_deviation() <= kQuadTol);
  }
  // Gauss quadrature variant
  const SineBasis gauss_basis(4, Quadrature::gauss_legendre(48));
  CHECK(gauss_basis.gram_deviation() <= kQuadTol);
}

TEST_CASE("projection") {
  const SineBasis basis(4);
  SUBCASE("sin(pi x) hits the first slot") {
    const Eigen::VectorXd c = basis.project([](double x) { return std::sin(kPi * x); });
    CHECK(c[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-10));
    for (int j = 1; j < 4; ++j) CHECK(std::abs(c[j]) <= kQuadTol);
  }
  SUBCASE("a basis function projects to a unit vector") {
    const Eigen::VectorXd c =
        basis.project([](double x) { return std::sqrt(2.0) * std::sin(2.0 * kPi * x); });
    CHECK(c[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(c[0]) <= kQuadTol);
    CHECK(std::abs(c[2]) <= kQuadTol);
  }
  SUBCASE("parabola profile matches the closed-form coefficients") {
    // finer rule: the integrand is smooth but not a trigonometric polynomial
    const SineBasis fine(4, Quadrature::trapezoid(2048));
    const Eigen::VectorXd c = fine.project([](double x) { return x * (1.0 - x); });
    for (int j = 1; j <= 4; ++j) {
      const double want =
          std::sqrt(2.0) * 2.0 * (1.0 - std::pow(-1.0, j)) / std::pow(j * kPi, 3.0);
      CHECK(std::abs(c[j - 1] - want) <= 1e-9);
    }
  }
}

TEST_CASE("heat assembly matches the eigenvalue formula") {
  const ScenarioLattice lat = build_lattice(0.5, 4, 1, 1);
  const CoefficientSystem sys = assemble_bdspde(heat_model(4), lat);
  CounterRng rng(3);
  for (int trial = 0; trial < 32; ++trial) {
    const Eigen::VectorXd u = sample_ball(rng, 64 * trial, 4, 2.0);
    const Eigen::VectorXd f = sys.drift(0.1, u, Eigen::MatrixXd::Zero(4, 1));
    for (int j = 1; j <= 4; ++j)
      CHECK(f[j - 1] == doctest::Approx(-(j * kPi) * (j * kPi) * u[j - 1]).epsilon(1e-8));
  }
}

TEST_CASE("sigma coupling vanishes for the first mode") {
  // int e_1' e_1 = 0, so with n = 1 the sigma term contributes nothing.
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  GalerkinModel m = heat_model(1);
  m.sigma = {[](double, double) { return 0.7; }};
  const CoefficientSystem sys = assemble_bdspde(m, lat);
  Eigen::VectorXd u(1);
  u << 0.9;
  Eigen::MatrixXd v(1, 1);
  v << 1.3;
  const Eigen::VectorXd f = sys.drift(0.0, u, v);
  CHECK(f[0] == doctest::Approx(-kPi * kPi * 0.9).epsilon(1e-10));
}

TEST_CASE("linear h rows project to the identity") {
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  GalerkinModel m = mixed_model(4);
  const CoefficientSystem sys = assemble_bdspde(m, lat);
  CounterRng rng(5);
  for (int trial = 0; trial < 16; ++trial) {
    const Eigen::VectorXd u = sample_ball(rng, 64 * trial, 4, 2.0);
    const Eigen::MatrixXd j = sys.diffusion(0.2, u, Eigen::MatrixXd::Zero(4, 1));
    for (int k = 0; k < 4; ++k) CHECK(j(k, 0) == doctest::Approx(0.2 * u[k]).epsilon(1e-8));
  }
}

TEST_CASE("norm sandwich is exact in coordinates") {
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  const CoefficientSystem sys = assemble_bdspde(heat_model(4), lat);
  CounterRng rng(7);
  for (int trial = 0; trial < 64; ++trial) {
    const Eigen::VectorXd u = sample_ball(rng, 64 * trial, 4, 3.0);
    CHECK(sys.norms.h(u) <= sys.norms.v(u) + 1e-14);
    CHECK(sys.norms.dual(u) <= sys.norms.h(u) + 1e-14);
  }
}

TEST_CASE("power drift") {
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  SUBCASE("r = 2 is minus the identity") {
    auto basis = std::make_shared<SineBasis>(3);
    const CoefficientSystem sys = assemble_power_drift(2.0, basis, lat);
    CounterRng rng(9);
    for (int trial = 0; trial < 16; ++trial) {
      const Eigen::VectorXd u = sample_ball(rng, 64 * trial, 3, 2.0);
      const Eigen::VectorXd f = sys.drift(0.0, u, Eigen::MatrixXd::Zero(3, 1));
      CHECK((f + u).norm() <= 1e-9);
    }
  }
  SUBCASE("r = 4 on the first mode integrates sin^4") {
    auto basis = std::make_shared<SineBasis>(1);
    const CoefficientSystem sys = assemble_power_drift(4.0, basis, lat);
    Eigen::VectorXd u(1);
    u << 1.0;
    const Eigen::VectorXd f = sys.drift(0.0, u, Eigen::MatrixXd::Zero(1, 1));
    CHECK(f[0] == doctest::Approx(-1.5).epsilon(1e-10));  // -4 int sin^4 = -4*3/8
  }
  SUBCASE("monotonicity margin is nonpositive") {
    auto basis = std::make_shared<SineBasis>(3);
    const CoefficientSystem sys = assemble_power_drift(4.0, basis, lat);
    const CoefficientSampler s(CounterRng(11), 3, 1, 0.5, 2.0);
    CHECK(check_monotonicity(sys, s, 2000).worst_margin <= 1e-9);
  }
}

TEST_CASE("p-laplacian") {
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  SUBCASE("r = 2 is the Dirichlet laplacian") {
    auto basis = std::make_shared<SineBasis>(3);
    const CoefficientSystem sys = assemble_p_laplacian(2.0, basis, lat);
    CounterRng rng(13);
    for (int trial = 0; trial < 16; ++trial) {
      const Eigen::VectorXd u = sample_ball(rng, 64 * trial, 3, 2.0);
      const Eigen::VectorXd f = sys.drift(0.0, u, Eigen::MatrixXd::Zero(3, 1));
      for (int j = 1; j <= 3; ++j)
        CHECK(f[j - 1] == doctest::Approx(-(j * kPi) * (j * kPi) * u[j - 1]).epsilon(1e-8));
    }
  }
  SUBCASE("r = 4 on the first mode integrates cos^4") {
    auto basis = std::make_shared<SineBasis>(1);
    const CoefficientSystem sys = assemble_p_laplacian(4.0, basis, lat);
    Eigen::VectorXd u(1);
    u << 1.0;
    const Eigen::VectorXd f = sys.drift(0.0, u, Eigen::MatrixXd::Zero(1, 1));
    CHECK(f[0] == doctest::Approx(-1.5 * std::pow(kPi, 4.0)).epsilon(1e-10));
  }
  SUBCASE("monotonicity margin is nonpositive") {
    auto basis = std::make_shared<SineBasis>(3);
    const CoefficientSystem sys = assemble_p_laplacian(4.0, basis, lat);
    const CoefficientSampler s(CounterRng(15), 3, 1, 0.5, 2.0);
    CHECK(check_monotonicity(sys, s, 2000).worst_margin <= 1e-9);
  }
}

TEST_CASE("form check to structural constants bridge") {
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  const GalerkinModel m = mixed_model(4);
  QuasilinearCoefficients coefs;
  coefs.a = m.a;
  coefs.sigma = m.sigma;
  coefs.b = m.b;
  coefs.c = m.c;
  coefs.varsigma_coef = m.varsigma_coef;
  REQUIRE(check_b2(coefs, m.b2, 0.5, CounterRng(17), 4000).worst_margin <= 1e-9);
  const CoefficientSystem sys = assemble_bdspde(m, lat);
  CHECK(sys.constants.delta < 1.0);
  CHECK(sys.constants.alpha > 0.0);
  const CoefficientSampler s(CounterRng(19), 4, 1, 0.5, 2.0);
  CHECK(check_monotonicity(sys, s, 4000).worst_margin <= 1e-9);
  CHECK(check_coercivity(sys, s, 4000).worst_margin <= 1e-9);
  CHECK(check_lipschitz(sys, s, 4000).worst_margin <= 1e-9);
}

TEST_CASE("under-resolved quadrature is rejected") {
  const ScenarioLattice lat = build_lattice(0.5, 2, 1, 1);
  GalerkinModel m = heat_model(8);
  // trapezoid sine products stay exact until i+j reaches 2*cells, so go low
  // enough to alias the top modes
  m.quad_cells = 4;
  CHECK_THROWS_AS(assemble_bdspde(m, lat), ConfigError);
}

TEST_CASE("refinement study differences decrease for smooth data") {
  const ScenarioLattice lat = build_lattice(0.25, 3, 1, 1);
  SolverConfig cfg;
  const std::vector<RefineRow> rows = refine_study(heat_model(2), {2, 4, 8}, lat, cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].difference > rows[1].difference);
  SUBCASE("first-mode data is captured exactly at every level") {
    GalerkinModel m = heat_model(2);
    m.terminal_profile = [](double x) { return std::sin(kPi * x); };
    const std::vector<RefineRow> exact_rows = refine_study(m, {1, 2, 4}, lat, cfg);
    for (const RefineRow& r : exact_rows) CHECK(r.difference <= 1e-18);
  }
}

TEST_CASE("registry models assemble through the front door") {
  const ScenarioLattice lat = build_lattice(0.5, 3, 1, 1);
  const BuiltModel heat =
      build_model({{"name", "heat"}, {"params", {{"n_basis", 3}}}}, lat);
  CHECK(heat.system.state_dim == 3);
  CHECK(heat.quasilinear != nullptr);
  const BuiltModel power = build_model(
      {{"name", "power_drift"}, {"params", {{"r", 4.0}, {"n_basis", 2}}}}, lat);
  CHECK(power.system.state_dim == 2);
  const DiscreteSolution sol = solve(power.system, lat, SolverConfig{});
  CHECK(sol.diagnostics.picard_iterations >= 2);
  CHECK(pathwise_step_residuals(power.system, lat, sol).recursion <= 1e-9);
}
