#include <doctest.h>

#include <cmath>

#include "bdsde/coefficients.hpp"
#include "bdsde/models.hpp"

using namespace bdsde;

namespace {

CoefficientSystem scalar_system(const std::function<double(double)>& f,
                                const std::function<double(double, double)>& j = {}) {
  CoefficientSystem sys;
  sys.state_dim = 1;
  sys.dw = 1;
  sys.db = 1;
  if (f)
    sys.F = [f](double, const Eigen::VectorXd& u, const Eigen::MatrixXd&,
                const ScenarioContext&) {
      Eigen::VectorXd out(1);
      out[0] = f(u[0]);
      return out;
    };
  if (j)
    sys.J = [j](double, const Eigen::VectorXd& u, const Eigen::MatrixXd& v,
                const ScenarioContext&) {
      Eigen::MatrixXd out(1, 1);
      out(0, 0) = j(u[0], v(0, 0));
      return out;
    };
  return sys;
}

CoefficientSampler sampler(int n = 1, int dw = 1, double radius = 2.0) {
  return CoefficientSampler(CounterRng(42), n, dw, 1.0, radius);
}

}  // namespace

TEST_CASE("monotonicity checker") {
  SUBCASE("odd cube is monotone decreasing") {
    CoefficientSystem sys = scalar_system([](double u) { return -u * u * u; });
    sys.constants.K1 = 0.0;
    sys.constants.delta = 0.5;
    const CheckReport rep = check_monotonicity(sys, sampler(), 2000);
    CHECK(rep.worst_margin <= 1e-9);
    CHECK_FALSE(rep.violation());
  }
  SUBCASE("positive cube is flagged with a witness") {
    CoefficientSystem sys = scalar_system([](double u) { return u * u * u; });
    const CheckReport rep = check_monotonicity(sys, sampler(), 2000);
    CHECK(rep.worst_margin >= 1.0);
    CHECK(rep.violation());
    CHECK(rep.witness.contains("u1"));
  }
  SUBCASE("zero system margin is the negative quadratic") {
    CoefficientSystem sys = scalar_system({});
    sys.constants.K1 = 0.25;
    sys.constants.delta = 0.5;
    const CheckReport rep = check_monotonicity(sys, sampler(), 500);
    CHECK(rep.worst_margin <= 0.0);
  }
}

TEST_CASE("coercivity checker") {
  SUBCASE("linear decay passes with alpha 1, q 2") {
    CoefficientSystem sys = scalar_system([](double u) { return -u; });
    sys.constants.alpha = 1.0;
    sys.constants.q = 2.0;
    sys.constants.K = 0.0;
    sys.constants.delta = 0.5;
    const CheckReport rep = check_coercivity(sys, sampler(), 2000);
    CHECK(rep.worst_margin <= 1e-9);
  }
  SUBCASE("diffusion fed by phi violates with small delta") {
    CoefficientSystem sys = scalar_system({}, [](double, double z) { return z; });
    sys.constants.delta = 0.5;
    sys.constants.alpha = 1e-9;
    sys.constants.K = 0.0;
    const CheckReport rep = check_coercivity(sys, sampler(), 2000);
    CHECK(rep.worst_margin > 1e-9);  // |phi|^2 - delta |phi|^2 > 0 at phi != 0
  }
  SUBCASE("all-zero system with varsigma 1 reports -1") {
    CoefficientSystem sys = scalar_system({});
    sys.varsigma = [](double) { return 1.0; };
    sys.constants.alpha = 1e-12;
    sys.constants.K = 0.0;
    const CheckReport rep = check_coercivity(sys, sampler(), 500);
    CHECK(rep.worst_margin == doctest::Approx(-1.0).epsilon(1e-3));
  }
}

TEST_CASE("growth checker") {
  SUBCASE("zero system passes") {
    CoefficientSystem sys = scalar_system({});
    sys.constants.K = 1.0;
    const CheckReport rep = check_growth(sys, sampler(), 500);
    CHECK(rep.worst_margin <= 0.0);
  }
  SUBCASE("linear drift with unit constants passes") {
    CoefficientSystem sys = scalar_system([](double u) { return -u; });
    sys.constants.K = 1.0;
    sys.constants.q = 2.0;
    sys.constants.beta = 0.0;
    const CheckReport rep = check_growth(sys, sampler(), 2000);
    CHECK(rep.worst_margin <= 1e-9);
  }
  SUBCASE("J = 2 phi with K = 1 is flagged") {
    CoefficientSystem sys = scalar_system({}, [](double, double z) { return 2.0 * z; });
    sys.constants.K = 1.0;
    const CheckReport rep = check_growth(sys, sampler(), 2000);
    CHECK(rep.worst_margin > 1e-9);
  }
}

TEST_CASE("Lipschitz checker") {
  SUBCASE("phi-independent drift passes") {
    CoefficientSystem sys = scalar_system([](double u) { return -u; });
    sys.constants.K = 1.0;
    const CheckReport rep = check_lipschitz(sys, sampler(), 1000);
    CHECK(rep.worst_margin <= 1e-9);
  }
  SUBCASE("quadratic diffusion in u is flagged") {
    CoefficientSystem sys = scalar_system({}, [](double u, double) { return u * u; });
    sys.constants.K = 1.0;
    const CheckReport rep = check_lipschitz(sys, sampler(1, 1, 4.0), 2000);
    CHECK(rep.worst_margin > 1e-9);
  }
}

TEST_CASE("operator bound checker") {
  SUBCASE("J = phi saturates the bound") {
    CoefficientSystem sys = scalar_system({}, [](double, double z) { return z; });
    sys.constants.K = 0.0;
    sys.constants.alpha1 = 0.0;
    const CheckReport rep = check_a6(sys, sampler(), 1000);
    CHECK(rep.worst_margin <= 1e-9);
  }
  SUBCASE("J = 2 phi with no slack is flagged") {
    CoefficientSystem sys = scalar_system({}, [](double, double z) { return 2.0 * z; });
    sys.constants.K = 0.0;
    sys.constants.alpha1 = 0.0;
    const CheckReport rep = check_a6(sys, sampler(), 1000);
    CHECK(rep.worst_margin > 1e-9);
  }
}

TEST_CASE("hemicontinuity spot check distinguishes a jump") {
  CoefficientSystem cont = scalar_system([](double u) { return -u * u * u; });
  CHECK(check_hemicontinuity(cont, sampler(), 50).worst_margin <= 1e-9);
  CoefficientSystem jumpy = scalar_system([](double u) { return u >= 0.0 ? 1.0 : -1.0; });
  CHECK(check_hemicontinuity(jumpy, sampler(), 50).worst_margin > 0.1);
}

TEST_CASE("two-sided form check") {
  QuasilinearCoefficients coefs;
  coefs.a = [](double, double) { return 1.0; };
  coefs.b = [](double, double) { return 0.0; };
  coefs.c = [](double, double) { return 0.0; };
  SUBCASE("sigma = 0 passes with lambda = Lambda = 2") {
    QuasilinearConstants k;
    k.lambda = 2.0;
    k.Lambda = 2.0;
    k.rho = 2.0;
    k.rho_prime = 4.0;
    k.delta = 0.25;
    const CheckReport rep = check_b2(coefs, k, 1.0, CounterRng(1), 2000);
    CHECK(rep.worst_margin <= 1e-9);
  }
  SUBCASE("sigma = 1, rho = 2 degenerates the form") {
    QuasilinearCoefficients bad = coefs;
    bad.sigma.push_back([](double, double) { return 1.0; });
    QuasilinearConstants k;
    k.lambda = 0.5;
    k.Lambda = 2.0;
    k.rho = 2.0;
    k.rho_prime = 4.0;
    k.delta = 0.25;
    const CheckReport rep = check_b2(bad, k, 1.0, CounterRng(1), 2000);
    CHECK(rep.worst_margin > 1e-9);  // form is 0, lambda |xi|^2 > 0
  }
  SUBCASE("scalar gap arithmetic") {
    QuasilinearConstants k;
    k.lambda = 1.0;
    k.kappa = 0.2;
    k.rho_prime = 4.0;
    k.beta = 0.1;
    k.alpha = 0.3;
    k.rho = 2.0;
    k.delta = 1.0 - 1.0 / k.rho - 1.0 / k.rho_prime;
    CHECK(k.gap() == doctest::Approx(0.1));
    QuasilinearConstants bad = k;
    bad.delta = 0.9;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("checker margins are monotone in trials") {
  CoefficientSystem sys = scalar_system([](double u) { return u * u * u; });
  const CoefficientSampler s = sampler();
  double prev = -1e300;
  for (int trials : {100, 500, 2000}) {
    const double m = check_monotonicity(sys, s, trials).worst_margin;
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("exponential rescaling") {
  SUBCASE("K1 = 0 is the identity") {
    CoefficientSystem sys = scalar_system([](double u) { return -u; });
    sys.constants.K1 = 0.0;
    const CoefficientSystem r = exponential_rescale(sys, 1.0);
    Eigen::VectorXd u(1);
    u << 1.7;
    const Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 1);
    CHECK(r.drift(0.3, u, v)[0] == doctest::Approx(sys.drift(0.3, u, v)[0]));
  }
  SUBCASE("linear drift with K1 = 2 becomes -2u") {
    CoefficientSystem sys = scalar_system([](double u) { return -u; });
    sys.constants.K1 = 2.0;
    const CoefficientSystem r = exponential_rescale(sys, 1.0);
    Eigen::VectorXd u(1);
    u << 3.0;
    const Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 1);
    for (double t : {0.0, 0.35, 1.0})
      CHECK(r.drift(t, u, v)[0] == doctest::Approx(-2.0 * u[0]).epsilon(1e-12));
    CHECK(r.constants.K1 == 0.0);
  }
  SUBCASE("terminal scaling") {
    const ScenarioLattice lat = build_lattice(1.0, 2, 1, 1);
    CoefficientSystem sys = scalar_system([](double u) { return -u; });
    sys.constants.K1 = 2.0;
    sys.terminal = make_terminal(lat, 1, [](std::uint64_t) {
      return Eigen::VectorXd::Constant(1, 1.0);
    });
    const CoefficientSystem r = exponential_rescale(sys, 1.0);
    CHECK(r.terminal.vec(0, 0)[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
  }
  SUBCASE("rescale then unrescale is the identity on samples") {
    const ScenarioLattice lat = build_lattice(1.0, 2, 1, 1);
    CoefficientSystem sys =
        scalar_system([](double u) { return -u * u * u; },
                      [](double u, double z) { return 0.5 * u + 0.25 * z; });
    sys.constants.K1 = 1.5;
    sys.terminal = make_terminal(lat, 1, [](std::uint64_t w) {
      return Eigen::VectorXd::Constant(1, 0.25 * static_cast<double>(w));
    });
    const CoefficientSystem fwd = exponential_rescale(sys, 1.0);
    const CoefficientSystem back = exponential_rescale_rate(fwd, 1.0, -1.5);
    CounterRng rng(9);
    for (int k = 0; k < 64; ++k) {
      Eigen::VectorXd u(1);
      u << 2.0 * rng.symmetric(3 * k);
      Eigen::MatrixXd v(1, 1);
      v << 2.0 * rng.symmetric(3 * k + 1);
      const double t = rng.uniform(3 * k + 2);
      CHECK(back.drift(t, u, v)[0] == doctest::Approx(sys.drift(t, u, v)[0]).epsilon(1e-12));
      CHECK(back.diffusion(t, u, v)(0, 0) ==
            doctest::Approx(sys.diffusion(t, u, v)(0, 0)).epsilon(1e-12));
    }
    CHECK(max_entry_distance(back.terminal, sys.terminal) <= 1e-12);
  }
}

TEST_CASE("compliant J difference obeys the delta bound") {
  // Consequence of passing A2 with F = -u^3, J = sqrt(delta') z coupling.
  CoefficientSystem sys =
      scalar_system([](double u) { return -u * u * u; },
                    [](double, double z) { return 0.5 * z; });
  sys.constants.delta = 0.5;
  sys.constants.K1 = 0.0;
  REQUIRE(check_monotonicity(sys, sampler(), 2000).worst_margin <= 1e-9);
  // Sampled Remark-style consequence: |J(phi1)-J(phi2)|^2 <= delta |dphi|^2.
  const CoefficientSampler s = sampler();
  double worst = -1e300;
  for (int k = 0; k < 2000; ++k) {
    const auto d = s.draw(k);
    const Eigen::MatrixXd j1 = sys.diffusion(d.t, d.u1, d.phi1);
    const Eigen::MatrixXd j2 = sys.diffusion(d.t, d.u1, d.phi2);
    worst = std::max(worst, (j1 - j2).squaredNorm() -
                                sys.constants.delta * (d.phi1 - d.phi2).squaredNorm());
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("report serialization shape") {
  CoefficientSystem sys = scalar_system([](double u) { return -u; });
  const CheckReport rep = check_monotonicity(sys, sampler(), 100);
  const nlohmann::json j = rep.to_json();
  CHECK(j.contains("assumption"));
  CHECK(j.contains("trials"));
  CHECK(j.contains("worst_margin"));
  CHECK(j.contains("witness"));
  CHECK(j.contains("seed"));
  CHECK(j["trials"] == 100);
}
