#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bdsde/lattice.hpp"
#include "bdsde/rng.hpp"

namespace bdsde {

/// Structural constants of a coefficient tuple (monotonicity, coercivity,
/// growth, Lipschitz and operator-bound constants).
struct StructuralConstants {
  double K = 0.0;
  double K1 = 0.0;
  double delta = 0.5;   // in (0,1)
  double alpha = 1.0;   // > 0
  double alpha1 = 0.0;  // >= 0
  double beta = 0.0;    // >= 0
  double q = 2.0;       // > 1
  double p = 2.0;       // >= 2

  void validate() const;
  /// p >= beta+2 and alpha1*(p-2) < alpha (the main-theorem hypothesis set).
  bool main_estimate_applicable() const;
};

/// Scenario coordinates handed to coefficient closures so user-supplied
/// random coefficients can be lattice-adapted fields. Built-in models
/// ignore it.
struct ScenarioContext {
  int level = -1;
  std::uint64_t w_index = 0;
  std::uint64_t b_index = 0;
};

using DriftFn = std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& u,
                                              const Eigen::MatrixXd& v, const ScenarioContext&)>;
using DiffusionFn = std::function<Eigen::MatrixXd(double t, const Eigen::VectorXd& u,
                                                  const Eigen::MatrixXd& v, const ScenarioContext&)>;

/// The three norms of the Gelfand triple realized on coordinate vectors,
/// with the continuous-embedding constants |x| <= c |x|_V, |x|_* <= c' |x|.
struct NormProvider {
  std::function<double(const Eigen::VectorXd&)> h;
  std::function<double(const Eigen::VectorXd&)> v;
  std::function<double(const Eigen::VectorXd&)> dual;
  double embed_h_in_v = 1.0;
  double embed_dual_in_h = 1.0;

  static NormProvider euclidean();
};

/// The data tuple (F, J, G, varsigma) of one system plus its constants.
/// F maps into V' coordinates; J is n x db; varsigma is the deterministic
/// dominating function of the coercivity/growth bounds.
struct CoefficientSystem {
  int state_dim = 1;
  int dw = 1;
  int db = 1;
  DriftFn F;
  DiffusionFn J;
  AdaptedField terminal;
  std::function<double(double)> varsigma;
  StructuralConstants constants;
  NormProvider norms = NormProvider::euclidean();

  Eigen::VectorXd drift(double t, const Eigen::VectorXd& u, const Eigen::MatrixXd& v,
                        const ScenarioContext& ctx = {}) const;
  Eigen::MatrixXd diffusion(double t, const Eigen::VectorXd& u, const Eigen::MatrixXd& v,
                            const ScenarioContext& ctx = {}) const;
  double varsigma_at(double t) const { return varsigma ? varsigma(t) : 0.0; }
};

/// Margins above this are treated as genuine violations rather than
/// floating-point noise.
inline constexpr double kViolationThreshold = 1e-9;

struct CheckReport {
  std::string assumption;
  int trials = 0;
  double worst_margin = -std::numeric_limits<double>::infinity();
  nlohmann::json witness;
  std::uint64_t seed = 0;

  bool violation() const { return worst_margin > kViolationThreshold; }
  nlohmann::json to_json() const;
};

/// Randomized falsification sampler: uniform on balls of configurable radius
/// in (u, v-argument, test vector), with axis-aligned extreme points mixed in
/// every `axis_stride` trials. Owns its generator; trials are counter-indexed.
class CoefficientSampler {
public:
  CoefficientSampler(CounterRng rng, int state_dim, int dw, double horizon, double radius = 2.0,
                     int axis_stride = 8);

  struct Draw {
    double t;
    Eigen::VectorXd u1, u2, x;
    Eigen::MatrixXd phi1, phi2;
  };
  Draw draw(std::uint64_t trial) const;

  int state_dim() const { return n_; }
  int dw() const { return dw_; }
  std::uint64_t seed() const { return rng_.key(); }

private:
  Eigen::VectorXd vec_draw(std::uint64_t trial, int slot) const;

  CounterRng rng_;
  int n_, dw_;
  double horizon_, radius_;
  int axis_stride_;
};

CheckReport check_monotonicity(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                               int trials);
CheckReport check_coercivity(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                             int trials);
CheckReport check_growth(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                         int trials);
CheckReport check_lipschitz(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                            int trials);
CheckReport check_a6(const CoefficientSystem& sys, const CoefficientSampler& sampler, int trials);

/// Continuity spot-check along lines s -> <F(t, u1 + s u2, phi), u>; a probe,
/// not a proof: a genuine jump keeps the fine-grid increment comparable to
/// the coarse one while continuity shrinks it.
CheckReport check_hemicontinuity(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                                 int trials);

/// Ellipticity/boundedness/gap constants of the quasi-linear model.
struct QuasilinearConstants {
  double lambda = 1.0;
  double Lambda = 2.0;
  double rho = 4.0;        // 1/rho + 1/rho_prime + delta = 1
  double rho_prime = 4.0;
  double delta = 0.5;
  double kappa = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  double L = 0.0;

  double gap() const { return lambda - kappa - rho_prime * beta - alpha; }
  void validate() const;  // throws ConfigError when 1/rho+1/rho'+delta != 1
};

/// Spatial coefficient pack for the two-sided form check.
struct QuasilinearCoefficients {
  std::function<double(double, double)> a;
  std::vector<std::function<double(double, double)>> sigma;
  std::function<double(double, double)> b;
  std::function<double(double, double)> c;
  std::vector<std::function<double(double, double)>> varsigma_coef;
};

CheckReport check_b2(const QuasilinearCoefficients& coefs, const QuasilinearConstants& constants,
                     double horizon, const CounterRng& rng, int trials);

/// Reduce the monotonicity constant to K1 = 0 by the exponential rescaling
/// u -> e^{t K1/2} u; solving the returned system and scaling back by
/// e^{-t K1/2} reproduces the original solution.
CoefficientSystem exponential_rescale(const CoefficientSystem& sys, double horizon);

/// Same rescaling with an explicit signed rate (rate = -K1 undoes it).
CoefficientSystem exponential_rescale_rate(const CoefficientSystem& sys, double horizon,
                                           double rate);

}  // namespace bdsde
