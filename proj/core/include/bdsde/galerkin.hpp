#pragma once

#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "bdsde/coefficients.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

/// Quadrature rule on [0,1].
struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;

  static Quadrature trapezoid(int cells);
  static Quadrature gauss_legendre(int points);

  double integrate(const std::function<double(double)>& fn) const;
  int size() const { return static_cast<int>(nodes.size()); }
};

inline constexpr double kQuadTol = 1e-8;

/// Dirichlet sine basis e_j(x) = sqrt(2) sin(j pi x) on (0,1) with node
/// tables for fast assembly. The discrete Gram matrix is the identity and
/// the stiffness diagonal is (j pi)^2 within kQuadTol for the default rule.
class SineBasis {
public:
  explicit SineBasis(int n, Quadrature quad = {});

  int size() const { return n_; }
  const Quadrature& quadrature() const { return quad_; }
  const Eigen::MatrixXd& values() const { return values_; }    // M x n
  const Eigen::MatrixXd& dvalues() const { return dvalues_; }  // M x n

  double gram_deviation() const;
  double stiffness_deviation() const;

  /// Coordinates of fn against the basis: c_j = integral fn * e_j.
  Eigen::VectorXd project(const std::function<double(double)>& fn) const;

  /// Node values of the represented function Sum c_j e_j.
  Eigen::VectorXd eval(const Eigen::VectorXd& coords) const { return values_ * coords; }
  Eigen::VectorXd eval_deriv(const Eigen::VectorXd& coords) const { return dvalues_ * coords; }

  double eigenvalue(int j) const;  // (j pi)^2, 1-based mode index

private:
  int n_;
  Quadrature quad_;
  Eigen::MatrixXd values_, dvalues_;
};

using SpaceTimeFn = std::function<double(double t, double x)>;
/// Nonlinearity of (t, x, value, gradient, v-row).
using NonlinearFn =
    std::function<double(double t, double x, double theta, double grad, const Eigen::VectorXd& z)>;

/// The quasi-linear model on (0,1) with Dirichlet boundary: coefficient
/// functions, nonlinearities, ellipticity constants, and a terminal profile.
struct GalerkinModel {
  int basis_size = 4;
  int dw = 1;
  int db = 1;
  SpaceTimeFn a;                            // second-order coefficient
  std::vector<SpaceTimeFn> sigma;           // v-coupling inside the divergence, size dw
  SpaceTimeFn b;                            // transport
  SpaceTimeFn c;                            // reaction
  std::vector<SpaceTimeFn> varsigma_coef;   // bulk v-coupling, size dw
  NonlinearFn f;                            // divergence-form nonlinearity
  NonlinearFn g;                            // bulk nonlinearity
  std::vector<NonlinearFn> h;               // B-diffusion rows, size db
  QuasilinearConstants b2;
  std::function<double(double)> terminal_profile;
  int quad_cells = 0;  // 0 -> max(64, 8n)
};

/// Candidate structural constants derived from the (B1)-(B2) constants by
/// explicit Young splittings; validated empirically by the checkers.
StructuralConstants derive_constants(const QuasilinearConstants& k, double sup_a, double sup_sigma2,
                                     double sup_b, double sup_c, double sup_varsigma);

/// Compile the quasi-linear model into coordinates: drift by weak-form
/// quadrature (divergence terms integrated by parts), diffusion rows
/// projected onto the basis, Sobolev norms realized as diagonal weights.
CoefficientSystem assemble_bdspde(const GalerkinModel& model, const ScenarioLattice& lat,
                                  bool waive_b2 = false);

/// Monotone drift F(u) = -u|u|^{r-2} in coordinates, with the L^r-style
/// V-norm realized by quadrature.
CoefficientSystem assemble_power_drift(double r, const std::shared_ptr<SineBasis>& basis,
                                       const ScenarioLattice& lat);

/// Monotone drift F(u) = div(|u'|^{r-2} u') in weak form, with the
/// W^{1,r}-style V-norm realized by quadrature.
CoefficientSystem assemble_p_laplacian(double r, const std::shared_ptr<SineBasis>& basis,
                                       const ScenarioLattice& lat);

struct RefineRow {
  int n_coarse = 0;
  int n_fine = 0;
  double difference = 0.0;  // E|u0_coarse - u0_fine|^2 after zero-padding
};

/// Cauchy differences of successive basis refinements at t = 0.
std::vector<RefineRow> refine_study(const GalerkinModel& model, const std::vector<int>& n_list,
                                    const ScenarioLattice& lat, const SolverConfig& cfg);

}  // namespace bdsde
