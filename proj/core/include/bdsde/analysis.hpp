#pragma once

#include <functional>
#include <optional>
#include <tuple>
#include <vector>

#include "bdsde/coefficients.hpp"
#include "bdsde/lattice.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

struct EnergyReport {
  /// |E|u_i|^2 - E[RHS_i]| of the squared-norm identity, per level, with the
  /// discrete quadratures (left-point ds, right-point dB, left-point dW).
  std::vector<double> expectation_residual;
  /// Exact discrete balance: max over steps and transition entries of the
  /// telescoped-square residual of the scheme's own recursion. Vanishes to
  /// solver tolerance when dw == 1.
  double exact_balance_residual = 0.0;
  /// Pathwise residual of the discretized-continuous identity at t = 0,
  /// enumerated over full scenarios (reported, O(sqrt(dt)); only computed
  /// when the path table fits the cap).
  double pathwise_t0_residual = 0.0;
  bool pathwise_checked = false;

  double max_expectation_residual() const;
};

EnergyReport energy_identity_residual(const DiscreteSolution& sol, const CoefficientSystem& sys,
                                      const ScenarioLattice& lat);

struct AprioriReport {
  double s_p = 0.0;      ///< (E[max-level |u|^p])^{1/p}
  double m_pq2_q = 0.0;  ///< (E[(int |u|_V^q dt)^{p/2}])^{2/(pq)}
  double m_p2 = 0.0;     ///< (E[(int |v|_1^2 dt)^{p/2}])^{1/p}
  double rhs_base = 0.0; ///< |G|_{L^p} + |varsigma|^{1/2}
  double lhs = 0.0;      ///< s_p + m_pq2_q^{q/2} + m_p2
  double ratio = 0.0;    ///< lhs / rhs_base; meaningless when !ratio_defined
  bool ratio_defined = false;
};

/// Discrete left-hand norms of the main a priori estimate and the reported
/// (never asserted) ratio against |G|_{L^p} + |varsigma|^{1/2}.
AprioriReport apriori_monitor(const DiscreteSolution& sol, const CoefficientSystem& sys,
                              const ScenarioLattice& lat);

/// Frozen regression constant of the stability tolerance tol(N) = C * dt,
/// calibrated once on the linear family with seed 0.
inline constexpr double kStabilityTolCoeff = 1.0;

struct StabilityReport {
  std::vector<double> lhs_curve;  ///< e^{K1 t_i} E|du_i|^2 + (1-delta) tail sum
  double rhs = 0.0;               ///< e^{K1 T} E|dG|^2
  double tol = 0.0;               ///< kStabilityTolCoeff * dt
  double margin = 0.0;            ///< max(lhs) - rhs - tol
};

/// Two-terminal stability gap of the uniqueness computation: solves the same
/// system for G and G' and checks the exponential-weighted energy inequality.
StabilityReport stability_gap(const CoefficientSystem& sys, const ScenarioLattice& lat,
                              const SolverConfig& cfg, const AdaptedField& terminal_a,
                              const AdaptedField& terminal_b);

/// Exact reference for one study size: either the exact field value at t=0
/// (same lattice) or a target for sqrt(E|u_0|^2) from a closed-form limit.
struct StudyOracle {
  std::optional<Eigen::VectorXd> u0_value;
  std::optional<double> l2_target;
};

using StudyFactory =
    std::function<std::tuple<ScenarioLattice, CoefficientSystem, StudyOracle>(int steps)>;

struct StudyRow {
  int steps = 0;
  double dt = 0.0;
  double error = 0.0;
  double order_increment = 0.0;
};

struct StudyReport {
  std::vector<StudyRow> rows;
  double fitted_order = 0.0;  ///< -slope of log error against log N
  bool saturated = false;     ///< all errors at rounding level; order not meaningful
};

StudyReport convergence_study(const StudyFactory& factory, const std::vector<int>& n_list,
                              const SolverConfig& cfg);

/// Least-squares order fit of (N, err) pairs; err <= 1e-12 everywhere flags
/// saturation instead of a fit.
StudyReport fit_order(const std::vector<std::pair<int, double>>& points);

using EnergyStudyFactory =
    std::function<std::pair<ScenarioLattice, CoefficientSystem>(int steps)>;

/// Max expectation-form energy residual per lattice size.
std::vector<StudyRow> energy_decay_study(const EnergyStudyFactory& factory,
                                         const std::vector<int>& n_list, const SolverConfig& cfg);

}  // namespace bdsde
