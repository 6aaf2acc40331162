#pragma once

#include <vector>

#include "bdsde/coefficients.hpp"
#include "bdsde/lattice.hpp"
#include "bdsde/resolvent.hpp"

namespace bdsde {

struct SolverConfig {
  double picard_tol = 1e-10;  ///< max-level table-L2 change of (u, v)
  int picard_max = 200;
  ResolventConfig resolvent;  ///< eps is overridden to dt by solve()
  bool record_iterates = true;
  int threads = 1;
};

struct SolverDiagnostics {
  int picard_iterations = 0;
  std::vector<double> delta_u;  ///< per outer iteration, from the second sweep
  std::vector<double> delta_v;  ///< per outer iteration, from the first sweep
  double resolvent_residual_max = 0.0;
  double representation_residual_max = 0.0;
};

/// Solved pair (u, v): u per level 0..N, v per level 0..N-1 (value_dim n*dw).
/// v_frozen is the outer iterate the final backward sweep actually used for
/// the v-arguments of F and J; post-processing that reconstructs the scheme's
/// one-step algebra exactly must use it.
struct DiscreteSolution {
  std::vector<AdaptedField> u;
  std::vector<AdaptedField> v;
  std::vector<AdaptedField> v_frozen;
  SolverDiagnostics diagnostics;
};

/// Backward solve on the lattice: implicit (resolvent) stepping in the drift,
/// explicit right-endpoint evaluation of the B-diffusion, outer Picard
/// iteration on the v-argument starting from v = 0 (or v_init).
///
/// A system with K1 > 0 is rescaled internally to the K1 = 0 case and the
/// output is scaled back.
DiscreteSolution solve(const CoefficientSystem& sys, const ScenarioLattice& lat,
                       const SolverConfig& cfg,
                       const std::vector<AdaptedField>* v_init = nullptr);

struct SweepResult {
  std::vector<AdaptedField> u;
  std::vector<AdaptedField> v;
  double resolvent_residual_max = 0.0;
  double representation_residual_max = 0.0;
};

/// One outer iteration with the v-arguments frozen at v_prev. Exposed for
/// diagnostics; solve() iterates this to a fixed point.
SweepResult picard_step(const CoefficientSystem& sys, const ScenarioLattice& lat,
                        const SolverConfig& cfg, const std::vector<AdaptedField>& v_prev);

struct ContractionDiagnostics {
  std::vector<double> ratios;  ///< delta_v[k+1] / delta_v[k]
  double fitted_ratio = 0.0;   ///< exp(least-squares slope of log deltas)
  bool contraction = false;    ///< fitted_ratio < 1
  bool sufficient = false;     ///< at least 3 outer iterations recorded
};

ContractionDiagnostics contraction_diagnostics(const DiscreteSolution& sol);

/// Independent direct path for F(u) = a.u, J == j0: backward conditional
/// expectations and one dense linear solve per step, no Picard, no resolvent.
DiscreteSolution solve_linear_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& j0,
                                     const AdaptedField& terminal, const ScenarioLattice& lat);

struct StepResiduals {
  /// max over levels and entries of |u_i - u_{i+1} - F dt - J dB + v dW|;
  /// equals the representation residual only (0 up to solver tol when dw=1).
  double recursion = 0.0;
  /// same quantity with the representation residual added back; bounded by
  /// the resolvent tolerance for every dw.
  double consistency = 0.0;
};

/// Recompute the pathwise one-step residuals of a solution from its stored
/// fields (J evaluated with v_frozen, exactly as the final sweep did).
StepResiduals pathwise_step_residuals(const CoefficientSystem& sys, const ScenarioLattice& lat,
                                      const DiscreteSolution& sol);

}  // namespace bdsde
