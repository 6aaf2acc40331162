#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdsde/coefficients.hpp"
#include "bdsde/galerkin.hpp"

namespace bdsde {

/// A compiled built-in model: the system plus the checks that apply to it.
struct BuiltModel {
  CoefficientSystem system;
  std::vector<std::string> default_checks;
  /// Present for the quasi-linear models; carries the form-level data the
  /// B2 check needs.
  std::shared_ptr<GalerkinModel> quasilinear;
};

/// Registry entry points. Model block shape: {"name": ..., "params": {...}}.
/// Names: martingale | linear | cubic | cubic_bad | power_drift | p_laplacian
/// | heat | bdspde.
BuiltModel build_model(const nlohmann::json& model_block, const ScenarioLattice& lat);

/// Coefficient registry: "constant:c" | "affine:p,q" (p + q x) |
/// "tlinear:p,q" (p + q t) | "sinx:amp,k" | "zero".
SpaceTimeFn parse_space_time(const std::string& spec);

/// Nonlinearity registry: "zero" | "linear:c_theta,c_grad,c_z" |
/// "tanh:amp,scale" (amp tanh(scale theta)).
NonlinearFn parse_nonlinearity(const std::string& spec);

/// Terminal registry: "constant:g0" | "wiener" | "tanh_wiener:scale" |
/// "profile:parabola" | "profile:sine:k" (profiles project onto the basis
/// and need state_dim from a Galerkin system).
AdaptedField build_terminal(const nlohmann::json& spec, const ScenarioLattice& lat, int state_dim,
                            const std::shared_ptr<SineBasis>& basis = nullptr);

}  // namespace bdsde
