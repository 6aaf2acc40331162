#pragma once

#include <array>
#include <functional>
#include <optional>

#include <Eigen/Dense>

#include "bdsde/errors.hpp"
#include "bdsde/rng.hpp"

namespace bdsde {

/// Drift frozen at one (t, v-context): a continuous monotone map on R^n.
using FrozenDrift = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct ResolventConfig {
  double eps = 1e-2;  ///< regularization / implicit step size
  double tol = 1e-12;
  int max_iter = 200;
  enum class Method { newton_damped, scalar_bracketing } method = Method::newton_damped;
  /// Lipschitz estimate enabling the preconditioned fixed-point fallback.
  std::optional<double> lipschitz_hint;
  /// Receives non-monotonicity diagnostics; may be empty.
  std::function<void(const std::string&)> on_warning;
};

/// Solve y - eps*f(y) = x. For a monotone non-increasing f the equation has
/// a unique solution and equals one implicit-Euler step of size eps.
Eigen::VectorXd resolve(const FrozenDrift& f, const ResolventConfig& cfg, const Eigen::VectorXd& x);

struct YosidaValue {
  Eigen::VectorXd value;  ///< (resolve(x) - x)/eps
  double discrepancy;     ///< |value - f(resolve(x))|, reported, <= tol/eps
};

/// The Lipschitz regularization of f at scale eps, computed both ways.
YosidaValue yosida_apply(const FrozenDrift& f, const ResolventConfig& cfg,
                         const Eigen::VectorXd& x);

struct YosidaPropertyReport {
  /// max over pairs of |Df_eps| - (2/eps)|Dx|
  double lipschitz_margin = 0.0;
  /// max over points of |f_eps(x)| - |f(x)|
  double bound_margin = 0.0;
  /// max over pairs of <Df_eps, Dx>
  double monotone_margin = 0.0;
  /// eps values of the approximation sweep, largest first
  std::array<double, 3> approx_eps{1e-2, 1e-3, 1e-4};
  /// max over points of |f_eps(x) - f(x)| per eps
  std::array<double, 3> approx_sup{0, 0, 0};
  bool approx_decreasing = false;
  int trials = 0;
};

/// Sampled falsification of the four regularization properties:
/// (2/eps)-Lipschitz bound, norm domination by f, monotonicity, and
/// pointwise convergence as eps decreases.
YosidaPropertyReport verify_yosida_properties(const FrozenDrift& f, const ResolventConfig& cfg,
                                              const CounterRng& rng, int dim, double radius,
                                              int trials);

}  // namespace bdsde
