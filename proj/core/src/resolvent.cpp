#include "bdsde/resolvent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace bdsde {

namespace {

/// g(y) = y - eps*f(y) - x; strongly monotone with <Dg, Dy> >= |Dy|^2 when f
/// is monotone non-increasing.
struct RootProblem {
  const FrozenDrift& f;
  double eps;
  const Eigen::VectorXd& x;

  Eigen::VectorXd g(const Eigen::VectorXd& y) const { return y - eps * f(y) - x; }
};

/// Forward-difference Jacobian of f with step sqrt(machine eps)*(1+|y|).
Eigen::MatrixXd numeric_jacobian(const FrozenDrift& f, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& fy) {
  const int n = static_cast<int>(y.size());
  const double h = std::sqrt(std::numeric_limits<double>::epsilon()) * (1.0 + y.norm());
  Eigen::MatrixXd jac(n, n);
  Eigen::VectorXd yp = y;
  for (int j = 0; j < n; ++j) {
    yp[j] += h;
    jac.col(j) = (f(yp) - fy) / h;
    yp[j] = y[j];
  }
  return jac;
}

Eigen::VectorXd solve_scalar_bracketing(const RootProblem& prob, const ResolventConfig& cfg) {
  // 1-D safeguarded Newton: bracket a sign change, bisect when the Newton
  // step leaves the bracket or stalls.
  double y = prob.x[0];
  Eigen::VectorXd yv(1);
  auto gval = [&](double t) {
    yv[0] = t;
    return prob.g(yv)[0];
  };
  double g0 = gval(y);
  if (std::abs(g0) <= cfg.tol) return yv;
  double step = std::max(1.0, std::abs(y));
  double lo = y, hi = y, glo = g0, ghi = g0;
  for (int k = 0; k < 128 && glo * ghi > 0; ++k) {
    lo -= step;
    hi += step;
    glo = gval(lo);
    ghi = gval(hi);
    step *= 2.0;
  }
  if (glo * ghi > 0) throw SolverError("resolvent: failed to bracket a root", std::abs(g0));
  double gy = gval(y);
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (std::abs(gy) <= cfg.tol) return yv;
    if (gy > 0) {
      hi = y;
      ghi = gy;
    } else {
      lo = y;
      glo = gy;
    }
    const double h = 1e-8 * (1.0 + std::abs(y));
    const double dg = (gval(y + h) - gy) / h;
    double ynext = dg != 0.0 ? y - gy / dg : 0.5 * (lo + hi);
    if (!(ynext > lo && ynext < hi)) ynext = 0.5 * (lo + hi);
    y = ynext;
    gy = gval(y);
  }
  if (std::abs(gy) <= cfg.tol) return yv;
  throw SolverError("resolvent: scalar solve exceeded max_iter", std::abs(gy));
}

Eigen::VectorXd solve_newton(const RootProblem& prob, const ResolventConfig& cfg) {
  Eigen::VectorXd y = prob.x;
  Eigen::VectorXd gy = prob.g(y);
  double res = gy.norm();
  bool warned = false;
  for (int it = 0; it < cfg.max_iter; ++it) {
    if (res <= cfg.tol) return y;
    const Eigen::VectorXd fy = prob.f(y);
    const Eigen::MatrixXd jf = numeric_jacobian(prob.f, y, fy);
    if (!warned && cfg.on_warning) {
      // Symmetric part of eps*f' with max eigenvalue above 1 means the
      // implicit equation lost its monotone structure at this point.
      const Eigen::MatrixXd sym = 0.5 * prob.eps * (jf + jf.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().maxCoeff() > 1.0) {
        cfg.on_warning("resolvent: detected non-monotone drift (eps*F' symmetric part > 1)");
        warned = true;
      }
    }
    Eigen::MatrixXd jg = Eigen::MatrixXd::Identity(y.size(), y.size()) - prob.eps * jf;
    const Eigen::VectorXd dir = jg.fullPivLu().solve(-gy);
    double lambda = 1.0;
    bool accepted = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd cand = y + lambda * dir;
      const Eigen::VectorXd gc = prob.g(cand);
      const double rc = gc.norm();
      if (rc < res) {
        y = cand;
        gy = gc;
        res = rc;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      if (cfg.lipschitz_hint) {
        // Preconditioned fixed-point fallback: y <- y - g(y)/(1 + eps L).
        const double pre = 1.0 / (1.0 + prob.eps * *cfg.lipschitz_hint);
        for (int k = it; k < cfg.max_iter; ++k) {
          if (res <= cfg.tol) return y;
          y -= pre * gy;
          gy = prob.g(y);
          res = gy.norm();
        }
      }
      break;
    }
  }
  if (res <= cfg.tol) return y;
  throw SolverError("resolvent: Newton iteration exceeded max_iter", res);
}

}  // namespace

Eigen::VectorXd resolve(const FrozenDrift& f, const ResolventConfig& cfg,
                        const Eigen::VectorXd& x) {
  if (!(cfg.eps > 0)) throw ConfigError("resolvent: eps must be > 0");
  if (!(cfg.tol > 0)) throw ConfigError("resolvent: tol must be > 0");
  RootProblem prob{f, cfg.eps, x};
  if (cfg.method == ResolventConfig::Method::scalar_bracketing && x.size() != 1)
    throw ConfigError("resolvent: scalar_bracketing needs a 1-D problem");
  // 1-D always goes through the safeguarded bracketing solve (this is the
  // documented bisection fallback of the damped Newton method).
  if (x.size() == 1) return solve_scalar_bracketing(prob, cfg);
  return solve_newton(prob, cfg);
}

YosidaValue yosida_apply(const FrozenDrift& f, const ResolventConfig& cfg,
                         const Eigen::VectorXd& x) {
  const Eigen::VectorXd y = resolve(f, cfg, x);
  YosidaValue out;
  out.value = (y - x) / cfg.eps;
  out.discrepancy = (out.value - f(y)).norm();
  return out;
}

YosidaPropertyReport verify_yosida_properties(const FrozenDrift& f, const ResolventConfig& cfg,
                                              const CounterRng& rng, int dim, double radius,
                                              int trials) {
  YosidaPropertyReport rep;
  rep.trials = trials;
  ResolventConfig local = cfg;
  auto f_eps = [&](const Eigen::VectorXd& x) { return yosida_apply(f, local, x).value; };
  for (int k = 0; k < trials; ++k) {
    const std::uint64_t base = static_cast<std::uint64_t>(k) * 64;
    const Eigen::VectorXd x = sample_ball(rng, base, dim, radius);
    const Eigen::VectorXd y = sample_ball(rng, base + 32, dim, radius);
    local.eps = cfg.eps;
    const Eigen::VectorXd fx = f_eps(x);
    const Eigen::VectorXd fy = f_eps(y);
    const Eigen::VectorXd dfe = fx - fy;
    const Eigen::VectorXd dx = x - y;
    rep.lipschitz_margin =
        std::max(rep.lipschitz_margin, dfe.norm() - (2.0 / local.eps) * dx.norm());
    rep.bound_margin = std::max(rep.bound_margin, fx.norm() - f(x).norm());
    rep.monotone_margin = std::max(rep.monotone_margin, dfe.dot(dx));
    for (std::size_t e = 0; e < rep.approx_eps.size(); ++e) {
      local.eps = rep.approx_eps[e];
      rep.approx_sup[e] = std::max(rep.approx_sup[e], (f_eps(x) - f(x)).norm());
    }
  }
  rep.approx_decreasing =
      rep.approx_sup[0] > rep.approx_sup[1] && rep.approx_sup[1] > rep.approx_sup[2];
  return rep;
}

}  // namespace bdsde
