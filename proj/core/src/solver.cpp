#include "bdsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bdsde/parallel.hpp"

namespace bdsde {

namespace {

inline double bit_sign(std::uint64_t index, int bit) {
  return (index >> bit) & 1u ? 1.0 : -1.0;
}

Eigen::VectorXd b_increment(const ScenarioLattice& lat, std::uint64_t b_local) {
  // A level-i field's b index starts with the step-i bits.
  Eigen::VectorXd d(lat.db);
  const double root = lat.sqrt_dt();
  for (int k = 0; k < lat.db; ++k) d[k] = root * bit_sign(b_local, k);
  return d;
}

void validate_system(const CoefficientSystem& sys, const ScenarioLattice& lat) {
  if (sys.dw != lat.dw || sys.db != lat.db)
    throw ConfigError("solve: system driver dimensions do not match the lattice");
  if (sys.terminal.value_dim() != sys.state_dim || sys.terminal.level() != lat.steps())
    throw ConfigError("solve: terminal field must be adapted at level N with value_dim n");
  sys.constants.validate();
}

std::vector<AdaptedField> zero_v_fields(const ScenarioLattice& lat, int n) {
  std::vector<AdaptedField> v;
  v.reserve(lat.steps());
  for (int i = 0; i < lat.steps(); ++i) v.emplace_back(lat, i, n * lat.dw);
  return v;
}

}  // namespace

SweepResult picard_step(const CoefficientSystem& sys, const ScenarioLattice& lat,
                        const SolverConfig& cfg, const std::vector<AdaptedField>& v_prev) {
  const int nsteps = lat.steps();
  const int n = sys.state_dim;
  const int dw = lat.dw;
  const int db = lat.db;
  const double dt = lat.dt();
  if (static_cast<int>(v_prev.size()) != nsteps)
    throw ConfigError("picard_step: v_prev needs one field per step");

  SweepResult out;
  out.u.resize(nsteps + 1);
  out.v.resize(nsteps);
  out.u[nsteps] = sys.terminal;

  ResolventConfig rescfg = cfg.resolvent;
  rescfg.eps = dt;

  for (int i = nsteps - 1; i >= 0; --i) {
    const double t_left = lat.grid.time(i);
    const double t_right = lat.grid.time(i + 1);
    const AdaptedField& u_next = out.u[i + 1];
    // v-argument of J at the right endpoint; the terminal level borrows the
    // last available iterate.
    const AdaptedField& vf_next = v_prev[std::min(i + 1, nsteps - 1)];
    const int vshift = (vf_next.level() - i) * db;
    const std::uint64_t v_wmask = vf_next.w_count() - 1;

    TransitionField x(lat, i, n);
    const std::uint64_t bc = x.b_count();
    parallel_for(x.entries(), cfg.threads, [&](std::size_t e) {
      const std::uint64_t w = e / bc;
      const std::uint64_t b = e % bc;
      const auto u1 = u_next.vec(w, b >> db);
      const auto vmat = vf_next.mat(w & v_wmask, b >> vshift, n, dw);
      const ScenarioContext ctx{i + 1, w, b >> db};
      const Eigen::MatrixXd jm = sys.diffusion(t_right, u1, vmat, ctx);
      x.vec(w, b) = u1 + jm * b_increment(lat, b);
    });

    MartingaleCoefficients mc = martingale_coefficients(lat, x);
    out.representation_residual_max = std::max(out.representation_residual_max, mc.residual);
    out.v[i] = std::move(mc.v);

    AdaptedField ui(lat, i, n);
    const AdaptedField& vf_here = v_prev[i];
    const std::uint64_t bci = ui.b_count();
    std::vector<double> residuals(ui.entries());
    parallel_for(ui.entries(), cfg.threads, [&](std::size_t e) {
      const std::uint64_t w = e / bci;
      const std::uint64_t b = e % bci;
      const auto vmat = vf_here.mat(w, b, n, dw);
      const ScenarioContext ctx{i, w, b};
      const Eigen::MatrixXd varg = vmat;  // detach from the map for the closure
      FrozenDrift frozen = [&sys, t_left, &varg, &ctx](const Eigen::VectorXd& y) {
        return sys.drift(t_left, y, varg, ctx);
      };
      const Eigen::VectorXd target = mc.m.vec(w, b);
      Eigen::VectorXd y;
      try {
        y = resolve(frozen, rescfg, target);
      } catch (const SolverError& err) {
        std::ostringstream msg;
        msg << err.what() << " [level " << i << ", w_index " << w << ", b_index " << b << "]";
        throw SolverError(msg.str(), err.last_residual);
      }
      ui.vec(w, b) = y;
      residuals[e] = (y - dt * sys.drift(t_left, y, varg, ctx) - target).norm();
    });
    for (double r : residuals)
      out.resolvent_residual_max = std::max(out.resolvent_residual_max, r);
    out.u[i] = std::move(ui);
  }
  return out;
}

DiscreteSolution solve(const CoefficientSystem& sys, const ScenarioLattice& lat,
                       const SolverConfig& cfg, const std::vector<AdaptedField>* v_init) {
  validate_system(sys, lat);
  const int nsteps = lat.steps();
  const int n = sys.state_dim;

  if (sys.constants.K1 > 0) {
    // Reduce to the K1 = 0 case; solve the rescaled system and scale back.
    const double k1 = sys.constants.K1;
    CoefficientSystem rsys = exponential_rescale(sys, lat.grid.horizon);
    std::vector<AdaptedField> scaled_init;
    if (v_init) {
      scaled_init = *v_init;
      for (int i = 0; i < nsteps; ++i) {
        const double theta = std::exp(0.5 * lat.grid.time(i) * k1);
        for (double& x : scaled_init[i].raw()) x *= theta;
      }
    }
    DiscreteSolution sol = solve(rsys, lat, cfg, v_init ? &scaled_init : nullptr);
    for (int i = 0; i <= nsteps; ++i) {
      const double inv_theta = std::exp(-0.5 * lat.grid.time(i) * k1);
      for (double& x : sol.u[i].raw()) x *= inv_theta;
      if (i < nsteps) {
        for (double& x : sol.v[i].raw()) x *= inv_theta;
        for (double& x : sol.v_frozen[i].raw()) x *= inv_theta;
      }
    }
    return sol;
  }

  std::vector<AdaptedField> v_prev = v_init ? *v_init : zero_v_fields(lat, n);
  if (static_cast<int>(v_prev.size()) != nsteps)
    throw ConfigError("solve: v_init needs one field per step");

  DiscreteSolution sol;
  std::vector<AdaptedField> u_prev;
  for (int k = 1; k <= cfg.picard_max; ++k) {
    SweepResult sweep = picard_step(sys, lat, cfg, v_prev);
    sol.diagnostics.resolvent_residual_max =
        std::max(sol.diagnostics.resolvent_residual_max, sweep.resolvent_residual_max);
    sol.diagnostics.representation_residual_max =
        std::max(sol.diagnostics.representation_residual_max, sweep.representation_residual_max);
    sol.diagnostics.picard_iterations = k;

    double dv = 0.0;
    for (int i = 0; i < nsteps; ++i)
      dv = std::max(dv, table_l2_distance(sweep.v[i], v_prev[i]));
    sol.diagnostics.delta_v.push_back(dv);

    bool converged = false;
    if (k >= 2) {
      double du = 0.0;
      for (int i = 0; i <= nsteps; ++i)
        du = std::max(du, table_l2_distance(sweep.u[i], u_prev[i]));
      sol.diagnostics.delta_u.push_back(du);
      converged = du < cfg.picard_tol && dv < cfg.picard_tol;
    }

    if (converged) {
      sol.u = std::move(sweep.u);
      sol.v_frozen = std::move(v_prev);
      sol.v = std::move(sweep.v);
      return sol;
    }
    u_prev = std::move(sweep.u);
    v_prev = std::move(sweep.v);
  }
  std::ostringstream msg;
  msg << "solve: Picard iteration failed to converge in " << cfg.picard_max
      << " sweeps; v-deltas:";
  for (double d : sol.diagnostics.delta_v) msg << ' ' << d;
  throw SolverError(msg.str(), sol.diagnostics.delta_v.empty() ? 0.0
                                                               : sol.diagnostics.delta_v.back());
}

ContractionDiagnostics contraction_diagnostics(const DiscreteSolution& sol) {
  const std::vector<double>& d = sol.diagnostics.delta_v;
  ContractionDiagnostics out;
  for (std::size_t k = 0; k + 1 < d.size(); ++k)
    out.ratios.push_back(d[k] > 0 ? d[k + 1] / d[k] : 0.0);
  const bool exact_zero = std::any_of(d.begin(), d.end(), [](double x) { return x == 0.0; });
  if (exact_zero) {
    out.fitted_ratio = 0.0;
    out.contraction = true;
    out.sufficient = true;
    return out;
  }
  if (d.size() < 3) {
    out.sufficient = false;
    return out;
  }
  // least-squares slope of log deltas against the iteration index
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = static_cast<int>(d.size());
  for (int k = 0; k < m; ++k) {
    sx += k;
    sy += std::log(d[k]);
    sxx += double(k) * k;
    sxy += k * std::log(d[k]);
  }
  const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  out.fitted_ratio = std::exp(slope);
  out.contraction = out.fitted_ratio < 1.0;
  out.sufficient = true;
  return out;
}

DiscreteSolution solve_linear_oracle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& j0,
                                     const AdaptedField& terminal, const ScenarioLattice& lat) {
  const int n = static_cast<int>(a.rows());
  const int nsteps = lat.steps();
  const double dt = lat.dt();
  if (a.cols() != n || j0.rows() != n || j0.cols() != lat.db)
    throw ConfigError("solve_linear_oracle: shape mismatch");
  if (terminal.level() != nsteps || terminal.value_dim() != n)
    throw ConfigError("solve_linear_oracle: terminal field shape mismatch");

  const Eigen::MatrixXd step = Eigen::MatrixXd::Identity(n, n) - dt * a;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(step);
  if (!lu.isInvertible())
    throw SolverError("solve_linear_oracle: I - a*dt is singular; reduce the step size", 0.0);

  DiscreteSolution sol;
  sol.u.resize(nsteps + 1);
  sol.v.resize(nsteps);
  sol.u[nsteps] = terminal;
  for (int i = nsteps - 1; i >= 0; --i) {
    const AdaptedField& u_next = sol.u[i + 1];
    TransitionField x(lat, i, n);
    for (std::uint64_t w = 0; w < x.w_count(); ++w)
      for (std::uint64_t b = 0; b < x.b_count(); ++b)
        x.vec(w, b) = u_next.vec(w, b >> lat.db) + j0 * b_increment(lat, b);
    MartingaleCoefficients mc = martingale_coefficients(lat, x);
    sol.v[i] = std::move(mc.v);
    AdaptedField ui(lat, i, n);
    for (std::uint64_t w = 0; w < ui.w_count(); ++w)
      for (std::uint64_t b = 0; b < ui.b_count(); ++b)
        ui.vec(w, b) = lu.solve(mc.m.vec(w, b).eval());
    sol.u[i] = std::move(ui);
  }
  sol.v_frozen = sol.v;
  return sol;
}

StepResiduals pathwise_step_residuals(const CoefficientSystem& sys, const ScenarioLattice& lat,
                                      const DiscreteSolution& sol) {
  const int nsteps = lat.steps();
  const int n = sys.state_dim;
  const int dw = lat.dw;
  const int db = lat.db;
  const double dt = lat.dt();
  const double root = lat.sqrt_dt();
  StepResiduals out;
  for (int i = 0; i < nsteps; ++i) {
    const AdaptedField& u_next = sol.u[i + 1];
    const AdaptedField& vf_next = sol.v_frozen[std::min(i + 1, nsteps - 1)];
    const int vshift = (vf_next.level() - i) * db;
    const std::uint64_t v_wmask = vf_next.w_count() - 1;
    TransitionField x(lat, i, n);
    for (std::uint64_t w = 0; w < x.w_count(); ++w) {
      for (std::uint64_t b = 0; b < x.b_count(); ++b) {
        const auto u1 = u_next.vec(w, b >> db);
        const auto vmat = vf_next.mat(w & v_wmask, b >> vshift, n, dw);
        const Eigen::MatrixXd jm =
            sys.diffusion(lat.grid.time(i + 1), u1, vmat, {i + 1, w, b >> db});
        x.vec(w, b) = u1 + jm * b_increment(lat, b);
      }
    }
    const AdaptedField m = condexp(lat, x);
    const std::uint64_t wp_mask = (std::uint64_t{1} << (i * dw)) - 1;
    for (std::uint64_t w = 0; w < x.w_count(); ++w) {
      const std::uint64_t wp = w & wp_mask;
      Eigen::VectorXd dwv(dw);
      for (int k = 0; k < dw; ++k) dwv[k] = root * bit_sign(w, i * dw + k);
      for (std::uint64_t b = 0; b < x.b_count(); ++b) {
        const auto ui = sol.u[i].vec(wp, b);
        const auto vm = sol.v[i].mat(wp, b, n, dw);
        const auto vfm = sol.v_frozen[i].mat(wp, b, n, dw);
        const Eigen::VectorXd fval =
            sys.drift(lat.grid.time(i), ui, vfm, {i, wp, b});
        const Eigen::VectorXd x_here = x.vec(w, b);
        // recursion residual: u_i - u_{i+1} - F dt - J dB + v dW
        const Eigen::VectorXd jdb = x_here - u_next.vec(w, b >> db);
        Eigen::VectorXd r = ui - u_next.vec(w, b >> db) - dt * fval - jdb + vm * dwv;
        const Eigen::VectorXd rho = x_here - m.vec(wp, b) - vm * dwv;
        out.recursion = std::max(out.recursion, r.cwiseAbs().maxCoeff());
        out.consistency = std::max(out.consistency, (r + rho).cwiseAbs().maxCoeff());
      }
    }
  }
  return out;
}

}  // namespace bdsde
