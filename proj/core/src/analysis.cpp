#include "bdsde/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bdsde {

namespace {

inline double bit_sign(std::uint64_t index, int bit) {
  return (index >> bit) & 1u ? 1.0 : -1.0;
}

struct StepTerms {
  double drift_pair = 0.0;   // E[2 <F_j, u_j>] dt
  double h_square = 0.0;     // E[|J_{j+1}|_2^2] dt
  double v_square = 0.0;     // E[|v_j|_1^2] dt
  double backward_pair = 0.0;// 2 E[<u_{j+1}, J_{j+1} dB_j>]
  double forward_pair = 0.0; // 2 E[<u_j, v_j dW_j>]
};

}  // namespace

double EnergyReport::max_expectation_residual() const {
  double worst = 0.0;
  for (double r : expectation_residual) worst = std::max(worst, r);
  return worst;
}

EnergyReport energy_identity_residual(const DiscreteSolution& sol, const CoefficientSystem& sys,
                                      const ScenarioLattice& lat) {
  const int nsteps = lat.steps();
  const int n = sys.state_dim;
  const int dw = lat.dw;
  const int db = lat.db;
  const double dt = lat.dt();
  const double root = lat.sqrt_dt();
  if (static_cast<int>(sol.u.size()) != nsteps + 1)
    throw ConfigError("energy_identity_residual: solution/lattice mismatch");
  if (sol.u[0].value_dim() != n)
    throw ConfigError("energy_identity_residual: solution/system mismatch");

  EnergyReport rep;
  std::vector<StepTerms> terms(nsteps);

  for (int j = 0; j < nsteps; ++j) {
    const AdaptedField& uj = sol.u[j];
    const AdaptedField& uj1 = sol.u[j + 1];
    const AdaptedField& vfj = sol.v_frozen[j];
    const AdaptedField& vf_next = sol.v_frozen[std::min(j + 1, nsteps - 1)];
    const int vshift = (vf_next.level() - j) * db;
    const std::uint64_t v_wmask = vf_next.w_count() - 1;
    const double t_left = lat.grid.time(j);
    const double t_right = lat.grid.time(j + 1);

    StepTerms& s = terms[j];
    // Level-j adapted terms.
    for (std::uint64_t w = 0; w < uj.w_count(); ++w) {
      for (std::uint64_t b = 0; b < uj.b_count(); ++b) {
        const auto u = uj.vec(w, b);
        const auto vm = sol.v[j].mat(w, b, n, dw);
        const auto vfm = vfj.mat(w, b, n, dw);
        const Eigen::VectorXd f = sys.drift(t_left, u, vfm, {j, w, b});
        s.drift_pair += 2.0 * f.dot(u);
        s.v_square += vm.squaredNorm();
      }
    }
    const double inv_j = 1.0 / static_cast<double>(uj.entries());
    s.drift_pair *= dt * inv_j;
    s.v_square *= dt * inv_j;

    // |J|^2 and the two stochastic pairings, averaged over the level-j
    // transition table (the right-endpoint J sees the step-j B bits through
    // its frozen v-argument at the terminal level).
    const std::uint64_t bc_trans = std::uint64_t{1} << ((nsteps - j) * db);
    const std::uint64_t wc_trans = uj1.w_count();
    const std::uint64_t wp_mask = uj.w_count() - 1;
    double h2 = 0.0, bpair = 0.0, fpair = 0.0, balance_worst = rep.exact_balance_residual;
    for (std::uint64_t w = 0; w < wc_trans; ++w) {
      const std::uint64_t wp = w & wp_mask;
      Eigen::VectorXd dwv(dw);
      for (int k = 0; k < dw; ++k) dwv[k] = root * bit_sign(w, j * dw + k);
      for (std::uint64_t b = 0; b < bc_trans; ++b) {
        const auto u1 = uj1.vec(w, b >> db);
        const auto u = uj.vec(wp, b);
        const auto vm = sol.v[j].mat(wp, b, n, dw);
        const auto vfm_next = vf_next.mat(w & v_wmask, b >> vshift, n, dw);
        const auto vfm_here = vfj.mat(wp, b, n, dw);
        const Eigen::MatrixXd jm = sys.diffusion(t_right, u1, vfm_next, {j + 1, w, b >> db});
        Eigen::VectorXd dbv(db);
        for (int k = 0; k < db; ++k) dbv[k] = root * bit_sign(b, k);
        const Eigen::VectorXd jdb = jm * dbv;
        h2 += jm.squaredNorm();
        bpair += 2.0 * u1.dot(jdb);
        fpair += 2.0 * u.dot(vm * dwv);
        // Exact discrete balance of the telescoped square.
        const Eigen::VectorXd f = sys.drift(t_left, u, vfm_here, {j, wp, b});
        const Eigen::VectorXd stepv = -dt * f - jdb + vm * dwv;
        const double resid = u1.squaredNorm() - u.squaredNorm() - 2.0 * u.dot(stepv) -
                             stepv.squaredNorm();
        balance_worst = std::max(balance_worst, std::abs(resid));
      }
    }
    const double inv_t = 1.0 / static_cast<double>(wc_trans * bc_trans);
    s.h_square = h2 * dt * inv_t;
    s.backward_pair = bpair * inv_t;
    s.forward_pair = fpair * inv_t;
    rep.exact_balance_residual = balance_worst;
  }

  // E|u_i|^2 against the telescoped expectation of the right-hand side.
  const double eg2 = table_l2(sol.u[nsteps]) * table_l2(sol.u[nsteps]);
  rep.expectation_residual.resize(nsteps + 1);
  double tail = 0.0;
  rep.expectation_residual[nsteps] = 0.0;
  for (int i = nsteps - 1; i >= 0; --i) {
    const StepTerms& s = terms[i];
    tail += s.drift_pair + s.h_square - s.v_square + s.backward_pair - s.forward_pair;
    const double lhs = table_l2(sol.u[i]) * table_l2(sol.u[i]);
    rep.expectation_residual[i] = std::abs(lhs - (eg2 + tail));
  }

  // Pathwise form at t = 0 when full enumeration fits.
  if (nsteps * (dw + db) <= lat.cap_bits) {
    PathTable rhs(lat, 1);
    for (std::uint64_t w = 0; w < rhs.w_count(); ++w)
      for (std::uint64_t b = 0; b < rhs.b_count(); ++b)
        rhs.vec(w, b)[0] = sol.u[nsteps].at_path(w, b).squaredNorm();
    for (int j = 0; j < nsteps; ++j) {
      const double t_left = lat.grid.time(j);
      const double t_right = lat.grid.time(j + 1);
      const AdaptedField& vf_next = sol.v_frozen[std::min(j + 1, nsteps - 1)];
      for (std::uint64_t w = 0; w < rhs.w_count(); ++w) {
        Eigen::VectorXd dwv(dw);
        for (int k = 0; k < dw; ++k) dwv[k] = root * bit_sign(w, j * dw + k);
        for (std::uint64_t b = 0; b < rhs.b_count(); ++b) {
          const auto u = sol.u[j].at_path(w, b);
          const auto u1 = sol.u[j + 1].at_path(w, b);
          const Eigen::Map<const Eigen::VectorXd> vflat = sol.v[j].at_path(w, b);
          const Eigen::Map<const Eigen::MatrixXd> vm(vflat.data(), n, dw);
          const Eigen::Map<const Eigen::VectorXd> vf_here_flat = sol.v_frozen[j].at_path(w, b);
          const Eigen::Map<const Eigen::MatrixXd> vfm_here(vf_here_flat.data(), n, dw);
          const Eigen::Map<const Eigen::VectorXd> vf_next_flat = vf_next.at_path(w, b);
          const Eigen::Map<const Eigen::MatrixXd> vfm_next(vf_next_flat.data(), n, dw);
          const Eigen::VectorXd f = sys.drift(t_left, u, vfm_here, {});
          const Eigen::MatrixXd jm = sys.diffusion(t_right, u1, vfm_next, {});
          Eigen::VectorXd dbv(db);
          for (int k = 0; k < db; ++k) dbv[k] = root * bit_sign(b, j * db + k);
          rhs.vec(w, b)[0] += (2.0 * f.dot(u) + jm.squaredNorm() - vm.squaredNorm()) * dt +
                              2.0 * u1.dot(jm * dbv) - 2.0 * u.dot(vm * dwv);
        }
      }
    }
    double worst = 0.0;
    for (std::uint64_t w = 0; w < rhs.w_count(); ++w)
      for (std::uint64_t b = 0; b < rhs.b_count(); ++b)
        worst = std::max(worst,
                         std::abs(sol.u[0].at_path(w, b).squaredNorm() - rhs.vec(w, b)[0]));
    rep.pathwise_t0_residual = worst;
    rep.pathwise_checked = true;
  }
  return rep;
}

AprioriReport apriori_monitor(const DiscreteSolution& sol, const CoefficientSystem& sys,
                              const ScenarioLattice& lat) {
  const int nsteps = lat.steps();
  const double dt = lat.dt();
  const auto& c = sys.constants;
  if (!(c.p >= 2) || !(c.q > 1)) throw ConfigError("apriori_monitor: p or q missing");
  if (nsteps * (lat.dw + lat.db) > lat.cap_bits)
    throw SizingError("apriori_monitor: full-scenario enumeration exceeds the cap");

  const std::uint64_t wc = std::uint64_t{1} << (nsteps * lat.dw);
  const std::uint64_t bc = std::uint64_t{1} << (nsteps * lat.db);
  const double inv = 1.0 / static_cast<double>(wc * bc);
  double acc_sp = 0.0, acc_v = 0.0, acc_z = 0.0;
  for (std::uint64_t w = 0; w < wc; ++w) {
    for (std::uint64_t b = 0; b < bc; ++b) {
      double maxn = 0.0, int_vq = 0.0, int_z2 = 0.0;
      for (int i = 0; i <= nsteps; ++i) {
        const Eigen::VectorXd u = sol.u[i].at_path(w, b);
        maxn = std::max(maxn, sys.norms.h(u));
        if (i < nsteps) {
          int_vq += std::pow(sys.norms.v(u), c.q) * dt;
          int_z2 += Eigen::Map<const Eigen::VectorXd>(sol.v[i].at_path(w, b).data(),
                                                       sol.v[i].value_dim())
                        .squaredNorm() *
                    dt;
        }
      }
      acc_sp += std::pow(maxn, c.p);
      acc_v += std::pow(int_vq, 0.5 * c.p);
      acc_z += std::pow(int_z2, 0.5 * c.p);
    }
  }
  AprioriReport rep;
  rep.s_p = std::pow(acc_sp * inv, 1.0 / c.p);
  rep.m_pq2_q = std::pow(acc_v * inv, 2.0 / (c.p * c.q));
  rep.m_p2 = std::pow(acc_z * inv, 1.0 / c.p);
  rep.lhs = rep.s_p + std::pow(rep.m_pq2_q, 0.5 * c.q) + rep.m_p2;

  double acc_g = 0.0;
  const AdaptedField& g = sol.u[nsteps];
  for (std::uint64_t w = 0; w < g.w_count(); ++w)
    for (std::uint64_t b = 0; b < g.b_count(); ++b)
      acc_g += std::pow(sys.norms.h(g.vec(w, b)), c.p);
  const double g_lp = std::pow(acc_g / static_cast<double>(g.entries()), 1.0 / c.p);
  double int_vs = 0.0;
  for (int j = 0; j < nsteps; ++j) int_vs += sys.varsigma_at(lat.grid.time(j)) * dt;
  rep.rhs_base = g_lp + std::sqrt(int_vs);
  rep.ratio_defined = rep.rhs_base > 0.0;
  rep.ratio = rep.ratio_defined ? rep.lhs / rep.rhs_base : 0.0;
  return rep;
}

StabilityReport stability_gap(const CoefficientSystem& sys, const ScenarioLattice& lat,
                              const SolverConfig& cfg, const AdaptedField& terminal_a,
                              const AdaptedField& terminal_b) {
  CoefficientSystem sys_a = sys;
  sys_a.terminal = terminal_a;
  CoefficientSystem sys_b = sys;
  sys_b.terminal = terminal_b;
  const DiscreteSolution sol_a = solve(sys_a, lat, cfg);
  const DiscreteSolution sol_b = solve(sys_b, lat, cfg);

  const int nsteps = lat.steps();
  const double dt = lat.dt();
  const double k1 = sys.constants.K1;
  const double delta = sys.constants.delta;

  std::vector<double> eu(nsteps + 1), ev(nsteps);
  for (int i = 0; i <= nsteps; ++i) {
    const double d = table_l2_distance(sol_a.u[i], sol_b.u[i]);
    eu[i] = d * d;
    if (i < nsteps) {
      const double dv = table_l2_distance(sol_a.v[i], sol_b.v[i]);
      ev[i] = dv * dv;
    }
  }
  StabilityReport rep;
  rep.rhs = std::exp(k1 * lat.grid.horizon) * eu[nsteps];
  rep.tol = kStabilityTolCoeff * dt;
  rep.lhs_curve.resize(nsteps + 1);
  double tail = 0.0;
  rep.lhs_curve[nsteps] = std::exp(k1 * lat.grid.horizon) * eu[nsteps];
  for (int i = nsteps - 1; i >= 0; --i) {
    tail += std::exp(k1 * lat.grid.time(i)) * ev[i] * dt;
    rep.lhs_curve[i] = std::exp(k1 * lat.grid.time(i)) * eu[i] + (1.0 - delta) * tail;
  }
  double worst = -std::numeric_limits<double>::infinity();
  for (double l : rep.lhs_curve) worst = std::max(worst, l);
  rep.margin = worst - rep.rhs - rep.tol;
  return rep;
}

StudyReport fit_order(const std::vector<std::pair<int, double>>& points) {
  StudyReport rep;
  rep.rows.reserve(points.size());
  for (std::size_t k = 0; k < points.size(); ++k) {
    StudyRow row;
    row.steps = points[k].first;
    row.error = points[k].second;
    row.order_increment =
        k > 0 && points[k - 1].second > 0 && points[k].second > 0
            ? std::log(points[k - 1].second / points[k].second) /
                  std::log(static_cast<double>(points[k].first) / points[k - 1].first)
            : 0.0;
    rep.rows.push_back(row);
  }
  std::vector<std::pair<double, double>> logs;
  for (const auto& [nn, err] : points)
    if (err > 1e-12) logs.emplace_back(std::log(static_cast<double>(nn)), std::log(err));
  if (logs.size() < 2) {
    rep.saturated = true;
    rep.fitted_order = std::numeric_limits<double>::infinity();
    return rep;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [x, y] : logs) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(logs.size());
  rep.fitted_order = -(m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

StudyReport convergence_study(const StudyFactory& factory, const std::vector<int>& n_list,
                              const SolverConfig& cfg) {
  if (n_list.size() < 3)
    throw InsufficientDataError("convergence_study: need at least three lattice sizes");
  std::vector<std::pair<int, double>> points;
  std::vector<double> dts;
  for (int nn : n_list) {
    auto [lat, sys, oracle] = factory(nn);
    const DiscreteSolution sol = solve(sys, lat, cfg);
    const AdaptedField& u0 = sol.u[0];
    double err = 0.0;
    if (oracle.u0_value) {
      double acc = 0.0;
      for (std::uint64_t w = 0; w < u0.w_count(); ++w)
        for (std::uint64_t b = 0; b < u0.b_count(); ++b)
          acc += (u0.vec(w, b) - *oracle.u0_value).squaredNorm();
      err = std::sqrt(acc / static_cast<double>(u0.entries()));
    } else if (oracle.l2_target) {
      err = std::abs(table_l2(u0) - *oracle.l2_target);
    } else {
      throw ConfigError("convergence_study: oracle supplies no reference");
    }
    points.emplace_back(nn, err);
    dts.push_back(lat.dt());
  }
  StudyReport rep = fit_order(points);
  for (std::size_t k = 0; k < rep.rows.size(); ++k) rep.rows[k].dt = dts[k];
  return rep;
}

std::vector<StudyRow> energy_decay_study(const EnergyStudyFactory& factory,
                                         const std::vector<int>& n_list, const SolverConfig& cfg) {
  std::vector<StudyRow> rows;
  for (int nn : n_list) {
    auto [lat, sys] = factory(nn);
    const DiscreteSolution sol = solve(sys, lat, cfg);
    const EnergyReport rep = energy_identity_residual(sol, sys, lat);
    StudyRow row;
    row.steps = nn;
    row.dt = lat.dt();
    row.error = rep.max_expectation_residual();
    rows.push_back(row);
  }
  for (std::size_t k = 1; k < rows.size(); ++k)
    rows[k].order_increment =
        rows[k - 1].error > 0 && rows[k].error > 0
            ? std::log(rows[k - 1].error / rows[k].error) /
                  std::log(static_cast<double>(rows[k].steps) / rows[k - 1].steps)
            : 0.0;
  return rows;
}

}  // namespace bdsde
