#include "bdsde/galerkin.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bdsde {

namespace {

constexpr double kPi = std::numbers::pi;

double fn_or_zero(const SpaceTimeFn& fn, double t, double x) { return fn ? fn(t, x) : 0.0; }

double fn_or_zero(const NonlinearFn& fn, double t, double x, double theta, double grad,
                  const Eigen::VectorXd& z) {
  return fn ? fn(t, x, theta, grad, z) : 0.0;
}

}  // namespace

Quadrature Quadrature::trapezoid(int cells) {
  if (cells < 1) throw ConfigError("quadrature: need at least one cell");
  Quadrature q;
  const double h = 1.0 / cells;
  q.nodes.resize(cells + 1);
  q.weights.resize(cells + 1);
  for (int k = 0; k <= cells; ++k) {
    q.nodes[k] = k * h;
    q.weights[k] = (k == 0 || k == cells) ? 0.5 * h : h;
  }
  return q;
}

Quadrature Quadrature::gauss_legendre(int points) {
  if (points < 1) throw ConfigError("quadrature: need at least one point");
  Quadrature q;
  q.nodes.resize(points);
  q.weights.resize(points);
  // Newton on P_m with the usual Chebyshev initial guess, mapped to [0,1].
  for (int i = 0; i < points; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (points + 0.5));
    double pp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      if (points == 1) {
        p1 = x;
      }
      for (int j = 2; j <= points; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      const double pm = points == 1 ? x : p1;
      pp = points * (x * pm - p0) / (x * x - 1.0);
      const double dx = pm / pp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    q.nodes[i] = 0.5 * (1.0 - x);  // descending roots -> ascending nodes
    q.weights[i] = 1.0 / ((1.0 - x * x) * pp * pp);
  }
  std::reverse(q.nodes.begin(), q.nodes.end());
  std::reverse(q.weights.begin(), q.weights.end());
  return q;
}

double Quadrature::integrate(const std::function<double(double)>& fn) const {
  double acc = 0.0;
  for (int k = 0; k < size(); ++k) acc += weights[k] * fn(nodes[k]);
  return acc;
}

SineBasis::SineBasis(int n, Quadrature quad) : n_(n), quad_(std::move(quad)) {
  if (n < 1) throw ConfigError("sine basis: size must be >= 1");
  if (quad_.nodes.empty()) quad_ = Quadrature::trapezoid(std::max(64, 8 * n));
  const int m = quad_.size();
  values_.resize(m, n);
  dvalues_.resize(m, n);
  const double root2 = std::sqrt(2.0);
  for (int k = 0; k < m; ++k) {
    for (int j = 1; j <= n; ++j) {
      values_(k, j - 1) = root2 * std::sin(j * kPi * quad_.nodes[k]);
      dvalues_(k, j - 1) = root2 * j * kPi * std::cos(j * kPi * quad_.nodes[k]);
    }
  }
}

double SineBasis::eigenvalue(int j) const { return (j * kPi) * (j * kPi); }

double SineBasis::gram_deviation() const {
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(quad_.weights.data(), quad_.size());
  const Eigen::MatrixXd gram = values_.transpose() * w.asDiagonal() * values_;
  return (gram - Eigen::MatrixXd::Identity(n_, n_)).cwiseAbs().maxCoeff();
}

double SineBasis::stiffness_deviation() const {
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(quad_.weights.data(), quad_.size());
  const Eigen::MatrixXd stiff = dvalues_.transpose() * w.asDiagonal() * dvalues_;
  double worst = 0.0;
  for (int j = 1; j <= n_; ++j) worst = std::max(worst, std::abs(stiff(j - 1, j - 1) - eigenvalue(j)));
  return worst;
}

Eigen::VectorXd SineBasis::project(const std::function<double(double)>& fn) const {
  Eigen::VectorXd fw(quad_.size());
  for (int k = 0; k < quad_.size(); ++k) fw[k] = quad_.weights[k] * fn(quad_.nodes[k]);
  return values_.transpose() * fw;
}

StructuralConstants derive_constants(const QuasilinearConstants& k, double sup_a,
                                     double sup_sigma2, double sup_b, double sup_c,
                                     double sup_varsigma2) {
  (void)sup_a;
  const double gap = k.gap();
  if (!(gap > 0)) throw ConfigError("derive_constants: ellipticity gap is not positive");
  const double delta0 = std::max(k.delta, 1e-6);
  const double L2 = k.L * k.L;

  double best_k1 = -1.0;
  StructuralConstants best;
  for (double tau : {0.5, 0.4, 0.3, 0.25, 0.2, 0.15, 0.1, 0.075, 0.05, 0.025,
                     0.01, 0.005, 0.001, 1e-4, 1e-5}) {
    const double rho3 = tau * (1.0 - k.delta) / (4.0 * delta0);
    const double theta3 = 1.0 / (1.0 + rho3);
    const double theta12 = 0.5 * (1.0 - theta3);
    const double mu_g = tau * (1.0 - k.delta) / 8.0;
    const double eps_w = gap / 24.0;
    const double extra_sigma = tau / (1.0 - tau) * k.rho * sup_sigma2;
    const double extra_f = tau / (1.0 - tau) * k.rho_prime * k.beta;
    const double extra_alpha = k.alpha > 0 ? k.alpha * (1.0 / theta12 - 1.0) : 0.0;
    if (extra_sigma + extra_f + extra_alpha + 4.0 * eps_w > 0.5 * gap) continue;
    StructuralConstants c;
    c.delta = std::min(1.0 - 0.5 * tau * (1.0 - k.delta), 1.0 - 1e-9);
    c.K1 = 2.0 * sup_c + 2.0 * k.L + (sup_b * sup_b + 2.0 * L2) / eps_w +
           (L2 + sup_varsigma2) / mu_g + (k.alpha > 0 || k.L > 0 ? L2 / theta12 : 0.0);
    c.alpha = eps_w;
    c.q = 2.0;
    c.p = 2.0;
    c.beta = 0.0;
    c.alpha1 = 2.0 * k.alpha;
    c.K = std::max(c.K1 + gap + 2.0,
                   k.Lambda + 2.0 * k.L + std::sqrt(k.alpha) + std::sqrt(k.beta) + 2.0);
    if (best_k1 < 0 || c.K1 < best_k1) {
      best_k1 = c.K1;
      best = c;
    }
  }
  if (best_k1 < 0)
    throw ConfigError(
        "derive_constants: no feasible Young splitting; the gap is too small for these "
        "Lipschitz constants");
  return best;
}

CoefficientSystem assemble_bdspde(const GalerkinModel& model, const ScenarioLattice& lat,
                                  bool waive_b2) {
  const int n = model.basis_size;
  const int dw = model.dw;
  const int db = model.db;
  if (dw != lat.dw || db != lat.db)
    throw ConfigError("assemble_bdspde: model driver dimensions do not match the lattice");
  if (static_cast<int>(model.sigma.size()) > dw ||
      static_cast<int>(model.varsigma_coef.size()) > dw)
    throw ConfigError("assemble_bdspde: more sigma/varsigma rows than W components");
  if (static_cast<int>(model.h.size()) > db)
    throw ConfigError("assemble_bdspde: more h rows than B components");

  const int cells = model.quad_cells > 0 ? model.quad_cells : std::max(64, 8 * n);
  auto basis = std::make_shared<SineBasis>(n, Quadrature::trapezoid(cells));
  if (basis->gram_deviation() > kQuadTol || basis->stiffness_deviation() > kQuadTol)
    throw ConfigError("assemble_bdspde: quadrature under-resolution (Gram deviation above tol)");
  if (!waive_b2) model.b2.validate();

  // Numeric sup bounds of the coefficient functions over a (t, x) grid.
  double sup_a = 0, sup_sigma2 = 0, sup_b = 0, sup_c = 0, sup_vs2 = 0;
  const double horizon = lat.grid.horizon;
  for (int it = 0; it <= 16; ++it) {
    const double t = horizon * it / 16.0;
    for (double x : basis->quadrature().nodes) {
      sup_a = std::max(sup_a, std::abs(fn_or_zero(model.a, t, x)));
      sup_b = std::max(sup_b, std::abs(fn_or_zero(model.b, t, x)));
      sup_c = std::max(sup_c, std::abs(fn_or_zero(model.c, t, x)));
      double s2 = 0, v2 = 0;
      for (const auto& s : model.sigma) s2 += fn_or_zero(s, t, x) * fn_or_zero(s, t, x);
      for (const auto& s : model.varsigma_coef) v2 += fn_or_zero(s, t, x) * fn_or_zero(s, t, x);
      sup_sigma2 = std::max(sup_sigma2, s2);
      sup_vs2 = std::max(sup_vs2, v2);
    }
  }

  CoefficientSystem sys;
  sys.state_dim = n;
  sys.dw = dw;
  sys.db = db;
  sys.constants = waive_b2 && !(model.b2.gap() > 0)
                      ? StructuralConstants{}
                      : derive_constants(model.b2, sup_a, sup_sigma2, sup_b, sup_c, sup_vs2);

  const Eigen::VectorXd w =
      Eigen::Map<const Eigen::VectorXd>(basis->quadrature().weights.data(),
                                        basis->quadrature().size());
  const int m = basis->quadrature().size();

  sys.F = [basis, model, w, m, n, dw](double t, const Eigen::VectorXd& u,
                                      const Eigen::MatrixXd& v, const ScenarioContext&) {
    const Eigen::VectorXd uval = basis->eval(u);
    const Eigen::VectorXd ugrad = basis->eval_deriv(u);
    Eigen::MatrixXd vval(m, dw);
    for (int r = 0; r < dw; ++r) vval.col(r) = basis->eval(v.col(r));
    Eigen::VectorXd bulk(m), flux(m);
    for (int k = 0; k < m; ++k) {
      const double x = basis->quadrature().nodes[k];
      const Eigen::VectorXd z = vval.row(k);
      double sig_v = 0, vs_v = 0;
      for (std::size_t r = 0; r < model.sigma.size(); ++r)
        sig_v += fn_or_zero(model.sigma[r], t, x) * vval(k, static_cast<int>(r));
      for (std::size_t r = 0; r < model.varsigma_coef.size(); ++r)
        vs_v += fn_or_zero(model.varsigma_coef[r], t, x) * vval(k, static_cast<int>(r));
      bulk[k] = fn_or_zero(model.b, t, x) * ugrad[k] + fn_or_zero(model.c, t, x) * uval[k] +
                vs_v + fn_or_zero(model.g, t, x, uval[k], ugrad[k], z);
      flux[k] = -fn_or_zero(model.a, t, x) * ugrad[k] - sig_v -
                fn_or_zero(model.f, t, x, uval[k], ugrad[k], z);
    }
    return (basis->values().transpose() * w.cwiseProduct(bulk) +
            basis->dvalues().transpose() * w.cwiseProduct(flux))
        .eval();
  };

  sys.J = [basis, model, w, m, n, dw, db](double t, const Eigen::VectorXd& u,
                                          const Eigen::MatrixXd& v, const ScenarioContext&) {
    const Eigen::VectorXd uval = basis->eval(u);
    const Eigen::VectorXd ugrad = basis->eval_deriv(u);
    Eigen::MatrixXd vval(m, dw);
    for (int r = 0; r < dw; ++r) vval.col(r) = basis->eval(v.col(r));
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, db);
    for (std::size_t l = 0; l < model.h.size(); ++l) {
      Eigen::VectorXd hv(m);
      for (int k = 0; k < m; ++k) {
        const Eigen::VectorXd z = vval.row(k);
        hv[k] = fn_or_zero(model.h[l], t, basis->quadrature().nodes[k], uval[k], ugrad[k], z);
      }
      out.col(static_cast<int>(l)) = basis->values().transpose() * w.cwiseProduct(hv);
    }
    return out;
  };

  // Dominating function: scaled squared zero-point data, per the same
  // splittings that produced the constants.
  {
    const auto quad = basis->quadrature();
    const GalerkinModel m2 = model;
    const double scale = 4.0 + 2.0 * sys.constants.K;
    sys.varsigma = [m2, quad, dw, scale](double t) {
      const Eigen::VectorXd z = Eigen::VectorXd::Zero(dw);
      double acc = 0.0;
      for (int k = 0; k < static_cast<int>(quad.nodes.size()); ++k) {
        const double x = quad.nodes[k];
        const double f0 = fn_or_zero(m2.f, t, x, 0.0, 0.0, z);
        const double g0 = fn_or_zero(m2.g, t, x, 0.0, 0.0, z);
        double h0 = 0.0;
        for (const auto& h : m2.h) {
          const double hv = fn_or_zero(h, t, x, 0.0, 0.0, z);
          h0 += hv * hv;
        }
        acc += quad.weights[k] * (f0 * f0 + g0 * g0 + h0);
      }
      return scale * acc;
    };
  }

  // Sobolev norms as diagonal weights in sine coordinates.
  {
    Eigen::VectorXd wv(n), wd(n);
    for (int j = 1; j <= n; ++j) {
      wv[j - 1] = 1.0 + basis->eigenvalue(j);
      wd[j - 1] = 1.0 / (1.0 + basis->eigenvalue(j));
    }
    NormProvider norms;
    norms.h = [](const Eigen::VectorXd& x) { return x.norm(); };
    norms.v = [wv](const Eigen::VectorXd& x) {
      return std::sqrt(x.cwiseAbs2().dot(wv));
    };
    norms.dual = [wd](const Eigen::VectorXd& x) {
      return std::sqrt(x.cwiseAbs2().dot(wd));
    };
    sys.norms = norms;
  }

  if (model.terminal_profile) {
    const Eigen::VectorXd g = basis->project(model.terminal_profile);
    sys.terminal = make_terminal(lat, n, [g](std::uint64_t) { return g; });
  } else {
    sys.terminal = AdaptedField(lat, lat.steps(), n);
  }
  return sys;
}

namespace {

CoefficientSystem monotone_drift_system(double r, const std::shared_ptr<SineBasis>& basis,
                                        const ScenarioLattice& lat, bool weak_form, double growth_K) {
  if (r < 2) throw ConfigError("monotone drift: exponent r must be >= 2");
  const int n = basis->size();
  CoefficientSystem sys;
  sys.state_dim = n;
  sys.dw = lat.dw;
  sys.db = lat.db;
  const Eigen::VectorXd w =
      Eigen::Map<const Eigen::VectorXd>(basis->quadrature().weights.data(),
                                        basis->quadrature().size());
  sys.F = [basis, w, r, weak_form](double, const Eigen::VectorXd& u, const Eigen::MatrixXd&,
                                   const ScenarioContext&) {
    if (weak_form) {
      const Eigen::VectorXd g = basis->eval_deriv(u);
      const Eigen::VectorXd p =
          g.unaryExpr([r](double s) { return -std::pow(std::abs(s), r - 2.0) * s; });
      return (basis->dvalues().transpose() * w.cwiseProduct(p)).eval();
    }
    const Eigen::VectorXd uval = basis->eval(u);
    const Eigen::VectorXd p =
        uval.unaryExpr([r](double s) { return -std::pow(std::abs(s), r - 2.0) * s; });
    return (basis->values().transpose() * w.cwiseProduct(p)).eval();
  };
  sys.J = {};
  sys.varsigma = {};
  const double rp = r / (r - 1.0);
  NormProvider norms;
  norms.h = [](const Eigen::VectorXd& x) { return x.norm(); };
  if (weak_form) {
    norms.v = [basis, w, r](const Eigen::VectorXd& x) {
      const Eigen::VectorXd uval = basis->eval(x);
      const Eigen::VectorXd g = basis->eval_deriv(x);
      double acc = 0.0;
      for (int k = 0; k < uval.size(); ++k)
        acc += w[k] * (std::pow(std::abs(uval[k]), r) + std::pow(std::abs(g[k]), r));
      return std::pow(acc, 1.0 / r);
    };
  } else {
    norms.v = [basis, w, r](const Eigen::VectorXd& x) {
      const Eigen::VectorXd uval = basis->eval(x);
      double acc = 0.0;
      for (int k = 0; k < uval.size(); ++k) acc += w[k] * std::pow(std::abs(uval[k]), r);
      return std::pow(acc, 1.0 / r);
    };
  }
  // Equivalent-norm surrogate for the dual: conjugate-power quadrature norm
  // of the coordinate representative.
  norms.dual = [basis, w, rp](const Eigen::VectorXd& x) {
    const Eigen::VectorXd uval = basis->eval(x);
    double acc = 0.0;
    for (int k = 0; k < uval.size(); ++k) acc += w[k] * std::pow(std::abs(uval[k]), rp);
    return std::pow(acc, 1.0 / rp);
  };
  sys.norms = norms;
  StructuralConstants c;
  c.K = growth_K;
  c.K1 = 0.0;
  c.delta = 0.5;
  c.alpha = 1.0;
  c.alpha1 = 0.0;
  c.beta = 0.0;
  c.q = r;
  c.p = 2.0;
  sys.constants = c;
  sys.terminal = AdaptedField(lat, lat.steps(), n);
  return sys;
}

}  // namespace

CoefficientSystem assemble_power_drift(double r, const std::shared_ptr<SineBasis>& basis,
                                       const ScenarioLattice& lat) {
  return monotone_drift_system(r, basis, lat, /*weak_form=*/false, /*growth_K=*/4.0);
}

CoefficientSystem assemble_p_laplacian(double r, const std::shared_ptr<SineBasis>& basis,
                                       const ScenarioLattice& lat) {
  // Growth constant sized for the coordinate-representative dual surrogate,
  // which inflates with the stiffness of the top mode.
  const double top = basis->eigenvalue(basis->size());
  return monotone_drift_system(r, basis, lat, /*weak_form=*/true,
                               /*growth_K=*/4.0 * std::pow(top, r / 2.0));
}

std::vector<RefineRow> refine_study(const GalerkinModel& model, const std::vector<int>& n_list,
                                    const ScenarioLattice& lat, const SolverConfig& cfg) {
  if (n_list.size() < 2)
    throw InsufficientDataError("refine_study: need at least two basis sizes");
  std::vector<AdaptedField> u0;
  u0.reserve(n_list.size());
  for (int n : n_list) {
    GalerkinModel m2 = model;
    m2.basis_size = n;
    const CoefficientSystem sys = assemble_bdspde(m2, lat);
    u0.push_back(solve(sys, lat, cfg).u[0]);
  }
  std::vector<RefineRow> rows;
  for (std::size_t k = 0; k + 1 < n_list.size(); ++k) {
    const AdaptedField& coarse = u0[k];
    const AdaptedField& fine = u0[k + 1];
    double acc = 0.0;
    for (std::uint64_t wi = 0; wi < coarse.w_count(); ++wi) {
      for (std::uint64_t bi = 0; bi < coarse.b_count(); ++bi) {
        Eigen::VectorXd pad = Eigen::VectorXd::Zero(fine.value_dim());
        pad.head(coarse.value_dim()) = coarse.vec(wi, bi);
        acc += (pad - fine.vec(wi, bi)).squaredNorm();
      }
    }
    rows.push_back({n_list[k], n_list[k + 1], acc / static_cast<double>(coarse.entries())});
  }
  return rows;
}

}  // namespace bdsde
