#include "bdsde/coefficients.hpp"

#include <algorithm>
#include <cmath>

namespace bdsde {

namespace {

nlohmann::json to_json_array(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

nlohmann::json to_json_array(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json witness_json(const CoefficientSampler::Draw& d) {
  return {{"t", d.t},
          {"u1", to_json_array(d.u1)},
          {"u2", to_json_array(d.u2)},
          {"phi1", to_json_array(d.phi1)},
          {"phi2", to_json_array(d.phi2)},
          {"x", to_json_array(d.x)}};
}

void require_finite(const Eigen::VectorXd& y, const CoefficientSampler::Draw& d,
                    const char* what) {
  if (!y.allFinite())
    throw EvaluationError(std::string(what) + " produced a non-finite value",
                          witness_json(d).dump());
}

void require_finite(const Eigen::MatrixXd& y, const CoefficientSampler::Draw& d,
                    const char* what) {
  if (!y.allFinite())
    throw EvaluationError(std::string(what) + " produced a non-finite value",
                          witness_json(d).dump());
}

/// Shared driver: evaluate a per-trial margin, keep the worst one and its
/// witness. Margins are computed into a buffer first so the reduction order
/// is independent of any parallel evaluation.
CheckReport run_check(const std::string& assumption, const CoefficientSampler& sampler, int trials,
                      const std::function<double(const CoefficientSampler::Draw&)>& margin_fn) {
  std::vector<double> margins(static_cast<std::size_t>(trials));
  for (int k = 0; k < trials; ++k) margins[k] = margin_fn(sampler.draw(k));
  CheckReport rep;
  rep.assumption = assumption;
  rep.trials = trials;
  rep.seed = sampler.seed();
  int worst_trial = 0;
  for (int k = 0; k < trials; ++k) {
    if (margins[k] > rep.worst_margin) {
      rep.worst_margin = margins[k];
      worst_trial = k;
    }
  }
  rep.witness = witness_json(sampler.draw(worst_trial));
  rep.witness["margin"] = rep.worst_margin;
  return rep;
}

double frob(const Eigen::MatrixXd& m) { return m.norm(); }

}  // namespace

void StructuralConstants::validate() const {
  if (!(delta > 0 && delta < 1)) throw ConfigError("constants: delta must lie in (0,1)");
  if (!(q > 1)) throw ConfigError("constants: q must be > 1");
  if (!(alpha > 0)) throw ConfigError("constants: alpha must be > 0");
  if (K < 0 || K1 < 0 || alpha1 < 0 || beta < 0) throw ConfigError("constants: negative constant");
  if (!(p >= 2)) throw ConfigError("constants: p must be >= 2");
}

bool StructuralConstants::main_estimate_applicable() const {
  if (p < beta + 2) return false;
  if (p > 2 && !(alpha1 * (p - 2) < alpha)) return false;
  return true;
}

NormProvider NormProvider::euclidean() {
  NormProvider n;
  n.h = [](const Eigen::VectorXd& x) { return x.norm(); };
  n.v = n.h;
  n.dual = n.h;
  return n;
}

Eigen::VectorXd CoefficientSystem::drift(double t, const Eigen::VectorXd& u,
                                         const Eigen::MatrixXd& v,
                                         const ScenarioContext& ctx) const {
  return F ? F(t, u, v, ctx) : Eigen::VectorXd::Zero(state_dim);
}

Eigen::MatrixXd CoefficientSystem::diffusion(double t, const Eigen::VectorXd& u,
                                             const Eigen::MatrixXd& v,
                                             const ScenarioContext& ctx) const {
  return J ? J(t, u, v, ctx) : Eigen::MatrixXd::Zero(state_dim, db);
}

nlohmann::json CheckReport::to_json() const {
  return {{"assumption", assumption},
          {"trials", trials},
          {"worst_margin", worst_margin},
          {"witness", witness},
          {"seed", seed}};
}

CoefficientSampler::CoefficientSampler(CounterRng rng, int state_dim, int dw, double horizon,
                                       double radius, int axis_stride)
    : rng_(rng), n_(state_dim), dw_(dw), horizon_(horizon), radius_(radius),
      axis_stride_(axis_stride) {}

Eigen::VectorXd CoefficientSampler::vec_draw(std::uint64_t trial, int slot) const {
  // 5 vector slots per trial (u1, u2, phi1, phi2, x), 256 counters each.
  const std::uint64_t base = trial * 1280 + static_cast<std::uint64_t>(slot) * 256;
  const int dim = slot >= 2 && slot <= 3 ? n_ * dw_ : n_;
  if (axis_stride_ > 0 && trial % static_cast<std::uint64_t>(axis_stride_) == 0) {
    // Axis-aligned extreme point; axis and sign from the same counter stream.
    const std::uint64_t pick = rng_.bits(base);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
    e[static_cast<int>(pick % static_cast<std::uint64_t>(dim))] =
        (pick >> 32) & 1u ? radius_ : -radius_;
    return e;
  }
  return sample_ball(rng_, base, dim, radius_);
}

CoefficientSampler::Draw CoefficientSampler::draw(std::uint64_t trial) const {
  Draw d;
  d.t = horizon_ * rng_.uniform(trial * 1280 + 1279);
  d.u1 = vec_draw(trial, 0);
  d.u2 = vec_draw(trial, 1);
  Eigen::VectorXd p1 = vec_draw(trial, 2), p2 = vec_draw(trial, 3);
  d.phi1 = Eigen::Map<const Eigen::MatrixXd>(p1.data(), n_, dw_);
  d.phi2 = Eigen::Map<const Eigen::MatrixXd>(p2.data(), n_, dw_);
  d.x = vec_draw(trial, 4);
  return d;
}

CheckReport check_monotonicity(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                               int trials) {
  const auto& c = sys.constants;
  return run_check("A2", sampler, trials, [&](const CoefficientSampler::Draw& d) {
    const Eigen::VectorXd f1 = sys.drift(d.t, d.u1, d.phi1);
    const Eigen::VectorXd f2 = sys.drift(d.t, d.u2, d.phi2);
    require_finite(f1, d, "drift");
    require_finite(f2, d, "drift");
    const Eigen::MatrixXd j1 = sys.diffusion(d.t, d.u1, d.phi1);
    const Eigen::MatrixXd j2 = sys.diffusion(d.t, d.u2, d.phi2);
    require_finite(j1, d, "diffusion");
    require_finite(j2, d, "diffusion");
    const Eigen::VectorXd du = d.u1 - d.u2;
    const double dh = sys.norms.h(du);
    const double dphi = frob(d.phi1 - d.phi2);
    return 2.0 * (f1 - f2).dot(du) + (j1 - j2).squaredNorm() - c.K1 * dh * dh -
           c.delta * dphi * dphi;
  });
}

CheckReport check_coercivity(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                             int trials) {
  const auto& c = sys.constants;
  return run_check("A3", sampler, trials, [&](const CoefficientSampler::Draw& d) {
    const Eigen::VectorXd f = sys.drift(d.t, d.u1, d.phi1);
    require_finite(f, d, "drift");
    const Eigen::MatrixXd j = sys.diffusion(d.t, d.u1, d.phi1);
    require_finite(j, d, "diffusion");
    const double hv = sys.norms.h(d.u1);
    const double vv = sys.norms.v(d.u1);
    const double pv = frob(d.phi1);
    return 2.0 * f.dot(d.u1) + j.squaredNorm() + c.alpha * std::pow(vv, c.q) -
           c.delta * pv * pv - c.K * hv * hv - sys.varsigma_at(d.t);
  });
}

CheckReport check_growth(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                         int trials) {
  const auto& c = sys.constants;
  const double qp = c.q / (c.q - 1.0);
  return run_check("A4", sampler, trials, [&](const CoefficientSampler::Draw& d) {
    const Eigen::VectorXd f = sys.drift(d.t, d.u1, d.phi1);
    require_finite(f, d, "drift");
    const Eigen::MatrixXd j = sys.diffusion(d.t, d.u1, d.phi1);
    require_finite(j, d, "diffusion");
    const double hv = sys.norms.h(d.u1);
    const double vv = sys.norms.v(d.u1);
    const double pv = frob(d.phi1);
    const double bulk = sys.varsigma_at(d.t) +
                        c.K * (std::pow(vv, c.q) + hv * hv + pv * pv);
    const double m_f =
        std::pow(sys.norms.dual(f), qp) - bulk * (1.0 + std::pow(hv, c.beta));
    const double m_j = j.squaredNorm() -
                       c.K * (sys.varsigma_at(d.t) + std::pow(vv, c.q) + hv * hv + pv * pv);
    return std::max(m_f, m_j);
  });
}

CheckReport check_lipschitz(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                            int trials) {
  const auto& c = sys.constants;
  return run_check("A5", sampler, trials, [&](const CoefficientSampler::Draw& d) {
    const Eigen::VectorXd f1 = sys.drift(d.t, d.u1, d.phi1);
    const Eigen::VectorXd f2 = sys.drift(d.t, d.u1, d.phi2);
    require_finite(f1, d, "drift");
    require_finite(f2, d, "drift");
    const Eigen::MatrixXd j1 = sys.diffusion(d.t, d.u1, d.phi1);
    const Eigen::MatrixXd j2 = sys.diffusion(d.t, d.u2, d.phi1);
    require_finite(j1, d, "diffusion");
    require_finite(j2, d, "diffusion");
    const double m_f = sys.norms.dual(f1 - f2) - c.K * frob(d.phi1 - d.phi2);
    const double m_j = frob(j1 - j2) - c.K * sys.norms.v(d.u1 - d.u2);
    return std::max(m_f, m_j);
  });
}

CheckReport check_a6(const CoefficientSystem& sys, const CoefficientSampler& sampler, int trials) {
  const auto& c = sys.constants;
  return run_check("A6", sampler, trials, [&](const CoefficientSampler::Draw& d) {
    const Eigen::MatrixXd j = sys.diffusion(d.t, d.u1, d.phi1);
    require_finite(j, d, "diffusion");
    const Eigen::MatrixXd j0 = sys.diffusion(
        d.t, Eigen::VectorXd::Zero(sys.state_dim), Eigen::MatrixXd::Zero(sys.state_dim, sys.dw));
    const double quad = d.x.dot(j * j.transpose() * d.x) -
                        d.x.dot(d.phi1 * d.phi1.transpose() * d.x);
    const double hv = sys.norms.h(d.u1);
    const double vv = sys.norms.v(d.u1);
    const double xx = d.x.squaredNorm();
    return quad - c.K * (j0.squaredNorm() + hv * hv) * xx -
           c.alpha1 * std::min(std::pow(vv, c.q), vv * vv) * xx;
  });
}

CheckReport check_hemicontinuity(const CoefficientSystem& sys, const CoefficientSampler& sampler,
                                 int trials) {
  auto max_jump = [&](const CoefficientSampler::Draw& d, int cells) {
    double worst = 0.0, prev = 0.0;
    for (int k = 0; k <= cells; ++k) {
      const double s = -1.0 + 2.0 * k / cells;
      const Eigen::VectorXd f = sys.drift(d.t, d.u1 + s * d.u2, d.phi1);
      require_finite(f, d, "drift");
      const double g = f.dot(d.x);
      if (k > 0) worst = std::max(worst, std::abs(g - prev));
      prev = g;
    }
    return worst;
  };
  return run_check("A1", sampler, trials, [&](const CoefficientSampler::Draw& d) {
    const double coarse = max_jump(d, 32);
    const double fine = max_jump(d, 512);
    return fine - 0.5 * coarse;
  });
}

void QuasilinearConstants::validate() const {
  if (!(rho > 1) || !(rho_prime > 1)) throw ConfigError("B2: rho, rho' must be > 1");
  if (std::abs(1.0 / rho + 1.0 / rho_prime + delta - 1.0) > 1e-12)
    throw ConfigError("B2: constraint 1/rho + 1/rho' + delta = 1 violated");
  if (!(lambda > 0) || !(Lambda > 0)) throw ConfigError("B2: lambda, Lambda must be > 0");
}

CheckReport check_b2(const QuasilinearCoefficients& coefs, const QuasilinearConstants& k,
                     double horizon, const CounterRng& rng, int trials) {
  k.validate();
  CheckReport rep;
  rep.assumption = "B2";
  rep.trials = trials;
  rep.seed = rng.key();
  for (int trial = 0; trial < trials; ++trial) {
    const std::uint64_t base = static_cast<std::uint64_t>(trial) * 8;
    const double t = horizon * rng.uniform(base);
    const double x = rng.uniform(base + 1);
    const double xi = 2.0 * rng.symmetric(base + 2);
    double ssum = 0.0, sabs = 0.0;
    for (const auto& s : coefs.sigma) {
      const double sv = s(t, x);
      ssum += sv * sv;
      sabs += std::abs(sv);
    }
    double vabs = 0.0;
    for (const auto& vc : coefs.varsigma_coef) vabs += std::abs(vc(t, x));
    const double a = coefs.a(t, x);
    const double form = (2.0 * a - k.rho * ssum) * xi * xi;
    const double lower = k.lambda * xi * xi - form;
    const double upper = form - k.Lambda * xi * xi;
    const double bound = std::abs(a) + sabs + std::abs(coefs.b(t, x)) +
                         std::abs(coefs.c(t, x)) + vabs - k.Lambda;
    const double margin = std::max({lower, upper, bound, -k.gap()});
    if (margin > rep.worst_margin) {
      rep.worst_margin = margin;
      rep.witness = {{"t", t}, {"x", x}, {"xi", xi}, {"margin", margin}};
    }
  }
  return rep;
}

CoefficientSystem exponential_rescale_rate(const CoefficientSystem& sys, double horizon,
                                           double rate) {
  CoefficientSystem out = sys;
  const DriftFn f0 = sys.F;
  const DiffusionFn j0 = sys.J;
  const auto vs0 = sys.varsigma;
  const int n = sys.state_dim;
  const int db = sys.db;
  out.F = [f0, rate, n](double t, const Eigen::VectorXd& u, const Eigen::MatrixXd& v,
                        const ScenarioContext& ctx) {
    const double theta = std::exp(0.5 * t * rate);
    Eigen::VectorXd base =
        f0 ? f0(t, u / theta, v / theta, ctx) : Eigen::VectorXd::Zero(n);
    return (theta * base - 0.5 * rate * u).eval();
  };
  out.J = [j0, rate, n, db](double t, const Eigen::VectorXd& u, const Eigen::MatrixXd& v,
                            const ScenarioContext& ctx) {
    const double theta = std::exp(0.5 * t * rate);
    Eigen::MatrixXd base = j0 ? j0(t, u / theta, v / theta, ctx) : Eigen::MatrixXd::Zero(n, db);
    return (theta * base).eval();
  };
  out.varsigma = [vs0, rate](double t) {
    return std::exp(t * rate) * (vs0 ? vs0(t) : 0.0);
  };
  const double gscale = std::exp(0.5 * horizon * rate);
  for (double& x : out.terminal.raw()) x *= gscale;
  out.constants.K1 = std::max(0.0, sys.constants.K1 - rate);
  out.constants.alpha =
      sys.constants.alpha * std::min(1.0, std::exp(0.5 * (2.0 - sys.constants.q) * horizon * rate));
  return out;
}

CoefficientSystem exponential_rescale(const CoefficientSystem& sys, double horizon) {
  return exponential_rescale_rate(sys, horizon, sys.constants.K1);
}

}  // namespace bdsde
