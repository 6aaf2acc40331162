#include "bdsde/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace bdsde {

namespace {

std::vector<double> parse_args(const std::string& spec, std::size_t colon) {
  std::vector<double> out;
  if (colon == std::string::npos) return out;
  std::stringstream ss(spec.substr(colon + 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError("registry: bad numeric argument in '" + spec + "'");
    }
  }
  return out;
}

double arg_or(const std::vector<double>& a, std::size_t i, double fallback) {
  return i < a.size() ? a[i] : fallback;
}

// Declared constants win over the computed defaults (they are user data, not
// inferred quantities). Setting K1 to 0 waives the internal rescaling.
void apply_constants_override(StructuralConstants& k, const nlohmann::json& params) {
  if (!params.contains("constants")) return;
  const auto& c = params["constants"];
  k.K = c.value("K", k.K);
  k.K1 = c.value("K1", k.K1);
  k.delta = c.value("delta", k.delta);
  k.alpha = c.value("alpha", k.alpha);
  k.alpha1 = c.value("alpha1", k.alpha1);
  k.beta = c.value("beta", k.beta);
  k.q = c.value("q", k.q);
  k.p = c.value("p", k.p);
}

Eigen::MatrixXd parse_matrix(const nlohmann::json& j, int n) {
  if (j.is_number()) return Eigen::MatrixXd::Identity(n, n) * j.get<double>();
  if (j.is_array()) {
    Eigen::MatrixXd m(n, n);
    if (static_cast<int>(j.size()) != n) throw ConfigError("model: matrix row count mismatch");
    for (int r = 0; r < n; ++r) {
      if (static_cast<int>(j[r].size()) != n) throw ConfigError("model: matrix column mismatch");
      for (int c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
  }
  throw ConfigError("model: expected a number or matrix");
}

Eigen::VectorXd parse_vector(const nlohmann::json& j, int n) {
  if (j.is_number()) return Eigen::VectorXd::Constant(n, j.get<double>());
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != n) throw ConfigError("model: vector length mismatch");
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = j[i].get<double>();
    return v;
  }
  throw ConfigError("model: expected a number or vector");
}

}  // namespace

SpaceTimeFn parse_space_time(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::vector<double> a = parse_args(spec, colon);
  if (head == "zero") return {};
  if (head == "constant") {
    const double c = arg_or(a, 0, 0.0);
    return [c](double, double) { return c; };
  }
  if (head == "affine") {
    const double p = arg_or(a, 0, 0.0), q = arg_or(a, 1, 0.0);
    return [p, q](double, double x) { return p + q * x; };
  }
  if (head == "tlinear") {
    const double p = arg_or(a, 0, 0.0), q = arg_or(a, 1, 0.0);
    return [p, q](double t, double) { return p + q * t; };
  }
  if (head == "sinx") {
    const double amp = arg_or(a, 0, 1.0), k = arg_or(a, 1, 1.0);
    return [amp, k](double, double x) { return amp * std::sin(k * std::numbers::pi * x); };
  }
  throw ConfigError("registry: unknown coefficient '" + spec + "'");
}

NonlinearFn parse_nonlinearity(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  const std::vector<double> a = parse_args(spec, colon);
  if (head == "zero") return {};
  if (head == "linear") {
    const double ct = arg_or(a, 0, 0.0), cy = arg_or(a, 1, 0.0), cz = arg_or(a, 2, 0.0);
    return [ct, cy, cz](double, double, double theta, double grad, const Eigen::VectorXd& z) {
      return ct * theta + cy * grad + cz * z.sum();
    };
  }
  if (head == "tanh") {
    const double amp = arg_or(a, 0, 1.0), scale = arg_or(a, 1, 1.0);
    return [amp, scale](double, double, double theta, double, const Eigen::VectorXd&) {
      return amp * std::tanh(scale * theta);
    };
  }
  throw ConfigError("registry: unknown nonlinearity '" + spec + "'");
}

AdaptedField build_terminal(const nlohmann::json& spec, const ScenarioLattice& lat, int state_dim,
                            const std::shared_ptr<SineBasis>& basis) {
  std::string s;
  if (spec.is_string()) s = spec.get<std::string>();
  else if (spec.is_number()) s = "constant:" + std::to_string(spec.get<double>());
  else throw ConfigError("terminal: expected a registry string or number");

  const std::size_t colon = s.find(':');
  const std::string head = s.substr(0, colon);
  if (head == "constant") {
    const std::vector<double> a = parse_args(s, colon);
    const Eigen::VectorXd g0 = Eigen::VectorXd::Constant(state_dim, arg_or(a, 0, 0.0));
    return make_terminal(lat, state_dim, [g0](std::uint64_t) { return g0; });
  }
  if (head == "wiener") {
    if (state_dim != lat.dw)
      throw ConfigError("terminal: 'wiener' needs state_dim == dW");
    return brownian_terminal(lat);
  }
  if (head == "tanh_wiener") {
    const std::vector<double> a = parse_args(s, colon);
    const double scale = arg_or(a, 0, 1.0);
    return make_terminal(lat, state_dim, [&lat, state_dim, scale](std::uint64_t w) {
      const Eigen::VectorXd wt = increment_sum(lat, w, lat.dw, 0, lat.steps());
      Eigen::VectorXd g(state_dim);
      for (int i = 0; i < state_dim; ++i)
        g[i] = std::tanh(scale * wt[i % lat.dw]) / (1.0 + i);
      return g;
    });
  }
  if (head == "profile") {
    if (!basis) throw ConfigError("terminal: profile terminals need a spectral basis");
    const std::string rest = s.substr(colon + 1);
    std::function<double(double)> profile;
    if (rest.rfind("parabola", 0) == 0) {
      profile = [](double x) { return x * (1.0 - x); };
    } else if (rest.rfind("sine", 0) == 0) {
      const std::size_t c2 = rest.find(':');
      const double k = c2 == std::string::npos ? 1.0 : std::stod(rest.substr(c2 + 1));
      profile = [k](double x) { return std::sin(k * std::numbers::pi * x); };
    } else {
      throw ConfigError("terminal: unknown profile '" + rest + "'");
    }
    const Eigen::VectorXd g = basis->project(profile);
    return make_terminal(lat, state_dim, [g](std::uint64_t) { return g; });
  }
  throw ConfigError("terminal: unknown registry entry '" + s + "'");
}

namespace {

BuiltModel build_linear(const nlohmann::json& p, const ScenarioLattice& lat) {
  const int n = p.value("n", 1);
  const int dw = lat.dw, db = lat.db;
  const Eigen::MatrixXd a = parse_matrix(p.value("a", nlohmann::json(-1.0)), n);
  const double gamma = p.value("gamma", 0.0);
  const Eigen::VectorXd cvec = parse_vector(p.value("c", nlohmann::json(0.0)), n);
  const double lcoef = p.value("L", 0.0);

  BuiltModel out;
  CoefficientSystem& sys = out.system;
  sys.state_dim = n;
  sys.dw = dw;
  sys.db = db;
  sys.F = [a, gamma, n, dw](double, const Eigen::VectorXd& u, const Eigen::MatrixXd& v,
                            const ScenarioContext&) {
    Eigen::VectorXd f = a * u;
    for (int r = 0; r < dw; ++r) f += gamma * v.col(r);
    return f;
  };
  sys.J = [cvec, lcoef, n, db](double, const Eigen::VectorXd& u, const Eigen::MatrixXd&,
                               const ScenarioContext&) {
    Eigen::MatrixXd j(n, db);
    for (int l = 0; l < db; ++l) j.col(l) = cvec + lcoef * u;
    return j;
  };
  const double c2 = static_cast<double>(db) * cvec.squaredNorm();
  sys.varsigma = [c2](double) { return 2.0 * c2 + 1e-12; };

  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  const double lam_max = es.eigenvalues().maxCoeff();
  const double a_norm = a.norm();
  StructuralConstants k;
  k.delta = std::min(0.9, std::max(0.5, 1.2 * gamma * dw));
  k.K1 = std::max(0.0, 2.0 * lam_max + gamma * dw + lcoef * lcoef * db);
  k.alpha = 1.0;
  k.q = 2.0;
  k.p = 2.0;
  k.beta = 0.0;
  k.alpha1 = 0.0;
  k.K = 1.5 * std::max({2.0 * a_norm * a_norm + 2.0 * gamma * gamma * dw,
                        2.0 * db * std::max(1.0, lcoef * lcoef),
                        2.0 * std::abs(lam_max) + gamma * dw + 2.0 * db * lcoef * lcoef + 2.0,
                        gamma * std::sqrt(double(dw)) + lcoef * std::sqrt(double(db)) + 1.0});
  apply_constants_override(k, p);
  sys.constants = k;
  sys.terminal = build_terminal(p.value("terminal", nlohmann::json("constant:1.0")), lat, n);
  out.default_checks = {"A2", "A3", "A4", "A5", "A6"};
  return out;
}

BuiltModel build_cubic(const nlohmann::json& p, const ScenarioLattice& lat, double sign) {
  const double scale = p.value("scale", 1.0);
  BuiltModel out;
  CoefficientSystem& sys = out.system;
  sys.state_dim = 1;
  sys.dw = lat.dw;
  sys.db = lat.db;
  sys.F = [scale, sign](double, const Eigen::VectorXd& u, const Eigen::MatrixXd&,
                        const ScenarioContext&) {
    Eigen::VectorXd f(1);
    f[0] = sign * scale * u[0] * u[0] * u[0];
    return f;
  };
  sys.varsigma = [](double) { return 1e-12; };
  StructuralConstants k;
  k.delta = 0.5;
  k.K1 = 0.0;
  k.alpha = 1.0;
  k.q = 4.0;
  k.p = 2.0;
  k.K = 2.0 * std::max(1.0, scale * scale);
  apply_constants_override(k, p);
  sys.constants = k;
  sys.terminal = build_terminal(p.value("terminal", nlohmann::json("tanh_wiener:1.0")), lat, 1);
  out.default_checks = {"A2", "A3", "A4", "A5"};
  return out;
}

std::shared_ptr<GalerkinModel> quasilinear_from_params(const nlohmann::json& p,
                                                       const ScenarioLattice& lat) {
  auto m = std::make_shared<GalerkinModel>();
  m->basis_size = p.value("n_basis", 4);
  m->dw = lat.dw;
  m->db = lat.db;
  m->a = parse_space_time(p.value("a", "constant:1.0"));
  m->b = parse_space_time(p.value("b", "zero"));
  m->c = parse_space_time(p.value("c", "zero"));
  if (p.contains("sigma"))
    for (const auto& s : p["sigma"]) m->sigma.push_back(parse_space_time(s.get<std::string>()));
  if (p.contains("varsigma_coef"))
    for (const auto& s : p["varsigma_coef"])
      m->varsigma_coef.push_back(parse_space_time(s.get<std::string>()));
  m->f = parse_nonlinearity(p.value("f", "zero"));
  m->g = parse_nonlinearity(p.value("g", "zero"));
  if (p.contains("h"))
    for (const auto& s : p["h"]) m->h.push_back(parse_nonlinearity(s.get<std::string>()));
  if (p.contains("b2")) {
    const auto& b2 = p["b2"];
    m->b2.lambda = b2.value("lambda", m->b2.lambda);
    m->b2.Lambda = b2.value("Lambda", m->b2.Lambda);
    m->b2.rho = b2.value("rho", m->b2.rho);
    m->b2.rho_prime = b2.value("rho_prime", m->b2.rho_prime);
    m->b2.delta = b2.value("delta", m->b2.delta);
    m->b2.kappa = b2.value("kappa", m->b2.kappa);
    m->b2.beta = b2.value("beta", m->b2.beta);
    m->b2.alpha = b2.value("alpha", m->b2.alpha);
    m->b2.L = b2.value("L", m->b2.L);
  }
  const std::string profile = p.value("terminal", "profile:parabola");
  if (profile.rfind("profile:", 0) == 0) {
    const std::string rest = profile.substr(8);
    if (rest.rfind("parabola", 0) == 0) {
      m->terminal_profile = [](double x) { return x * (1.0 - x); };
    } else if (rest.rfind("sine", 0) == 0) {
      const std::size_t c2 = rest.find(':');
      const double kk = c2 == std::string::npos ? 1.0 : std::stod(rest.substr(c2 + 1));
      m->terminal_profile = [kk](double x) { return std::sin(kk * std::numbers::pi * x); };
    } else {
      throw ConfigError("model: unknown terminal profile '" + rest + "'");
    }
  } else {
    throw ConfigError("model: quasi-linear models take profile terminals");
  }
  return m;
}

BuiltModel build_bdspde(const nlohmann::json& p, const ScenarioLattice& lat) {
  BuiltModel out;
  out.quasilinear = quasilinear_from_params(p, lat);
  out.system = assemble_bdspde(*out.quasilinear, lat, p.value("waive_b2", false));
  out.default_checks = {"B2", "A2", "A3", "A5"};
  return out;
}

BuiltModel build_monotone_spectral(const nlohmann::json& p, const ScenarioLattice& lat,
                                   bool p_laplacian) {
  const double r = p.value("r", 4.0);
  const int n = p.value("n_basis", 4);
  auto basis = std::make_shared<SineBasis>(n);
  BuiltModel out;
  out.system = p_laplacian ? assemble_p_laplacian(r, basis, lat)
                           : assemble_power_drift(r, basis, lat);
  out.system.terminal =
      build_terminal(p.value("terminal", nlohmann::json("profile:parabola")), lat, n, basis);
  out.default_checks = {"A2", "A3", "A4", "A5"};
  return out;
}

}  // namespace

BuiltModel build_model(const nlohmann::json& model_block, const ScenarioLattice& lat) {
  if (!model_block.contains("name")) throw ConfigError("model: missing 'name'");
  const std::string name = model_block["name"].get<std::string>();
  nlohmann::json params = model_block.value("params", nlohmann::json::object());
  if (params.is_null()) params = nlohmann::json::object();
  if (name == "martingale") {
    nlohmann::json p = params;
    p["a"] = 0.0;
    p["c"] = 0.0;
    p["gamma"] = 0.0;
    p["L"] = 0.0;
    if (!p.contains("terminal")) p["terminal"] = "wiener";
    return build_linear(p, lat);
  }
  if (name == "linear") return build_linear(params, lat);
  if (name == "cubic") return build_cubic(params, lat, -1.0);
  if (name == "cubic_bad") {
    BuiltModel m = build_cubic(params, lat, +1.0);
    m.default_checks = {"A2"};
    return m;
  }
  if (name == "power_drift") return build_monotone_spectral(params, lat, false);
  if (name == "p_laplacian") return build_monotone_spectral(params, lat, true);
  if (name == "heat") {
    nlohmann::json p = params;
    if (!p.contains("a")) p["a"] = "constant:1.0";
    if (!p.contains("b2")) p["b2"] = {{"lambda", 1.9}, {"Lambda", 2.1}, {"rho", 4.0},
                                      {"rho_prime", 4.0}, {"delta", 0.5}};
    return build_bdspde(p, lat);
  }
  if (name == "bdspde") return build_bdspde(params, lat);
  throw ConfigError("model: unknown model '" + name + "'");
}

}  // namespace bdsde
