#include "bdsde/lattice.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

namespace bdsde {

double ScenarioLattice::sqrt_dt() const { return std::sqrt(grid.dt()); }

ScenarioLattice build_lattice(double horizon, int steps, int dw, int db, int cap_bits) {
  if (!(horizon > 0)) throw ConfigError("lattice: horizon must be positive");
  if (steps < 1) throw ConfigError("lattice: steps must be >= 1");
  if (dw < 1 || db < 1) throw ConfigError("lattice: driver dimensions must be >= 1");
  ScenarioLattice lat;
  lat.grid = TimeGrid{horizon, steps};
  lat.dw = dw;
  lat.db = db;
  lat.exact_representation = (dw == 1);
  lat.cap_bits = cap_bits;
  for (int i = 0; i <= steps; ++i) {
    const int bits = lat.level_bits(i);
    if (bits > cap_bits) {
      throw SizingError("lattice: level " + std::to_string(i) + " table needs 2^" +
                        std::to_string(bits) + " entries (= 2^(" + std::to_string(i) + "*" +
                        std::to_string(dw) + " + " + std::to_string(steps - i) + "*" +
                        std::to_string(db) + ")), cap is 2^" + std::to_string(cap_bits));
    }
  }
  return lat;
}

namespace detail {

FieldBase::FieldBase(const ScenarioLattice& lat, int level, int w_steps, int value_dim)
    : level_(level),
      w_steps_(w_steps),
      b_steps_(lat.steps() - level),
      dw_(lat.dw),
      db_(lat.db),
      dim_(value_dim) {
  if (level < 0 || level > lat.steps()) throw ConfigError("field: level out of range");
  if (value_dim < 1) throw ConfigError("field: value_dim must be >= 1");
  w_count_ = std::uint64_t{1} << (w_steps_ * dw_);
  b_count_ = std::uint64_t{1} << (b_steps_ * db_);
  data_.assign(w_count_ * b_count_ * static_cast<std::uint64_t>(dim_), 0.0);
}

}  // namespace detail

PathTable::PathTable(const ScenarioLattice& lat, int value_dim) : dim_(value_dim) {
  const int bits = lat.steps() * (lat.dw + lat.db);
  if (bits > lat.cap_bits) {
    throw SizingError("path table needs 2^" + std::to_string(bits) + " entries, cap is 2^" +
                      std::to_string(lat.cap_bits));
  }
  w_count_ = std::uint64_t{1} << (lat.steps() * lat.dw);
  b_count_ = std::uint64_t{1} << (lat.steps() * lat.db);
  data_.assign(w_count_ * b_count_ * static_cast<std::uint64_t>(dim_), 0.0);
}

namespace {

inline double bit_sign(std::uint64_t index, int bit) {
  return (index >> bit) & 1u ? 1.0 : -1.0;
}

}  // namespace

Eigen::VectorXd increment_sum(const ScenarioLattice& lat, std::uint64_t index, int ncomp,
                              int step_begin, int step_end) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(ncomp);
  const double root = lat.sqrt_dt();
  for (int j = step_begin; j < step_end; ++j)
    for (int k = 0; k < ncomp; ++k) s[k] += root * bit_sign(index, j * ncomp + k);
  return s;
}

AdaptedField condexp(const ScenarioLattice& lat, const TransitionField& x) {
  const int i = x.level();
  if (i < 0 || i >= lat.steps()) throw ConfigError("condexp: level out of range");
  AdaptedField out(lat, i, x.value_dim());
  const int dw = lat.dw;
  const std::uint64_t branches = std::uint64_t{1} << dw;
  const double inv = 1.0 / static_cast<double>(branches);
  const int shift = i * dw;
  for (std::uint64_t w = 0; w < out.w_count(); ++w) {
    for (std::uint64_t b = 0; b < out.b_count(); ++b) {
      auto acc = out.vec(w, b);
      for (std::uint64_t s = 0; s < branches; ++s)
        acc += x.vec(w | (s << shift), b);
      acc *= inv;
    }
  }
  return out;
}

AdaptedField condexp_to_level(const ScenarioLattice& lat, const detail::FieldBase& x,
                              int target_level) {
  if (target_level < 0 || target_level > x.level())
    throw ConfigError("condexp_to_level: target must be <= field level");
  AdaptedField out(lat, target_level, x.value_dim());
  const int drop_w_bits = (x.w_steps() - target_level) * lat.dw;
  const std::uint64_t branches = std::uint64_t{1} << drop_w_bits;
  const double inv = 1.0 / static_cast<double>(branches);
  const int shift = target_level * lat.dw;
  const int add_b_steps = x.level() - target_level;  // broadcast over these
  for (std::uint64_t w = 0; w < out.w_count(); ++w) {
    for (std::uint64_t b = 0; b < out.b_count(); ++b) {
      const std::uint64_t bx = b >> (add_b_steps * lat.db);
      auto acc = out.vec(w, b);
      for (std::uint64_t s = 0; s < branches; ++s)
        acc += x.vec(w | (s << shift), bx);
      acc *= inv;
    }
  }
  return out;
}

MartingaleCoefficients martingale_coefficients(const ScenarioLattice& lat,
                                               const TransitionField& x) {
  const int i = x.level();
  const int n = x.value_dim();
  const int dw = lat.dw;
  MartingaleCoefficients out;
  out.m = condexp(lat, x);
  out.v = AdaptedField(lat, i, n * dw);
  const std::uint64_t branches = std::uint64_t{1} << dw;
  const double inv = 1.0 / static_cast<double>(branches);
  const double root = lat.sqrt_dt();
  const int shift = i * dw;
  double worst = 0.0;
  for (std::uint64_t w = 0; w < out.m.w_count(); ++w) {
    for (std::uint64_t b = 0; b < out.m.b_count(); ++b) {
      auto vm = out.v.mat(w, b, n, dw);
      for (std::uint64_t s = 0; s < branches; ++s) {
        const auto xv = x.vec(w | (s << shift), b);
        for (int k = 0; k < dw; ++k)
          vm.col(k) += (inv * bit_sign(s, k) / root) * xv;
      }
      // residual on each branch
      const auto mv = out.m.vec(w, b);
      for (std::uint64_t s = 0; s < branches; ++s) {
        Eigen::VectorXd r = x.vec(w | (s << shift), b) - mv;
        for (int k = 0; k < dw; ++k) r -= vm.col(k) * (root * bit_sign(s, k));
        worst = std::max(worst, r.cwiseAbs().maxCoeff());
      }
    }
  }
  out.residual = worst;
  return out;
}

TransitionField lift(const ScenarioLattice& lat, const AdaptedField& a) {
  if (a.level() < 1) throw ConfigError("lift: adapted field must be at level >= 1");
  const int i = a.level() - 1;
  TransitionField out(lat, i, a.value_dim());
  for (std::uint64_t w = 0; w < out.w_count(); ++w)
    for (std::uint64_t b = 0; b < out.b_count(); ++b)
      out.vec(w, b) = a.vec(w, b >> lat.db);
  return out;
}

PathTable backward_ito_integral_paths(const ScenarioLattice& lat,
                                      const std::vector<TransitionField>& h, int from) {
  const int nsteps = lat.steps();
  if (from < 0 || from >= nsteps) throw ConfigError("backward_ito_integral: level out of range");
  if (static_cast<int>(h.size()) != nsteps - from)
    throw ConfigError("backward_ito_integral: missing integrand segment (need one per step " +
                      std::to_string(from) + ".." + std::to_string(nsteps - 1) + ")");
  const int dim = h.front().value_dim();
  const int db = lat.db;
  if (dim % db != 0)
    throw ConfigError("backward_ito_integral: integrand value_dim must be n*db");
  const int n = dim / db;
  PathTable out(lat, n);
  const double root = lat.sqrt_dt();
  for (int j = from; j < nsteps; ++j) {
    const auto& hj = h[j - from];
    if (hj.level() != j) throw ConfigError("backward_ito_integral: integrand level mismatch");
    for (std::uint64_t w = 0; w < out.w_count(); ++w) {
      const std::uint64_t wj = w & (hj.w_count() - 1);
      for (std::uint64_t b = 0; b < out.b_count(); ++b) {
        const std::uint64_t bj = b >> (j * db);
        const auto hm = hj.mat(wj, bj, n, db);
        auto acc = out.vec(w, b);
        for (int k = 0; k < db; ++k)
          acc += hm.col(k) * (root * bit_sign(b, j * db + k));
      }
    }
  }
  return out;
}

AdaptedField backward_ito_integral(const ScenarioLattice& lat,
                                   const std::vector<TransitionField>& h, int from, double tol) {
  const PathTable paths = backward_ito_integral_paths(lat, h, from);
  const int n = paths.value_dim();
  AdaptedField out(lat, from, n);
  // The adapted table at `from` fixes W bits below from*dw and B bits from
  // step `from` on; scan the remaining W bits for any genuine dependence.
  const std::uint64_t w_free = paths.w_count() / out.w_count();
  const std::uint64_t b_low = std::uint64_t{1} << (from * lat.db);
  double worst = 0.0;
  for (std::uint64_t w = 0; w < out.w_count(); ++w) {
    for (std::uint64_t b = 0; b < out.b_count(); ++b) {
      const std::uint64_t b_full = b << (from * lat.db);
      auto ref = paths.vec(w, b_full);
      out.vec(w, b) = ref;
      for (std::uint64_t s = 0; s < w_free; ++s) {
        const std::uint64_t w_full = w | (s << (from * lat.dw));
        for (std::uint64_t t = 0; t < b_low; ++t) {
          const double dev = (paths.vec(w_full, b_full | t) - ref).cwiseAbs().maxCoeff();
          worst = std::max(worst, dev);
        }
      }
    }
  }
  if (worst > tol) {
    throw ConfigError(
        "backward_ito_integral: result depends on W increments past the level "
        "(max deviation " +
        std::to_string(worst) + "); it is not F_t-measurable, use the path-table form");
  }
  return out;
}

PathTable forward_ito_integral(const ScenarioLattice& lat, const std::vector<AdaptedField>& v,
                               int from) {
  const int nsteps = lat.steps();
  if (from < 0 || from >= nsteps) throw ConfigError("forward_ito_integral: level out of range");
  if (static_cast<int>(v.size()) != nsteps - from)
    throw ConfigError("forward_ito_integral: missing integrand segment");
  const int dim = v.front().value_dim();
  const int dw = lat.dw;
  if (dim % dw != 0) throw ConfigError("forward_ito_integral: integrand value_dim must be n*dw");
  const int n = dim / dw;
  PathTable out(lat, n);
  const double root = lat.sqrt_dt();
  for (int j = from; j < nsteps; ++j) {
    const auto& vj = v[j - from];
    if (vj.level() != j) throw ConfigError("forward_ito_integral: integrand level mismatch");
    for (std::uint64_t w = 0; w < out.w_count(); ++w) {
      const std::uint64_t wj = w & (vj.w_count() - 1);
      for (std::uint64_t b = 0; b < out.b_count(); ++b) {
        const std::uint64_t bj = b >> (j * lat.db);
        const auto vm = vj.mat(wj, bj, n, dw);
        auto acc = out.vec(w, b);
        for (int k = 0; k < dw; ++k)
          acc += vm.col(k) * (root * bit_sign(w, j * dw + k));
      }
    }
  }
  return out;
}

Eigen::VectorXd expectation(const detail::FieldBase& x) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.value_dim());
  for (std::uint64_t w = 0; w < x.w_count(); ++w)
    for (std::uint64_t b = 0; b < x.b_count(); ++b) acc += x.vec(w, b);
  return acc / static_cast<double>(x.entries());
}

Eigen::VectorXd expectation(const PathTable& x) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(x.value_dim());
  for (std::uint64_t w = 0; w < x.w_count(); ++w)
    for (std::uint64_t b = 0; b < x.b_count(); ++b) acc += x.vec(w, b);
  return acc / static_cast<double>(x.entries());
}

double table_l2(const detail::FieldBase& x) {
  double acc = 0.0;
  for (std::uint64_t w = 0; w < x.w_count(); ++w)
    for (std::uint64_t b = 0; b < x.b_count(); ++b) acc += x.vec(w, b).squaredNorm();
  return std::sqrt(acc / static_cast<double>(x.entries()));
}

double max_entry_distance(const detail::FieldBase& a, const detail::FieldBase& b) {
  if (a.entries() != b.entries() || a.value_dim() != b.value_dim())
    throw ConfigError("max_entry_distance: shape mismatch");
  double worst = 0.0;
  for (std::uint64_t w = 0; w < a.w_count(); ++w)
    for (std::uint64_t bb = 0; bb < a.b_count(); ++bb)
      worst = std::max(worst, (a.vec(w, bb) - b.vec(w, bb)).norm());
  return worst;
}

double table_l2_distance(const detail::FieldBase& a, const detail::FieldBase& b) {
  if (a.entries() != b.entries() || a.value_dim() != b.value_dim())
    throw ConfigError("table_l2_distance: shape mismatch");
  double acc = 0.0;
  for (std::uint64_t w = 0; w < a.w_count(); ++w)
    for (std::uint64_t bb = 0; bb < a.b_count(); ++bb)
      acc += (a.vec(w, bb) - b.vec(w, bb)).squaredNorm();
  return std::sqrt(acc / static_cast<double>(a.entries()));
}

void dump_field_csv(std::ostream& os, const detail::FieldBase& x) {
  os << "level,w_index,b_index,component,value\n";
  char buf[64];
  for (std::uint64_t w = 0; w < x.w_count(); ++w) {
    for (std::uint64_t b = 0; b < x.b_count(); ++b) {
      const double* e = x.entry(w, b);
      for (int c = 0; c < x.value_dim(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", e[c]);
        os << x.level() << ',' << w << ',' << b << ',' << c << ',' << buf << '\n';
      }
    }
  }
}

AdaptedField make_terminal(const ScenarioLattice& lat, int value_dim,
                           const std::function<Eigen::VectorXd(std::uint64_t)>& fn) {
  AdaptedField g(lat, lat.steps(), value_dim);
  for (std::uint64_t w = 0; w < g.w_count(); ++w) g.vec(w, 0) = fn(w);
  return g;
}

AdaptedField brownian_terminal(const ScenarioLattice& lat) {
  return make_terminal(lat, lat.dw, [&lat](std::uint64_t w) {
    return increment_sum(lat, w, lat.dw, 0, lat.steps());
  });
}

}  // namespace bdsde
