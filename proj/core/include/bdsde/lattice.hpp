#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "bdsde/errors.hpp"

namespace bdsde {

/// Uniform partition of [0, T].
struct TimeGrid {
  double horizon = 1.0;
  int steps = 1;

  double dt() const { return horizon / steps; }
  double time(int i) const { return i * dt(); }
};

/// Finite scenario space for two independent drivers W and B.
///
/// Each driver increment per step and component takes the values
/// +-sqrt(dt) with probability 1/2, independently of everything else
/// (bit 0 -> -sqrt(dt), bit 1 -> +sqrt(dt)). Scenario indices pack the
/// increment bits chronologically, little-endian: within a W index, step j
/// component k sits at bit j*dw + k, and likewise for B indices.
struct ScenarioLattice {
  TimeGrid grid;
  int dw = 1;
  int db = 1;
  bool exact_representation = true;  // true iff dw == 1
  int cap_bits = 26;                 // per-level table cap: 2^cap_bits entries

  int steps() const { return grid.steps; }
  double dt() const { return grid.dt(); }
  double sqrt_dt() const;

  /// Bits indexing an adapted table at `level`: level*dw + (steps-level)*db.
  int level_bits(int level) const { return level * dw + (steps() - level) * db; }
  std::uint64_t level_table_size(int level) const { return std::uint64_t{1} << level_bits(level); }
};

/// Build a lattice, enforcing the per-level table cap.
ScenarioLattice build_lattice(double horizon, int steps, int dw, int db, int cap_bits = 26);

namespace detail {

/// Storage shared by adapted and transition fields: a dense table over
/// (w_index, b_index) of value_dim-vectors, w-major.
class FieldBase {
public:
  FieldBase() = default;
  FieldBase(const ScenarioLattice& lat, int level, int w_steps, int value_dim);

  int level() const { return level_; }
  int w_steps() const { return w_steps_; }
  int b_steps() const { return b_steps_; }
  int value_dim() const { return dim_; }
  int dw() const { return dw_; }
  int db() const { return db_; }
  std::uint64_t w_count() const { return w_count_; }
  std::uint64_t b_count() const { return b_count_; }
  std::uint64_t entries() const { return w_count_ * b_count_; }

  double* entry(std::uint64_t w, std::uint64_t b) {
    return data_.data() + (w * b_count_ + b) * dim_;
  }
  const double* entry(std::uint64_t w, std::uint64_t b) const {
    return data_.data() + (w * b_count_ + b) * dim_;
  }
  Eigen::Map<Eigen::VectorXd> vec(std::uint64_t w, std::uint64_t b) {
    return {entry(w, b), dim_};
  }
  Eigen::Map<const Eigen::VectorXd> vec(std::uint64_t w, std::uint64_t b) const {
    return {entry(w, b), dim_};
  }
  /// Matrix view of one entry, column-major rows*cols == value_dim.
  Eigen::Map<const Eigen::MatrixXd> mat(std::uint64_t w, std::uint64_t b, int rows, int cols) const {
    return {entry(w, b), rows, cols};
  }
  Eigen::Map<Eigen::MatrixXd> mat(std::uint64_t w, std::uint64_t b, int rows, int cols) {
    return {entry(w, b), rows, cols};
  }

  std::vector<double>& raw() { return data_; }
  const std::vector<double>& raw() const { return data_; }

  /// Value on a full scenario (w over all steps*dw bits, b over steps*db).
  Eigen::Map<const Eigen::VectorXd> at_path(std::uint64_t w_full, std::uint64_t b_full) const {
    const std::uint64_t w = w_full & (w_count_ - 1);
    const std::uint64_t b = b_full >> (level_ * db_);
    return vec(w, b);
  }

protected:
  int level_ = 0, w_steps_ = 0, b_steps_ = 0, dw_ = 1, db_ = 1, dim_ = 0;
  std::uint64_t w_count_ = 1, b_count_ = 1;
  std::vector<double> data_;
};

}  // namespace detail

/// F_{t_i}-measurable field: depends on W increments of steps [0, i) and
/// B increments of steps [i, N).
class AdaptedField : public detail::FieldBase {
public:
  AdaptedField() = default;
  AdaptedField(const ScenarioLattice& lat, int level, int value_dim)
      : FieldBase(lat, level, level, value_dim) {}
};

/// One-step bookkeeping field at level i: depends on W increments of steps
/// [0, i] and B increments of steps [i, N). This is the measurability class
/// of u_{i+1} + J_{i+1} dB_i in one backward step.
class TransitionField : public detail::FieldBase {
public:
  TransitionField() = default;
  TransitionField(const ScenarioLattice& lat, int level, int value_dim)
      : FieldBase(lat, level, level + 1, value_dim) {}
};

/// Dense table over full scenarios (all W bits, all B bits).
class PathTable {
public:
  PathTable() = default;
  PathTable(const ScenarioLattice& lat, int value_dim);

  int value_dim() const { return dim_; }
  std::uint64_t w_count() const { return w_count_; }
  std::uint64_t b_count() const { return b_count_; }
  std::uint64_t entries() const { return w_count_ * b_count_; }

  double* entry(std::uint64_t w, std::uint64_t b) {
    return data_.data() + (w * b_count_ + b) * dim_;
  }
  const double* entry(std::uint64_t w, std::uint64_t b) const {
    return data_.data() + (w * b_count_ + b) * dim_;
  }
  Eigen::Map<Eigen::VectorXd> vec(std::uint64_t w, std::uint64_t b) { return {entry(w, b), dim_}; }
  Eigen::Map<const Eigen::VectorXd> vec(std::uint64_t w, std::uint64_t b) const {
    return {entry(w, b), dim_};
  }

private:
  int dim_ = 0;
  std::uint64_t w_count_ = 1, b_count_ = 1;
  std::vector<double> data_;
};

struct MartingaleCoefficients {
  AdaptedField m;       ///< conditional mean at the level
  AdaptedField v;       ///< dW-integrand, value_dim = n*dw (column-major n x dw)
  double residual = 0;  ///< max |X - m - v.dW| over the table; 0 when dw == 1
};

/// Conditional expectation onto F_{t_i}: integrates out the step-i W bits.
AdaptedField condexp(const ScenarioLattice& lat, const TransitionField& x);

/// Conditional expectation onto an earlier level (averages all W steps past
/// the target and broadcasts over the B steps the target adds).
AdaptedField condexp_to_level(const ScenarioLattice& lat, const detail::FieldBase& x, int target_level);

/// Two-point martingale representation of a transition field:
/// X = m + v.dW + residual with E[residual | F_i] = 0, E[residual dW | F_i] = 0.
MartingaleCoefficients martingale_coefficients(const ScenarioLattice& lat, const TransitionField& x);

/// Broadcast an adapted field at level i+1 to the transition class at level i.
TransitionField lift(const ScenarioLattice& lat, const AdaptedField& a);

/// Sum_{j>=from} h_j dB_j with right-endpoint integrands, exact per path.
PathTable backward_ito_integral_paths(const ScenarioLattice& lat,
                                      const std::vector<TransitionField>& h, int from);

/// Same sum reduced to an adapted field at `from`; errors if the result
/// depends on W increments past the level (then it is not F_t-measurable
/// and only the path-table form exists).
AdaptedField backward_ito_integral(const ScenarioLattice& lat,
                                   const std::vector<TransitionField>& h, int from,
                                   double tol = 1e-12);

/// Sum_{j>=from} v_j dW_j with left-endpoint integrands, exact per path.
PathTable forward_ito_integral(const ScenarioLattice& lat,
                               const std::vector<AdaptedField>& v, int from);

/// Uniform average over the table.
Eigen::VectorXd expectation(const detail::FieldBase& x);
Eigen::VectorXd expectation(const PathTable& x);

/// sqrt of the uniform average of squared Euclidean entry norms.
double table_l2(const detail::FieldBase& x);

/// Max Euclidean entry-norm of the difference of two same-shape fields.
double max_entry_distance(const detail::FieldBase& a, const detail::FieldBase& b);

/// table_l2 of the difference of two same-shape fields.
double table_l2_distance(const detail::FieldBase& a, const detail::FieldBase& b);

/// CSV dump: level,w_index,b_index,component,value; w-major row order.
void dump_field_csv(std::ostream& os, const detail::FieldBase& x);

/// Terminal field G(w) built from a function of the full W index.
AdaptedField make_terminal(const ScenarioLattice& lat, int value_dim,
                           const std::function<Eigen::VectorXd(std::uint64_t)>& fn);

/// W_T as a dw-dimensional terminal field.
AdaptedField brownian_terminal(const ScenarioLattice& lat);

/// Path sum of the step increments encoded in a packed index, per component.
Eigen::VectorXd increment_sum(const ScenarioLattice& lat, std::uint64_t index, int ncomp,
                              int step_begin, int step_end);

}  // namespace bdsde
