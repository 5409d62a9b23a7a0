#pragma once

#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <vector>

#include "gbopt/errors.hpp"
#include "gbopt/linalg.hpp"

namespace gbopt {

inline constexpr double kNoLowerBound =
    -std::numeric_limits<double>::infinity();

// A scalar decision variable. `lower` may be -inf (free variable, excluded
// from the barrier); there are no upper bounds at this layer, callers model
// x <= u as a slacked inequality row.
struct VarSpec {
  std::string name;
  double lower = kNoLowerBound;
  double init = 0.0;
};

// Parallel (row, col) index arrays naming where an oracle writes values.
struct SparsityPattern {
  std::vector<Eigen::Index> rows;
  std::vector<Eigen::Index> cols;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(rows.size());
  }
};

// Direction of an inequality row handed to add_inequality_as_slack.
enum class IneqSense : std::uint8_t {
  LessEqual,     // h(x) <= c  ->  h(x) - c + s = 0, s >= 0
  GreaterEqual,  // h(x) >= c  ->  h(x) - c - s = 0, s >= 0
};

// A group of `arity` scalar equality constraints that read only the
// variables listed in `deps`. Oracles receive the dependency values in
// `deps` order and write into buffers aligned with the declared patterns:
// values[k] corresponds to pattern entry k. Patterns use local coordinates
// (rows in [0, arity), cols indexing into deps). The Hessian pattern must
// be lower triangular after mapping through deps (deps[r] >= deps[c]) and
// its oracle receives this block's multiplier slice.
struct ConstraintBlock {
  std::string name;
  Eigen::Index arity = 0;
  std::vector<Eigen::Index> deps;

  std::function<void(const RealVec& xb, RealVec& r)> residual;
  std::function<void(const RealVec& xb, RealVec& values)> jacobian;
  std::function<void(const RealVec& xb, const RealVec& lam, RealVec& values)>
      lag_hessian;

  SparsityPattern jac_pattern;
  SparsityPattern hess_pattern;

  // Concurrent evaluation of the problem is safe only if every block
  // declares its oracles pure (no shared mutable state).
  bool pure = true;
};

// Objective callbacks over the full variable vector. The Hessian pattern
// uses global coordinates and must be lower triangular. A default
// constructed oracle is the zero objective.
struct ObjectiveOracle {
  std::function<double(const RealVec& x)> value;
  std::function<void(const RealVec& x, RealVec& grad)> gradient;
  std::function<void(const RealVec& x, RealVec& values)> hessian;
  SparsityPattern hess_pattern;
};

// Wall-clock seconds spent inside user oracles, split by category.
// function_s covers objective value, objective gradient and constraint
// residuals; jacobian_s the constraint Jacobian; hessian_s the Lagrangian
// Hessian (objective curvature included).
struct EvalTimes {
  double function_s = 0.0;
  double jacobian_s = 0.0;
  double hessian_s = 0.0;

  double total() const { return function_s + jacobian_s + hessian_s; }
};

// One full evaluation: objective, gradient, residuals and the sparse
// Jacobian / Lagrangian Hessian values aligned with the problem's
// aggregate patterns (jac_rows()/jac_cols(), hess_rows()/hess_cols()).
struct EvalAll {
  double f = 0.0;
  RealVec grad_f;
  RealVec g;
  RealVec jac_values;
  RealVec hess_values;
};

// Sparse NLP
//
//   min f(x)  s.t.  g(x) = 0,  x_i >= lower_i (lower_i may be -inf)
//
// assembled from constraint blocks. Rows are stacked in block insertion
// order; the aggregate Jacobian/Hessian triplet lists concatenate the block
// patterns (plus the objective Hessian, stored first), so coordinates may
// repeat across blocks and consumers must sum duplicates. Structure is
// fixed at add time; evaluation is const and thread-compatible except for
// the timing accumulator, which is guarded by a mutex.
class NlpProblem {
public:
  NlpProblem() = default;
  // Movable (the timing mutex is not transferred, its counters are);
  // not copyable.
  NlpProblem(NlpProblem&& other) noexcept;
  NlpProblem& operator=(NlpProblem&& other) noexcept;
  NlpProblem(const NlpProblem&) = delete;
  NlpProblem& operator=(const NlpProblem&) = delete;

  // Returns the new variable's index.
  Eigen::Index add_variable(VarSpec spec);

  // Adds `count` variables sharing one lower bound, named prefix0, prefix1,
  // ... Returns the index of the first.
  Eigen::Index add_variables(const std::string& prefix, Eigen::Index count,
                             double lower, const RealVec& init);

  void set_objective(ObjectiveOracle objective);

  // Validates patterns and oracles, assigns the block a row range and
  // returns the block index.
  Eigen::Index add_block(ConstraintBlock block);

  // Rewrites the inequality rows h(x) <op> rhs as equalities with fresh
  // slack variables s >= 0 (see IneqSense), then adds the block. `senses`
  // and `rhs` have one entry per row. Slack initial values are seeded from
  // the block residual at the current initial point so the start is
  // feasible for the new equalities whenever the slack comes out
  // nonnegative. Returns the block index.
  Eigen::Index add_inequality_as_slack(ConstraintBlock block,
                                       const std::vector<IneqSense>& senses,
                                       const RealVec& rhs);

  Eigen::Index n_var() const { return static_cast<Eigen::Index>(vars_.size()); }
  Eigen::Index n_con() const { return n_con_; }
  Eigen::Index n_blocks() const {
    return static_cast<Eigen::Index>(blocks_.size());
  }
  const VarSpec& var(Eigen::Index i) const { return vars_.at(i); }
  const ConstraintBlock& block(Eigen::Index b) const { return blocks_.at(b); }
  Eigen::Index block_row_offset(Eigen::Index b) const {
    return row_offsets_.at(b);
  }

  RealVec lower_bounds() const;
  RealVec initial_point() const;

  // Aggregate triplet coordinates (global). Entry k of the value buffers
  // filled by eval_jac / eval_lag_hess lives at (rows[k], cols[k]).
  const std::vector<Eigen::Index>& jac_rows() const { return jac_rows_; }
  const std::vector<Eigen::Index>& jac_cols() const { return jac_cols_; }
  const std::vector<Eigen::Index>& hess_rows() const { return hess_rows_; }
  const std::vector<Eigen::Index>& hess_cols() const { return hess_cols_; }

  // Triplet counts (duplicates across blocks included).
  Eigen::Index jac_nnz() const {
    return static_cast<Eigen::Index>(jac_rows_.size());
  }
  Eigen::Index hess_nnz() const {
    return static_cast<Eigen::Index>(hess_rows_.size());
  }

  // Structural nonzero counts after merging duplicate coordinates.
  Eigen::Index jac_nnz_unique() const;
  Eigen::Index hess_nnz_unique() const;

  double eval_f(const RealVec& x) const;
  RealVec eval_grad_f(const RealVec& x) const;
  RealVec eval_g(const RealVec& x) const;
  void eval_jac(const RealVec& x, RealVec& values) const;

  // Values for obj_factor * H_f + sum_i lambda_i * H_{g_i}, aligned with
  // hess_rows()/hess_cols(). obj_factor = 0 drops objective curvature
  // (used by least-squares subproblems).
  void eval_lag_hess(const RealVec& x, const RealVec& lambda,
                     double obj_factor, RealVec& values) const;

  EvalAll eval_all(const RealVec& x, const RealVec& lambda) const;

  EvalTimes timing() const;
  void reset_timing();

  // True when every block declares pure oracles; evaluation is reentrant
  // only in that case (the timing accumulator is always mutex-guarded).
  bool all_pure() const;

private:
  void check_x(const RealVec& x) const;
  void rebuild_hess_pattern();

  std::vector<VarSpec> vars_;
  std::vector<ConstraintBlock> blocks_;
  std::vector<Eigen::Index> row_offsets_;
  Eigen::Index n_con_ = 0;
  ObjectiveOracle objective_;
  Eigen::Index obj_hess_nnz_ = 0;

  std::vector<Eigen::Index> jac_rows_, jac_cols_;
  std::vector<Eigen::Index> hess_rows_, hess_cols_;

  mutable std::mutex timing_mutex_;
  mutable EvalTimes times_;
};

}  // namespace gbopt
