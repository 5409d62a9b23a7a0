#include "gbopt/nlp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <utility>

namespace gbopt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Gathers the dependency slice of x in deps order.
RealVec gather(const RealVec& x, const std::vector<Eigen::Index>& deps) {
  RealVec xb(static_cast<Eigen::Index>(deps.size()));
  for (Eigen::Index i = 0; i < xb.size(); ++i) xb[i] = x[deps[i]];
  return xb;
}

void check_pattern_basic(const SparsityPattern& p, const std::string& where) {
  if (p.rows.size() != p.cols.size()) {
    throw StructuralError(where + ": pattern row/col lists differ in length");
  }
  std::set<std::pair<Eigen::Index, Eigen::Index>> seen;
  for (std::size_t k = 0; k < p.rows.size(); ++k) {
    if (!seen.insert({p.rows[k], p.cols[k]}).second) {
      throw StructuralError(where + ": duplicate pattern entry (" +
                            std::to_string(p.rows[k]) + ", " +
                            std::to_string(p.cols[k]) + ")");
    }
  }
}

void require_finite(const RealVec& v, const std::string& what) {
  if (!v.allFinite()) {
    throw NumericError(what + " produced a non-finite value");
  }
}

// Runs an oracle that fills a pattern-aligned buffer and enforces the size
// contract: the callback must leave the buffer at pattern length.
template <typename Fn>
void run_aligned(Fn&& fn, Eigen::Index expected, RealVec& buf,
                 const std::string& what) {
  buf.resize(expected);
  buf.setZero();
  fn(buf);
  if (buf.size() != expected) {
    throw ContractError(what + " wrote " + std::to_string(buf.size()) +
                        " values; declared pattern has " +
                        std::to_string(expected));
  }
  require_finite(buf, what);
}

// Rethrows an oracle error with the offending block identified, keeping
// the error category.
[[noreturn]] void throw_with_block(const Error& e, const std::string& name,
                                   std::size_t index) {
  const std::string msg = "block '" + name + "' (index " +
                          std::to_string(index) + "): " + e.what();
  if (dynamic_cast<const ContractError*>(&e) != nullptr) {
    throw ContractError(msg);
  }
  if (dynamic_cast<const NumericError*>(&e) != nullptr) {
    throw NumericError(msg);
  }
  throw StructuralError(msg);
}

Eigen::Index count_unique(const std::vector<Eigen::Index>& rows,
                          const std::vector<Eigen::Index>& cols) {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> entries(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) entries[k] = {rows[k], cols[k]};
  std::sort(entries.begin(), entries.end());
  entries.erase(std::unique(entries.begin(), entries.end()), entries.end());
  return static_cast<Eigen::Index>(entries.size());
}

}  // namespace

NlpProblem::NlpProblem(NlpProblem&& other) noexcept {
  *this = std::move(other);
}

NlpProblem& NlpProblem::operator=(NlpProblem&& other) noexcept {
  if (this == &other) return *this;
  std::lock_guard<std::mutex> lock(other.timing_mutex_);
  vars_ = std::move(other.vars_);
  blocks_ = std::move(other.blocks_);
  row_offsets_ = std::move(other.row_offsets_);
  n_con_ = other.n_con_;
  objective_ = std::move(other.objective_);
  obj_hess_nnz_ = other.obj_hess_nnz_;
  jac_rows_ = std::move(other.jac_rows_);
  jac_cols_ = std::move(other.jac_cols_);
  hess_rows_ = std::move(other.hess_rows_);
  hess_cols_ = std::move(other.hess_cols_);
  times_ = other.times_;
  return *this;
}

Eigen::Index NlpProblem::add_variable(VarSpec spec) {
  if (std::isnan(spec.lower)) {
    throw StructuralError("variable '" + spec.name + "': lower bound is NaN");
  }
  if (!std::isfinite(spec.init)) {
    throw StructuralError("variable '" + spec.name +
                          "': initial value must be finite");
  }
  vars_.push_back(std::move(spec));
  return n_var() - 1;
}

Eigen::Index NlpProblem::add_variables(const std::string& prefix,
                                       Eigen::Index count, double lower,
                                       const RealVec& init) {
  if (count <= 0) throw StructuralError("add_variables: count must be > 0");
  if (init.size() != count) {
    throw StructuralError("add_variables: init length " +
                          std::to_string(init.size()) + " != count " +
                          std::to_string(count));
  }
  const Eigen::Index first = n_var();
  for (Eigen::Index i = 0; i < count; ++i) {
    add_variable({prefix + std::to_string(i), lower, init[i]});
  }
  return first;
}

void NlpProblem::set_objective(ObjectiveOracle objective) {
  const bool has_value = static_cast<bool>(objective.value);
  const bool has_grad = static_cast<bool>(objective.gradient);
  if (has_value != has_grad) {
    throw StructuralError(
        "objective: value and gradient oracles must be set together");
  }
  check_pattern_basic(objective.hess_pattern, "objective Hessian");
  if (objective.hess_pattern.size() > 0 && !objective.hessian) {
    throw StructuralError(
        "objective: Hessian pattern declared without a Hessian oracle");
  }
  for (std::size_t k = 0; k < objective.hess_pattern.rows.size(); ++k) {
    const Eigen::Index r = objective.hess_pattern.rows[k];
    const Eigen::Index c = objective.hess_pattern.cols[k];
    if (r < 0 || r >= n_var() || c < 0 || c >= n_var()) {
      throw StructuralError("objective Hessian: pattern index out of range");
    }
    if (r < c) {
      throw StructuralError(
          "objective Hessian: pattern must be lower triangular");
    }
  }
  objective_ = std::move(objective);
  obj_hess_nnz_ = objective_.hess_pattern.size();
  rebuild_hess_pattern();
}

Eigen::Index NlpProblem::add_block(ConstraintBlock block) {
  const std::string where = "block '" + block.name + "'";
  if (block.arity <= 0) throw StructuralError(where + ": arity must be > 0");
  if (block.deps.empty()) {
    throw StructuralError(where + ": dependency list is empty");
  }
  if (!block.residual || !block.jacobian) {
    throw StructuralError(where +
                          ": residual and Jacobian oracles are required");
  }
  if (block.hess_pattern.size() > 0 && !block.lag_hessian) {
    throw StructuralError(
        where + ": Hessian pattern declared without a Hessian oracle");
  }

  std::set<Eigen::Index> dep_set;
  for (Eigen::Index d : block.deps) {
    if (d < 0 || d >= n_var()) {
      throw StructuralError(where + ": dependency index " + std::to_string(d) +
                            " out of range [0, " + std::to_string(n_var()) +
                            ")");
    }
    if (!dep_set.insert(d).second) {
      throw StructuralError(where + ": duplicate dependency index " +
                            std::to_string(d));
    }
  }

  const auto ndeps = static_cast<Eigen::Index>(block.deps.size());
  check_pattern_basic(block.jac_pattern, where + " Jacobian");
  for (std::size_t k = 0; k < block.jac_pattern.rows.size(); ++k) {
    const Eigen::Index r = block.jac_pattern.rows[k];
    const Eigen::Index c = block.jac_pattern.cols[k];
    if (r < 0 || r >= block.arity || c < 0 || c >= ndeps) {
      throw StructuralError(where + " Jacobian: pattern entry (" +
                            std::to_string(r) + ", " + std::to_string(c) +
                            ") out of range");
    }
  }
  check_pattern_basic(block.hess_pattern, where + " Hessian");
  for (std::size_t k = 0; k < block.hess_pattern.rows.size(); ++k) {
    const Eigen::Index a = block.hess_pattern.rows[k];
    const Eigen::Index b = block.hess_pattern.cols[k];
    if (a < 0 || a >= ndeps || b < 0 || b >= ndeps) {
      throw StructuralError(where + " Hessian: pattern entry (" +
                            std::to_string(a) + ", " + std::to_string(b) +
                            ") out of range");
    }
    if (block.deps[a] < block.deps[b]) {
      throw StructuralError(
          where +
          " Hessian: pattern must be lower triangular in global indices");
    }
  }

  const Eigen::Index row0 = n_con_;
  for (std::size_t k = 0; k < block.jac_pattern.rows.size(); ++k) {
    jac_rows_.push_back(row0 + block.jac_pattern.rows[k]);
    jac_cols_.push_back(block.deps[block.jac_pattern.cols[k]]);
  }
  for (std::size_t k = 0; k < block.hess_pattern.rows.size(); ++k) {
    hess_rows_.push_back(block.deps[block.hess_pattern.rows[k]]);
    hess_cols_.push_back(block.deps[block.hess_pattern.cols[k]]);
  }

  row_offsets_.push_back(row0);
  n_con_ += block.arity;
  blocks_.push_back(std::move(block));
  return n_blocks() - 1;
}

Eigen::Index NlpProblem::add_inequality_as_slack(
    ConstraintBlock block, const std::vector<IneqSense>& senses,
    const RealVec& rhs) {
  const std::string where = "block '" + block.name + "'";
  if (static_cast<Eigen::Index>(senses.size()) != block.arity ||
      rhs.size() != block.arity) {
    throw StructuralError(where +
                          ": senses and rhs must have one entry per row");
  }
  if (!block.residual) {
    throw StructuralError(where + ": residual oracle is required");
  }
  for (Eigen::Index d : block.deps) {
    if (d < 0 || d >= n_var()) {
      throw StructuralError(where + ": dependency index out of range");
    }
  }

  RealVec signs(block.arity);
  for (Eigen::Index i = 0; i < block.arity; ++i) {
    signs[i] = senses[static_cast<std::size_t>(i)] == IneqSense::LessEqual
                   ? 1.0
                   : -1.0;
  }

  // Seed slack starts from the residual at the current initial point:
  // with s0 = sign * (rhs - h(x0)) the rewritten equality holds exactly,
  // so the start is feasible whenever s0 >= 0.
  RealVec x0b(static_cast<Eigen::Index>(block.deps.size()));
  for (Eigen::Index i = 0; i < x0b.size(); ++i) {
    x0b[i] = vars_[static_cast<std::size_t>(block.deps[i])].init;
  }
  RealVec h0(block.arity);
  h0.setZero();
  block.residual(x0b, h0);
  RealVec s0 = signs.cwiseProduct(rhs - h0);
  for (Eigen::Index i = 0; i < s0.size(); ++i) {
    if (!std::isfinite(s0[i])) s0[i] = 0.0;
  }

  const Eigen::Index first_slack =
      add_variables(block.name + "_s", block.arity, 0.0, s0);
  const auto ncore = static_cast<Eigen::Index>(block.deps.size());
  for (Eigen::Index i = 0; i < block.arity; ++i) {
    block.deps.push_back(first_slack + i);
    block.jac_pattern.rows.push_back(i);
    block.jac_pattern.cols.push_back(ncore + i);
  }

  auto h_res = std::move(block.residual);
  block.residual = [h_res, signs, rhs, ncore](const RealVec& xb, RealVec& r) {
    RealVec core = xb.head(ncore);
    h_res(core, r);
    r += signs.cwiseProduct(xb.tail(signs.size())) - rhs;
  };

  auto h_jac = std::move(block.jacobian);
  const Eigen::Index h_nnz = block.jac_pattern.size() - block.arity;
  block.jacobian = [h_jac, signs, ncore, h_nnz](const RealVec& xb,
                                                RealVec& values) {
    RealVec core = xb.head(ncore);
    RealVec hv(h_nnz);
    hv.setZero();
    if (h_jac) h_jac(core, hv);
    values.head(h_nnz) = hv;
    values.tail(signs.size()) = signs;
  };

  if (block.lag_hessian) {
    auto h_hess = std::move(block.lag_hessian);
    block.lag_hessian = [h_hess, ncore](const RealVec& xb, const RealVec& lam,
                                        RealVec& values) {
      RealVec core = xb.head(ncore);
      h_hess(core, lam, values);
    };
  }

  return add_block(std::move(block));
}

void NlpProblem::rebuild_hess_pattern() {
  hess_rows_.clear();
  hess_cols_.clear();
  for (std::size_t k = 0; k < objective_.hess_pattern.rows.size(); ++k) {
    hess_rows_.push_back(objective_.hess_pattern.rows[k]);
    hess_cols_.push_back(objective_.hess_pattern.cols[k]);
  }
  for (const ConstraintBlock& b : blocks_) {
    for (std::size_t k = 0; k < b.hess_pattern.rows.size(); ++k) {
      hess_rows_.push_back(b.deps[b.hess_pattern.rows[k]]);
      hess_cols_.push_back(b.deps[b.hess_pattern.cols[k]]);
    }
  }
}

RealVec NlpProblem::lower_bounds() const {
  RealVec lb(n_var());
  for (Eigen::Index i = 0; i < lb.size(); ++i) {
    lb[i] = vars_[static_cast<std::size_t>(i)].lower;
  }
  return lb;
}

RealVec NlpProblem::initial_point() const {
  RealVec x0(n_var());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x0[i] = vars_[static_cast<std::size_t>(i)].init;
  }
  return x0;
}

Eigen::Index NlpProblem::jac_nnz_unique() const {
  return count_unique(jac_rows_, jac_cols_);
}

Eigen::Index NlpProblem::hess_nnz_unique() const {
  return count_unique(hess_rows_, hess_cols_);
}

bool NlpProblem::all_pure() const {
  return std::all_of(blocks_.begin(), blocks_.end(),
                     [](const ConstraintBlock& b) { return b.pure; });
}

void NlpProblem::check_x(const RealVec& x) const {
  if (x.size() != n_var()) {
    throw StructuralError("x has length " + std::to_string(x.size()) +
                          "; problem has " + std::to_string(n_var()) +
                          " variables");
  }
  if (!x.allFinite()) throw NumericError("x contains non-finite values");
}

double NlpProblem::eval_f(const RealVec& x) const {
  check_x(x);
  const auto t0 = Clock::now();
  const double f = objective_.value ? objective_.value(x) : 0.0;
  if (!std::isfinite(f)) {
    throw NumericError("objective value is non-finite");
  }
  const double dt = seconds_since(t0);
  std::lock_guard<std::mutex> lock(timing_mutex_);
  times_.function_s += dt;
  return f;
}

RealVec NlpProblem::eval_grad_f(const RealVec& x) const {
  check_x(x);
  const auto t0 = Clock::now();
  RealVec grad(n_var());
  grad.setZero();
  if (objective_.gradient) {
    objective_.gradient(x, grad);
    if (grad.size() != n_var()) {
      throw ContractError("objective gradient resized its output to " +
                          std::to_string(grad.size()));
    }
    require_finite(grad, "objective gradient");
  }
  const double dt = seconds_since(t0);
  std::lock_guard<std::mutex> lock(timing_mutex_);
  times_.function_s += dt;
  return grad;
}

RealVec NlpProblem::eval_g(const RealVec& x) const {
  check_x(x);
  const auto t0 = Clock::now();
  RealVec g(n_con_);
  RealVec r;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const ConstraintBlock& blk = blocks_[b];
    const RealVec xb = gather(x, blk.deps);
    r.resize(blk.arity);
    r.setZero();
    blk.residual(xb, r);
    if (r.size() != blk.arity) {
      throw ContractError("block '" + blk.name + "' (index " +
                          std::to_string(b) + ") residual wrote " +
                          std::to_string(r.size()) + " rows; arity is " +
                          std::to_string(blk.arity));
    }
    if (!r.allFinite()) {
      throw NumericError("block '" + blk.name + "' (index " +
                         std::to_string(b) +
                         ") residual produced a non-finite value");
    }
    g.segment(row_offsets_[b], blk.arity) = r;
  }
  const double dt = seconds_since(t0);
  std::lock_guard<std::mutex> lock(timing_mutex_);
  times_.function_s += dt;
  return g;
}

void NlpProblem::eval_jac(const RealVec& x, RealVec& values) const {
  check_x(x);
  const auto t0 = Clock::now();
  values.resize(jac_nnz());
  Eigen::Index off = 0;
  RealVec buf;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const ConstraintBlock& blk = blocks_[b];
    const RealVec xb = gather(x, blk.deps);
    const Eigen::Index nnz = blk.jac_pattern.size();
    try {
      run_aligned([&](RealVec& v) { blk.jacobian(xb, v); }, nnz, buf,
                  "Jacobian");
    } catch (const Error& e) {
      throw_with_block(e, blk.name, b);
    }
    values.segment(off, nnz) = buf;
    off += nnz;
  }
  const double dt = seconds_since(t0);
  std::lock_guard<std::mutex> lock(timing_mutex_);
  times_.jacobian_s += dt;
}

void NlpProblem::eval_lag_hess(const RealVec& x, const RealVec& lambda,
                               double obj_factor, RealVec& values) const {
  check_x(x);
  if (lambda.size() != n_con_) {
    throw StructuralError("lambda has length " + std::to_string(lambda.size()) +
                          "; problem has " + std::to_string(n_con_) +
                          " constraints");
  }
  if (!lambda.allFinite()) {
    throw NumericError("lambda contains non-finite values");
  }
  const auto t0 = Clock::now();
  values.resize(hess_nnz());
  RealVec buf;
  if (obj_hess_nnz_ > 0) {
    if (obj_factor != 0.0) {
      run_aligned([&](RealVec& v) { objective_.hessian(x, v); }, obj_hess_nnz_,
                  buf, "objective Hessian");
      values.head(obj_hess_nnz_) = obj_factor * buf;
    } else {
      values.head(obj_hess_nnz_).setZero();
    }
  }
  Eigen::Index off = obj_hess_nnz_;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const ConstraintBlock& blk = blocks_[b];
    const Eigen::Index nnz = blk.hess_pattern.size();
    if (nnz == 0) continue;
    const RealVec xb = gather(x, blk.deps);
    const RealVec lam = lambda.segment(row_offsets_[b], blk.arity);
    try {
      run_aligned([&](RealVec& v) { blk.lag_hessian(xb, lam, v); }, nnz, buf,
                  "Hessian");
    } catch (const Error& e) {
      throw_with_block(e, blk.name, b);
    }
    values.segment(off, nnz) = buf;
    off += nnz;
  }
  const double dt = seconds_since(t0);
  std::lock_guard<std::mutex> lock(timing_mutex_);
  times_.hessian_s += dt;
}

EvalAll NlpProblem::eval_all(const RealVec& x, const RealVec& lambda) const {
  EvalAll out;
  out.f = eval_f(x);
  out.grad_f = eval_grad_f(x);
  out.g = eval_g(x);
  eval_jac(x, out.jac_values);
  eval_lag_hess(x, lambda, 1.0, out.hess_values);
  return out;
}

EvalTimes NlpProblem::timing() const {
  std::lock_guard<std::mutex> lock(timing_mutex_);
  return times_;
}

void NlpProblem::reset_timing() {
  std::lock_guard<std::mutex> lock(timing_mutex_);
  times_ = EvalTimes{};
}

}  // namespace gbopt
