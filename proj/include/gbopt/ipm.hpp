#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "gbopt/linalg.hpp"
#include "gbopt/nlp.hpp"

namespace gbopt {

// Knobs for the primal-dual interior-point solver. Defaults follow the
// shipped configuration; see solve() for semantics.
struct IpmOptions {
  double tol = 1e-6;          // scaled KKT error target
  int max_iter = 3000;
  double mu_init = 0.1;       // initial barrier parameter
  double mu_shrink = 0.2;     // linear factor in the barrier schedule
  double mu_power = 1.5;      // superlinear exponent in the barrier schedule
  double tau = 0.995;         // fraction-to-boundary
  double delta0 = 1e-4;       // first primal regularization attempted
  double delta_growth = 10.0; // geometric escalation factor
  double delta_max = 1e40;    // escalation past this raises LinAlgFailure
  double armijo_c = 1e-4;     // sufficient-decrease constant
  double time_limit_s = std::numeric_limits<double>::infinity();
};

enum class IpmStatus : std::uint8_t {
  Optimal,
  MaxIter,
  TimeLimit,
  Infeasible,
  LinAlgFailure,
};

const char* ipm_status_name(IpmStatus status);

// Wall-clock split of one solve. The first three accumulate inside the
// problem's oracle calls; solver_s is all remaining time (assembly,
// factorization, triangular solves, line search), so the four categories
// are mutually exclusive and sum to the solve wall-time.
struct IpmTiming {
  double function_s = 0.0;
  double jacobian_s = 0.0;
  double hessian_s = 0.0;
  double solver_s = 0.0;

  double total() const {
    return function_s + jacobian_s + hessian_s + solver_s;
  }
};

// One accepted iteration (or restoration hand-off, flagged). merit_* are
// the line-search merit function at the iteration's own (mu, penalty)
// before and after the step; kkt_error is the scaled error at the new
// iterate with the complementarity target at zero.
struct IpmTraceRow {
  int iter = 0;
  double mu = 0.0;
  double alpha_primal = 0.0;
  double alpha_dual = 0.0;
  double kkt_error = 0.0;
  double merit_before = 0.0;
  double merit_after = 0.0;
  double delta_w = 0.0;
  bool restoration = false;
};

struct IpmResult {
  IpmStatus status = IpmStatus::MaxIter;
  RealVec x;
  RealVec lambda;  // equality multipliers
  RealVec z;       // bound multipliers (zero entries for free variables)
  int iterations = 0;
  double objective = 0.0;
  double kkt_error = 0.0;
  IpmTiming timing;
  std::vector<IpmTraceRow> trace;
};

// Dense symmetric KKT system: [[H + Sigma + dw*I, J^T], [J, -dc*I]] with
// the right-hand side of the Newton step folded in.
struct KktSystem {
  RealMat mat;
  RealVec rhs;
  Eigen::Index n_var = 0;
  Eigen::Index n_con = 0;
};

// Assembles the dense KKT matrix and right-hand side from triplet data.
// Sigma adds z_i / (x_i - lower_i) on the diagonal for bounded variables
// only; the dual residual carries the barrier term +mu/(x_i - lower_i).
// Duplicate triplet coordinates are summed. Pure assembly, no oracles.
KktSystem assemble_kkt(const RealVec& x, const RealVec& lower,
                       const RealVec& z, const RealVec& lambda,
                       const RealVec& grad_f, const RealVec& g,
                       const std::vector<Eigen::Index>& jac_rows,
                       const std::vector<Eigen::Index>& jac_cols,
                       const RealVec& jac_values,
                       const std::vector<Eigen::Index>& hess_rows,
                       const std::vector<Eigen::Index>& hess_cols,
                       const RealVec& hess_values, double mu,
                       double delta_w = 0.0, double delta_c = 0.0);

struct CorrectedFactorization {
  LdltFactorization fact;
  double delta_w = 0.0;
  double delta_c = 0.0;
};

// Factorizes kkt.mat with primal regularization escalated geometrically
// (0, then delta_w_start or delta0, then *= growth) until the inertia is
// exactly (n_var, n_con, 0). Zero pivots with constraints present switch
// on dual regularization delta_c = 1e-8, escalated geometrically while
// zero pivots persist (the shift must clear the factorization's
// scale-relative zero threshold to register). Throws SingularError once
// delta_w exceeds opts.delta_max.
CorrectedFactorization inertia_correct(const KktSystem& kkt,
                                       const IpmOptions& opts,
                                       double delta_w_start = 0.0);

// Largest step alpha <= 1 keeping v + alpha*dv at least (1 - tau) of the
// current margin to the lower bounds; entries with non-finite bounds are
// unconstrained.
double max_step_to_boundary(const RealVec& v, const RealVec& lower,
                            const RealVec& dv, double tau);

// Lifts entries to at least lower_i + 1e-2 * max(1, |lower_i|) so the
// barrier is defined at the start.
RealVec push_to_interior(const RealVec& x, const RealVec& lower);

// Primal-dual interior-point solve of problem (min f, g = 0, x >= lower)
// with a monotone barrier schedule, inertia-corrected Newton steps, an
// Armijo line search on the barrier-plus-l1-penalty merit function, and a
// least-squares restoration fallback.
IpmResult ipm_solve(const NlpProblem& problem, const IpmOptions& opts = {});

}  // namespace gbopt
