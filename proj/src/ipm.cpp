#include "gbopt/ipm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "gbopt/errors.hpp"

namespace gbopt {

namespace {

using Clock = std::chrono::steady_clock;

// Barrier subproblem is considered solved when the mu-centered KKT error
// drops below kKappaEps * mu.
constexpr double kKappaEps = 10.0;
// Safeguard keeping bound multipliers within a factor of mu/(x - l).
constexpr double kSigmaMax = 1e10;
// Line-search steps below this trigger the regularization retry, then
// restoration.
constexpr double kMinStep = 1e-14;
constexpr double kDeltaC = 1e-8;
constexpr double kDeltaCMax = 1e-2;
constexpr int kRestorationIters = 30;
constexpr int kMaxRestorations = 10;

double elapsed_s(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// J^T * lambda from triplets.
RealVec jac_t_lambda(const std::vector<Eigen::Index>& rows,
                     const std::vector<Eigen::Index>& cols,
                     const RealVec& values, const RealVec& lambda,
                     Eigen::Index n) {
  RealVec out = RealVec::Zero(n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out[cols[k]] += values[static_cast<Eigen::Index>(k)] * lambda[rows[k]];
  }
  return out;
}

// Oracle values cached at the current iterate.
struct PointEval {
  double f = 0.0;
  RealVec grad_f;
  RealVec g;
  RealVec jac_values;
};

PointEval eval_point(const NlpProblem& p, const RealVec& x) {
  PointEval pe;
  pe.f = p.eval_f(x);
  pe.grad_f = p.eval_grad_f(x);
  pe.g = p.eval_g(x);
  p.eval_jac(x, pe.jac_values);
  return pe;
}

// Scaled KKT residuals following the standard multiplier-magnitude
// scalings s_d, s_c = max(100, mean |multiplier|) / 100.
struct Residuals {
  double dual_inf = 0.0;
  double primal_inf = 0.0;
  double s_d = 1.0;
  double s_c = 1.0;
  RealVec slack_z;  // (x_i - l_i) * z_i for bounded i, 0 elsewhere
  std::vector<char> bounded;

  // Largest |x z - mu| over bounded entries.
  double comp(double mu) const {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < slack_z.size(); ++i) {
      if (bounded[static_cast<std::size_t>(i)]) {
        worst = std::max(worst, std::abs(slack_z[i] - mu));
      }
    }
    return worst;
  }

  double error(double mu) const {
    return std::max({dual_inf / s_d, primal_inf, comp(mu) / s_c});
  }
};

Residuals compute_residuals(const NlpProblem& p, const PointEval& pe,
                            const RealVec& x, const RealVec& lower,
                            const RealVec& lambda, const RealVec& z,
                            const std::vector<char>& bounded) {
  const Eigen::Index n = x.size();
  Residuals r;
  r.bounded = bounded;

  RealVec dual = pe.grad_f +
                 jac_t_lambda(p.jac_rows(), p.jac_cols(), pe.jac_values,
                              lambda, n) -
                 z;
  r.dual_inf = dual.size() > 0 ? dual.lpNorm<Eigen::Infinity>() : 0.0;
  r.primal_inf = pe.g.size() > 0 ? pe.g.lpNorm<Eigen::Infinity>() : 0.0;

  r.slack_z = RealVec::Zero(n);
  Eigen::Index n_bounded = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (bounded[static_cast<std::size_t>(i)]) {
      r.slack_z[i] = (x[i] - lower[i]) * z[i];
      ++n_bounded;
    }
  }

  const double z_sum = z.lpNorm<1>();
  const double lam_sum = lambda.size() > 0 ? lambda.lpNorm<1>() : 0.0;
  const Eigen::Index dual_count = pe.g.size() + n_bounded;
  r.s_d = dual_count > 0
              ? std::max(100.0, (lam_sum + z_sum) /
                                    static_cast<double>(dual_count)) /
                    100.0
              : 1.0;
  r.s_c = n_bounded > 0
              ? std::max(100.0, z_sum / static_cast<double>(n_bounded)) /
                    100.0
              : 1.0;
  return r;
}

// Barrier + l1-penalty merit function; +inf outside the interior.
double merit_value(double f, const RealVec& g, const RealVec& x,
                   const RealVec& lower, const std::vector<char>& bounded,
                   double mu, double rho) {
  double phi = f;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!bounded[static_cast<std::size_t>(i)]) continue;
    const double s = x[i] - lower[i];
    if (s <= 0.0) return std::numeric_limits<double>::infinity();
    phi -= mu * std::log(s);
  }
  if (g.size() > 0) phi += rho * g.lpNorm<1>();
  return phi;
}

void validate_options(const IpmOptions& o) {
  if (!(o.tol > 0.0)) throw StructuralError("IpmOptions: tol must be > 0");
  if (!(o.tau > 0.0 && o.tau < 1.0)) {
    throw StructuralError("IpmOptions: tau must lie in (0, 1)");
  }
  if (!(o.mu_shrink > 0.0 && o.mu_shrink < 1.0)) {
    throw StructuralError("IpmOptions: mu_shrink must lie in (0, 1)");
  }
  if (o.max_iter < 0) throw StructuralError("IpmOptions: max_iter < 0");
  if (!(o.mu_init > 0.0)) {
    throw StructuralError("IpmOptions: mu_init must be > 0");
  }
  if (!(o.delta_growth > 1.0)) {
    throw StructuralError("IpmOptions: delta_growth must be > 1");
  }
}

// Bound-constrained least squares on the violation of p's equalities:
// min 0.5 ||g(x)||^2 s.t. the original lower bounds, started at x_now.
// Curvature is the Gauss-Newton J^T J, the standard model for this
// objective; the constraint-curvature term is dropped deliberately.
NlpProblem make_restoration_problem(const NlpProblem& p, const RealVec& x_now) {
  const Eigen::Index n = p.n_var();
  NlpProblem r;
  for (Eigen::Index i = 0; i < n; ++i) {
    r.add_variable({p.var(i).name, p.var(i).lower, x_now[i]});
  }

  const NlpProblem* orig = &p;
  ObjectiveOracle obj;
  obj.value = [orig](const RealVec& x) {
    return 0.5 * orig->eval_g(x).squaredNorm();
  };
  obj.gradient = [orig, n](const RealVec& x, RealVec& grad) {
    const RealVec g = orig->eval_g(x);
    RealVec jv;
    orig->eval_jac(x, jv);
    grad = jac_t_lambda(orig->jac_rows(), orig->jac_cols(), jv, g, n);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      obj.hess_pattern.rows.push_back(i);
      obj.hess_pattern.cols.push_back(j);
    }
  }
  obj.hessian = [orig, n](const RealVec& x, RealVec& values) {
    RealVec jv;
    orig->eval_jac(x, jv);
    RealMat jac = RealMat::Zero(orig->n_con(), n);
    const auto& rows = orig->jac_rows();
    const auto& cols = orig->jac_cols();
    for (std::size_t k = 0; k < rows.size(); ++k) {
      jac(rows[k], cols[k]) += jv[static_cast<Eigen::Index>(k)];
    }
    RealMat jtj(n, n);
    jtj.setZero();
    jtj.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) values[k++] = jtj(i, j);
    }
  };
  r.set_objective(std::move(obj));
  return r;
}

IpmResult solve_impl(const NlpProblem& p, const IpmOptions& opts, int depth);

// Runs the recursive restoration solve and returns its final iterate.
RealVec run_restoration(const NlpProblem& p, const RealVec& x_now,
                        const IpmOptions& opts, double time_left_s,
                        int depth) {
  NlpProblem rest = make_restoration_problem(p, x_now);
  IpmOptions ropts = opts;
  ropts.max_iter = kRestorationIters;
  ropts.time_limit_s = time_left_s;
  const IpmResult res = solve_impl(rest, ropts, depth + 1);
  return res.x;
}

IpmResult solve_impl(const NlpProblem& p, const IpmOptions& opts, int depth) {
  validate_options(opts);
  const auto t0 = Clock::now();
  const EvalTimes oracle0 = p.timing();

  const Eigen::Index n = p.n_var();
  const Eigen::Index m = p.n_con();
  if (n == 0) throw StructuralError("ipm_solve: problem has no variables");

  const RealVec lower = p.lower_bounds();
  std::vector<char> bounded(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    bounded[static_cast<std::size_t>(i)] = std::isfinite(lower[i]) ? 1 : 0;
  }

  RealVec x = push_to_interior(p.initial_point(), lower);
  double mu = opts.mu_init;
  const double mu_floor = opts.tol / 10.0;
  RealVec lambda = RealVec::Zero(m);
  RealVec z = RealVec::Zero(n);
  auto reset_z = [&]() {
    for (Eigen::Index i = 0; i < n; ++i) {
      z[i] = bounded[static_cast<std::size_t>(i)]
                 ? std::max(1.0, mu / (x[i] - lower[i]))
                 : 0.0;
    }
  };
  reset_z();

  double rho = 1.0;  // l1 penalty in the merit function
  int restorations = 0;

  IpmResult result;
  result.status = IpmStatus::MaxIter;

  PointEval pe = eval_point(p, x);
  Residuals res = compute_residuals(p, pe, x, lower, lambda, z, bounded);
  RealVec hess_values;

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    if (res.error(0.0) <= opts.tol && mu < opts.tol) {
      result.status = IpmStatus::Optimal;
      break;
    }
    if (elapsed_s(t0) > opts.time_limit_s) {
      result.status = IpmStatus::TimeLimit;
      break;
    }

    // Monotone barrier schedule: one shrink per iteration, once the
    // mu-centered error clears kKappaEps * mu.
    if (mu > mu_floor && res.error(mu) <= kKappaEps * mu) {
      mu = std::max(mu_floor,
                    std::min(opts.mu_shrink * mu, std::pow(mu, opts.mu_power)));
    }

    p.eval_lag_hess(x, lambda, 1.0, hess_values);

    bool accepted = false;
    bool linalg_failed = false;
    double alpha = 0.0;
    double alpha_d = 0.0;
    double used_delta_w = 0.0;
    double phi0 = 0.0;
    double phi_new = 0.0;
    RealVec x_new, dx, dlam, dz(n);
    double delta_w_start = 0.0;

    try {
      const KktSystem kkt = assemble_kkt(
          x, lower, z, lambda, pe.grad_f, pe.g, p.jac_rows(), p.jac_cols(),
          pe.jac_values, p.hess_rows(), p.hess_cols(), hess_values, mu);

      // Two rounds: normal step, then one retry with extra regularization
      // if the line search collapses.
      for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
        const CorrectedFactorization cf =
            inertia_correct(kkt, opts, delta_w_start);
        used_delta_w = cf.delta_w;

        const RealVec sol = cf.fact.solve(kkt.rhs);
        dx = sol.head(n);
        dlam = sol.tail(m);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (bounded[static_cast<std::size_t>(i)]) {
            const double s = x[i] - lower[i];
            dz[i] = mu / s - z[i] - z[i] / s * dx[i];
          } else {
            dz[i] = 0.0;
          }
        }

        const double alpha_max = max_step_to_boundary(x, lower, dx, opts.tau);
        alpha_d = max_step_to_boundary(
            z, RealVec::Zero(n), dz, opts.tau);

        const RealVec lam_trial = lambda + dlam;
        const double lam_norm =
            m > 0 ? lam_trial.lpNorm<Eigen::Infinity>() : 0.0;
        rho = std::max(rho, 2.0 * lam_norm + 1e-3);

        phi0 = merit_value(pe.f, pe.g, x, lower, bounded, mu, rho);
        double dderiv = pe.grad_f.dot(dx);
        for (Eigen::Index i = 0; i < n; ++i) {
          if (bounded[static_cast<std::size_t>(i)]) {
            dderiv -= mu * dx[i] / (x[i] - lower[i]);
          }
        }
        if (m > 0) dderiv -= rho * pe.g.lpNorm<1>();

        // Backtracking Armijo search. Once the requested decrease falls
        // below the rounding noise of phi, the test can no longer verify
        // progress: a one-ulp jitter of a large merit would "pass". In
        // that band only the untruncated first trial is accepted (the
        // converged-Newton regime where the directional derivative is
        // genuinely flat); reaching it by backtracking means failure.
        const double noise = 1e-14 * (1.0 + std::abs(phi0));
        alpha = alpha_max;
        while (alpha >= kMinStep) {
          x_new = x + alpha * dx;
          const double f_try = p.eval_f(x_new);
          const RealVec g_try = p.eval_g(x_new);
          phi_new = merit_value(f_try, g_try, x_new, lower, bounded, mu, rho);
          const double required = opts.armijo_c * alpha * dderiv;
          if (std::abs(required) <= noise) {
            accepted = alpha == alpha_max && phi_new <= phi0 + noise;
            break;
          }
          if (phi_new <= phi0 + required) {
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
        if (!accepted) {
          delta_w_start =
              used_delta_w == 0.0 ? opts.delta0
                                  : used_delta_w * opts.delta_growth;
        }
      }
    } catch (const SingularError&) {
      linalg_failed = true;
    } catch (const NumericError&) {
      linalg_failed = true;
    }

    if (linalg_failed) {
      result.status = IpmStatus::LinAlgFailure;
      break;
    }

    if (!accepted) {
      // Line search collapsed twice: restoration. Feasibility restoration
      // must halve the constraint violation or the problem is declared
      // infeasible.
      const double theta0 = pe.g.size() > 0 ? pe.g.norm() : 0.0;
      if (depth > 0 || restorations >= kMaxRestorations ||
          theta0 <= opts.tol) {
        result.status = IpmStatus::Infeasible;
        break;
      }
      ++restorations;
      const double time_left =
          opts.time_limit_s - elapsed_s(t0);
      const RealVec x_rest = run_restoration(p, x, opts, time_left, depth);
      const double theta1 = p.eval_g(x_rest).norm();
      if (!(theta1 <= 0.5 * theta0)) {
        result.status = IpmStatus::Infeasible;
        break;
      }
      x = push_to_interior(x_rest, lower);
      lambda.setZero();
      reset_z();
      pe = eval_point(p, x);
      res = compute_residuals(p, pe, x, lower, lambda, z, bounded);

      IpmTraceRow row;
      row.iter = iter;
      row.mu = mu;
      row.kkt_error = res.error(0.0);
      row.merit_before = phi0;
      row.merit_after = phi0;
      row.delta_w = used_delta_w;
      row.restoration = true;
      result.trace.push_back(row);
      continue;
    }

    x = x_new;
    lambda += alpha * dlam;
    z += alpha_d * dz;
    // Keep bound multipliers commensurate with the barrier parameter.
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!bounded[static_cast<std::size_t>(i)]) continue;
      const double s = x[i] - lower[i];
      z[i] = std::clamp(z[i], mu / (kSigmaMax * s), kSigmaMax * mu / s);
    }

    pe = eval_point(p, x);
    res = compute_residuals(p, pe, x, lower, lambda, z, bounded);

    IpmTraceRow row;
    row.iter = iter;
    row.mu = mu;
    row.alpha_primal = alpha;
    row.alpha_dual = alpha_d;
    row.kkt_error = res.error(0.0);
    row.merit_before = phi0;
    row.merit_after = phi_new;
    row.delta_w = used_delta_w;
    result.trace.push_back(row);
  }

  result.x = x;
  result.lambda = lambda;
  result.z = z;
  result.iterations = iter;
  result.objective = pe.f;
  result.kkt_error = res.error(0.0);

  const double wall = elapsed_s(t0);
  const EvalTimes oracle1 = p.timing();
  result.timing.function_s = oracle1.function_s - oracle0.function_s;
  result.timing.jacobian_s = oracle1.jacobian_s - oracle0.jacobian_s;
  result.timing.hessian_s = oracle1.hessian_s - oracle0.hessian_s;
  result.timing.solver_s = std::max(
      0.0, wall - result.timing.function_s - result.timing.jacobian_s -
               result.timing.hessian_s);
  return result;
}

}  // namespace

const char* ipm_status_name(IpmStatus status) {
  switch (status) {
    case IpmStatus::Optimal: return "Optimal";
    case IpmStatus::MaxIter: return "MaxIter";
    case IpmStatus::TimeLimit: return "TimeLimit";
    case IpmStatus::Infeasible: return "Infeasible";
    case IpmStatus::LinAlgFailure: return "LinAlgFailure";
  }
  return "Unknown";
}

KktSystem assemble_kkt(const RealVec& x, const RealVec& lower,
                       const RealVec& z, const RealVec& lambda,
                       const RealVec& grad_f, const RealVec& g,
                       const std::vector<Eigen::Index>& jac_rows,
                       const std::vector<Eigen::Index>& jac_cols,
                       const RealVec& jac_values,
                       const std::vector<Eigen::Index>& hess_rows,
                       const std::vector<Eigen::Index>& hess_cols,
                       const RealVec& hess_values, double mu, double delta_w,
                       double delta_c) {
  const Eigen::Index n = x.size();
  const Eigen::Index m = g.size();
  KktSystem sys;
  sys.n_var = n;
  sys.n_con = m;
  sys.mat = RealMat::Zero(n + m, n + m);
  sys.rhs.resize(n + m);

  // Lower-triangular Lagrangian Hessian triplets, mirrored on the fly.
  for (std::size_t k = 0; k < hess_rows.size(); ++k) {
    const Eigen::Index r = hess_rows[k];
    const Eigen::Index c = hess_cols[k];
    const double v = hess_values[static_cast<Eigen::Index>(k)];
    sys.mat(r, c) += v;
    if (r != c) sys.mat(c, r) += v;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(lower[i])) {
      sys.mat(i, i) += z[i] / (x[i] - lower[i]);
    }
    if (delta_w != 0.0) sys.mat(i, i) += delta_w;
  }
  for (std::size_t k = 0; k < jac_rows.size(); ++k) {
    const Eigen::Index r = n + jac_rows[k];
    const Eigen::Index c = jac_cols[k];
    const double v = jac_values[static_cast<Eigen::Index>(k)];
    sys.mat(r, c) += v;
    sys.mat(c, r) += v;
  }
  if (delta_c != 0.0) {
    for (Eigen::Index i = 0; i < m; ++i) sys.mat(n + i, n + i) -= delta_c;
  }

  // Dual residual with the barrier fold-in, then primal residual.
  RealVec r1 = -grad_f - jac_t_lambda(jac_rows, jac_cols, jac_values, lambda,
                                      n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::isfinite(lower[i])) r1[i] += mu / (x[i] - lower[i]);
  }
  sys.rhs.head(n) = r1;
  sys.rhs.tail(m) = -g;
  return sys;
}

CorrectedFactorization inertia_correct(const KktSystem& kkt,
                                       const IpmOptions& opts,
                                       double delta_w_start) {
  const Eigen::Index n = kkt.n_var;
  const Eigen::Index m = kkt.n_con;
  const Inertia target{static_cast<int>(n), static_cast<int>(m), 0};

  double delta_w = delta_w_start;
  double delta_c = 0.0;
  while (true) {
    RealMat try_mat = kkt.mat;
    if (delta_w != 0.0) {
      try_mat.diagonal().head(n).array() += delta_w;
    }
    if (delta_c != 0.0) {
      try_mat.diagonal().tail(m).array() -= delta_c;
    }
    LdltFactorization fact = ldlt_factor(try_mat, /*keep_input=*/true);
    if (fact.inertia() == target) {
      return {std::move(fact), delta_w, delta_c};
    }
    if (fact.inertia().n_zero > 0 && m > 0 && delta_c < kDeltaCMax) {
      // Zero pivots with equality rows present point at a numerically
      // rank-deficient Jacobian. The dual shift only registers once it
      // clears the factorization's zero-pivot threshold, which scales
      // with the matrix magnitude (large barrier terms inflate it), so
      // it escalates geometrically instead of being a one-shot value.
      delta_c = delta_c == 0.0 ? kDeltaC : delta_c * 1e2;
      continue;
    }
    delta_w = delta_w == 0.0 ? opts.delta0 : delta_w * opts.delta_growth;
    if (delta_w > opts.delta_max) {
      throw SingularError(
          "inertia correction: regularization exceeded the configured "
          "maximum without reaching the target inertia");
    }
  }
}

double max_step_to_boundary(const RealVec& v, const RealVec& lower,
                            const RealVec& dv, double tau) {
  double alpha = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(lower[i]) || dv[i] >= 0.0) continue;
    alpha = std::min(alpha, tau * (v[i] - lower[i]) / -dv[i]);
  }
  return alpha;
}

RealVec push_to_interior(const RealVec& x, const RealVec& lower) {
  RealVec out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!std::isfinite(lower[i])) continue;
    const double pad = 1e-2 * std::max(1.0, std::abs(lower[i]));
    out[i] = std::max(out[i], lower[i] + pad);
  }
  return out;
}

IpmResult ipm_solve(const NlpProblem& problem, const IpmOptions& opts) {
  return solve_impl(problem, opts, 0);
}

}  // namespace gbopt
