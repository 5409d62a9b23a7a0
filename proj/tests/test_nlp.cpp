#include "gbopt/nlp.hpp"

#include <doctest.h>

#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "gbopt/errors.hpp"
#include "test_util.hpp"

using gbopt::ConstraintBlock;
using gbopt::ContractError;
using gbopt::EvalAll;
using gbopt::IneqSense;
using gbopt::kNoLowerBound;
using gbopt::NlpProblem;
using gbopt::NumericError;
using gbopt::ObjectiveOracle;
using gbopt::RealMat;
using gbopt::RealVec;
using gbopt::StructuralError;

namespace {

// ---------------------------------------------------------------------------
// Independent reference machinery, written before the assertions that use it.
// ---------------------------------------------------------------------------

// Densifies a triplet list, summing duplicate coordinates.
RealMat densify(const std::vector<Eigen::Index>& rows,
                const std::vector<Eigen::Index>& cols, const RealVec& values,
                Eigen::Index nr, Eigen::Index nc) {
  REQUIRE(static_cast<Eigen::Index>(rows.size()) == values.size());
  RealMat m = RealMat::Zero(nr, nc);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    m(rows[k], cols[k]) += values[static_cast<Eigen::Index>(k)];
  }
  return m;
}

RealMat symmetrize_lower(const RealMat& lower) {
  RealMat full = lower;
  for (Eigen::Index i = 0; i < full.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < full.cols(); ++j) full(i, j) = lower(j, i);
  }
  return full;
}

// Naive dense model of "quadratic objective plus one linear block":
//   f(x) = 0.5 x'Qx + c'x,   g(x) = Ax - b.
// Everything below is computed with plain dense algebra, no NlpProblem code.
struct DenseQuadraticLinearRef {
  RealMat q;
  RealVec c;
  RealMat a;
  RealVec b;

  double f(const RealVec& x) const {
    return 0.5 * x.dot(q * x) + c.dot(x);
  }
  RealVec grad_f(const RealVec& x) const { return q * x + c; }
  RealVec g(const RealVec& x) const { return a * x - b; }
  const RealMat& jac() const { return a; }
  // The linear block has no curvature, so the Lagrangian Hessian is Q for
  // every multiplier.
  const RealMat& lag_hess() const { return q; }
};

// Builds the same model through the NlpProblem interface: objective oracle
// over the full lower triangle of Q, one linear block with a dense pattern.
NlpProblem build_quadratic_linear(const DenseQuadraticLinearRef& ref,
                                  const RealVec& lower, const RealVec& init) {
  const Eigen::Index n = ref.q.rows();
  const Eigen::Index m = ref.a.rows();
  NlpProblem p;
  for (Eigen::Index i = 0; i < n; ++i) {
    p.add_variable({"x" + std::to_string(i), lower[i], init[i]});
  }

  ObjectiveOracle obj;
  obj.value = [ref](const RealVec& x) { return ref.f(x); };
  obj.gradient = [ref](const RealVec& x, RealVec& grad) {
    grad = ref.grad_f(x);
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      obj.hess_pattern.rows.push_back(i);
      obj.hess_pattern.cols.push_back(j);
    }
  }
  obj.hessian = [ref, n](const RealVec&, RealVec& values) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) values[k++] = ref.q(i, j);
    }
  };
  p.set_objective(std::move(obj));

  ConstraintBlock blk;
  blk.name = "linear";
  blk.arity = m;
  for (Eigen::Index j = 0; j < n; ++j) blk.deps.push_back(j);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      blk.jac_pattern.rows.push_back(i);
      blk.jac_pattern.cols.push_back(j);
    }
  }
  blk.residual = [ref](const RealVec& xb, RealVec& r) { r = ref.g(xb); };
  blk.jacobian = [ref, n, m](const RealVec&, RealVec& values) {
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) values[k++] = ref.a(i, j);
    }
  };
  p.add_block(std::move(blk));
  return p;
}

// A nonlinear two-block test problem with hand-coded derivatives, exercised
// against finite differences. Variables: x0..x4.
//   objective f = x0^2 x1 + exp(x3) + 0.5 x4^2
//   block "poly"  (rows 0..1): r0 = x0 x1 - x2,  r1 = x1^3 + x0 x2
//   block "sincos" (row 2):    r2 = sin(x2) + x3 x4
NlpProblem build_nonlinear_problem() {
  NlpProblem p;
  p.add_variable({"x0", 0.0, 0.9});
  p.add_variable({"x1", kNoLowerBound, -0.4});
  p.add_variable({"x2", -2.0, 0.3});
  p.add_variable({"x3", kNoLowerBound, 0.7});
  p.add_variable({"x4", 0.1, 1.1});

  ObjectiveOracle obj;
  obj.value = [](const RealVec& x) {
    return x[0] * x[0] * x[1] + std::exp(x[3]) + 0.5 * x[4] * x[4];
  };
  obj.gradient = [](const RealVec& x, RealVec& grad) {
    grad.setZero();
    grad[0] = 2.0 * x[0] * x[1];
    grad[1] = x[0] * x[0];
    grad[3] = std::exp(x[3]);
    grad[4] = x[4];
  };
  // Lower triangle entries: (0,0), (1,0), (3,3), (4,4).
  obj.hess_pattern.rows = {0, 1, 3, 4};
  obj.hess_pattern.cols = {0, 0, 3, 4};
  obj.hessian = [](const RealVec& x, RealVec& values) {
    values[0] = 2.0 * x[1];
    values[1] = 2.0 * x[0];
    values[2] = std::exp(x[3]);
    values[3] = 1.0;
  };
  p.set_objective(std::move(obj));

  ConstraintBlock poly;
  poly.name = "poly";
  poly.arity = 2;
  poly.deps = {0, 1, 2};
  poly.residual = [](const RealVec& xb, RealVec& r) {
    r[0] = xb[0] * xb[1] - xb[2];
    r[1] = xb[1] * xb[1] * xb[1] + xb[0] * xb[2];
  };
  poly.jac_pattern.rows = {0, 0, 0, 1, 1, 1};
  poly.jac_pattern.cols = {0, 1, 2, 0, 1, 2};
  poly.jacobian = [](const RealVec& xb, RealVec& v) {
    v[0] = xb[1];
    v[1] = xb[0];
    v[2] = -1.0;
    v[3] = xb[2];
    v[4] = 3.0 * xb[1] * xb[1];
    v[5] = xb[0];
  };
  // Curvature entries (local, lower triangular): r0 gives d2/dx0dx1 = 1;
  // r1 gives d2/dx1^2 = 6 x1 and d2/dx0dx2 = 1.
  poly.hess_pattern.rows = {1, 1, 2};
  poly.hess_pattern.cols = {0, 1, 0};
  poly.lag_hessian = [](const RealVec& xb, const RealVec& lam, RealVec& v) {
    v[0] = lam[0];
    v[1] = lam[1] * 6.0 * xb[1];
    v[2] = lam[1];
  };
  p.add_block(std::move(poly));

  ConstraintBlock sincos;
  sincos.name = "sincos";
  sincos.arity = 1;
  sincos.deps = {2, 3, 4};
  sincos.residual = [](const RealVec& xb, RealVec& r) {
    r[0] = std::sin(xb[0]) + xb[1] * xb[2];
  };
  sincos.jac_pattern.rows = {0, 0, 0};
  sincos.jac_pattern.cols = {0, 1, 2};
  sincos.jacobian = [](const RealVec& xb, RealVec& v) {
    v[0] = std::cos(xb[0]);
    v[1] = xb[2];
    v[2] = xb[1];
  };
  sincos.hess_pattern.rows = {0, 2};
  sincos.hess_pattern.cols = {0, 1};
  sincos.lag_hessian = [](const RealVec& xb, const RealVec& lam, RealVec& v) {
    v[0] = -lam[0] * std::sin(xb[0]);
    v[1] = lam[0];
  };
  p.add_block(std::move(sincos));
  return p;
}

RealMat densified_jac(const NlpProblem& p, const RealVec& x) {
  RealVec values;
  p.eval_jac(x, values);
  return densify(p.jac_rows(), p.jac_cols(), values, p.n_con(), p.n_var());
}

RealMat densified_lag_hess(const NlpProblem& p, const RealVec& x,
                           const RealVec& lambda, double obj_factor = 1.0) {
  RealVec values;
  p.eval_lag_hess(x, lambda, obj_factor, values);
  RealMat lower =
      densify(p.hess_rows(), p.hess_cols(), values, p.n_var(), p.n_var());
  return symmetrize_lower(lower);
}

}  // namespace

TEST_CASE("pure quadratic objective, no constraints") {
  NlpProblem p;
  p.add_variable({"x", kNoLowerBound, 3.0});
  ObjectiveOracle obj;
  obj.value = [](const RealVec& x) { return x[0] * x[0]; };
  obj.gradient = [](const RealVec& x, RealVec& g) { g[0] = 2.0 * x[0]; };
  obj.hess_pattern.rows = {0};
  obj.hess_pattern.cols = {0};
  obj.hessian = [](const RealVec&, RealVec& v) { v[0] = 2.0; };
  p.set_objective(std::move(obj));

  RealVec x(1);
  x << 3.0;
  CHECK(p.eval_f(x) == doctest::Approx(9.0));
  CHECK(p.eval_grad_f(x)[0] == doctest::Approx(6.0));
  CHECK(p.eval_g(x).size() == 0);
  CHECK(p.n_con() == 0);

  EvalAll all = p.eval_all(x, RealVec(0));
  CHECK(all.f == doctest::Approx(9.0));
  CHECK(all.hess_values[0] == doctest::Approx(2.0));
}

TEST_CASE("quadratic objective plus linear block matches dense reference") {
  std::mt19937_64 rng(4242);
  const Eigen::Index n = 5;
  const Eigen::Index m = 3;
  DenseQuadraticLinearRef ref;
  ref.q = testutil::random_symmetric(rng, n);
  ref.c = testutil::random_vec(rng, n);
  ref.a = testutil::random_mat(rng, m, n);
  ref.b = testutil::random_vec(rng, m);

  RealVec lower(n);
  lower << 0.0, kNoLowerBound, -1.5, kNoLowerBound, 0.2;
  const RealVec init = testutil::random_vec(rng, n, 0.5, 1.5);
  NlpProblem p = build_quadratic_linear(ref, lower, init);

  CHECK(p.n_var() == n);
  CHECK(p.n_con() == m);
  CHECK(p.jac_nnz() == m * n);
  CHECK(p.hess_nnz() == n * (n + 1) / 2);
  CHECK(p.lower_bounds() == lower);
  CHECK(p.initial_point() == init);

  const RealVec x = testutil::random_vec(rng, n, -2.0, 2.0);
  const RealVec lam = testutil::random_vec(rng, m, -3.0, 3.0);
  EvalAll all = p.eval_all(x, lam);

  CHECK(all.f == doctest::Approx(ref.f(x)).epsilon(1e-14));
  CHECK((all.grad_f - ref.grad_f(x)).lpNorm<Eigen::Infinity>() < 1e-14);
  CHECK((all.g - ref.g(x)).lpNorm<Eigen::Infinity>() < 1e-14);

  const RealMat jac =
      densify(p.jac_rows(), p.jac_cols(), all.jac_values, m, n);
  CHECK((jac - ref.jac()).lpNorm<Eigen::Infinity>() < 1e-14);

  const RealMat hess = symmetrize_lower(
      densify(p.hess_rows(), p.hess_cols(), all.hess_values, n, n));
  CHECK((hess - ref.lag_hess()).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("two blocks with disjoint rows: aggregate NNZ and row offsets") {
  NlpProblem p = build_nonlinear_problem();
  CHECK(p.n_blocks() == 2);
  CHECK(p.n_con() == 3);
  CHECK(p.block_row_offset(0) == 0);
  CHECK(p.block_row_offset(1) == 2);
  CHECK(p.jac_nnz() == 6 + 3);
  CHECK(p.jac_nnz_unique() == p.jac_nnz());
  // Objective contributes 4 Hessian entries, the blocks 3 and 2.
  CHECK(p.hess_nnz() == 4 + 3 + 2);

  // Row indices in the aggregate pattern carry the block offsets.
  const auto& rows = p.jac_rows();
  for (std::size_t k = 0; k < 6; ++k) CHECK(rows[k] < 2);
  for (std::size_t k = 6; k < 9; ++k) CHECK(rows[k] == 2);
  // Column indices map through the dependency lists (block 1 reads x2..x4).
  CHECK(p.jac_cols()[6] == 2);
  CHECK(p.jac_cols()[7] == 3);
  CHECK(p.jac_cols()[8] == 4);
}

TEST_CASE("Jacobian triplets match finite differences of the residual") {
  NlpProblem p = build_nonlinear_problem();
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    const RealVec x = testutil::random_vec(rng, p.n_var(), -1.0, 1.0);
    const RealMat jac = densified_jac(p, x);
    const RealMat fd = testutil::fd_jacobian(
        [&](const RealVec& xx) { return p.eval_g(xx); }, x, 1e-6);
    CHECK((jac - fd).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("Hessian triplets match finite differences of grad f + J^T lambda") {
  NlpProblem p = build_nonlinear_problem();
  std::mt19937_64 rng(100);
  for (int trial = 0; trial < 5; ++trial) {
    const RealVec x = testutil::random_vec(rng, p.n_var(), -1.0, 1.0);
    const RealVec lam = testutil::random_vec(rng, p.n_con(), -2.0, 2.0);
    const RealMat hess = densified_lag_hess(p, x, lam);
    const RealMat fd = testutil::fd_jacobian(
        [&](const RealVec& xx) {
          RealVec grad_l = p.eval_grad_f(xx);
          grad_l += densified_jac(p, xx).transpose() * lam;
          return grad_l;
        },
        x, 1e-5);
    CHECK((hess - 0.5 * (fd + fd.transpose())).lpNorm<Eigen::Infinity>() <
          1e-5);
  }
}

TEST_CASE("obj_factor scales objective curvature only") {
  NlpProblem p = build_nonlinear_problem();
  std::mt19937_64 rng(101);
  const RealVec x = testutil::random_vec(rng, p.n_var(), -1.0, 1.0);
  const RealVec lam = testutil::random_vec(rng, p.n_con(), -2.0, 2.0);
  const RealVec zero_lam = RealVec::Zero(p.n_con());

  const RealMat full = densified_lag_hess(p, x, lam, 1.0);
  const RealMat cons_only = densified_lag_hess(p, x, lam, 0.0);
  const RealMat obj_only = densified_lag_hess(p, x, zero_lam, 1.0);
  CHECK((full - cons_only - obj_only).lpNorm<Eigen::Infinity>() < 1e-14);
  const RealMat doubled = densified_lag_hess(p, x, zero_lam, 2.0);
  CHECK((doubled - 2.0 * obj_only).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("Hessian duplicates across blocks are summed when densified") {
  NlpProblem p;
  p.add_variable({"a", 0.0, 1.0});
  p.add_variable({"b", 0.0, 1.0});

  auto make_square_block = [](const std::string& name, double scale) {
    ConstraintBlock blk;
    blk.name = name;
    blk.arity = 1;
    blk.deps = {0, 1};
    blk.residual = [scale](const RealVec& xb, RealVec& r) {
      r[0] = scale * xb[0] * xb[1];
    };
    blk.jac_pattern.rows = {0, 0};
    blk.jac_pattern.cols = {0, 1};
    blk.jacobian = [scale](const RealVec& xb, RealVec& v) {
      v[0] = scale * xb[1];
      v[1] = scale * xb[0];
    };
    blk.hess_pattern.rows = {1};
    blk.hess_pattern.cols = {0};
    blk.lag_hessian = [scale](const RealVec&, const RealVec& lam, RealVec& v) {
      v[0] = scale * lam[0];
    };
    return blk;
  };
  p.add_block(make_square_block("first", 1.0));
  p.add_block(make_square_block("second", 3.0));

  CHECK(p.hess_nnz() == 2);
  CHECK(p.hess_nnz_unique() == 1);

  RealVec x(2);
  x << 0.5, 0.25;
  RealVec lam(2);
  lam << 2.0, 1.0;
  // d2/dadb of (1*ab)*2 + (3*ab)*1 = 2 + 3 = 5.
  const RealMat hess = densified_lag_hess(p, x, lam);
  CHECK(hess(1, 0) == doctest::Approx(5.0));
  CHECK(hess(0, 1) == doctest::Approx(5.0));
}

TEST_CASE("objective set after blocks keeps aggregate pattern consistent") {
  std::mt19937_64 rng(55);
  NlpProblem p;
  p.add_variable({"a", 0.0, 1.0});
  p.add_variable({"b", 0.0, 1.0});
  ConstraintBlock blk;
  blk.name = "prod";
  blk.arity = 1;
  blk.deps = {0, 1};
  blk.residual = [](const RealVec& xb, RealVec& r) { r[0] = xb[0] * xb[1]; };
  blk.jac_pattern.rows = {0, 0};
  blk.jac_pattern.cols = {0, 1};
  blk.jacobian = [](const RealVec& xb, RealVec& v) {
    v[0] = xb[1];
    v[1] = xb[0];
  };
  blk.hess_pattern.rows = {1};
  blk.hess_pattern.cols = {0};
  blk.lag_hessian = [](const RealVec&, const RealVec& lam, RealVec& v) {
    v[0] = lam[0];
  };
  p.add_block(std::move(blk));

  ObjectiveOracle obj;
  obj.value = [](const RealVec& x) { return x[0] * x[0] + x[1] * x[1]; };
  obj.gradient = [](const RealVec& x, RealVec& g) { g = 2.0 * x; };
  obj.hess_pattern.rows = {0, 1};
  obj.hess_pattern.cols = {0, 1};
  obj.hessian = [](const RealVec&, RealVec& v) {
    v[0] = 2.0;
    v[1] = 2.0;
  };
  p.set_objective(std::move(obj));

  CHECK(p.hess_nnz() == 3);
  const RealVec x = testutil::random_vec(rng, 2, 0.1, 1.0);
  RealVec lam(1);
  lam << 1.5;
  const RealMat hess = densified_lag_hess(p, x, lam);
  CHECK(hess(0, 0) == doctest::Approx(2.0));
  CHECK(hess(1, 1) == doctest::Approx(2.0));
  CHECK(hess(1, 0) == doctest::Approx(1.5));
}

TEST_CASE("slack conversion: single >= row") {
  // x1 >= 0.6 becomes x1 - s - 0.6 = 0 with s >= 0.
  NlpProblem p;
  p.add_variable({"x0", kNoLowerBound, 0.0});
  p.add_variable({"x1", kNoLowerBound, 0.9});

  ConstraintBlock row;
  row.name = "conf";
  row.arity = 1;
  row.deps = {1};
  row.residual = [](const RealVec& xb, RealVec& r) { r[0] = xb[0]; };
  row.jac_pattern.rows = {0};
  row.jac_pattern.cols = {0};
  row.jacobian = [](const RealVec&, RealVec& v) { v[0] = 1.0; };
  RealVec rhs(1);
  rhs << 0.6;
  p.add_inequality_as_slack(std::move(row), {IneqSense::GreaterEqual}, rhs);

  CHECK(p.n_var() == 3);
  CHECK(p.n_con() == 1);
  CHECK(p.var(2).lower == 0.0);
  // Seeded slack makes the rewritten equality hold at the initial point.
  CHECK(p.var(2).init == doctest::Approx(0.3));
  CHECK(p.eval_g(p.initial_point())[0] == doctest::Approx(0.0));

  RealVec x(3);
  x << 0.0, 1.0, 0.1;
  CHECK(p.eval_g(x)[0] == doctest::Approx(1.0 - 0.1 - 0.6));

  RealVec jv;
  p.eval_jac(x, jv);
  const RealMat jac = densify(p.jac_rows(), p.jac_cols(), jv, 1, 3);
  CHECK(jac(0, 1) == doctest::Approx(1.0));
  CHECK(jac(0, 2) == doctest::Approx(-1.0));
}

TEST_CASE("slack conversion: single <= row") {
  // x0 + x1 <= 1 becomes x0 + x1 + s - 1 = 0 with s >= 0.
  NlpProblem p;
  p.add_variable({"x0", 0.0, 0.2});
  p.add_variable({"x1", 0.0, 0.3});

  ConstraintBlock row;
  row.name = "cap";
  row.arity = 1;
  row.deps = {0, 1};
  row.residual = [](const RealVec& xb, RealVec& r) { r[0] = xb[0] + xb[1]; };
  row.jac_pattern.rows = {0, 0};
  row.jac_pattern.cols = {0, 1};
  row.jacobian = [](const RealVec&, RealVec& v) {
    v[0] = 1.0;
    v[1] = 1.0;
  };
  RealVec rhs(1);
  rhs << 1.0;
  p.add_inequality_as_slack(std::move(row), {IneqSense::LessEqual}, rhs);

  CHECK(p.n_var() == 3);
  CHECK(p.var(2).init == doctest::Approx(0.5));

  RealVec x(3);
  x << 0.25, 0.5, 0.25;
  CHECK(p.eval_g(x)[0] == doctest::Approx(0.0));

  RealVec jv;
  p.eval_jac(x, jv);
  const RealMat jac = densify(p.jac_rows(), p.jac_cols(), jv, 1, 3);
  CHECK(jac(0, 2) == doctest::Approx(1.0));
}

TEST_CASE("slack conversion bookkeeping: rows unchanged, one slack per row") {
  auto make_three_rows = []() {
    ConstraintBlock blk;
    blk.name = "tri";
    blk.arity = 3;
    blk.deps = {0, 1};
    blk.residual = [](const RealVec& xb, RealVec& r) {
      r[0] = xb[0] + xb[1];
      r[1] = xb[0] * xb[1];
      r[2] = xb[0] - xb[1];
    };
    blk.jac_pattern.rows = {0, 0, 1, 1, 2, 2};
    blk.jac_pattern.cols = {0, 1, 0, 1, 0, 1};
    blk.jacobian = [](const RealVec& xb, RealVec& v) {
      v[0] = 1.0;
      v[1] = 1.0;
      v[2] = xb[1];
      v[3] = xb[0];
      v[4] = 1.0;
      v[5] = -1.0;
    };
    blk.hess_pattern.rows = {1};
    blk.hess_pattern.cols = {0};
    blk.lag_hessian = [](const RealVec&, const RealVec& lam, RealVec& v) {
      v[0] = lam[1];
    };
    return blk;
  };

  NlpProblem as_equality;
  as_equality.add_variable({"x0", 0.0, 0.5});
  as_equality.add_variable({"x1", 0.0, 0.5});
  as_equality.add_block(make_three_rows());

  NlpProblem as_slack;
  as_slack.add_variable({"x0", 0.0, 0.5});
  as_slack.add_variable({"x1", 0.0, 0.5});
  RealVec rhs(3);
  rhs << 1.0, 0.2, 0.0;
  as_slack.add_inequality_as_slack(
      make_three_rows(),
      {IneqSense::LessEqual, IneqSense::GreaterEqual, IneqSense::LessEqual},
      rhs);

  // The rewrite adds one variable per row and leaves the row count as it
  // would have been for the plain equality block.
  CHECK(as_slack.n_con() == as_equality.n_con());
  CHECK(as_slack.n_var() == as_equality.n_var() + 3);
  // One +-1 Jacobian entry per row.
  CHECK(as_slack.jac_nnz() == as_equality.jac_nnz() + 3);
  // Hessian pattern untouched: slacks enter linearly.
  CHECK(as_slack.hess_nnz() == as_equality.hess_nnz());
}

TEST_CASE("slack conversion preserves the feasible set") {
  std::mt19937_64 rng(777);
  for (int trial = 0; trial < 10; ++trial) {
    // Random nonlinear h over three variables, senses chosen per row; rhs
    // built so the sampled point is strictly feasible for the inequalities.
    const RealVec x = testutil::random_vec(rng, 3, -1.0, 1.0);
    const RealMat w = testutil::random_mat(rng, 2, 3);
    auto h = [w](const RealVec& v) {
      RealVec out(2);
      out[0] = w(0, 0) * v[0] * v[0] + w(0, 1) * v[1] + w(0, 2) * v[2];
      out[1] = w(1, 0) * v[0] + w(1, 1) * std::tanh(v[1]) + w(1, 2) * v[2];
      return out;
    };
    const RealVec hx = h(x);
    std::vector<IneqSense> senses = {IneqSense::LessEqual,
                                     IneqSense::GreaterEqual};
    RealVec rhs(2);
    rhs[0] = hx[0] + testutil::uniform(rng, 0.1, 1.0);
    rhs[1] = hx[1] - testutil::uniform(rng, 0.1, 1.0);

    NlpProblem p;
    for (Eigen::Index i = 0; i < 3; ++i) {
      p.add_variable({"x" + std::to_string(i), kNoLowerBound, x[i]});
    }
    ConstraintBlock blk;
    blk.name = "h";
    blk.arity = 2;
    blk.deps = {0, 1, 2};
    blk.residual = [h](const RealVec& xb, RealVec& r) { r = h(xb); };
    blk.jac_pattern.rows = {0, 0, 0, 1, 1, 1};
    blk.jac_pattern.cols = {0, 1, 2, 0, 1, 2};
    blk.jacobian = [w](const RealVec& xb, RealVec& v) {
      v[0] = 2.0 * w(0, 0) * xb[0];
      v[1] = w(0, 1);
      v[2] = w(0, 2);
      v[3] = w(1, 0);
      const double t = std::tanh(xb[1]);
      v[4] = w(1, 1) * (1.0 - t * t);
      v[5] = w(1, 2);
    };
    p.add_inequality_as_slack(std::move(blk), senses, rhs);

    // The seeded slacks are exactly the inequality margins, so they are
    // nonnegative and the equalities hold at the initial point.
    const RealVec x0 = p.initial_point();
    CHECK(x0[3] >= 0.0);
    CHECK(x0[4] >= 0.0);
    CHECK(p.eval_g(x0).lpNorm<Eigen::Infinity>() < 1e-12);

    // Jacobian of the rewritten block still matches finite differences.
    const RealMat jac = densified_jac(p, x0);
    const RealMat fd = testutil::fd_jacobian(
        [&](const RealVec& xx) { return p.eval_g(xx); }, x0, 1e-6);
    CHECK((jac - fd).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("timing accumulator: categories sum to at most total wall time") {
  NlpProblem p = build_nonlinear_problem();
  p.reset_timing();
  std::mt19937_64 rng(11);
  const RealVec lam = testutil::random_vec(rng, p.n_con());

  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 200; ++i) {
    const RealVec x = testutil::random_vec(rng, p.n_var(), -1.0, 1.0);
    p.eval_all(x, lam);
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  const gbopt::EvalTimes times = p.timing();
  CHECK(times.function_s > 0.0);
  CHECK(times.jacobian_s > 0.0);
  CHECK(times.hessian_s > 0.0);
  CHECK(times.total() <= wall);

  p.reset_timing();
  CHECK(p.timing().total() == 0.0);
}

TEST_CASE("NaN from an oracle raises a numeric error naming the block") {
  NlpProblem p;
  p.add_variable({"x", 0.0, 1.0});
  ConstraintBlock blk;
  blk.name = "bad_log";
  blk.arity = 1;
  blk.deps = {0};
  blk.residual = [](const RealVec& xb, RealVec& r) {
    r[0] = std::log(xb[0] - 2.0);  // NaN for xb[0] < 2
  };
  blk.jac_pattern.rows = {0};
  blk.jac_pattern.cols = {0};
  blk.jacobian = [](const RealVec& xb, RealVec& v) {
    v[0] = 1.0 / (xb[0] - 2.0);
  };
  p.add_block(std::move(blk));

  RealVec x(1);
  x << 1.0;
  try {
    p.eval_g(x);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad_log") != std::string::npos);
    CHECK(std::string(e.what()).find("index 0") != std::string::npos);
  }
}

TEST_CASE("oracle breaking the size contract raises a contract error") {
  NlpProblem p;
  p.add_variable({"x", 0.0, 1.0});
  ConstraintBlock blk;
  blk.name = "resizer";
  blk.arity = 1;
  blk.deps = {0};
  blk.residual = [](const RealVec& xb, RealVec& r) { r[0] = xb[0]; };
  blk.jac_pattern.rows = {0};
  blk.jac_pattern.cols = {0};
  blk.jacobian = [](const RealVec&, RealVec& v) {
    v.resize(3);  // pattern declares 1 value
    v.setOnes();
  };
  p.add_block(std::move(blk));

  RealVec x(1);
  x << 1.0;
  RealVec values;
  CHECK_THROWS_AS(p.eval_jac(x, values), ContractError);
}

TEST_CASE("structural validation at build time") {
  NlpProblem p;
  p.add_variable({"a", 0.0, 1.0});
  p.add_variable({"b", 0.0, 2.0});

  ConstraintBlock blk;
  blk.name = "blk";
  blk.arity = 1;
  blk.deps = {0, 1};
  blk.residual = [](const RealVec& xb, RealVec& r) { r[0] = xb[0] + xb[1]; };
  blk.jacobian = [](const RealVec&, RealVec& v) { v.setOnes(); };
  blk.jac_pattern.rows = {0, 0};
  blk.jac_pattern.cols = {0, 1};

  SUBCASE("dependency out of range") {
    ConstraintBlock bad = blk;
    bad.deps = {0, 7};
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("duplicate dependency") {
    ConstraintBlock bad = blk;
    bad.deps = {1, 1};
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("duplicate Jacobian pattern entry") {
    ConstraintBlock bad = blk;
    bad.jac_pattern.rows = {0, 0};
    bad.jac_pattern.cols = {1, 1};
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("Jacobian pattern row out of range") {
    ConstraintBlock bad = blk;
    bad.jac_pattern.rows = {0, 1};
    bad.jac_pattern.cols = {0, 1};
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("upper-triangular Hessian pattern rejected") {
    ConstraintBlock bad = blk;
    bad.hess_pattern.rows = {0};  // deps[0]=0 < deps[1]=1: upper triangle
    bad.hess_pattern.cols = {1};
    bad.lag_hessian = [](const RealVec&, const RealVec&, RealVec& v) {
      v[0] = 1.0;
    };
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("Hessian pattern without oracle rejected") {
    ConstraintBlock bad = blk;
    bad.hess_pattern.rows = {1};
    bad.hess_pattern.cols = {0};
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("missing residual oracle rejected") {
    ConstraintBlock bad = blk;
    bad.residual = nullptr;
    CHECK_THROWS_AS(p.add_block(std::move(bad)), StructuralError);
  }
  SUBCASE("objective Hessian must be lower triangular") {
    ObjectiveOracle obj;
    obj.value = [](const RealVec&) { return 0.0; };
    obj.gradient = [](const RealVec&, RealVec&) {};
    obj.hess_pattern.rows = {0};
    obj.hess_pattern.cols = {1};
    obj.hessian = [](const RealVec&, RealVec& v) { v[0] = 1.0; };
    CHECK_THROWS_AS(p.set_objective(std::move(obj)), StructuralError);
  }
  SUBCASE("valid block accepted with purity flag visible") {
    CHECK(p.add_block(std::move(blk)) == 0);
    CHECK(p.all_pure());
  }
}

TEST_CASE("evaluation input validation") {
  NlpProblem p = build_nonlinear_problem();
  RealVec short_x(2);
  short_x.setZero();
  CHECK_THROWS_AS(p.eval_f(short_x), StructuralError);

  RealVec nan_x = RealVec::Zero(p.n_var());
  nan_x[1] = std::nan("");
  CHECK_THROWS_AS(p.eval_g(nan_x), NumericError);

  RealVec x = p.initial_point();
  RealVec bad_lam(1);
  bad_lam.setZero();
  RealVec values;
  CHECK_THROWS_AS(p.eval_lag_hess(x, bad_lam, 1.0, values), StructuralError);
}
