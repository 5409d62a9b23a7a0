#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gbopt/errors.hpp"

namespace gbopt {

using RealVec = Eigen::VectorXd;
using RealMat = Eigen::MatrixXd;

struct Inertia {
  int n_pos = 0;
  int n_neg = 0;
  int n_zero = 0;

  bool operator==(const Inertia&) const = default;
};

// Symmetric indefinite factorization P A P^T = L D L^T where L is unit lower
// triangular and D is block diagonal with 1x1 and 2x2 blocks (Bunch-Kaufman
// partial pivoting). Factoring never fails on singular input; instead the
// inertia reports n_zero > 0 and solve() refuses to run.
//
// Pivots with |d| <= 1e-11 * max|A| are classified as zero. The inertia is
// exact for matrices whose eigenvalues are cleanly above that threshold.
class LdltFactorization {
public:
  Eigen::Index dim() const { return fact_.rows(); }
  const Inertia& inertia() const { return inertia_; }

  // Solves A x = b with iterative refinement when the input matrix was
  // retained (see ldlt_factor): refinement rounds repeat while the residual
  // keeps shrinking, and the iterate with the smallest residual is returned.
  // Throws SingularError if the factorization found zero pivots,
  // StructuralError on a size mismatch.
  RealVec solve(const RealVec& b) const;

  // Rebuilds P L D L^T P^T. Quadratic storage, test and debugging aid.
  RealMat reconstruct() const;

private:
  friend LdltFactorization ldlt_factor(const RealMat&, bool);

  RealVec solve_factored(const RealVec& b) const;
  void apply_perm_forward(RealVec& x) const;
  void apply_perm_backward(RealVec& x) const;

  // Strictly lower part holds L (zero in the subdiagonal slot of a 2x2
  // block); the diagonal and the 2x2 subdiagonal slots hold D. Both refer
  // to the equilibrated matrix diag(scale_) * A * diag(scale_).
  RealMat fact_;
  RealMat input_;  // equilibrated copy; empty unless retained for refinement
  RealVec scale_;  // symmetric equilibration factors

  // Interchange partner per column. pivot_kind_: 0 = 1x1 block,
  // 1 = first column of a 2x2 block, 2 = second column of a 2x2 block.
  // For a 2x2 block starting at c the recorded interchange is (c+1, perm_[c]).
  std::vector<Eigen::Index> perm_;
  std::vector<unsigned char> pivot_kind_;

  Inertia inertia_;
  double zero_thresh_ = 0.0;
};

// Factors a symmetric matrix. Checks: square shape and symmetry to
// 1e-12 * max(1, max|A|) (StructuralError), finite entries (NumericError).
// The matrix is symmetrically equilibrated before factoring so pivot
// decisions and the zero threshold are relative to each row's own scale
// rather than the global maximum; solve() and reconstruct() map results
// back to the original coordinates, and the inertia is unaffected.
// With keep_input the matrix is copied into the factorization so solve()
// can run iterative refinement; pass false when the caller refines against
// its own copy.
LdltFactorization ldlt_factor(const RealMat& A, bool keep_input = true);

// Convenience wrapper for f.solve(b).
RealVec ldlt_solve(const LdltFactorization& f, const RealVec& b);

}  // namespace gbopt
