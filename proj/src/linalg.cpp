#include "gbopt/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace gbopt {

namespace {

// Bunch-Kaufman pivot constant, minimizes worst-case element growth.
constexpr double kAlpha = 0.6403882032022076;  // (1 + sqrt(17)) / 8

// Panel width for the blocked factorization. The trailing update then runs
// as rank-kPanel matrix products instead of rank-1 sweeps.
constexpr Eigen::Index kPanel = 32;

// Column-block width for the triangular trailing update.
constexpr Eigen::Index kUpdateBlock = 160;

// Swaps symmetric rows/columns p < q of A touching the lower triangle only.
// Entries left of column p are the caller's business (stored L rows).
void sym_swap_lower(RealMat& A, Eigen::Index p, Eigen::Index q) {
  const Eigen::Index n = A.rows();
  std::swap(A(p, p), A(q, q));
  const Eigen::Index below = n - q - 1;
  if (below > 0) {
    A.col(p).tail(below).swap(A.col(q).tail(below));
  }
  for (Eigen::Index i = p + 1; i < q; ++i) {
    std::swap(A(i, p), A(q, i));
  }
  // A(q, p) is its own transpose partner.
}

}  // namespace

LdltFactorization ldlt_factor(const RealMat& A, bool keep_input) {
  if (A.rows() != A.cols()) {
    throw StructuralError("ldlt_factor: matrix is not square (" +
                          std::to_string(A.rows()) + "x" +
                          std::to_string(A.cols()) + ")");
  }
  if (!A.allFinite()) {
    throw NumericError("ldlt_factor: matrix contains NaN or Inf");
  }
  const Eigen::Index n = A.rows();
  const double scale = n > 0 ? A.cwiseAbs().maxCoeff() : 0.0;
  const double sym_tol = 1e-12 * std::max(1.0, scale);
  // Tiled comparison of the two triangles; a strided full-row walk would
  // thrash the cache at the sizes the interior-point solver throws at this.
  constexpr Eigen::Index kSymTile = 128;
  for (Eigen::Index jt = 0; jt < n; jt += kSymTile) {
    const Eigen::Index jw = std::min(kSymTile, n - jt);
    for (Eigen::Index it = jt; it < n; it += kSymTile) {
      const Eigen::Index iw = std::min(kSymTile, n - it);
      const double asym = (A.block(it, jt, iw, jw) -
                           A.block(jt, it, jw, iw).transpose())
                              .cwiseAbs()
                              .maxCoeff();
      if (asym > sym_tol) {
        throw StructuralError(
            "ldlt_factor: matrix is not symmetric (max deviation " +
            std::to_string(asym) + ")");
      }
    }
  }

  LdltFactorization f;

  // Symmetric Ruiz equilibration: rescale to D A D with every row and
  // column's max magnitude near one before factoring.  Interior-point KKT
  // matrices mix barrier diagonals of 1e8 and beyond with O(1) constraint
  // rows; unbalanced, the pivot zero-threshold (relative to the global
  // maximum) swallows genuinely useful small pivots and reports phantom
  // rank deficiency.  Scaling is a congruence transform, so the inertia
  // still describes the original matrix.
  RealMat balanced = A;
  RealVec equil = RealVec::Ones(n);
  {
    constexpr int kRuizMaxRounds = 20;
    constexpr double kRuizTol = 0.01;
    RealVec rs(n);
    for (int round = 0; round < kRuizMaxRounds; ++round) {
      double dev = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        // Column max equals row max for a symmetric matrix, and columns
        // are contiguous in memory.
        const double cmax = balanced.col(i).cwiseAbs().maxCoeff();
        rs(i) = cmax > 0.0 ? 1.0 / std::sqrt(cmax) : 1.0;
        if (cmax > 0.0) dev = std::max(dev, std::abs(cmax - 1.0));
      }
      if (dev <= kRuizTol) break;
      balanced.array().colwise() *= rs.array();
      balanced.array().rowwise() *= rs.transpose().array();
      equil = equil.cwiseProduct(rs);
    }
  }

  f.scale_ = std::move(equil);
  f.zero_thresh_ = 1e-11 * (n > 0 ? balanced.cwiseAbs().maxCoeff() : 0.0);
  f.fact_ = std::move(balanced);
  if (keep_input) {
    f.input_ = f.fact_;
  }
  f.perm_.assign(static_cast<size_t>(n), 0);
  f.pivot_kind_.assign(static_cast<size_t>(n), 0);

  RealMat& M = f.fact_;
  const double eps_zero = f.zero_thresh_;
  RealMat W(n, std::min<Eigen::Index>(n, kPanel) + 2);

  auto classify = [&](double eig) {
    if (std::abs(eig) <= eps_zero) {
      ++f.inertia_.n_zero;
    } else if (eig > 0.0) {
      ++f.inertia_.n_pos;
    } else {
      ++f.inertia_.n_neg;
    }
  };

  Eigen::Index k0 = 0;
  while (k0 < n) {
    const Eigen::Index r = n - k0;  // trailing dimension
    const Eigen::Index nbp = std::min(kPanel, r);

    // Within the panel, W(i, c) holds the fully updated trailing column c
    // (rows are trailing-relative: absolute row k0 + i). Columns of M at
    // k0..k0+j-1 hold finished L columns; trailing columns of M are updated
    // only through previous panels until the rank-jb product below.
    Eigen::Index j = 0;
    while (j < nbp) {
      const Eigen::Index cur = j;

      // Updated column j of the trailing matrix.
      W.col(cur).segment(j, r - j) = M.col(k0 + j).segment(k0 + j, r - j);
      if (j > 0) {
        W.col(cur).segment(j, r - j).noalias() -=
            M.block(k0 + j, k0, r - j, j) * W.row(j).head(j).transpose();
      }

      const double absakk = std::abs(W(j, cur));
      Eigen::Index imax = -1;
      double colmax = 0.0;
      if (j + 1 < r) {
        Eigen::Index rel;
        colmax = W.col(cur).segment(j + 1, r - j - 1).cwiseAbs().maxCoeff(&rel);
        imax = j + 1 + rel;
      }

      if (std::max(absakk, colmax) <= eps_zero) {
        // Negligible column: take an exact zero pivot so the trailing
        // update and the solve see a clean identity column.
        W.col(cur).segment(j, r - j).setZero();
        M(k0 + j, k0 + j) = 0.0;
        if (j + 1 < r) {
          M.col(k0 + j).segment(k0 + j + 1, r - j - 1).setZero();
        }
        f.perm_[static_cast<size_t>(k0 + j)] = k0 + j;
        f.pivot_kind_[static_cast<size_t>(k0 + j)] = 0;
        classify(0.0);
        ++j;
        continue;
      }

      bool two_by_two = false;
      Eigen::Index kp = j;  // interchange partner, trailing-relative
      const Eigen::Index cand = j + 1;

      if (absakk >= kAlpha * colmax) {
        // 1x1 pivot, no interchange.
      } else {
        // Updated column imax, assembled from the lower-stored symmetric
        // trailing matrix (row part up to imax, column part below).
        for (Eigen::Index i = j; i <= imax; ++i) {
          W(i, cand) = M(k0 + imax, k0 + i);
        }
        if (imax + 1 < r) {
          W.col(cand).segment(imax + 1, r - imax - 1) =
              M.col(k0 + imax).segment(k0 + imax + 1, r - imax - 1);
        }
        if (j > 0) {
          W.col(cand).segment(j, r - j).noalias() -=
              M.block(k0 + j, k0, r - j, j) * W.row(imax).head(j).transpose();
        }

        double rowmax = 0.0;
        for (Eigen::Index i = j; i < r; ++i) {
          if (i != imax) {
            rowmax = std::max(rowmax, std::abs(W(i, cand)));
          }
        }

        if (absakk >= kAlpha * colmax * (colmax / rowmax)) {
          // 1x1 pivot at j after all; growth is bounded anyway.
        } else if (std::abs(W(imax, cand)) >= kAlpha * rowmax) {
          kp = imax;  // 1x1 pivot, interchange j <-> imax
        } else {
          two_by_two = true;
          kp = imax;  // 2x2 pivot, interchange j+1 <-> imax
        }
      }

      const Eigen::Index kk = two_by_two ? j + 1 : j;
      if (kp != kk) {
        // Apply the transposition to the consistently part-updated trailing
        // matrix, to the stored L rows left of the panel cursor, and to the
        // assembled W columns.
        sym_swap_lower(M, k0 + kk, k0 + kp);
        const Eigen::Index ncols_l = k0 + j;
        if (ncols_l > 0) {
          M.row(k0 + kk).head(ncols_l).swap(M.row(k0 + kp).head(ncols_l));
        }
        W.row(kk).head(cand + 1).swap(W.row(kp).head(cand + 1));
        if (!two_by_two) {
          // The swapped candidate column is the updated column for slot j.
          W.col(cur).segment(j, r - j) = W.col(cand).segment(j, r - j);
        }
      }

      if (!two_by_two) {
        const double d = W(j, cur);
        M(k0 + j, k0 + j) = d;
        if (j + 1 < r) {
          if (std::abs(d) <= eps_zero) {
            M.col(k0 + j).segment(k0 + j + 1, r - j - 1).setZero();
            W.col(cur).segment(j + 1, r - j - 1).setZero();
          } else {
            M.col(k0 + j).segment(k0 + j + 1, r - j - 1) =
                W.col(cur).segment(j + 1, r - j - 1) / d;
          }
        }
        f.perm_[static_cast<size_t>(k0 + j)] = k0 + kp;
        f.pivot_kind_[static_cast<size_t>(k0 + j)] = 0;
        classify(d);
        ++j;
      } else {
        const double d11 = W(j, cur);
        const double d21 = W(j + 1, cur);
        const double d22 = W(j + 1, cand);
        M(k0 + j, k0 + j) = d11;
        M(k0 + j + 1, k0 + j) = d21;
        M(k0 + j + 1, k0 + j + 1) = d22;
        if (j + 2 < r) {
          // L rows from [w1 w2] D^{-1}, in the d21-scaled form that keeps
          // intermediate quantities near unit size.
          const double t11 = d11 / d21;
          const double t22 = d22 / d21;
          const double denom = d21 * (t11 * t22 - 1.0);
          for (Eigen::Index i = j + 2; i < r; ++i) {
            const double w1 = W(i, cur);
            const double w2 = W(i, cand);
            M(k0 + i, k0 + j) = (t22 * w1 - w2) / denom;
            M(k0 + i, k0 + j + 1) = (t11 * w2 - w1) / denom;
          }
        }
        f.perm_[static_cast<size_t>(k0 + j)] = k0 + kp;
        f.perm_[static_cast<size_t>(k0 + j + 1)] = k0 + kp;
        f.pivot_kind_[static_cast<size_t>(k0 + j)] = 1;
        f.pivot_kind_[static_cast<size_t>(k0 + j + 1)] = 2;
        const double mid = 0.5 * (d11 + d22);
        const double rad = std::hypot(0.5 * (d11 - d22), d21);
        classify(mid + rad);
        classify(mid - rad);
        j += 2;
      }
    }

    // Rank-jb trailing update M22 -= L2 * W2^T, lower triangle only,
    // assembled one column block at a time so the products stay GEMM.
    const Eigen::Index jb = j;
    const Eigen::Index rem = r - jb;
    if (rem > 0 && jb > 0) {
      for (Eigen::Index c0 = 0; c0 < rem; c0 += kUpdateBlock) {
        const Eigen::Index cw = std::min(kUpdateBlock, rem - c0);
        M.block(k0 + jb + c0, k0 + jb + c0, rem - c0, cw).noalias() -=
            M.block(k0 + jb + c0, k0, rem - c0, jb) *
            W.block(jb + c0, 0, cw, jb).transpose();
      }
    }
    k0 += jb;
  }

  return f;
}

RealVec ldlt_solve(const LdltFactorization& f, const RealVec& b) {
  return f.solve(b);
}

void LdltFactorization::apply_perm_forward(RealVec& x) const {
  const Eigen::Index n = dim();
  Eigen::Index c = 0;
  while (c < n) {
    if (pivot_kind_[static_cast<size_t>(c)] == 0) {
      const Eigen::Index kp = perm_[static_cast<size_t>(c)];
      if (kp != c) std::swap(x(c), x(kp));
      ++c;
    } else {
      const Eigen::Index kp = perm_[static_cast<size_t>(c)];
      if (kp != c + 1) std::swap(x(c + 1), x(kp));
      c += 2;
    }
  }
}

void LdltFactorization::apply_perm_backward(RealVec& x) const {
  const Eigen::Index n = dim();
  // Undo the transpositions in reverse order.
  Eigen::Index c = n - 1;
  while (c >= 0) {
    if (pivot_kind_[static_cast<size_t>(c)] == 2) {
      const Eigen::Index kp = perm_[static_cast<size_t>(c)];
      if (kp != c) std::swap(x(c), x(kp));
      c -= 2;
    } else {
      const Eigen::Index kp = perm_[static_cast<size_t>(c)];
      if (kp != c) std::swap(x(c), x(kp));
      --c;
    }
  }
}

RealVec LdltFactorization::solve_factored(const RealVec& b) const {
  const Eigen::Index n = dim();
  RealVec x = b;
  apply_perm_forward(x);

  // Forward substitution with unit lower L. For a 2x2 block at c the slot
  // fact_(c+1, c) belongs to D, so both columns start at row c+2.
  Eigen::Index c = 0;
  while (c < n) {
    if (pivot_kind_[static_cast<size_t>(c)] == 0) {
      const Eigen::Index below = n - c - 1;
      if (below > 0) {
        x.tail(below).noalias() -= fact_.col(c).tail(below) * x(c);
      }
      ++c;
    } else {
      const Eigen::Index below = n - c - 2;
      if (below > 0) {
        x.tail(below).noalias() -= fact_.col(c).tail(below) * x(c);
        x.tail(below).noalias() -= fact_.col(c + 1).tail(below) * x(c + 1);
      }
      c += 2;
    }
  }

  // Block diagonal solve.
  c = 0;
  while (c < n) {
    if (pivot_kind_[static_cast<size_t>(c)] == 0) {
      x(c) /= fact_(c, c);
      ++c;
    } else {
      const double d11 = fact_(c, c);
      const double d21 = fact_(c + 1, c);
      const double d22 = fact_(c + 1, c + 1);
      const double det = d11 * d22 - d21 * d21;
      const double b1 = x(c);
      const double b2 = x(c + 1);
      x(c) = (d22 * b1 - d21 * b2) / det;
      x(c + 1) = (d11 * b2 - d21 * b1) / det;
      c += 2;
    }
  }

  // Back substitution with L^T.
  c = n - 1;
  while (c >= 0) {
    if (pivot_kind_[static_cast<size_t>(c)] == 2) {
      const Eigen::Index below = n - c - 1;
      if (below > 0) {
        x(c) -= fact_.col(c).tail(below).dot(x.tail(below));
        x(c - 1) -= fact_.col(c - 1).tail(below).dot(x.tail(below));
      }
      c -= 2;
    } else {
      const Eigen::Index below = n - c - 1;
      if (below > 0) {
        x(c) -= fact_.col(c).tail(below).dot(x.tail(below));
      }
      --c;
    }
  }

  apply_perm_backward(x);
  return x;
}

RealVec LdltFactorization::solve(const RealVec& b) const {
  if (b.size() != dim()) {
    throw StructuralError("ldlt_solve: right-hand side has size " +
                          std::to_string(b.size()) + ", expected " +
                          std::to_string(dim()));
  }
  if (inertia_.n_zero > 0) {
    throw SingularError("ldlt_solve: matrix is singular (" +
                        std::to_string(inertia_.n_zero) + " zero pivots)");
  }
  // The factorization holds the equilibrated matrix S A S, so solve
  // S A S y = S b and return x = S y.
  const RealVec bs = scale_.cwiseProduct(b);
  RealVec x = solve_factored(bs);
  if (input_.size() > 0) {
    // Fixed-precision iterative refinement against the equilibrated system.
    // One pass is not always enough for the ill-conditioned systems an
    // interior-point solver produces near convergence: the once-refined
    // step can still carry a residual large enough to flip a computed
    // descent direction into an ascent direction for the merit function.
    // Iterate while the measured residual keeps shrinking, and return the
    // iterate with the smallest residual seen.
    const double a_max = input_.cwiseAbs().maxCoeff();
    const double b_norm = bs.lpNorm<Eigen::Infinity>();
    constexpr int kMaxRounds = 10;
    constexpr double kEps = std::numeric_limits<double>::epsilon();
    RealVec best_x = x;
    double best_res = std::numeric_limits<double>::infinity();
    for (int round = 0; round < kMaxRounds; ++round) {
      RealVec r = bs;
      r.noalias() -= input_.selfadjointView<Eigen::Lower>() * x;
      const double res = r.lpNorm<Eigen::Infinity>();
      if (!(res < best_res)) {
        break;  // stalled at the limiting accuracy of this factorization
      }
      best_res = res;
      best_x = x;
      if (res <= kEps * (b_norm + a_max * x.lpNorm<Eigen::Infinity>())) {
        break;  // residual is at round-off level for this system's scale
      }
      x += solve_factored(r);
    }
    x = std::move(best_x);
  }
  return scale_.cwiseProduct(x);
}

RealMat LdltFactorization::reconstruct() const {
  const Eigen::Index n = dim();
  RealMat L = RealMat::Identity(n, n);
  RealMat D = RealMat::Zero(n, n);
  Eigen::Index c = 0;
  while (c < n) {
    if (pivot_kind_[static_cast<size_t>(c)] == 0) {
      D(c, c) = fact_(c, c);
      if (c + 1 < n) {
        L.col(c).tail(n - c - 1) = fact_.col(c).tail(n - c - 1);
      }
      ++c;
    } else {
      D(c, c) = fact_(c, c);
      D(c + 1, c) = fact_(c + 1, c);
      D(c, c + 1) = fact_(c + 1, c);
      D(c + 1, c + 1) = fact_(c + 1, c + 1);
      if (c + 2 < n) {
        L.col(c).tail(n - c - 2) = fact_.col(c).tail(n - c - 2);
        L.col(c + 1).tail(n - c - 2) = fact_.col(c + 1).tail(n - c - 2);
      }
      c += 2;
    }
  }
  RealMat A = L * D * L.transpose();
  // A = T_1 ... T_s (L D L^T) T_s ... T_1 with the recorded transpositions.
  c = n - 1;
  while (c >= 0) {
    if (pivot_kind_[static_cast<size_t>(c)] == 2) {
      const Eigen::Index kp = perm_[static_cast<size_t>(c)];
      if (kp != c) {
        A.row(c).swap(A.row(kp));
        A.col(c).swap(A.col(kp));
      }
      c -= 2;
    } else {
      const Eigen::Index kp = perm_[static_cast<size_t>(c)];
      if (kp != c) {
        A.row(c).swap(A.row(kp));
        A.col(c).swap(A.col(kp));
      }
      --c;
    }
  }
  // The factored matrix is the equilibrated S A S; undo the scaling.
  A.array().colwise() /= scale_.array();
  A.array().rowwise() /= scale_.transpose().array();
  return A;
}

}  // namespace gbopt
