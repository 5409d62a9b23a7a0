#pragma once

// Shared helpers for the test suites: portable seeded randomness and
// independent oracles (finite differences, dense spectral checks) that the
// production code must agree with.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <random>

namespace testutil {

// Uniform double in [0, 1) from the raw engine output. Bitwise reproducible
// across platforms, unlike std::uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline Eigen::VectorXd random_vec(std::mt19937_64& rng, Eigen::Index n,
                                  double lo = -1.0, double hi = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(rng, lo, hi);
  return v;
}

inline Eigen::MatrixXd random_mat(std::mt19937_64& rng, Eigen::Index rows,
                                  Eigen::Index cols, double lo = -1.0,
                                  double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = uniform(rng, lo, hi);
  return m;
}

inline Eigen::MatrixXd random_symmetric(std::mt19937_64& rng,
                                        Eigen::Index n) {
  Eigen::MatrixXd m = random_mat(rng, n, n);
  return 0.5 * (m + m.transpose());
}

// Random orthogonal matrix via Householder QR of a random square matrix,
// with column signs fixed so Q is unique given the input.
inline Eigen::MatrixXd random_orthogonal(std::mt19937_64& rng,
                                         Eigen::Index n) {
  Eigen::MatrixXd m = random_mat(rng, n, n);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

// Q diag(eigs) Q^T with a seeded orthogonal Q: a matrix with a known
// spectrum, the ground truth for inertia tests.
inline Eigen::MatrixXd matrix_with_spectrum(std::mt19937_64& rng,
                                            const Eigen::VectorXd& eigs) {
  Eigen::MatrixXd q = random_orthogonal(rng, eigs.size());
  Eigen::MatrixXd a = q * eigs.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

// Central finite-difference gradient of a scalar function.
inline Eigen::VectorXd fd_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + step;
    const double fp = f(xp);
    xp(i) = xi - step;
    const double fm = f(xp);
    xp(i) = xi;
    g(i) = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Central finite-difference Jacobian of a vector function.
inline Eigen::MatrixXd fd_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double xi = x(i);
    xp(i) = xi + step;
    Eigen::VectorXd fp = f(xp);
    xp(i) = xi - step;
    Eigen::VectorXd fm = f(xp);
    xp(i) = xi;
    jac.col(i) = (fp - fm) / (2.0 * step);
  }
  return jac;
}

// Central finite-difference Hessian of a scalar function, symmetrized.
inline Eigen::MatrixXd fd_hessian(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < n; ++i) {
    xp(i) = x(i) + step;
    Eigen::VectorXd gp = fd_gradient(f, xp, step);
    xp(i) = x(i) - step;
    Eigen::VectorXd gm = fd_gradient(f, xp, step);
    xp(i) = x(i);
    h.col(i) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace testutil
