// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <random>

#include <Eigen/SparseCholesky>

#include "trrb/errors.hpp"
#include "trrb/types.hpp"

namespace trrb {

/// Sparse Cholesky factorization of an SPD matrix. Solves apply one step of
/// iterative refinement against the retained matrix. Immutable once built;
/// concurrent solves are safe.
class CholeskyFactorization {
 public:
  explicit CholeskyFactorization(SparseMatrix a) : a_(std::move(a)) {
    if (a_.rows() != a_.cols()) {
      throw FactorizationError("factorize: matrix must be square");
    }
    instrument::factorization_event();
    a_.makeCompressed();
    llt_.compute(a_);
    if (llt_.info() != Eigen::Success) {
      throw FactorizationError("factorize: matrix is singular or not positive definite");
    }
  }

  Vector solve(const Vector& b) const {
    if (b.size() != a_.rows()) {
      throw std::invalid_argument("solve: rhs size mismatch");
    }
    instrument::hd_event();
    Vector x = llt_.solve(b);
    x += llt_.solve(b - a_ * x);
    return x;
  }

  const SparseMatrix& matrix() const { return a_; }
  Index rows() const { return a_.rows(); }

 private:
  SparseMatrix a_;
  Eigen::SimplicialLLT<SparseMatrix> llt_;
};

inline CholeskyFactorization factorize(SparseMatrix a) {
  return CholeskyFactorization(std::move(a));
}

inline Vector solve(const CholeskyFactorization& fact, const Vector& rhs) {
  return fact.solve(rhs);
}

/// Largest eigenvalue of the pencil (K, M) for symmetric PSD K, with M the
/// factorized SPD product. Power iteration on M^{-1} K, run until the Rayleigh
/// quotient stagnates, then inflated so the result stays an upper bound on the
/// operator norm of K w.r.t. the M-inner product.
inline double operator_norm_psd(const SparseMatrix& k, const CholeskyFactorization& product) {
  if (k.rows() != product.rows() || k.cols() != product.rows()) {
    throw std::invalid_argument("operator_norm_psd: size mismatch");
  }
  if (k.nonZeros() == 0) return 0.0;
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> dist;
  Vector x(k.rows());
  for (Index i = 0; i < x.size(); ++i) x[i] = dist(rng);
  double lambda = 0.0;
  for (int it = 0; it < 500; ++it) {
    Vector kx = k * x;
    const double xkx = x.dot(kx);
    const double xmx = x.dot(product.matrix() * x);
    const double next = xmx > 0.0 ? xkx / xmx : 0.0;
    Vector y = product.solve(kx);
    const double ynorm = std::sqrt(y.dot(product.matrix() * y));
    if (ynorm == 0.0) return 0.0;  // x in the kernel of K
    x = y / ynorm;
    if (it > 2 && std::abs(next - lambda) <= 1e-13 * std::max(1.0, std::abs(next))) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::max(lambda, 0.0) * (1.0 + 1e-6);
}

}  // namespace trrb
