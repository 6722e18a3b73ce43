// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "trrb/affine.hpp"
#include "trrb/linalg.hpp"
#include "trrb/parameter.hpp"
#include "trrb/types.hpp"

namespace trrb {

/// Parameter-only part Theta of the objective, with exact derivatives. The
/// constant `offset` is kept separate from the mu-dependent `value_centered`
/// so objective evaluations can cancel it against the state terms in extended
/// precision (value = value_centered + offset).
struct ScalarObjective {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<Matrix(const Vector&)> hessian;
  std::function<double(const Vector&)> value_centered;
  double offset = 0.0;

  double centered(const Vector& mu) const {
    return value_centered ? value_centered(mu) : value(mu);
  }

  /// Theta(mu) = 0.5 * sum_i weight_i (mu_i - target_i)^2 + offset
  static ScalarObjective weighted_tikhonov(Vector weight, Vector target, double offset) {
    ScalarObjective s;
    s.offset = offset;
    s.value_centered = [weight, target](const Vector& mu) {
      return 0.5 * (weight.array() * (mu - target).array().square()).sum();
    };
    s.value = [centered = s.value_centered, offset](const Vector& mu) {
      return centered(mu) + offset;
    };
    s.gradient = [weight, target](const Vector& mu) -> Vector {
      return (weight.array() * (mu - target).array()).matrix();
    };
    s.hessian = [weight](const Vector& mu) -> Matrix {
      Matrix h = Matrix::Zero(mu.size(), mu.size());
      h.diagonal() = weight;
      return h;
    };
    return s;
  }
};

enum class StateRole { Primal, Dual, PrimalSensitivity, DualSensitivity };

/// FE coefficient vector together with the parameter and equation it solves.
struct StateVector {
  Vector coefficients;
  Vector mu;
  StateRole role = StateRole::Primal;
  int direction = -1;  // sensitivity direction, -1 otherwise
};

/// LRU cache of sparse factorizations keyed by the exact bits of mu.
class FactorizationCache {
 public:
  explicit FactorizationCache(std::size_t capacity = 8) : capacity_(capacity) {}

  std::shared_ptr<const CholeskyFactorization> get(
      const Vector& mu, const std::function<SparseMatrix()>& assemble) const {
    const std::string key(reinterpret_cast<const char*>(mu.data()),
                          static_cast<std::size_t>(mu.size()) * sizeof(double));
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if (it->first == key) {
        entries_.splice(entries_.begin(), entries_, it);
        return entries_.front().second;
      }
    }
    auto fact = std::make_shared<const CholeskyFactorization>(assemble());
    entries_.emplace_front(key, fact);
    while (entries_.size() > capacity_) entries_.pop_back();
    return fact;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::list<std::pair<std::string, std::shared_ptr<const CholeskyFactorization>>>
      entries_;
};

struct SecondOrderVerdict {
  bool accepted = false;
  double lambda_min = 0.0;
  int cone_dim = 0;
};

/// Full-order optimality system on V_h for
///   J(u, mu) = Theta(mu) + j_mu(u) + k_mu(u, u),   a_mu(u, v) = l_mu(v).
/// All forms are parameter separable; the energy product is a at mu_check.
class FullOrderModel {
 public:
  FullOrderModel(ParameterSpace space, AffineOperator a, AffineFunctional l, AffineFunctional j,
                 AffineOperator k, ScalarObjective theta, Vector mu_check)
      : space_(std::move(space)),
        a_(std::move(a)),
        l_(std::move(l)),
        j_(std::move(j)),
        k_(std::move(k)),
        theta_(std::move(theta)),
        mu_check_(std::move(mu_check)) {
    a_.validate();
    l_.validate();
    j_.validate();
    k_.validate();
    space_.require(mu_check_);
    product_ = evaluate_unchecked(a_, mu_check_);
  }

  const ParameterSpace& space() const { return space_; }
  const AffineOperator& a() const { return a_; }
  const AffineFunctional& l() const { return l_; }
  const AffineFunctional& j() const { return j_; }
  const AffineOperator& k() const { return k_; }
  const ScalarObjective& theta() const { return theta_; }
  const Vector& mu_check() const { return mu_check_; }
  const SparseMatrix& product() const { return product_; }
  Index dim() const { return product_.rows(); }
  int num_parameters() const { return space_.dim(); }

  const CholeskyFactorization& product_factorization() const {
    std::call_once(product_once_, [this] {
      product_fact_ = std::make_unique<CholeskyFactorization>(product_);
    });
    return *product_fact_;
  }

  /// Operator norms of the k components w.r.t. the energy product (upper
  /// bounds); generation-independent, computed once.
  const std::vector<double>& k_component_norms() const {
    std::call_once(k_norms_once_, [this] {
      const auto& product = product_factorization();
      k_norms_.reserve(static_cast<std::size_t>(k_.size()));
      for (int xi = 0; xi < k_.size(); ++xi) {
        k_norms_.push_back(
            operator_norm_psd(k_.components[static_cast<std::size_t>(xi)], product));
      }
    });
    return k_norms_;
  }

  double energy_norm(const Vector& v) const {
    instrument::hd_event();
    return std::sqrt(std::max(0.0, v.dot(product_ * v)));
  }

  std::shared_ptr<const CholeskyFactorization> factorization(const Vector& mu) const {
    return cache_.get(mu, [&] { return evaluate_unchecked(a_, mu); });
  }

  StateVector solve_primal(const Vector& mu) const {
    space_.require(mu);
    auto fact = factorization(mu);
    instrument::fom_solve_event();
    return {fact->solve(evaluate_unchecked(l_, mu)), mu, StateRole::Primal, -1};
  }

  /// a_mu(v, p) = j_mu(v) + 2 k_mu(v, u); reuses the primal factorization.
  StateVector solve_dual(const Vector& mu, const StateVector& u) const {
    space_.require(mu);
    auto fact = factorization(mu);
    instrument::fom_solve_event();
    Vector rhs = evaluate_unchecked(j_, mu) + 2.0 * (evaluate_unchecked(k_, mu) * u.coefficients);
    return {fact->solve(rhs), mu, StateRole::Dual, -1};
  }

  /// a_mu(d_i u, v) = d_i l_mu(v) - d_i a_mu(u, v).
  StateVector solve_primal_sensitivity(const Vector& mu, const StateVector& u, int i) const {
    space_.require(mu);
    auto fact = factorization(mu);
    instrument::fom_solve_event();
    Vector rhs = evaluate_partial(l_, mu, i) - evaluate_partial(a_, mu, i) * u.coefficients;
    return {fact->solve(rhs), mu, StateRole::PrimalSensitivity, i};
  }

  /// a_mu(q, d_i p) = d_i j_mu(q) + 2 d_i k_mu(q, u) - d_i a_mu(q, p) + 2 k_mu(q, d_i u).
  StateVector solve_dual_sensitivity(const Vector& mu, const StateVector& u,
                                     const StateVector& p, const StateVector& du, int i) const {
    space_.require(mu);
    auto fact = factorization(mu);
    instrument::fom_solve_event();
    Vector rhs = evaluate_partial(j_, mu, i) +
                 2.0 * (evaluate_partial(k_, mu, i) * u.coefficients) -
                 evaluate_partial(a_, mu, i) * p.coefficients +
                 2.0 * (evaluate_unchecked(k_, mu) * du.coefficients);
    return {fact->solve(rhs), mu, StateRole::DualSensitivity, i};
  }

  double objective_value(const Vector& mu, const StateVector& u) const {
    instrument::hd_event();
    // extended-precision accumulation: the offset and the state terms cancel
    // down to O(1)
    long double acc = static_cast<long double>(theta_.offset);
    acc += static_cast<long double>(theta_.centered(mu));
    const Vector ju = evaluate_unchecked(j_, mu);
    const Vector ku = evaluate_unchecked(k_, mu) * u.coefficients;
    for (Index i = 0; i < u.coefficients.size(); ++i) {
      acc += static_cast<long double>(u.coefficients[i]) *
             (static_cast<long double>(ju[i]) + static_cast<long double>(ku[i]));
    }
    return static_cast<double>(acc);
  }

  double objective(const Vector& mu) const { return objective_value(mu, solve_primal(mu)); }

  /// Adjoint gradient: grad Theta + grad j(u) + grad k(u,u) + grad l(p) - grad a(u,p).
  Vector gradient_value(const Vector& mu, const StateVector& u, const StateVector& p) const {
    instrument::hd_event();
    const int np = num_parameters();
    Vector g = theta_.gradient(mu);
    // precompute component pairings once, then weight with theta partials
    std::vector<double> ju(static_cast<std::size_t>(j_.size()));
    for (int xi = 0; xi < j_.size(); ++xi) {
      ju[static_cast<std::size_t>(xi)] =
          j_.components[static_cast<std::size_t>(xi)].dot(u.coefficients);
    }
    std::vector<double> kuu(static_cast<std::size_t>(k_.size()));
    for (int xi = 0; xi < k_.size(); ++xi) {
      kuu[static_cast<std::size_t>(xi)] =
          u.coefficients.dot(k_.components[static_cast<std::size_t>(xi)] * u.coefficients);
    }
    std::vector<double> lp(static_cast<std::size_t>(l_.size()));
    for (int xi = 0; xi < l_.size(); ++xi) {
      lp[static_cast<std::size_t>(xi)] =
          l_.components[static_cast<std::size_t>(xi)].dot(p.coefficients);
    }
    std::vector<double> aup(static_cast<std::size_t>(a_.size()));
    for (int xi = 0; xi < a_.size(); ++xi) {
      aup[static_cast<std::size_t>(xi)] =
          u.coefficients.dot(a_.components[static_cast<std::size_t>(xi)] * p.coefficients);
    }
    for (int i = 0; i < np; ++i) {
      double gi = 0.0;
      for (int xi = 0; xi < j_.size(); ++xi) {
        gi += j_.thetas[static_cast<std::size_t>(xi)].partial(mu, i) *
              ju[static_cast<std::size_t>(xi)];
      }
      for (int xi = 0; xi < k_.size(); ++xi) {
        gi += k_.thetas[static_cast<std::size_t>(xi)].partial(mu, i) *
              kuu[static_cast<std::size_t>(xi)];
      }
      for (int xi = 0; xi < l_.size(); ++xi) {
        gi += l_.thetas[static_cast<std::size_t>(xi)].partial(mu, i) *
              lp[static_cast<std::size_t>(xi)];
      }
      for (int xi = 0; xi < a_.size(); ++xi) {
        gi -= a_.thetas[static_cast<std::size_t>(xi)].partial(mu, i) *
              aup[static_cast<std::size_t>(xi)];
      }
      g[i] += gi;
    }
    return g;
  }

  Vector gradient(const Vector& mu) const {
    const StateVector u = solve_primal(mu);
    const StateVector p = solve_dual(mu, u);
    return gradient_value(mu, u, p);
  }

  /// Hessian applied to nu (quadratic-J form), given primal/dual states.
  Vector hessian_action_with_states(const Vector& mu, const Vector& nu, const StateVector& u,
                                    const StateVector& p) const {
    auto fact = factorization(mu);
    instrument::fom_solve_event();
    Vector rhs_du =
        evaluate_directional(l_, mu, nu) - evaluate_directional(a_, mu, nu) * u.coefficients;
    const Vector du = fact->solve(rhs_du);
    instrument::fom_solve_event();
    Vector rhs_dp = evaluate_directional(j_, mu, nu) +
                    2.0 * (evaluate_directional(k_, mu, nu) * u.coefficients) -
                    evaluate_directional(a_, mu, nu) * p.coefficients +
                    2.0 * (evaluate_unchecked(k_, mu) * du);
    const Vector dp = fact->solve(rhs_dp);

    const int np = num_parameters();
    Vector h = theta_.hessian(mu) * nu;
    for (int i = 0; i < np; ++i) {
      double hi = 0.0;
      for (int xi = 0; xi < j_.size(); ++xi) {
        const auto& comp = j_.components[static_cast<std::size_t>(xi)];
        const auto& th = j_.thetas[static_cast<std::size_t>(xi)];
        hi += th.partial(mu, i) * comp.dot(du);
        double t2 = 0.0;
        for (int jj = 0; jj < np; ++jj) t2 += th.partial2(mu, i, jj) * nu[jj];
        hi += t2 * comp.dot(u.coefficients);
      }
      for (int xi = 0; xi < k_.size(); ++xi) {
        const auto& comp = k_.components[static_cast<std::size_t>(xi)];
        const auto& th = k_.thetas[static_cast<std::size_t>(xi)];
        hi += 2.0 * th.partial(mu, i) * du.dot(comp * u.coefficients);
        double t2 = 0.0;
        for (int jj = 0; jj < np; ++jj) t2 += th.partial2(mu, i, jj) * nu[jj];
        hi += t2 * u.coefficients.dot(comp * u.coefficients);
      }
      for (int xi = 0; xi < l_.size(); ++xi) {
        const auto& comp = l_.components[static_cast<std::size_t>(xi)];
        const auto& th = l_.thetas[static_cast<std::size_t>(xi)];
        hi += th.partial(mu, i) * comp.dot(dp);
        double t2 = 0.0;
        for (int jj = 0; jj < np; ++jj) t2 += th.partial2(mu, i, jj) * nu[jj];
        hi += t2 * comp.dot(p.coefficients);
      }
      for (int xi = 0; xi < a_.size(); ++xi) {
        const auto& comp = a_.components[static_cast<std::size_t>(xi)];
        const auto& th = a_.thetas[static_cast<std::size_t>(xi)];
        hi -= th.partial(mu, i) * (du.dot(comp * p.coefficients) + u.coefficients.dot(comp * dp));
        double t2 = 0.0;
        for (int jj = 0; jj < np; ++jj) t2 += th.partial2(mu, i, jj) * nu[jj];
        hi -= t2 * u.coefficients.dot(comp * p.coefficients);
      }
      h[i] += hi;
    }
    return h;
  }

  Vector hessian_action(const Vector& mu, const Vector& nu) const {
    const StateVector u = solve_primal(mu);
    const StateVector p = solve_dual(mu, u);
    return hessian_action_with_states(mu, nu, u, p);
  }

  Matrix full_hessian(const Vector& mu) const {
    const StateVector u = solve_primal(mu);
    const StateVector p = solve_dual(mu, u);
    const int np = num_parameters();
    Matrix h(np, np);
    for (int i = 0; i < np; ++i) {
      Vector e = Vector::Zero(np);
      e[i] = 1.0;
      h.col(i) = hessian_action_with_states(mu, e, u, p);
    }
    return h;
  }

  /// Second-order sufficient-condition test on the critical cone at mu_bar,
  /// approximated by the inactive subspace intersected with the orthogonal
  /// complement of the gradient (activity tolerance 1e-8 * box range).
  SecondOrderVerdict check_second_order(const Vector& mu_bar, const Vector& g,
                                        double tol = 0.0) const {
    const Vector range = space_.range();
    std::vector<int> inactive;
    for (int i = 0; i < num_parameters(); ++i) {
      const double atol = 1e-8 * std::max(range[i], 1e-300);
      const bool at_lower = mu_bar[i] - space_.lower()[i] <= atol;
      const bool at_upper = space_.upper()[i] - mu_bar[i] <= atol;
      if (!at_lower && !at_upper) inactive.push_back(i);
    }
    SecondOrderVerdict verdict;
    if (inactive.empty()) {
      verdict.accepted = true;  // cone is {0}
      verdict.lambda_min = std::numeric_limits<double>::infinity();
      verdict.cone_dim = 0;
      return verdict;
    }
    Matrix h = full_hessian(mu_bar);
    h = 0.5 * (h + h.transpose().eval());
    const int ni = static_cast<int>(inactive.size());
    Matrix hii(ni, ni);
    Vector gi(ni);
    for (int r = 0; r < ni; ++r) {
      gi[r] = g[inactive[static_cast<std::size_t>(r)]];
      for (int c = 0; c < ni; ++c) {
        hii(r, c) = h(inactive[static_cast<std::size_t>(r)], inactive[static_cast<std::size_t>(c)]);
      }
    }
    Matrix basis;  // columns span the test subspace
    const double gnorm = gi.norm();
    if (gnorm > 1e-10 * (1.0 + g.norm())) {
      // orthogonal complement of gi inside the inactive subspace
      Eigen::HouseholderQR<Matrix> qr(gi);
      Matrix q = qr.householderQ();
      basis = q.rightCols(ni - 1);
    } else {
      basis = Matrix::Identity(ni, ni);
    }
    if (basis.cols() == 0) {
      verdict.accepted = true;
      verdict.lambda_min = std::numeric_limits<double>::infinity();
      verdict.cone_dim = 0;
      return verdict;
    }
    const Matrix m = basis.transpose() * hii * basis;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (m + m.transpose()));
    verdict.lambda_min = eig.eigenvalues().minCoeff();
    verdict.cone_dim = static_cast<int>(basis.cols());
    verdict.accepted = verdict.lambda_min > tol;
    return verdict;
  }

 private:
  ParameterSpace space_;
  AffineOperator a_;
  AffineFunctional l_, j_;
  AffineOperator k_;
  ScalarObjective theta_;
  Vector mu_check_;
  SparseMatrix product_;
  FactorizationCache cache_;
  mutable std::once_flag product_once_;
  mutable std::unique_ptr<CholeskyFactorization> product_fact_;
  mutable std::once_flag k_norms_once_;
  mutable std::vector<double> k_norms_;
};

}  // namespace trrb
