// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "trrb/errors.hpp"
#include "trrb/parameter.hpp"
#include "trrb/types.hpp"

namespace trrb {

/// Twice-differentiable scalar coefficient mu -> theta(mu).
struct ThetaFunction {
  std::function<double(const Vector&)> value;
  std::function<double(const Vector&, int)> partial;          // d theta / d mu_i
  std::function<double(const Vector&, int, int)> partial2;    // d^2 theta / d mu_i d mu_j

  static ThetaFunction constant(double c) {
    ThetaFunction t;
    t.value = [c](const Vector&) { return c; };
    t.partial = [](const Vector&, int) { return 0.0; };
    t.partial2 = [](const Vector&, int, int) { return 0.0; };
    return t;
  }

  /// theta(mu) = scale * mu_k
  static ThetaFunction coordinate(int k, double scale = 1.0) {
    ThetaFunction t;
    t.value = [k, scale](const Vector& mu) { return scale * mu[k]; };
    t.partial = [k, scale](const Vector&, int i) { return i == k ? scale : 0.0; };
    t.partial2 = [](const Vector&, int, int) { return 0.0; };
    return t;
  }
};

/// Parameter-separable sum  sum_xi theta_xi(mu) * component_xi.
/// Component is SparseMatrix for bilinear forms, Vector for functionals.
/// `psd` flags matrix components certified symmetric positive semidefinite at
/// registration; min-/max-theta bounds require it.
template <typename Component>
struct AffineDecomposition {
  std::vector<Component> components;
  std::vector<ThetaFunction> thetas;
  std::vector<bool> psd;

  int size() const { return static_cast<int>(components.size()); }

  void add(Component c, ThetaFunction t, bool is_psd = false) {
    components.push_back(std::move(c));
    thetas.push_back(std::move(t));
    psd.push_back(is_psd);
  }

  void validate() const {
    if (components.empty() || components.size() != thetas.size()) {
      throw std::invalid_argument("AffineDecomposition: component/theta count mismatch");
    }
    for (const auto& c : components) {
      if (rows_of(c) != rows_of(components.front()) || cols_of(c) != cols_of(components.front())) {
        throw std::invalid_argument("AffineDecomposition: component dimension mismatch");
      }
    }
  }

  static Index rows_of(const SparseMatrix& m) { return m.rows(); }
  static Index cols_of(const SparseMatrix& m) { return m.cols(); }
  static Index rows_of(const Vector& v) { return v.size(); }
  static Index cols_of(const Vector&) { return 1; }
};

using AffineOperator = AffineDecomposition<SparseMatrix>;
using AffineFunctional = AffineDecomposition<Vector>;

/// sum_xi theta_xi(mu) * component_xi, no admissibility check.
template <typename Component>
Component evaluate_unchecked(const AffineDecomposition<Component>& form, const Vector& mu) {
  instrument::hd_event();
  Component out = form.components.front() * form.thetas.front().value(mu);
  for (int xi = 1; xi < form.size(); ++xi) {
    out += form.components[static_cast<std::size_t>(xi)] *
           form.thetas[static_cast<std::size_t>(xi)].value(mu);
  }
  return out;
}

/// Same, rejecting mu outside the admissible set (strict by default; the
/// optimizer clamps every trial point, so this never fires there).
template <typename Component>
Component evaluate(const AffineDecomposition<Component>& form, const Vector& mu,
                   const ParameterSpace& space) {
  space.require(mu);
  return evaluate_unchecked(form, mu);
}

/// sum_xi (d theta_xi / d mu_i)(mu) * component_xi.
template <typename Component>
Component evaluate_partial(const AffineDecomposition<Component>& form, const Vector& mu, int i) {
  instrument::hd_event();
  Component out = form.components.front() * form.thetas.front().partial(mu, i);
  for (int xi = 1; xi < form.size(); ++xi) {
    out += form.components[static_cast<std::size_t>(xi)] *
           form.thetas[static_cast<std::size_t>(xi)].partial(mu, i);
  }
  return out;
}

/// Directional derivative: sum_xi (grad theta_xi . nu) * component_xi.
template <typename Component>
Component evaluate_directional(const AffineDecomposition<Component>& form, const Vector& mu,
                               const Vector& nu) {
  instrument::hd_event();
  auto dir_theta = [&](const ThetaFunction& t) {
    double s = 0.0;
    for (Index i = 0; i < nu.size(); ++i) s += t.partial(mu, static_cast<int>(i)) * nu[i];
    return s;
  };
  Component out = form.components.front() * dir_theta(form.thetas.front());
  for (int xi = 1; xi < form.size(); ++xi) {
    out += form.components[static_cast<std::size_t>(xi)] *
           dir_theta(form.thetas[static_cast<std::size_t>(xi)]);
  }
  return out;
}

/// Min-theta lower bound on the coercivity constant of form(mu) w.r.t. the
/// energy norm induced by form(mu_check). Requires every component flagged
/// PSD and strictly positive thetas at both parameters.
template <typename Component>
double coercivity_lower_bound(const AffineDecomposition<Component>& form, const Vector& mu,
                              const Vector& mu_check) {
  double bound = std::numeric_limits<double>::infinity();
  for (int xi = 0; xi < form.size(); ++xi) {
    if (!form.psd[static_cast<std::size_t>(xi)]) {
      throw EstimateInvalidError("coercivity_lower_bound: component not flagged PSD");
    }
    const double t = form.thetas[static_cast<std::size_t>(xi)].value(mu);
    const double tc = form.thetas[static_cast<std::size_t>(xi)].value(mu_check);
    if (!(t > 0.0) || !(tc > 0.0)) {
      throw EstimateInvalidError("coercivity_lower_bound: nonpositive theta");
    }
    bound = std::min(bound, t / tc);
  }
  return bound;
}

/// Max-theta upper bound on the operator norm of form(mu) w.r.t. the energy
/// norm induced by form(mu_check): max_xi |theta_xi(mu)| / theta_xi(mu_check).
template <typename Component>
double continuity_upper_bound(const AffineDecomposition<Component>& form, const Vector& mu,
                              const Vector& mu_check) {
  double bound = 0.0;
  for (int xi = 0; xi < form.size(); ++xi) {
    if (!form.psd[static_cast<std::size_t>(xi)]) {
      throw EstimateInvalidError("continuity_upper_bound: component not flagged PSD");
    }
    const double tc = form.thetas[static_cast<std::size_t>(xi)].value(mu_check);
    if (!(tc > 0.0)) {
      throw EstimateInvalidError("continuity_upper_bound: nonpositive reference theta");
    }
    bound = std::max(bound, std::abs(form.thetas[static_cast<std::size_t>(xi)].value(mu)) / tc);
  }
  return bound;
}

/// Max-theta bound for the parameter-derivative form d_{mu_i} form(mu), using
/// |d theta / d mu_i| weights over the same PSD components.
template <typename Component>
double continuity_upper_bound_partial(const AffineDecomposition<Component>& form,
                                      const Vector& mu, const Vector& mu_check, int i) {
  double bound = 0.0;
  for (int xi = 0; xi < form.size(); ++xi) {
    if (!form.psd[static_cast<std::size_t>(xi)]) {
      throw EstimateInvalidError("continuity_upper_bound_partial: component not flagged PSD");
    }
    const double tc = form.thetas[static_cast<std::size_t>(xi)].value(mu_check);
    if (!(tc > 0.0)) {
      throw EstimateInvalidError("continuity_upper_bound_partial: nonpositive reference theta");
    }
    bound = std::max(bound,
                     std::abs(form.thetas[static_cast<std::size_t>(xi)].partial(mu, i)) / tc);
  }
  return bound;
}

}  // namespace trrb
