// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "trrb/rom.hpp"

namespace trrb {

namespace detail {

/// Offsets of one affine residual family inside the stacked representative
/// list: count vectors starting at `offset`.
struct FamilyLayout {
  int offset = 0;
  int count = 0;
};

}  // namespace detail

/// Riesz representatives (w.r.t. the energy product) of every affine residual
/// component of one ReducedModel generation, with their pairwise Gram matrix.
/// After construction, residual dual norms are theta-weighted quadratic forms
/// with no high-dimensional work.
class RieszCache {
 public:
  RieszCache(const FullOrderModel& fom, const ReducedModel& rom)
      : fom_(&fom), rom_(&rom), generation_(rom.generation()) {
    const auto& product = fom.product_factorization();
    std::vector<Vector> comps;
    auto family = [&](int count) {
      detail::FamilyLayout fl{static_cast<int>(comps.size()), 0};
      fl.count = count;
      return fl;
    };
    l_ = family(fom.l().size());
    for (int xi = 0; xi < fom.l().size(); ++xi) {
      comps.push_back(fom.l().components[static_cast<std::size_t>(xi)]);
    }
    j_ = family(fom.j().size());
    for (int xi = 0; xi < fom.j().size(); ++xi) {
      comps.push_back(fom.j().components[static_cast<std::size_t>(xi)]);
    }
    const int n = rom.primal_basis().size();
    const int m = rom.dual_basis().size();
    a_pr_ = family(fom.a().size() * n);
    for (int xi = 0; xi < fom.a().size(); ++xi) {
      for (int i = 0; i < n; ++i) {
        comps.push_back(fom.a().components[static_cast<std::size_t>(xi)] *
                        rom.primal_basis().vec(i));
      }
    }
    a_du_ = family(fom.a().size() * m);
    for (int xi = 0; xi < fom.a().size(); ++xi) {
      for (int i = 0; i < m; ++i) {
        comps.push_back(fom.a().components[static_cast<std::size_t>(xi)] *
                        rom.dual_basis().vec(i));
      }
    }
    k_pr_ = family(fom.k().size() * n);
    for (int xi = 0; xi < fom.k().size(); ++xi) {
      for (int i = 0; i < n; ++i) {
        comps.push_back(fom.k().components[static_cast<std::size_t>(xi)] *
                        rom.primal_basis().vec(i));
      }
    }
    build_gram(product, comps, gram_core_, reps_core_);

    if (rom.has_sensitivity_spaces()) {
      const auto& spaces = rom.sensitivity_spaces();
      sens_.resize(spaces.size());
      for (std::size_t d = 0; d < spaces.size(); ++d) {
        const int s = spaces[d].pr.size();
        const int t = spaces[d].du.size();
        std::vector<Vector> sc;
        sens_[d].a_s.offset = 0;
        sens_[d].a_s.count = fom.a().size() * s;
        for (int xi = 0; xi < fom.a().size(); ++xi) {
          for (int i = 0; i < s; ++i) {
            sc.push_back(fom.a().components[static_cast<std::size_t>(xi)] *
                         spaces[d].pr.vec(i));
          }
        }
        sens_[d].k_s.offset = static_cast<int>(sc.size());
        sens_[d].k_s.count = fom.k().size() * s;
        for (int xi = 0; xi < fom.k().size(); ++xi) {
          for (int i = 0; i < s; ++i) {
            sc.push_back(fom.k().components[static_cast<std::size_t>(xi)] *
                         spaces[d].pr.vec(i));
          }
        }
        sens_[d].a_t.offset = static_cast<int>(sc.size());
        sens_[d].a_t.count = fom.a().size() * t;
        for (int xi = 0; xi < fom.a().size(); ++xi) {
          for (int i = 0; i < t; ++i) {
            sc.push_back(fom.a().components[static_cast<std::size_t>(xi)] *
                         spaces[d].du.vec(i));
          }
        }
        std::vector<Vector> reps;
        build_gram(product, sc, sens_[d].gram_ss, reps);
        sens_[d].gram_cs.resize(static_cast<Index>(reps_core_.size()),
                                static_cast<Index>(sc.size()));
        for (std::size_t p = 0; p < reps_core_.size(); ++p) {
          for (std::size_t q = 0; q < sc.size(); ++q) {
            sens_[d].gram_cs(static_cast<Index>(p), static_cast<Index>(q)) =
                reps_core_[p].dot(sc[q]);
          }
        }
      }
    }
  }

  int generation() const { return generation_; }
  int core_size() const { return static_cast<int>(reps_core_.size()); }
  const Matrix& gram_core() const { return gram_core_; }

  double dual_norm_l_component(int xi) const {
    return std::sqrt(std::max(0.0, gram_core_(l_.offset + xi, l_.offset + xi)));
  }
  double dual_norm_j_component(int xi) const {
    return std::sqrt(std::max(0.0, gram_core_(j_.offset + xi, j_.offset + xi)));
  }

  /// || l_mu - a_mu(u_r, .) || in the dual of the energy product.
  double residual_norm_primal(const Vector& mu, const Vector& u_r) const {
    Vector w = Vector::Zero(core_size());
    fill_l(w, mu, 1.0, false);
    fill_a_pr(w, mu, u_r, -1.0, false);
    return norm_from_quadratic(w);
  }

  /// || j_mu + 2 k_mu(., u_r) - a_mu(., p_r) ||.
  double residual_norm_dual(const Vector& mu, const Vector& u_r, const Vector& p_r) const {
    Vector w = Vector::Zero(core_size());
    fill_j(w, mu, 1.0, false);
    fill_k_pr(w, mu, u_r, 2.0, false);
    fill_a_du(w, mu, p_r, -1.0, false);
    return norm_from_quadratic(w);
  }

  /// || d_i r^pr(u_r) - a_mu(du, .) ||, du in V_pr (Galerkin mode).
  double residual_norm_sens_pr(const Vector& mu, const Vector& u_r, const Vector& du,
                               int i) const {
    Vector w = Vector::Zero(core_size());
    fill_l(w, mu, 1.0, true, i);
    fill_a_pr(w, mu, u_r, -1.0, true, i);
    fill_a_pr(w, mu, du, -1.0, false);
    return norm_from_quadratic(w);
  }

  /// Same residual with du in the dedicated sensitivity space for direction i.
  double residual_norm_sens_pr_approx(const Vector& mu, const Vector& u_r, const Vector& du,
                                      int i) const {
    require_sens(i);
    const auto& sb = sens_[static_cast<std::size_t>(i)];
    Vector w = Vector::Zero(core_size());
    fill_l(w, mu, 1.0, true, i);
    fill_a_pr(w, mu, u_r, -1.0, true, i);
    Vector ws = Vector::Zero(sb.gram_ss.rows());
    fill_family(ws, sb.a_s, fom_->a(), mu, du, -1.0, false, 0);
    return norm_from_quadratic(w, &sb, ws);
  }

  /// || d_i r^du(u_r, p_r) + 2 k_mu(., du) - a_mu(., dp) ||, Galerkin mode.
  double residual_norm_sens_du(const Vector& mu, const Vector& u_r, const Vector& p_r,
                               const Vector& du, const Vector& dp, int i) const {
    Vector w = Vector::Zero(core_size());
    fill_j(w, mu, 1.0, true, i);
    fill_k_pr(w, mu, u_r, 2.0, true, i);
    fill_a_du(w, mu, p_r, -1.0, true, i);
    fill_k_pr(w, mu, du, 2.0, false);
    fill_a_du(w, mu, dp, -1.0, false);
    return norm_from_quadratic(w);
  }

  double residual_norm_sens_du_approx(const Vector& mu, const Vector& u_r, const Vector& p_r,
                                      const Vector& du, const Vector& dp, int i) const {
    require_sens(i);
    const auto& sb = sens_[static_cast<std::size_t>(i)];
    Vector w = Vector::Zero(core_size());
    fill_j(w, mu, 1.0, true, i);
    fill_k_pr(w, mu, u_r, 2.0, true, i);
    fill_a_du(w, mu, p_r, -1.0, true, i);
    Vector ws = Vector::Zero(sb.gram_ss.rows());
    fill_family(ws, sb.k_s, fom_->k(), mu, du, 2.0, false, 0);
    fill_family(ws, sb.a_t, fom_->a(), mu, dp, -1.0, false, 0);
    return norm_from_quadratic(w, &sb, ws);
  }

 private:
  struct SensGram {
    detail::FamilyLayout a_s, k_s, a_t;
    Matrix gram_ss, gram_cs;
  };

  static void build_gram(const CholeskyFactorization& product, const std::vector<Vector>& comps,
                         Matrix& gram, std::vector<Vector>& reps) {
    reps.clear();
    reps.reserve(comps.size());
    for (const auto& c : comps) reps.push_back(product.solve(c));
    gram.resize(static_cast<Index>(comps.size()), static_cast<Index>(comps.size()));
    for (std::size_t p = 0; p < comps.size(); ++p) {
      for (std::size_t q = 0; q <= p; ++q) {
        const double g = reps[p].dot(comps[q]);
        gram(static_cast<Index>(p), static_cast<Index>(q)) = g;
        gram(static_cast<Index>(q), static_cast<Index>(p)) = g;
      }
    }
  }

  void require_sens(int i) const {
    if (sens_.empty() || i < 0 || i >= static_cast<int>(sens_.size())) {
      throw std::logic_error("RieszCache: sensitivity families not built");
    }
  }

  template <typename Form>
  void fill_family(Vector& w, const detail::FamilyLayout& fl, const Form& form, const Vector& mu,
                   const Vector& coeff, double scale, bool use_partial, int dir) const {
    if (fl.count == 0) return;
    const int per = fl.count / form.size();
    for (int xi = 0; xi < form.size(); ++xi) {
      const auto& th = form.thetas[static_cast<std::size_t>(xi)];
      const double t = use_partial ? th.partial(mu, dir) : th.value(mu);
      if (t == 0.0) continue;
      for (int i = 0; i < per; ++i) {
        w[fl.offset + xi * per + i] += scale * t * coeff[i];
      }
    }
  }

  void fill_l(Vector& w, const Vector& mu, double scale, bool partial, int dir = 0) const {
    for (int xi = 0; xi < fom_->l().size(); ++xi) {
      const auto& th = fom_->l().thetas[static_cast<std::size_t>(xi)];
      w[l_.offset + xi] += scale * (partial ? th.partial(mu, dir) : th.value(mu));
    }
  }
  void fill_j(Vector& w, const Vector& mu, double scale, bool partial, int dir = 0) const {
    for (int xi = 0; xi < fom_->j().size(); ++xi) {
      const auto& th = fom_->j().thetas[static_cast<std::size_t>(xi)];
      w[j_.offset + xi] += scale * (partial ? th.partial(mu, dir) : th.value(mu));
    }
  }
  void fill_a_pr(Vector& w, const Vector& mu, const Vector& coeff, double scale, bool partial,
                 int dir = 0) const {
    fill_family(w, a_pr_, fom_->a(), mu, coeff, scale, partial, dir);
  }
  void fill_a_du(Vector& w, const Vector& mu, const Vector& coeff, double scale, bool partial,
                 int dir = 0) const {
    fill_family(w, a_du_, fom_->a(), mu, coeff, scale, partial, dir);
  }
  void fill_k_pr(Vector& w, const Vector& mu, const Vector& coeff, double scale, bool partial,
                 int dir = 0) const {
    fill_family(w, k_pr_, fom_->k(), mu, coeff, scale, partial, dir);
  }

  /// sqrt of the Gram quadratic form with the roundoff clamp: tiny negative
  /// values clamp to zero, anything below the scale-relative threshold is a
  /// numerical breakdown.
  double norm_from_quadratic(const Vector& w, const SensGram* sb = nullptr,
                             const Vector& ws = Vector()) const {
    double s = w.dot(gram_core_ * w);
    double scale = w.cwiseAbs().dot(gram_core_.cwiseAbs() * w.cwiseAbs());
    if (sb != nullptr) {
      s += 2.0 * w.dot(sb->gram_cs * ws) + ws.dot(sb->gram_ss * ws);
      scale += 2.0 * w.cwiseAbs().dot(sb->gram_cs.cwiseAbs() * ws.cwiseAbs()) +
               ws.cwiseAbs().dot(sb->gram_ss.cwiseAbs() * ws.cwiseAbs());
    }
    if (s < -1e-12 * std::max(1.0, scale)) {
      throw NumericalBreakdownError("residual norm: negative quadratic form");
    }
    return std::sqrt(std::max(s, 0.0));
  }

  const FullOrderModel* fom_;
  const ReducedModel* rom_;
  int generation_;
  detail::FamilyLayout l_, j_, a_pr_, a_du_, k_pr_;
  std::vector<Vector> reps_core_;
  Matrix gram_core_;
  std::vector<SensGram> sens_;
};

/// All a posteriori bounds for one ReducedModel generation. Constants are
/// certified: coercivity from min-theta, continuity of a-derived forms from
/// max-theta, k-forms from per-component operator norms, functionals from
/// exact Riesz dual norms.
class EstimatorBundle {
 public:
  EstimatorBundle(const FullOrderModel& fom, const ReducedModel& rom)
      : fom_(&fom), rom_(&rom), cache_(fom, rom), k_norms_(fom.k_component_norms()) {}

  const RieszCache& cache() const { return cache_; }
  const ReducedModel& rom() const { return *rom_; }

  double alpha_lb(const Vector& mu) const {
    return coercivity_lower_bound(fom_->a(), mu, fom_->mu_check());
  }
  double gamma_a(const Vector& mu) const {
    return continuity_upper_bound(fom_->a(), mu, fom_->mu_check());
  }
  double gamma_di_a(const Vector& mu, int i) const {
    return continuity_upper_bound_partial(fom_->a(), mu, fom_->mu_check(), i);
  }
  double gamma_k(const Vector& mu) const {
    double g = 0.0;
    for (int xi = 0; xi < fom_->k().size(); ++xi) {
      g += std::abs(fom_->k().thetas[static_cast<std::size_t>(xi)].value(mu)) *
           k_norms_[static_cast<std::size_t>(xi)];
    }
    return g;
  }
  double gamma_di_k(const Vector& mu, int i) const {
    double g = 0.0;
    for (int xi = 0; xi < fom_->k().size(); ++xi) {
      g += std::abs(fom_->k().thetas[static_cast<std::size_t>(xi)].partial(mu, i)) *
           k_norms_[static_cast<std::size_t>(xi)];
    }
    return g;
  }
  double gamma_di_j(const Vector& mu, int i) const {
    double g = 0.0;
    for (int xi = 0; xi < fom_->j().size(); ++xi) {
      g += std::abs(fom_->j().thetas[static_cast<std::size_t>(xi)].partial(mu, i)) *
           cache_.dual_norm_j_component(xi);
    }
    return g;
  }
  double gamma_di_l(const Vector& mu, int i) const {
    double g = 0.0;
    for (int xi = 0; xi < fom_->l().size(); ++xi) {
      g += std::abs(fom_->l().thetas[static_cast<std::size_t>(xi)].partial(mu, i)) *
           cache_.dual_norm_l_component(xi);
    }
    return g;
  }

  double residual_norm_primal(const Vector& mu, const ReducedSolution& s) const {
    return cache_.residual_norm_primal(mu, s.u);
  }
  double residual_norm_dual(const Vector& mu, const ReducedSolution& s) const {
    return cache_.residual_norm_dual(mu, s.u, s.p);
  }

  /// ||u_h - u_r|| <= Delta_pr = ||r^pr(u_r)|| / alpha_lb.
  double delta_pr(const Vector& mu, const ReducedSolution& s) const {
    return residual_norm_primal(mu, s) / alpha_lb(mu);
  }
  double delta_pr(const Vector& mu) const { return delta_pr(mu, rom_->solve(mu)); }

  /// ||p_h - p_r|| <= (2 gamma_k Delta_pr + ||r^du||) / alpha_lb.
  double delta_du(const Vector& mu, const ReducedSolution& s) const {
    return (2.0 * gamma_k(mu) * delta_pr(mu, s) + residual_norm_dual(mu, s)) / alpha_lb(mu);
  }
  double delta_du(const Vector& mu) const { return delta_du(mu, rom_->solve(mu)); }

  /// |J_h - J_r| bound for the standard functional (with the lower-order
  /// correction term).
  double delta_j_standard(const Vector& mu, const ReducedSolution& s) const {
    const double dpr = delta_pr(mu, s);
    return dpr * residual_norm_dual(mu, s) + dpr * dpr * gamma_k(mu) +
           std::abs(rom_->correction(mu, s));
  }
  double delta_j_standard(const Vector& mu) const {
    return delta_j_standard(mu, rom_->solve(mu));
  }

  /// |J_h - J_ncd| bound, without lower-order terms.
  double delta_j_ncd(const Vector& mu, const ReducedSolution& s) const {
    const double dpr = delta_pr(mu, s);
    return dpr * residual_norm_dual(mu, s) + dpr * dpr * gamma_k(mu);
  }
  double delta_j_ncd(const Vector& mu) const { return delta_j_ncd(mu, rom_->solve(mu)); }

  /// Componentwise bound on |grad J_h - inexact gradient|_i.
  Vector delta_grad_standard_components(const Vector& mu, const ReducedSolution& s) const {
    const double dpr = delta_pr(mu, s);
    const double ddu = delta_du(mu, s);
    const double nu = s.u.norm();  // basis orthonormal => coefficient norm = energy norm
    const double np = s.p.norm();
    const int npar = fom_->num_parameters();
    Vector d(npar);
    for (int i = 0; i < npar; ++i) {
      const double gdia = gamma_di_a(mu, i);
      const double gdik = gamma_di_k(mu, i);
      d[i] = 2.0 * dpr * nu * gdik + dpr * (gamma_di_j(mu, i) + gdia * np) +
             ddu * (gamma_di_l(mu, i) + gdia * nu) + dpr * ddu * gdia + dpr * dpr * gdik;
    }
    return d;
  }
  double delta_grad_standard(const Vector& mu, const ReducedSolution& s) const {
    return delta_grad_standard_components(mu, s).norm();
  }
  double delta_grad_standard(const Vector& mu) const {
    return delta_grad_standard(mu, rom_->solve(mu));
  }

  /// Bound on ||grad J_h - grad J_ncd|| computed with the adjoint approach;
  /// adds the z/w terms on top of the standard bound (not higher order).
  double delta_grad_ncd_adjoint(const Vector& mu, const ReducedSolution& s) const {
    const double alpha = alpha_lb(mu);
    const double rpr = residual_norm_primal(mu, s);
    const double rdu = residual_norm_dual(mu, s);
    const double z_bound = rpr / alpha;
    const double w_bound = (rdu + 2.0 * gamma_k(mu) * z_bound) / alpha;
    const double nu = s.u.norm();
    const double np = s.p.norm();
    Vector d = delta_grad_standard_components(mu, s);
    for (int i = 0; i < fom_->num_parameters(); ++i) {
      const double gdia = gamma_di_a(mu, i);
      d[i] += (gamma_di_l(mu, i) + gdia * nu) * w_bound +
              z_bound * (gamma_di_j(mu, i) + 2.0 * gamma_di_k(mu, i) * nu + gdia * np);
    }
    return d.norm();
  }
  double delta_grad_ncd_adjoint(const Vector& mu) const {
    return delta_grad_ncd_adjoint(mu, rom_->solve(mu));
  }

  /// ||d_i u_h - d_i u_r|| <= (gamma_{d_i a} Delta_pr + ||r^{pr,d_i}||) / alpha.
  double delta_sens_pr(const Vector& mu, const ReducedSolution& s, int i,
                       SensitivityMode mode) const {
    auto [du, dp] = rom_->solve_reduced_sensitivities(mu, s, i, mode);
    return delta_sens_pr_with(mu, s, du, i, mode);
  }
  double delta_sens_pr(const Vector& mu, int i,
                       SensitivityMode mode = SensitivityMode::Galerkin) const {
    return delta_sens_pr(mu, rom_->solve(mu), i, mode);
  }

  double delta_sens_pr_with(const Vector& mu, const ReducedSolution& s, const Vector& du, int i,
                            SensitivityMode mode) const {
    const double res = mode == SensitivityMode::Galerkin
                           ? cache_.residual_norm_sens_pr(mu, s.u, du, i)
                           : cache_.residual_norm_sens_pr_approx(mu, s.u, du, i);
    return (gamma_di_a(mu, i) * delta_pr(mu, s) + res) / alpha_lb(mu);
  }

  /// Dual sensitivity bound of the same flavor.
  double delta_sens_du(const Vector& mu, const ReducedSolution& s, int i,
                       SensitivityMode mode) const {
    auto [du, dp] = rom_->solve_reduced_sensitivities(mu, s, i, mode);
    return delta_sens_du_with(mu, s, du, dp, i, mode);
  }
  double delta_sens_du(const Vector& mu, int i,
                       SensitivityMode mode = SensitivityMode::Galerkin) const {
    return delta_sens_du(mu, rom_->solve(mu), i, mode);
  }

  double delta_sens_du_with(const Vector& mu, const ReducedSolution& s, const Vector& du,
                            const Vector& dp, int i, SensitivityMode mode) const {
    const double res = mode == SensitivityMode::Galerkin
                           ? cache_.residual_norm_sens_du(mu, s.u, s.p, du, dp, i)
                           : cache_.residual_norm_sens_du_approx(mu, s.u, s.p, du, dp, i);
    return (2.0 * gamma_di_k(mu, i) * delta_pr(mu, s) + gamma_di_a(mu, i) * delta_du(mu, s) +
            2.0 * gamma_k(mu) * delta_sens_pr_with(mu, s, du, i, mode) + res) /
           alpha_lb(mu);
  }

  /// Second-order bound on the gradient error of the sensitivity approach,
  /// componentwise gamma_{d_i k} Dpr^2 + gamma_a D_{d_i pr} Ddu + ||r^{du,d_i}|| Dpr.
  double delta_grad_sens(const Vector& mu, const ReducedSolution& s,
                         SensitivityMode mode) const {
    const double dpr = delta_pr(mu, s);
    const double ddu = delta_du(mu, s);
    const double ga = gamma_a(mu);
    const int npar = fom_->num_parameters();
    Vector d(npar);
    for (int i = 0; i < npar; ++i) {
      auto [du, dp] = rom_->solve_reduced_sensitivities(mu, s, i, mode);
      const double res_du = mode == SensitivityMode::Galerkin
                                ? cache_.residual_norm_sens_du(mu, s.u, s.p, du, dp, i)
                                : cache_.residual_norm_sens_du_approx(mu, s.u, s.p, du, dp, i);
      d[i] = gamma_di_k(mu, i) * dpr * dpr +
             ga * delta_sens_pr_with(mu, s, du, i, mode) * ddu + res_du * dpr;
    }
    return d.norm();
  }
  double delta_grad_sens(const Vector& mu,
                         SensitivityMode mode = SensitivityMode::Galerkin) const {
    return delta_grad_sens(mu, rom_->solve(mu), mode);
  }

 private:
  const FullOrderModel* fom_;
  const ReducedModel* rom_;
  RieszCache cache_;
  std::vector<double> k_norms_;  // copy of the FOM's cached component norms
};

}  // namespace trrb
