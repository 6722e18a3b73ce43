// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "trrb/fom.hpp"

namespace trrb {

struct BasisProvenance {
  Vector mu;
  StateRole role = StateRole::Primal;
};

/// Snapshot basis, orthonormal w.r.t. the energy product.
class ReducedBasis {
 public:
  int size() const { return static_cast<int>(vectors_.size()); }
  const Vector& vec(int i) const { return vectors_[static_cast<std::size_t>(i)]; }
  const std::vector<BasisProvenance>& provenance() const { return provenance_; }

  /// Stabilized Gram-Schmidt with one re-orthogonalization pass. The vector is
  /// dropped when its残 norm falls below drop_tol relative to the
  /// pre-orthogonalization norm. Returns whether the vector was appended.
  bool extend(const Vector& snapshot, const SparseMatrix& product, BasisProvenance prov,
              double drop_tol = 1e-10) {
    instrument::hd_event();
    const double n0 = std::sqrt(std::max(0.0, snapshot.dot(product * snapshot)));
    if (!(n0 > 0.0) || !std::isfinite(n0)) return false;
    Vector w = snapshot;
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& phi : vectors_) {
        const double c = phi.dot(product * w);
        w -= c * phi;
      }
    }
    const double n1 = std::sqrt(std::max(0.0, w.dot(product * w)));
    if (n1 < drop_tol * n0) return false;
    vectors_.push_back(w / n1);
    provenance_.push_back(std::move(prov));
    return true;
  }

 private:
  std::vector<Vector> vectors_;
  std::vector<BasisProvenance> provenance_;
};

enum class EnrichmentStrategy { Lagrangian, Single };
enum class SensitivityMode { Galerkin, ApproximateSpaces };

namespace detail {

/// Dense blocks of one affine form projected onto a (row basis, column basis)
/// pair; comp[xi](i, j) = form_xi(L_i, R_j). Components must be symmetric,
/// which holds for a and k.
struct OperatorBlocks {
  std::vector<Matrix> comp;
};

struct FunctionalBlocks {
  std::vector<Vector> comp;
};

/// Extends blocks to the current basis sizes, computing only new rows/columns.
inline void update_operator_blocks(OperatorBlocks& blocks, const AffineOperator& op,
                                   const ReducedBasis& left, const ReducedBasis& right) {
  if (blocks.comp.empty()) blocks.comp.resize(static_cast<std::size_t>(op.size()));
  const int r1 = left.size(), c1 = right.size();
  for (int xi = 0; xi < op.size(); ++xi) {
    Matrix& b = blocks.comp[static_cast<std::size_t>(xi)];
    const int r0 = static_cast<int>(b.rows()), c0 = static_cast<int>(b.cols());
    if (r0 == r1 && c0 == c1) continue;
    b.conservativeResize(r1, c1);
    const SparseMatrix& m = op.components[static_cast<std::size_t>(xi)];
    for (int j = c0; j < c1; ++j) {
      instrument::hd_event();
      const Vector t = m * right.vec(j);
      for (int i = 0; i < r1; ++i) b(i, j) = left.vec(i).dot(t);
    }
    for (int i = r0; i < r1; ++i) {
      instrument::hd_event();
      const Vector t = m * left.vec(i);  // symmetric component
      for (int j = 0; j < c0; ++j) b(i, j) = t.dot(right.vec(j));
    }
  }
}

inline void update_functional_blocks(FunctionalBlocks& blocks, const AffineFunctional& f,
                                     const ReducedBasis& basis) {
  if (blocks.comp.empty()) blocks.comp.resize(static_cast<std::size_t>(f.size()));
  const int n1 = basis.size();
  for (int xi = 0; xi < f.size(); ++xi) {
    Vector& b = blocks.comp[static_cast<std::size_t>(xi)];
    const int n0 = static_cast<int>(b.size());
    if (n0 == n1) continue;
    b.conservativeResize(n1);
    instrument::hd_event();
    for (int i = n0; i < n1; ++i) {
      b[i] = f.components[static_cast<std::size_t>(xi)].dot(basis.vec(i));
    }
  }
}

template <typename Form>
Matrix combine(const OperatorBlocks& blocks, const Form& form, const Vector& mu) {
  if (blocks.comp.empty() || blocks.comp.front().size() == 0) {
    return Matrix(blocks.comp.empty() ? 0 : blocks.comp.front().rows(),
                  blocks.comp.empty() ? 0 : blocks.comp.front().cols());
  }
  Matrix out = blocks.comp.front() * form.thetas.front().value(mu);
  for (int xi = 1; xi < form.size(); ++xi) {
    out += blocks.comp[static_cast<std::size_t>(xi)] *
           form.thetas[static_cast<std::size_t>(xi)].value(mu);
  }
  return out;
}

template <typename Form>
Matrix combine_partial(const OperatorBlocks& blocks, const Form& form, const Vector& mu, int i) {
  Matrix out = blocks.comp.front() * form.thetas.front().partial(mu, i);
  for (int xi = 1; xi < form.size(); ++xi) {
    out += blocks.comp[static_cast<std::size_t>(xi)] *
           form.thetas[static_cast<std::size_t>(xi)].partial(mu, i);
  }
  return out;
}

template <typename Form>
Vector combine(const FunctionalBlocks& blocks, const Form& form, const Vector& mu) {
  Vector out = blocks.comp.front() * form.thetas.front().value(mu);
  for (int xi = 1; xi < form.size(); ++xi) {
    out += blocks.comp[static_cast<std::size_t>(xi)] *
           form.thetas[static_cast<std::size_t>(xi)].value(mu);
  }
  return out;
}

template <typename Form>
Vector combine_partial(const FunctionalBlocks& blocks, const Form& form, const Vector& mu,
                       int i) {
  Vector out = blocks.comp.front() * form.thetas.front().partial(mu, i);
  for (int xi = 1; xi < form.size(); ++xi) {
    out += blocks.comp[static_cast<std::size_t>(xi)] *
           form.thetas[static_cast<std::size_t>(xi)].partial(mu, i);
  }
  return out;
}

inline Vector dense_spd_solve(const Matrix& a, const Vector& b, const char* who) {
  if (a.rows() == 0) return Vector(0);
  Eigen::PartialPivLU<Matrix> lu(a);
  if (!(lu.rcond() > 1e-14)) {
    throw DegenerateBasisError(std::string(who) + ": reduced system singular");
  }
  Vector x = lu.solve(b);
  // one refinement pass with an extended-precision residual keeps the solve a
  // smooth function of mu at the resolution the line searches operate on
  Vector r(b.size());
  for (Index i = 0; i < b.size(); ++i) {
    long double acc = static_cast<long double>(b[i]);
    for (Index j = 0; j < a.cols(); ++j) {
      acc -= static_cast<long double>(a(i, j)) * static_cast<long double>(x[j]);
    }
    r[i] = static_cast<double>(acc);
  }
  x += lu.solve(r);
  return x;
}

/// Extended-precision dot product. Objective values combine terms of
/// magnitude ~|theta offset| that cancel down to O(1); the line searches need
/// differences below double rounding of the intermediates.
inline double dot_ld(const Vector& a, const Vector& b) {
  long double acc = 0.0L;
  for (Index i = 0; i < a.size(); ++i) {
    acc += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
  }
  return static_cast<double>(acc);
}

/// x^T M y accumulated in extended precision.
inline double quad_ld(const Vector& x, const Matrix& m, const Vector& y) {
  long double acc = 0.0L;
  for (Index j = 0; j < m.cols(); ++j) {
    long double col = 0.0L;
    for (Index i = 0; i < m.rows(); ++i) {
      col += static_cast<long double>(x[i]) * static_cast<long double>(m(i, j));
    }
    acc += col * static_cast<long double>(y[j]);
  }
  return static_cast<double>(acc);
}

}  // namespace detail

/// Reduced primal/dual pair in basis coefficients.
struct ReducedSolution {
  Vector u, p;
};

/// Per-direction sensitivity RB spaces (Def. of approximate partial
/// derivatives); built only by the estimator-study path.
struct SensitivityBlocks {
  ReducedBasis pr, du;
  detail::OperatorBlocks a_ss, a_ps, a_sd, a_tt, a_td, a_pt;
  detail::OperatorBlocks k_sp, k_tp, k_ts;
  detail::FunctionalBlocks l_s, l_t, j_s, j_t;
};

struct EnrichOutcome;

/// Galerkin-projected reduced model of a FullOrderModel. A generation is
/// immutable; enrichment returns a new generation.
class ReducedModel {
 public:
  static ReducedModel empty(const FullOrderModel& fom, EnrichmentStrategy strategy,
                            bool with_sensitivity_spaces = false) {
    ReducedModel m;
    m.fom_ = &fom;
    m.strategy_ = strategy;
    if (with_sensitivity_spaces) {
      m.sens_.resize(static_cast<std::size_t>(fom.num_parameters()));
    }
    m.sync_blocks();
    return m;
  }

  const FullOrderModel& fom() const { return *fom_; }
  EnrichmentStrategy strategy() const { return strategy_; }
  int generation() const { return generation_; }
  const ReducedBasis& primal_basis() const { return pr_; }
  const ReducedBasis& dual_basis() const { return du_; }
  bool has_sensitivity_spaces() const { return !sens_.empty(); }
  const std::vector<SensitivityBlocks>& sensitivity_spaces() const { return sens_; }

  Vector lift_primal(const Vector& u_r) const { return lift(pr_, u_r); }
  Vector lift_dual(const Vector& p_r) const { return lift(du_, p_r); }
  Vector lift_primal_sensitivity(int i, const Vector& c) const {
    return lift(sens_[static_cast<std::size_t>(i)].pr, c);
  }
  Vector lift_dual_sensitivity(int i, const Vector& c) const {
    return lift(sens_[static_cast<std::size_t>(i)].du, c);
  }

  Vector solve_reduced_primal(const Vector& mu) const {
    const Matrix app = detail::combine(a_pp_, fom_->a(), mu);
    const Vector lp = detail::combine(l_p_, fom_->l(), mu);
    return detail::dense_spd_solve(app, lp, "solve_reduced_primal");
  }

  Vector solve_reduced_dual(const Vector& mu, const Vector& u_r) const {
    const Matrix add = detail::combine(a_dd_, fom_->a(), mu);
    Vector rhs = detail::combine(j_d_, fom_->j(), mu);
    if (du_.size() > 0 && pr_.size() > 0) {
      rhs += 2.0 * (detail::combine(k_pd_, fom_->k(), mu).transpose() * u_r);
    }
    return detail::dense_spd_solve(add, rhs, "solve_reduced_dual");
  }

  ReducedSolution solve(const Vector& mu) const {
    ReducedSolution s;
    s.u = solve_reduced_primal(mu);
    s.p = solve_reduced_dual(mu, s.u);
    return s;
  }

  double objective_standard(const Vector& mu, const ReducedSolution& s) const {
    long double acc = static_cast<long double>(fom_->theta().offset);
    acc += static_cast<long double>(fom_->theta().centered(mu));
    if (pr_.size() > 0) {
      acc += static_cast<long double>(
          detail::dot_ld(detail::combine(j_p_, fom_->j(), mu), s.u));
      acc += static_cast<long double>(
          detail::quad_ld(s.u, detail::combine(k_pp_, fom_->k(), mu), s.u));
    }
    return static_cast<double>(acc);
  }
  double objective_standard(const Vector& mu) const { return objective_standard(mu, solve(mu)); }

  /// NCD correction r_mu^pr(u_r)[p_r] = l(p_r) - a(u_r, p_r).
  double correction(const Vector& mu, const ReducedSolution& s) const {
    if (du_.size() == 0) return 0.0;
    double c = detail::dot_ld(detail::combine(l_d_, fom_->l(), mu), s.p);
    if (pr_.size() > 0) {
      c -= detail::quad_ld(s.u, detail::combine(a_pd_, fom_->a(), mu), s.p);
    }
    return c;
  }

  double objective_ncd(const Vector& mu, const ReducedSolution& s) const {
    return objective_standard(mu, s) + correction(mu, s);
  }
  double objective_ncd(const Vector& mu) const { return objective_ncd(mu, solve(mu)); }

  /// Inexact gradient: d_i J(u_r, mu) + d_i r^pr(u_r)[p_r].
  Vector gradient_inexact(const Vector& mu, const ReducedSolution& s) const {
    const int np = fom_->num_parameters();
    Vector g = fom_->theta().gradient(mu);
    for (int i = 0; i < np; ++i) {
      double gi = 0.0;
      if (pr_.size() > 0) {
        gi += detail::combine_partial(j_p_, fom_->j(), mu, i).dot(s.u);
        gi += s.u.dot(detail::combine_partial(k_pp_, fom_->k(), mu, i) * s.u);
      }
      if (du_.size() > 0) {
        gi += detail::combine_partial(l_d_, fom_->l(), mu, i).dot(s.p);
        if (pr_.size() > 0) {
          gi -= s.u.dot(detail::combine_partial(a_pd_, fom_->a(), mu, i) * s.p);
        }
      }
      g[i] += gi;
    }
    return g;
  }
  Vector gradient_inexact(const Vector& mu) const { return gradient_inexact(mu, solve(mu)); }

  /// Auxiliary adjoint solutions of the NCD gradient:
  ///   a(z, q) = -r^pr(u_r)[q]            for q in V_du,
  ///   a(v, w) = r^du(u_r, p_r)[v] - 2k(z, v)  for v in V_pr.
  struct NcdAdjoints {
    Vector z, w;
  };

  NcdAdjoints solve_ncd_adjoints(const Vector& mu, const ReducedSolution& s) const {
    NcdAdjoints out;
    const Matrix add = detail::combine(a_dd_, fom_->a(), mu);
    Vector r_du_coeff = detail::combine(l_d_, fom_->l(), mu);  // r^pr(u_r)[.] on V_du
    if (pr_.size() > 0 && du_.size() > 0) {
      r_du_coeff -= detail::combine(a_pd_, fom_->a(), mu).transpose() * s.u;
    }
    out.z = detail::dense_spd_solve(add, (-r_du_coeff).eval(), "solve_ncd_adjoints");
    const Matrix app = detail::combine(a_pp_, fom_->a(), mu);
    Vector rhs = Vector::Zero(pr_.size());
    if (pr_.size() > 0) {
      rhs = detail::combine(j_p_, fom_->j(), mu) +
            2.0 * (detail::combine(k_pp_, fom_->k(), mu) * s.u);
      if (du_.size() > 0) {
        rhs -= detail::combine(a_pd_, fom_->a(), mu) * s.p;
        rhs -= 2.0 * (detail::combine(k_pd_, fom_->k(), mu) * out.z);
      }
    }
    out.w = detail::dense_spd_solve(app, rhs, "solve_ncd_adjoints");
    return out;
  }

  /// True gradient of the NCD-corrected functional (adjoint approach):
  /// d_i J(u_r, mu) + d_i r^pr(u_r)[p_r + w] - d_i r^du(u_r, p_r)[z].
  Vector gradient_ncd_adjoint(const Vector& mu, const ReducedSolution& s) const {
    const NcdAdjoints adj = solve_ncd_adjoints(mu, s);
    const int np = fom_->num_parameters();
    Vector g = fom_->theta().gradient(mu);
    for (int i = 0; i < np; ++i) {
      double gi = 0.0;
      if (pr_.size() > 0) {
        gi += detail::combine_partial(j_p_, fom_->j(), mu, i).dot(s.u);
        gi += s.u.dot(detail::combine_partial(k_pp_, fom_->k(), mu, i) * s.u);
        gi += detail::combine_partial(l_p_, fom_->l(), mu, i).dot(adj.w);
        gi -= s.u.dot(detail::combine_partial(a_pp_, fom_->a(), mu, i) * adj.w);
      }
      if (du_.size() > 0) {
        gi += detail::combine_partial(l_d_, fom_->l(), mu, i).dot(s.p);
        gi -= detail::combine_partial(j_d_, fom_->j(), mu, i).dot(adj.z);
        if (pr_.size() > 0) {
          gi -= s.u.dot(detail::combine_partial(a_pd_, fom_->a(), mu, i) * s.p);
          gi -= 2.0 * adj.z.dot(detail::combine_partial(k_pd_, fom_->k(), mu, i).transpose() * s.u);
        }
        gi += adj.z.dot(detail::combine_partial(a_dd_, fom_->a(), mu, i) * s.p);
      }
      g[i] += gi;
    }
    return g;
  }
  Vector gradient_ncd_adjoint(const Vector& mu) const {
    return gradient_ncd_adjoint(mu, solve(mu));
  }

  /// Reduced sensitivity pair (d_i u_r, d_i p_r), either Galerkin (in
  /// V_pr/V_du) or in the dedicated approximate sensitivity spaces.
  std::pair<Vector, Vector> solve_reduced_sensitivities(const Vector& mu,
                                                        const ReducedSolution& s, int i,
                                                        SensitivityMode mode) const {
    if (mode == SensitivityMode::Galerkin) {
      const Matrix app = detail::combine(a_pp_, fom_->a(), mu);
      Vector rhs_u = Vector::Zero(pr_.size());
      if (pr_.size() > 0) {
        rhs_u = detail::combine_partial(l_p_, fom_->l(), mu, i) -
                detail::combine_partial(a_pp_, fom_->a(), mu, i) * s.u;
      }
      Vector du = detail::dense_spd_solve(app, rhs_u, "solve_reduced_sensitivities");
      const Matrix add = detail::combine(a_dd_, fom_->a(), mu);
      Vector rhs_p = Vector::Zero(du_.size());
      if (du_.size() > 0) {
        rhs_p = detail::combine_partial(j_d_, fom_->j(), mu, i);
        if (pr_.size() > 0) {
          const detail::OperatorBlocks& kpd = k_pd_;
          rhs_p += 2.0 * (detail::combine_partial(kpd, fom_->k(), mu, i).transpose() * s.u);
          rhs_p += 2.0 * (detail::combine(kpd, fom_->k(), mu).transpose() * du);
        }
        rhs_p -= detail::combine_partial(a_dd_, fom_->a(), mu, i) * s.p;
      }
      Vector dp = detail::dense_spd_solve(add, rhs_p, "solve_reduced_sensitivities");
      return {std::move(du), std::move(dp)};
    }
    if (!has_sensitivity_spaces()) {
      throw std::logic_error("solve_reduced_sensitivities: no sensitivity spaces built");
    }
    const SensitivityBlocks& sb = sens_[static_cast<std::size_t>(i)];
    const Matrix ass = detail::combine(sb.a_ss, fom_->a(), mu);
    Vector rhs_u = Vector::Zero(sb.pr.size());
    if (sb.pr.size() > 0) {
      rhs_u = detail::combine_partial(sb.l_s, fom_->l(), mu, i);
      if (pr_.size() > 0) {
        rhs_u -= detail::combine_partial(sb.a_ps, fom_->a(), mu, i).transpose() * s.u;
      }
    }
    Vector du = detail::dense_spd_solve(ass, rhs_u, "solve_reduced_sensitivities");
    const Matrix att = detail::combine(sb.a_tt, fom_->a(), mu);
    Vector rhs_p = Vector::Zero(sb.du.size());
    if (sb.du.size() > 0) {
      rhs_p = detail::combine_partial(sb.j_t, fom_->j(), mu, i);
      if (pr_.size() > 0) {
        rhs_p += 2.0 * (detail::combine_partial(sb.k_tp, fom_->k(), mu, i) * s.u);
      }
      if (du_.size() > 0) {
        rhs_p -= detail::combine_partial(sb.a_td, fom_->a(), mu, i) * s.p;
      }
      if (sb.pr.size() > 0) {
        rhs_p += 2.0 * (detail::combine(sb.k_ts, fom_->k(), mu) * du);
      }
    }
    Vector dp = detail::dense_spd_solve(att, rhs_p, "solve_reduced_sensitivities");
    return {std::move(du), std::move(dp)};
  }

  /// True NCD gradient via reduced sensitivities (mathematically equivalent to
  /// the adjoint approach):
  /// d_i J + d_i r^pr(u_r)[p_r] + r^pr(u_r)[d_i p_r] + r^du(u_r, p_r)[d_i u_r].
  Vector gradient_ncd_sensitivity(const Vector& mu, const ReducedSolution& s) const {
    Vector g = gradient_inexact(mu, s);
    const int np = fom_->num_parameters();
    const Vector rpr_du = residual_pr_on_dual(mu, s);    // r^pr(u_r)[.] on V_du
    const Vector rdu_pr = residual_du_on_primal(mu, s);  // r^du(u_r,p_r)[.] on V_pr
    for (int i = 0; i < np; ++i) {
      auto [du, dp] = solve_reduced_sensitivities(mu, s, i, SensitivityMode::Galerkin);
      if (du_.size() > 0) g[i] += rpr_du.dot(dp);
      if (pr_.size() > 0) g[i] += rdu_pr.dot(du);
    }
    return g;
  }
  Vector gradient_ncd_sensitivity(const Vector& mu) const {
    return gradient_ncd_sensitivity(mu, solve(mu));
  }

  /// Approximate gradient using the dedicated sensitivity spaces.
  Vector gradient_approx_sensitivity(const Vector& mu, const ReducedSolution& s) const {
    if (!has_sensitivity_spaces()) {
      throw std::logic_error("gradient_approx_sensitivity: no sensitivity spaces built");
    }
    Vector g = gradient_inexact(mu, s);
    const int np = fom_->num_parameters();
    for (int i = 0; i < np; ++i) {
      const SensitivityBlocks& sb = sens_[static_cast<std::size_t>(i)];
      auto [du, dp] = solve_reduced_sensitivities(mu, s, i, SensitivityMode::ApproximateSpaces);
      if (sb.du.size() > 0) {
        Vector rpr_t = detail::combine(sb.l_t, fom_->l(), mu);
        if (pr_.size() > 0) {
          rpr_t -= detail::combine(sb.a_pt, fom_->a(), mu).transpose() * s.u;
        }
        g[i] += rpr_t.dot(dp);
      }
      if (sb.pr.size() > 0) {
        Vector rdu_s = detail::combine(sb.j_s, fom_->j(), mu);
        if (pr_.size() > 0) {
          rdu_s += 2.0 * (detail::combine(sb.k_sp, fom_->k(), mu) * s.u);
        }
        if (du_.size() > 0) {
          rdu_s -= detail::combine(sb.a_sd, fom_->a(), mu) * s.p;
        }
        g[i] += rdu_s.dot(du);
      }
    }
    return g;
  }
  Vector gradient_approx_sensitivity(const Vector& mu) const {
    return gradient_approx_sensitivity(mu, solve(mu));
  }

  /// Coefficients of r^pr(u_r)[.] restricted to V_du.
  Vector residual_pr_on_dual(const Vector& mu, const ReducedSolution& s) const {
    Vector r = detail::combine(l_d_, fom_->l(), mu);
    if (pr_.size() > 0 && du_.size() > 0) {
      r -= detail::combine(a_pd_, fom_->a(), mu).transpose() * s.u;
    }
    return r;
  }

  /// Coefficients of r^du(u_r, p_r)[.] restricted to V_pr.
  Vector residual_du_on_primal(const Vector& mu, const ReducedSolution& s) const {
    Vector r = detail::combine(j_p_, fom_->j(), mu);
    if (pr_.size() > 0) {
      r += 2.0 * (detail::combine(k_pp_, fom_->k(), mu) * s.u);
      if (du_.size() > 0) {
        r -= detail::combine(a_pd_, fom_->a(), mu) * s.p;
      }
    }
    return r;
  }

  EnrichOutcome enriched_at(const Vector& mu, bool with_fom_sensitivities = false) const;

 private:
  Vector lift(const ReducedBasis& basis, const Vector& coeff) const {
    instrument::hd_event();
    Vector out = Vector::Zero(fom_->dim());
    for (int i = 0; i < basis.size(); ++i) out += coeff[i] * basis.vec(i);
    return out;
  }

  /// Brings every projected block up to the current basis sizes.
  void sync_blocks() {
    const auto& fom = *fom_;
    detail::update_operator_blocks(a_pp_, fom.a(), pr_, pr_);
    detail::update_operator_blocks(a_dd_, fom.a(), du_, du_);
    detail::update_operator_blocks(a_pd_, fom.a(), pr_, du_);
    detail::update_operator_blocks(k_pp_, fom.k(), pr_, pr_);
    detail::update_operator_blocks(k_pd_, fom.k(), pr_, du_);
    detail::update_functional_blocks(l_p_, fom.l(), pr_);
    detail::update_functional_blocks(l_d_, fom.l(), du_);
    detail::update_functional_blocks(j_p_, fom.j(), pr_);
    detail::update_functional_blocks(j_d_, fom.j(), du_);
    for (auto& sb : sens_) {
      detail::update_operator_blocks(sb.a_ss, fom.a(), sb.pr, sb.pr);
      detail::update_operator_blocks(sb.a_ps, fom.a(), pr_, sb.pr);
      detail::update_operator_blocks(sb.a_sd, fom.a(), sb.pr, du_);
      detail::update_operator_blocks(sb.a_tt, fom.a(), sb.du, sb.du);
      detail::update_operator_blocks(sb.a_td, fom.a(), sb.du, du_);
      detail::update_operator_blocks(sb.a_pt, fom.a(), pr_, sb.du);
      detail::update_operator_blocks(sb.k_sp, fom.k(), sb.pr, pr_);
      detail::update_operator_blocks(sb.k_tp, fom.k(), sb.du, pr_);
      detail::update_operator_blocks(sb.k_ts, fom.k(), sb.du, sb.pr);
      detail::update_functional_blocks(sb.l_s, fom.l(), sb.pr);
      detail::update_functional_blocks(sb.l_t, fom.l(), sb.du);
      detail::update_functional_blocks(sb.j_s, fom.j(), sb.pr);
      detail::update_functional_blocks(sb.j_t, fom.j(), sb.du);
    }
  }

  const FullOrderModel* fom_ = nullptr;
  EnrichmentStrategy strategy_ = EnrichmentStrategy::Lagrangian;
  int generation_ = 0;
  ReducedBasis pr_, du_;
  detail::OperatorBlocks a_pp_, a_dd_, a_pd_, k_pp_, k_pd_;
  detail::FunctionalBlocks l_p_, l_d_, j_p_, j_d_;
  std::vector<SensitivityBlocks> sens_;

  friend struct EnrichAccess;
};

struct EnrichOutcome {
  ReducedModel model;
  StateVector u_h, p_h;
  bool primal_added = false;
  bool dual_added = false;
  int fom_solves = 0;
};

struct EnrichAccess {
  static EnrichOutcome run(const ReducedModel& base, const Vector& mu,
                           bool with_fom_sensitivities) {
    const FullOrderModel& fom = base.fom();
    EnrichOutcome out{base, fom.solve_primal(mu), StateVector{}, false, false, 0};
    out.p_h = fom.solve_dual(mu, out.u_h);
    out.fom_solves = 2;
    ReducedModel& m = out.model;
    const SparseMatrix& product = fom.product();
    if (base.strategy() == EnrichmentStrategy::Lagrangian) {
      out.primal_added =
          m.pr_.extend(out.u_h.coefficients, product, {mu, StateRole::Primal});
      out.dual_added = m.du_.extend(out.p_h.coefficients, product, {mu, StateRole::Dual});
    } else {
      out.primal_added =
          m.pr_.extend(out.u_h.coefficients, product, {mu, StateRole::Primal});
      out.dual_added = m.pr_.extend(out.p_h.coefficients, product, {mu, StateRole::Dual});
      m.du_ = m.pr_;
    }
    if (with_fom_sensitivities) {
      if (m.sens_.empty()) {
        m.sens_.resize(static_cast<std::size_t>(fom.num_parameters()));
      }
      for (int i = 0; i < fom.num_parameters(); ++i) {
        const StateVector du = fom.solve_primal_sensitivity(mu, out.u_h, i);
        const StateVector dp = fom.solve_dual_sensitivity(mu, out.u_h, out.p_h, du, i);
        out.fom_solves += 2;
        auto& sb = m.sens_[static_cast<std::size_t>(i)];
        sb.pr.extend(du.coefficients, product, {mu, StateRole::PrimalSensitivity});
        sb.du.extend(dp.coefficients, product, {mu, StateRole::DualSensitivity});
      }
    }
    if (base.strategy() == EnrichmentStrategy::Single) {
      // shared space: mirror the primal blocks so both views stay bitwise equal
      m.du_ = m.pr_;
    }
    m.sync_blocks();
    if (base.strategy() == EnrichmentStrategy::Single) {
      m.a_dd_ = m.a_pp_;
      m.a_pd_ = m.a_pp_;
      m.k_pd_ = m.k_pp_;
      m.l_d_ = m.l_p_;
      m.j_d_ = m.j_p_;
    }
    m.generation_ = base.generation() + 1;
    return out;
  }
};

inline EnrichOutcome ReducedModel::enriched_at(const Vector& mu,
                                               bool with_fom_sensitivities) const {
  return EnrichAccess::run(*this, mu, with_fom_sensitivities);
}

}  // namespace trrb
