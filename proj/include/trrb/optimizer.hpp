// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trrb/estimators.hpp"
#include "trrb/rom.hpp"

namespace trrb {

/// Algorithmic constants of the adaptive TR-RB loop and its sub-problem
/// solver. Defaults follow the experiments' configuration.
struct TrustRegionConfig {
  double delta0 = 0.1;      // initial TR radius
  double beta1 = 0.5;       // radius shrink factor
  double beta2 = 0.95;      // TR boundary safeguard
  double eta_rho = 0.75;    // enlarge tolerance
  double kappa = 0.5;       // backtracking base
  double kappa_arm = 1e-4;  // Armijo constant
  double tau_sub = 1e-8;    // sub-problem FOC tolerance
  double tau_foc = 1e-6;    // outer FOC tolerance
  int max_outer = 40;       // K
  int max_inner = 400;      // K_sub
  int max_armijo = 50;
  double tau_mac = 2.22e-16;  // machine-precision radius safeguard

  void validate() const {
    auto in01 = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in01(beta1) || !in01(beta2) || !in01(kappa)) {
      throw std::invalid_argument("TrustRegionConfig: beta1, beta2, kappa must be in (0,1)");
    }
    if (!(eta_rho >= 0.75 && eta_rho < 1.0)) {
      throw std::invalid_argument("TrustRegionConfig: eta_rho must be in [3/4, 1)");
    }
    if (!(kappa_arm > 0.0 && kappa_arm < 0.5)) {
      throw std::invalid_argument("TrustRegionConfig: kappa_arm must be in (0, 1/2)");
    }
    if (!(tau_sub <= tau_foc)) {
      throw std::invalid_argument("TrustRegionConfig: tau_sub must not exceed tau_foc");
    }
    if (!(delta0 > 0.0) || max_outer < 1 || max_inner < 1 || max_armijo < 1) {
      throw std::invalid_argument("TrustRegionConfig: invalid sizes");
    }
  }
};

inline Vector project_box(const Vector& mu, const ParameterSpace& space) {
  return space.clamp(mu);
}

/// First-order criticality measure || mu - P(mu - g) ||_2 for the box.
inline double foc_norm(const Vector& mu, const Vector& g, const ParameterSpace& space) {
  return (mu - space.clamp(mu - g)).norm();
}

/// Model function handed to the sub-problem solver: objective, gradient and
/// (for TR-constrained solves) the relative error estimate Delta/J.
struct ObjectiveModel {
  std::function<double(const Vector&)> value;
  std::function<Vector(const Vector&)> gradient;
  std::function<double(const Vector&)> tr_ratio;  // empty => unconstrained
};

enum class SubproblemExit { Converged, BoundaryCut, MaxInner, LineSearchFailure };

inline const char* to_string(SubproblemExit e) {
  switch (e) {
    case SubproblemExit::Converged: return "converged";
    case SubproblemExit::BoundaryCut: return "boundary-cut";
    case SubproblemExit::MaxInner: return "max-inner";
    default: return "line-search-failure";
  }
}

struct AgcResult {
  Vector mu;
  int backtracks = 0;
  bool success = false;
};

namespace detail {

struct LineSearchResult {
  Vector mu;
  double f = 0.0;
  int j = -1;
  bool found = false;
};

/// Smallest j with the Armijo condition
///   f(mu(j)) - f(mu) <= -(kappa_arm / kappa^j) ||mu(j) - mu||^2
/// and, when present, the TR condition ratio(mu(j)) <= delta, where
/// mu(j) = P(mu + kappa^j d).
inline LineSearchResult backtrack(const ObjectiveModel& m, const ParameterSpace& space,
                                  const Vector& mu, double f_mu, const Vector& d, double delta,
                                  const TrustRegionConfig& cfg) {
  LineSearchResult out;
  double step = 1.0;
  for (int j = 0; j <= cfg.max_armijo; ++j, step *= cfg.kappa) {
    const Vector trial = space.clamp(mu + step * d);
    const double move2 = (trial - mu).squaredNorm();
    if (move2 == 0.0) continue;
    const double f_trial = m.value(trial);
    if (f_trial - f_mu > -(cfg.kappa_arm / step) * move2) continue;
    if (m.tr_ratio && m.tr_ratio(trial) > delta) continue;
    out.mu = trial;
    out.f = f_trial;
    out.j = j;
    out.found = true;
    return out;
  }
  return out;
}

inline std::vector<int> inactive_set(const Vector& mu, const ParameterSpace& space) {
  std::vector<int> inact;
  for (int i = 0; i < space.dim(); ++i) {
    const double eps = 1e-12 * std::max(1.0, space.upper()[i] - space.lower()[i]);
    if (mu[i] > space.lower()[i] + eps && mu[i] < space.upper()[i] - eps) inact.push_back(i);
  }
  return inact;
}

}  // namespace detail

/// Approximate generalized Cauchy point: the first point along the projected
/// steepest-descent backtracking arc satisfying Armijo and the TR condition.
inline AgcResult compute_agc(const ObjectiveModel& m, const ParameterSpace& space,
                             const Vector& mu, double delta, const TrustRegionConfig& cfg) {
  AgcResult out;
  const Vector g = m.gradient(mu);
  if (foc_norm(mu, g, space) <= cfg.tau_sub) {
    out.mu = mu;  // degenerate arc: already sub-problem critical
    out.success = true;
    return out;
  }
  const double f_mu = m.value(mu);
  const auto ls = detail::backtrack(m, space, mu, f_mu, -g, delta, cfg);
  if (!ls.found) {
    out.mu = mu;
    out.success = false;
    return out;
  }
  out.mu = ls.mu;
  out.backtracks = ls.j;
  out.success = true;
  return out;
}

struct InnerIterate {
  Vector mu;
  double f = 0.0;
  double foc = 0.0;
};

struct SubproblemResult {
  Vector mu;
  Vector mu_agc;
  int iterations = 0;  // BFGS iterations past the AGC point
  SubproblemExit exit = SubproblemExit::MaxInner;
  bool agc_failed = false;
  std::vector<InnerIterate> trace;
};

/// Projected BFGS with Armijo backtracking and optional TR constraint. The
/// first iterate is the AGC point; BFGS curvature lives on the inactive
/// components and is reset to identity whenever the active set changes; a
/// non-descent direction falls back to projected gradient.
inline SubproblemResult projected_bfgs(const ObjectiveModel& m, const ParameterSpace& space,
                                       const Vector& mu_start, double delta,
                                       const TrustRegionConfig& cfg) {
  SubproblemResult out;
  const AgcResult agc = compute_agc(m, space, mu_start, delta, cfg);
  out.mu_agc = agc.mu;
  if (!agc.success) {
    out.mu = mu_start;
    out.agc_failed = true;
    out.exit = SubproblemExit::LineSearchFailure;
    return out;
  }
  Vector mu = agc.mu;
  Vector g = m.gradient(mu);
  double f = m.value(mu);
  out.trace.push_back({mu, f, foc_norm(mu, g, space)});
  std::vector<int> inact = detail::inactive_set(mu, space);
  Matrix h = Matrix::Identity(static_cast<Index>(inact.size()), static_cast<Index>(inact.size()));
  for (int ell = 1; ell <= cfg.max_inner; ++ell) {
    if (foc_norm(mu, g, space) <= cfg.tau_sub) {
      out.exit = SubproblemExit::Converged;
      break;
    }
    if (m.tr_ratio) {
      const double q = m.tr_ratio(mu);
      if (q >= cfg.beta2 * delta && q <= delta) {
        out.exit = SubproblemExit::BoundaryCut;
        break;
      }
    }
    const std::vector<int> inact_now = detail::inactive_set(mu, space);
    if (inact_now != inact) {
      inact = inact_now;
      h = Matrix::Identity(static_cast<Index>(inact.size()), static_cast<Index>(inact.size()));
    }
    Vector d = -g;
    if (!inact.empty()) {
      Vector gi(static_cast<Index>(inact.size()));
      for (std::size_t r = 0; r < inact.size(); ++r) gi[static_cast<Index>(r)] = g[inact[r]];
      const Vector di = -(h * gi);
      for (std::size_t r = 0; r < inact.size(); ++r) d[inact[r]] = di[static_cast<Index>(r)];
    }
    if (d.dot(g) >= 0.0) d = -g;  // fall back to projected gradient
    const auto ls = detail::backtrack(m, space, mu, f, d, delta, cfg);
    if (!ls.found) {
      out.exit = SubproblemExit::LineSearchFailure;
      break;
    }
    const Vector g_new = m.gradient(ls.mu);
    if (!inact.empty()) {
      Vector s(static_cast<Index>(inact.size())), y(static_cast<Index>(inact.size()));
      for (std::size_t r = 0; r < inact.size(); ++r) {
        s[static_cast<Index>(r)] = ls.mu[inact[r]] - mu[inact[r]];
        y[static_cast<Index>(r)] = g_new[inact[r]] - g[inact[r]];
      }
      const double ys = y.dot(s);
      if (ys > 1e-14) {
        const Vector hy = h * y;
        const double yhy = y.dot(hy);
        h += ((ys + yhy) / (ys * ys)) * (s * s.transpose());
        h -= (hy * s.transpose() + s * hy.transpose()) / ys;
      }
    }
    mu = ls.mu;
    f = ls.f;
    g = g_new;
    out.iterations = ell;
    out.trace.push_back({mu, f, foc_norm(mu, g, space)});
    if (ell == cfg.max_inner) out.exit = SubproblemExit::MaxInner;
  }
  out.mu = mu;
  return out;
}

enum class Variant { Standard, SemiNcd, Ncd, Qian };
enum class OptimizationStatus { Converged, MaxIterations, Stagnation };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::Standard: return "standard";
    case Variant::SemiNcd: return "semi-ncd";
    case Variant::Ncd: return "ncd";
    default: return "qian";
  }
}

inline const char* to_string(OptimizationStatus s) {
  switch (s) {
    case OptimizationStatus::Converged: return "converged";
    case OptimizationStatus::MaxIterations: return "max-iterations";
    default: return "stagnation";
  }
}

/// One row of the per-iteration audit trail (one row per sub-problem attempt;
/// k repeats on rejections).
struct IterationRecord {
  int k = 0;
  Vector mu;
  double j_model = std::numeric_limits<double>::quiet_NaN();  // current-model J at candidate
  double j_fom = std::numeric_limits<double>::quiet_NaN();
  double foc_fom = std::numeric_limits<double>::quiet_NaN();
  double delta_radius = 0.0;
  double rho = std::numeric_limits<double>::quiet_NaN();
  bool accepted = false;
  int basis_primal = 0;
  int basis_dual = 0;
  int inner_iterations = 0;
  long cumulative_fom_solves = 0;
  double wall_time_s = 0.0;
  double j_agc_old_model = std::numeric_limits<double>::quiet_NaN();
  double j_next_new_model = std::numeric_limits<double>::quiet_NaN();
  double delta_at_candidate = std::numeric_limits<double>::quiet_NaN();
  std::string subproblem_exit;
};

struct OptimizationResult {
  OptimizationStatus status = OptimizationStatus::MaxIterations;
  Vector mu_bar;
  double j_bar = std::numeric_limits<double>::quiet_NaN();
  double foc_final = std::numeric_limits<double>::quiet_NaN();
  int outer_iterations = 0;
  long fom_solves = 0;
  std::vector<IterationRecord> records;
};

namespace detail {

struct VariantOps {
  std::function<double(const Vector&)> objective;
  std::function<Vector(const Vector&)> gradient;
  std::function<double(const Vector&)> delta;
};

inline VariantOps make_variant_ops(Variant v, const ReducedModel& rom,
                                   const EstimatorBundle& est) {
  VariantOps ops;
  const bool ncd_objective = v == Variant::SemiNcd || v == Variant::Ncd;
  ops.objective = [&rom, ncd_objective](const Vector& mu) {
    return ncd_objective ? rom.objective_ncd(mu) : rom.objective_standard(mu);
  };
  if (v == Variant::Ncd) {
    ops.gradient = [&rom](const Vector& mu) { return rom.gradient_ncd_adjoint(mu); };
  } else {
    ops.gradient = [&rom](const Vector& mu) { return rom.gradient_inexact(mu); };
  }
  if (ncd_objective) {
    ops.delta = [&est](const Vector& mu) { return est.delta_j_ncd(mu); };
  } else {
    ops.delta = [&est](const Vector& mu) { return est.delta_j_standard(mu); };
  }
  return ops;
}

inline ObjectiveModel make_subproblem_model(const VariantOps& ops) {
  ObjectiveModel m;
  m.value = ops.objective;
  m.gradient = ops.gradient;
  // A trial point where the model objective loses positivity cannot satisfy
  // the relative TR condition; report it as infinitely far outside the
  // region so the line search backs off.
  m.tr_ratio = [&ops](const Vector& mu) {
    const double j = ops.objective(mu);
    if (!(j > 0.0)) return std::numeric_limits<double>::infinity();
    return ops.delta(mu) / j;
  };
  return m;
}

/// Model positivity is required wherever relative TR quantities are formed
/// from certified points; losing it there invalidates the model.
inline double require_positive_objective(double j) {
  if (!(j > 0.0)) {
    throw ModelInvalidError("reduced objective lost positivity at a certified point");
  }
  return j;
}

}  // namespace detail

/// Adaptive TR-RB outer loop over the selected variant and enrichment
/// strategy. The model is initialized from the FOM snapshots at mu0; each
/// accepted iterate enriches it at the new parameter and the FOM gradient
/// obtained from the fresh snapshots drives the outer stopping test.
inline OptimizationResult tr_rb_optimize(const FullOrderModel& fom, const Vector& mu0,
                                         const TrustRegionConfig& cfg, Variant variant,
                                         EnrichmentStrategy enrichment) {
  cfg.validate();
  fom.space().require(mu0);
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  OptimizationResult result;
  EnrichOutcome cur = ReducedModel::empty(fom, enrichment).enriched_at(mu0);
  result.fom_solves += cur.fom_solves;
  auto bundle = std::make_unique<EstimatorBundle>(fom, cur.model);
  Vector mu_cur = mu0;
  double j_h_cur = fom.objective_value(mu0, cur.u_h);
  Vector g_h_cur = fom.gradient_value(mu0, cur.u_h, cur.p_h);
  double delta = cfg.delta0;
  int k = 0;

  while (true) {
    const detail::VariantOps ops = detail::make_variant_ops(variant, cur.model, *bundle);
    const ObjectiveModel model = detail::make_subproblem_model(ops);
    const SubproblemResult sub = projected_bfgs(model, fom.space(), mu_cur, delta, cfg);

    IterationRecord rec;
    rec.k = k;
    rec.delta_radius = delta;
    rec.inner_iterations = sub.iterations;
    rec.basis_primal = cur.model.primal_basis().size();
    rec.basis_dual = cur.model.dual_basis().size();
    rec.subproblem_exit = sub.agc_failed ? "agc-failure" : to_string(sub.exit);

    if (sub.agc_failed) {
      delta *= cfg.beta1;
      rec.mu = mu_cur;
      rec.accepted = false;
      rec.cumulative_fom_solves = result.fom_solves;
      rec.wall_time_s = elapsed();
      result.records.push_back(rec);
      if (delta < cfg.tau_mac) {
        result.status = OptimizationStatus::Stagnation;
        break;
      }
      continue;
    }

    const Vector mu_cand = sub.mu;
    const double j_agc = detail::require_positive_objective(ops.objective(sub.mu_agc));
    const double j_cand = detail::require_positive_objective(ops.objective(mu_cand));
    const double d_cand = ops.delta(mu_cand);
    rec.mu = mu_cand;
    rec.j_model = j_cand;
    rec.delta_at_candidate = d_cand;
    rec.j_agc_old_model = j_agc;

    bool accepted = false;
    std::optional<EnrichOutcome> next;
    double rho = std::numeric_limits<double>::quiet_NaN();
    if (j_cand + d_cand < j_agc) {  // sufficient decrease certified
      next = cur.model.enriched_at(mu_cand);
      result.fom_solves += next->fom_solves;
      accepted = true;
    } else if (j_cand - d_cand > j_agc) {  // necessary condition violated
      accepted = false;
    } else {  // undecided: enrich, then compare with the new model
      next = cur.model.enriched_at(mu_cand);
      result.fom_solves += next->fom_solves;
      const bool ncd_objective = variant == Variant::SemiNcd || variant == Variant::Ncd;
      const double j_new_at_cand = ncd_objective ? next->model.objective_ncd(mu_cand)
                                                 : next->model.objective_standard(mu_cand);
      accepted = j_new_at_cand <= j_agc;
    }

    if (!accepted) {
      delta *= cfg.beta1;
      rec.accepted = false;
      if (next) {  // keep the enrichment obtained in the undecided branch
        cur = std::move(*next);
        bundle = std::make_unique<EstimatorBundle>(fom, cur.model);
        rec.j_fom = fom.objective_value(mu_cand, cur.u_h);
      }
      rec.cumulative_fom_solves = result.fom_solves;
      rec.wall_time_s = elapsed();
      result.records.push_back(rec);
      if (delta < cfg.tau_mac) {
        result.status = OptimizationStatus::Stagnation;
        break;
      }
      continue;
    }

    // accepted: install the new generation and bookkeep the radius
    const double j_r_center = ops.objective(mu_cur);
    const double denom = j_r_center - j_cand;
    const double j_h_next = fom.objective_value(mu_cand, next->u_h);
    rho = std::abs(denom) < 1e-14 ? 1.0 : (j_h_cur - j_h_next) / denom;
    cur = std::move(*next);
    bundle = std::make_unique<EstimatorBundle>(fom, cur.model);
    const Vector g_h_next = fom.gradient_value(mu_cand, cur.u_h, cur.p_h);

    rec.accepted = true;
    rec.rho = rho;
    rec.j_fom = j_h_next;
    rec.basis_primal = cur.model.primal_basis().size();
    rec.basis_dual = cur.model.dual_basis().size();
    {
      const detail::VariantOps new_ops = detail::make_variant_ops(variant, cur.model, *bundle);
      rec.j_next_new_model = new_ops.objective(mu_cand);
    }

    if (variant != Variant::Qian && rho >= cfg.eta_rho) {
      delta /= cfg.beta1;
    }
    mu_cur = mu_cand;
    j_h_cur = j_h_next;
    g_h_cur = g_h_next;
    ++k;

    double stop_value;
    if (variant == Variant::Qian) {
      const ReducedSolution s = cur.model.solve(mu_cur);
      stop_value = cur.model.gradient_inexact(mu_cur, s).norm() +
                   bundle->delta_grad_standard(mu_cur, s);
    } else {
      stop_value = foc_norm(mu_cur, g_h_cur, fom.space());
    }
    rec.foc_fom = foc_norm(mu_cur, g_h_cur, fom.space());
    rec.cumulative_fom_solves = result.fom_solves;
    rec.wall_time_s = elapsed();
    result.records.push_back(rec);

    if (stop_value <= cfg.tau_foc) {
      result.status = OptimizationStatus::Converged;
      break;
    }
    if (k >= cfg.max_outer) {
      result.status = OptimizationStatus::MaxIterations;
      break;
    }
  }

  result.mu_bar = mu_cur;
  result.j_bar = j_h_cur;
  result.foc_final = foc_norm(mu_cur, g_h_cur, fom.space());
  result.outer_iterations = k;
  return result;
}

/// Projected BFGS on the FOM objective/gradient, without a TR constraint.
/// Serves both as the comparison method and (at tau_foc = 1e-12) as the
/// reference-optimum generator.
inline OptimizationResult fom_projected_bfgs(const FullOrderModel& fom, const Vector& mu0,
                                             const TrustRegionConfig& cfg) {
  fom.space().require(mu0);
  const auto t_start = std::chrono::steady_clock::now();
  ObjectiveModel model;
  model.value = [&fom](const Vector& mu) { return fom.objective(mu); };
  model.gradient = [&fom](const Vector& mu) { return fom.gradient(mu); };
  TrustRegionConfig sub_cfg = cfg;
  sub_cfg.tau_sub = std::min(cfg.tau_sub, cfg.tau_foc);
  sub_cfg.tau_foc = sub_cfg.tau_sub;
  const SubproblemResult sub =
      projected_bfgs(model, fom.space(), mu0, std::numeric_limits<double>::infinity(), sub_cfg);

  OptimizationResult result;
  result.mu_bar = sub.mu;
  result.outer_iterations = sub.iterations;
  result.j_bar = fom.objective(sub.mu);
  result.foc_final = foc_norm(sub.mu, fom.gradient(sub.mu), fom.space());
  result.status = sub.exit == SubproblemExit::Converged ? OptimizationStatus::Converged
                                                        : OptimizationStatus::MaxIterations;
  const double total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  int i = 0;
  for (const auto& it : sub.trace) {
    IterationRecord rec;
    rec.k = i++;
    rec.mu = it.mu;
    rec.j_model = it.f;
    rec.j_fom = it.f;
    rec.foc_fom = it.foc;
    rec.accepted = true;
    rec.wall_time_s = total;
    result.records.push_back(rec);
  }
  return result;
}

}  // namespace trrb
