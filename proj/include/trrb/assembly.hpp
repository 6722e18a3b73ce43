// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "trrb/grid.hpp"
#include "trrb/types.hpp"

namespace trrb {

namespace detail {

struct GaussPoint {
  double xi, eta, w;
};

/// 2x2 tensor Gauss rule on the reference cell [0,1]^2; exact for all Q1
/// products with cell-wise constant data.
inline std::array<GaussPoint, 4> gauss22() {
  const double a = 0.5 - 0.5 / std::sqrt(3.0);
  const double b = 0.5 + 0.5 / std::sqrt(3.0);
  return {GaussPoint{a, a, 0.25}, GaussPoint{b, a, 0.25}, GaussPoint{a, b, 0.25},
          GaussPoint{b, b, 0.25}};
}

inline std::array<double, 4> shape(double xi, double eta) {
  return {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
}

inline std::array<double, 4> shape_dxi(double /*xi*/, double eta) {
  return {-(1 - eta), (1 - eta), eta, -eta};
}

inline std::array<double, 4> shape_deta(double xi, double /*eta*/) {
  return {-(1 - xi), -xi, xi, (1 - xi)};
}

/// Reference element matrices for a cell of size hx x hy, integrated with the
/// 2x2 Gauss rule. All cells of a structured mesh share them.
struct ElementMatrices {
  Matrix diffusion{4, 4};  // unit coefficient
  Matrix mass{4, 4};       // unit coefficient
  std::array<double, 4> load{};  // unit density
};

inline ElementMatrices reference_element(double hx, double hy) {
  ElementMatrices em;
  em.diffusion.setZero();
  em.mass.setZero();
  em.load.fill(0.0);
  for (const auto& gp : gauss22()) {
    const auto n = shape(gp.xi, gp.eta);
    const auto dxi = shape_dxi(gp.xi, gp.eta);
    const auto deta = shape_deta(gp.xi, gp.eta);
    const double jac = hx * hy;
    for (int i = 0; i < 4; ++i) {
      em.load[static_cast<std::size_t>(i)] += gp.w * n[static_cast<std::size_t>(i)] * jac;
      for (int j = 0; j < 4; ++j) {
        const double gx = dxi[static_cast<std::size_t>(i)] * dxi[static_cast<std::size_t>(j)] /
                          (hx * hx);
        const double gy = deta[static_cast<std::size_t>(i)] * deta[static_cast<std::size_t>(j)] /
                          (hy * hy);
        em.diffusion(i, j) += gp.w * (gx + gy) * jac;
        em.mass(i, j) += gp.w * n[static_cast<std::size_t>(i)] * n[static_cast<std::size_t>(j)] *
                         jac;
      }
    }
  }
  return em;
}

inline void check_cell_field(const Mesh& mesh, std::span<const double> values,
                             const char* who) {
  if (static_cast<int>(values.size()) != mesh.num_cells()) {
    throw std::invalid_argument(std::string(who) + ": cell field size mismatch");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite value");
  }
}

inline void check_facet_field(const Mesh& mesh, std::span<const double> values,
                              const char* who) {
  if (static_cast<int>(values.size()) != mesh.num_boundary_facets()) {
    throw std::invalid_argument(std::string(who) + ": facet field size mismatch");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite value");
  }
}

inline bool has_tag(const Mesh& mesh, int tag) {
  for (const auto& f : mesh.boundary_facets) {
    if (f.tag == tag) return true;
  }
  return false;
}

}  // namespace detail

/// Stiffness matrix of (v, w) -> sum_cells coeff_c * int_c grad v . grad w.
inline SparseMatrix assemble_diffusion(const Mesh& mesh, std::span<const double> coeff) {
  detail::check_cell_field(mesh, coeff, "assemble_diffusion");
  instrument::hd_event();
  const auto em = detail::reference_element(mesh.hx(), mesh.hy());
  std::vector<Triplet> trips;
  trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * 16);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double k = coeff[static_cast<std::size_t>(c)];
    if (k == 0.0) continue;
    const auto& vs = mesh.cells[static_cast<std::size_t>(c)];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        trips.emplace_back(vs[static_cast<std::size_t>(i)], vs[static_cast<std::size_t>(j)],
                           k * em.diffusion(i, j));
      }
    }
  }
  SparseMatrix a(mesh.num_vertices(), mesh.num_vertices());
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

/// Mass matrix of (v, w) -> sum_cells indicator_c * int_c v w.
inline SparseMatrix assemble_domain_mass(const Mesh& mesh, std::span<const double> indicator) {
  detail::check_cell_field(mesh, indicator, "assemble_domain_mass");
  instrument::hd_event();
  const auto em = detail::reference_element(mesh.hx(), mesh.hy());
  std::vector<Triplet> trips;
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double w = indicator[static_cast<std::size_t>(c)];
    if (w == 0.0) continue;
    const auto& vs = mesh.cells[static_cast<std::size_t>(c)];
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) {
        trips.emplace_back(vs[static_cast<std::size_t>(i)], vs[static_cast<std::size_t>(j)],
                           w * em.mass(i, j));
      }
    }
  }
  SparseMatrix a(mesh.num_vertices(), mesh.num_vertices());
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

/// Boundary mass of (v, w) -> sum_{facets with tag} coeff_f * int_f v w.
/// coeff carries one value per boundary facet; only tagged facets contribute.
inline SparseMatrix assemble_boundary_mass(const Mesh& mesh, std::span<const double> coeff,
                                           int tag) {
  detail::check_facet_field(mesh, coeff, "assemble_boundary_mass");
  if (!detail::has_tag(mesh, tag)) {
    throw std::invalid_argument("assemble_boundary_mass: unknown boundary tag");
  }
  instrument::hd_event();
  std::vector<Triplet> trips;
  for (int f = 0; f < mesh.num_boundary_facets(); ++f) {
    const auto& facet = mesh.boundary_facets[static_cast<std::size_t>(f)];
    if (facet.tag != tag) continue;
    const double c = coeff[static_cast<std::size_t>(f)];
    if (c == 0.0) continue;
    const double h = mesh.facet_length(facet);
    trips.emplace_back(facet.v0, facet.v0, c * h / 3.0);
    trips.emplace_back(facet.v1, facet.v1, c * h / 3.0);
    trips.emplace_back(facet.v0, facet.v1, c * h / 6.0);
    trips.emplace_back(facet.v1, facet.v0, c * h / 6.0);
  }
  SparseMatrix a(mesh.num_vertices(), mesh.num_vertices());
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

/// Load vector of v -> sum_cells density_c * int_c v.
inline Vector assemble_source(const Mesh& mesh, std::span<const double> density) {
  detail::check_cell_field(mesh, density, "assemble_source");
  instrument::hd_event();
  const auto em = detail::reference_element(mesh.hx(), mesh.hy());
  Vector b = Vector::Zero(mesh.num_vertices());
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const double f = density[static_cast<std::size_t>(c)];
    if (f == 0.0) continue;
    const auto& vs = mesh.cells[static_cast<std::size_t>(c)];
    for (int i = 0; i < 4; ++i) {
      b[vs[static_cast<std::size_t>(i)]] += f * em.load[static_cast<std::size_t>(i)];
    }
  }
  return b;
}

/// Boundary load of v -> sum_{facets with tag} g_f * int_f v.
inline Vector assemble_boundary_source(const Mesh& mesh, std::span<const double> values,
                                       int tag) {
  detail::check_facet_field(mesh, values, "assemble_boundary_source");
  if (!detail::has_tag(mesh, tag)) {
    throw std::invalid_argument("assemble_boundary_source: unknown boundary tag");
  }
  instrument::hd_event();
  Vector b = Vector::Zero(mesh.num_vertices());
  for (int f = 0; f < mesh.num_boundary_facets(); ++f) {
    const auto& facet = mesh.boundary_facets[static_cast<std::size_t>(f)];
    if (facet.tag != tag) continue;
    const double g = values[static_cast<std::size_t>(f)];
    if (g == 0.0) continue;
    const double h = mesh.facet_length(facet);
    b[facet.v0] += g * h / 2.0;
    b[facet.v1] += g * h / 2.0;
  }
  return b;
}

}  // namespace trrb
