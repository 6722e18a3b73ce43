// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "trrb/types.hpp"

namespace trrb {

struct Rectangle {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
};

/// Local edge numbering of a quad cell with CCW vertices
/// v0=(x,y), v1=(x+h,y), v2=(x+h,y+h), v3=(x,y+h):
/// edge 0 = bottom (v0,v1), 1 = right (v1,v2), 2 = top (v2,v3), 3 = left (v3,v0).
struct BoundaryFacet {
  int cell = -1;
  int local_edge = -1;
  int v0 = -1, v1 = -1;  // endpoint vertex ids, CCW along the cell
  int tag = 0;
};

/// Structured Q1 quad mesh, optionally restricted to a subset of the cells of
/// its generating grid (used for non-rectangular domains such as the fin).
/// Immutable after construction.
struct Mesh {
  Rectangle domain;  // bounding rectangle of the generating grid
  int nx = 0, ny = 0;
  std::vector<std::array<double, 2>> vertices;
  std::vector<std::array<int, 4>> cells;       // CCW vertex ids
  std::vector<int> cell_grid_index;            // cell -> i + nx*j in the generating grid
  std::vector<BoundaryFacet> boundary_facets;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }
  int num_boundary_facets() const { return static_cast<int>(boundary_facets.size()); }
  double hx() const { return domain.width() / nx; }
  double hy() const { return domain.height() / ny; }

  std::array<double, 2> cell_center(int c) const {
    const int g = cell_grid_index[c];
    const int i = g % nx, j = g / nx;
    return {domain.x0 + (i + 0.5) * hx(), domain.y0 + (j + 0.5) * hy()};
  }

  std::array<double, 2> facet_midpoint(const BoundaryFacet& f) const {
    const auto& a = vertices[f.v0];
    const auto& b = vertices[f.v1];
    return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
  }

  double facet_length(const BoundaryFacet& f) const {
    const auto& a = vertices[f.v0];
    const auto& b = vertices[f.v1];
    return std::hypot(b[0] - a[0], b[1] - a[1]);
  }
};

/// Builds the full nx-by-ny grid on `domain`. Boundary facets get tag 0.
inline Mesh build_mesh(const Rectangle& domain, int nx, int ny) {
  if (nx < 1 || ny < 1) {
    throw std::invalid_argument("build_mesh: nx and ny must be >= 1");
  }
  if (!(domain.x1 > domain.x0) || !(domain.y1 > domain.y0)) {
    throw std::invalid_argument("build_mesh: degenerate domain rectangle");
  }
  Mesh m;
  m.domain = domain;
  m.nx = nx;
  m.ny = ny;
  const double hx = domain.width() / nx;
  const double hy = domain.height() / ny;
  m.vertices.resize(static_cast<std::size_t>((nx + 1) * (ny + 1)));
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      m.vertices[static_cast<std::size_t>(i + (nx + 1) * j)] = {domain.x0 + i * hx,
                                                                domain.y0 + j * hy};
    }
  }
  auto vid = [nx](int i, int j) { return i + (nx + 1) * j; };
  m.cells.resize(static_cast<std::size_t>(nx * ny));
  m.cell_grid_index.resize(m.cells.size());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int c = i + nx * j;
      m.cells[static_cast<std::size_t>(c)] = {vid(i, j), vid(i + 1, j), vid(i + 1, j + 1),
                                              vid(i, j + 1)};
      m.cell_grid_index[static_cast<std::size_t>(c)] = c;
    }
  }
  for (int i = 0; i < nx; ++i) {  // bottom, top
    const int cb = i;
    m.boundary_facets.push_back({cb, 0, m.cells[cb][0], m.cells[cb][1], 0});
    const int ct = i + nx * (ny - 1);
    m.boundary_facets.push_back({ct, 2, m.cells[ct][2], m.cells[ct][3], 0});
  }
  for (int j = 0; j < ny; ++j) {  // left, right
    const int cl = nx * j;
    m.boundary_facets.push_back({cl, 3, m.cells[cl][3], m.cells[cl][0], 0});
    const int cr = (nx - 1) + nx * j;
    m.boundary_facets.push_back({cr, 1, m.cells[cr][1], m.cells[cr][2], 0});
  }
  return m;
}

/// Restricts `base` to the cells with keep[c] != 0. Vertices are compacted and
/// boundary facets recomputed: every kept-cell edge without a kept neighbour
/// becomes a boundary facet (tag 0).
inline Mesh build_submesh(const Mesh& base, const std::vector<char>& keep) {
  if (static_cast<int>(keep.size()) != base.num_cells()) {
    throw std::invalid_argument("build_submesh: keep mask size mismatch");
  }
  Mesh m;
  m.domain = base.domain;
  m.nx = base.nx;
  m.ny = base.ny;
  std::vector<int> vertex_map(base.vertices.size(), -1);
  std::vector<int> cell_map(base.cells.size(), -1);
  for (int c = 0; c < base.num_cells(); ++c) {
    if (!keep[static_cast<std::size_t>(c)]) continue;
    cell_map[static_cast<std::size_t>(c)] = m.num_cells();
    std::array<int, 4> vs{};
    for (int k = 0; k < 4; ++k) {
      const int v = base.cells[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
      if (vertex_map[static_cast<std::size_t>(v)] < 0) {
        vertex_map[static_cast<std::size_t>(v)] = m.num_vertices();
        m.vertices.push_back(base.vertices[static_cast<std::size_t>(v)]);
      }
      vs[static_cast<std::size_t>(k)] = vertex_map[static_cast<std::size_t>(v)];
    }
    m.cells.push_back(vs);
    m.cell_grid_index.push_back(base.cell_grid_index[static_cast<std::size_t>(c)]);
  }
  if (m.cells.empty()) {
    throw std::invalid_argument("build_submesh: empty cell selection");
  }
  // neighbour in the generating grid, per local edge
  auto grid_neighbour = [&](int gidx, int edge) -> int {
    const int i = gidx % base.nx, j = gidx / base.nx;
    switch (edge) {
      case 0: return j > 0 ? gidx - base.nx : -1;
      case 1: return i + 1 < base.nx ? gidx + 1 : -1;
      case 2: return j + 1 < base.ny ? gidx + base.nx : -1;
      default: return i > 0 ? gidx - 1 : -1;
    }
  };
  std::vector<char> kept_by_grid(static_cast<std::size_t>(base.nx * base.ny), 0);
  for (int c = 0; c < base.num_cells(); ++c) {
    if (keep[static_cast<std::size_t>(c)]) {
      kept_by_grid[static_cast<std::size_t>(base.cell_grid_index[static_cast<std::size_t>(c)])] = 1;
    }
  }
  static constexpr int kEdgeVerts[4][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
  for (int c = 0; c < m.num_cells(); ++c) {
    const int g = m.cell_grid_index[static_cast<std::size_t>(c)];
    for (int e = 0; e < 4; ++e) {
      const int ng = grid_neighbour(g, e);
      if (ng >= 0 && kept_by_grid[static_cast<std::size_t>(ng)]) continue;
      m.boundary_facets.push_back({c, e, m.cells[static_cast<std::size_t>(c)][kEdgeVerts[e][0]],
                                   m.cells[static_cast<std::size_t>(c)][kEdgeVerts[e][1]], 0});
    }
  }
  return m;
}

/// Assigns `tag` to every boundary facet whose midpoint satisfies `pred`.
inline void retag_boundary(Mesh& mesh,
                           const std::function<bool(double, double)>& pred,
                           int tag) {
  for (auto& f : mesh.boundary_facets) {
    const auto mid = mesh.facet_midpoint(f);
    if (pred(mid[0], mid[1])) f.tag = tag;
  }
}

}  // namespace trrb
