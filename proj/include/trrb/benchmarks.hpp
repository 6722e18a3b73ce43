// Copyright the trrb authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "trrb/assembly.hpp"
#include "trrb/fom.hpp"
#include "trrb/grid.hpp"

namespace trrb {

/// Axis-aligned box in domain coordinates; degenerate boxes (zero width or
/// height) describe boundary segments.
struct GeometryBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool contains_point(double x, double y, double tol = 1e-9) const {
    return x >= x0 - tol && x <= x1 + tol && y >= y0 - tol && y <= y1 + tol;
  }
  bool is_segment(double tol = 1e-12) const {
    return std::abs(x1 - x0) < tol || std::abs(y1 - y0) < tol;
  }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

/// Named cell-set description: subdomain name -> list of boxes. The textual
/// form is one box per line: `<name> <x0> <y0> <x1> <y1>`, with `#` comments.
using GeometrySpec = std::map<std::string, std::vector<GeometryBox>>;

inline GeometrySpec parse_geometry(std::istream& in) {
  GeometrySpec spec;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string name;
    if (!(ls >> name)) continue;
    GeometryBox box;
    if (!(ls >> box.x0 >> box.y0 >> box.x1 >> box.y1) || box.x1 < box.x0 || box.y1 < box.y0) {
      throw std::invalid_argument("parse_geometry: bad box on line " + std::to_string(lineno));
    }
    spec[name].push_back(box);
  }
  if (spec.empty()) throw std::invalid_argument("parse_geometry: empty geometry");
  return spec;
}

inline GeometrySpec parse_geometry_string(const std::string& text) {
  std::istringstream in(text);
  return parse_geometry(in);
}

inline GeometrySpec load_geometry(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_geometry: cannot open " + path);
  return parse_geometry(in);
}

/// Built-in copy of data/building_geometry.txt.
inline const char* building_geometry_text() {
  return R"(# Building floor plan on [0,2]x[0,1]; all coordinates on a 0.1 lattice.
# box format: <name> <x0> <y0> <x1> <y1>; degenerate boxes are boundary segments.
# Interior walls (diffusion parameters), three groups:
#   group 1 = walls 1,2,3,8; group 2 = walls 4,5,6,7; group 3 = wall 9.
wall1 0.6 0.0 0.7 0.3
wall1 0.6 0.4 0.7 0.5
wall2 1.3 0.0 1.4 0.3
wall2 1.3 0.4 1.4 0.5
wall3 0.9 0.6 1.0 0.8
wall3 0.9 0.9 1.0 1.0
wall8 1.7 0.6 1.8 0.9
wall4 0.0 0.5 0.4 0.6
wall5 0.5 0.5 0.9 0.6
wall6 1.0 0.5 1.4 0.6
wall7 1.5 0.5 2.0 0.6
wall9 0.2 0.6 0.3 0.9
# Interior door openings (same diffusion as air; listed for the floor plan):
door1 0.4 0.5 0.5 0.6
door2 0.9 0.5 1.0 0.6
door3 1.4 0.5 1.5 0.6
door4 0.6 0.3 0.7 0.4
door5 1.3 0.3 1.4 0.4
door6 0.9 0.8 1.0 0.9
door7 1.7 0.9 1.8 1.0
# Windows (boundary segments, Robin):
window1 0.1 0.0 0.3 0.0
window2 0.4 0.0 0.6 0.0
window3 0.8 0.0 1.0 0.0
window4 1.1 0.0 1.3 0.0
window5 1.5 0.0 1.7 0.0
window6 1.8 0.0 2.0 0.0
window7 2.0 0.7 2.0 0.9
window8 1.2 1.0 1.4 1.0
window9 0.3 1.0 0.4 1.0
window10 0.4 1.0 0.5 1.0
window11 0.6 1.0 0.7 1.0
window12 0.7 1.0 0.8 1.0
# Outside doors (boundary segments, Robin):
door_out8 1.5 1.0 1.6 1.0
door_out9 0.0 0.2 0.0 0.3
# Heaters (source cells; the i-th heater sits inside the i-th window):
heater1 0.1 0.0 0.3 0.1
heater2 0.4 0.0 0.6 0.1
heater3 0.8 0.0 1.0 0.1
heater4 1.1 0.0 1.3 0.1
heater5 1.5 0.0 1.7 0.1
heater6 1.8 0.0 2.0 0.1
heater7 1.9 0.7 2.0 0.9
heater8 1.2 0.9 1.4 1.0
heater9 0.3 0.9 0.4 1.0
heater10 0.4 0.9 0.5 1.0
heater11 0.6 0.9 0.7 1.0
heater12 0.7 0.9 0.8 1.0
# Domain of interest (the top-left room, between walls 9 and 3):
domain_of_interest 0.3 0.6 0.9 1.0
)";
}

/// Executable benchmark: the assembled FOM plus the metadata tests and the
/// CLI need.
struct Benchmark {
  std::string name;
  std::shared_ptr<FullOrderModel> fom;
  Mesh mesh;
  Vector mu_desired;   // target parameter (fin: random mu_d; building: 0)
  double t_desired = 0.0;  // fin: T^d = q(u_{mu_d})
  Vector q_vec;            // fin: root mean-temperature functional
  GeometrySpec geometry;   // building: floor plan
};

namespace detail {

inline std::vector<double> cells_in_boxes(const Mesh& mesh,
                                          const std::vector<GeometryBox>& boxes) {
  std::vector<double> field(static_cast<std::size_t>(mesh.num_cells()), 0.0);
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto ctr = mesh.cell_center(c);
    for (const auto& b : boxes) {
      if (!b.is_segment() && b.contains_point(ctr[0], ctr[1])) {
        field[static_cast<std::size_t>(c)] = 1.0;
        break;
      }
    }
  }
  return field;
}

inline bool facet_on_segment(const Mesh& mesh, const BoundaryFacet& f, const GeometryBox& seg) {
  const auto mid = mesh.facet_midpoint(f);
  return seg.is_segment() && seg.contains_point(mid[0], mid[1]);
}

}  // namespace detail

/// Model problem 2: stationary heat distribution in a building on
/// [0,2]x[0,1]. Ten parameters: three wall-diffusion groups in [0.025,0.1]
/// and seven heater groups in [0,100]. Objective: weighted L2 misfit towards
/// u_d = 18 on the domain of interest plus a Tikhonov term, offset by +1.
inline Benchmark build_building(int nx, int ny, const GeometrySpec* geometry = nullptr) {
  if (nx % 20 != 0 || ny % 10 != 0 || nx <= 0 || ny <= 0) {
    throw std::invalid_argument(
        "build_building: resolution must be a positive multiple of 20 x 10");
  }
  Benchmark bench;
  bench.name = "building";
  bench.geometry = geometry != nullptr ? *geometry
                                       : parse_geometry_string(building_geometry_text());
  const GeometrySpec& geo = bench.geometry;
  bench.mesh = build_mesh(Rectangle{0.0, 2.0, 0.0, 1.0}, nx, ny);
  const Mesh& mesh = bench.mesh;

  const std::vector<std::vector<std::string>> wall_groups = {
      {"wall1", "wall2", "wall3", "wall8"}, {"wall4", "wall5", "wall6", "wall7"}, {"wall9"}};
  const std::vector<std::vector<std::string>> heater_groups = {
      {"heater1", "heater2"}, {"heater3", "heater4"}, {"heater5"}, {"heater6"},
      {"heater7"},            {"heater8"},            {"heater9", "heater10", "heater11",
                                                       "heater12"}};

  auto group_field = [&](const std::vector<std::string>& names) {
    std::vector<GeometryBox> boxes;
    for (const auto& n : names) {
      const auto it = geo.find(n);
      if (it == geo.end()) throw std::invalid_argument("build_building: missing set " + n);
      boxes.insert(boxes.end(), it->second.begin(), it->second.end());
    }
    return detail::cells_in_boxes(mesh, boxes);
  };

  std::vector<std::vector<double>> wall_fields, heater_fields;
  std::vector<double> any_wall(static_cast<std::size_t>(mesh.num_cells()), 0.0);
  for (const auto& g : wall_groups) {
    wall_fields.push_back(group_field(g));
    for (std::size_t c = 0; c < any_wall.size(); ++c) {
      if (wall_fields.back()[c] > 0.0 && any_wall[c] > 0.0) {
        throw std::invalid_argument("build_building: overlapping wall groups");
      }
      any_wall[c] += wall_fields.back()[c];
    }
  }
  for (const auto& g : heater_groups) heater_fields.push_back(group_field(g));

  // air = everything that is not a wall; inside doors carry the air value
  std::vector<double> air(static_cast<std::size_t>(mesh.num_cells()), 0.0);
  for (std::size_t c = 0; c < air.size(); ++c) air[c] = any_wall[c] > 0.0 ? 0.0 : 0.5;

  // Robin coefficient per boundary facet: windows 0.025, outside doors 0.01,
  // outside wall 0.001
  std::vector<GeometryBox> window_segs, door_segs;
  for (const auto& [name, boxes] : geo) {
    if (name.rfind("window", 0) == 0) {
      window_segs.insert(window_segs.end(), boxes.begin(), boxes.end());
    }
    if (name.rfind("door_out", 0) == 0) {
      door_segs.insert(door_segs.end(), boxes.begin(), boxes.end());
    }
  }
  std::vector<double> robin(static_cast<std::size_t>(mesh.num_boundary_facets()), 0.001);
  for (int f = 0; f < mesh.num_boundary_facets(); ++f) {
    const auto& facet = mesh.boundary_facets[static_cast<std::size_t>(f)];
    for (const auto& s : window_segs) {
      if (detail::facet_on_segment(mesh, facet, s)) {
        robin[static_cast<std::size_t>(f)] = 0.025;
      }
    }
    for (const auto& s : door_segs) {
      if (detail::facet_on_segment(mesh, facet, s)) {
        robin[static_cast<std::size_t>(f)] = 0.01;
      }
    }
  }

  const double sigma_d = 100.0;
  const double u_out = 5.0;
  const double u_d = 18.0;
  const auto d_it = geo.find("domain_of_interest");
  if (d_it == geo.end()) {
    throw std::invalid_argument("build_building: missing domain_of_interest");
  }
  const std::vector<double> d_field = detail::cells_in_boxes(mesh, d_it->second);
  double d_area = 0.0;
  for (const auto& b : d_it->second) d_area += b.area();

  AffineOperator a;
  a.add(assemble_diffusion(mesh, air), ThetaFunction::constant(1.0), true);
  for (int g = 0; g < 3; ++g) {
    a.add(assemble_diffusion(mesh, wall_fields[static_cast<std::size_t>(g)]),
          ThetaFunction::coordinate(g), true);
  }
  a.add(assemble_boundary_mass(mesh, robin, 0), ThetaFunction::constant(1.0), true);

  AffineFunctional l;
  for (int g = 0; g < 7; ++g) {
    l.add(assemble_source(mesh, heater_fields[static_cast<std::size_t>(g)]),
          ThetaFunction::coordinate(3 + g));
  }
  std::vector<double> robin_source(robin.size());
  for (std::size_t f = 0; f < robin.size(); ++f) robin_source[f] = robin[f] * u_out;
  l.add(assemble_boundary_source(mesh, robin_source, 0), ThetaFunction::constant(1.0));

  AffineFunctional j;
  j.add(Vector(-sigma_d * u_d * assemble_source(mesh, d_field)), ThetaFunction::constant(1.0));

  AffineOperator k;
  k.add(SparseMatrix(0.5 * sigma_d * assemble_domain_mass(mesh, d_field)),
        ThetaFunction::constant(1.0), true);

  Vector sigma(10);
  const double sigma_w = 0.05, sigma_h = 0.001;
  sigma << 10 * sigma_w, 5 * sigma_w, sigma_w, 2 * sigma_h, 2 * sigma_h, sigma_h, sigma_h,
      sigma_h, sigma_h, 4 * sigma_h;
  const double offset = 0.5 * sigma_d * u_d * u_d * d_area + 1.0;
  ScalarObjective theta = ScalarObjective::weighted_tikhonov(sigma, Vector::Zero(10), offset);

  Vector lower(10), upper(10), mu_check(10);
  lower << 0.025, 0.025, 0.025, 0, 0, 0, 0, 0, 0, 0;
  upper << 0.1, 0.1, 0.1, 100, 100, 100, 100, 100, 100, 100;
  mu_check << 0.05, 0.05, 0.05, 10, 10, 10, 10, 10, 10, 10;

  bench.mu_desired = Vector::Zero(10);
  bench.fom = std::make_shared<FullOrderModel>(ParameterSpace(lower, upper), std::move(a),
                                               std::move(l), std::move(j), std::move(k),
                                               std::move(theta), mu_check);
  return bench;
}

/// Model problem 1: six-parameter elliptic thermal fin. The domain is the
/// rectilinear fin (central post of width 1 and height 4 plus four
/// subfin pairs of thickness 0.25 and length 2.5 per side), carved out of a
/// bounding grid. Parameters (k0..k4, Bi), unit Neumann inflow at the root,
/// Robin losses elsewhere. Objective: mean root temperature misfit towards a
/// seeded target parameter plus Tikhonov, offset by T_d^2 + 1.
inline Benchmark build_thermal_fin(int cells_per_unit, unsigned seed = 0) {
  if (cells_per_unit <= 0 || cells_per_unit % 4 != 0) {
    throw std::invalid_argument(
        "build_thermal_fin: cells-per-unit must be a positive multiple of 4");
  }
  const int r = cells_per_unit;
  Benchmark bench;
  bench.name = "fin";
  const Mesh grid = build_mesh(Rectangle{-3.0, 3.0, 0.0, 4.0}, 6 * r, 4 * r);

  auto in_post = [](double x, double) { return x > -0.5 && x < 0.5; };
  auto in_subfin = [](double, double y) {
    for (int i = 1; i <= 4; ++i) {
      if (y > i - 0.25 && y < i) return true;
    }
    return false;
  };
  std::vector<char> keep(static_cast<std::size_t>(grid.num_cells()), 0);
  for (int c = 0; c < grid.num_cells(); ++c) {
    const auto ctr = grid.cell_center(c);
    if (in_post(ctr[0], ctr[1]) || in_subfin(ctr[0], ctr[1])) {
      keep[static_cast<std::size_t>(c)] = 1;
    }
  }
  bench.mesh = build_submesh(grid, keep);
  Mesh& mesh = bench.mesh;
  constexpr int kRobinTag = 0, kNeumannTag = 1;
  retag_boundary(mesh, [](double, double y) { return std::abs(y) < 1e-12; }, kNeumannTag);

  // diffusion subdomains: post gets k0, the side strips get k1..k4
  std::vector<std::vector<double>> fields(
      5, std::vector<double>(static_cast<std::size_t>(mesh.num_cells()), 0.0));
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto ctr = mesh.cell_center(c);
    if (in_post(ctr[0], ctr[1])) {
      fields[0][static_cast<std::size_t>(c)] = 1.0;
      continue;
    }
    for (int i = 1; i <= 4; ++i) {
      if (ctr[1] > i - 0.25 && ctr[1] < i) {
        fields[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = 1.0;
        break;
      }
    }
  }

  AffineOperator a;
  for (int i = 0; i < 5; ++i) {
    a.add(assemble_diffusion(mesh, fields[static_cast<std::size_t>(i)]),
          ThetaFunction::coordinate(i), true);
  }
  std::vector<double> ones(static_cast<std::size_t>(mesh.num_boundary_facets()), 1.0);
  a.add(assemble_boundary_mass(mesh, ones, kRobinTag), ThetaFunction::coordinate(5), true);

  AffineFunctional l;  // g_N = -1 at the root, u_out = 0, f = 0
  std::vector<double> minus_ones(static_cast<std::size_t>(mesh.num_boundary_facets()), -1.0);
  l.add(assemble_boundary_source(mesh, minus_ones, kNeumannTag), ThetaFunction::constant(1.0));

  bench.q_vec = assemble_boundary_source(mesh, ones, kNeumannTag);

  Vector lower(6), upper(6), mu_check(6);
  lower << 0.1, 0.1, 0.1, 0.1, 0.1, 0.01;
  upper << 10, 10, 10, 10, 10, 1;
  mu_check << 1, 1, 1, 1, 1, 0.1;
  ParameterSpace space(lower, upper);

  // seeded target parameter: k1..k4 random strictly inside, k0 and Bi pinned
  // to their lower bounds
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Vector mu_d(6);
  mu_d[0] = 0.1;
  for (int i = 1; i <= 4; ++i) mu_d[i] = 0.1 + u01(rng) * (10.0 - 0.1);
  mu_d[5] = 0.01;
  bench.mu_desired = mu_d;

  // T^d = q(u at mu_d) from a direct solve
  SparseMatrix a_mud = a.components[0] * mu_d[0];
  for (int xi = 1; xi < a.size(); ++xi) {
    a_mud += a.components[static_cast<std::size_t>(xi)] * mu_d[xi];
  }
  const CholeskyFactorization fact(a_mud);
  const Vector u_mud = fact.solve(l.components[0]);
  const double t_d = bench.q_vec.dot(u_mud);
  bench.t_desired = t_d;

  AffineFunctional j;
  j.add(Vector(-t_d * bench.q_vec), ThetaFunction::constant(1.0));

  AffineOperator k;
  {
    std::vector<Triplet> trips;
    for (Index p = 0; p < bench.q_vec.size(); ++p) {
      if (bench.q_vec[p] == 0.0) continue;
      for (Index q = 0; q < bench.q_vec.size(); ++q) {
        if (bench.q_vec[q] == 0.0) continue;
        trips.emplace_back(static_cast<int>(p), static_cast<int>(q),
                           0.5 * bench.q_vec[p] * bench.q_vec[q]);
      }
    }
    SparseMatrix kq(mesh.num_vertices(), mesh.num_vertices());
    kq.setFromTriplets(trips.begin(), trips.end());
    k.add(std::move(kq), ThetaFunction::constant(1.0), true);
  }

  const double norm_mud2 = mu_d.squaredNorm();
  ScalarObjective theta = ScalarObjective::weighted_tikhonov(
      Vector::Constant(6, 2.0 / norm_mud2), mu_d, t_d * t_d + 1.0);

  bench.fom = std::make_shared<FullOrderModel>(std::move(space), std::move(a), std::move(l),
                                               std::move(j), std::move(k), std::move(theta),
                                               mu_check);
  return bench;
}

struct PositivityReport {
  double min_value = std::numeric_limits<double>::infinity();
  bool all_positive = false;
  int samples = 0;
};

/// Verifies J_h(mu) > 0 on random samples (objective positivity assumption).
inline PositivityReport lower_bound_objective_check(const FullOrderModel& fom, int samples,
                                                    unsigned seed = 0) {
  PositivityReport report;
  report.samples = samples;
  std::mt19937_64 rng(seed);
  for (int s = 0; s < samples; ++s) {
    const Vector mu = fom.space().sample(rng);
    report.min_value = std::min(report.min_value, fom.objective(mu));
  }
  report.all_positive = report.min_value > 0.0;
  return report;
}

}  // namespace trrb
