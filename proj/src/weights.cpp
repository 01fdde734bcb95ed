#include "dhm/weights.h"

#include "dhm/errors.h"
#include "dhm/fit.h"
#include "dhm/format.h"
#include "dhm/parallel.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <istream>
#include <ostream>
#include <string>

namespace dhm {

std::vector<double> volume_weights(const Triangulation& mesh) {
  const Geometry& geom = mesh.geometry();
  std::vector<double> area(mesh.num_triangles());
  parallel_for(mesh.num_triangles(), [&](std::size_t t) {
    const auto p = mesh.triangle_points(static_cast<int>(t));
    area[t] = geom.triangle_area(p[0], p[1], p[2]);
  });
  std::vector<double> mu(mesh.num_vertices(), 0.0);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    for (int v : mesh.triangles()[t].v) mu[static_cast<std::size_t>(v)] += area[t] / 3;
  return mu;
}

std::vector<double> cotangent_weights(const Triangulation& mesh) {
  const Geometry& geom = mesh.geometry();
  std::vector<double> omega(mesh.num_edges());
  parallel_for(mesh.num_edges(), [&](std::size_t e) {
    const MeshEdge& ed = mesh.edges()[e];
    double sum = 0;
    for (std::size_t s = 0; s < 2; ++s) {
      const int k = ed.opposite[s];
      const Point a = mesh.corner_point(ed.tri[s], k);
      const Point b = mesh.corner_point(ed.tri[s], (k + 1) % 3);
      const Point c = mesh.corner_point(ed.tri[s], (k + 2) % 3);
      const double angle = geom.angle_at(a, b, c);
      if (!(angle > 0) || !(angle < std::numbers::pi))
        throw DomainError("cotangent weights: degenerate angle opposite edge " + std::to_string(e));
      sum += geom.cot_at(a, b, c);
    }
    omega[e] = 0.5 * sum;
  });
  return omega;
}

BiweightedMesh make_biweighted(const Triangulation& mesh, const std::vector<double>& perturbation) {
  BiweightedMesh b{mesh, volume_weights(mesh), cotangent_weights(mesh), {}};
  if (!perturbation.empty()) {
    if (perturbation.size() != mesh.num_vertices()) throw DomainError("vertex weight perturbation has the wrong size");
    for (std::size_t v = 0; v < perturbation.size(); ++v) b.vertex_weights[v] *= 1 + perturbation[v];
  }
  for (double m : b.vertex_weights)
    if (!(m > 0) || !std::isfinite(m)) throw DomainError("vertex weights must be positive");
  if (mesh.has_classes()) b.vertex_classes = classify_vertices(mesh);
  return b;
}

std::array<double, 8> defect_probe_angles() {
  std::array<double, 8> a{0, std::numbers::pi / 2};
  for (std::size_t k = 0; k < 6; ++k) a[2 + k] = static_cast<double>(2 * k + 1) * std::numbers::pi / 12;
  return a;
}

LaplacianDefect laplacian_defect(const BiweightedMesh& b, int vertex) {
  const Triangulation& mesh = b.mesh;
  const Geometry& geom = mesh.geometry();
  const Point& x = mesh.vertices()[static_cast<std::size_t>(vertex)];
  const double mu = b.vertex_weights[static_cast<std::size_t>(vertex)];
  static const std::array<double, 8> angles = defect_probe_angles();
  Vec2 first = Vec2::Zero();
  std::array<double, 8> second{}, third{};
  for (const Neighbor& nb : mesh.neighbors()[static_cast<std::size_t>(vertex)]) {
    const double w = b.edge_weights[static_cast<std::size_t>(nb.edge)];
    const Vec2 c = geom.to_chart(x, geom.log_vec(x, mesh.neighbor_point(nb)));
    first += w * c;
    for (std::size_t i = 0; i < angles.size(); ++i) {
      const double l = std::cos(angles[i]) * c.x() + std::sin(angles[i]) * c.y();
      second[i] += w * l * l;
      third[i] += w * l * l * l;
    }
  }
  LaplacianDefect d;
  d.vertex = vertex;
  d.order1 = first.norm() / mu;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    d.order2 = std::max(d.order2, std::abs(second[i] / mu - 2) / 2);
    d.order3 = std::max(d.order3, std::abs(third[i] / mu));
  }
  return d;
}

std::vector<LaplacianDefect> laplacian_defects(const BiweightedMesh& b) {
  std::vector<LaplacianDefect> out(b.mesh.num_vertices());
  parallel_for(out.size(), [&](std::size_t v) { out[v] = laplacian_defect(b, static_cast<int>(v)); });
  return out;
}

DefectStudyResult defect_decay_study(const std::vector<BiweightedMesh>& sequence) {
  if (sequence.size() < 3) throw DomainError("defect study: at least three levels are required");
  for (const BiweightedMesh& b : sequence)
    if (b.vertex_classes.size() != b.mesh.num_vertices()) throw DomainError("defect study: vertex classes are missing");
  DefectStudyResult res;
  std::array<std::array<std::vector<double>, 3>, 3> r_of, d_of, m_of;
  for (const BiweightedMesh& b : sequence) {
    const double r = quality_stats(b.mesh, false).mesh_size;
    const std::vector<LaplacianDefect> defects = laplacian_defects(b);
    std::array<std::array<std::vector<double>, 3>, 3> values;
    for (std::size_t v = 0; v < defects.size(); ++v) {
      auto& cls = values[static_cast<std::size_t>(b.vertex_classes[v])];
      cls[0].push_back(defects[v].order1);
      cls[1].push_back(defects[v].order2);
      cls[2].push_back(defects[v].order3);
    }
    for (std::size_t c = 0; c < 3; ++c) {
      if (values[c][0].empty()) continue;
      for (std::size_t o = 0; o < 3; ++o) {
        std::vector<double>& vals = values[c][o];
        const double worst = *std::max_element(vals.begin(), vals.end());
        std::nth_element(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(vals.size() / 2), vals.end());
        const double median = vals[vals.size() / 2];
        res.rows.push_back({b.mesh.level(), r, static_cast<VertexClass>(c), static_cast<int>(o + 1), worst, median});
        r_of[c][o].push_back(r);
        d_of[c][o].push_back(worst);
        m_of[c][o].push_back(median);
      }
    }
  }
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t o = 0; o < 3; ++o) {
      res.slope[c][o] = fit_slope(r_of[c][o], d_of[c][o]);
      res.median_slope[c][o] = fit_slope(r_of[c][o], m_of[c][o]);
    }
  return res;
}

void write_defect_csv(std::ostream& out, const DefectStudyResult& result) {
  out << "level,r,class,order,max_defect,slope\n";
  for (const DefectRow& row : result.rows) {
    out << row.level << "," << format_real(row.r) << "," << static_cast<int>(row.vertex_class) << "," << row.order << ","
        << format_real(row.max_defect) << "," << format_real(result.slope_of(row.vertex_class, row.order)) << "\n";
  }
}

std::vector<double> weight_sum_bound(const BiweightedMesh& b) {
  std::vector<double> out(b.mesh.num_vertices(), 0.0);
  for (std::size_t v = 0; v < out.size(); ++v) {
    for (const Neighbor& nb : b.mesh.neighbors()[v]) out[v] += b.edge_weights[static_cast<std::size_t>(nb.edge)];
    out[v] /= b.vertex_weights[v];
  }
  return out;
}

// === File sections

void write_weights(std::ostream& out, const BiweightedMesh& b) {
  const Triangulation& m = b.mesh;
  out << "vertex_weights " << b.vertex_weights.size() << "\n";
  for (double w : b.vertex_weights) out << format_real(w) << "\n";
  out << "edge_weights " << b.edge_weights.size() << "\n";
  for (std::size_t e = 0; e < b.edge_weights.size(); ++e) {
    const MeshEdge& ed = m.edges()[e];
    const std::string w = format_real(b.edge_weights[e]);
    out << ed.u << " " << ed.v << " " << w << " " << w << "\n";
  }
}

void write_biweighted(std::ostream& out, const BiweightedMesh& b) {
  write_mesh(out, b.mesh);
  write_weights(out, b);
}

BiweightedMesh read_biweighted(std::istream& in) {
  BiweightedMesh b = make_biweighted(read_mesh(in));
  const Triangulation& m = b.mesh;
  std::string line;
  bool have_vertex = false;
  bool have_edge = false;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      const std::string t = trim(line);
      if (!t.empty() && t[0] != '#') return split_whitespace(t);
    }
    throw DomainError("mesh file: unexpected end of input in a weight section");
  };
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::vector<std::string> f = split_whitespace(t);
    if (f.size() != 2) throw DomainError("mesh file: expected a weight section header");
    const long long n = parse_integer(f[1]);
    if (f[0] == "vertex_weights" && !have_vertex) {
      if (n != static_cast<long long>(m.num_vertices())) throw DomainError("mesh file: vertex weight count differs from the vertex count");
      for (long long i = 0; i < n; ++i) {
        const auto g = next_line();
        if (g.size() != 1) throw DomainError("mesh file: vertex weight lines need 1 entry");
        const double w = parse_real(g[0]);
        if (!(w > 0) || !std::isfinite(w)) throw DomainError("mesh file: vertex weights must be positive");
        b.vertex_weights[static_cast<std::size_t>(i)] = w;
      }
      have_vertex = true;
    } else if (f[0] == "edge_weights" && !have_edge) {
      if (n != static_cast<long long>(m.num_edges())) throw DomainError("mesh file: edge weight count differs from the edge count");
      for (long long i = 0; i < n; ++i) {
        const auto g = next_line();
        if (g.size() != 4) throw DomainError("mesh file: edge weight lines need 4 entries");
        const MeshEdge& ed = m.edges()[static_cast<std::size_t>(i)];
        if (parse_integer(g[0]) != ed.u || parse_integer(g[1]) != ed.v)
          throw DomainError("mesh file: edge weight " + std::to_string(i) + " names the wrong endpoints");
        const double w = parse_real(g[2]);
        if (!std::isfinite(w) || parse_real(g[3]) != w) throw DomainError("mesh file: edge weight " + std::to_string(i) + " is not symmetric");
        b.edge_weights[static_cast<std::size_t>(i)] = w;
      }
      have_edge = true;
    } else {
      throw DomainError("mesh file: unexpected section '" + f[0] + "'");
    }
  }
  return b;
}

} // namespace dhm
