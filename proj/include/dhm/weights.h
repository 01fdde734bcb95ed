#pragma once

#include "dhm/mesh.h"

#include <array>
#include <iosfwd>
#include <vector>

namespace dhm {

// One third of the area of the triangles around each vertex.
std::vector<double> volume_weights(const Triangulation& mesh);
// Half the sum of the cotangents of the two angles opposite each edge. Negative
// values are kept. Throws DomainError on an angle of 0 or pi.
std::vector<double> cotangent_weights(const Triangulation& mesh);

struct BiweightedMesh {
  Triangulation mesh;
  std::vector<double> vertex_weights; // mu
  std::vector<double> edge_weights;   // omega
  std::vector<VertexClass> vertex_classes;
};

// Volume and cotangent weights. A non-empty perturbation scales mu_x by (1 + perturbation[x]).
BiweightedMesh make_biweighted(const Triangulation& mesh, const std::vector<double>& perturbation = {});

struct LaplacianDefect {
  int vertex = 0;
  double order1 = 0;
  double order2 = 0;
  double order3 = 0;
};

// Unit covectors used for the second- and third-order conditions: the two
// chart axes and six more at angles (2k + 1) pi / 12.
std::array<double, 8> defect_probe_angles();

LaplacianDefect laplacian_defect(const BiweightedMesh& b, int vertex);
std::vector<LaplacianDefect> laplacian_defects(const BiweightedMesh& b);

struct DefectRow {
  int level = 0;
  double r = 0;
  VertexClass vertex_class = VertexClass::V0;
  int order = 1;
  double max_defect = 0;
  double median_defect = 0;
};

struct DefectStudyResult {
  std::vector<DefectRow> rows;
  // slope[class][order - 1] of log(max_defect) against log(r); NaN when undetermined.
  std::array<std::array<double, 3>, 3> slope{};
  // Same fit for the per-class medians.
  std::array<std::array<double, 3>, 3> median_slope{};
  double slope_of(VertexClass c, int order) const {
    return slope[static_cast<std::size_t>(c)][static_cast<std::size_t>(order - 1)];
  }
  double median_slope_of(VertexClass c, int order) const {
    return median_slope[static_cast<std::size_t>(c)][static_cast<std::size_t>(order - 1)];
  }
};

// Per-level, per-class maxima of the three defects and their log-log slopes
// against the mesh size. Needs at least three levels with vertex classes.
DefectStudyResult defect_decay_study(const std::vector<BiweightedMesh>& sequence);
// CSV with columns level,r,class,order,max_defect,slope.
void write_defect_csv(std::ostream& out, const DefectStudyResult& result);

// (1 / mu_x) * sum of omega over the edges at x, for every vertex.
std::vector<double> weight_sum_bound(const BiweightedMesh& b);

// Optional mesh file sections: "vertex_weights N" with one mu per line and
// "edge_weights E" with lines "u v omega_uv omega_vu" in edge order.
void write_weights(std::ostream& out, const BiweightedMesh& b);
void write_biweighted(std::ostream& out, const BiweightedMesh& b);
// Missing sections are filled with volume and cotangent weights.
BiweightedMesh read_biweighted(std::istream& in);

} // namespace dhm
