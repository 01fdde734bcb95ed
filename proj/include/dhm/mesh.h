#pragma once

#include "dhm/deck_group.h"
#include "dhm/fuchsian.h"
#include "dhm/geometry.h"

#include <array>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dhm {

// Flat torus R^2 / <(a, 0), (shear, b)> triangulated by an n x n grid of
// parallelograms, each split along its lower-left to upper-right diagonal.
struct TorusSpec {
  double a = 1.0;
  double b = 1.0;
  double shear = 0.0;
  int n = 2;
  bool operator==(const TorusSpec&) const = default;
};

struct SurfaceSpec {
  GeometryKind kind = GeometryKind::Euclidean;
  TorusSpec torus;      // Euclidean surfaces
  FenchelNielsen fn;    // hyperbolic surfaces
  bool operator==(const SurfaceSpec&) const = default;
  std::string to_string() const;
};

// Per-corner deck annotations index into the triangulation's element table;
// the lifted corner k of a triangle is element(deck[k]) applied to vertex v[k].
struct MeshTriangle {
  std::array<int, 3> v{};
  std::array<int, 3> deck{};
  std::array<int, 3> edge{};      // edge of the half-edge from corner k to k+1
  std::array<bool, 3> forward{};  // half-edge runs from edge.u to edge.v
};

// Lifted edge from the representative of u to element(rel) applied to the representative of v.
struct MeshEdge {
  int u = 0;
  int v = 0;
  int rel = 0;
  std::array<int, 2> tri{-1, -1};
  std::array<int, 2> opposite{-1, -1}; // corner of tri[i] opposite the edge
  bool on_base = false;                // contained in an edge of the level-0 mesh
};

// Lifted neighbor position: element(lift) applied to the representative of vertex.
struct Neighbor {
  int vertex = 0;
  int edge = 0;
  int lift = 0;
};

enum class VertexClass { V0 = 0, V1 = 1, V2 = 2 };

class Triangulation {
public:
  Triangulation() = default;
  // Corners are (vertex, word) pairs; per-half-edge base flags mark sub-edges of
  // level-0 edges. Throws DomainError unless every edge bounds exactly two
  // positively oriented, non-degenerate triangles.
  Triangulation(SurfaceSpec surface, DeckGroup deck, std::vector<Point> vertices,
                const std::vector<std::array<int, 3>>& tri_vertices, const std::vector<std::array<Word, 3>>& tri_words,
                int level = 0, std::vector<VertexClass> classes = {},
                const std::vector<std::array<bool, 3>>& base_half_edges = {});

  const SurfaceSpec& surface() const { return surface_; }
  const Geometry& geometry() const { return geom_; }
  GeometryKind kind() const { return geom_.kind(); }
  const DeckGroup& deck() const { return deck_; }
  int level() const { return level_; }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<MeshTriangle>& triangles() const { return triangles_; }
  const std::vector<MeshEdge>& edges() const { return edges_; }
  const std::vector<std::vector<Neighbor>>& neighbors() const { return neighbors_; }
  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  int euler_characteristic() const;

  // Deck elements referenced by corners, edges and neighbors. Element 0 is the identity.
  const Isometry& element(int i) const { return elements_[static_cast<std::size_t>(i)]; }
  const Word& element_word(int i) const { return element_words_[static_cast<std::size_t>(i)]; }
  std::size_t num_elements() const { return elements_.size(); }

  Point corner_point(int tri, int k) const;
  std::array<Point, 3> triangle_points(int tri) const;
  // Endpoints of the lifted edge: representative of u and its partner.
  std::pair<Point, Point> edge_points(int e) const;
  Point neighbor_point(const Neighbor& nb) const;

  bool has_classes() const { return !classes_.empty(); }
  const std::vector<VertexClass>& classes() const { return classes_; }

  // Same combinatorics with new vertex positions.
  Triangulation with_vertices(std::vector<Point> vertices) const;

private:
  void build_topology(const std::vector<std::array<int, 3>>& tri_vertices, const std::vector<std::array<Word, 3>>& tri_words,
                      const std::vector<std::array<bool, 3>>& base_half_edges);
  int intern(const Isometry& g, const Word& w);

  SurfaceSpec surface_;
  Geometry geom_{GeometryKind::Euclidean};
  DeckGroup deck_;
  int level_ = 0;
  std::vector<Point> vertices_;
  std::vector<MeshTriangle> triangles_;
  std::vector<MeshEdge> edges_;
  std::vector<std::vector<Neighbor>> neighbors_;
  std::vector<Isometry> elements_;
  std::vector<Word> element_words_;
  std::vector<VertexClass> classes_;
};

struct MeshStats {
  int level = 0;
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t triangles = 0;
  double mesh_size = 0;      // longest edge
  double min_edge = 0;
  double min_angle = 0;
  double max_angle = 0;
  double min_thickness = 0;  // min over triangles of inradius / diameter
  double min_edge_ratio = 0; // min over triangles of shortest / longest edge
  int combinatorial_diameter = 0;
  int surjectivity_radius = 0;
  bool is_delaunay_angle = false; // every edge has opposite angles summing to at most pi
};

struct BaseMeshOptions {
  int smoothing_iterations = 200;
  int optimization_sweeps = 300;
  // Bound on the angles of the mesh and of its first two refinements.
  double target_max_angle = 1.5707963267948966 - 0.05;
};

Triangulation build_torus_mesh(const TorusSpec& spec);
// Cone of the Dirichlet polygon to its center, smoothed equivariantly by moving
// each vertex to the barycenter of its lifted neighbors and then by
// optimize_angles; subdivided once and adjusted again if the result or its
// first two refinements miss the angle target.
Triangulation build_genus2_mesh(const FuchsianGroup& group, const FundamentalDomain& domain,
                                const BaseMeshOptions& opts = {});
// Equivariant Laplacian smoothing; stops early if a triangle would flip.
Triangulation smooth_mesh(const Triangulation& mesh, int iterations);
// Equivariant local search moving one vertex at a time to lower the largest
// Euclidean comparison angle of its incident triangles.
Triangulation optimize_angles(const Triangulation& mesh, int sweeps);
// Same mesh as a level-0 base: all vertices V^(2), all edges base edges.
Triangulation as_base_mesh(const Triangulation& mesh);

Triangulation midpoint_refine(const Triangulation& mesh);
std::vector<Triangulation> refine_sequence(const Triangulation& base, int levels);

MeshStats quality_stats(const Triangulation& mesh, bool combinatorial = true);
std::vector<VertexClass> classify_vertices(const Triangulation& mesh);

struct AcutenessLevel {
  int level = 0;
  double min_angle = 0;
  double max_angle = 0;
};
struct AcutenessReport {
  std::vector<AcutenessLevel> levels;
  double eta = 0;        // pi/2 - max over levels of max_angle
  bool acute = false;    // eta > 0
  bool delaunay = false; // every level has the Delaunay angle property
};
AcutenessReport acuteness_report(const std::vector<Triangulation>& sequence);

// Interior angles of a triangle at its corners.
std::array<double, 3> triangle_angles(const Triangulation& mesh, int tri);

// Header lines geometry, level, surface and an optional "coordinates disk|hyperboloid"
// (default disk), then the vertex and triangle tables. Hyperbolic meshes are
// written with the first two hyperboloid coordinates, which round-trip exactly.
void write_mesh(std::ostream& out, const Triangulation& mesh);
Triangulation read_mesh(std::istream& in);

} // namespace dhm
