#include "dhm/mesh.h"

#include "dhm/errors.h"
#include "dhm/format.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace dhm {

namespace {

constexpr double kPi = std::numbers::pi;

struct HalfEdgeKey {
  int a, b, rel;
  bool operator==(const HalfEdgeKey&) const = default;
};

struct HalfEdgeHash {
  std::size_t operator()(const HalfEdgeKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.a) * 0x9E3779B97F4A7C15ULL;
    h ^= static_cast<std::size_t>(k.b) + 0x7F4A7C159E3779B9ULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::size_t>(k.rel) + 0x94D049BB133111EBULL + (h << 6) + (h >> 2);
    return h;
  }
};

long double relative_gap(const Isometry& g, const Isometry& h) {
  return g.distance_to(h) / std::max<long double>(1, g.matrix().cwiseAbs().maxCoeff());
}

// Distance from p to the geodesic line through a and b.
double line_distance(const Geometry& geom, const Point& p, const Point& a, const Point& b) {
  if (!geom.hyperbolic()) {
    const Vec3 d = b.coords - a.coords, w = p.coords - a.coords;
    return std::abs(d.x() * w.y() - d.y() * w.x()) / std::hypot(d.x(), d.y());
  }
  Vec3 n = a.coords.cross(b.coords);
  n.z() = -n.z();
  const double nn = geom.inner(n, n);
  if (!(nn > 0)) return 0;
  return std::asinh(std::abs(geom.inner(p.coords, n)) / std::sqrt(nn));
}

// Largest angle of the Euclidean triangle with the same side lengths; midpoint
// refinement drives the angles of small triangles towards it.
double comparison_max_angle(const Geometry& geom, const Point& a, const Point& b, const Point& c) {
  std::array<double, 3> l = {geom.distance(b, c), geom.distance(c, a), geom.distance(a, b)};
  std::sort(l.begin(), l.end());
  return std::acos(std::clamp((l[0] * l[0] + l[1] * l[1] - l[2] * l[2]) / (2 * l[0] * l[1]), -1.0, 1.0));
}

} // namespace

std::string SurfaceSpec::to_string() const {
  if (kind == GeometryKind::Hyperbolic) return "genus2 " + fn.to_string();
  return "torus " + format_real(torus.a) + " " + format_real(torus.b) + " " + format_real(torus.shear) + " " +
         std::to_string(torus.n);
}

// === Triangulation

Triangulation::Triangulation(SurfaceSpec surface, DeckGroup deck, std::vector<Point> vertices,
                             const std::vector<std::array<int, 3>>& tri_vertices,
                             const std::vector<std::array<Word, 3>>& tri_words, int level,
                             std::vector<VertexClass> classes, const std::vector<std::array<bool, 3>>& base_half_edges)
    : surface_(std::move(surface)), geom_(deck.kind()), deck_(std::move(deck)), level_(level),
      vertices_(std::move(vertices)), classes_(std::move(classes)) {
  if (surface_.kind != deck_.kind()) throw DomainError("triangulation: surface and deck geometries differ");
  if (tri_vertices.size() != tri_words.size()) throw DomainError("triangulation: corner tables differ in size");
  if (!base_half_edges.empty() && base_half_edges.size() != tri_vertices.size())
    throw DomainError("triangulation: base edge table has the wrong size");
  if (!classes_.empty() && classes_.size() != vertices_.size())
    throw DomainError("triangulation: vertex class table has the wrong size");
  for (Point& p : vertices_) {
    if (!geom_.is_valid_point(p, 1e-8)) throw DomainError("triangulation: invalid vertex coordinates");
    p = geom_.normalize(p);
  }
  build_topology(tri_vertices, tri_words, base_half_edges);
}

int Triangulation::intern(const Isometry& g, const Word& w) {
  for (std::size_t i = 0; i < elements_.size(); ++i)
    if (relative_gap(elements_[i], g) < 1e-9) return static_cast<int>(i);
  elements_.push_back(g);
  element_words_.push_back(w);
  return static_cast<int>(elements_.size() - 1);
}

void Triangulation::build_topology(const std::vector<std::array<int, 3>>& tri_vertices,
                                   const std::vector<std::array<Word, 3>>& tri_words,
                                   const std::vector<std::array<bool, 3>>& base_half_edges) {
  elements_.clear();
  element_words_.clear();
  intern(Isometry::identity(kind()), Word());

  std::unordered_map<std::string, int> by_word;
  auto word_index = [&](const Word& w) {
    const std::string key = w.to_string();
    auto it = by_word.find(key);
    if (it != by_word.end()) return it->second;
    const int idx = intern(deck_.evaluate(w), w);
    by_word.emplace(key, idx);
    return idx;
  };
  std::map<std::pair<int, int>, int> rel_cache;
  std::vector<int> inverse_of;
  auto inverse_index = [&](int i) {
    if (static_cast<std::size_t>(i) < inverse_of.size() && inverse_of[static_cast<std::size_t>(i)] >= 0)
      return inverse_of[static_cast<std::size_t>(i)];
    const int j = intern(elements_[static_cast<std::size_t>(i)].inverse(), element_words_[static_cast<std::size_t>(i)].inverse());
    inverse_of.resize(elements_.size(), -1);
    inverse_of[static_cast<std::size_t>(i)] = j;
    inverse_of[static_cast<std::size_t>(j)] = i;
    return j;
  };
  auto relative = [&](int i, int j) {
    auto it = rel_cache.find({i, j});
    if (it != rel_cache.end()) return it->second;
    const Isometry g = elements_[static_cast<std::size_t>(i)].inverse() * elements_[static_cast<std::size_t>(j)];
    const Word w = element_words_[static_cast<std::size_t>(i)].inverse() * element_words_[static_cast<std::size_t>(j)];
    const int idx = intern(g, w);
    rel_cache.emplace(std::make_pair(i, j), idx);
    return idx;
  };

  const int nv = static_cast<int>(vertices_.size());
  triangles_.assign(tri_vertices.size(), MeshTriangle{});
  for (std::size_t t = 0; t < tri_vertices.size(); ++t) {
    for (int k = 0; k < 3; ++k) {
      const int v = tri_vertices[t][static_cast<std::size_t>(k)];
      if (v < 0 || v >= nv) throw DomainError("triangulation: vertex index out of range");
      triangles_[t].v[static_cast<std::size_t>(k)] = v;
      triangles_[t].deck[static_cast<std::size_t>(k)] = word_index(tri_words[t][static_cast<std::size_t>(k)]);
    }
  }

  edges_.clear();
  std::unordered_map<HalfEdgeKey, int, HalfEdgeHash> edge_of;
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    MeshTriangle& tri = triangles_[t];
    const auto pts = triangle_points(static_cast<int>(t));
    if (!(geom_.orientation(pts[0], pts[1], pts[2]) > 0) || !(geom_.triangle_area(pts[0], pts[1], pts[2]) > 0))
      throw DomainError("triangulation: triangle " + std::to_string(t) + " is degenerate or clockwise");
    for (int k = 0; k < 3; ++k) {
      const std::size_t k0 = static_cast<std::size_t>(k), k1 = static_cast<std::size_t>((k + 1) % 3);
      const int a = tri.v[k0], b = tri.v[k1];
      const int rel = relative(tri.deck[k0], tri.deck[k1]);
      const int inv = inverse_index(rel);
      bool forward = a < b || (a == b && rel <= inv);
      HalfEdgeKey key = forward ? HalfEdgeKey{a, b, rel} : HalfEdgeKey{b, a, inv};
      if (a == b && rel == inv) throw DomainError("triangulation: degenerate loop edge");
      auto [it, inserted] = edge_of.emplace(key, static_cast<int>(edges_.size()));
      if (inserted) {
        MeshEdge e;
        e.u = key.a;
        e.v = key.b;
        e.rel = key.rel;
        edges_.push_back(e);
      }
      MeshEdge& e = edges_[static_cast<std::size_t>(it->second)];
      const std::size_t side = forward ? 0 : 1;
      if (e.tri[side] >= 0) throw DomainError("triangulation: edge used twice with the same orientation");
      e.tri[side] = static_cast<int>(t);
      e.opposite[side] = (k + 2) % 3;
      if (!base_half_edges.empty() && base_half_edges[t][k0]) e.on_base = true;
      tri.edge[k0] = it->second;
      tri.forward[k0] = forward;
    }
  }
  for (const MeshEdge& e : edges_)
    if (e.tri[0] < 0 || e.tri[1] < 0) throw DomainError("triangulation: surface is not closed (boundary edge)");
  if (base_half_edges.empty())
    for (MeshEdge& e : edges_) e.on_base = level_ == 0;

  neighbors_.assign(vertices_.size(), {});
  for (std::size_t i = 0; i < edges_.size(); ++i) {
    const MeshEdge& e = edges_[i];
    neighbors_[static_cast<std::size_t>(e.u)].push_back({e.v, static_cast<int>(i), e.rel});
    neighbors_[static_cast<std::size_t>(e.v)].push_back({e.u, static_cast<int>(i), inverse_index(e.rel)});
  }
  for (std::size_t v = 0; v < neighbors_.size(); ++v)
    if (neighbors_[v].empty()) throw DomainError("triangulation: isolated vertex " + std::to_string(v));
}

int Triangulation::euler_characteristic() const {
  return static_cast<int>(vertices_.size()) - static_cast<int>(edges_.size()) + static_cast<int>(triangles_.size());
}

Point Triangulation::corner_point(int tri, int k) const {
  const MeshTriangle& t = triangles_[static_cast<std::size_t>(tri)];
  const int g = t.deck[static_cast<std::size_t>(k)];
  const Point& p = vertices_[static_cast<std::size_t>(t.v[static_cast<std::size_t>(k)])];
  return g == 0 ? p : geom_.apply_isometry(elements_[static_cast<std::size_t>(g)], p);
}

std::array<Point, 3> Triangulation::triangle_points(int tri) const {
  return {corner_point(tri, 0), corner_point(tri, 1), corner_point(tri, 2)};
}

std::pair<Point, Point> Triangulation::edge_points(int e) const {
  const MeshEdge& ed = edges_[static_cast<std::size_t>(e)];
  return {vertices_[static_cast<std::size_t>(ed.u)], neighbor_point(Neighbor{ed.v, e, ed.rel})};
}

Point Triangulation::neighbor_point(const Neighbor& nb) const {
  const Point& p = vertices_[static_cast<std::size_t>(nb.vertex)];
  return nb.lift == 0 ? p : geom_.apply_isometry(elements_[static_cast<std::size_t>(nb.lift)], p);
}

Triangulation Triangulation::with_vertices(std::vector<Point> vertices) const {
  if (vertices.size() != vertices_.size()) throw DomainError("with_vertices: vertex count mismatch");
  Triangulation t = *this;
  for (Point& p : vertices) p = geom_.normalize(p);
  t.vertices_ = std::move(vertices);
  return t;
}

// === Builders

Triangulation build_torus_mesh(const TorusSpec& spec) {
  if (!(spec.a > 0) || !(spec.b > 0) || !std::isfinite(spec.shear) || spec.n < 1)
    throw DomainError("torus: side lengths must be positive and the grid size at least 1");
  const int n = spec.n;
  SurfaceSpec surface;
  surface.kind = GeometryKind::Euclidean;
  surface.torus = spec;
  std::vector<Point> verts;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      verts.push_back(Point{Vec3((i * spec.a + j * spec.shear) / n, j * spec.b / n, 0)});
  std::vector<std::array<int, 3>> tv;
  std::vector<std::array<Word, 3>> tw;
  auto corner = [&](int i, int j) {
    std::vector<int> letters;
    if (i == n) letters.push_back(1);
    if (j == n) letters.push_back(2);
    return std::make_pair((i % n) + n * (j % n), Word::from_letters(letters));
  };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const auto c00 = corner(i, j), c10 = corner(i + 1, j), c11 = corner(i + 1, j + 1), c01 = corner(i, j + 1);
      tv.push_back({c00.first, c10.first, c11.first});
      tw.push_back({c00.second, c10.second, c11.second});
      tv.push_back({c00.first, c11.first, c01.first});
      tw.push_back({c00.second, c11.second, c01.second});
    }
  std::vector<VertexClass> classes(verts.size(), VertexClass::V2);
  return Triangulation(surface, torus_lattice(spec.a, spec.b, spec.shear), std::move(verts), tv, tw, 0, std::move(classes));
}

Triangulation smooth_mesh(const Triangulation& mesh, int iterations) {
  const Geometry& geom = mesh.geometry();
  Triangulation cur = mesh;
  for (int it = 0; it < iterations; ++it) {
    std::vector<Point> next(cur.num_vertices());
    double moved = 0;
    for (std::size_t v = 0; v < cur.num_vertices(); ++v) {
      std::vector<Point> pts;
      for (const Neighbor& nb : cur.neighbors()[v]) pts.push_back(cur.neighbor_point(nb));
      const std::vector<double> w(pts.size(), 1.0);
      next[v] = geom.weighted_barycenter(pts, w);
      moved = std::max(moved, geom.distance(next[v], cur.vertices()[v]));
    }
    Triangulation cand = cur.with_vertices(std::move(next));
    bool ok = true;
    for (std::size_t t = 0; t < cand.num_triangles() && ok; ++t) {
      const auto p = cand.triangle_points(static_cast<int>(t));
      ok = geom.orientation(p[0], p[1], p[2]) > 0 && geom.triangle_area(p[0], p[1], p[2]) > 0;
    }
    if (!ok) break;
    cur = std::move(cand);
    if (moved < 1e-13) break;
  }
  return cur;
}

Triangulation as_base_mesh(const Triangulation& mesh) {
  std::vector<std::array<int, 3>> tv;
  std::vector<std::array<Word, 3>> tw;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const MeshTriangle& tri = mesh.triangles()[t];
    tv.push_back(tri.v);
    tw.push_back({mesh.element_word(tri.deck[0]), mesh.element_word(tri.deck[1]), mesh.element_word(tri.deck[2])});
  }
  return Triangulation(mesh.surface(), mesh.deck(), mesh.vertices(), tv, tw, 0,
                       std::vector<VertexClass>(mesh.num_vertices(), VertexClass::V2));
}

Triangulation optimize_angles(const Triangulation& mesh, int sweeps) {
  const Geometry& geom = mesh.geometry();
  std::vector<std::vector<int>> incident(mesh.num_vertices());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    for (int v : mesh.triangles()[t].v) {
      auto& inc = incident[static_cast<std::size_t>(v)];
      if (inc.empty() || inc.back() != static_cast<int>(t)) inc.push_back(static_cast<int>(t));
    }
  std::vector<Point> verts = mesh.vertices();
  auto corner = [&](const MeshTriangle& t, int k) {
    const Point& p = verts[static_cast<std::size_t>(t.v[static_cast<std::size_t>(k)])];
    const int g = t.deck[static_cast<std::size_t>(k)];
    return g == 0 ? p : geom.apply_isometry(mesh.element(g), p);
  };
  // Largest angle around v, or +inf if a triangle degenerates.
  auto local_cost = [&](std::size_t v) {
    double worst = 0;
    for (int t : incident[v]) {
      const MeshTriangle& tri = mesh.triangles()[static_cast<std::size_t>(t)];
      const Point a = corner(tri, 0), b = corner(tri, 1), c = corner(tri, 2);
      if (!(geom.orientation(a, b, c) > 0) || !(geom.triangle_area(a, b, c) > 0))
        return std::numeric_limits<double>::infinity();
      worst = std::max(worst, comparison_max_angle(geom, a, b, c));
    }
    return worst;
  };
  double step = 0.25 * quality_stats(mesh, false).min_edge;
  for (int sweep = 0; sweep < sweeps && step > 1e-9; ++sweep) {
    bool improved = false;
    for (std::size_t v = 0; v < verts.size(); ++v) {
      const Point start = verts[v];
      double best = local_cost(v);
      Point best_p = start;
      const auto fr = geom.frame(start);
      for (int k = 0; k < 8; ++k) {
        const double th = k * kPi / 4;
        verts[v] = geom.exp_map(start, step * (std::cos(th) * fr[0] + std::sin(th) * fr[1]));
        const double c = local_cost(v);
        if (c < best - 1e-12) {
          best = c;
          best_p = verts[v];
        }
      }
      verts[v] = best_p;
      if (best_p.coords != start.coords) improved = true;
    }
    if (!improved) step *= 0.5;
  }
  return mesh.with_vertices(std::move(verts));
}

namespace {

// Largest angle over the mesh and its first two refinements, together with the
// comparison angles of the last one.
double lookahead_max_angle(const Triangulation& mesh) {
  double m = 0;
  Triangulation cur = mesh;
  for (int level = 0; level < 3; ++level) {
    if (level > 0) cur = midpoint_refine(cur);
    for (std::size_t t = 0; t < cur.num_triangles(); ++t) {
      const auto a = triangle_angles(cur, static_cast<int>(t));
      m = std::max({m, a[0], a[1], a[2]});
      if (level == 2) {
        const auto p = cur.triangle_points(static_cast<int>(t));
        m = std::max(m, comparison_max_angle(cur.geometry(), p[0], p[1], p[2]));
      }
    }
  }
  return m;
}

} // namespace

Triangulation build_genus2_mesh(const FuchsianGroup& group, const FundamentalDomain& domain, const BaseMeshOptions& opts) {
  const Geometry geom(GeometryKind::Hyperbolic);
  const std::size_t n = domain.boundary.size();
  if (n < 3 || domain.side_pairings.size() != n) throw DomainError("genus-2 mesh: invalid fundamental domain");

  // Express every polygon corner as (word applied to) a representative of its vertex cycle.
  std::vector<int> cycle(n, -1);
  std::vector<Word> word(n);
  std::vector<std::size_t> reps;
  for (std::size_t start = 0; start < n; ++start) {
    if (cycle[start] >= 0) continue;
    const int c = static_cast<int>(reps.size());
    reps.push_back(start);
    cycle[start] = c;
    word[start] = Word();
    std::deque<std::size_t> queue{start};
    while (!queue.empty()) {
      const std::size_t p = queue.front();
      queue.pop_front();
      for (const SidePairing& sp : domain.side_pairings) {
        const std::size_t i = static_cast<std::size_t>(sp.side), j = static_cast<std::size_t>(sp.partner);
        // sp.map sends corner j to corner i+1 and corner j+1 to corner i.
        const std::pair<std::size_t, std::size_t> links[2] = {{j, (i + 1) % n}, {(j + 1) % n, i}};
        for (const auto& [from, to] : links) {
          if (from != p || cycle[to] >= 0) continue;
          cycle[to] = c;
          word[to] = sp.word * word[p];
          queue.push_back(to);
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Point img = geom.apply_isometry(group.evaluate(word[i]), domain.boundary[reps[static_cast<std::size_t>(cycle[i])]].start);
    if (geom.distance(img, domain.boundary[i].start) > 1e-7) throw NumericError("genus-2 mesh: inconsistent vertex cycles");
  }

  SurfaceSpec surface;
  surface.kind = GeometryKind::Hyperbolic;
  surface.fn = group.fenchel_nielsen();
  std::vector<Point> verts{domain.center};
  for (std::size_t r : reps) verts.push_back(domain.boundary[r].start);
  std::vector<std::array<int, 3>> tv;
  std::vector<std::array<Word, 3>> tw;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    tv.push_back({0, 1 + cycle[i], 1 + cycle[j]});
    tw.push_back({Word(), word[i], word[j]});
  }
  Triangulation mesh(surface, group.deck(), std::move(verts), tv, tw, 0,
                     std::vector<VertexClass>(1 + reps.size(), VertexClass::V2));
  mesh = optimize_angles(smooth_mesh(mesh, opts.smoothing_iterations), opts.optimization_sweeps);
  if (lookahead_max_angle(mesh) <= opts.target_max_angle) return mesh;
  mesh = as_base_mesh(midpoint_refine(mesh));
  return optimize_angles(smooth_mesh(mesh, opts.smoothing_iterations), opts.optimization_sweeps);
}

// === Refinement

Triangulation midpoint_refine(const Triangulation& mesh) {
  const Geometry& geom = mesh.geometry();
  const int nv = static_cast<int>(mesh.num_vertices());
  std::vector<Point> verts = mesh.vertices();
  verts.reserve(mesh.num_vertices() + mesh.num_edges());
  for (std::size_t e = 0; e < mesh.num_edges(); ++e) {
    const auto [a, b] = mesh.edge_points(static_cast<int>(e));
    verts.push_back(geom.geodesic_midpoint(a, b));
  }
  std::vector<VertexClass> classes;
  if (mesh.has_classes()) {
    classes = mesh.classes();
    for (const MeshEdge& e : mesh.edges()) classes.push_back(e.on_base ? VertexClass::V1 : VertexClass::V0);
  }

  std::vector<std::array<int, 3>> tv;
  std::vector<std::array<Word, 3>> tw;
  std::vector<std::array<bool, 3>> base;
  tv.reserve(4 * mesh.num_triangles());
  tw.reserve(4 * mesh.num_triangles());
  base.reserve(4 * mesh.num_triangles());
  for (const MeshTriangle& t : mesh.triangles()) {
    std::array<int, 3> cv{}, mv{};
    std::array<Word, 3> cw, mw;
    std::array<bool, 3> on{};
    for (std::size_t k = 0; k < 3; ++k) {
      cv[k] = t.v[k];
      cw[k] = mesh.element_word(t.deck[k]);
      const MeshEdge& e = mesh.edges()[static_cast<std::size_t>(t.edge[k])];
      mv[k] = nv + t.edge[k];
      mw[k] = mesh.element_word(t.forward[k] ? t.deck[k] : t.deck[(k + 1) % 3]);
      on[k] = e.on_base;
    }
    // Corners A, B, C with midpoints m0 on AB, m1 on BC, m2 on CA.
    tv.push_back({cv[0], mv[0], mv[2]});
    tw.push_back({cw[0], mw[0], mw[2]});
    base.push_back({on[0], false, on[2]});
    tv.push_back({mv[0], cv[1], mv[1]});
    tw.push_back({mw[0], cw[1], mw[1]});
    base.push_back({on[0], on[1], false});
    tv.push_back({mv[2], mv[1], cv[2]});
    tw.push_back({mw[2], mw[1], cw[2]});
    base.push_back({false, on[1], on[2]});
    tv.push_back({mv[0], mv[1], mv[2]});
    tw.push_back({mw[0], mw[1], mw[2]});
    base.push_back({false, false, false});
  }
  return Triangulation(mesh.surface(), mesh.deck(), std::move(verts), tv, tw, mesh.level() + 1, std::move(classes), base);
}

std::vector<Triangulation> refine_sequence(const Triangulation& base, int levels) {
  if (levels < 0) throw DomainError("refine_sequence: negative level count");
  std::vector<Triangulation> seq{base};
  for (int i = 0; i < levels; ++i) seq.push_back(midpoint_refine(seq.back()));
  return seq;
}

// === Statistics

std::array<double, 3> triangle_angles(const Triangulation& mesh, int tri) {
  const Geometry& geom = mesh.geometry();
  const auto p = mesh.triangle_points(tri);
  return {geom.angle_at(p[0], p[1], p[2]), geom.angle_at(p[1], p[2], p[0]), geom.angle_at(p[2], p[0], p[1])};
}

MeshStats quality_stats(const Triangulation& mesh, bool combinatorial) {
  const Geometry& geom = mesh.geometry();
  MeshStats s;
  s.level = mesh.level();
  s.vertices = mesh.num_vertices();
  s.edges = mesh.num_edges();
  s.triangles = mesh.num_triangles();
  s.min_edge = std::numeric_limits<double>::infinity();
  s.min_angle = std::numeric_limits<double>::infinity();
  s.min_thickness = std::numeric_limits<double>::infinity();
  s.min_edge_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < mesh.num_edges(); ++e) {
    const auto [a, b] = mesh.edge_points(static_cast<int>(e));
    const double d = geom.distance(a, b);
    s.mesh_size = std::max(s.mesh_size, d);
    s.min_edge = std::min(s.min_edge, d);
  }
  std::vector<std::array<double, 3>> angles(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto p = mesh.triangle_points(static_cast<int>(t));
    angles[t] = triangle_angles(mesh, static_cast<int>(t));
    for (double a : angles[t]) {
      s.min_angle = std::min(s.min_angle, a);
      s.max_angle = std::max(s.max_angle, a);
    }
    const double l[3] = {geom.distance(p[0], p[1]), geom.distance(p[1], p[2]), geom.distance(p[2], p[0])};
    const double lmax = std::max({l[0], l[1], l[2]}), lmin = std::min({l[0], l[1], l[2]});
    s.min_edge_ratio = std::min(s.min_edge_ratio, lmin / lmax);
    const std::vector<Point> pts(p.begin(), p.end());
    const std::vector<double> w(3, 1.0);
    const Point c = geom.weighted_barycenter(pts, w);
    const double radius = std::min({line_distance(geom, c, p[0], p[1]), line_distance(geom, c, p[1], p[2]),
                                    line_distance(geom, c, p[2], p[0])});
    s.min_thickness = std::min(s.min_thickness, radius / lmax);
  }
  s.is_delaunay_angle = true;
  for (const MeshEdge& e : mesh.edges()) {
    const double sum = angles[static_cast<std::size_t>(e.tri[0])][static_cast<std::size_t>(e.opposite[0])] +
                       angles[static_cast<std::size_t>(e.tri[1])][static_cast<std::size_t>(e.opposite[1])];
    if (sum > kPi + 1e-12) s.is_delaunay_angle = false;
  }

  if (combinatorial) {
    const std::size_t nv = mesh.num_vertices();
    std::vector<std::vector<int>> adj(nv);
    for (const MeshEdge& e : mesh.edges()) {
      if (e.u == e.v) continue;
      adj[static_cast<std::size_t>(e.u)].push_back(e.v);
      adj[static_cast<std::size_t>(e.v)].push_back(e.u);
    }
    for (auto& a : adj) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    int diameter = 0, surj = std::numeric_limits<int>::max();
    std::vector<int> dist(nv), queue(nv);
    for (std::size_t src = 0; src < nv; ++src) {
      std::fill(dist.begin(), dist.end(), -1);
      std::size_t head = 0, tail = 0;
      dist[src] = 0;
      queue[tail++] = static_cast<int>(src);
      while (head < tail) {
        const int x = queue[head++];
        for (int y : adj[static_cast<std::size_t>(x)])
          if (dist[static_cast<std::size_t>(y)] < 0) {
            dist[static_cast<std::size_t>(y)] = dist[static_cast<std::size_t>(x)] + 1;
            queue[tail++] = y;
          }
      }
      if (tail != nv) throw DomainError("quality_stats: vertex graph is disconnected");
      int local = std::numeric_limits<int>::max();
      for (std::size_t y = 0; y < nv; ++y) {
        diameter = std::max(diameter, dist[y]);
        if (dist[y] == 0 || dist[y] >= local) continue;
        bool peak = true;
        for (int z : adj[y])
          if (dist[static_cast<std::size_t>(z)] > dist[y]) {
            peak = false;
            break;
          }
        if (peak) local = dist[y];
      }
      surj = std::min(surj, local);
    }
    s.combinatorial_diameter = diameter;
    s.surjectivity_radius = surj;
  }
  return s;
}

std::vector<VertexClass> classify_vertices(const Triangulation& mesh) {
  if (!mesh.has_classes()) throw ContractViolation("classify_vertices: mesh carries no refinement history");
  return mesh.classes();
}

AcutenessReport acuteness_report(const std::vector<Triangulation>& sequence) {
  AcutenessReport rep;
  rep.delaunay = true;
  double worst = 0;
  for (const Triangulation& m : sequence) {
    const MeshStats s = quality_stats(m, false);
    rep.levels.push_back({m.level(), s.min_angle, s.max_angle});
    worst = std::max(worst, s.max_angle);
    rep.delaunay = rep.delaunay && s.is_delaunay_angle;
  }
  rep.eta = kPi / 2 - worst;
  rep.acute = !sequence.empty() && rep.eta > 0;
  return rep;
}

// === File format

void write_mesh(std::ostream& out, const Triangulation& mesh) {
  const Geometry& geom = mesh.geometry();
  out << "# dhm mesh v1\n";
  out << "geometry " << to_string(mesh.kind()) << "\n";
  out << "level " << mesh.level() << "\n";
  out << "surface " << mesh.surface().to_string() << "\n";
  const bool hyperboloid = mesh.kind() == GeometryKind::Hyperbolic;
  if (hyperboloid) out << "coordinates hyperboloid\n";
  out << "vertices " << mesh.num_vertices() << "\n";
  for (std::size_t v = 0; v < mesh.num_vertices(); ++v) {
    const Point& p = mesh.vertices()[v];
    const Vec2 c = hyperboloid ? Vec2(p.coords.x(), p.coords.y()) : geom.to_disk(p);
    out << format_real(c.x()) << " " << format_real(c.y()) << " ";
    out << (mesh.has_classes() ? std::to_string(static_cast<int>(mesh.classes()[v])) : std::string("-")) << "\n";
  }
  out << "triangles " << mesh.num_triangles() << "\n";
  for (const MeshTriangle& t : mesh.triangles()) {
    for (int k = 0; k < 3; ++k) out << t.v[static_cast<std::size_t>(k)] << " ";
    for (int k = 0; k < 3; ++k) out << mesh.element_word(t.deck[static_cast<std::size_t>(k)]).to_string() << " ";
    for (int k = 0; k < 3; ++k) {
      out << (mesh.edges()[static_cast<std::size_t>(t.edge[static_cast<std::size_t>(k)])].on_base ? 1 : 0);
      out << (k < 2 ? " " : "\n");
    }
  }
}

Triangulation read_mesh(std::istream& in) {
  std::string line;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      const std::string t = trim(line);
      if (!t.empty() && t[0] != '#') return split_whitespace(t);
    }
    throw DomainError("mesh file: unexpected end of input");
  };
  auto expect = [&](const std::vector<std::string>& f, const char* key, std::size_t count) {
    if (f.empty() || f[0] != key || f.size() != count) throw DomainError(std::string("mesh file: expected '") + key + "' line");
  };
  auto f = next_line();
  expect(f, "geometry", 2);
  const GeometryKind kind = parse_geometry_kind(f[1]);
  f = next_line();
  expect(f, "level", 2);
  const int level = static_cast<int>(parse_integer(f[1]));
  f = next_line();
  if (f.size() < 2 || f[0] != "surface") throw DomainError("mesh file: expected 'surface' line");
  SurfaceSpec surface;
  surface.kind = kind;
  DeckGroup deck;
  if (f[1] == "torus" && kind == GeometryKind::Euclidean) {
    expect(f, "surface", 6);
    surface.torus = TorusSpec{parse_real(f[2]), parse_real(f[3]), parse_real(f[4]), static_cast<int>(parse_integer(f[5]))};
    deck = torus_lattice(surface.torus.a, surface.torus.b, surface.torus.shear);
  } else if (f[1] == "genus2" && kind == GeometryKind::Hyperbolic) {
    expect(f, "surface", 3);
    surface.fn = FenchelNielsen::parse(f[2]);
    deck = build_fuchsian_group(surface.fn).deck();
  } else {
    throw DomainError("mesh file: unsupported surface '" + f[1] + "'");
  }
  const Geometry geom(kind);
  f = next_line();
  bool hyperboloid = false;
  if (!f.empty() && f[0] == "coordinates") {
    expect(f, "coordinates", 2);
    if (f[1] == "hyperboloid" && kind == GeometryKind::Hyperbolic) {
      hyperboloid = true;
    } else if (f[1] != "disk") {
      throw DomainError("mesh file: unsupported coordinates '" + f[1] + "'");
    }
    f = next_line();
  }
  expect(f, "vertices", 2);
  const long long nv = parse_integer(f[1]);
  if (nv < 1) throw DomainError("mesh file: no vertices");
  std::vector<Point> verts;
  std::vector<VertexClass> classes;
  bool has_classes = true;
  for (long long i = 0; i < nv; ++i) {
    f = next_line();
    if (f.size() != 3) throw DomainError("mesh file: malformed vertex line");
    const Vec2 d(parse_real(f[0]), parse_real(f[1]));
    if (!d.allFinite()) throw DomainError("mesh file: non-finite vertex coordinates");
    if (hyperboloid) {
      verts.push_back(geom.normalize(Point{Vec3(d.x(), d.y(), 0)}));
    } else {
      if (kind == GeometryKind::Hyperbolic && !(d.squaredNorm() < 1)) throw DomainError("mesh file: vertex outside the disk");
      verts.push_back(geom.from_disk(d));
    }
    if (f[2] == "-") {
      has_classes = false;
    } else {
      const long long c = parse_integer(f[2]);
      if (c < 0 || c > 2) throw DomainError("mesh file: vertex class must be 0, 1 or 2");
      classes.push_back(static_cast<VertexClass>(c));
    }
  }
  if (!has_classes) classes.clear();
  f = next_line();
  expect(f, "triangles", 2);
  const long long nt = parse_integer(f[1]);
  std::vector<std::array<int, 3>> tv;
  std::vector<std::array<Word, 3>> tw;
  std::vector<std::array<bool, 3>> base;
  for (long long i = 0; i < nt; ++i) {
    f = next_line();
    if (f.size() != 9) throw DomainError("mesh file: malformed triangle line");
    std::array<int, 3> v{};
    std::array<Word, 3> w;
    std::array<bool, 3> b{};
    for (std::size_t k = 0; k < 3; ++k) {
      v[k] = static_cast<int>(parse_integer(f[k]));
      w[k] = Word::parse(f[3 + k]);
      b[k] = parse_integer(f[6 + k]) != 0;
    }
    tv.push_back(v);
    tw.push_back(w);
    base.push_back(b);
  }
  return Triangulation(surface, deck, std::move(verts), tv, tw, level, std::move(classes), base);
}

} // namespace dhm
