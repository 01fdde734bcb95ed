#include "dhm/harmonic.h"

#include "dhm/errors.h"
#include "dhm/format.h"
#include "dhm/parallel.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace dhm {

// === DiscreteMap

DiscreteMap::DiscreteMap(std::shared_ptr<const BiweightedMesh> domain, DeckGroup target_deck, std::vector<Point> values)
    : domain_(std::move(domain)), target_(target_deck.kind()), target_deck_(std::move(target_deck)) {
  if (!domain_) throw ContractViolation("discrete map: missing domain");
  const Triangulation& m = domain_->mesh;
  if (target_deck_.rank() != m.deck().rank())
    throw ContractViolation("discrete map: target deck rank " + std::to_string(target_deck_.rank()) +
                            " does not match domain rank " + std::to_string(m.deck().rank()));
  rho_.reserve(m.num_elements());
  rho_d_.reserve(m.num_elements());
  for (std::size_t i = 0; i < m.num_elements(); ++i) {
    rho_.push_back(target_deck_.evaluate(m.element_word(static_cast<int>(i))));
    rho_d_.push_back(rho_.back().matrix_d());
  }
  set_values(std::move(values));
}

void DiscreteMap::set_values(std::vector<Point> values) {
  if (values.size() != mesh().num_vertices())
    throw ContractViolation("discrete map: " + std::to_string(values.size()) + " values for " +
                            std::to_string(mesh().num_vertices()) + " vertices");
  for (Point& p : values) {
    if (!p.coords.allFinite()) throw NumericError("discrete map: non-finite value");
    p = target_.normalize(p);
  }
  values_ = std::move(values);
}

void DiscreteMap::set_value(int v, const Point& p) {
  if (v < 0 || static_cast<std::size_t>(v) >= values_.size()) throw DomainError("discrete map: vertex out of range");
  if (!p.coords.allFinite()) throw NumericError("discrete map: non-finite value");
  values_[static_cast<std::size_t>(v)] = target_.normalize(p);
}

Point DiscreteMap::apply_rho(int element, const Point& p) const {
  if (element == 0) return p;
  const Eigen::Matrix3d& m = rho_d_[static_cast<std::size_t>(element)];
  if (target_.hyperbolic()) {
    const Vec3 q = m * p.coords;
    return target_.from_plane(q.x(), q.y());
  }
  const Vec3 q = m * Vec3(p.coords.x(), p.coords.y(), 1.0);
  return Point{Vec3(q.x(), q.y(), 0.0)};
}

Point DiscreteMap::corner_value(int tri, int k) const {
  const MeshTriangle& t = mesh().triangles()[static_cast<std::size_t>(tri)];
  return apply_rho(t.deck[static_cast<std::size_t>(k)], value(t.v[static_cast<std::size_t>(k)]));
}

std::array<Point, 3> DiscreteMap::triangle_values(int tri) const {
  return {corner_value(tri, 0), corner_value(tri, 1), corner_value(tri, 2)};
}

DiscreteMap DiscreteMap::post_compose(const Isometry& g) const {
  if (g.kind() != target_.kind()) throw ContractViolation("post_compose: geometry mismatch");
  std::vector<Isometry> gens;
  const Isometry gi = g.inverse();
  for (const Isometry& h : target_deck_.generators()) gens.push_back(g * h * gi);
  std::vector<Point> vals;
  vals.reserve(values_.size());
  for (const Point& p : values_) vals.push_back(target_.apply_isometry(g, p));
  return DiscreteMap(domain_, DeckGroup(target_.kind(), std::move(gens)), std::move(vals));
}

DiscreteMap vertex_position_map(std::shared_ptr<const BiweightedMesh> domain, DeckGroup target_deck) {
  if (!domain) throw ContractViolation("discrete map: missing domain");
  std::vector<Point> vals = domain->mesh.vertices();
  return DiscreteMap(std::move(domain), std::move(target_deck), std::move(vals));
}

DiscreteMap identity_map(std::shared_ptr<const BiweightedMesh> domain) {
  if (!domain) throw ContractViolation("discrete map: missing domain");
  DeckGroup deck = domain->mesh.deck();
  return vertex_position_map(std::move(domain), std::move(deck));
}

DiscreteMap sampled_map(std::shared_ptr<const BiweightedMesh> domain, DeckGroup target_deck,
                        const std::function<Point(const Point&)>& fn) {
  if (!domain) throw ContractViolation("discrete map: missing domain");
  std::vector<Point> vals;
  vals.reserve(domain->mesh.num_vertices());
  for (const Point& x : domain->mesh.vertices()) vals.push_back(fn(x));
  return DiscreteMap(std::move(domain), std::move(target_deck), std::move(vals));
}

// === Energy and tension

Vec3 weighted_log_sum(const Geometry& geom, const Point& center, std::span<const Point> points,
                      std::span<const double> weights) {
  if (points.size() != weights.size()) throw DomainError("weighted_log_sum: size mismatch");
  Vec3 s = Vec3::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) s += weights[i] * geom.log_vec(center, points[i]);
  return s;
}

namespace {

// Per vertex: sum of omega log_{f(x)} f(y) and sum of omega d(f(x), f(y))^2.
void local_sums(const DiscreteMap& f, std::vector<Vec3>& logsum, std::vector<double>& dist2) {
  const Triangulation& mesh = f.mesh();
  const Geometry& geom = f.target();
  const std::vector<double>& omega = f.domain().edge_weights;
  logsum.assign(mesh.num_vertices(), Vec3::Zero());
  dist2.assign(mesh.num_vertices(), 0.0);
  parallel_for(mesh.num_vertices(), [&](std::size_t x) {
    const Point& p = f.values()[x];
    Vec3 s = Vec3::Zero();
    double d2 = 0;
    for (const Neighbor& nb : mesh.neighbors()[x]) {
      const double w = omega[static_cast<std::size_t>(nb.edge)];
      const Vec3 l = geom.log_vec(p, f.neighbor_value(nb));
      s += w * l;
      d2 += w * geom.inner(l, l);
    }
    logsum[x] = s;
    dist2[x] = d2;
  });
}

double sum_energy(const std::vector<double>& dist2) { return 0.25 * std::accumulate(dist2.begin(), dist2.end(), 0.0); }

double weighted_norm(const DiscreteMap& f, const std::vector<Vec3>& tension) {
  double s = 0;
  for (std::size_t x = 0; x < tension.size(); ++x)
    s += f.domain().vertex_weights[x] * f.target().inner(tension[x], tension[x]);
  return std::sqrt(s);
}

std::vector<Vec3> tension_from_sums(const DiscreteMap& f, std::vector<Vec3> logsum) {
  for (std::size_t x = 0; x < logsum.size(); ++x) logsum[x] /= f.domain().vertex_weights[x];
  return logsum;
}

} // namespace

double energy(const DiscreteMap& f) {
  std::vector<Vec3> s;
  std::vector<double> d2;
  local_sums(f, s, d2);
  return sum_energy(d2);
}

std::vector<double> energy_density(const DiscreteMap& f) {
  std::vector<Vec3> s;
  std::vector<double> d2;
  local_sums(f, s, d2);
  for (std::size_t x = 0; x < d2.size(); ++x) d2[x] /= 4 * f.domain().vertex_weights[x];
  return d2;
}

std::vector<TangentVector> tension_field(const DiscreteMap& f) {
  std::vector<Vec3> s;
  std::vector<double> d2;
  local_sums(f, s, d2);
  const std::vector<Vec3> t = tension_from_sums(f, std::move(s));
  std::vector<TangentVector> out;
  out.reserve(t.size());
  for (std::size_t x = 0; x < t.size(); ++x) out.push_back({f.values()[x], t[x]});
  return out;
}

double tension_norm(const DiscreteMap& f) {
  std::vector<Vec3> s;
  std::vector<double> d2;
  local_sums(f, s, d2);
  return weighted_norm(f, tension_from_sums(f, std::move(s)));
}

double balance_residual(const DiscreteMap& f) {
  std::vector<Vec3> s;
  std::vector<double> d2;
  local_sums(f, s, d2);
  double worst = 0;
  for (std::size_t x = 0; x < s.size(); ++x) {
    double total = 0;
    for (const Neighbor& nb : f.mesh().neighbors()[x])
      total += std::abs(f.domain().edge_weights[static_cast<std::size_t>(nb.edge)]);
    if (total > 0) worst = std::max(worst, f.target().norm(s[x]) / total);
  }
  return worst;
}

// === Heat flow

double default_step_size(const BiweightedMesh& b) {
  const std::vector<double> bound = weight_sum_bound(b);
  const double beta = 2 * *std::max_element(bound.begin(), bound.end());
  if (!(beta > 0) || !std::isfinite(beta)) throw DomainError("default step size: weight sums must be positive");
  return 1 / beta;
}

double default_tension_tolerance(const BiweightedMesh& b) {
  return 1e-8 * std::sqrt(std::accumulate(b.vertex_weights.begin(), b.vertex_weights.end(), 0.0));
}

long cfl_iterations(double mesh_size, double C, double c, double d) {
  if (!(mesh_size > 0) || !(mesh_size < 1)) throw DomainError("cfl schedule: mesh size must lie in (0, 1)");
  if (!(C >= 0)) throw DomainError("cfl schedule: C must be nonnegative");
  const double k = std::ceil(C * std::log(1 / mesh_size) / std::pow(mesh_size, c + d));
  if (!(k < 1e15)) throw DomainError("cfl schedule: iteration count overflows");
  return static_cast<long>(k);
}

namespace {

void record(FlowState& s, double e, double tn, double ms) {
  s.energy_history.push_back(e);
  s.tension_norm_history.push_back(tn);
  s.wall_time_ms.push_back(ms);
}

bool energy_increased(double before, double after) {
  return after - before > 64 * std::numeric_limits<double>::epsilon() * std::max(std::abs(before), 1e-300);
}

} // namespace

FlowState start_flow(DiscreteMap map, double step_size) {
  if (!(step_size > 0) || !std::isfinite(step_size)) throw DomainError("heat flow: step size must be positive");
  FlowState s{std::move(map), step_size, 0, {}, {}, {}, 0, {}};
  std::vector<Vec3> sums;
  std::vector<double> d2;
  local_sums(s.map, sums, d2);
  s.tension = tension_from_sums(s.map, std::move(sums));
  record(s, sum_energy(d2), weighted_norm(s.map, s.tension), 0.0);
  return s;
}

void advance_flow(FlowState& s, long steps, bool record_time) {
  if (!(s.step_size > 0)) throw DomainError("heat flow: step size must be positive");
  const Geometry& geom = s.map.target();
  std::vector<Point> next(s.map.values().size());
  std::vector<Vec3> sums;
  std::vector<double> d2;
  for (long i = 0; i < steps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    parallel_for(next.size(), [&](std::size_t x) {
      next[x] = geom.exp_map(s.map.values()[x], s.step_size * s.tension[x]);
    });
    try {
      s.map.set_values(next);
    } catch (const NumericError&) {
      throw InstabilityError("heat flow diverged; use a smaller step size");
    }
    local_sums(s.map, sums, d2);
    s.tension = tension_from_sums(s.map, sums);
    const double e = sum_energy(d2);
    const double tn = weighted_norm(s.map, s.tension);
    if (!std::isfinite(e) || !std::isfinite(tn)) throw InstabilityError("heat flow diverged; use a smaller step size");
    if (energy_increased(s.energy_history.back(), e)) ++s.energy_increases;
    ++s.iteration;
    const double ms =
        record_time ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() : 0.0;
    record(s, e, tn, ms);
  }
}

FlowState heat_flow_step(const FlowState& s) {
  FlowState next = s;
  advance_flow(next, 1);
  return next;
}

bool flow_converged(const FlowState& s, double tension_tol) {
  return !s.tension_norm_history.empty() && s.tension_norm_history.back() <= tension_tol;
}

void continue_flow(FlowState& s, const FlowOptions& opts) {
  const double tol = opts.tension_tol > 0 ? opts.tension_tol : default_tension_tolerance(s.map.domain());
  int rising = 0;
  while (!flow_converged(s, tol) && s.iteration < opts.max_iterations) {
    advance_flow(s, 1, opts.record_time);
    const std::size_t n = s.energy_history.size();
    rising = energy_increased(s.energy_history[n - 2], s.energy_history[n - 1]) ? rising + 1 : 0;
    if (rising >= opts.instability_window)
      throw InstabilityError("heat flow: energy increased for " + std::to_string(rising) +
                             " consecutive steps at step size " + format_real(s.step_size) +
                             "; use a smaller step size");
  }
}

FlowState run_flow(const DiscreteMap& initial, const FlowOptions& opts) {
  const double t = opts.step_size > 0 ? opts.step_size : default_step_size(initial.domain());
  FlowState s = start_flow(initial, t);
  continue_flow(s, opts);
  return s;
}

void write_flow_csv(std::ostream& out, const FlowState& s) {
  out << "iteration,energy,tension_l2,step_size,wall_time_ms\n";
  for (std::size_t k = 0; k < s.energy_history.size(); ++k)
    out << k << "," << format_real(s.energy_history[k]) << "," << format_real(s.tension_norm_history[k]) << ","
        << format_real(s.step_size) << "," << format_real(s.wall_time_ms[k]) << "\n";
}

// === Distances

namespace {

void require_same_domain(const DiscreteMap& f, const DiscreteMap& g, const char* what) {
  if (f.domain_ptr() == g.domain_ptr()) return;
  const Triangulation& a = f.mesh();
  const Triangulation& b = g.mesh();
  bool same = a.num_vertices() == b.num_vertices() && a.num_triangles() == b.num_triangles() &&
              a.level() == b.level() && a.surface() == b.surface();
  for (std::size_t t = 0; same && t < a.num_triangles(); ++t) same = a.triangles()[t].v == b.triangles()[t].v;
  if (!same) throw ContractViolation(std::string(what) + ": maps are defined on different meshes");
  if (f.target().kind() != g.target().kind()) throw ContractViolation(std::string(what) + ": target geometries differ");
}

} // namespace

MapDistances map_distances(const DiscreteMap& f, const DiscreteMap& g) {
  require_same_domain(f, g, "map_distances");
  MapDistances d;
  double s = 0;
  for (std::size_t x = 0; x < f.values().size(); ++x) {
    const double dx = f.target().distance(f.values()[x], g.values()[x]);
    s += f.domain().vertex_weights[x] * dx * dx;
    d.linf = std::max(d.linf, dx);
  }
  d.l2 = std::sqrt(s);
  return d;
}

// === Interpolation

std::array<double, 3> barycentric_coordinates(const Geometry& geom, const std::array<Point, 3>& corners, const Point& p,
                                              double tol) {
  Eigen::Matrix3d m;
  for (int i = 0; i < 3; ++i) {
    const Vec2 c = geom.to_chart(p, geom.log_vec(p, corners[static_cast<std::size_t>(i)]));
    m(0, i) = c.x();
    m(1, i) = c.y();
    m(2, i) = 1.0;
  }
  const double scale = m.topRows<2>().cwiseAbs().maxCoeff();
  if (scale == 0.0) return {1.0, 0.0, 0.0};
  const Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
  if (std::abs(lu.determinant()) <= 1e-14 * scale * scale) throw DomainError("barycentric coordinates: degenerate triangle");
  const Vec3 w = lu.solve(Vec3(0, 0, 1));
  if (w.minCoeff() < -tol) throw DomainError("barycentric coordinates: point outside the triangle");
  std::array<double, 3> out{};
  double total = 0;
  for (int i = 0; i < 3; ++i) total += out[static_cast<std::size_t>(i)] = std::max(w[i], 0.0);
  for (double& x : out) x /= total;
  return out;
}

Point barycentric_point(const Geometry& geom, const std::array<Point, 3>& corners, const std::array<double, 3>& w) {
  std::array<Point, 3> pts;
  std::array<double, 3> ws{};
  std::size_t n = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    if (w[i] < 0 || !std::isfinite(w[i])) throw DomainError("barycentric point: weights must be nonnegative");
    if (w[i] > 0) {
      pts[n] = corners[i];
      ws[n++] = w[i];
    }
  }
  if (n == 0) throw DomainError("barycentric point: all weights vanish");
  if (n == 1) return pts[0];
  return geom.weighted_barycenter(std::span<const Point>(pts.data(), n), std::span<const double>(ws.data(), n));
}

Point interpolate(const DiscreteMap& f, int tri, const std::array<double, 3>& weights) {
  if (tri < 0 || static_cast<std::size_t>(tri) >= f.mesh().num_triangles()) throw DomainError("interpolate: triangle out of range");
  return barycentric_point(f.target(), f.triangle_values(tri), weights);
}

Point interpolate(const DiscreteMap& f, int tri, const Point& p) {
  if (tri < 0 || static_cast<std::size_t>(tri) >= f.mesh().num_triangles()) throw DomainError("interpolate: triangle out of range");
  return interpolate(f, tri, barycentric_coordinates(f.mesh().geometry(), f.mesh().triangle_points(tri), p));
}

DiscreteMap prolongate(const DiscreteMap& coarse, std::shared_ptr<const BiweightedMesh> fine) {
  if (!fine) throw ContractViolation("prolongate: missing fine mesh");
  const Triangulation& cm = coarse.mesh();
  const Triangulation& fm = fine->mesh;
  const int k = fm.level() - cm.level();
  bool ok = k >= 0 && k <= 12 && fm.surface() == cm.surface() && fm.num_vertices() >= cm.num_vertices() &&
            fm.num_triangles() == cm.num_triangles() << (2 * k);
  for (std::size_t v = 0; ok && v < cm.num_vertices(); ++v)
    ok = cm.geometry().distance(cm.vertices()[v], fm.vertices()[v]) <= 1e-9;
  if (!ok) throw ContractViolation("prolongate: fine mesh is not a refinement of the coarse mesh");

  std::vector<Point> vals(fm.num_vertices());
  std::vector<char> done(fm.num_vertices(), 0);
  for (std::size_t v = 0; v < cm.num_vertices(); ++v) {
    vals[v] = coarse.values()[v];
    done[v] = 1;
  }
  DiscreteMap out(fine, coarse.target_deck(), fm.vertices());
  for (std::size_t t = 0; t < fm.num_triangles(); ++t) {
    const MeshTriangle& ft = fm.triangles()[t];
    const int anc = static_cast<int>(t >> (2 * k));
    for (std::size_t c = 0; c < 3; ++c) {
      const auto v = static_cast<std::size_t>(ft.v[c]);
      if (done[v]) continue;
      const Point lifted = interpolate(coarse, anc, fm.corner_point(static_cast<int>(t), static_cast<int>(c)));
      vals[v] = coarse.target().apply_isometry(out.rho(ft.deck[c]).inverse(), lifted);
      done[v] = 1;
    }
  }
  out.set_values(std::move(vals));
  return out;
}

// === Quadrature

namespace {

struct QuadNode {
  std::array<double, 3> w;
  double weight;
};

std::vector<QuadNode> quadrature_rule(int order) {
  auto orbit = [](double a, double weight, std::vector<QuadNode>& out) {
    const double b = 1 - 2 * a;
    out.push_back({{b, a, a}, weight});
    out.push_back({{a, b, a}, weight});
    out.push_back({{a, a, b}, weight});
  };
  std::vector<QuadNode> rule;
  switch (order) {
  case 1:
    rule.push_back({{1.0 / 3, 1.0 / 3, 1.0 / 3}, 1.0});
    break;
  case 2:
    orbit(1.0 / 6, 1.0 / 3, rule);
    break;
  case 4:
    orbit(0.44594849091596488632, 0.22338158967801146570, rule);
    orbit(0.09157621350977074346, 0.10995174365532186764, rule);
    break;
  default:
    throw DomainError("quadrature order must be 1, 2 or 4");
  }
  return rule;
}

constexpr double kDiffStep = 1e-5;

// Point at barycentric parameters (s, t) and the derivative of the barycentric
// parametrization there in the orthonormal chart at that point.
struct NodeJet {
  Point p;
  Eigen::Matrix2d jac;
};

NodeJet jet(const Geometry& geom, const std::array<Point, 3>& corners, double s, double t) {
  auto at = [&](double a, double b) { return barycentric_point(geom, corners, {1 - a - b, a, b}); };
  NodeJet j{at(s, t), Eigen::Matrix2d::Zero()};
  if (!geom.hyperbolic()) {
    const Vec3 u = corners[1].coords - corners[0].coords;
    const Vec3 v = corners[2].coords - corners[0].coords;
    j.jac << u.x(), v.x(), u.y(), v.y();
    return j;
  }
  const double h = kDiffStep;
  auto chart = [&](const Point& q) { return geom.to_chart(j.p, geom.log_vec(j.p, q)); };
  j.jac.col(0) = (chart(at(s + h, t)) - chart(at(s - h, t))) / (2 * h);
  j.jac.col(1) = (chart(at(s, t + h)) - chart(at(s, t - h))) / (2 * h);
  return j;
}

} // namespace

double interpolated_energy(const DiscreteMap& f, int quadrature_order) {
  const std::vector<QuadNode> rule = quadrature_rule(quadrature_order);
  const Triangulation& mesh = f.mesh();
  std::vector<double> per_tri(mesh.num_triangles());
  parallel_for(mesh.num_triangles(), [&](std::size_t tri) {
    const auto dom = mesh.triangle_points(static_cast<int>(tri));
    const auto img = f.triangle_values(static_cast<int>(tri));
    double sum = 0;
    for (const QuadNode& q : rule) {
      const NodeJet jm = jet(mesh.geometry(), dom, q.w[1], q.w[2]);
      const NodeJet jn = jet(f.target(), img, q.w[1], q.w[2]);
      const double det = jm.jac.determinant();
      if (det == 0.0) throw DomainError("interpolated energy: degenerate domain triangle");
      const Eigen::Matrix2d df = jn.jac * jm.jac.inverse();
      sum += q.weight * 0.5 * df.squaredNorm() * std::abs(det);
    }
    per_tri[tri] = 0.5 * sum;
  });
  return std::accumulate(per_tri.begin(), per_tri.end(), 0.0);
}

LipschitzReport interpolation_lipschitz_check(const DiscreteMap& f, const DiscreteMap& g, int samples,
                                              std::uint64_t seed, int quadrature_order) {
  require_same_domain(f, g, "interpolation_lipschitz_check");
  if (samples < 0) throw DomainError("lipschitz check: negative sample count");
  const Triangulation& mesh = f.mesh();
  const Geometry& tg = f.target();
  LipschitzReport rep;
  rep.samples = samples;
  const MapDistances d = map_distances(f, g);
  rep.linf_maps = d.linf;
  rep.l2_maps = d.l2;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, mesh.num_triangles() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < samples; ++i) {
    const int tri = static_cast<int>(pick(rng));
    const double a = std::sqrt(unit(rng));
    const double b = unit(rng);
    const std::array<double, 3> w{1 - a, a * (1 - b), a * b};
    rep.linf_interpolations = std::max(rep.linf_interpolations, tg.distance(interpolate(f, tri, w), interpolate(g, tri, w)));
  }

  const std::vector<QuadNode> rule = quadrature_rule(quadrature_order);
  std::vector<double> per_tri(mesh.num_triangles());
  parallel_for(mesh.num_triangles(), [&](std::size_t tri) {
    const auto dom = mesh.triangle_points(static_cast<int>(tri));
    double sum = 0;
    for (const QuadNode& q : rule) {
      const NodeJet jm = jet(mesh.geometry(), dom, q.w[1], q.w[2]);
      const double dist = tg.distance(interpolate(f, static_cast<int>(tri), q.w), interpolate(g, static_cast<int>(tri), q.w));
      sum += q.weight * dist * dist * std::abs(jm.jac.determinant());
    }
    per_tri[tri] = 0.5 * sum;
  });
  rep.l2_interpolations = std::sqrt(std::accumulate(per_tri.begin(), per_tri.end(), 0.0));
  rep.linf_holds = rep.linf_interpolations <= rep.linf_maps * (1 + 1e-8);
  rep.l2_holds = rep.l2_interpolations <= std::sqrt(3.0) * rep.l2_maps * (1 + 1e-6);
  return rep;
}

// === Bootstrap

BootstrapReport bootstrap_bound_check(const DiscreteMap& u, const DiscreteMap& v, double balance_tol) {
  require_same_domain(u, v, "bootstrap_bound_check");
  const BiweightedMesh& b = v.domain();
  const Triangulation& mesh = b.mesh;
  BootstrapReport rep;
  rep.balance_residual = balance_residual(v);
  if (!(rep.balance_residual <= balance_tol))
    throw ContractViolation("bootstrap check: v is not balanced (residual " + format_real(rep.balance_residual) + ")");
  const auto [wmin, wmax] = std::minmax_element(b.edge_weights.begin(), b.edge_weights.end());
  if (!(*wmin > 0)) throw ContractViolation("bootstrap check: edge weights must be positive");

  const MeshStats stats = quality_stats(mesh, true);
  rep.mesh_size = stats.mesh_size;
  rep.min_vertex_weight = *std::min_element(b.vertex_weights.begin(), b.vertex_weights.end());
  rep.weight_ratio = *wmax / *wmin;
  for (const auto& nbs : mesh.neighbors()) rep.valence = std::max(rep.valence, static_cast<int>(nbs.size()));
  rep.surjectivity_radius = stats.surjectivity_radius;

  double longest = 0;
  for (std::size_t x = 0; x < mesh.num_vertices(); ++x)
    for (const Neighbor& nb : mesh.neighbors()[x])
      longest = std::max(longest, u.target().distance(u.values()[x], u.neighbor_value(nb)));
  rep.lipschitz = longest / rep.mesh_size;

  rep.delta = 2 * (1 + rep.weight_ratio * rep.valence);
  const double log_delta = std::log(rep.delta);
  rep.A = 1 / (2 * log_delta);
  rep.B = rep.lipschitz > 0 ? -std::log(rep.lipschitz) / log_delta - 1 : -1;
  rep.kappa = std::min(rep.A * std::log(1 / rep.mesh_size) + rep.B, static_cast<double>(rep.surjectivity_radius - 1));

  const MapDistances d = map_distances(u, v);
  rep.d_l2 = d.l2;
  rep.d_inf = d.linf;
  const double m = rep.min_vertex_weight;
  rep.vacuous = !(rep.kappa > 0);
  rep.bound = rep.vacuous ? std::numeric_limits<double>::infinity()
                          : std::max(d.l2 / std::sqrt(rep.kappa * m), std::sqrt(rep.mesh_size));
  rep.holds = rep.d_inf <= rep.bound * (1 + 1e-12);
  rep.margin = rep.bound - rep.d_inf;

  const double rho = rep.lipschitz * rep.mesh_size;
  if (rep.d_inf > 0 && rho > 0) {
    const double lg = std::max(std::log(rep.d_inf / rho) / log_delta, 0.0);
    rep.lemma_K = std::min(static_cast<int>(std::floor(lg)), rep.surjectivity_radius);
  }
  rep.lemma_holds = m * rep.d_inf * rep.d_inf * (rep.lemma_K - 1) <= rep.d_l2 * rep.d_l2 * (1 + 1e-12);
  return rep;
}

// === Serialization

void write_map(std::ostream& out, const DiscreteMap& f) {
  out << "# dhm map v1\n";
  out << "target " << to_string(f.target().kind()) << "\n";
  out << "generators " << f.target_deck().rank() << "\n";
  for (const Isometry& g : f.target_deck().generators()) {
    const Mat3L& m = g.matrix();
    for (int i = 0; i < 9; ++i) out << format_real(static_cast<double>(m(i / 3, i % 3))) << (i < 8 ? " " : "\n");
  }
  out << "values " << f.values().size() << "\n";
  for (const Point& p : f.values()) {
    const Vec2 c = f.target().to_disk(p);
    out << format_real(c.x()) << " " << format_real(c.y()) << "\n";
  }
}

DiscreteMap read_map(std::istream& in, std::shared_ptr<const BiweightedMesh> domain) {
  std::string line;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      const std::string t = trim(line);
      if (!t.empty() && t[0] != '#') return split_whitespace(t);
    }
    throw DomainError("map file: unexpected end of input");
  };
  auto expect = [](const std::vector<std::string>& f, const char* key, std::size_t count) {
    if (f.empty() || f[0] != key || f.size() != count) throw DomainError(std::string("map file: expected '") + key + "' line");
  };
  auto f = next_line();
  expect(f, "target", 2);
  const GeometryKind kind = parse_geometry_kind(f[1]);
  const Geometry geom(kind);
  f = next_line();
  expect(f, "generators", 2);
  const long long ng = parse_integer(f[1]);
  if (ng < 0 || ng > 64) throw DomainError("map file: bad generator count");
  std::vector<Isometry> gens;
  for (long long i = 0; i < ng; ++i) {
    f = next_line();
    if (f.size() != 9) throw DomainError("map file: generator lines need 9 entries");
    Mat3L m;
    for (int j = 0; j < 9; ++j) m(j / 3, j % 3) = parse_real(f[static_cast<std::size_t>(j)]);
    try {
      gens.push_back(Isometry::from_matrix(kind, m));
    } catch (const ContractViolation& e) {
      throw DomainError(std::string("map file: ") + e.what());
    }
  }
  f = next_line();
  expect(f, "values", 2);
  const long long nv = parse_integer(f[1]);
  if (nv < 0) throw DomainError("map file: negative value count");
  std::vector<Point> vals;
  for (long long i = 0; i < nv; ++i) {
    f = next_line();
    if (f.size() != 2) throw DomainError("map file: value lines need 2 entries");
    const Vec2 c(parse_real(f[0]), parse_real(f[1]));
    if (kind == GeometryKind::Hyperbolic && !(c.squaredNorm() < 1)) throw DomainError("map file: value outside the disk");
    vals.push_back(geom.from_disk(c));
  }
  try {
    return DiscreteMap(std::move(domain), DeckGroup(kind, std::move(gens)), std::move(vals));
  } catch (const ContractViolation& e) {
    throw DomainError(std::string("map file: ") + e.what());
  }
}

} // namespace dhm
