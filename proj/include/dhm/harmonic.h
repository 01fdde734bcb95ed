#pragma once

#include "dhm/weights.h"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace dhm {

// Equivariant map from the vertices of a biweighted mesh into a target
// geometry. The representation sends each domain deck word to the same word
// in the target deck; values are lifts at the vertex representatives.
class DiscreteMap {
public:
  DiscreteMap(std::shared_ptr<const BiweightedMesh> domain, DeckGroup target_deck, std::vector<Point> values);

  const BiweightedMesh& domain() const { return *domain_; }
  const std::shared_ptr<const BiweightedMesh>& domain_ptr() const { return domain_; }
  const Triangulation& mesh() const { return domain_->mesh; }
  const Geometry& target() const { return target_; }
  const DeckGroup& target_deck() const { return target_deck_; }

  const std::vector<Point>& values() const { return values_; }
  const Point& value(int v) const { return values_[static_cast<std::size_t>(v)]; }
  void set_values(std::vector<Point> values);
  void set_value(int v, const Point& p);

  // Image under the representation of the domain element table entry.
  const Isometry& rho(int element) const { return rho_[static_cast<std::size_t>(element)]; }
  Point apply_rho(int element, const Point& p) const;
  Point neighbor_value(const Neighbor& nb) const { return apply_rho(nb.lift, value(nb.vertex)); }
  Point corner_value(int tri, int k) const;
  std::array<Point, 3> triangle_values(int tri) const;

  // g o f, with the representation conjugated by g.
  DiscreteMap post_compose(const Isometry& g) const;

private:
  std::shared_ptr<const BiweightedMesh> domain_;
  Geometry target_{GeometryKind::Euclidean};
  DeckGroup target_deck_;
  std::vector<Point> values_;
  std::vector<Isometry> rho_;
  std::vector<Eigen::Matrix3d> rho_d_;
};

// Values at the vertex positions: the identity when the target deck is the domain deck.
DiscreteMap vertex_position_map(std::shared_ptr<const BiweightedMesh> domain, DeckGroup target_deck);
DiscreteMap identity_map(std::shared_ptr<const BiweightedMesh> domain);
// Values fn(x) at the vertex representatives. Equivariance is up to fn.
DiscreteMap sampled_map(std::shared_ptr<const BiweightedMesh> domain, DeckGroup target_deck,
                        const std::function<Point(const Point&)>& fn);

// Sum of w_i log_center(points_i).
Vec3 weighted_log_sum(const Geometry& geom, const Point& center, std::span<const Point> points,
                      std::span<const double> weights);

double energy(const DiscreteMap& f);
std::vector<double> energy_density(const DiscreteMap& f);
std::vector<TangentVector> tension_field(const DiscreteMap& f);
// L2 norm sqrt(sum mu_x |tau_x|^2).
double tension_norm(const DiscreteMap& f);
// Largest distance from a value to the weighted barycenter direction, to first
// order: max_x |sum omega log| / sum |omega|.
double balance_residual(const DiscreteMap& f);

struct FlowState {
  DiscreteMap map;
  double step_size = 0;
  long iteration = 0;
  std::vector<double> energy_history;
  std::vector<double> tension_norm_history;
  std::vector<double> wall_time_ms;
  long energy_increases = 0;
  std::vector<Vec3> tension; // tension of the current map
};

struct FlowOptions {
  double step_size = 0;    // 0: default_step_size
  double tension_tol = 0;  // 0: 1e-8 * sqrt(total vertex weight)
  long max_iterations = 100000;
  int instability_window = 5;
  bool record_time = false;
};

// 1 / (2 max_x sum omega / mu_x).
double default_step_size(const BiweightedMesh& b);
double default_tension_tolerance(const BiweightedMesh& b);
// ceil(C log(1/r) / r^(c + d)).
long cfl_iterations(double mesh_size, double C, double c = 1.0, double d = 2.0);

FlowState start_flow(DiscreteMap map, double step_size);
// Jacobi update u <- exp(t tau(u)) at every vertex.
FlowState heat_flow_step(const FlowState& s);
void advance_flow(FlowState& s, long steps, bool record_time = false);
// Steps until the tension norm reaches the tolerance or max_iterations.
// Throws InstabilityError after instability_window consecutive energy increases.
FlowState run_flow(const DiscreteMap& initial, const FlowOptions& opts = {});
void continue_flow(FlowState& s, const FlowOptions& opts);
bool flow_converged(const FlowState& s, double tension_tol);
void write_flow_csv(std::ostream& out, const FlowState& s);

struct MapDistances {
  double l2 = 0;
  double linf = 0;
};
MapDistances map_distances(const DiscreteMap& f, const DiscreteMap& g);

// Weights w with sum w_i log_p(corners_i) = 0 and sum w_i = 1. Throws
// DomainError when p lies outside the triangle by more than tol.
std::array<double, 3> barycentric_coordinates(const Geometry& geom, const std::array<Point, 3>& corners, const Point& p,
                                              double tol = 1e-9);
// Weighted barycenter; zero weights are dropped.
Point barycentric_point(const Geometry& geom, const std::array<Point, 3>& corners, const std::array<double, 3>& w);
// Center of mass interpolation on the lifted triangle tri.
Point interpolate(const DiscreteMap& f, int tri, const std::array<double, 3>& weights);
Point interpolate(const DiscreteMap& f, int tri, const Point& p);

// Interpolation of coarse onto a refinement of its domain, found through the
// ancestor triangle of each fine triangle.
DiscreteMap prolongate(const DiscreteMap& coarse, std::shared_ptr<const BiweightedMesh> fine);

// Supported quadrature orders: 1, 2, 4.
double interpolated_energy(const DiscreteMap& f, int quadrature_order = 4);

struct LipschitzReport {
  int samples = 0;
  double linf_maps = 0;
  double linf_interpolations = 0;
  double l2_maps = 0;
  double l2_interpolations = 0;
  bool linf_holds = false; // linf_interpolations <= linf_maps (1 + 1e-8)
  bool l2_holds = false;   // l2_interpolations <= sqrt(3) l2_maps (1 + 1e-6)
};
LipschitzReport interpolation_lipschitz_check(const DiscreteMap& f, const DiscreteMap& g, int samples,
                                              std::uint64_t seed = 1, int quadrature_order = 4);

struct BootstrapReport {
  double mesh_size = 0;
  double min_vertex_weight = 0;
  double weight_ratio = 0;
  int valence = 0;
  int surjectivity_radius = 0;
  double lipschitz = 0;
  double delta = 0;
  double A = 0;
  double B = 0;
  double kappa = 0;
  double d_l2 = 0;
  double d_inf = 0;
  double bound = 0;         // infinite when kappa <= 0
  bool vacuous = false;
  bool holds = false;
  double margin = 0;        // bound - d_inf
  int lemma_K = 0;          // min(floor(log_delta(d_inf / rho)), surjectivity radius)
  bool lemma_holds = false; // m d_inf^2 (K - 1) <= d_l2^2
  double balance_residual = 0;
};
// Throws ContractViolation unless v is balanced within balance_tol and every
// edge weight is positive.
BootstrapReport bootstrap_bound_check(const DiscreteMap& u, const DiscreteMap& v, double balance_tol = 1e-8);

// Companion section of the mesh format: representation generators and disk coordinates of the values.
void write_map(std::ostream& out, const DiscreteMap& f);
DiscreteMap read_map(std::istream& in, std::shared_ptr<const BiweightedMesh> domain);

} // namespace dhm
