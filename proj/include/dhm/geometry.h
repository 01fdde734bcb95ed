#pragma once

#include "dhm/quad.h"

#include <Eigen/Dense>

#include <array>
#include <span>
#include <string_view>
#include <vector>

namespace dhm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3L = Eigen::Matrix<long double, 3, 3>;
using Mat2L = Eigen::Matrix<long double, 2, 2>;

enum class GeometryKind { Euclidean, Hyperbolic };

const char* to_string(GeometryKind kind);
GeometryKind parse_geometry_kind(std::string_view name);

// Euclidean points are stored as (x, y, 0). Hyperbolic points live on the upper
// sheet of the hyperboloid x^2 + y^2 - z^2 = -1.
struct Point {
  Vec3 coords = Vec3(0., 0., 0.);
};

struct TangentVector {
  Point base;
  Vec3 vec = Vec3::Zero();
};

// Orientation-preserving isometry. Hyperbolic elements are SO(2,1)+ matrices
// acting on hyperboloid coordinates; Euclidean elements are homogeneous rigid
// motions acting on (x, y, 1). Entries are kept in binary128 so that long
// products of group elements stay accurate; a long double copy is used to act
// on points.
class Isometry {
public:
  Isometry() : Isometry(GeometryKind::Euclidean) {}
  explicit Isometry(GeometryKind kind) : kind_(kind), q_(QuadMatrix3::identity()), m_(Mat3L::Identity()) {}
  Isometry(GeometryKind kind, const Mat3L& m) : kind_(kind), q_(QuadMatrix3::from(m)), m_(m) {}
  Isometry(GeometryKind kind, const QuadMatrix3& q) : kind_(kind), q_(q), m_(q.to_long_double()) {}

  static Isometry identity(GeometryKind kind) { return Isometry(kind); }
  static Isometry translation(const Vec2& t);
  static Isometry rotation(GeometryKind kind, long double angle);
  // Hyperbolic translation of the given length along the x axis.
  static Isometry boost(long double length);
  // Hyperbolic isometry moving the origin to p along the connecting geodesic.
  static Isometry boost_to(const Point& p);
  // Image of an SL(2,R) matrix under the double cover SL(2,R) -> SO(2,1)+.
  static Isometry from_sl2(const Mat2L& a);
  // Validating constructor: the matrix must preserve the relevant form within 1e-9.
  static Isometry from_matrix(GeometryKind kind, const Mat3L& m);

  GeometryKind kind() const { return kind_; }
  const Mat3L& matrix() const { return m_; }
  const QuadMatrix3& exact() const { return q_; }
  Eigen::Matrix3d matrix_d() const { return m_.cast<double>(); }

  // (*this) o rhs: rhs is applied first.
  Isometry compose(const Isometry& rhs) const;
  Isometry inverse() const;
  Isometry operator*(const Isometry& rhs) const { return compose(rhs); }

  // Hyperbolic: displacement along the axis (0 for elliptic/parabolic).
  // Euclidean: length of the translation part.
  double translation_length() const;
  // Max absolute entry difference.
  long double distance_to(const Isometry& other) const;
  bool is_identity(long double tol) const;

private:
  GeometryKind kind_;
  QuadMatrix3 q_;
  Mat3L m_;
};

struct BarycenterOptions {
  double tolerance = 1e-12;
  int max_iterations = 200;
};

class Geometry {
public:
  explicit Geometry(GeometryKind kind) : kind_(kind) {}

  GeometryKind kind() const { return kind_; }
  bool hyperbolic() const { return kind_ == GeometryKind::Hyperbolic; }
  double curvature() const { return hyperbolic() ? -1.0 : 0.0; }

  Point origin() const;
  Point normalize(const Point& p) const;
  bool is_valid_point(const Point& p, double tol = 1e-9) const;
  Point from_plane(double x, double y) const;

  // Metric on the tangent plane at p (Minkowski form restricted to T_p).
  double inner(const Vec3& u, const Vec3& v) const;
  double norm(const Vec3& v) const;
  Vec3 project_tangent(const Point& p, const Vec3& v) const;

  Point exp_map(const Point& p, const Vec3& v) const;
  Point exp_map(const TangentVector& v) const { return exp_map(v.base, v.vec); }
  // Checks that v is based at base.
  Point exp_map(const Point& base, const TangentVector& v) const;
  Vec3 log_vec(const Point& p, const Point& q) const;
  TangentVector log_map(const Point& p, const Point& q) const { return {p, log_vec(p, q)}; }
  double distance(const Point& p, const Point& q) const;

  // Signed |u||v| sin(angle) for tangent vectors at p; positive for counterclockwise.
  double cross(const Point& p, const Vec3& u, const Vec3& v) const;
  double angle(const TangentVector& u, const TangentVector& v) const;
  // Interior angle at a of the geodesic triangle (a, b, c).
  double angle_at(const Point& a, const Point& b, const Point& c) const;
  double cot_at(const Point& a, const Point& b, const Point& c) const;
  // Sign of the orientation of (a, b, c) seen from a.
  double orientation(const Point& a, const Point& b, const Point& c) const;

  Point geodesic_midpoint(const Point& p, const Point& q) const;
  Point weighted_barycenter(std::span<const Point> points, std::span<const double> weights,
                            const BarycenterOptions& opts = {}) const;
  double triangle_area(const Point& a, const Point& b, const Point& c) const;

  Point apply_isometry(const Isometry& g, const Point& p) const;

  // Orthonormal frame of T_p obtained by transporting the standard frame at the origin.
  std::array<Vec3, 2> frame(const Point& p) const;
  Vec2 to_chart(const Point& p, const Vec3& v) const;
  Vec3 from_chart(const Point& p, const Vec2& c) const;

  // Poincare disk coordinates (Euclidean: plane coordinates).
  Vec2 to_disk(const Point& p) const;
  Point from_disk(const Vec2& d) const;

private:
  GeometryKind kind_;
};

// Residuals of the small-scale expansions of midpoints, vectors, distances and
// angles in the normal chart at a basepoint, for a configuration of points
// A = exp(scale * a), B = exp(scale * b) around it.
struct ExpansionConfig {
  Point basepoint;
  Vec2 a = Vec2(0.8, 0.3);
  Vec2 b = Vec2(-0.2, 0.9);
  double scale = 0.1;
};

struct ExpansionResiduals {
  double midpoint = 0;        // |I - I_E - R(A,B)(B-A)/12|
  double vector = 0;          // |AB - (B-A) - R(A,B)(B-A)/3|, AB pushed to the chart
  double distance = 0;        // |d^2 - d_E^2 + <R(B,A)A,B>/3|
  double cotangent = 0;       // |cot(angle BAO) - cot(Euclidean angle)|
  double cotangent_second = 0;  // cotangent residual after the curvature correction term
};

ExpansionResiduals expansion_residuals(const Geometry& geom, const ExpansionConfig& config);

} // namespace dhm
