#include "dhm/geometry.h"

#include "dhm/errors.h"

#include <cmath>
#include <numbers>
#include <string>

namespace dhm {

namespace {

inline double minkowski(const Vec3& u, const Vec3& v) { return u.x() * v.x() + u.y() * v.y() - u.z() * v.z(); }

inline Vec3 hyperboloid_lift(double x, double y) { return Vec3(x, y, std::sqrt(1.0 + x * x + y * y)); }

const Mat3L& lorentz_j() {
  static const Mat3L j = Eigen::DiagonalMatrix<long double, 3>(1.0L, 1.0L, -1.0L).toDenseMatrix();
  return j;
}

void check_finite(const Vec3& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string(what) + ": non-finite coordinates");
}

// R(X,Y)Z in constant curvature k.
Vec2 curvature_operator(double k, const Vec2& x, const Vec2& y, const Vec2& z) {
  return k * (y.dot(z) * x - x.dot(z) * y);
}

} // namespace

const char* to_string(GeometryKind kind) {
  return kind == GeometryKind::Hyperbolic ? "hyperbolic" : "euclidean";
}

GeometryKind parse_geometry_kind(std::string_view name) {
  if (name == "hyperbolic") return GeometryKind::Hyperbolic;
  if (name == "euclidean" || name == "flat") return GeometryKind::Euclidean;
  throw DomainError("unknown geometry '" + std::string(name) + "'");
}

// === Isometry

Isometry Isometry::translation(const Vec2& t) {
  Mat3L m = Mat3L::Identity();
  m(0, 2) = t.x();
  m(1, 2) = t.y();
  return Isometry(GeometryKind::Euclidean, m);
}

Isometry Isometry::rotation(GeometryKind kind, long double angle) {
  Mat3L m = Mat3L::Identity();
  m(0, 0) = std::cos(angle);
  m(0, 1) = -std::sin(angle);
  m(1, 0) = std::sin(angle);
  m(1, 1) = std::cos(angle);
  return Isometry(kind, m);
}

Isometry Isometry::boost(long double length) {
  Mat3L m = Mat3L::Identity();
  m(0, 0) = m(2, 2) = std::cosh(length);
  m(0, 2) = m(2, 0) = std::sinh(length);
  return Isometry(GeometryKind::Hyperbolic, m);
}

Isometry Isometry::boost_to(const Point& p) {
  const long double x = p.coords.x(), y = p.coords.y();
  const long double z = std::sqrt(1.0L + x * x + y * y);
  Mat3L m;
  m << 1 + x * x / (1 + z), x * y / (1 + z), x,
       x * y / (1 + z), 1 + y * y / (1 + z), y,
       x, y, z;
  return Isometry(GeometryKind::Hyperbolic, m);
}

Isometry Isometry::from_sl2(const Mat2L& a) {
  // Minkowski vector (x, y, z) <-> symmetric matrix [[z + x, y], [y, z - x]], acted on by S -> A S A^T.
  auto image = [&](long double x, long double y, long double z) {
    Mat2L s;
    s << z + x, y, y, z - x;
    Mat2L t = a * s * a.transpose();
    return Eigen::Matrix<long double, 3, 1>((t(0, 0) - t(1, 1)) / 2, (t(0, 1) + t(1, 0)) / 2,
                                            (t(0, 0) + t(1, 1)) / 2);
  };
  Mat3L m;
  m.col(0) = image(1, 0, 0);
  m.col(1) = image(0, 1, 0);
  m.col(2) = image(0, 0, 1);
  return Isometry(GeometryKind::Hyperbolic, m);
}

Isometry Isometry::from_matrix(GeometryKind kind, const Mat3L& m) {
  if (!m.allFinite()) throw ContractViolation("isometry: non-finite matrix");
  if (kind == GeometryKind::Hyperbolic) {
    const Mat3L err = m.transpose() * lorentz_j() * m - lorentz_j();
    if (err.cwiseAbs().maxCoeff() > 1e-9L * std::max<long double>(1, m.cwiseAbs().maxCoeff() * m.cwiseAbs().maxCoeff()) ||
        m(2, 2) <= 0 || m.determinant() <= 0)
      throw ContractViolation("isometry: matrix is not in SO(2,1)+");
  } else {
    const Eigen::Matrix<long double, 2, 2> r = m.topLeftCorner<2, 2>();
    const bool rigid = (r.transpose() * r - Eigen::Matrix<long double, 2, 2>::Identity()).cwiseAbs().maxCoeff() <= 1e-9L &&
                       r.determinant() > 0 && std::abs(m(2, 0)) <= 1e-12L && std::abs(m(2, 1)) <= 1e-12L &&
                       std::abs(m(2, 2) - 1) <= 1e-12L;
    if (!rigid) throw ContractViolation("isometry: matrix is not an orientation-preserving rigid motion");
  }
  return Isometry(kind, m);
}

Isometry Isometry::compose(const Isometry& rhs) const {
  if (kind_ != rhs.kind_) throw DomainError("compose: mismatched geometries");
  return Isometry(kind_, q_ * rhs.q_);
}

Isometry Isometry::inverse() const {
  if (kind_ == GeometryKind::Hyperbolic) return Isometry(kind_, q_.lorentz_inverse());
  QuadMatrix3 m = QuadMatrix3::identity();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) m(i, j) = q_(j, i);
  for (int i = 0; i < 2; ++i) m(i, 2) = -(m(i, 0) * q_(0, 2) + m(i, 1) * q_(1, 2));
  return Isometry(kind_, m);
}

double Isometry::translation_length() const {
  if (kind_ == GeometryKind::Euclidean) return static_cast<double>(m_.topRightCorner<2, 1>().norm());
  const long double c = static_cast<long double>((q_.trace() - 1) / 2);
  return c <= 1 ? 0.0 : static_cast<double>(std::acosh(c));
}

long double Isometry::distance_to(const Isometry& other) const {
  return static_cast<long double>((q_ - other.q_).max_abs());
}

bool Isometry::is_identity(long double tol) const {
  return static_cast<long double>((q_ - QuadMatrix3::identity()).max_abs()) <= tol;
}

// === Points and tangent vectors

Point Geometry::origin() const { return Point{hyperbolic() ? Vec3(0, 0, 1) : Vec3(0, 0, 0)}; }

Point Geometry::normalize(const Point& p) const {
  if (hyperbolic()) return Point{hyperboloid_lift(p.coords.x(), p.coords.y())};
  return Point{Vec3(p.coords.x(), p.coords.y(), 0.0)};
}

bool Geometry::is_valid_point(const Point& p, double tol) const {
  if (!p.coords.allFinite()) return false;
  if (!hyperbolic()) return std::abs(p.coords.z()) <= tol;
  return p.coords.z() > 0 && std::abs(minkowski(p.coords, p.coords) + 1.0) <= tol * p.coords.z() * p.coords.z();
}

Point Geometry::from_plane(double x, double y) const {
  if (hyperbolic()) return Point{hyperboloid_lift(x, y)};
  return Point{Vec3(x, y, 0)};
}

double Geometry::inner(const Vec3& u, const Vec3& v) const {
  return hyperbolic() ? minkowski(u, v) : u.x() * v.x() + u.y() * v.y();
}

double Geometry::norm(const Vec3& v) const { return std::sqrt(std::max(inner(v, v), 0.0)); }

Vec3 Geometry::project_tangent(const Point& p, const Vec3& v) const {
  if (hyperbolic()) return v + minkowski(p.coords, v) * p.coords;
  return Vec3(v.x(), v.y(), 0);
}

Point Geometry::exp_map(const Point& p, const Vec3& v) const {
  if (!hyperbolic()) return Point{Vec3(p.coords.x() + v.x(), p.coords.y() + v.y(), 0)};
  const double n = norm(v);
  if (n == 0.0) return p;
  const Vec3 q = std::cosh(n) * p.coords + (std::sinh(n) / n) * v;
  return Point{hyperboloid_lift(q.x(), q.y())};
}

Point Geometry::exp_map(const Point& base, const TangentVector& v) const {
  if ((base.coords - v.base.coords).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, base.coords.cwiseAbs().maxCoeff()))
    throw ContractViolation("exp_map: tangent vector based at a different point");
  return exp_map(base, v.vec);
}

Vec3 Geometry::log_vec(const Point& p, const Point& q) const {
  const Vec3 w = q.coords - p.coords;
  if (!hyperbolic()) return Vec3(w.x(), w.y(), 0);
  const Vec3 u = w + minkowski(p.coords, w) * p.coords;
  const double un = std::sqrt(std::max(minkowski(u, u), 0.0));
  if (un == 0.0) return Vec3::Zero();
  const double d = std::asinh(un);
  return (d / un) * u;
}

double Geometry::distance(const Point& p, const Point& q) const {
  const Vec3 w = q.coords - p.coords;
  if (!hyperbolic()) return std::hypot(w.x(), w.y());
  const double s2 = std::max(minkowski(w, w), 0.0);
  return 2.0 * std::asinh(0.5 * std::sqrt(s2));
}

double Geometry::cross(const Point& p, const Vec3& u, const Vec3& v) const {
  if (!hyperbolic()) return u.x() * v.y() - u.y() * v.x();
  return u.cross(v).dot(p.coords);
}

double Geometry::angle(const TangentVector& u, const TangentVector& v) const {
  const double nu = norm(u.vec), nv = norm(v.vec);
  if (nu == 0.0 || nv == 0.0) throw DomainError("angle: zero tangent vector");
  const double c = inner(u.vec, v.vec);
  const double s = std::abs(cross(u.base, u.vec, v.vec));
  return std::atan2(s, c);
}

double Geometry::angle_at(const Point& a, const Point& b, const Point& c) const {
  return angle(log_map(a, b), log_map(a, c));
}

double Geometry::cot_at(const Point& a, const Point& b, const Point& c) const {
  const Vec3 u = log_vec(a, b), v = log_vec(a, c);
  const double s = std::abs(cross(a, u, v));
  if (s == 0.0) throw DomainError("cot_at: degenerate triangle");
  return inner(u, v) / s;
}

double Geometry::orientation(const Point& a, const Point& b, const Point& c) const {
  return cross(a, log_vec(a, b), log_vec(a, c));
}

Point Geometry::geodesic_midpoint(const Point& p, const Point& q) const {
  check_finite(p.coords, "geodesic_midpoint");
  check_finite(q.coords, "geodesic_midpoint");
  if (!hyperbolic()) return Point{Vec3(0.5 * (p.coords.x() + q.coords.x()), 0.5 * (p.coords.y() + q.coords.y()), 0)};
  // The normalized sum of two hyperboloid points is their midpoint.
  const Vec3 s = p.coords + q.coords;
  return Point{hyperboloid_lift(s.x() / std::sqrt(-minkowski(s, s)), s.y() / std::sqrt(-minkowski(s, s)))};
}

Point Geometry::weighted_barycenter(std::span<const Point> points, std::span<const double> weights,
                                    const BarycenterOptions& opts) const {
  if (points.empty()) throw DomainError("weighted_barycenter: empty point set");
  if (points.size() != weights.size()) throw DomainError("weighted_barycenter: size mismatch");
  double total = 0;
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw DomainError("weighted_barycenter: weights must be positive");
    total += w;
  }
  Vec3 s = Vec3::Zero();
  for (std::size_t i = 0; i < points.size(); ++i) s += (weights[i] / total) * points[i].coords;
  if (!hyperbolic()) return Point{Vec3(s.x(), s.y(), 0)};

  // Projective average as the starting guess, then Newton steps on F = sum w_i d(x, a_i)^2 / 2.
  // Hess F restricted to T_x is sum w_i (r r^T + d coth(d) (I - r r^T)) with r the unit direction to a_i.
  const double sn = std::sqrt(-minkowski(s, s));
  Point x{hyperboloid_lift(s.x() / sn, s.y() / sn)};
  for (int it = 0; it < opts.max_iterations; ++it) {
    const auto fr = frame(x);
    Vec2 g = Vec2::Zero();
    Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
    double reach = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double w = weights[i] / total;
      const Vec3 l = log_vec(x, points[i]);
      const Vec2 c(minkowski(l, fr[0]), minkowski(l, fr[1]));
      const double d = c.norm();
      reach = std::max(reach, d);
      g += w * c;
      if (d < 1e-8) {
        h += w * Eigen::Matrix2d::Identity();
      } else {
        const Vec2 r = c / d;
        const double k = d / std::tanh(d);
        h += w * (k * Eigen::Matrix2d::Identity() + (1 - k) * r * r.transpose());
      }
    }
    if (!g.allFinite()) throw NumericError("weighted_barycenter: non-finite iterate");
    if (g.norm() <= opts.tolerance * std::max(1.0, reach)) return x;
    const Vec2 step = h.ldlt().solve(g);
    x = exp_map(x, step.x() * fr[0] + step.y() * fr[1]);
  }
  throw NumericError("weighted_barycenter: no convergence in " + std::to_string(opts.max_iterations) +
                     " iterations");
}

double Geometry::triangle_area(const Point& a, const Point& b, const Point& c) const {
  if (!hyperbolic()) return 0.5 * std::abs(cross(a, log_vec(a, b), log_vec(a, c)));
  const auto safe_angle = [&](const Point& p, const Point& q, const Point& r) {
    const Vec3 u = log_vec(p, q), v = log_vec(p, r);
    if (norm(u) == 0.0 || norm(v) == 0.0) return 0.0;
    return std::atan2(std::abs(cross(p, u, v)), inner(u, v));
  };
  if (distance(a, b) == 0.0 || distance(b, c) == 0.0 || distance(a, c) == 0.0) return 0.0;
  const double defect = std::numbers::pi - safe_angle(a, b, c) - safe_angle(b, c, a) - safe_angle(c, a, b);
  return std::max(defect, 0.0);
}

Point Geometry::apply_isometry(const Isometry& g, const Point& p) const {
  if (g.kind() != kind_) throw DomainError("apply_isometry: geometry mismatch");
  const Mat3L& m = g.matrix();
  if (!hyperbolic()) {
    const long double x = p.coords.x(), y = p.coords.y();
    return Point{Vec3(static_cast<double>(m(0, 0) * x + m(0, 1) * y + m(0, 2)),
                      static_cast<double>(m(1, 0) * x + m(1, 1) * y + m(1, 2)), 0.0)};
  }
  const Eigen::Matrix<long double, 3, 1> q = m * p.coords.cast<long double>();
  return Point{hyperboloid_lift(static_cast<double>(q.x()), static_cast<double>(q.y()))};
}

std::array<Vec3, 2> Geometry::frame(const Point& p) const {
  if (!hyperbolic()) return {Vec3(1, 0, 0), Vec3(0, 1, 0)};
  const double x = p.coords.x(), y = p.coords.y(), z = p.coords.z();
  return {Vec3(1 + x * x / (1 + z), x * y / (1 + z), x), Vec3(x * y / (1 + z), 1 + y * y / (1 + z), y)};
}

Vec2 Geometry::to_chart(const Point& p, const Vec3& v) const {
  const auto f = frame(p);
  return Vec2(inner(f[0], v), inner(f[1], v));
}

Vec3 Geometry::from_chart(const Point& p, const Vec2& c) const {
  const auto f = frame(p);
  return c.x() * f[0] + c.y() * f[1];
}

Vec2 Geometry::to_disk(const Point& p) const {
  if (!hyperbolic()) return Vec2(p.coords.x(), p.coords.y());
  const double d = 1.0 + p.coords.z();
  return Vec2(p.coords.x() / d, p.coords.y() / d);
}

Point Geometry::from_disk(const Vec2& d) const {
  if (!d.allFinite()) throw DomainError("from_disk: non-finite coordinates");
  if (!hyperbolic()) return Point{Vec3(d.x(), d.y(), 0)};
  const double r2 = d.squaredNorm();
  if (r2 >= 1.0) throw DomainError("from_disk: point outside the unit disk");
  return Point{hyperboloid_lift(2 * d.x() / (1 - r2), 2 * d.y() / (1 - r2))};
}

// === Expansions

ExpansionResiduals expansion_residuals(const Geometry& geom, const ExpansionConfig& cfg) {
  if (!(cfg.scale > 0.0) || !std::isfinite(cfg.scale)) throw DomainError("expansion_residuals: scale must be positive");
  const double k = geom.curvature();
  const Point& x0 = cfg.basepoint;
  const Vec2 a = cfg.scale * cfg.a, b = cfg.scale * cfg.b;
  const Point pa = geom.exp_map(x0, geom.from_chart(x0, a));
  const Point pb = geom.exp_map(x0, geom.from_chart(x0, b));
  const auto chart = [&](const Point& q) { return geom.to_chart(x0, geom.log_vec(x0, q)); };

  ExpansionResiduals res;
  const Vec2 ab_e = b - a;
  const Vec2 r_ab = curvature_operator(k, a, b, ab_e);

  const Vec2 mid = chart(geom.geodesic_midpoint(pa, pb));
  res.midpoint = (mid - 0.5 * (a + b) - r_ab / 12.0).norm();

  // Push log_A(B) into the chart by differentiating the chart map along it.
  const Vec3 v = geom.log_vec(pa, pb);
  const double h = 1e-4;
  const Vec2 pushed = (chart(geom.exp_map(pa, h * v)) - chart(geom.exp_map(pa, -h * v))) / (2 * h);
  res.vector = (pushed - ab_e - r_ab / 3.0).norm();

  const double d = geom.distance(pa, pb);
  const double wedge = a.x() * b.y() - a.y() * b.x();
  res.distance = std::abs(d * d - ab_e.squaredNorm() + k * wedge * wedge / 3.0);

  const double cot = geom.cot_at(pa, pb, x0);
  const Vec2 u = ab_e, w = -a;
  const double cot_e = u.dot(w) / std::abs(u.x() * w.y() - u.y() * w.x());
  res.cotangent = std::abs(cot - cot_e);
  const double alpha_e = std::atan2(std::abs(u.x() * w.y() - u.y() * w.x()), u.dot(w));
  const double eps = k / 6.0 * (2 * a.norm() * u.norm() / std::sin(alpha_e) + a.squaredNorm() * cot_e);
  res.cotangent_second = std::abs(cot - cot_e - eps);
  return res;
}

} // namespace dhm
