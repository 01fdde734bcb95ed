#include "dhm/errors.h"
#include "dhm/geometry.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace dhm;

namespace {

const Geometry kEuc(GeometryKind::Euclidean);
const Geometry kHyp(GeometryKind::Hyperbolic);

// Random point at hyperbolic distance at most rmax from the origin, uniform in angle.
Point random_point(const Geometry& g, std::mt19937_64& rng, double rmax) {
  std::uniform_real_distribution<double> u(0, 1);
  const double r = rmax * u(rng), t = 2 * std::numbers::pi * u(rng);
  return g.exp_map(g.origin(), Vec3(r * std::cos(t), r * std::sin(t), 0));
}

Isometry random_isometry(const Geometry& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1);
  const double t = 2 * std::numbers::pi * u(rng);
  if (!g.hyperbolic()) return Isometry::translation(Vec2(4 * u(rng) - 2, 4 * u(rng) - 2)) * Isometry::rotation(g.kind(), t);
  return Isometry::boost_to(random_point(g, rng, 3.0)) * Isometry::rotation(g.kind(), t);
}

double point_gap(const Point& a, const Point& b) { return (a.coords - b.coords).norm(); }

// Area of a hyperbolic triangle by integrating the Klein-model area density
// 1/(1-x^2-y^2)^{3/2} over the (straight) Klein triangle with a collapsed
// Gauss-Legendre product rule.
double klein_area(const Point& a, const Point& b, const Point& c) {
  auto klein = [](const Point& p) { return Vec2(p.coords.x() / p.coords.z(), p.coords.y() / p.coords.z()); };
  const Vec2 ka = klein(a), kb = klein(b), kc = klein(c);
  const int n = 48;
  std::vector<double> x(n), w(n);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2 * k - 1) * z * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double dp = n * (z * p1 - p0) / (z * z - 1);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) {
        w[i] = 2 / ((1 - z * z) * dp * dp);
        break;
      }
    }
    x[i] = z;
  }
  const double jac = std::abs((kb - ka).x() * (kc - ka).y() - (kb - ka).y() * (kc - ka).x());
  double sum = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double s = (x[i] + 1) / 2, t = (x[j] + 1) / 2;
      const double u = s, v = (1 - s) * t;
      const Vec2 q = ka + u * (kb - ka) + v * (kc - ka);
      sum += w[i] * w[j] / 4 * (1 - s) * std::pow(1 - q.squaredNorm(), -1.5);
    }
  return sum * jac;
}

double slope(double r0, double e0, double r1, double e1) { return std::log(e0 / e1) / std::log(r0 / r1); }

} // namespace

TEST(GeometryExamples, ExpMap) {
  const Point e = kEuc.exp_map(kEuc.origin(), Vec3(1, 2, 0));
  EXPECT_DOUBLE_EQ(e.coords.x(), 1);
  EXPECT_DOUBLE_EQ(e.coords.y(), 2);
  const Point h = kHyp.exp_map(kHyp.origin(), Vec3(1, 0, 0));
  EXPECT_NEAR(h.coords.x(), 1.1752011936438014, 1e-15);
  EXPECT_NEAR(h.coords.y(), 0, 1e-15);
  EXPECT_NEAR(h.coords.z(), 1.5430806348152437, 1e-15);
  const Point p = kHyp.from_plane(0.3, -0.7);
  EXPECT_EQ(point_gap(kHyp.exp_map(p, Vec3::Zero()), p), 0);
}

TEST(GeometryExamples, ExpMapRejectsForeignTangentVector) {
  const TangentVector v{kHyp.from_plane(1, 0), Vec3(0, 1, 0)};
  EXPECT_THROW(kHyp.exp_map(kHyp.origin(), v), ContractViolation);
}

TEST(GeometryExamples, LogMap) {
  const Point p = kHyp.from_plane(0.4, 0.2);
  EXPECT_EQ(kHyp.log_vec(p, p).norm(), 0);
  const Vec3 e = kEuc.log_vec(kEuc.from_plane(1, 1), kEuc.from_plane(4, 5));
  EXPECT_DOUBLE_EQ(e.x(), 3);
  EXPECT_DOUBLE_EQ(e.y(), 4);
  EXPECT_DOUBLE_EQ(kEuc.norm(e), 5);
  const Vec3 h = kHyp.log_vec(kHyp.origin(), Point{Vec3(std::sinh(1.0), 0, std::cosh(1.0))});
  EXPECT_NEAR(h.x(), 1, 1e-14);
  EXPECT_NEAR(h.y(), 0, 1e-14);
  EXPECT_NEAR(h.z(), 0, 1e-14);
}

TEST(GeometryExamples, Distance) {
  const Point p = kHyp.from_disk(Vec2(0.1, 0.2));
  EXPECT_EQ(kHyp.distance(p, p), 0);
  EXPECT_NEAR(kHyp.distance(kHyp.from_disk(Vec2(0, 0)), kHyp.from_disk(Vec2(0.5, 0))), std::log(3.0), 1e-14);
  EXPECT_DOUBLE_EQ(kEuc.distance(kEuc.from_plane(0, 0), kEuc.from_plane(3, 4)), 5);
}

TEST(GeometryExamples, Angle) {
  const Point p = kHyp.from_plane(0.5, -1);
  const auto fr = kHyp.frame(p);
  const TangentVector u{p, fr[0] + 0.3 * fr[1]}, v{p, fr[1]}, w{p, -u.vec};
  EXPECT_NEAR(kHyp.angle(u, u), 0, 1e-8);
  EXPECT_NEAR(kHyp.angle(TangentVector{p, fr[0]}, v), std::numbers::pi / 2, 1e-14);
  EXPECT_NEAR(kHyp.angle(u, w), std::numbers::pi, 1e-8);
  EXPECT_THROW(kHyp.angle(u, TangentVector{p, Vec3::Zero()}), DomainError);
}

TEST(GeometryExamples, Midpoint) {
  const Point p = kHyp.from_plane(-2, 1);
  EXPECT_LT(point_gap(kHyp.geodesic_midpoint(p, p), p), 1e-14);
  const Point m = kEuc.geodesic_midpoint(kEuc.from_plane(0, 0), kEuc.from_plane(2, 4));
  EXPECT_DOUBLE_EQ(m.coords.x(), 1);
  EXPECT_DOUBLE_EQ(m.coords.y(), 2);
  const Vec3 v(0.6, 0.8, 0);
  const Point hm = kHyp.geodesic_midpoint(kHyp.origin(), kHyp.exp_map(kHyp.origin(), 2 * v));
  EXPECT_LT(point_gap(hm, kHyp.exp_map(kHyp.origin(), v)), 1e-14);
}

TEST(GeometryExamples, Barycenter) {
  const std::vector<Point> one{kHyp.from_plane(0.2, 0.9)};
  const std::vector<double> w1{3.0};
  EXPECT_LT(point_gap(kHyp.weighted_barycenter(one, w1), one[0]), 1e-15);

  const std::vector<Point> two{kHyp.from_plane(0.2, 0.9), kHyp.from_plane(-3, 1)};
  const std::vector<double> w2{1.5, 1.5};
  EXPECT_LT(point_gap(kHyp.weighted_barycenter(two, w2), kHyp.geodesic_midpoint(two[0], two[1])), 1e-10);

  const std::vector<Point> flat{kEuc.from_plane(0, 0), kEuc.from_plane(3, 0)};
  const std::vector<double> wf{1, 2};
  const Point b = kEuc.weighted_barycenter(flat, wf);
  EXPECT_NEAR(b.coords.x(), 2, 1e-15);
  EXPECT_NEAR(b.coords.y(), 0, 1e-15);
}

TEST(GeometryExamples, BarycenterRejectsBadInput) {
  const std::vector<Point> none;
  const std::vector<double> wn;
  EXPECT_THROW(kHyp.weighted_barycenter(none, wn), DomainError);
  const std::vector<Point> pts{kHyp.origin(), kHyp.from_plane(1, 0)};
  const std::vector<double> neg{1, -1}, zero{1, 0};
  EXPECT_THROW(kHyp.weighted_barycenter(pts, neg), DomainError);
  EXPECT_THROW(kHyp.weighted_barycenter(pts, zero), DomainError);
}

TEST(GeometryExamples, TriangleArea) {
  EXPECT_DOUBLE_EQ(kEuc.triangle_area(kEuc.from_plane(0, 0), kEuc.from_plane(1, 0), kEuc.from_plane(0, 1)), 0.5);
  const Point a = kHyp.origin(), b = kHyp.exp_map(a, Vec3(1, 0, 0)), c = kHyp.exp_map(a, Vec3(2, 0, 0));
  EXPECT_NEAR(kHyp.triangle_area(a, b, c), 0, 1e-12);
  EXPECT_NEAR(kEuc.triangle_area(kEuc.from_plane(0, 0), kEuc.from_plane(1, 1), kEuc.from_plane(2, 2)), 0, 1e-15);
}

TEST(GeometryExamples, TriangleAreaMatchesQuadrature) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const Point a = random_point(kHyp, rng, 2), b = random_point(kHyp, rng, 2), c = random_point(kHyp, rng, 2);
    EXPECT_NEAR(kHyp.triangle_area(a, b, c), klein_area(a, b, c), 1e-9);
  }
}

TEST(GeometryExamples, Isometries) {
  std::mt19937_64 rng(5);
  const Point p = random_point(kHyp, rng, 4);
  EXPECT_LT(point_gap(kHyp.apply_isometry(Isometry::identity(GeometryKind::Hyperbolic), p), p), 1e-15);
  const Isometry g = random_isometry(kHyp, rng);
  EXPECT_LT(point_gap(kHyp.apply_isometry(g * g.inverse(), p), p), 1e-12);
  EXPECT_TRUE((g * g.inverse()).is_identity(1e-9));
  const Isometry e = random_isometry(kEuc, rng);
  EXPECT_TRUE((e.inverse() * e).is_identity(1e-12));
}

TEST(GeometryExamples, TranslationLengthFromTrace) {
  // SL(2,R) representative diag(e^{l/2}, e^{-l/2}); oracle is 2 arccosh(|tr|/2).
  for (double l : {0.1, 1.0, 2.5, 7.0}) {
    Mat2L a = Mat2L::Zero();
    a(0, 0) = std::exp(l / 2);
    a(1, 1) = std::exp(-l / 2);
    const double oracle = 2 * std::acosh(std::abs(static_cast<double>(a.trace())) / 2);
    const Isometry g = Isometry::from_sl2(a);
    EXPECT_NEAR(g.translation_length(), oracle, 1e-12);
    for (double t : {-1.0, 0.0, 2.0}) {
      const Point on_axis = kHyp.exp_map(kHyp.origin(), Vec3(t, 0, 0));
      EXPECT_NEAR(kHyp.distance(on_axis, kHyp.apply_isometry(g, on_axis)), oracle, 1e-10);
    }
  }
}

TEST(GeometryExamples, FromMatrixRejectsNonIsometries) {
  Mat3L m = Mat3L::Identity();
  m(0, 0) = 2;
  EXPECT_THROW(Isometry::from_matrix(GeometryKind::Hyperbolic, m), ContractViolation);
  EXPECT_THROW(Isometry::from_matrix(GeometryKind::Euclidean, m), ContractViolation);
  EXPECT_THROW(Isometry::from_matrix(GeometryKind::Hyperbolic, Mat3L::Zero()), ContractViolation);
  EXPECT_NO_THROW(Isometry::from_matrix(GeometryKind::Hyperbolic, Isometry::boost(1.5).matrix()));
}

TEST(GeometryProperties, RoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (const Geometry* g : {&kEuc, &kHyp}) {
    for (int i = 0; i < 1000; ++i) {
      const Point p = random_point(*g, rng, 1.0);
      const double t = 2 * std::numbers::pi * u(rng), r = 10 * u(rng);
      const Point q = g->exp_map(p, g->from_chart(p, Vec2(r * std::cos(t), r * std::sin(t))));
      const Vec3 v = g->log_vec(p, q);
      const Point back = g->exp_map(p, v);
      EXPECT_LT(point_gap(back, q), 1e-10 * std::max(1.0, q.coords.norm()));
      EXPECT_NEAR(g->norm(v), g->distance(p, q), 1e-10 * std::max(1.0, r));
      EXPECT_NEAR(g->distance(p, q), r, 1e-9);
      if (g->hyperbolic()) {
        EXPECT_TRUE(g->is_valid_point(q, 1e-10));
        EXPECT_NEAR(g->inner(v, p.coords), 0, 1e-10 * std::max(1.0, v.norm()));
      }
    }
  }
}

TEST(GeometryProperties, DistanceMatchesDiskFormula) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const Point p = random_point(kHyp, rng, 4), q = random_point(kHyp, rng, 4);
    const Vec2 a = kHyp.to_disk(p), b = kHyp.to_disk(q);
    const double oracle =
        std::acosh(1 + 2 * (a - b).squaredNorm() / ((1 - a.squaredNorm()) * (1 - b.squaredNorm())));
    EXPECT_NEAR(kHyp.distance(p, q), oracle, 1e-8 * std::max(1.0, oracle));
    EXPECT_DOUBLE_EQ(kHyp.distance(p, q), kHyp.distance(q, p));
  }
}

TEST(GeometryProperties, TriangleInequality) {
  std::mt19937_64 rng(3);
  for (const Geometry* g : {&kEuc, &kHyp})
    for (int i = 0; i < 300; ++i) {
      const Point a = random_point(*g, rng, 5), b = random_point(*g, rng, 5), c = random_point(*g, rng, 5);
      EXPECT_LE(g->distance(a, c), g->distance(a, b) + g->distance(b, c) + 1e-12);
    }
}

TEST(GeometryProperties, LawOfCosines) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const Point a = random_point(kHyp, rng, 3), b = random_point(kHyp, rng, 3), c = random_point(kHyp, rng, 3);
    const double x = kHyp.distance(a, b), y = kHyp.distance(a, c), z = kHyp.distance(b, c);
    if (x < 1e-3 || y < 1e-3) continue;
    const double oracle = std::acos(std::clamp((std::cosh(x) * std::cosh(y) - std::cosh(z)) / (std::sinh(x) * std::sinh(y)), -1.0, 1.0));
    EXPECT_NEAR(kHyp.angle_at(a, b, c), oracle, 1e-7);
  }
}

TEST(GeometryProperties, IsometryInvariance) {
  std::mt19937_64 rng(6);
  for (const Geometry* g : {&kEuc, &kHyp})
    for (int i = 0; i < 200; ++i) {
      const Isometry h = random_isometry(*g, rng);
      const Point a = random_point(*g, rng, 2), b = random_point(*g, rng, 2), c = random_point(*g, rng, 2);
      const Point ha = g->apply_isometry(h, a), hb = g->apply_isometry(h, b), hc = g->apply_isometry(h, c);
      EXPECT_NEAR(g->distance(ha, hb), g->distance(a, b), 1e-9);
      EXPECT_NEAR(g->angle_at(ha, hb, hc), g->angle_at(a, b, c), 1e-9);
      EXPECT_NEAR(g->triangle_area(ha, hb, hc), g->triangle_area(a, b, c), 1e-9);
      const Point m = g->apply_isometry(h, g->geodesic_midpoint(a, b));
      EXPECT_LT(g->distance(m, g->geodesic_midpoint(ha, hb)), 1e-9);
      const std::vector<Point> pts{a, b, c}, hpts{ha, hb, hc};
      const std::vector<double> w{0.5, 1.0, 2.0};
      const Point bc = g->apply_isometry(h, g->weighted_barycenter(pts, w));
      EXPECT_LT(g->distance(bc, g->weighted_barycenter(hpts, w)), 1e-9);
    }
}

TEST(GeometryProperties, BarycenterCharacterization) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.05, 3);
  for (const Geometry* g : {&kEuc, &kHyp})
    for (int i = 0; i < 200; ++i) {
      const int n = 1 + static_cast<int>(rng() % 6);
      std::vector<Point> pts;
      std::vector<double> w;
      for (int k = 0; k < n; ++k) {
        pts.push_back(random_point(*g, rng, 4));
        w.push_back(u(rng));
      }
      const Point p = g->weighted_barycenter(pts, w);
      Vec3 sum = Vec3::Zero();
      double wsum = 0, diam = 0;
      for (int k = 0; k < n; ++k) {
        sum += w[k] * g->log_vec(p, pts[k]);
        wsum += w[k];
        for (int l = 0; l < k; ++l) diam = std::max(diam, g->distance(pts[k], pts[l]));
      }
      EXPECT_LE(g->norm(sum), 1e-10 * wsum * std::max(diam, 1.0));

      std::vector<double> scaled = w;
      for (double& x : scaled) x *= 37.5;
      EXPECT_LT(g->distance(p, g->weighted_barycenter(pts, scaled)), 1e-10);
    }
}

TEST(GeometryProperties, DefectLaw) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    const Point a = random_point(kHyp, rng, 3), b = random_point(kHyp, rng, 3), c = random_point(kHyp, rng, 3);
    if (std::min({kHyp.distance(a, b), kHyp.distance(b, c), kHyp.distance(a, c)}) < 1e-3) continue;
    const double sum = kHyp.angle_at(a, b, c) + kHyp.angle_at(b, c, a) + kHyp.angle_at(c, a, b);
    EXPECT_NEAR(kHyp.triangle_area(a, b, c) + sum, std::numbers::pi, 1e-9);
  }
}

TEST(GeometryProperties, DiskRoundTrip) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const Point p = random_point(kHyp, rng, 6);
    EXPECT_LT(point_gap(kHyp.from_disk(kHyp.to_disk(p)), p), 1e-10 * p.coords.z());
  }
}

TEST(Expansions, EuclideanResidualsVanish) {
  ExpansionConfig cfg;
  cfg.basepoint = kEuc.origin();
  for (double r : {0.2, 0.1, 0.05}) {
    cfg.scale = r;
    const ExpansionResiduals res = expansion_residuals(kEuc, cfg);
    EXPECT_NEAR(res.midpoint, 0, 1e-15);
    EXPECT_NEAR(res.distance, 0, 1e-15);
    EXPECT_NEAR(res.cotangent, 0, 1e-12);
    EXPECT_NEAR(res.vector, 0, 1e-9);
  }
}

TEST(Expansions, RejectsZeroScale) {
  ExpansionConfig cfg;
  cfg.basepoint = kHyp.origin();
  cfg.scale = 0;
  EXPECT_THROW(expansion_residuals(kHyp, cfg), DomainError);
}

TEST(Expansions, HyperbolicSlopes) {
  ExpansionConfig cfg;
  cfg.basepoint = kHyp.from_plane(0.3, -0.4);
  std::vector<ExpansionResiduals> res;
  const std::vector<double> rs{0.2, 0.1, 0.05};
  for (double r : rs) {
    cfg.scale = r;
    res.push_back(expansion_residuals(kHyp, cfg));
  }
  const double cot = slope(rs.front(), res.front().cotangent, rs.back(), res.back().cotangent);
  EXPECT_GE(cot, 1.5);
  EXPECT_LE(cot, 2.5);
  // The midpoint and distance remainders decay at least as fast as claimed.
  EXPECT_GE(slope(rs.front(), res.front().midpoint, rs.back(), res.back().midpoint), 3.5);
  EXPECT_GE(slope(rs.front(), res.front().distance, rs.back(), res.back().distance), 4.5);
  EXPECT_GE(slope(rs.front(), res.front().vector, rs.back(), res.back().vector), 2.5);
}
