#include "dhm/errors.h"
#include "dhm/fuchsian.h"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace dhm;

namespace {

const Geometry kHyp(GeometryKind::Hyperbolic);

std::vector<FenchelNielsen> sweep() {
  std::vector<FenchelNielsen> out;
  std::mt19937_64 rng(20);
  std::uniform_real_distribution<double> len(0.6, 4.0), tw(-1.5, 1.5);
  out.push_back(FenchelNielsen{{2, 2, 2}, {0, 0, 0}});
  out.push_back(FenchelNielsen{{3, 3, 3}, {1, 1, 1}});
  while (out.size() < 20) out.push_back(FenchelNielsen{{len(rng), len(rng), len(rng)}, {tw(rng), tw(rng), tw(rng)}});
  return out;
}

Point random_point(std::mt19937_64& rng, double rmax) {
  std::uniform_real_distribution<double> u(0, 1);
  const double r = rmax * std::sqrt(u(rng)), t = 2 * std::numbers::pi * u(rng);
  return kHyp.exp_map(kHyp.origin(), Vec3(r * std::cos(t), r * std::sin(t), 0));
}

double trace(const Isometry& g) { return static_cast<double>(g.matrix().trace()); }

} // namespace

TEST(FenchelNielsenInput, ParsesAndValidates) {
  const FenchelNielsen fn = FenchelNielsen::parse("2,2.5,3,0,0.25,-1");
  EXPECT_EQ(fn.lengths[1], 2.5);
  EXPECT_EQ(fn.twists[2], -1);
  EXPECT_EQ(FenchelNielsen::parse(fn.to_string()), fn);
  EXPECT_THROW(FenchelNielsen::parse("1,2,3"), DomainError);
  EXPECT_THROW(FenchelNielsen::parse("1,2,x,0,0,0"), DomainError);
  EXPECT_THROW(build_fuchsian_group(FenchelNielsen{{2, 0, 2}, {0, 0, 0}}), DomainError);
  EXPECT_THROW(build_fuchsian_group(FenchelNielsen{{2, -1, 2}, {0, 0, 0}}), DomainError);
  FenchelNielsen g3;
  g3.genus = 3;
  EXPECT_THROW(build_fuchsian_group(g3), DomainError);
}

TEST(FuchsianExamples, RelatorFixesRandomPoint) {
  const FuchsianGroup g = build_fuchsian_group(FenchelNielsen{{1.3, 2.2, 0.9}, {0.4, -0.2, 0.7}});
  const Isometry r = g.evaluate(Word::parse("abABcdCD"));
  const Point p = kHyp.from_plane(0.3, 0.8);
  EXPECT_LT(kHyp.distance(kHyp.apply_isometry(r, p), p), 1e-8);
}

TEST(FuchsianExamples, SymmetricPantsCurveLength) {
  const FuchsianGroup g = build_fuchsian_group(FenchelNielsen{{2, 2, 2}, {0, 0, 0}});
  for (const Word& w : g.pants_curves()) {
    const Mat3L m = g.evaluate(w).matrix();
    // SL(2,R) trace t relates to the SO(2,1) trace by t^2 = tr + 1.
    const double sl2_trace = std::sqrt(static_cast<double>(m.trace()) + 1);
    EXPECT_NEAR(2 * std::acosh(sl2_trace / 2), 2.0, 1e-6);
  }
}

TEST(FuchsianExamples, FullTwistGivesSameTraceSet) {
  const FenchelNielsen base{{1.7, 2.3, 2.9}, {0.3, -0.4, 0.5}};
  for (int i = 0; i < 3; ++i) {
    FenchelNielsen twisted = base;
    twisted.twists[i] += twisted.lengths[i];
    const auto [g1, d1] = build_group(base);
    const auto [g2, d2] = build_group(twisted);
    // Every element of length <= 4 in one group is an element of the other with the same trace.
    for (const auto& [src, dst, dom] : {std::tuple{&g1, &g2, &d2}, std::tuple{&g2, &g1, &d1}}) {
      for (const GroupElement& e : enumerate_group(*src, 4)) {
        const Point p = kHyp.apply_isometry(e.element, kHyp.origin());
        const auto [q, h] = reduce_to_domain(*dst, *dom, p);
        ASSERT_LT(kHyp.distance(q, kHyp.origin()), 1e-6) << e.word.to_string();
        EXPECT_NEAR(trace(h.element), trace(e.element), 1e-6 * std::max(1.0, std::abs(trace(e.element))));
      }
    }
  }
}

TEST(FuchsianExamples, ReduceInteriorPointIsIdentity) {
  const auto [g, d] = build_group(FenchelNielsen{{2, 2, 2}, {0.5, 0, 0}});
  const Point p = kHyp.from_plane(0.05, -0.1);
  const auto [q, h] = reduce_to_domain(g, d, p);
  EXPECT_LT(kHyp.distance(q, p), 1e-12);
  EXPECT_TRUE(h.element.is_identity(1e-12));
  EXPECT_TRUE(h.word.empty());
}

TEST(FuchsianExamples, ReduceGeneratorImage) {
  const auto [g, d] = build_group(FenchelNielsen{{1.5, 2.5, 2.0}, {0.1, 0.2, 0.3}});
  const Point q = kHyp.from_plane(0.1, 0.05);
  ASSERT_TRUE(domain_contains(d, q));
  const Point p = kHyp.apply_isometry(g.generator(0), q);
  const auto [r, h] = reduce_to_domain(g, d, p);
  EXPECT_LT(kHyp.distance(r, q), 1e-8);
  EXPECT_LT(h.element.distance_to(g.generator(0)), 1e-8);
}

TEST(FuchsianExamples, ReduceRandomPoints) {
  const auto [g, d] = build_group(FenchelNielsen{{2, 2, 2}, {0, 0, 0}});
  std::mt19937_64 rng(31);
  for (int i = 0; i < 1000; ++i) {
    const Point p = random_point(rng, 5);
    const auto [q, h] = reduce_to_domain(g, d, p);
    EXPECT_TRUE(domain_contains(d, q, 1e-9));
    EXPECT_LT(kHyp.distance(kHyp.apply_isometry(h.element, q), p), 1e-8);
    EXPECT_LT(h.element.distance_to(g.evaluate(h.word)), 1e-8 * std::max<long double>(1, h.element.matrix().cwiseAbs().maxCoeff()));
  }
}

TEST(FuchsianExamples, EnumerateCounts) {
  const FuchsianGroup g = build_fuchsian_group(FenchelNielsen{});
  const auto e0 = enumerate_group(g, 0);
  ASSERT_EQ(e0.size(), 1u);
  EXPECT_TRUE(e0[0].element.is_identity(0));
  EXPECT_EQ(enumerate_group(g, 1).size(), 9u);
  const auto e2 = enumerate_group(g, 2);
  const auto e3 = enumerate_group(g, 3);
  EXPECT_GT(e2.size(), 9u);
  EXPECT_GT(e3.size(), e2.size());
  for (std::size_t i = 0; i < e3.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      const long double scale = std::max(e3[i].element.matrix().cwiseAbs().maxCoeff(), e3[j].element.matrix().cwiseAbs().maxCoeff());
      EXPECT_GT(e3[i].element.distance_to(e3[j].element), 1e-8L * scale);
    }
  for (const GroupElement& e : e3) EXPECT_LT(e.element.distance_to(g.evaluate(e.word)), 1e-10);
}

TEST(FuchsianExamples, PerturbedRelator) {
  const FuchsianGroup g = build_fuchsian_group(FenchelNielsen{{1.8, 2.1, 2.4}, {0, 0.3, 0}});
  std::array<Isometry, 4> gens{g.generator(0), g.generator(1), g.generator(2), g.generator(3)};
  Mat3L m = gens[1].matrix();
  m(0, 1) += 1e-3L;
  gens[1] = Isometry(GeometryKind::Hyperbolic, m);
  EXPECT_GE(relator_residual(FuchsianGroup::from_generators(gens)), 1e-4);
}

TEST(FuchsianExamples, IdentityGeneratorsAreNotDiscrete) {
  const Isometry id = Isometry::identity(GeometryKind::Hyperbolic);
  const FuchsianGroup g = FuchsianGroup::from_generators({id, id, id, id});
  EXPECT_EQ(relator_residual(g), 0);
  EXPECT_FALSE(discreteness_check(g));
}

TEST(FuchsianProperties, SweepRelatorLengthsAndArea) {
  for (const FenchelNielsen& fn : sweep()) {
    SCOPED_TRACE(fn.to_string());
    const auto [g, d] = build_group(fn);
    EXPECT_LE(relator_residual(g), 1e-8);
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(g.evaluate(g.pants_curves()[i]).translation_length(), fn.lengths[i], 1e-6);
    EXPECT_NEAR(d.area, 4 * std::numbers::pi, 1e-6);
    for (const GeodesicSegment& s : d.boundary) {
      EXPECT_TRUE(kHyp.is_valid_point(s.start, 1e-10));
      EXPECT_GT(kHyp.distance(s.start, s.end), 0);
    }
  }
}

TEST(FuchsianProperties, SidePairingsMatchSides) {
  for (const FenchelNielsen& fn : sweep()) {
    SCOPED_TRACE(fn.to_string());
    const auto [g, d] = build_group(fn);
    ASSERT_EQ(d.side_pairings.size(), d.boundary.size());
    for (const SidePairing& sp : d.side_pairings) {
      const GeodesicSegment& src = d.boundary[static_cast<std::size_t>(sp.partner)];
      const GeodesicSegment& dst = d.boundary[static_cast<std::size_t>(sp.side)];
      EXPECT_LT(kHyp.distance(kHyp.apply_isometry(sp.map, src.start), dst.end), 1e-8);
      EXPECT_LT(kHyp.distance(kHyp.apply_isometry(sp.map, src.end), dst.start), 1e-8);
      EXPECT_LT(sp.map.distance_to(g.evaluate(sp.word)), 1e-8 * std::max<long double>(1, sp.map.matrix().cwiseAbs().maxCoeff()));
      EXPECT_EQ(d.side_pairings[static_cast<std::size_t>(sp.partner)].partner, sp.side);
    }
  }
}

TEST(FuchsianProperties, Discrete) {
  const FuchsianGroup g = build_fuchsian_group(FenchelNielsen{{2.2, 1.9, 2.6}, {0.2, 0.1, -0.3}});
  EXPECT_TRUE(discreteness_check(g, 6, 1e-6));
}

TEST(FuchsianProperties, ReductionIsEquivariant) {
  const auto [g, d] = build_group(FenchelNielsen{{1.6, 2.4, 2.0}, {0.2, -0.5, 0.1}});
  std::mt19937_64 rng(41);
  for (int i = 0; i < 100; ++i) {
    const Point p = random_point(rng, 3);
    const Point q = reduce_to_domain(g, d, p).first;
    for (int k = 0; k < 4; ++k)
      for (bool inv : {false, true}) {
        const Isometry h = inv ? g.generator(k).inverse() : g.generator(k);
        const Point q2 = reduce_to_domain(g, d, kHyp.apply_isometry(h, p)).first;
        // Points on the boundary have several representatives; compare only interior ones.
        if (!domain_contains(d, q, -1e-7)) continue;
        EXPECT_LT(kHyp.distance(q, q2), 1e-8);
      }
  }
}

TEST(FuchsianIo, GroupRoundTrip) {
  const FuchsianGroup g = build_fuchsian_group(FenchelNielsen{{1.1, 2.2, 3.3}, {0.1, 0.2, 0.3}});
  std::stringstream ss;
  write_group(ss, g);
  const FuchsianGroup h = read_group(ss);
  EXPECT_EQ(h.fenchel_nielsen(), g.fenchel_nielsen());
  for (int k = 0; k < 4; ++k) EXPECT_LT(h.generator(k).distance_to(g.generator(k)), 1e-15 * std::max<long double>(1, g.generator(k).matrix().cwiseAbs().maxCoeff()));
  std::stringstream bad("# dhm group v1\ngenus 2\n");
  EXPECT_THROW(read_group(bad), DomainError);
}
