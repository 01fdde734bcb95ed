#pragma once

#include "dhm/deck_group.h"
#include "dhm/geometry.h"

#include <array>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dhm {

struct FenchelNielsen {
  std::array<double, 3> lengths{2.0, 2.0, 2.0};
  std::array<double, 3> twists{0.0, 0.0, 0.0};
  int genus = 2;

  // "l1,l2,l3,t1,t2,t3"
  static FenchelNielsen parse(std::string_view text);
  std::string to_string() const;
  void validate() const;
  bool operator==(const FenchelNielsen&) const = default;
};

// Genus-2 surface group with generators a1, b1, a2, b2 (letters a, b, c, d)
// satisfying [a1,b1][a2,b2] = 1, conjugated so that the domain center is the
// hyperboloid origin.
class FuchsianGroup {
public:
  FuchsianGroup() = default;
  FuchsianGroup(std::array<Isometry, 4> generators, FenchelNielsen fn, std::array<Word, 3> pants_curves);
  static FuchsianGroup from_generators(std::array<Isometry, 4> generators);

  const DeckGroup& deck() const { return deck_; }
  const Isometry& generator(int k) const { return deck_.generators()[static_cast<std::size_t>(k)]; }
  const FenchelNielsen& fenchel_nielsen() const { return fn_; }
  // Words whose translation lengths are the three pants-curve lengths.
  const std::array<Word, 3>& pants_curves() const { return pants_curves_; }
  Isometry evaluate(const Word& w) const { return deck_.evaluate(w); }

private:
  DeckGroup deck_;
  FenchelNielsen fn_;
  std::array<Word, 3> pants_curves_;
};

struct GeodesicSegment {
  Point start;
  Point end;
};

// Side `partner` is mapped onto side `side` by `map`, with reversed orientation.
struct SidePairing {
  int side = 0;
  int partner = 0;
  Isometry map;
  Word word;
};

struct FundamentalDomain {
  Point center;
  std::vector<GeodesicSegment> boundary;  // counterclockwise; boundary[i].end == boundary[i+1].start
  std::vector<SidePairing> side_pairings; // one entry per side, indexed by side
  double area = 0;
  int word_length = 0;                    // longest candidate word used
};

struct GroupElement {
  Isometry element;
  Word word;
};

FuchsianGroup build_fuchsian_group(const FenchelNielsen& fn);
// Dirichlet domain about the origin, from candidate elements of increasing word length.
FundamentalDomain dirichlet_domain(const FuchsianGroup& group, int max_word_length = 8);
std::pair<FuchsianGroup, FundamentalDomain> build_group(const FenchelNielsen& fn);

// Returns (q, g) with q in the closed domain and g.q = p.
std::pair<Point, GroupElement> reduce_to_domain(const FuchsianGroup& group, const FundamentalDomain& domain,
                                                const Point& p);
std::vector<GroupElement> enumerate_group(const FuchsianGroup& group, int max_word_length);
double relator_residual(const FuchsianGroup& group);
// True when no nontrivial reduced word up to the given length is within tol of the identity.
bool discreteness_check(const FuchsianGroup& group, int max_word_length = 6, double tol = 1e-6);
bool domain_contains(const FundamentalDomain& domain, const Point& p, double tol = 1e-12);

void write_group(std::ostream& out, const FuchsianGroup& group);
FuchsianGroup read_group(std::istream& in);

} // namespace dhm
