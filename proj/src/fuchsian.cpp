#include "dhm/fuchsian.h"

#include "dhm/errors.h"
#include "dhm/format.h"

#include <quadmath.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

namespace dhm {

namespace {

using Vec3L = Eigen::Matrix<long double, 3, 1>;

const Geometry& hyp() {
  static const Geometry g(GeometryKind::Hyperbolic);
  return g;
}



QuadMatrix3 quad_boost(quad t) {
  QuadMatrix3 m = QuadMatrix3::identity();
  m(0, 0) = m(2, 2) = coshq(t);
  m(0, 2) = m(2, 0) = sinhq(t);
  return m;
}

QuadMatrix3 quad_quarter_turn() {
  QuadMatrix3 m = QuadMatrix3::identity();
  m(0, 0) = m(1, 1) = 0;
  m(0, 1) = -1;
  m(1, 0) = 1;
  return m;
}

QuadMatrix3 quad_boost_to(const Point& p) {
  const quad x = p.coords.x(), y = p.coords.y();
  const quad z = sqrtq(1 + x * x + y * y);
  QuadMatrix3 m;
  m(0, 0) = 1 + x * x / (1 + z);
  m(0, 1) = m(1, 0) = x * y / (1 + z);
  m(1, 1) = 1 + y * y / (1 + z);
  m(0, 2) = m(2, 0) = x;
  m(1, 2) = m(2, 1) = y;
  m(2, 2) = z;
  return m;
}

// Side of a right-angled hexagon opposite the side of length x, the other two
// alternate sides having lengths y and z.
quad opposite_side(quad x, quad y, quad z) {
  const quad c = (coshq(y) * coshq(z) + coshq(x)) / (sinhq(y) * sinhq(z));
  if (!(c >= 1) || !finiteq(c)) throw NumericError("hexagon construction: invalid side length");
  return acoshq(c);
}

const char* kGeneratorNames[4] = {"a1", "b1", "a2", "b2"};

long double minkowski(const Vec3L& u, const Vec3L& v) { return u.x() * v.x() + u.y() * v.y() - u.z() * v.z(); }

Vec3L origin_l() { return Vec3L(0, 0, 1); }

long double relative_distance(const Isometry& g, const Isometry& h) {
  const long double scale = std::max<long double>(1, g.matrix().cwiseAbs().maxCoeff());
  return g.distance_to(h) / scale;
}

// Depth-first walk over freely reduced words up to the given length.
void for_each_reduced_word(const DeckGroup& deck, int max_len,
                           const std::function<void(const Isometry&, const std::vector<int>&)>& visit) {
  std::vector<int> letters;
  const int rank = static_cast<int>(deck.rank());
  std::function<void(const Isometry&)> rec = [&](const Isometry& g) {
    visit(g, letters);
    if (static_cast<int>(letters.size()) == max_len) return;
    for (int k = 1; k <= rank; ++k) {
      for (int l : {k, -k}) {
        if (!letters.empty() && letters.back() == -l) continue;
        letters.push_back(l);
        rec(g * deck.letter(l));
        letters.pop_back();
      }
    }
  };
  rec(Isometry::identity(deck.kind()));
}

struct KleinPolygon {
  std::vector<Eigen::Matrix<long double, 2, 1>> verts;
  std::vector<int> labels; // labels[i]: candidate index of the edge verts[i] -> verts[i+1]
};

struct Candidate {
  Isometry element;
  Word word;
  long double distance;
  Vec3L normal; // g.o - o
};

void clip(KleinPolygon& poly, const Candidate& c, int label) {
  // Keep nx * x + ny * y <= nz.
  const long double nx = c.normal.x(), ny = c.normal.y(), nz = c.normal.z();
  const std::size_t n = poly.verts.size();
  std::vector<long double> val(n);
  long double worst = -std::numeric_limits<long double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    val[i] = nx * poly.verts[i].x() + ny * poly.verts[i].y() - nz;
    worst = std::max(worst, val[i]);
  }
  if (worst <= 0) return;
  KleinPolygon out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const auto& p = poly.verts[i];
    const auto& q = poly.verts[j];
    if (val[i] <= 0) {
      out.verts.push_back(p);
      out.labels.push_back(poly.labels[i]);
      if (val[j] > 0) {
        const long double t = val[i] / (val[i] - val[j]);
        out.verts.push_back(p + t * (q - p));
        out.labels.push_back(label);
      }
    } else if (val[j] <= 0) {
      const long double t = val[i] / (val[i] - val[j]);
      out.verts.push_back(p + t * (q - p));
      out.labels.push_back(poly.labels[i]);
    }
  }
  poly = std::move(out);
}

Point klein_to_point(const Eigen::Matrix<long double, 2, 1>& k) {
  const long double s = 1 - k.squaredNorm();
  if (!(s > 0)) return Point{Vec3(std::nan(""), std::nan(""), std::nan(""))};
  const long double f = 1 / std::sqrt(s);
  return hyp().normalize(Point{Vec3(static_cast<double>(k.x() * f), static_cast<double>(k.y() * f), 1.0)});
}

// Tries to assemble a Dirichlet domain from the candidate set; returns false if
// the candidates do not yet determine a fundamental domain.
bool assemble_domain(const std::vector<Candidate>& cands, FundamentalDomain& out, long double& radius) {
  KleinPolygon poly;
  poly.verts = {{-2, -2}, {2, -2}, {2, 2}, {-2, 2}};
  poly.labels = {-1, -1, -1, -1};
  for (std::size_t i = 0; i < cands.size(); ++i) clip(poly, cands[i], static_cast<int>(i));
  radius = 0;
  for (const auto& v : poly.verts) {
    if (v.squaredNorm() >= 1) {
      radius = std::numeric_limits<long double>::infinity();
      break;
    }
    radius = std::max<long double>(radius, std::atanh(v.norm()));
  }

  // Drop zero-length edges left by bisectors through a common vertex.
  std::vector<Point> pts;
  std::vector<int> labels;
  for (std::size_t i = 0; i < poly.verts.size(); ++i) {
    if (poly.verts[i].squaredNorm() >= 1) return false;
    const Point p = klein_to_point(poly.verts[i]);
    if (!pts.empty() && hyp().distance(pts.back(), p) < 1e-9) {
      labels.back() = poly.labels[i];
      continue;
    }
    pts.push_back(p);
    labels.push_back(poly.labels[i]);
  }
  while (pts.size() > 1 && hyp().distance(pts.back(), pts.front()) < 1e-9) {
    pts.pop_back();
    labels.pop_back();
  }
  const std::size_t n = pts.size();
  if (n < 3) return false;
  for (int l : labels)
    if (l < 0) return false;

  FundamentalDomain dom;
  dom.center = hyp().origin();
  for (std::size_t i = 0; i < n; ++i) dom.boundary.push_back({pts[i], pts[(i + 1) % n]});
  for (std::size_t i = 0; i < n; ++i) {
    const Candidate& ci = cands[static_cast<std::size_t>(labels[i])];
    const Isometry inv = ci.element.inverse();
    int partner = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (relative_distance(cands[static_cast<std::size_t>(labels[j])].element, inv) < 1e-8) partner = static_cast<int>(j);
    if (partner < 0) return false;
    const auto& sj = dom.boundary[static_cast<std::size_t>(partner)];
    const auto& si = dom.boundary[i];
    if (hyp().distance(hyp().apply_isometry(ci.element, sj.start), si.end) > 1e-8 ||
        hyp().distance(hyp().apply_isometry(ci.element, sj.end), si.start) > 1e-8)
      return false;
    dom.side_pairings.push_back({static_cast<int>(i), partner, ci.element, ci.word});
  }
  double area = 0;
  for (const auto& s : dom.boundary) area += hyp().triangle_area(dom.center, s.start, s.end);
  dom.area = area;
  if (std::abs(area - 4 * std::numbers::pi) > 1e-6) return false;
  out = std::move(dom);
  return true;
}

} // namespace

// === FenchelNielsen

FenchelNielsen FenchelNielsen::parse(std::string_view text) {
  const auto v = parse_real_list(text, ',');
  if (v.size() != 6) throw DomainError("Fenchel-Nielsen coordinates need six values l1,l2,l3,t1,t2,t3");
  FenchelNielsen fn;
  for (int i = 0; i < 3; ++i) {
    fn.lengths[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i)];
    fn.twists[static_cast<std::size_t>(i)] = v[static_cast<std::size_t>(i + 3)];
  }
  fn.validate();
  return fn;
}

std::string FenchelNielsen::to_string() const {
  return format_reals({lengths[0], lengths[1], lengths[2], twists[0], twists[1], twists[2]});
}

void FenchelNielsen::validate() const {
  if (genus != 2) throw DomainError("only genus 2 surfaces are supported");
  for (double l : lengths)
    if (!(l > 0) || !std::isfinite(l)) throw DomainError("Fenchel-Nielsen lengths must be positive and finite");
  for (double t : twists)
    if (!std::isfinite(t)) throw DomainError("Fenchel-Nielsen twists must be finite");
}

// === Group

FuchsianGroup::FuchsianGroup(std::array<Isometry, 4> generators, FenchelNielsen fn, std::array<Word, 3> pants_curves)
    : deck_(GeometryKind::Hyperbolic, {generators.begin(), generators.end()}), fn_(fn),
      pants_curves_(std::move(pants_curves)) {}

FuchsianGroup FuchsianGroup::from_generators(std::array<Isometry, 4> generators) {
  for (const auto& g : generators)
    if (g.kind() != GeometryKind::Hyperbolic) throw DomainError("Fuchsian generators must be hyperbolic isometries");
  return FuchsianGroup(generators, FenchelNielsen{}, {Word::parse("Da"), Word::parse("d"), Word::parse("A")});
}

FuchsianGroup build_fuchsian_group(const FenchelNielsen& fn) {
  fn.validate();
  const quad half[3] = {quad(fn.lengths[0]) / 2, quad(fn.lengths[1]) / 2, quad(fn.lengths[2]) / 2};
  // Right-angled hexagon, sides in order: b1 (l1/2), s3, b2 (l2/2), s1, b3 (l3/2), s2.
  const quad s1 = opposite_side(half[0], half[1], half[2]);
  const quad s2 = opposite_side(half[1], half[2], half[0]);
  const quad s3 = opposite_side(half[2], half[0], half[1]);
  const quad sides[6] = {half[0], s3, half[1], s1, half[2], s2};

  std::array<QuadMatrix3, 6> frames;
  QuadMatrix3 f = QuadMatrix3::identity();
  for (int k = 0; k < 6; ++k) {
    frames[static_cast<std::size_t>(k)] = f;
    f = f * quad_boost(sides[k]) * quad_quarter_turn();
  }
  if ((f - QuadMatrix3::identity()).max_abs() > 1e-25Q) throw NumericError("hexagon construction does not close");

  QuadMatrix3 flip = QuadMatrix3::identity();
  flip(1, 1) = -1;
  auto conj = [&](int k, const QuadMatrix3& m) {
    const QuadMatrix3& fr = frames[static_cast<std::size_t>(k)];
    return fr * m * fr.lorentz_inverse();
  };
  const QuadMatrix3 rb1 = conj(0, flip), rs3 = conj(1, flip), rb2 = conj(2, flip), rs1 = conj(3, flip),
                    rb3 = conj(4, flip), rs2 = conj(5, flip);

  // Pants-curve translations along b1, b2, b3 with c3 c2 c1 = 1.
  const QuadMatrix3 c1 = rs3 * rs2, c2 = rs1 * rs3, c3 = rs2 * rs1;

  // Translation by tau along the axis of c, in the direction c translates.
  auto along = [&](int side, double tau, const QuadMatrix3& c, double len) {
    const quad fwd = (conj(side, quad_boost(len)) - c).max_abs();
    const quad bwd = (conj(side, quad_boost(-quad(len))) - c).max_abs();
    return conj(side, quad_boost(fwd < bwd ? quad(tau) : -quad(tau)));
  };
  const QuadMatrix3 t1 = along(0, fn.twists[0], c1, fn.lengths[0]);
  const QuadMatrix3 t2 = along(2, fn.twists[1], c2, fn.lengths[1]);
  const QuadMatrix3 t3 = along(4, fn.twists[2], c3, fn.lengths[2]);

  // Second pants glued along b1 (amalgam) and along b2, b3 (stable letters).
  const QuadMatrix3 stable2 = t1 * rb1 * rb2 * t2;
  const QuadMatrix3 stable3 = t1 * rb1 * rb3 * t3;

  const std::array<QuadMatrix3, 4> gens = {c2 * c1, stable3, stable2, c2};

  // Center on the barycenter of the hexagon vertices.
  std::vector<Point> corners;
  for (const auto& fr : frames)
    corners.push_back(hyp().normalize(Point{Vec3(static_cast<double>(fr(0, 2)), static_cast<double>(fr(1, 2)), 1.0)}));
  const std::vector<double> w(6, 1.0);
  const QuadMatrix3 b = quad_boost_to(hyp().weighted_barycenter(corners, w));
  const QuadMatrix3 binv = b.lorentz_inverse();

  std::array<Isometry, 4> out;
  for (std::size_t k = 0; k < 4; ++k) out[k] = Isometry(GeometryKind::Hyperbolic, binv * gens[k] * b);
  // c1 = b2^-1 a1, c2 = b2, c3 = a1^-1.
  return FuchsianGroup(out, fn, {Word::parse("Da"), Word::parse("d"), Word::parse("A")});
}

FundamentalDomain dirichlet_domain(const FuchsianGroup& group, int max_word_length) {
  if (max_word_length < 1) throw DomainError("dirichlet_domain: word length must be positive");
  const Vec3L o = origin_l();
  long double radius_bound = std::numeric_limits<long double>::infinity();
  for (int len = std::min(4, max_word_length); len <= max_word_length; ++len) {
    std::vector<Candidate> cands;
    for_each_reduced_word(group.deck(), len, [&](const Isometry& g, const std::vector<int>& letters) {
      if (letters.empty()) return;
      const Vec3L go = g.matrix() * o;
      const long double d = std::acosh(std::max<long double>(1, go.z()));
      if (d > 2 * radius_bound + 1e-6L) return;
      cands.push_back({g, Word::from_letters(letters), d, go - o});
    });
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
    // Elements with equal matrices but different words produce the same bisector.
    std::vector<Candidate> unique;
    for (auto& c : cands) {
      bool dup = false;
      for (auto it = unique.rbegin(); it != unique.rend() && it->distance > c.distance - 1e-9L; ++it)
        if (relative_distance(it->element, c.element) < 1e-8) {
          dup = true;
          break;
        }
      if (!dup) unique.push_back(std::move(c));
    }
    FundamentalDomain dom;
    long double radius = 0;
    if (assemble_domain(unique, dom, radius)) {
      dom.word_length = len;
      return dom;
    }
    // A partial polygon contains the true domain, so its radius bounds the relevant displacements.
    radius_bound = std::min(radius_bound, radius);
  }
  throw NumericError("dirichlet_domain: no fundamental domain from words up to length " + std::to_string(max_word_length));
}

std::pair<FuchsianGroup, FundamentalDomain> build_group(const FenchelNielsen& fn) {
  FuchsianGroup g = build_fuchsian_group(fn);
  FundamentalDomain d = dirichlet_domain(g);
  return {std::move(g), std::move(d)};
}

bool domain_contains(const FundamentalDomain& domain, const Point& p, double tol) {
  const Vec3 o = domain.center.coords;
  const double base = -(p.coords.x() * o.x() + p.coords.y() * o.y() - p.coords.z() * o.z());
  for (const auto& sp : domain.side_pairings) {
    const Vec3 go = hyp().apply_isometry(sp.map, domain.center).coords;
    const double other = -(p.coords.x() * go.x() + p.coords.y() * go.y() - p.coords.z() * go.z());
    if (other < base - tol * base) return false;
  }
  return true;
}

std::pair<Point, GroupElement> reduce_to_domain(const FuchsianGroup& group, const FundamentalDomain& domain,
                                                const Point& p) {
  if (!hyp().is_valid_point(p, 1e-6)) throw DomainError("reduce_to_domain: not a hyperbolic point");
  if (domain.side_pairings.empty()) throw DomainError("reduce_to_domain: empty domain");
  std::vector<Vec3L> centers;
  for (const auto& sp : domain.side_pairings) centers.push_back(sp.map.matrix() * domain.center.coords.cast<long double>());
  const Vec3L o = domain.center.coords.cast<long double>();

  Vec3L q = p.coords.cast<long double>();
  Isometry acc = Isometry::identity(GeometryKind::Hyperbolic);
  Word word;
  const double budget = 10 * hyp().distance(domain.center, p) + 20;
  for (int step = 0;; ++step) {
    const long double here = -minkowski(q, o);
    long double best = here;
    int arg = -1;
    for (std::size_t i = 0; i < centers.size(); ++i) {
      const long double c = -minkowski(q, centers[i]);
      if (c < best) {
        best = c;
        arg = static_cast<int>(i);
      }
    }
    if (arg < 0 || best >= here * (1 - 1e-15L)) break;
    if (step >= budget) throw NumericError("reduce_to_domain: step budget exhausted");
    const auto& sp = domain.side_pairings[static_cast<std::size_t>(arg)];
    q = sp.map.inverse().matrix() * q;
    q.z() = std::sqrt(1 + q.x() * q.x() + q.y() * q.y());
    acc = acc * sp.map;
    word = word * sp.word;
  }
  (void)group;
  const Point out = hyp().normalize(Point{q.cast<double>()});
  return {out, GroupElement{acc, word}};
}

std::vector<GroupElement> enumerate_group(const FuchsianGroup& group, int max_word_length) {
  if (max_word_length < 0) throw DomainError("enumerate_group: negative word length");
  std::vector<GroupElement> all;
  for_each_reduced_word(group.deck(), max_word_length, [&](const Isometry& g, const std::vector<int>& letters) {
    all.push_back({g, Word::from_letters(letters)});
  });
  // Equal elements move the origin to the same point; sweep in order of displacement.
  const Vec3L o = origin_l();
  std::vector<std::pair<long double, std::size_t>> order;
  for (std::size_t i = 0; i < all.size(); ++i) order.push_back({(all[i].element.matrix() * o).z(), i});
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<GroupElement> out;
  std::vector<long double> keys;
  for (const auto& [z, i] : order) {
    bool dup = false;
    for (std::size_t j = out.size(); j-- > 0 && keys[j] >= z - 1e-8L * z;)
      if (relative_distance(out[j].element, all[i].element) < 1e-8) {
        dup = true;
        break;
      }
    if (!dup) {
      out.push_back(all[i]);
      keys.push_back(z);
    }
  }
  return out;
}

double relator_residual(const FuchsianGroup& group) {
  const auto commutator = [](const Isometry& a, const Isometry& b) { return a * b * a.inverse() * b.inverse(); };
  const Isometry r = commutator(group.generator(0), group.generator(1)) * commutator(group.generator(2), group.generator(3));
  const Eigen::Matrix3d diff = (r.exact() - QuadMatrix3::identity()).to_long_double().cast<double>();
  return Eigen::JacobiSVD<Eigen::Matrix3d>(diff).singularValues()(0);
}

bool discreteness_check(const FuchsianGroup& group, int max_word_length, double tol) {
  bool ok = true;
  for_each_reduced_word(group.deck(), max_word_length, [&](const Isometry& g, const std::vector<int>& letters) {
    if (ok && !letters.empty() && g.is_identity(tol)) ok = false;
  });
  return ok;
}

// === Export

void write_group(std::ostream& out, const FuchsianGroup& group) {
  out << "# dhm group v1\n";
  out << "genus " << group.fenchel_nielsen().genus << "\n";
  out << "fenchel_nielsen " << group.fenchel_nielsen().to_string() << "\n";
  for (int k = 0; k < 4; ++k) {
    out << "generator " << kGeneratorNames[k];
    const Mat3L& m = group.generator(k).matrix();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out << ' ' << format_real(static_cast<double>(m(i, j)));
    out << '\n';
  }
}

FuchsianGroup read_group(std::istream& in) {
  std::string line;
  std::array<Isometry, 4> gens;
  std::array<bool, 4> seen{};
  FenchelNielsen fn;
  while (std::getline(in, line)) {
    const auto tok = split_whitespace(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    if (tok[0] == "genus") {
      if (tok.size() != 2 || parse_integer(tok[1]) != 2) throw DomainError("group file: only genus 2 is supported");
    } else if (tok[0] == "fenchel_nielsen") {
      if (tok.size() != 2) throw DomainError("group file: malformed fenchel_nielsen line");
      fn = FenchelNielsen::parse(tok[1]);
    } else if (tok[0] == "generator") {
      if (tok.size() != 11) throw DomainError("group file: generator needs a name and nine entries");
      const auto* it = std::find(std::begin(kGeneratorNames), std::end(kGeneratorNames), tok[1]);
      if (it == std::end(kGeneratorNames)) throw DomainError("group file: unknown generator " + tok[1]);
      const auto k = static_cast<std::size_t>(it - std::begin(kGeneratorNames));
      Mat3L m;
      for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = parse_real(tok[static_cast<std::size_t>(2 + i)]);
      gens[k] = Isometry(GeometryKind::Hyperbolic, m);
      seen[k] = true;
    } else {
      throw DomainError("group file: unknown record '" + tok[0] + "'");
    }
  }
  for (bool s : seen)
    if (!s) throw DomainError("group file: missing generator");
  return FuchsianGroup(gens, fn, {Word::parse("Da"), Word::parse("d"), Word::parse("A")});
}

} // namespace dhm
