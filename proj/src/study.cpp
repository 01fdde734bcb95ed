#include "dhm/study.h"

#include "dhm/format.h"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>

namespace dhm {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

} // namespace

// === Slope fits

SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw DomainError("fit_slope: at least three points are required");
  SlopeFit fit;
  std::vector<double> lx, ly;
  for (const auto& [r, v] : points) {
    if (!(r > 0) || !std::isfinite(r)) throw DomainError("fit_slope: r must be positive");
    if (!(v >= 0) || !std::isfinite(v)) throw DomainError("fit_slope: values must be finite and nonnegative");
    if (v == 0) {
      ++fit.zeros;
      continue;
    }
    lx.push_back(std::log(r));
    ly.push_back(std::log(v));
  }
  fit.points = static_cast<int>(lx.size());
  if (lx.empty()) {
    fit.exact = true;
    fit.slope = std::numeric_limits<double>::infinity();
    fit.r2 = 1;
    return fit;
  }
  if (lx.size() < 2) throw DomainError("fit_slope: fewer than two nonzero values");
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0)) throw DomainError("fit_slope: all r values coincide");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double res = syy - fit.slope * sxy;
  fit.r2 = syy > 0 ? 1 - std::max(res, 0.0) / syy : 1.0;
  return fit;
}

// === Configuration

const char* to_string(TestMapKind kind) {
  switch (kind) {
  case TestMapKind::Identity: return "identity";
  case TestMapKind::Linear: return "linear";
  case TestMapKind::Sinusoid: return "sinusoid";
  case TestMapKind::FnPair: return "fn-pair";
  }
  return "identity";
}

TestMapKind parse_test_map(const std::string& name) {
  for (TestMapKind k : {TestMapKind::Identity, TestMapKind::Linear, TestMapKind::Sinusoid, TestMapKind::FnPair})
    if (name == to_string(k)) return k;
  throw DomainError("unknown test map '" + name + "'");
}

namespace {

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw DomainError("expected a boolean, got '" + s + "'");
}

double parse_auto(const std::string& s) { return s == "auto" ? 0.0 : parse_real(s); }

} // namespace

StudyConfig scan_study_config(std::istream& in, std::vector<ConfigIssue>& issues) {
  StudyConfig cfg;
  std::string line;
  int lineno = 0;
  bool have_surface = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string t = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      issues.push_back({lineno, "expected key = value"});
      continue;
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    try {
      if (key == "surface") {
        if (val == "torus") {
          cfg.surface.kind = GeometryKind::Euclidean;
        } else if (val == "genus2") {
          cfg.surface.kind = GeometryKind::Hyperbolic;
        } else {
          throw DomainError("unknown surface '" + val + "'");
        }
        have_surface = true;
      } else if (key == "torus") {
        const std::vector<double> v = parse_real_list(val);
        if (v.size() != 4) throw DomainError("torus needs a,b,shear,n");
        if (v[3] != std::floor(v[3])) throw DomainError("torus grid size must be an integer");
        cfg.surface.torus = TorusSpec{v[0], v[1], v[2], static_cast<int>(v[3])};
      } else if (key == "fn") {
        cfg.surface.fn = FenchelNielsen::parse(val);
      } else if (key == "base_mesh") {
        cfg.base_mesh = val;
      } else if (key == "levels") {
        cfg.levels = static_cast<int>(parse_integer(val));
      } else if (key == "first_level") {
        cfg.first_level = static_cast<int>(parse_integer(val));
      } else if (key == "test_map") {
        cfg.test_map = parse_test_map(val);
      } else if (key == "epsilon") {
        cfg.epsilon = parse_real(val);
      } else if (key == "linear") {
        const std::vector<double> v = parse_real_list(val);
        if (v.size() != 4) throw DomainError("linear needs four entries");
        std::copy(v.begin(), v.end(), cfg.linear.begin());
      } else if (key == "target_fn") {
        cfg.target_fn = FenchelNielsen::parse(val);
      } else if (key == "step") {
        cfg.step_size = parse_auto(val);
      } else if (key == "tension_tol") {
        cfg.tension_tol = parse_auto(val);
      } else if (key == "max_iterations") {
        cfg.max_iterations = parse_integer(val);
      } else if (key == "warm_start") {
        cfg.warm_start = parse_bool(val);
      } else if (key == "run_flows") {
        cfg.run_flows = parse_bool(val);
      } else if (key == "cfl_C") {
        cfg.cfl_C = parse_real(val);
      } else if (key == "cfl_c") {
        cfg.cfl_c = parse_real(val);
      } else if (key == "cfl_d") {
        cfg.cfl_d = parse_real(val);
      } else if (key == "double_limit") {
        cfg.double_limit = parse_bool(val);
      } else if (key == "timing") {
        cfg.timing = parse_bool(val);
      } else if (key == "csv") {
        cfg.csv = val;
      } else if (key == "json") {
        cfg.json = val;
      } else {
        throw DomainError("unknown key '" + key + "'");
      }
    } catch (const DomainError& e) {
      issues.push_back({lineno, e.what()});
    }
  }
  if (!have_surface) {
    issues.push_back({0, "missing 'surface'"});
  } else if (issues.empty()) {
    try {
      validate_study_config(cfg);
    } catch (const DomainError& e) {
      std::string msg = e.what();
      const std::string prefix = "study config: ";
      if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
      issues.push_back({0, msg});
    }
  }
  return cfg;
}

StudyConfig parse_study_config(std::istream& in) {
  std::vector<ConfigIssue> issues;
  StudyConfig cfg = scan_study_config(in, issues);
  if (issues.empty()) return cfg;
  const ConfigIssue& first = issues.front();
  if (first.line > 0) throw DomainError("study config line " + std::to_string(first.line) + ": " + first.message);
  throw DomainError("study config: " + first.message);
}

void validate_study_config(const StudyConfig& cfg) {
  if (cfg.first_level < 0 || cfg.levels < cfg.first_level + 2)
    throw DomainError("study config: at least three levels are needed for slope fits");
  if (cfg.levels > 8) throw DomainError("study config: levels above 8 are not supported");
  if (!(cfg.cfl_c >= 0 && cfg.cfl_c <= 1)) throw DomainError("study config: cfl_c must lie in [0, 1]");
  if (!(cfg.cfl_d >= 0)) throw DomainError("study config: cfl_d must be nonnegative");
  if (!(cfg.cfl_C >= 0)) throw DomainError("study config: cfl_C must be nonnegative");
  if (cfg.step_size < 0 || cfg.tension_tol < 0 || cfg.max_iterations < 0)
    throw DomainError("study config: flow parameters must be nonnegative");
  const bool flat = cfg.surface.kind == GeometryKind::Euclidean;
  if (flat && cfg.test_map == TestMapKind::FnPair) throw DomainError("study config: fn-pair needs surface = genus2");
  if (!flat && cfg.test_map != TestMapKind::FnPair && cfg.test_map != TestMapKind::Identity)
    throw DomainError("study config: genus2 studies use test_map = fn-pair or identity");
  if (flat && cfg.test_map == TestMapKind::Sinusoid && cfg.surface.torus.shear != 0)
    throw DomainError("study config: the sinusoid test map needs a rectangular torus");
  if (flat && cfg.test_map == TestMapKind::Linear &&
      cfg.linear[0] * cfg.linear[3] - cfg.linear[1] * cfg.linear[2] == 0)
    throw DomainError("study config: the linear map must be invertible");
  if (!flat) {
    cfg.surface.fn.validate();
    if (cfg.test_map == TestMapKind::FnPair) cfg.target_fn.validate();
  }
}

// === Test maps and functions

FlatTestMap flat_test_map(const StudyConfig& cfg) {
  if (cfg.surface.kind != GeometryKind::Euclidean) throw DomainError("flat_test_map: surface is not a torus");
  const TorusSpec& t = cfg.surface.torus;
  const double area = t.a * t.b;
  const DeckGroup domain_deck = torus_lattice(t.a, t.b, t.shear);
  FlatTestMap m;
  auto same = [](const Point& p) { return p; };
  switch (cfg.test_map) {
  case TestMapKind::Identity:
    m.value = same;
    m.harmonic = same;
    m.density = [](const Point&) { return 1.0; };
    m.tension = [](const Point&) { return Vec2(0, 0); };
    m.energy = area;
    m.target_deck = domain_deck;
    break;
  case TestMapKind::Linear: {
    const Eigen::Matrix2d A = Eigen::Map<const Eigen::Matrix<double, 2, 2, Eigen::RowMajor>>(cfg.linear.data());
    auto apply = [A](const Point& p) {
      const Vec2 q = A * Vec2(p.coords.x(), p.coords.y());
      return Point{Vec3(q.x(), q.y(), 0)};
    };
    m.value = apply;
    m.harmonic = apply;
    const double e = 0.5 * A.squaredNorm();
    m.density = [e](const Point&) { return e; };
    m.tension = [](const Point&) { return Vec2(0, 0); };
    m.energy = e * area;
    m.target_deck = DeckGroup(GeometryKind::Euclidean, {Isometry::translation(A * Vec2(t.a, 0)),
                                                        Isometry::translation(A * Vec2(t.shear, t.b))});
    break;
  }
  case TestMapKind::Sinusoid: {
    if (t.shear != 0) throw DomainError("sinusoid test map needs a rectangular torus");
    const double eps = cfg.epsilon, al = 2 * kPi / t.a, be = 2 * kPi / t.b;
    m.value = [=](const Point& p) {
      const double x = p.coords.x(), y = p.coords.y();
      return Point{Vec3(x + eps * std::sin(al * x) * std::sin(be * y), y, 0)};
    };
    m.harmonic = same;
    m.density = [=](const Point& p) {
      const double x = p.coords.x(), y = p.coords.y();
      const double fx = 1 + eps * al * std::cos(al * x) * std::sin(be * y);
      const double fy = eps * be * std::sin(al * x) * std::cos(be * y);
      return 0.5 * (fx * fx + fy * fy + 1);
    };
    m.tension = [=](const Point& p) {
      return Vec2(-eps * (al * al + be * be) * std::sin(al * p.coords.x()) * std::sin(be * p.coords.y()), 0);
    };
    m.energy = area * (1 + eps * eps * (al * al + be * be) / 8);
    m.target_deck = domain_deck;
    break;
  }
  case TestMapKind::FnPair:
    throw DomainError("flat_test_map: fn-pair is a genus-2 test map");
  }
  return m;
}

std::vector<TestFunction> flat_test_functions(const TorusSpec& torus) {
  const double area = torus.a * torus.b;
  auto st = [torus](const Point& p) {
    const double t = p.coords.y() / torus.b;
    return Vec2((p.coords.x() - torus.shear * t) / torus.a, t);
  };
  std::vector<TestFunction> fs;
  fs.push_back({"cos_s", [st](const Point& p) { return 1 + std::cos(2 * kPi * st(p).x()); }, area});
  fs.push_back({"sin2_t", [st](const Point& p) { return std::pow(std::sin(2 * kPi * st(p).y()), 2); }, area / 2});
  fs.push_back({"cos_s_plus_t", [st](const Point& p) { return 2 + std::cos(2 * kPi * (st(p).x() + st(p).y())); }, 2 * area});
  fs.push_back({"exp_sin_s", [st](const Point& p) { return std::exp(std::sin(2 * kPi * st(p).x())); },
                area * std::cyl_bessel_i(0.0, 1.0)});
  fs.push_back({"product", [st](const Point& p) {
                  const Vec2 q = st(p);
                  return std::pow(std::sin(2 * kPi * q.x()) * std::cos(2 * kPi * q.y()), 2);
                }, area / 4});
  return fs;
}

namespace {

double bump(double s, double R) {
  if (s >= R) return 0;
  const double u = 1 - (s / R) * (s / R);
  return u * u * u;
}

double bump_integral(double R) {
  const int n = 20000;
  const double h = R / n;
  double sum = 0;
  for (int i = 0; i <= n; ++i) {
    const double s = i * h;
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    sum += w * bump(s, R) * std::sinh(s);
  }
  return 2 * kPi * sum * h / 3;
}

} // namespace

std::vector<TestFunction> genus2_test_functions(const FuchsianGroup& group, const FundamentalDomain& domain) {
  const Geometry geom(GeometryKind::Hyperbolic);
  double reach = 0;
  for (const GeodesicSegment& s : domain.boundary) reach = std::max(reach, geom.distance(domain.center, s.start));
  struct Spec {
    double radius, angle, R;
  };
  const std::array<Spec, 5> specs{{{0.0, 0.0, 1.0}, {0.4, 0.3, 0.8}, {0.7, 2.1, 1.3}, {0.5, 3.9, 0.6}, {0.9, 5.2, 1.6}}};
  std::vector<TestFunction> fs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Spec sp = specs[i];
    const Point c = geom.from_disk(Vec2(std::tanh(sp.radius / 2) * std::cos(sp.angle), std::tanh(sp.radius / 2) * std::sin(sp.angle)));
    // Lifts of c that can come within R of a point of the closed domain.
    std::vector<Point> lifts;
    std::size_t previous = 0;
    for (int len = 2; len <= 7; ++len) {
      lifts.clear();
      for (const GroupElement& g : enumerate_group(group, len)) {
        const Point q = geom.apply_isometry(g.element, c);
        if (geom.distance(domain.center, q) < reach + sp.R + 1e-9) lifts.push_back(q);
      }
      if (len > 2 && lifts.size() == previous) break;
      previous = lifts.size();
    }
    auto value = [lifts, sp, group, domain, geom](const Point& x) {
      const Point q = reduce_to_domain(group, domain, x).first;
      double s = 0;
      for (const Point& l : lifts) s += bump(geom.distance(q, l), sp.R);
      return s;
    };
    fs.push_back({"bump" + std::to_string(i), value, bump_integral(sp.R)});
  }
  return fs;
}

std::vector<MeasureRow> measure_convergence(const std::vector<BiweightedMesh>& sequence,
                                            const std::vector<TestFunction>& functions) {
  std::vector<MeasureRow> rows;
  for (const BiweightedMesh& b : sequence) {
    const double r = quality_stats(b.mesh, false).mesh_size;
    for (const TestFunction& f : functions) {
      double s = 0;
      for (std::size_t x = 0; x < b.mesh.num_vertices(); ++x) s += b.vertex_weights[x] * f.value(b.mesh.vertices()[x]);
      rows.push_back({f.name, b.mesh.level(), r, std::abs(s - f.integral)});
    }
  }
  return rows;
}

// === Study

bool StudyResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const StudyCheck& c) { return !c.hard || c.pass; });
}

namespace {

struct Setup {
  std::vector<Triangulation> sequence; // levels 0..levels
  FuchsianGroup group;
  FundamentalDomain domain;
  DeckGroup target_deck;
  FlatTestMap flat;
  bool hyperbolic = false;
  bool numeric_reference = false; // hyperbolic fn-pair: the deepest minimizer is the reference
};

Setup make_setup(const StudyConfig& cfg) {
  validate_study_config(cfg);
  Setup s;
  s.hyperbolic = cfg.surface.kind == GeometryKind::Hyperbolic;
  s.numeric_reference = s.hyperbolic && cfg.test_map == TestMapKind::FnPair;
  Triangulation base;
  if (s.hyperbolic) {
    std::tie(s.group, s.domain) = build_group(cfg.surface.fn);
    s.target_deck = cfg.test_map == TestMapKind::FnPair ? build_fuchsian_group(cfg.target_fn).deck() : s.group.deck();
  } else {
    s.flat = flat_test_map(cfg);
    s.target_deck = s.flat.target_deck;
  }
  if (!cfg.base_mesh.empty()) {
    std::ifstream in(cfg.base_mesh);
    if (!in) throw DomainError("study: cannot open base mesh '" + cfg.base_mesh + "'");
    base = read_mesh(in);
    if (!(base.surface() == cfg.surface)) throw DomainError("study: base mesh surface does not match the config");
  } else if (s.hyperbolic) {
    base = build_genus2_mesh(s.group, s.domain);
  } else {
    base = build_torus_mesh(cfg.surface.torus);
  }
  s.sequence = refine_sequence(base, cfg.levels);
  return s;
}

double max_or_nan(const std::vector<double>& v) {
  return v.empty() ? kNaN : *std::max_element(v.begin(), v.end());
}

std::vector<std::pair<double, double>> series(const std::vector<StudyRow>& rows, double StudyRow::*field) {
  std::vector<std::pair<double, double>> out;
  for (const StudyRow& r : rows)
    if (std::isfinite(r.*field)) out.push_back({r.r, r.*field});
  return out;
}

void add_fit(StudyResult& res, const std::string& name, const std::vector<std::pair<double, double>>& pts) {
  if (pts.size() < 3) return;
  try {
    res.slopes.push_back({name, fit_slope(pts)});
  } catch (const DomainError&) {
    // Fewer than two nonzero values: exact once the finest value vanishes.
    SlopeFit f;
    f.zeros = static_cast<int>(std::count_if(pts.begin(), pts.end(), [](const auto& p) { return p.second == 0; }));
    f.points = static_cast<int>(pts.size()) - f.zeros;
    if (pts.back().second == 0) {
      f.exact = true;
      f.slope = std::numeric_limits<double>::infinity();
    }
    res.slopes.push_back({name, f});
  }
}

const SlopeFit* find_fit(const StudyResult& res, const std::string& name) {
  for (const auto& [n, f] : res.slopes)
    if (n == name) return &f;
  return nullptr;
}

void slope_check(StudyResult& res, const std::string& name, double threshold, bool hard) {
  const SlopeFit* f = find_fit(res, name);
  const double v = f ? f->slope : kNaN;
  res.checks.push_back({name + "_slope", v, ">= " + format_real(threshold), hard, f && (f->exact || v >= threshold)});
}

bool decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return v.size() >= 2;
}

} // namespace

StudyResult run_study(const StudyConfig& cfg, StudyMaps* maps) {
  const Setup setup = make_setup(cfg);
  const Geometry tg(setup.target_deck.kind());
  StudyResult res;
  std::vector<std::shared_ptr<const BiweightedMesh>> domains;
  std::vector<DiscreteMap> mins;
  std::vector<double> identity_gap;
  std::vector<BiweightedMesh> measured;

  for (int level = cfg.first_level; level <= cfg.levels; ++level) {
    auto b = std::make_shared<const BiweightedMesh>(make_biweighted(setup.sequence[static_cast<std::size_t>(level)]));
    domains.push_back(b);
    measured.push_back(*b);
    const Triangulation& mesh = b->mesh;
    StudyRow row;
    row.level = level;
    row.r = quality_stats(mesh, false).mesh_size;
    row.vertices = mesh.num_vertices();

    const DiscreteMap f = setup.hyperbolic ? vertex_position_map(b, setup.target_deck)
                                           : sampled_map(b, setup.target_deck, setup.flat.value);
    row.map_energy = energy(f);
    std::array<std::vector<double>, 3> tdef;
    std::vector<double> ddef;
    if (setup.hyperbolic) {
      const DiscreteMap id = identity_map(b);
      const auto tau = tension_field(id);
      const auto dens = energy_density(id);
      for (std::size_t x = 0; x < tau.size(); ++x) {
        const auto c = static_cast<std::size_t>(b->vertex_classes[x]);
        tdef[c].push_back(tg.norm(tau[x].vec));
        if (c == 0) ddef.push_back(std::abs(dens[x] - 1));
      }
      identity_gap.push_back(std::abs(energy(id) - 4 * kPi));
      row.reference_energy = setup.numeric_reference ? kNaN : 4 * kPi;
      row.energy_gap = setup.numeric_reference ? kNaN : identity_gap.back();
    } else {
      const auto tau = tension_field(f);
      const auto dens = energy_density(f);
      for (std::size_t x = 0; x < tau.size(); ++x) {
        const Point& p = mesh.vertices()[x];
        tdef[static_cast<std::size_t>(b->vertex_classes[x])].push_back((tau[x].vec.head<2>() - setup.flat.tension(p)).norm());
        ddef.push_back(std::abs(dens[x] - setup.flat.density(p)));
      }
      row.reference_energy = setup.flat.energy;
      row.energy_gap = std::abs(row.map_energy - setup.flat.energy);
    }
    for (std::size_t c = 0; c < 3; ++c) row.tension_defect[c] = max_or_nan(tdef[c]);
    row.density_defect = max_or_nan(ddef);
    row.min_energy = row.d_l2 = row.d_inf = row.cauchy_l2 = kNaN;

    if (cfg.run_flows) {
      FlowOptions opts;
      opts.step_size = cfg.step_size;
      opts.tension_tol = cfg.tension_tol;
      opts.max_iterations = cfg.max_iterations;
      opts.record_time = cfg.timing;
      const DiscreteMap start = cfg.warm_start && !mins.empty() ? prolongate(mins.back(), b) : f;
      const auto t0 = std::chrono::steady_clock::now();
      FlowState s = [&] {
        try {
          return run_flow(start, opts);
        } catch (const InstabilityError& e) {
          res.rows.push_back(row);
          throw StudyError(std::string("study level ") + std::to_string(level) + ": " + e.what(), res);
        }
      }();
      const double tol = opts.tension_tol > 0 ? opts.tension_tol : default_tension_tolerance(*b);
      row.iterations = s.iteration;
      if (cfg.timing) row.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      if (!flow_converged(s, tol)) {
        res.rows.push_back(row);
        throw StudyError("study level " + std::to_string(level) + ": flow did not reach the tension tolerance in " +
                             std::to_string(s.iteration) + " iterations",
                         res);
      }
      row.min_energy = s.energy_history.back();
      if (!mins.empty()) row.cauchy_l2 = map_distances(prolongate(mins.back(), b), s.map).l2;
      if (!setup.numeric_reference) {
        const MapDistances d = map_distances(s.map, setup.hyperbolic ? identity_map(b)
                                                                     : sampled_map(b, setup.target_deck, setup.flat.harmonic));
        row.d_l2 = d.l2;
        row.d_inf = d.linf;
      }
      mins.push_back(std::move(s.map));
    }
    res.rows.push_back(row);
  }

  if (setup.numeric_reference && cfg.run_flows) {
    const DiscreteMap& deepest = mins.back();
    for (std::size_t i = 0; i < res.rows.size(); ++i) {
      res.rows[i].reference_energy = deepest.domain().mesh.level() == res.rows[i].level ? kNaN : energy(deepest);
      if (i + 1 < res.rows.size()) {
        res.rows[i].energy_gap = std::abs(res.rows[i].min_energy - energy(deepest));
        const MapDistances d = map_distances(prolongate(mins[i], deepest.domain_ptr()), deepest);
        res.rows[i].d_l2 = d.l2;
        res.rows[i].d_inf = d.linf;
      }
    }
  }

  res.measure = measure_convergence(measured, setup.hyperbolic ? genus2_test_functions(setup.group, setup.domain)
                                                               : flat_test_functions(cfg.surface.torus));

  // Fits.
  std::vector<std::pair<double, double>> tmax;
  for (const StudyRow& r : res.rows) {
    double m = kNaN;
    for (double v : r.tension_defect)
      if (std::isfinite(v)) m = std::isfinite(m) ? std::max(m, v) : v;
    if (std::isfinite(m)) tmax.push_back({r.r, m});
  }
  add_fit(res, "energy_gap", series(res.rows, &StudyRow::energy_gap));
  add_fit(res, "tension_defect", tmax);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::pair<double, double>> pts;
    for (const StudyRow& r : res.rows)
      if (std::isfinite(r.tension_defect[c])) pts.push_back({r.r, r.tension_defect[c]});
    add_fit(res, "tension_defect_v" + std::to_string(c), pts);
  }
  add_fit(res, "density_defect", series(res.rows, &StudyRow::density_defect));
  add_fit(res, "d_l2", series(res.rows, &StudyRow::d_l2));
  add_fit(res, "cauchy_l2", series(res.rows, &StudyRow::cauchy_l2));
  if (setup.hyperbolic) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < res.rows.size(); ++i) pts.push_back({res.rows[i].r, identity_gap[i]});
    add_fit(res, "identity_energy_gap", pts);
  }
  std::vector<std::string> fnames;
  for (const MeasureRow& m : res.measure)
    if (std::find(fnames.begin(), fnames.end(), m.function) == fnames.end()) fnames.push_back(m.function);
  for (const std::string& name : fnames) {
    std::vector<std::pair<double, double>> pts;
    for (const MeasureRow& m : res.measure)
      if (m.function == name) pts.push_back({m.r, m.error < 1e-14 ? 0.0 : m.error});
    add_fit(res, "measure_" + name, pts);
  }

  // Checks.
  for (const std::string& name : fnames) slope_check(res, "measure_" + name, 0.7, true);
  if (setup.hyperbolic) {
    double worst = 0;
    for (const BiweightedMesh& b : measured)
      worst = std::max(worst, std::abs(std::accumulate(b.vertex_weights.begin(), b.vertex_weights.end(), 0.0) - 4 * kPi));
    res.checks.push_back({"mass_4pi", worst, "<= 1e-6", true, worst <= 1e-6});
    slope_check(res, "identity_energy_gap", 3.5, false);
    slope_check(res, "tension_defect_v0", 1.7, false);
    if (cfg.run_flows) {
      std::vector<double> cauchy, dist;
      for (const StudyRow& r : res.rows) {
        if (std::isfinite(r.cauchy_l2)) cauchy.push_back(r.cauchy_l2);
        if (std::isfinite(r.d_l2)) dist.push_back(r.d_l2);
      }
      res.checks.push_back({"cauchy_decreasing", cauchy.empty() ? kNaN : cauchy.back(), "strictly decreasing", true, decreasing(cauchy)});
      res.checks.push_back({"reference_distance_decreasing", dist.empty() ? kNaN : dist.back(), "strictly decreasing", true,
                            dist.size() < 2 || decreasing(dist)});
      if (setup.numeric_reference) slope_check(res, "energy_gap", 1.7, false);
    }
  } else if (cfg.test_map == TestMapKind::Sinusoid) {
    slope_check(res, "energy_gap", 1.7, true);
    slope_check(res, "tension_defect", 1.7, true);
    slope_check(res, "density_defect", 1.7, true);
  } else {
    double gap = 0, tension = 0;
    for (const StudyRow& r : res.rows) {
      gap = std::max(gap, r.energy_gap);
      for (double v : r.tension_defect)
        if (std::isfinite(v)) tension = std::max(tension, v);
    }
    res.checks.push_back({"energy_gap_exact", gap, "<= 1e-10", true, gap <= 1e-10});
    res.checks.push_back({"tension_exact", tension, "<= 1e-10", true, tension <= 1e-10});
  }

  if (cfg.double_limit) {
    res.double_limit = double_limit_study(cfg, setup.numeric_reference && !mins.empty() ? &mins.back() : nullptr);
    check_double_limit(res);
  }
  if (maps) maps->minimizers = std::move(mins);
  return res;
}

std::vector<DoubleLimitRow> double_limit_study(const StudyConfig& cfg, const DiscreteMap* reference) {
  const Setup setup = make_setup(cfg);
  std::optional<DiscreteMap> ref;
  if (setup.numeric_reference) {
    if (reference) {
      ref = *reference;
    } else {
      StudyConfig inner = cfg;
      inner.double_limit = false;
      StudyMaps maps;
      run_study(inner, &maps);
      ref = maps.minimizers.back();
    }
    if (ref->mesh().level() != cfg.levels) throw ContractViolation("double limit: reference is not at the deepest level");
  }
  std::vector<DoubleLimitRow> rows;
  for (int level = cfg.first_level; level <= cfg.levels; ++level) {
    auto b = std::make_shared<const BiweightedMesh>(make_biweighted(setup.sequence[static_cast<std::size_t>(level)]));
    DoubleLimitRow row;
    row.level = level;
    row.r = quality_stats(b->mesh, false).mesh_size;
    row.steps = cfl_iterations(row.r, cfg.cfl_C, cfg.cfl_c, cfg.cfl_d);
    const DiscreteMap u = setup.hyperbolic ? vertex_position_map(b, setup.target_deck)
                                           : sampled_map(b, setup.target_deck, setup.flat.value);
    auto distance = [&](const DiscreteMap& m) {
      if (setup.numeric_reference) return map_distances(prolongate(m, ref->domain_ptr()), *ref).l2;
      if (setup.hyperbolic) return map_distances(m, identity_map(b)).l2;
      return map_distances(m, sampled_map(b, setup.target_deck, setup.flat.harmonic)).l2;
    };
    row.initial_l2 = distance(u);
    FlowState s = start_flow(u, cfg.step_size > 0 ? cfg.step_size : default_step_size(*b));
    advance_flow(s, row.steps);
    row.l2 = distance(s.map);
    rows.push_back(row);
  }
  return rows;
}

void check_double_limit(StudyResult& result) {
  std::vector<double> d;
  for (const DoubleLimitRow& r : result.double_limit) d.push_back(r.l2);
  result.checks.push_back({"double_limit_decreasing", d.empty() ? kNaN : d.back(), "strictly decreasing", true, decreasing(d)});
}

// === Output

namespace {

std::string csv_real(double x) { return std::isfinite(x) ? format_real(x) : std::string(); }

nlohmann::ordered_json json_real(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

} // namespace

void write_study_csv(std::ostream& out, const StudyResult& result) {
  out << "level,r,vertices,map_energy,min_energy,reference_energy,energy_gap,tension_defect_v0,tension_defect_v1,"
         "tension_defect_v2,density_defect,d_l2,d_inf,cauchy_l2,iterations,wall_time_ms\n";
  for (const StudyRow& r : result.rows) {
    out << r.level << "," << csv_real(r.r) << "," << r.vertices << "," << csv_real(r.map_energy) << ","
        << csv_real(r.min_energy) << "," << csv_real(r.reference_energy) << "," << csv_real(r.energy_gap);
    for (double v : r.tension_defect) out << "," << csv_real(v);
    out << "," << csv_real(r.density_defect) << "," << csv_real(r.d_l2) << "," << csv_real(r.d_inf) << ","
        << csv_real(r.cauchy_l2) << "," << r.iterations << "," << csv_real(r.wall_time_ms) << "\n";
  }
}

void write_study_json(std::ostream& out, const StudyConfig& cfg, const StudyResult& result) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["surface"] = cfg.surface.to_string();
  j["test_map"] = to_string(cfg.test_map);
  if (cfg.test_map == TestMapKind::FnPair) j["target_fn"] = cfg.target_fn.to_string();
  j["first_level"] = cfg.first_level;
  j["levels"] = cfg.levels;
  nlohmann::ordered_json slopes = nlohmann::ordered_json::object();
  for (const auto& [name, f] : result.slopes)
    slopes[name] = {{"slope", json_real(f.slope)}, {"intercept", json_real(f.intercept)}, {"r2", json_real(f.r2)},
                    {"points", f.points}, {"zeros", f.zeros}, {"exact", f.exact}};
  j["slopes"] = slopes;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const StudyCheck& c : result.checks)
    checks.push_back({{"name", c.name}, {"value", json_real(c.value)}, {"requirement", c.requirement}, {"hard", c.hard}, {"pass", c.pass}});
  j["checks"] = checks;
  nlohmann::ordered_json measure = nlohmann::ordered_json::array();
  for (const MeasureRow& m : result.measure)
    measure.push_back({{"function", m.function}, {"level", m.level}, {"r", json_real(m.r)}, {"error", json_real(m.error)}});
  j["measure"] = measure;
  if (!result.double_limit.empty()) {
    nlohmann::ordered_json dl = nlohmann::ordered_json::array();
    for (const DoubleLimitRow& r : result.double_limit)
      dl.push_back({{"level", r.level}, {"r", json_real(r.r)}, {"steps", r.steps}, {"initial_l2", json_real(r.initial_l2)}, {"l2", json_real(r.l2)}});
    j["double_limit"] = dl;
  }
  j["passed"] = result.passed();
  out << j.dump(2) << "\n";
}

} // namespace dhm
