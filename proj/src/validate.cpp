#include "dhm/cli.h"

#include "dhm/errors.h"
#include "dhm/format.h"
#include "dhm/fuchsian.h"
#include "dhm/study.h"

#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <optional>

namespace dhm {

namespace {

struct Line {
  int number = 0;
  std::vector<std::string> fields;
};

struct Lines {
  std::vector<Line> lines;
  int last_number = 0;
};

Lines significant_lines(std::istream& in) {
  Lines out;
  std::string text;
  int number = 0;
  while (std::getline(in, text)) {
    ++number;
    const std::string t = trim(text);
    if (t.empty() || t[0] == '#') continue;
    out.lines.push_back({number, split_whitespace(t)});
  }
  out.last_number = number;
  return out;
}

class Collector {
public:
  explicit Collector(ValidationReport& report) : report_(report) {}
  void add(int line, std::string message) {
    ++report_.total;
    if (report_.violations.size() < kReportedViolations) report_.violations.push_back({line, std::move(message)});
  }
  bool clean() const { return report_.total == 0; }

private:
  ValidationReport& report_;
};

std::optional<long long> as_integer(const std::string& s) {
  try {
    return parse_integer(s);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

std::optional<double> as_real(const std::string& s) {
  try {
    const double x = parse_real(s);
    if (!std::isfinite(x)) return std::nullopt;
    return x;
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

// Reads "key count" at lines[i]; reports and returns nullopt when malformed.
std::optional<long long> section_header(const Lines& ls, std::size_t i, const char* key, Collector& c) {
  const int at = i < ls.lines.size() ? ls.lines[i].number : ls.last_number;
  if (i >= ls.lines.size() || ls.lines[i].fields.empty() || ls.lines[i].fields[0] != key) {
    c.add(at, std::string("expected '") + key + " <count>'");
    return std::nullopt;
  }
  const auto& f = ls.lines[i].fields;
  const auto n = f.size() == 2 ? as_integer(f[1]) : std::nullopt;
  if (!n || *n < 0) {
    c.add(at, std::string("'") + key + "' needs one nonnegative integer count");
    return std::nullopt;
  }
  return n;
}

bool is_mesh_keyword(const std::string& s) {
  return s == "vertices" || s == "triangles" || s == "vertex_weights" || s == "edge_weights";
}

// Advances over up to count body lines, stopping early at a section keyword.
template <class Body>
std::size_t section_body(const Lines& ls, std::size_t i, long long count, const char* what, Collector& c, Body body) {
  long long k = 0;
  for (; k < count; ++k, ++i) {
    if (i >= ls.lines.size() || is_mesh_keyword(ls.lines[i].fields[0])) {
      const int at = i < ls.lines.size() ? ls.lines[i].number : ls.last_number;
      c.add(at, "expected " + std::to_string(count) + " " + what + " lines, found " + std::to_string(k));
      break;
    }
    body(static_cast<int>(k), ls.lines[i]);
  }
  return i;
}

} // namespace

ValidationReport validate_mesh(std::istream& in) {
  ValidationReport report;
  report.kind = "mesh";
  Collector c(report);
  const Lines ls = significant_lines(in);
  std::size_t i = 0;
  auto at = [&](std::size_t k) { return k < ls.lines.size() ? ls.lines[k].number : ls.last_number; };
  auto starts = [&](std::size_t k, const char* key) {
    return k < ls.lines.size() && ls.lines[k].fields[0] == key;
  };

  std::optional<GeometryKind> kind;
  if (starts(i, "geometry")) {
    const auto& f = ls.lines[i].fields;
    try {
      if (f.size() != 2) throw DomainError("");
      kind = parse_geometry_kind(f[1]);
    } catch (const DomainError&) {
      c.add(at(i), "'geometry' must be euclidean or hyperbolic");
    }
    ++i;
  } else {
    c.add(at(i), "expected 'geometry <euclidean|hyperbolic>'");
  }
  if (starts(i, "level")) {
    const auto& f = ls.lines[i].fields;
    const auto n = f.size() == 2 ? as_integer(f[1]) : std::nullopt;
    if (!n || *n < 0) c.add(at(i), "'level' needs one nonnegative integer");
    ++i;
  } else {
    c.add(at(i), "expected 'level <n>'");
  }

  std::optional<DeckGroup> deck;
  int expected_chi = 0;
  if (starts(i, "surface")) {
    const auto& f = ls.lines[i].fields;
    const int line = at(i);
    if (f.size() >= 2 && f[1] == "torus") {
      if (kind && *kind != GeometryKind::Euclidean) c.add(line, "torus surfaces need euclidean geometry");
      std::vector<std::optional<double>> v;
      for (std::size_t k = 2; k < f.size(); ++k) v.push_back(as_real(f[k]));
      const bool shape = f.size() == 6 && v[0] && v[1] && v[2] && as_integer(f[5]);
      if (!shape) {
        c.add(line, "'surface torus' needs a b shear n");
      } else if (!(*v[0] > 0 && *v[1] > 0) || *as_integer(f[5]) < 1) {
        c.add(line, "torus periods must be positive and the grid size at least 1");
      } else if (kind == GeometryKind::Euclidean) {
        deck = torus_lattice(*v[0], *v[1], *v[2]);
      }
      expected_chi = 0;
    } else if (f.size() >= 2 && f[1] == "genus2") {
      if (kind && *kind != GeometryKind::Hyperbolic) c.add(line, "genus2 surfaces need hyperbolic geometry");
      if (f.size() != 3) {
        c.add(line, "'surface genus2' needs l1,l2,l3,t1,t2,t3");
      } else {
        try {
          const FenchelNielsen fn = FenchelNielsen::parse(f[2]);
          if (kind == GeometryKind::Hyperbolic) deck = build_fuchsian_group(fn).deck();
        } catch (const std::exception& e) {
          c.add(line, std::string("bad Fenchel-Nielsen coordinates: ") + e.what());
        }
      }
      expected_chi = -2;
    } else {
      c.add(line, "'surface' must be torus or genus2");
    }
    ++i;
  } else {
    c.add(at(i), "expected 'surface ...'");
  }

  bool hyperboloid = false;
  if (starts(i, "coordinates")) {
    const auto& f = ls.lines[i].fields;
    if (f.size() == 2 && f[1] == "hyperboloid" && kind == GeometryKind::Hyperbolic) {
      hyperboloid = true;
    } else if (f.size() != 2 || f[1] != "disk") {
      c.add(at(i), "'coordinates' must be disk, or hyperboloid for hyperbolic meshes");
    }
    ++i;
  }

  const auto nv = section_header(ls, i, "vertices", c);
  if (!nv) return report;
  ++i;
  std::vector<Point> verts;
  std::vector<VertexClass> classes;
  int classes_given = -1; // unknown, 0 none, 1 all
  const Geometry geom(kind.value_or(GeometryKind::Euclidean));
  i = section_body(ls, i, *nv, "vertex", c, [&](int k, const Line& l) {
    const auto& f = l.fields;
    if (f.size() != 3) {
      c.add(l.number, "vertex " + std::to_string(k) + ": expected x y class");
      return;
    }
    const auto x = as_real(f[0]);
    const auto y = as_real(f[1]);
    if (!x || !y) {
      c.add(l.number, "vertex " + std::to_string(k) + ": coordinates must be finite reals");
      return;
    }
    if (kind == GeometryKind::Hyperbolic && !hyperboloid && !(*x * *x + *y * *y < 1)) {
      c.add(l.number, "vertex " + std::to_string(k) + ": outside the unit disk");
      return;
    }
    const int given = f[2] == "-" ? 0 : 1;
    if (given == 1) {
      const auto cls = as_integer(f[2]);
      if (!cls || *cls < 0 || *cls > 2) {
        c.add(l.number, "vertex " + std::to_string(k) + ": class must be 0, 1, 2 or -");
        return;
      }
      classes.push_back(static_cast<VertexClass>(*cls));
    }
    if (classes_given >= 0 && classes_given != given)
      c.add(l.number, "vertex " + std::to_string(k) + ": classes must be given for all vertices or none");
    classes_given = given;
    const Vec2 d(*x, *y);
    verts.push_back(hyperboloid ? geom.normalize(Point{Vec3(d.x(), d.y(), 0)}) : geom.from_disk(d));
  });

  const auto nt = section_header(ls, i, "triangles", c);
  if (!nt) return report;
  const int triangles_line = at(i);
  ++i;
  std::vector<std::array<int, 3>> tv;
  std::vector<std::array<Word, 3>> tw;
  std::vector<std::array<bool, 3>> tb;
  i = section_body(ls, i, *nt, "triangle", c, [&](int t, const Line& l) {
    const auto& f = l.fields;
    const std::string name = "triangle " + std::to_string(t);
    if (f.size() != 9) {
      c.add(l.number, name + ": expected v0 v1 v2 w0 w1 w2 b0 b1 b2");
      return;
    }
    std::array<int, 3> v{};
    std::array<Word, 3> w;
    std::array<bool, 3> b{};
    bool good = true;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto idx = as_integer(f[k]);
      if (!idx) {
        c.add(l.number, name + ": vertex index '" + f[k] + "' is not an integer");
        good = false;
      } else if (*idx < 0 || *idx >= *nv) {
        c.add(l.number, name + " references missing vertex " + f[k]);
        good = false;
      } else {
        v[k] = static_cast<int>(*idx);
      }
      try {
        w[k] = Word::parse(f[3 + k]);
        if (deck) (void)deck->evaluate(w[k]);
      } catch (const std::exception&) {
        c.add(l.number, name + ": '" + f[3 + k] + "' is not a deck word");
        good = false;
      }
      if (f[6 + k] != "0" && f[6 + k] != "1") {
        c.add(l.number, name + ": base flags must be 0 or 1");
        good = false;
      }
      b[k] = f[6 + k] == "1";
    }
    if (good) {
      tv.push_back(v);
      tw.push_back(w);
      tb.push_back(b);
    }
  });

  struct EdgeLine {
    int line;
    long long u, v;
  };
  std::vector<EdgeLine> edge_lines;
  int edge_header = 0;
  bool seen_vertex_weights = false;
  bool seen_edge_weights = false;
  while (i < ls.lines.size()) {
    const Line& l = ls.lines[i];
    const std::string& key = l.fields[0];
    if (key == "vertex_weights" && !seen_vertex_weights) {
      seen_vertex_weights = true;
      const auto n = section_header(ls, i, "vertex_weights", c);
      ++i;
      if (!n) continue;
      if (*n != *nv) c.add(l.number, "vertex weight count " + std::to_string(*n) + " differs from the vertex count " + std::to_string(*nv));
      i = section_body(ls, i, *n, "vertex weight", c, [&](int k, const Line& w) {
        const auto x = w.fields.size() == 1 ? as_real(w.fields[0]) : std::nullopt;
        if (!x || !(*x > 0)) c.add(w.number, "vertex weight " + std::to_string(k) + " must be one positive real");
      });
    } else if (key == "edge_weights" && !seen_edge_weights) {
      seen_edge_weights = true;
      edge_header = l.number;
      const auto n = section_header(ls, i, "edge_weights", c);
      ++i;
      if (!n) continue;
      i = section_body(ls, i, *n, "edge weight", c, [&](int k, const Line& w) {
        const auto& f = w.fields;
        const std::string name = "edge weight " + std::to_string(k);
        if (f.size() != 4) {
          c.add(w.number, name + ": expected u v omega_uv omega_vu");
          return;
        }
        const auto u = as_integer(f[0]);
        const auto v = as_integer(f[1]);
        const auto a = as_real(f[2]);
        const auto b = as_real(f[3]);
        if (!u || !v || *u < 0 || *v < 0 || *u >= *nv || *v >= *nv) {
          c.add(w.number, name + " references a missing vertex");
          return;
        }
        if (!a || !b) {
          c.add(w.number, name + ": weights must be finite reals");
          return;
        }
        if (*a != *b) c.add(w.number, name + " is not symmetric: " + f[2] + " != " + f[3]);
        edge_lines.push_back({w.number, *u, *v});
      });
    } else {
      c.add(l.number, "unexpected line starting with '" + key + "'");
      ++i;
    }
  }

  if (!c.clean() || !kind || !deck) return report;
  SurfaceSpec surface;
  surface.kind = *kind;
  std::optional<Triangulation> mesh;
  try {
    mesh.emplace(surface, *deck, std::move(verts), tv, tw, 0,
                 classes_given == 1 ? std::move(classes) : std::vector<VertexClass>{}, tb);
  } catch (const std::exception& e) {
    c.add(triangles_line, std::string("triangle table does not describe a closed surface: ") + e.what());
    return report;
  }
  if (mesh->euler_characteristic() != expected_chi)
    c.add(triangles_line, "Euler characteristic " + std::to_string(mesh->euler_characteristic()) + " does not match the surface (" +
                              std::to_string(expected_chi) + ")");
  if (seen_edge_weights) {
    if (edge_lines.size() != mesh->num_edges()) {
      c.add(edge_header, "edge weight count " + std::to_string(edge_lines.size()) + " differs from the edge count " +
                             std::to_string(mesh->num_edges()));
    } else {
      for (std::size_t e = 0; e < edge_lines.size(); ++e) {
        const MeshEdge& ed = mesh->edges()[e];
        if (edge_lines[e].u != ed.u || edge_lines[e].v != ed.v)
          c.add(edge_lines[e].line, "edge weight " + std::to_string(e) + " names vertices " + std::to_string(edge_lines[e].u) +
                                        " " + std::to_string(edge_lines[e].v) + " but edge " + std::to_string(e) + " joins " +
                                        std::to_string(ed.u) + " " + std::to_string(ed.v));
      }
    }
  }
  return report;
}

ValidationReport validate_map(std::istream& in, const Triangulation* mesh) {
  ValidationReport report;
  report.kind = "map";
  Collector c(report);
  const Lines ls = significant_lines(in);
  std::size_t i = 0;
  auto at = [&](std::size_t k) { return k < ls.lines.size() ? ls.lines[k].number : ls.last_number; };

  std::optional<GeometryKind> kind;
  if (i < ls.lines.size() && ls.lines[i].fields[0] == "target") {
    try {
      if (ls.lines[i].fields.size() != 2) throw DomainError("");
      kind = parse_geometry_kind(ls.lines[i].fields[1]);
    } catch (const DomainError&) {
      c.add(at(i), "'target' must be euclidean or hyperbolic");
    }
    ++i;
  } else {
    c.add(at(i), "expected 'target <euclidean|hyperbolic>'");
  }
  if (kind && mesh && *kind != mesh->kind()) c.add(at(i - 1), "target geometry differs from the mesh geometry");

  auto header = [&](const char* key) -> std::optional<long long> {
    if (i >= ls.lines.size() || ls.lines[i].fields[0] != key || ls.lines[i].fields.size() != 2) {
      c.add(at(i), std::string("expected '") + key + " <count>'");
      return std::nullopt;
    }
    const auto n = as_integer(ls.lines[i].fields[1]);
    if (!n || *n < 0) c.add(at(i), std::string("'") + key + "' needs a nonnegative integer count");
    return n && *n >= 0 ? n : std::nullopt;
  };
  auto body = [&](long long count, const char* what, const auto& fn) {
    long long k = 0;
    for (; k < count; ++k, ++i) {
      if (i >= ls.lines.size() || ls.lines[i].fields[0] == "values" || ls.lines[i].fields[0] == "generators") {
        c.add(at(i), "expected " + std::to_string(count) + " " + what + " lines, found " + std::to_string(k));
        return;
      }
      fn(static_cast<int>(k), ls.lines[i]);
    }
  };

  const auto ng = header("generators");
  if (!ng) return report;
  if (mesh && static_cast<std::size_t>(*ng) != mesh->deck().rank())
    c.add(at(i), "generator count " + std::to_string(*ng) + " differs from the mesh deck rank " + std::to_string(mesh->deck().rank()));
  ++i;
  body(*ng, "generator", [&](int k, const Line& l) {
    if (l.fields.size() != 9) {
      c.add(l.number, "generator " + std::to_string(k) + ": expected 9 matrix entries");
      return;
    }
    Mat3L m;
    for (int j = 0; j < 9; ++j) {
      const auto x = as_real(l.fields[static_cast<std::size_t>(j)]);
      if (!x) {
        c.add(l.number, "generator " + std::to_string(k) + ": entries must be finite reals");
        return;
      }
      m(j / 3, j % 3) = *x;
    }
    if (!kind) return;
    try {
      (void)Isometry::from_matrix(*kind, m);
    } catch (const std::exception& e) {
      c.add(l.number, "generator " + std::to_string(k) + ": " + e.what());
    }
  });

  const auto nv = header("values");
  if (!nv) return report;
  if (mesh && static_cast<std::size_t>(*nv) != mesh->num_vertices())
    c.add(at(i), "value count " + std::to_string(*nv) + " differs from the mesh vertex count " + std::to_string(mesh->num_vertices()));
  ++i;
  body(*nv, "value", [&](int k, const Line& l) {
    const auto x = l.fields.size() == 2 ? as_real(l.fields[0]) : std::nullopt;
    const auto y = l.fields.size() == 2 ? as_real(l.fields[1]) : std::nullopt;
    if (!x || !y) {
      c.add(l.number, "value " + std::to_string(k) + ": expected two finite reals");
    } else if (kind == GeometryKind::Hyperbolic && !(*x * *x + *y * *y < 1)) {
      c.add(l.number, "value " + std::to_string(k) + ": outside the unit disk");
    }
  });
  for (; i < ls.lines.size(); ++i) c.add(ls.lines[i].number, "unexpected line starting with '" + ls.lines[i].fields[0] + "'");
  return report;
}

ValidationReport validate_config(std::istream& in) {
  ValidationReport report;
  report.kind = "config";
  Collector c(report);
  std::vector<ConfigIssue> issues;
  (void)scan_study_config(in, issues);
  for (const ConfigIssue& issue : issues) c.add(issue.line, issue.message);
  return report;
}

ValidationReport validate_file(const std::filesystem::path& path, const Triangulation* mesh) {
  std::ifstream in(path);
  if (!in) {
    ValidationReport report;
    report.path = path.string();
    report.kind = "unknown";
    Collector(report).add(0, "cannot open file");
    return report;
  }
  std::string first;
  std::getline(in, first);
  const std::string banner = trim(first);
  const std::string ext = path.extension().string();
  in.clear();
  in.seekg(0);
  ValidationReport report;
  if (banner == "# dhm mesh v1" || (banner.rfind("# dhm", 0) != 0 && ext == ".mesh")) {
    report = validate_mesh(in);
  } else if (banner == "# dhm map v1" || (banner.rfind("# dhm", 0) != 0 && ext == ".map")) {
    report = validate_map(in, mesh);
  } else {
    report = validate_config(in);
  }
  report.path = path.string();
  return report;
}

std::vector<std::string> format_report(const ValidationReport& report) {
  std::vector<std::string> out;
  if (report.ok()) {
    out.push_back(report.path + ": ok (" + report.kind + ")");
    return out;
  }
  for (const Violation& v : report.violations)
    out.push_back(report.path + (v.line > 0 ? ":" + std::to_string(v.line) : std::string()) + ": " + v.message);
  std::string summary = report.path + ": " + std::to_string(report.total) + " violation" + (report.total == 1 ? "" : "s");
  if (report.total > report.violations.size()) summary += " (first " + std::to_string(report.violations.size()) + " shown)";
  out.push_back(summary);
  return out;
}

} // namespace dhm
