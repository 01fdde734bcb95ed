#include "dhm/cli.h"

#include "dhm/errors.h"
#include "dhm/format.h"
#include "dhm/fuchsian.h"
#include "dhm/harmonic.h"
#include "dhm/service.h"
#include "dhm/study.h"
#include "dhm/weights.h"

#include <CLI11.hpp>

#include <fcntl.h>
#include <pthread.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>

namespace dhm {

namespace fs = std::filesystem;

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  const fs::path tmp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DomainError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw DomainError("failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DomainError("cannot replace '" + path.string() + "': " + ec.message());
  }
}

DirectoryLock::DirectoryLock(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DomainError("cannot create directory '" + dir.string() + "': " + ec.message());
  const fs::path lock = dir / ".dhm.lock";
  fd_ = ::open(lock.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw DomainError("cannot open lock file '" + lock.string() + "': " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw DomainError("output directory '" + dir.string() + "' is in use by another dhm run");
  }
}

DirectoryLock::~DirectoryLock() {
  if (fd_ >= 0) ::close(fd_);
}

namespace {

std::ifstream open_input(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path.string() + "'");
  return in;
}

Triangulation load_mesh(const fs::path& path) {
  std::ifstream in = open_input(path);
  return read_mesh(in);
}

std::shared_ptr<const BiweightedMesh> load_biweighted(const fs::path& path) {
  std::ifstream in = open_input(path);
  return std::make_shared<const BiweightedMesh>(read_biweighted(in));
}

template <class Fn>
std::string render(Fn fn) {
  std::ostringstream s;
  fn(s);
  return s.str();
}

fs::path directory_of(const fs::path& file) { return file.parent_path().empty() ? fs::path(".") : file.parent_path(); }

// Locks every distinct directory that receives an output.
class OutputLocks {
public:
  explicit OutputLocks(const std::vector<fs::path>& files) {
    std::set<fs::path> dirs;
    for (const fs::path& f : files)
      if (!f.empty()) dirs.insert(fs::weakly_canonical(directory_of(f)));
    for (const fs::path& d : dirs) locks_.push_back(std::make_unique<DirectoryLock>(d));
  }

private:
  std::vector<std::unique_ptr<DirectoryLock>> locks_;
};

std::string surface_label(const Triangulation& m) {
  return m.kind() == GeometryKind::Euclidean ? "torus" : "genus2";
}

std::string mesh_summary(const Triangulation& m) {
  return "level " + std::to_string(m.level()) + ", V=" + std::to_string(m.num_vertices()) + " E=" +
         std::to_string(m.num_edges()) + " F=" + std::to_string(m.num_triangles()) + " chi=" +
         std::to_string(m.euler_characteristic());
}

const char* kStatsHeader =
    "level,vertices,edges,triangles,mesh_size,min_edge,min_angle,max_angle,min_thickness,min_edge_ratio,"
    "combinatorial_diameter,surjectivity_radius,is_delaunay_angle";

// All-sources BFS is O(V E); above this the combinatorial fields are left empty.
constexpr std::size_t kCombinatorialLimit = 20000;

std::string stats_row(const MeshStats& s, bool combinatorial) {
  std::ostringstream o;
  o << s.level << "," << s.vertices << "," << s.edges << "," << s.triangles << "," << format_real(s.mesh_size) << ","
    << format_real(s.min_edge) << "," << format_real(s.min_angle) << "," << format_real(s.max_angle) << ","
    << format_real(s.min_thickness) << "," << format_real(s.min_edge_ratio) << ",";
  if (combinatorial) o << s.combinatorial_diameter << "," << s.surjectivity_radius;
  else o << ",";
  o << "," << (s.is_delaunay_angle ? 1 : 0);
  return o.str();
}

double parse_auto_real(const std::string& text, const char* what) {
  if (text == "auto") return 0;
  const double x = parse_real(text);
  if (!(x > 0)) throw DomainError(std::string(what) + " must be positive or auto");
  return x;
}

// === Subcommands

struct MeshBuild {
  std::string torus;
  int grid = 0;
  std::string fn;
  int levels = 0;
  std::string out;
};

int mesh_build(const MeshBuild& o, std::ostream& out) {
  if (o.torus.empty() == o.fn.empty()) throw DomainError("mesh-build needs exactly one of --torus and --fn");
  if (o.levels < 0) throw DomainError("--levels must be nonnegative");
  OutputLocks locks({o.out});
  Triangulation mesh;
  if (!o.torus.empty()) {
    const std::vector<double> v = parse_real_list(o.torus);
    if (v.size() != 2 && v.size() != 3) throw DomainError("--torus takes a,b or a,b,shear");
    if (o.grid < 1) throw DomainError("--torus needs --grid n with n >= 1");
    mesh = build_torus_mesh(TorusSpec{v[0], v[1], v.size() == 3 ? v[2] : 0.0, o.grid});
  } else {
    const auto [group, domain] = build_group(FenchelNielsen::parse(o.fn));
    mesh = build_genus2_mesh(group, domain);
  }
  for (int k = 0; k < o.levels; ++k) mesh = midpoint_refine(mesh);
  write_atomic(o.out, render([&](std::ostream& s) { write_mesh(s, mesh); }));
  out << "mesh-build: " << surface_label(mesh) << " " << mesh_summary(mesh) << " -> " << o.out << "\n";
  return 0;
}

struct MeshRefine {
  std::string mesh;
  int levels = 1;
  std::string out;
};

int mesh_refine(const MeshRefine& o, std::ostream& out) {
  if (o.levels < 0) throw DomainError("--levels must be nonnegative");
  OutputLocks locks({o.out});
  Triangulation mesh = load_mesh(o.mesh);
  for (int k = 0; k < o.levels; ++k) mesh = midpoint_refine(mesh);
  write_atomic(o.out, render([&](std::ostream& s) { write_mesh(s, mesh); }));
  out << "mesh-refine: " << surface_label(mesh) << " " << mesh_summary(mesh) << " -> " << o.out << "\n";
  return 0;
}

struct MeshStatsCmd {
  std::string mesh;
  int levels = 0;
  bool skip_combinatorial = false;
  std::string out;
};

int mesh_stats(const MeshStatsCmd& o, std::ostream& out) {
  if (o.levels < 0) throw DomainError("--levels must be nonnegative");
  OutputLocks locks({o.out});
  Triangulation mesh = load_mesh(o.mesh);
  std::ostringstream csv;
  csv << kStatsHeader << "\n";
  MeshStats last;
  for (int k = 0; k <= o.levels; ++k) {
    if (k > 0) mesh = midpoint_refine(mesh);
    const bool combinatorial = !o.skip_combinatorial && mesh.num_vertices() <= kCombinatorialLimit;
    last = quality_stats(mesh, combinatorial);
    csv << stats_row(last, combinatorial) << "\n";
  }
  if (o.out.empty() || o.out == "-") {
    out << csv.str();
    return 0;
  }
  write_atomic(o.out, csv.str());
  out << "mesh-stats: " << (o.levels + 1) << " level" << (o.levels ? "s" : "") << ", finest r=" << format_real(last.mesh_size)
      << " angles [" << format_real(last.min_angle) << ", " << format_real(last.max_angle) << "] -> " << o.out << "\n";
  return 0;
}

struct WeightsCmd {
  std::string mesh;
  double perturb = 0;
  std::uint64_t seed = 1;
  std::string defects;
  std::string out;
};

int weights_cmd(const WeightsCmd& o, std::ostream& out) {
  if (!(o.perturb >= 0 && o.perturb < 1)) throw DomainError("--perturb must lie in [0, 1)");
  OutputLocks locks({o.out, o.defects});
  const Triangulation mesh = load_mesh(o.mesh);
  std::vector<double> perturbation;
  if (o.perturb > 0) {
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(-o.perturb, o.perturb);
    perturbation.resize(mesh.num_vertices());
    for (double& p : perturbation) p = u(rng);
  }
  const BiweightedMesh b = make_biweighted(mesh, perturbation);
  write_atomic(o.out, render([&](std::ostream& s) { write_biweighted(s, b); }));
  if (!o.defects.empty()) {
    if (!mesh.has_classes()) throw DomainError("--defects needs a mesh with vertex classes");
    const std::vector<LaplacianDefect> d = laplacian_defects(b);
    write_atomic(o.defects, render([&](std::ostream& s) {
                   s << "vertex,class,order1,order2,order3\n";
                   for (const LaplacianDefect& x : d)
                     s << x.vertex << "," << static_cast<int>(mesh.classes()[static_cast<std::size_t>(x.vertex)]) << ","
                       << format_real(x.order1) << "," << format_real(x.order2) << "," << format_real(x.order3) << "\n";
                 }));
  }
  double mass = 0;
  for (double m : b.vertex_weights) mass += m;
  double min_omega = b.edge_weights.empty() ? 0 : b.edge_weights.front();
  std::size_t negative = 0;
  for (double w : b.edge_weights) {
    min_omega = std::min(min_omega, w);
    negative += w < 0 ? 1 : 0;
  }
  out << "weights: V=" << mesh.num_vertices() << " E=" << mesh.num_edges() << ", total mu " << format_real(mass)
      << ", min omega " << format_real(min_omega) << ", " << negative << " negative -> " << o.out << "\n";
  return 0;
}

struct FlowRun {
  std::string mesh;
  std::string map = "id";
  std::string target_fn;
  std::string target_torus;
  double jitter = 0;
  std::uint64_t seed = 1;
  std::string dt = "auto";
  std::string tol = "auto";
  long max_iter = 1000000;
  bool timing = false;
  std::string log;
  std::string out;
};

int flow_run(const FlowRun& o, std::ostream& out) {
  if (o.max_iter < 0) throw DomainError("--max-iter must be nonnegative");
  if (!(o.jitter >= 0)) throw DomainError("--jitter must be nonnegative");
  if (!o.target_fn.empty() && !o.target_torus.empty()) throw DomainError("give at most one of --target-fn and --target-torus");
  OutputLocks locks({o.log, o.out});
  const auto domain = load_biweighted(o.mesh);
  const Triangulation& mesh = domain->mesh;

  std::optional<DiscreteMap> start;
  if (o.map == "id") {
    DeckGroup target = mesh.deck();
    if (!o.target_fn.empty()) {
      if (mesh.kind() != GeometryKind::Hyperbolic) throw DomainError("--target-fn needs a hyperbolic mesh");
      target = build_fuchsian_group(FenchelNielsen::parse(o.target_fn)).deck();
    } else if (!o.target_torus.empty()) {
      if (mesh.kind() != GeometryKind::Euclidean) throw DomainError("--target-torus needs a flat mesh");
      const std::vector<double> v = parse_real_list(o.target_torus);
      if (v.size() != 2 && v.size() != 3) throw DomainError("--target-torus takes a,b or a,b,shear");
      target = torus_lattice(v[0], v[1], v.size() == 3 ? v[2] : 0.0);
    }
    start.emplace(vertex_position_map(domain, target));
  } else {
    if (!o.target_fn.empty() || !o.target_torus.empty()) throw DomainError("map files carry their own target group");
    std::ifstream in = open_input(o.map);
    start.emplace(read_map(in, domain));
  }
  if (o.jitter > 0) {
    const Geometry& geom = start->target();
    std::mt19937_64 rng(o.seed);
    std::uniform_real_distribution<double> u(-o.jitter, o.jitter);
    std::vector<Point> vals = start->values();
    for (Point& p : vals) {
      const auto fr = geom.frame(p);
      const double s = u(rng);
      const double t = u(rng);
      p = geom.exp_map(p, s * fr[0] + t * fr[1]);
    }
    start->set_values(std::move(vals));
  }

  FlowOptions opts;
  opts.step_size = parse_auto_real(o.dt, "--dt");
  opts.tension_tol = o.tol == "auto" ? 0 : parse_real(o.tol);
  if (!(opts.tension_tol >= 0)) throw DomainError("--tol must be nonnegative or auto");
  opts.max_iterations = o.max_iter;
  opts.record_time = o.timing;
  const double dt = opts.step_size > 0 ? opts.step_size : default_step_size(*domain);
  const double tol = opts.tension_tol > 0 ? opts.tension_tol : default_tension_tolerance(*domain);

  FlowState s = start_flow(*start, dt);
  std::optional<std::string> failure;
  try {
    continue_flow(s, opts);
  } catch (const InstabilityError& e) {
    failure = e.what();
  }
  if (!o.log.empty()) write_atomic(o.log, render([&](std::ostream& f) { write_flow_csv(f, s); }));
  if (!o.out.empty()) write_atomic(o.out, render([&](std::ostream& f) { write_map(f, s.map); }));
  const double energy_now = s.energy_history.back();
  const double tension_now = s.tension_norm_history.back();
  if (failure) throw InstabilityError(*failure + " (after " + std::to_string(s.iteration) + " steps)");
  if (!flow_converged(s, tol))
    throw NumericError("flow did not reach tension " + format_real(tol) + " in " + std::to_string(s.iteration) +
                       " steps; last tension " + format_real(tension_now));
  out << "flow-run: converged in " << s.iteration << " steps, dt " << format_real(dt) << ", tol " << format_real(tol)
      << ", energy " << format_real(energy_now) << ", tension " << format_real(tension_now);
  if (!o.log.empty()) out << " -> " << o.log;
  out << "\n";
  return 0;
}

struct StudyRun {
  std::string config;
  std::string out;
};

int study_run(const StudyRun& o, std::ostream& out, std::ostream& err) {
  StudyConfig cfg;
  {
    std::ifstream in = open_input(o.config);
    cfg = parse_study_config(in);
  }
  if (!cfg.base_mesh.empty() && fs::path(cfg.base_mesh).is_relative())
    cfg.base_mesh = (directory_of(o.config) / cfg.base_mesh).string();
  const fs::path dir(o.out);
  const fs::path csv = dir / fs::path(cfg.csv).filename();
  const fs::path json = dir / fs::path(cfg.json).filename();
  DirectoryLock lock(dir);
  StudyResult result;
  try {
    result = run_study(cfg);
  } catch (const StudyError& e) {
    write_atomic(csv, render([&](std::ostream& s) { write_study_csv(s, e.partial()); }));
    throw;
  }
  write_atomic(csv, render([&](std::ostream& s) { write_study_csv(s, result); }));
  write_atomic(json, render([&](std::ostream& s) { write_study_json(s, cfg, result); }));
  std::size_t hard = 0, hard_pass = 0, soft = 0, soft_pass = 0;
  for (const StudyCheck& c : result.checks) {
    (c.hard ? hard : soft) += 1;
    (c.hard ? hard_pass : soft_pass) += c.pass ? 1 : 0;
    if (c.hard && !c.pass)
      err << "dhm: check " << c.name << " failed: " << format_real(c.value) << ", required " << c.requirement << "\n";
  }
  out << "study-run: " << result.rows.size() << " levels, " << hard_pass << "/" << hard << " hard and " << soft_pass << "/"
      << soft << " soft checks passed -> " << dir.string() << "\n";
  return result.passed() ? 0 : 1;
}

struct Serve {
  std::string host = "127.0.0.1";
  int port = 8765;
  int max_level = 6;
  std::size_t max_sessions = 64;
};

int serve(const Serve& o, std::ostream& out) {
  if (o.port < 0 || o.port > 65535) throw DomainError("--port must lie in [0, 65535]");
  ServiceOptions opts;
  opts.max_level = o.max_level;
  opts.max_sessions = o.max_sessions;
  Service service(opts);
  sigset_t stop_signals, previous;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, &previous);
  TcpServer server(service, o.host, o.port);
  try {
    server.start();
  } catch (...) {
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    throw;
  }
  out << "serve: listening on " << o.host << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&stop_signals, &sig);
  server.stop();
  pthread_sigmask(SIG_SETMASK, &previous, nullptr);
  out << "serve: stopped on " << (sig == SIGINT ? "SIGINT" : "SIGTERM") << std::endl;
  return 0;
}

struct Export {
  std::string fn;
  std::string mesh;
  std::string map;
  std::string out;
};

int export_cmd(const Export& o, std::ostream& out) {
  if (o.fn.empty() == o.mesh.empty()) throw DomainError("export needs either --fn or --mesh with --map");
  OutputLocks locks({o.out});
  if (!o.fn.empty()) {
    const FuchsianGroup group = build_fuchsian_group(FenchelNielsen::parse(o.fn));
    write_atomic(o.out, render([&](std::ostream& s) { write_group(s, group); }));
    out << "export: group of " << group.fenchel_nielsen().to_string() << " -> " << o.out << "\n";
    return 0;
  }
  if (o.map.empty()) throw DomainError("export --mesh needs --map");
  const auto domain = load_biweighted(o.mesh);
  std::ifstream in = open_input(o.map);
  const DiscreteMap f = read_map(in, domain);
  const std::vector<double> density = energy_density(f);
  const Geometry& dg = domain->mesh.geometry();
  write_atomic(o.out, render([&](std::ostream& s) {
                 s << "vertex,x,y,fx,fy,energy_density\n";
                 for (std::size_t v = 0; v < domain->mesh.num_vertices(); ++v) {
                   const Vec2 x = dg.to_disk(domain->mesh.vertices()[v]);
                   const Vec2 y = f.target().to_disk(f.values()[v]);
                   s << v << "," << format_real(x.x()) << "," << format_real(x.y()) << "," << format_real(y.x()) << ","
                     << format_real(y.y()) << "," << format_real(density[v]) << "\n";
                 }
               }));
  out << "export: " << domain->mesh.num_vertices() << " vertices, energy " << format_real(energy(f)) << " -> " << o.out << "\n";
  return 0;
}

struct Validate {
  std::vector<std::string> files;
  std::string mesh;
};

int validate_cmd(const Validate& o, std::ostream& out) {
  std::optional<Triangulation> mesh;
  if (!o.mesh.empty()) mesh = load_mesh(o.mesh);
  std::size_t bad = 0;
  for (const std::string& f : o.files) {
    const ValidationReport r = validate_file(f, mesh ? &*mesh : nullptr);
    for (const std::string& line : format_report(r)) out << line << "\n";
    bad += r.ok() ? 0 : 1;
  }
  out << "validate: " << o.files.size() << " file" << (o.files.size() == 1 ? "" : "s") << ", " << bad << " with violations\n";
  return bad == 0 ? 0 : 1;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrete harmonic maps between surfaces", "dhm"};
  app.require_subcommand(1);
  std::function<int()> action;

  MeshBuild mb;
  auto* c = app.add_subcommand("mesh-build", "Build a base mesh of a flat torus or a genus-2 surface");
  c->add_option("--torus", mb.torus, "Periods a,b or a,b,shear");
  c->add_option("--grid", mb.grid, "Torus grid size");
  c->add_option("--fn", mb.fn, "Fenchel-Nielsen coordinates l1,l2,l3,t1,t2,t3");
  c->add_option("--levels", mb.levels, "Midpoint refinements after building");
  c->add_option("--out", mb.out, "Output mesh file")->required();
  c->callback([&] { action = [&] { return mesh_build(mb, out); }; });

  MeshRefine mr;
  c = app.add_subcommand("mesh-refine", "Refine a mesh by geodesic midpoint subdivision");
  c->add_option("--mesh", mr.mesh, "Input mesh file")->required();
  c->add_option("--levels", mr.levels, "Number of refinements");
  c->add_option("--out", mr.out, "Output mesh file")->required();
  c->callback([&] { action = [&] { return mesh_refine(mr, out); }; });

  MeshStatsCmd ms;
  c = app.add_subcommand("mesh-stats", "Quality statistics, one CSV line per level");
  c->add_option("--mesh", ms.mesh, "Input mesh file")->required();
  c->add_option("--levels", ms.levels, "Also report this many refinements");
  c->add_flag("--skip-combinatorial", ms.skip_combinatorial, "Skip diameter and surjectivity radius");
  c->add_option("--out", ms.out, "Output CSV file (default: standard output)");
  c->callback([&] { action = [&] { return mesh_stats(ms, out); }; });

  WeightsCmd wc;
  c = app.add_subcommand("weights", "Attach volume and cotangent weights to a mesh file");
  c->add_option("--mesh", wc.mesh, "Input mesh file")->required();
  c->add_option("--perturb", wc.perturb, "Scale each vertex weight by 1 + U(-p, p)");
  c->add_option("--seed", wc.seed, "Seed for --perturb");
  c->add_option("--defects", wc.defects, "Per-vertex Laplacian defect CSV");
  c->add_option("--out", wc.out, "Output mesh file with weight sections")->required();
  c->callback([&] { action = [&] { return weights_cmd(wc, out); }; });

  FlowRun fr;
  c = app.add_subcommand("flow-run", "Run the discrete heat flow to a tension tolerance");
  c->add_option("--mesh", fr.mesh, "Domain mesh file, optionally with weight sections")->required();
  c->add_option("--map", fr.map, "Start map: id or a map file");
  c->add_option("--target-fn", fr.target_fn, "Target Fenchel-Nielsen coordinates for --map id");
  c->add_option("--target-torus", fr.target_torus, "Target torus periods for --map id");
  c->add_option("--jitter", fr.jitter, "Displace start values by up to this much per frame axis");
  c->add_option("--seed", fr.seed, "Seed for --jitter");
  c->add_option("--dt", fr.dt, "Step size or auto");
  c->add_option("--tol", fr.tol, "Tension tolerance or auto");
  c->add_option("--max-iter", fr.max_iter, "Iteration limit");
  c->add_flag("--timing", fr.timing, "Record wall time per step in the log");
  c->add_option("--log", fr.log, "Flow CSV");
  c->add_option("--out", fr.out, "Final map file");
  c->callback([&] { action = [&] { return flow_run(fr, out); }; });

  StudyRun sr;
  c = app.add_subcommand("study-run", "Run a convergence study from a config file");
  c->add_option("--config", sr.config, "Study config file")->required();
  c->add_option("--out", sr.out, "Output directory")->required();
  c->callback([&] { action = [&] { return study_run(sr, out, err); }; });

  Serve sv;
  c = app.add_subcommand("serve", "Serve flow sessions over TCP until SIGINT or SIGTERM");
  c->add_option("--host", sv.host, "Listen address");
  c->add_option("--port", sv.port, "Listen port, 0 for any");
  c->add_option("--max-level", sv.max_level, "Deepest refinement level a session may reach");
  c->add_option("--max-sessions", sv.max_sessions, "Concurrent session limit");
  c->callback([&] { action = [&] { return serve(sv, out); }; });

  Export ex;
  c = app.add_subcommand("export", "Export a Fuchsian group or a map as text");
  c->add_option("--fn", ex.fn, "Fenchel-Nielsen coordinates of the group");
  c->add_option("--mesh", ex.mesh, "Domain mesh of --map");
  c->add_option("--map", ex.map, "Map file to export as per-vertex CSV");
  c->add_option("--out", ex.out, "Output file")->required();
  c->callback([&] { action = [&] { return export_cmd(ex, out); }; });

  Validate va;
  c = app.add_subcommand("validate", "Check mesh, map and study config files");
  c->add_option("files", va.files, "Files to check")->required();
  c->add_option("--mesh", va.mesh, "Mesh that map files must fit");
  c->callback([&] { action = [&] { return validate_cmd(va, out); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }
  try {
    return action();
  } catch (const NumericError& e) {
    err << "dhm: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "dhm: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"dhm"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace dhm
