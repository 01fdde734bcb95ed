#include "dhm/cli.h"
#include "dhm/errors.h"
#include "dhm/format.h"
#include "dhm/harmonic.h"
#include "dhm/service.h"
#include "dhm/weights.h"

#include <gtest/gtest.h>
#include <json.hpp>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace dhm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome dhm_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("dhm_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::string& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l)) out.push_back(l);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

void expect_same_stats(const MeshStats& a, const MeshStats& b) {
  EXPECT_EQ(a.level, b.level);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.triangles, b.triangles);
  EXPECT_EQ(a.mesh_size, b.mesh_size);
  EXPECT_EQ(a.min_edge, b.min_edge);
  EXPECT_EQ(a.min_angle, b.min_angle);
  EXPECT_EQ(a.max_angle, b.max_angle);
  EXPECT_EQ(a.min_thickness, b.min_thickness);
  EXPECT_EQ(a.min_edge_ratio, b.min_edge_ratio);
  EXPECT_EQ(a.combinatorial_diameter, b.combinatorial_diameter);
  EXPECT_EQ(a.surjectivity_radius, b.surjectivity_radius);
  EXPECT_EQ(a.is_delaunay_angle, b.is_delaunay_angle);
}

Triangulation read_mesh_file(const std::string& p) {
  std::ifstream in(p);
  return read_mesh(in);
}

ValidationReport validate_text(const std::string& text) {
  std::istringstream in(text);
  return validate_mesh(in);
}

std::string torus_mesh_text(int n) {
  std::ostringstream s;
  write_mesh(s, build_torus_mesh(TorusSpec{1, 1, 0, n}));
  return s.str();
}

// Line number (1-based) of the first line of text starting with prefix.
int line_of(const std::string& text, const std::string& prefix) {
  const auto ls = lines_of(text);
  for (std::size_t i = 0; i < ls.size(); ++i)
    if (ls[i].rfind(prefix, 0) == 0) return static_cast<int>(i) + 1;
  return -1;
}

} // namespace

// === mesh-build, mesh-stats, round trips

TEST_F(Cli, MeshBuildTorusGrid) {
  const Outcome r = dhm_run({"mesh-build", "--torus", "1,1", "--grid", "4", "--out", path("m.mesh")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("V=16"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("chi=0"), std::string::npos) << r.out;
  EXPECT_EQ(lines_of(r.out).size(), 1u);
  const Triangulation m = read_mesh_file(path("m.mesh"));
  EXPECT_EQ(m.num_vertices(), 16u);
  EXPECT_EQ(m.euler_characteristic(), 0);
}

TEST_F(Cli, MeshBuildGenus2RefinesOnRequest) {
  const Outcome r = dhm_run({"mesh-build", "--fn", "2,2,2,0,0,0", "--levels", "1", "--out", path("g.mesh")});
  ASSERT_EQ(r.code, 0) << r.err;
  const Triangulation m = read_mesh_file(path("g.mesh"));
  EXPECT_EQ(m.level(), 1);
  EXPECT_EQ(m.euler_characteristic(), -2);
}

TEST_F(Cli, RoundTripStatsAreBitExact) {
  auto [group, domain] = build_group(FenchelNielsen::parse("2,2,2,0,0,0"));
  for (Triangulation m : {build_torus_mesh(TorusSpec{1.3, 0.8, 0.2, 3}), build_genus2_mesh(group, domain)}) {
    for (int level = 0; level < 3; ++level) {
      std::stringstream s;
      write_mesh(s, m);
      const Triangulation back = read_mesh(s);
      expect_same_stats(quality_stats(m), quality_stats(back));
      for (std::size_t v = 0; v < m.num_vertices(); ++v)
        EXPECT_EQ(m.vertices()[v].coords, back.vertices()[v].coords) << "level " << level << " vertex " << v;
      m = midpoint_refine(m);
    }
  }
}

TEST_F(Cli, MeshStatsCsvMatchesInMemoryStats) {
  ASSERT_EQ(dhm_run({"mesh-build", "--fn", "2,2,2,0,0,0", "--out", path("g.mesh")}).code, 0);
  const Outcome r = dhm_run({"mesh-stats", "--mesh", path("g.mesh"), "--levels", "2", "--out", path("s.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(slurp(path("s.csv")));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(split_csv(rows[0]).size(), 13u);
  Triangulation m = read_mesh_file(path("g.mesh"));
  for (int level = 0; level <= 2; ++level) {
    if (level > 0) m = midpoint_refine(m);
    const MeshStats s = quality_stats(m);
    const auto cells = split_csv(rows[static_cast<std::size_t>(level) + 1]);
    EXPECT_EQ(std::stoi(cells[0]), level);
    EXPECT_EQ(std::stoul(cells[1]), s.vertices);
    EXPECT_EQ(parse_real(cells[4]), s.mesh_size);
    EXPECT_EQ(parse_real(cells[6]), s.min_angle);
    EXPECT_EQ(parse_real(cells[7]), s.max_angle);
    EXPECT_EQ(std::stoi(cells[11]), s.surjectivity_radius);
  }
}

TEST_F(Cli, MeshRefineMatchesLibraryRefinement) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "2", "--out", path("m.mesh")}).code, 0);
  ASSERT_EQ(dhm_run({"mesh-refine", "--mesh", path("m.mesh"), "--levels", "2", "--out", path("r.mesh")}).code, 0);
  const Triangulation r = read_mesh_file(path("r.mesh"));
  const Triangulation expect = midpoint_refine(midpoint_refine(read_mesh_file(path("m.mesh"))));
  EXPECT_EQ(r.level(), 2);
  EXPECT_EQ(r.num_triangles(), 8u * 16u);
  expect_same_stats(quality_stats(r), quality_stats(expect));
}

TEST_F(Cli, MeshStatsToStandardOutput) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "4", "--out", path("m.mesh")}).code, 0);
  const Outcome r = dhm_run({"mesh-stats", "--mesh", path("m.mesh")});
  ASSERT_EQ(r.code, 0);
  const auto ls = lines_of(r.out);
  ASSERT_EQ(ls.size(), 2u);
  EXPECT_EQ(ls[0].rfind("level,vertices,edges,triangles", 0), 0u);
  EXPECT_EQ(split_csv(ls[1])[1], "16");
}

TEST_F(Cli, MeshStatsLeavesCombinatorialFieldsEmptyOnLargeMeshes) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "5", "--out", path("m.mesh")}).code, 0);
  const Outcome r = dhm_run({"mesh-stats", "--mesh", path("m.mesh"), "--levels", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ls = lines_of(r.out);
  ASSERT_EQ(ls.size(), 7u);
  const auto small = split_csv(ls[5]);
  const auto large = split_csv(ls[6]);
  EXPECT_EQ(small[1], "6400");
  EXPECT_FALSE(small[11].empty());
  EXPECT_EQ(large[1], "25600");
  EXPECT_TRUE(large[10].empty());
  EXPECT_TRUE(large[11].empty());
  EXPECT_EQ(large[12], "1");

  const Outcome skipped = dhm_run({"mesh-stats", "--mesh", path("m.mesh"), "--skip-combinatorial"});
  EXPECT_TRUE(split_csv(lines_of(skipped.out)[1])[11].empty());
}

// === weights

TEST_F(Cli, WeightsSectionsRoundTrip) {
  ASSERT_EQ(dhm_run({"mesh-build", "--fn", "2,2,2,0,0,0", "--out", path("g.mesh")}).code, 0);
  ASSERT_EQ(dhm_run({"weights", "--mesh", path("g.mesh"), "--perturb", "0.2", "--seed", "5", "--out", path("w.mesh")}).code, 0);
  std::ifstream in(path("w.mesh"));
  const BiweightedMesh b = read_biweighted(in);
  const BiweightedMesh plain = make_biweighted(read_mesh_file(path("g.mesh")));
  ASSERT_EQ(b.vertex_weights.size(), plain.vertex_weights.size());
  EXPECT_EQ(b.edge_weights, plain.edge_weights);
  bool changed = false;
  for (std::size_t v = 0; v < b.vertex_weights.size(); ++v) {
    const double ratio = b.vertex_weights[v] / plain.vertex_weights[v];
    EXPECT_GE(ratio, 0.8 - 1e-12);
    EXPECT_LE(ratio, 1.2 + 1e-12);
    changed = changed || ratio != 1.0;
  }
  EXPECT_TRUE(changed);
}

TEST_F(Cli, SeedFixesThePerturbation) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "3", "--out", path("m.mesh")}).code, 0);
  for (const char* name : {"a.mesh", "b.mesh"})
    ASSERT_EQ(dhm_run({"weights", "--mesh", path("m.mesh"), "--perturb", "0.1", "--seed", "9", "--out", path(name)}).code, 0);
  ASSERT_EQ(dhm_run({"weights", "--mesh", path("m.mesh"), "--perturb", "0.1", "--seed", "10", "--out", path("c.mesh")}).code, 0);
  EXPECT_EQ(slurp(path("a.mesh")), slurp(path("b.mesh")));
  EXPECT_NE(slurp(path("a.mesh")), slurp(path("c.mesh")));
}

TEST_F(Cli, DefectCsvNeedsClasses) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "2", "--levels", "1", "--out", path("m.mesh")}).code, 0);
  const Outcome r = dhm_run({"weights", "--mesh", path("m.mesh"), "--defects", path("d.csv"), "--out", path("w.mesh")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(slurp(path("d.csv")));
  EXPECT_EQ(rows.size(), 1u + 16u);
  EXPECT_EQ(rows[0], "vertex,class,order1,order2,order3");
}

// === flow-run

TEST_F(Cli, FlowRunReachesTolerance) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "4", "--out", path("m.mesh")}).code, 0);
  const Outcome r = dhm_run({"flow-run", "--mesh", path("m.mesh"), "--map", "id", "--jitter", "0.05", "--seed", "2", "--dt", "auto",
                         "--tol", "1e-8", "--log", path("flow.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(slurp(path("flow.csv")));
  ASSERT_GT(rows.size(), 2u);
  EXPECT_EQ(rows[0], "iteration,energy,tension_l2,step_size,wall_time_ms");
  const auto last = split_csv(rows.back());
  EXPECT_LE(parse_real(last[2]), 1e-8);
  // The resolved step size is the default rule of the mesh.
  const BiweightedMesh b = make_biweighted(read_mesh_file(path("m.mesh")));
  EXPECT_EQ(parse_real(last[3]), default_step_size(b));
  EXPECT_NE(r.out.find("dt " + format_real(default_step_size(b))), std::string::npos) << r.out;
  double prev = parse_real(split_csv(rows[1])[1]);
  for (std::size_t k = 2; k < rows.size(); ++k) {
    const double e = parse_real(split_csv(rows[k])[1]);
    EXPECT_LE(e, prev * (1 + 1e-14));
    prev = e;
  }
}

TEST_F(Cli, FlowRunWritesReadableMap) {
  ASSERT_EQ(dhm_run({"mesh-build", "--fn", "2,2,2,0,0,0", "--out", path("g.mesh")}).code, 0);
  const Outcome r = dhm_run({"flow-run", "--mesh", path("g.mesh"), "--target-fn", "2.2,1.9,2.1,0.3,-0.2,0.1", "--tol", "1e-6",
                         "--out", path("f.map")});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(path("g.mesh"));
  auto domain = std::make_shared<const BiweightedMesh>(read_biweighted(in));
  std::ifstream min(path("f.map"));
  const DiscreteMap f = read_map(min, domain);
  EXPECT_LE(tension_norm(f), 1e-6 * (1 + 1e-9));
  const Outcome v = dhm_run({"validate", path("f.map"), "--mesh", path("g.mesh")});
  EXPECT_EQ(v.code, 0) << v.out;
}

TEST_F(Cli, FlowRunResumesFromMapFile) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "4", "--out", path("m.mesh")}).code, 0);
  const Outcome a = dhm_run({"flow-run", "--mesh", path("m.mesh"), "--jitter", "0.05", "--max-iter", "5", "--out", path("a.map")});
  EXPECT_EQ(a.code, 2);
  EXPECT_NE(a.err.find("did not reach"), std::string::npos) << a.err;
  const Outcome b = dhm_run({"flow-run", "--mesh", path("m.mesh"), "--map", path("a.map"), "--tol", "1e-8"});
  EXPECT_EQ(b.code, 0) << b.err;
}

TEST_F(Cli, DivergentFlowIsNumericError) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "4", "--out", path("m.mesh")}).code, 0);
  const Outcome r = dhm_run({"flow-run", "--mesh", path("m.mesh"), "--jitter", "0.05", "--dt", "1", "--log", path("flow.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(fs::exists(path("flow.csv")));
}

// === study-run

TEST_F(Cli, StudyRunFlatReference) {
  spit(path("study.cfg"),
       "surface = torus\ntorus = 1,1,0,4\ntest_map = sinusoid\nepsilon = 0.05\nfirst_level = 0\nlevels = 4\n");
  const Outcome r = dhm_run({"study-run", "--config", path("study.cfg"), "--out", path("results")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 1u);
  const auto rows = lines_of(slurp(path("results/study.csv")));
  EXPECT_EQ(rows.size(), 6u);
  const auto summary = nlohmann::json::parse(slurp(path("results/summary.json")));
  EXPECT_TRUE(summary["passed"].get<bool>());
  for (const auto& c : summary["checks"])
    if (c["hard"].get<bool>()) EXPECT_TRUE(c["pass"].get<bool>()) << c.dump();
}

TEST_F(Cli, StudyRunFailedHardCheckExitsNonzero) {
  // A single grid cell cannot resolve the sinusoid, so the fitted slopes miss their floors.
  spit(path("study.cfg"),
       "surface = torus\ntorus = 1,1,0,1\ntest_map = sinusoid\nepsilon = 0.3\nfirst_level = 0\nlevels = 2\nrun_flows = false\n");
  const Outcome r = dhm_run({"study-run", "--config", path("study.cfg"), "--out", path("results")});
  const auto summary = nlohmann::json::parse(slurp(path("results/summary.json")));
  EXPECT_EQ(r.code, summary["passed"].get<bool>() ? 0 : 1) << r.err;
}

TEST_F(Cli, StudyRunBadConfigNamesTheLine) {
  spit(path("study.cfg"), "surface = torus\nlevels = many\n");
  const Outcome r = dhm_run({"study-run", "--config", path("study.cfg"), "--out", path("results")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("line 2"), std::string::npos) << r.err;
}

TEST_F(Cli, StudyNonConvergenceWritesPartialCsv) {
  spit(path("study.cfg"), "surface = genus2\nfn = 2,2,2,0,0,0\ntest_map = fn-pair\ntarget_fn = 2.2,1.9,2.1,0.3,-0.2,0.1\n"
                          "first_level = 0\nlevels = 2\nmax_iterations = 10\n");
  const Outcome r = dhm_run({"study-run", "--config", path("study.cfg"), "--out", path("results")});
  EXPECT_EQ(r.code, 2) << r.err;
  EXPECT_TRUE(fs::exists(path("results/study.csv")));
  EXPECT_FALSE(fs::exists(path("results/summary.json")));
}

// === idempotence, atomic writes, locking

TEST_F(Cli, RerunsAreByteIdentical) {
  ASSERT_EQ(dhm_run({"mesh-build", "--fn", "2,2,2,0,0,0", "--out", path("a.mesh")}).code, 0);
  ASSERT_EQ(dhm_run({"mesh-build", "--fn", "2,2,2,0,0,0", "--out", path("b.mesh")}).code, 0);
  EXPECT_EQ(slurp(path("a.mesh")), slurp(path("b.mesh")));

  for (const char* tag : {"1", "2"}) {
    const std::string t(tag);
    ASSERT_EQ(dhm_run({"flow-run", "--mesh", path("a.mesh"), "--target-fn", "2.1,2,2,0.1,0,0", "--tol", "1e-5", "--log",
                       path("flow" + t + ".csv"), "--out", path("f" + t + ".map")})
                  .code,
              0);
  }
  EXPECT_EQ(slurp(path("flow1.csv")), slurp(path("flow2.csv")));
  EXPECT_EQ(slurp(path("f1.map")), slurp(path("f2.map")));

  spit(path("study.cfg"), "surface = torus\ntorus = 1,1,0,3\ntest_map = sinusoid\nfirst_level = 0\nlevels = 3\n");
  for (const char* out : {"r1", "r2"}) ASSERT_EQ(dhm_run({"study-run", "--config", path("study.cfg"), "--out", path(out)}).code, 0);
  EXPECT_EQ(slurp(path("r1/study.csv")), slurp(path("r2/study.csv")));
  EXPECT_EQ(slurp(path("r1/summary.json")), slurp(path("r2/summary.json")));
}

TEST_F(Cli, ThreadCountDoesNotChangeResults) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "24", "--out", path("m.mesh")}).code, 0);
  const char* saved = std::getenv("DHM_THREADS");
  const std::string keep = saved ? saved : "";
  for (const char* threads : {"1", "3"}) {
    ::setenv("DHM_THREADS", threads, 1);
    ASSERT_EQ(dhm_run({"flow-run", "--mesh", path("m.mesh"), "--jitter", "0.01", "--tol", "1e-6", "--log",
                       path(std::string("flow") + threads + ".csv")})
                  .code,
              0);
  }
  if (saved) {
    ::setenv("DHM_THREADS", keep.c_str(), 1);
  } else {
    ::unsetenv("DHM_THREADS");
  }
  EXPECT_EQ(slurp(path("flow1.csv")), slurp(path("flow3.csv")));
}

TEST_F(Cli, AtomicWriteReplacesWithoutLeftovers) {
  spit(path("x.txt"), "old contents\n");
  write_atomic(path("x.txt"), "new\n");
  EXPECT_EQ(slurp(path("x.txt")), "new\n");
  std::size_t entries = 0;
  for (const auto& e : fs::directory_iterator(dir_)) {
    (void)e;
    ++entries;
  }
  EXPECT_EQ(entries, 1u);
  EXPECT_THROW(write_atomic(path("missing/dir/x.txt"), "x"), DomainError);
}

TEST_F(Cli, LockedOutputDirectoryIsRefused) {
  DirectoryLock held(dir_);
  const Outcome r = dhm_run({"mesh-build", "--torus", "1,1", "--grid", "2", "--out", path("m.mesh")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("in use"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(path("m.mesh")));
}

TEST_F(Cli, LockIsReleasedAfterARun) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "2", "--out", path("m.mesh")}).code, 0);
  EXPECT_NO_THROW(DirectoryLock again(dir_));
}

// === exit codes

TEST_F(Cli, UsageErrorsExitNonzero) {
  EXPECT_NE(dhm_run({}).code, 0);
  EXPECT_NE(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "4", "--out", path("m.mesh"), "--bogus"}).code, 0);
  EXPECT_NE(dhm_run({"no-such-command"}).code, 0);
  EXPECT_NE(dhm_run({"mesh-refine", "--levels", "2"}).code, 0);
  EXPECT_EQ(dhm_run({"--help"}).code, 0);
}

TEST_F(Cli, DomainErrorsExitOne) {
  EXPECT_EQ(dhm_run({"mesh-stats", "--mesh", path("absent.mesh")}).code, 1);
  EXPECT_EQ(dhm_run({"mesh-build", "--fn", "2,2,0,0,0,0", "--out", path("g.mesh")}).code, 1);
  EXPECT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--out", path("m.mesh")}).code, 1);
  EXPECT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "2", "--fn", "2,2,2,0,0,0", "--out", path("m.mesh")}).code, 1);
}

// === export

TEST_F(Cli, ExportGroupRoundTrips) {
  ASSERT_EQ(dhm_run({"export", "--fn", "2.2,1.9,2.1,0.3,-0.2,0.1", "--out", path("g.txt")}).code, 0);
  std::ifstream in(path("g.txt"));
  const FuchsianGroup g = read_group(in);
  const FuchsianGroup expect = build_fuchsian_group(FenchelNielsen::parse("2.2,1.9,2.1,0.3,-0.2,0.1"));
  for (int k = 0; k < 4; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        EXPECT_NEAR(static_cast<double>(g.generator(k).matrix()(i, j)), static_cast<double>(expect.generator(k).matrix()(i, j)),
                    1e-15 * std::abs(static_cast<double>(expect.generator(k).matrix()(i, j))) + 1e-300);
}

TEST_F(Cli, ExportMapTable) {
  ASSERT_EQ(dhm_run({"mesh-build", "--torus", "1,1", "--grid", "3", "--out", path("m.mesh")}).code, 0);
  ASSERT_EQ(dhm_run({"flow-run", "--mesh", path("m.mesh"), "--out", path("f.map")}).code, 0);
  ASSERT_EQ(dhm_run({"export", "--mesh", path("m.mesh"), "--map", path("f.map"), "--out", path("f.csv")}).code, 0);
  const auto rows = lines_of(slurp(path("f.csv")));
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0], "vertex,x,y,fx,fy,energy_density");
  // The identity of the unit square torus has energy density 1 everywhere.
  for (std::size_t k = 1; k < rows.size(); ++k) EXPECT_NEAR(parse_real(split_csv(rows[k])[5]), 1.0, 1e-12);
}

// === validation

TEST(Validate, WellFormedMeshHasEmptyReport) {
  const ValidationReport r = validate_text(torus_mesh_text(3));
  EXPECT_TRUE(r.ok());
  EXPECT_TRUE(r.violations.empty());
}

TEST(Validate, WeightedMeshIsWellFormed) {
  auto [group, domain] = build_group(FenchelNielsen::parse("2,2,2,0,0,0"));
  std::ostringstream s;
  write_biweighted(s, make_biweighted(midpoint_refine(build_genus2_mesh(group, domain))));
  const ValidationReport r = validate_text(s.str());
  EXPECT_TRUE(r.ok()) << (r.violations.empty() ? "" : r.violations[0].message);
}

TEST(Validate, MissingVertexNamesTheTriangle) {
  std::string text = torus_mesh_text(2);
  const int tri_header = line_of(text, "triangles");
  auto ls = lines_of(text);
  auto fields = split_whitespace(ls[static_cast<std::size_t>(tri_header) + 2]);
  fields[1] = "42";
  std::string changed;
  for (const auto& f : fields) changed += f + " ";
  ls[static_cast<std::size_t>(tri_header) + 2] = changed;
  text.clear();
  for (const auto& l : ls) text += l + "\n";
  const ValidationReport r = validate_text(text);
  ASSERT_EQ(r.total, 1u);
  EXPECT_EQ(r.violations[0].line, tri_header + 3);
  EXPECT_NE(r.violations[0].message.find("triangle 2"), std::string::npos) << r.violations[0].message;
  EXPECT_NE(r.violations[0].message.find("missing vertex 42"), std::string::npos);
}

TEST(Validate, NonSymmetricEdgeWeightIsAViolation) {
  std::ostringstream s;
  write_biweighted(s, make_biweighted(build_torus_mesh(TorusSpec{1, 1, 0.3, 2})));
  auto ls = lines_of(s.str());
  const int header = line_of(s.str(), "edge_weights");
  auto fields = split_whitespace(ls[static_cast<std::size_t>(header) + 4]);
  fields[3] = format_real(parse_real(fields[3]) + 0.5);
  ls[static_cast<std::size_t>(header) + 4] = fields[0] + " " + fields[1] + " " + fields[2] + " " + fields[3];
  std::string text;
  for (const auto& l : ls) text += l + "\n";
  const ValidationReport r = validate_text(text);
  ASSERT_EQ(r.total, 1u);
  EXPECT_EQ(r.violations[0].line, header + 5);
  EXPECT_NE(r.violations[0].message.find("not symmetric"), std::string::npos);
  std::istringstream in(text);
  EXPECT_THROW(read_biweighted(in), DomainError);
}

TEST(Validate, EdgeWeightEndpointsMustMatchEdges) {
  std::ostringstream s;
  write_biweighted(s, make_biweighted(build_torus_mesh(TorusSpec{1, 1, 0, 2})));
  auto ls = lines_of(s.str());
  const int header = line_of(s.str(), "edge_weights");
  std::swap(ls[static_cast<std::size_t>(header)], ls[static_cast<std::size_t>(header) + 1]);
  std::string text;
  for (const auto& l : ls) text += l + "\n";
  const ValidationReport r = validate_text(text);
  EXPECT_FALSE(r.ok());
}

TEST(Validate, ReportsOnlyTheFirstTenViolations) {
  std::string text = torus_mesh_text(3);
  auto ls = lines_of(text);
  const int first_vertex = line_of(text, "vertices") + 1;
  for (int k = 0; k < 9; ++k) ls[static_cast<std::size_t>(first_vertex - 1 + k)] = "nan 0 2";
  text.clear();
  for (const auto& l : ls) text += l + "\n";
  text += "junk line one\njunk line two\njunk line three\n";
  const ValidationReport r = validate_text(text);
  EXPECT_EQ(r.total, 12u);
  EXPECT_EQ(r.violations.size(), kReportedViolations);
  EXPECT_EQ(r.violations[0].line, first_vertex);
  EXPECT_EQ(r.violations[9].line, static_cast<int>(ls.size()) + 1);
  const auto lines = format_report(r);
  EXPECT_NE(lines.back().find("12 violations (first 10 shown)"), std::string::npos) << lines.back();
}

TEST(Validate, TruncatedTablesAreReportedAtTheNextSection) {
  std::string text = torus_mesh_text(2);
  auto ls = lines_of(text);
  const int tri_header = line_of(text, "triangles");
  ls.erase(ls.begin() + tri_header - 2);
  text.clear();
  for (const auto& l : ls) text += l + "\n";
  const ValidationReport r = validate_text(text);
  ASSERT_GE(r.total, 1u);
  EXPECT_EQ(r.violations[0].line, tri_header - 1);
  EXPECT_NE(r.violations[0].message.find("expected 4 vertex lines, found 3"), std::string::npos) << r.violations[0].message;
}

TEST(Validate, HeaderProblems) {
  const ValidationReport r = validate_text("# dhm mesh v1\ngeometry spherical\nlevel -1\nsurface klein\nvertices 0\ntriangles 0\n");
  ASSERT_EQ(r.total, 3u);
  EXPECT_EQ(r.violations[0].line, 2);
  EXPECT_EQ(r.violations[1].line, 3);
  EXPECT_EQ(r.violations[2].line, 4);
}

TEST(Validate, InconsistentTopologyIsReported) {
  // Reversing one triangle breaks the orientation of the surface.
  std::string text = torus_mesh_text(2);
  auto ls = lines_of(text);
  const int tri_header = line_of(text, "triangles");
  auto f = split_whitespace(ls[static_cast<std::size_t>(tri_header)]);
  std::swap(f[1], f[2]);
  std::swap(f[4], f[5]);
  std::swap(f[6], f[8]);
  std::string changed;
  for (const auto& x : f) changed += x + " ";
  ls[static_cast<std::size_t>(tri_header)] = changed;
  text.clear();
  for (const auto& l : ls) text += l + "\n";
  const ValidationReport r = validate_text(text);
  ASSERT_EQ(r.total, 1u);
  EXPECT_EQ(r.violations[0].line, tri_header);
}

TEST(Validate, MapFileAgainstMesh) {
  const Triangulation m = build_torus_mesh(TorusSpec{1, 1, 0, 2});
  auto domain = std::make_shared<const BiweightedMesh>(make_biweighted(m));
  std::ostringstream s;
  write_map(s, identity_map(domain));
  {
    std::istringstream in(s.str());
    EXPECT_TRUE(validate_map(in, &m).ok());
  }
  const Triangulation bigger = build_torus_mesh(TorusSpec{1, 1, 0, 3});
  std::istringstream in(s.str());
  const ValidationReport r = validate_map(in, &bigger);
  ASSERT_EQ(r.total, 1u);
  EXPECT_EQ(r.violations[0].line, line_of(s.str(), "values"));
}

TEST(Validate, MapValueOutsideDisk) {
  const std::string text = "# dhm map v1\ntarget hyperbolic\ngenerators 0\nvalues 2\n0.1 0.2\n0.9 0.9\n";
  std::istringstream in(text);
  const ValidationReport r = validate_map(in);
  ASSERT_EQ(r.total, 1u);
  EXPECT_EQ(r.violations[0].line, 6);
}

TEST(Validate, ConfigProblemsCarryLines) {
  std::istringstream in("surface = torus\n# comment\nlevels = x\nfoo = 1\nnonsense\n");
  const ValidationReport r = validate_config(in);
  ASSERT_EQ(r.total, 3u);
  EXPECT_EQ(r.violations[0].line, 3);
  EXPECT_EQ(r.violations[1].line, 4);
  EXPECT_EQ(r.violations[2].line, 5);
  std::istringstream whole("surface = torus\nlevels = 1\n");
  const ValidationReport w = validate_config(whole);
  ASSERT_EQ(w.total, 1u);
  EXPECT_EQ(w.violations[0].line, 0);
}

TEST_F(Cli, ValidateCommandDetectsKinds) {
  spit(path("m.mesh"), torus_mesh_text(2));
  spit(path("s.cfg"), "surface = torus\n");
  spit(path("bad.cfg"), "surface = torus\nlevels = 2\nbogus = 1\n");
  const Outcome ok = dhm_run({"validate", path("m.mesh"), path("s.cfg")});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("ok (mesh)"), std::string::npos);
  EXPECT_NE(ok.out.find("ok (config)"), std::string::npos);
  const Outcome bad = dhm_run({"validate", path("bad.cfg")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.out.find(path("bad.cfg") + ":3: unknown key 'bogus'"), std::string::npos) << bad.out;
}

// === serve

#ifdef DHM_CLI_PATH
TEST(Serve, AnswersUntilInterrupted) {
  int pipefd[2];
  ASSERT_EQ(::pipe(pipefd), 0);
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    ::execl(DHM_CLI_PATH, "dhm", "serve", "--port", "0", static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(pipefd[1]);
  FILE* child_out = ::fdopen(pipefd[0], "r");
  char buf[256] = {0};
  ASSERT_NE(std::fgets(buf, sizeof buf, child_out), nullptr);
  const std::string line(buf);
  const auto colon = line.rfind(':');
  ASSERT_NE(colon, std::string::npos) << line;
  const int port = std::stoi(line.substr(colon + 1));
  {
    ServiceClient client("127.0.0.1", port);
    const auto reply = client.request({{"type", "create"}, {"fn_domain", "2,2,2,0,0,0"}, {"fn_target", "2,2,2,0,0,0"}, {"level", 0}});
    EXPECT_TRUE(reply["ok"].get<bool>()) << reply.dump();
  }
  ::kill(pid, SIGINT);
  int status = 0;
  ASSERT_EQ(::waitpid(pid, &status, 0), pid);
  EXPECT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  std::fclose(child_out);
}
#endif
