#pragma once

#include "dhm/errors.h"
#include "dhm/harmonic.h"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace dhm {

struct SlopeFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  int points = 0; // pairs used in the fit
  int zeros = 0;  // zero values filtered out
  bool exact = false; // every value was zero; slope is +inf
};

// Least squares on (log r, log value). Needs at least three points with
// positive r and nonnegative values; zeros are filtered and counted.
SlopeFit fit_slope(const std::vector<std::pair<double, double>>& points);

enum class TestMapKind { Identity, Linear, Sinusoid, FnPair };
const char* to_string(TestMapKind kind);
TestMapKind parse_test_map(const std::string& name);

struct StudyConfig {
  SurfaceSpec surface;        // torus spec or domain FN coordinates
  std::string base_mesh;      // optional stored base mesh; overrides the built one
  int levels = 4;             // deepest level
  int first_level = 1;
  TestMapKind test_map = TestMapKind::Identity;
  double epsilon = 0.05;      // sinusoid amplitude
  std::array<double, 4> linear{1, 0, 0, 1}; // row-major matrix of the linear map
  FenchelNielsen target_fn;   // fn-pair target
  double step_size = 0;       // 0: default_step_size
  double tension_tol = 0;     // 0: default_tension_tolerance
  long max_iterations = 2000000;
  bool warm_start = true;     // start level n from the prolongated minimizer of level n - 1
  bool run_flows = true;
  double cfl_C = 1.0;
  double cfl_c = 1.0;
  double cfl_d = 2.0;
  bool double_limit = false;
  bool timing = false;
  std::string csv = "study.csv";
  std::string json = "summary.json";
};

// "key = value" lines; '#' starts a comment. Throws DomainError naming the line.
StudyConfig parse_study_config(std::istream& in);

struct ConfigIssue {
  int line = 0; // 0 for problems with the config as a whole
  std::string message;
};
// Collects every problem instead of stopping at the first.
StudyConfig scan_study_config(std::istream& in, std::vector<ConfigIssue>& issues);
void validate_study_config(const StudyConfig& cfg);

// Flat test map with closed-form smooth quantities.
struct FlatTestMap {
  std::function<Point(const Point&)> value;
  std::function<double(const Point&)> density; // e(f)
  std::function<Vec2(const Point&)> tension;   // tau(f)
  std::function<Point(const Point&)> harmonic; // harmonic map homotopic to f
  double energy = 0;                           // E(f)
  DeckGroup target_deck;
};
FlatTestMap flat_test_map(const StudyConfig& cfg);

struct TestFunction {
  std::string name;
  std::function<double(const Point&)> value;
  double integral = 0;
};
// Trigonometric polynomials in lattice coordinates.
std::vector<TestFunction> flat_test_functions(const TorusSpec& torus);
// Sums over the group of radial bumps (1 - (d / R)^2)^3 around five points;
// integrals 2 pi int_0^R psi(s) sinh(s) ds.
std::vector<TestFunction> genus2_test_functions(const FuchsianGroup& group, const FundamentalDomain& domain);

struct MeasureRow {
  std::string function;
  int level = 0;
  double r = 0;
  double error = 0; // |sum mu phi - int phi|
};
std::vector<MeasureRow> measure_convergence(const std::vector<BiweightedMesh>& sequence,
                                            const std::vector<TestFunction>& functions);

struct StudyRow {
  int level = 0;
  double r = 0;
  std::size_t vertices = 0;
  double map_energy = 0;       // E_n(f_n)
  double min_energy = 0;       // E_n(v_n)
  double reference_energy = 0; // E(f), or the deepest E_n(v_n) for fn-pair
  double energy_gap = 0;
  std::array<double, 3> tension_defect{}; // per vertex class
  double density_defect = 0;
  double d_l2 = 0;             // d(v_n, w_n)
  double d_inf = 0;
  double cauchy_l2 = 0;        // d(v_{n-1} prolongated, v_n)
  long iterations = 0;
  double wall_time_ms = 0;
};

struct StudyCheck {
  std::string name;
  double value = 0;
  std::string requirement;
  bool hard = true;
  bool pass = false;
};

struct DoubleLimitRow {
  int level = 0;
  double r = 0;
  long steps = 0;
  double initial_l2 = 0;
  double l2 = 0;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<MeasureRow> measure;
  std::vector<std::pair<std::string, SlopeFit>> slopes;
  std::vector<DoubleLimitRow> double_limit;
  std::vector<StudyCheck> checks;
  bool passed() const;
};

class StudyError : public NumericError {
public:
  StudyError(const std::string& what, StudyResult partial) : NumericError(what), partial_(std::move(partial)) {}
  const StudyResult& partial() const { return partial_; }

private:
  StudyResult partial_;
};

// Minimizers of the last completed study, kept for callers that reuse them.
struct StudyMaps {
  std::vector<DiscreteMap> minimizers;
};

StudyResult run_study(const StudyConfig& cfg, StudyMaps* maps = nullptr);
// Exactly k(n) = ceil(C log(1/r) / r^(c + d)) flow steps per level from the
// initial map. Flat and identity-class references are analytic; fn-pair ones are the deepest
// minimizer, computed unless given.
std::vector<DoubleLimitRow> double_limit_study(const StudyConfig& cfg, const DiscreteMap* reference = nullptr);
// Appends the monotonicity check of a double limit table.
void check_double_limit(StudyResult& result);

void write_study_csv(std::ostream& out, const StudyResult& result);
void write_study_json(std::ostream& out, const StudyConfig& cfg, const StudyResult& result);

} // namespace dhm
