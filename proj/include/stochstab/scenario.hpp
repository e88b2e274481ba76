#pragma once

// Scenario descriptors: JSON documents that name a system, a candidate, a
// rate, targets, and the run settings, either inline through the expression
// grammar or by referencing a built-in. The document is the identity of a
// scenario; loading normalizes it, serialization round-trips it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stochstab/expr.hpp"
#include "stochstab/feedback.hpp"
#include "stochstab/model.hpp"
#include "stochstab/simulator.hpp"
#include "stochstab/verifier.hpp"

namespace stochstab {

using json = nlohmann::json;

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Policy { Witness, Synthesized, Zero, Constant };

struct VerifySettings {
  ConditionKind condition = ConditionKind::Clf;
  RegionSampler sampler = RegionSampler::explicit_points({});
  std::uint64_t seed = 0;
  double min_pass_fraction = 1.0;
  Tolerances tolerances;
  bool enabled = false;
};

struct SimulationSettings {
  Vector x0;
  double dt = 1e-3;
  double horizon = 1.0;
  int paths = 100;
  std::uint64_t master_seed = 0;
  double blowup_radius = 1e6;
  int checkpoints = 64;
};

struct CsvSettings {
  int stride = 1;
  int max_paths = 16;
  std::string layout = "long";  // "long" or "per-path"
};

struct SynthesisSettings {
  int probe_count = 200;
  double r_min = 1e-3;
  double r_max = 1.0;
  std::uint64_t seed = 0x5EEDF00Dull;
  double margin_tol = 1e-8;
  double orth_tol = 1e-8;
};

struct ComparisonSettings {
  std::vector<double> radii;
  int angular_samples = 360;
  bool enabled = false;
};

struct Scenario {
  json doc;
  std::string name;
  std::string description;
  std::optional<std::string> builtin_id;

  std::optional<ControlSystem> system;
  std::optional<AffineSystem> affine;
  LyapunovCandidate candidate;
  RateFn rate;  // may be empty
  double lambda = 0.0;
  std::vector<TargetSet> targets;

  VerifySettings verify;
  SimulationSettings simulation;
  CsvSettings csv;
  SynthesisSettings synthesis;
  ComparisonSettings comparison;
  Policy policy = Policy::Witness;
  Vector constant_control;
  std::set<std::string> stages;  // verify, synthesize, simulate, certify
  std::string metric = "norm";   // or "target-distance"
  bool check_positive_definite = true;
  json certificates = json::array();

  bool has_stage(const std::string& s) const { return stages.count(s) > 0; }
};

inline std::string serialize_scenario(const Scenario& s) {
  return s.doc.dump(2) + "\n";
}

struct BuiltinInfo {
  std::string id;
  std::string summary;
};

namespace scenario_detail {

inline std::vector<std::string> coord_names(const char* stem, int n) {
  std::vector<std::string> names;
  for (int i = 1; i <= n; ++i) names.push_back(stem + std::to_string(i));
  return names;
}

inline Expression compile_field(const std::string& src,
                                const std::vector<std::string>& vars,
                                const std::string& field) {
  try {
    return Expression::compile(src, vars);
  } catch (const ParseError& e) {
    throw ParseError(e.line, e.column,
                     "in '" + field + "': " + std::string(e.what()));
  }
}

inline DriftFn make_drift(const json& arr, int n, int p,
                          const std::string& field) {
  std::vector<std::string> vars = coord_names("x", n);
  for (auto& u : coord_names("u", p)) vars.push_back(u);
  std::vector<Expression> comps;
  for (std::size_t i = 0; i < arr.size(); ++i)
    comps.push_back(compile_field(arr[i].get<std::string>(), vars,
                                  field + "[" + std::to_string(i) + "]"));
  if (static_cast<int>(comps.size()) != n)
    throw ScenarioError(field + ": expected " + std::to_string(n) +
                        " components");
  return [comps, n, p](const Vector& x, const Vector& a) {
    std::vector<double> vars(n + p);
    for (int i = 0; i < n; ++i) vars[i] = x[i];
    for (int i = 0; i < p; ++i) vars[n + i] = a[i];
    Vector out(n);
    for (int i = 0; i < n; ++i) out[i] = comps[i](vars);
    return out;
  };
}

inline DispersionFn make_dispersion(const json& rows, int n, int m, int p,
                                    const std::string& field) {
  std::vector<std::string> vars = coord_names("x", n);
  for (auto& u : coord_names("u", p)) vars.push_back(u);
  if (static_cast<int>(rows.size()) != n)
    throw ScenarioError(field + ": expected " + std::to_string(n) + " rows");
  std::vector<std::vector<Expression>> comps(n);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != m)
      throw ScenarioError(field + ": row " + std::to_string(i) +
                          " needs " + std::to_string(m) + " columns");
    for (int j = 0; j < m; ++j)
      comps[i].push_back(compile_field(
          rows[i][j].get<std::string>(), vars,
          field + "[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
  }
  return [comps, n, m, p](const Vector& x, const Vector& a) {
    std::vector<double> vars(n + p);
    for (int i = 0; i < n; ++i) vars[i] = x[i];
    for (int i = 0; i < p; ++i) vars[n + i] = a[i];
    Matrix out(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) out(i, j) = comps[i][j](vars);
    return out;
  };
}

inline VectorField make_field(const json& arr, int n,
                              const std::string& field) {
  const auto vars = coord_names("x", n);
  std::vector<Expression> comps;
  for (std::size_t i = 0; i < arr.size(); ++i)
    comps.push_back(compile_field(arr[i].get<std::string>(), vars,
                                  field + "[" + std::to_string(i) + "]"));
  if (static_cast<int>(comps.size()) != n)
    throw ScenarioError(field + ": expected " + std::to_string(n) +
                        " components");
  return [comps, n](const Vector& x) {
    std::vector<double> vars(n);
    for (int i = 0; i < n; ++i) vars[i] = x[i];
    Vector out(n);
    for (int i = 0; i < n; ++i) out[i] = comps[i](vars);
    return out;
  };
}

inline std::function<double(const Vector&)> make_scalar(
    const std::string& src, int n, const std::string& field) {
  const auto expr = compile_field(src, coord_names("x", n), field);
  return [expr, n](const Vector& x) {
    std::vector<double> vars(n);
    for (int i = 0; i < n; ++i) vars[i] = x[i];
    return expr(vars);
  };
}

inline ControlSet make_controls(const json& spec) {
  const std::string kind = spec.at("kind").get<std::string>();
  if (kind == "points") {
    std::vector<Vector> pts;
    for (const auto& row : spec.at("points")) {
      Vector p(row.size());
      for (std::size_t i = 0; i < row.size(); ++i) p[i] = row[i].get<double>();
      pts.push_back(std::move(p));
    }
    return ControlSet::points(std::move(pts));
  }
  if (kind == "box") {
    const auto& lo = spec.at("lo");
    const auto& hi = spec.at("hi");
    const auto& counts = spec.at("counts");
    Vector vlo(lo.size()), vhi(hi.size());
    std::vector<int> vc;
    for (std::size_t i = 0; i < lo.size(); ++i) vlo[i] = lo[i].get<double>();
    for (std::size_t i = 0; i < hi.size(); ++i) vhi[i] = hi[i].get<double>();
    for (const auto& c : counts) vc.push_back(c.get<int>());
    return ControlSet::box(vlo, vhi, vc);
  }
  throw ScenarioError("controls: unknown kind '" + kind + "'");
}

inline Vector to_vector(const json& arr) {
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

inline json from_vector(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline TargetSet make_target(const json& spec, int dim) {
  const std::string kind = spec.at("kind").get<std::string>();
  const std::string name = spec.value("name", kind);
  if (kind == "ball")
    return TargetSet::ball(to_vector(spec.at("center")),
                           spec.at("radius").get<double>(), name);
  if (kind == "complement-of-ball")
    return TargetSet::complement_of_ball(to_vector(spec.at("center")),
                                         spec.at("radius").get<double>(),
                                         name);
  if (kind == "zero-set")
    return TargetSet::zero_set(
        make_scalar(spec.at("fn").get<std::string>(), dim, "target.fn"), name);
  if (kind == "sublevel")
    return TargetSet::sublevel(
        make_scalar(spec.at("fn").get<std::string>(), dim, "target.fn"),
        spec.at("level").get<double>(), name);
  throw ScenarioError("target: unknown kind '" + kind + "'");
}

// exact-zero oscillation factor: sin(pi u)^2 through argument reduction,
// zero whenever u is exactly integer
inline double sin_pi_squared(double u) {
  if (!std::isfinite(u)) return 0.0;
  const double t = u - std::nearbyint(u);
  const double s = std::sin(std::numbers::pi * t);
  return s * s;
}

}  // namespace scenario_detail

// ---------------------------------------------------------------------------
// built-in catalog

namespace builtin_detail {

using scenario_detail::sin_pi_squared;

// start radii whose computed 1/(rho*rho) is exactly the circle index;
// for n = 2 no such double exists and bit-exactness relies on increments
// rounding away below half an ulp
inline double circle_radius(int n) {
  switch (n) {
    case 2: return 0.7071067811865475;
    case 3: return 0.5773502691896257;
    case 4: return 0.5;
    case 5: return 0.4472135954999579;
    case 6: return 0.408248290463863;
    default: return 1.0 / std::sqrt(static_cast<double>(n));
  }
}

inline json base_doc(const std::string& id, const std::string& name,
                     const std::string& description) {
  json d;
  d["builtin"] = id;
  d["name"] = name;
  d["description"] = description;
  d["stages"] = {"verify", "simulate", "certify"};
  d["policy"] = "witness";
  d["metric"] = "norm";
  d["check_positive_definite"] = true;
  d["csv"] = {{"stride", 20}, {"max_paths", 10}, {"layout", "long"}};
  d["verify"] = {{"condition", "clf"},
                 {"seed", 2026},
                 {"min_pass_fraction", 1.0},
                 {"tolerances",
                  {{"orth_tol", 1e-8},
                   {"margin_tol", 1e-9},
                   {"boundary_tol", 1e-6}}}};
  d["certificates"] = json::array();
  return d;
}

}  // namespace builtin_detail

Scenario make_builtin(const std::string& id);

inline std::vector<BuiltinInfo> list_builtins() {
  return {
      {"krasovskii",
       "planar diffusion with invariant circles and a step candidate"},
      {"perturbed-drift", "scaled linear drift with tangential noise"},
      {"perturbed-coupled",
       "coupled pair steered to the axis of its noisy companion"},
      {"radial-affine", "control-affine radial system with synthesis"},
      {"polar-radial", "polar coordinates contracting in the radius"},
      {"exterior-ball", "driftless steering out of the unit ball"},
      {"periodic-orbit", "unit circle as an attracting target set"},
      {"linear-tangential", "rotating noise with a known decay rate"},
      {"deterministic-linear", "noise-free contraction with entry bounds"},
  };
}

namespace builtin_detail {

inline Scenario krasovskii() {
  Scenario s;
  const auto osc = [](double rho) {
    if (rho <= 0.0) return 0.0;
    return sin_pi_squared(1.0 / (rho * rho));
  };

  ControlSystem sys;
  sys.name = "krasovskii";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::points({Vector::Zero(1)});
  sys.drift = [osc](const Vector& x, const Vector&) {
    const double rho = x[0];
    const double th = x[1];
    const double o = osc(rho);
    Vector f(2);
    const double r2 = rho * rho;
    const double r6 = r2 * r2 * r2;
    f[0] = r6 * rho * std::sin(th) * std::sin(th) * o;
    f[1] = -1.0 + r6 * std::sin(th) * std::cos(th) * o;
    return f;
  };
  sys.dispersion = [osc](const Vector& x, const Vector&) {
    const double rho = x[0];
    Matrix m(2, 1);
    const double fac = std::clamp(rho * (1.0 - rho), 0.0, 1.0);
    m(0, 0) = fac * osc(rho);
    m(1, 0) = 0.0;
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "step-candidate";
  v.value = [](const Vector& x) {
    const double rho = x[0];
    if (rho <= 0.0) return 0.0;
    const double u = 1.0 / (rho * rho);
    if (u < 1.0) return 1.0;
    return 1.0 / std::sqrt(std::floor(u) + 1.0);
  };
  v.subjet = [](const Vector& x) -> std::vector<SubjetElement> {
    const double rho = x[0];
    std::vector<SubjetElement> out;
    const double u = rho > 0.0 ? 1.0 / (rho * rho) : 0.0;
    const double nearest = std::nearbyint(u);
    const bool on_circle =
        rho > 0.0 && nearest >= 2.0 && std::abs(u - nearest) <= 1e-9;
    if (on_circle) {
      Vector p1(2), p0(2), p2(2);
      p1 << 1.0, 0.0;
      p0 << 0.0, 0.0;
      p2 << 2.0, 0.0;
      Matrix y0 = Matrix::Zero(2, 2);
      Matrix y1 = Matrix::Zero(2, 2);
      y1(1, 1) = -1.0;
      Matrix y2(2, 2);
      y2 << 0.5, 0.3, 0.3, -1.0;
      out.push_back({p1, y0});
      out.push_back({p0, y1});
      out.push_back({p2, y2});
    } else {
      Vector zero = Vector::Zero(2);
      out.push_back({zero, Matrix(Matrix::Zero(2, 2))});
      out.push_back({zero, Matrix(-Matrix::Identity(2, 2))});
    }
    return out;
  };
  s.candidate = v;
  s.rate = [](const Vector&) { return 0.0; };

  json d = base_doc(
      "krasovskii", "krasovskii",
      "Planar system whose coefficients vanish on the circles rho = "
      "1/sqrt(n). The lower semicontinuous step candidate certifies "
      "stability; paths started on a circle never leave it.");
  d["check_positive_definite"] = false;  // polar coordinates (rho, theta)
  json pts = json::array();
  for (int n = 2; n <= 6; ++n)
    for (double th : {0.3, 1.7, 4.0})
      pts.push_back({circle_radius(n), th});
  for (auto band : {std::pair{0.55, 1.0}, std::pair{0.62, 2.2},
                    std::pair{0.8, 5.5}, std::pair{0.45, 0.1}})
    pts.push_back({band.first, band.second});
  d["verify"]["sampler"] = {{"kind", "explicit"}, {"points", pts}};
  d["simulation"] = {{"x0", {circle_radius(2), 0.7853981633974483}},
                     {"dt", 1e-3},
                     {"horizon", 10.0},
                     {"paths", 100},
                     {"master_seed", 424242},
                     {"blowup_radius", 1e6},
                     {"checkpoints", 50}};
  d["certificates"] = {{{"type", "decrease"}, {"tol", 1e-9}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario perturbed_drift() {
  Scenario s;
  ControlSystem sys;
  sys.name = "perturbed-drift";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::box(Vector::Constant(1, -1.0),
                                 Vector::Constant(1, 1.0), {5});
  sys.drift = [](const Vector& x, const Vector& a) {
    return Vector(a[0] * x);
  };
  sys.dispersion = [](const Vector& x, const Vector&) {
    Matrix m(2, 1);
    m(0, 0) = -0.7 * x[1];
    m(1, 0) = 0.7 * x[0];
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "square-norm";
  v.value = [](const Vector& x) { return x[0] * x[0] + x[1] * x[1]; };
  v.gradient = [](const Vector& x) { return Vector(2.0 * x); };
  v.hessian = [](const Vector& x) {
    return Matrix(2.0 * Matrix::Identity(x.size(), x.size()));
  };
  s.candidate = v;
  s.rate = [](const Vector& x) {
    return 1.4 * (x[0] * x[0] + x[1] * x[1]);
  };

  json d = base_doc(
      "perturbed-drift", "perturbed-drift",
      "Drift alpha x with alpha in [-1, 1] and rotational noise orthogonal "
      "to the candidate gradient; the strict decrease holds at rate 1.4|x|^2.");
  d["verify"]["condition"] = "strict-clf";
  d["verify"]["seed"] = 7001;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.2}, {"r_max", 2.0}, {"count", 300}};
  d["simulation"] = {{"x0", {1.2, 0.0}},      {"dt", 1e-3},
                     {"horizon", 6.0},        {"paths", 100},
                     {"master_seed", 90210},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["comparison"] = {{"radii", {0.25, 0.5, 1.0, 2.0, 4.0}},
                     {"angular_samples", 360}};
  d["certificates"] = {{{"type", "stability"},
                        {"bound", "fitted"},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.12},
                        {"min_fraction", 1.0},
                        {"min_converged_fraction", 0.99}},
                       {{"type", "decrease"}, {"tol", 0.08}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario perturbed_coupled() {
  Scenario s;
  ControlSystem sys;
  sys.name = "perturbed-coupled";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::box(Vector::Constant(1, -1.0),
                                 Vector::Constant(1, 1.0), {5});
  sys.drift = [](const Vector& x, const Vector& a) {
    Vector f(2);
    f[0] = (a[0] + 0.5 * std::sin(x[1])) * x[0];
    f[1] = -x[1];
    return f;
  };
  sys.dispersion = [](const Vector&, const Vector&) {
    Matrix m(2, 1);
    m(0, 0) = 0.0;
    m(1, 0) = 0.4;
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "first-coordinate-square";
  v.value = [](const Vector& x) { return x[0] * x[0]; };
  v.gradient = [](const Vector& x) {
    Vector g(2);
    g << 2.0 * x[0], 0.0;
    return g;
  };
  v.hessian = [](const Vector&) {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 2.0;
    return h;
  };
  s.candidate = v;
  s.rate = [](const Vector& x) { return x[0] * x[0]; };
  s.targets.push_back(TargetSet::zero_set(
      [](const Vector& x) { return x[0]; }, "first-axis"));

  json d = base_doc(
      "perturbed-coupled", "perturbed-coupled",
      "First coordinate steered to zero while the second runs an "
      "autonomous noisy relaxation; stabilization is to the set {x1 = 0}.");
  d["check_positive_definite"] = false;  // candidate measures x1 only
  d["metric"] = "target-distance";
  d["verify"]["condition"] = "set-clf";
  d["verify"]["seed"] = 7002;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.1}, {"r_max", 1.5}, {"count", 300}};
  d["targets"] = {{{"kind", "zero-set"}, {"fn", "x1"}, {"name", "first-axis"}}};
  d["simulation"] = {{"x0", {1.0, 0.5}},      {"dt", 1e-3},
                     {"horizon", 8.0},        {"paths", 100},
                     {"master_seed", 31337},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["certificates"] = {{{"type", "stability"},
                        {"bound", {{"factor", 1.0}}},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.1},
                        {"min_fraction", 1.0}},
                       {{"type", "decrease"}, {"tol", 0.01}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario radial_affine() {
  Scenario s;
  ControlSystem sys;
  sys.name = "radial-affine";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::box(Vector::Constant(1, -2.0),
                                 Vector::Constant(1, 2.0), {21});
  sys.drift = [](const Vector& x, const Vector& a) {
    return Vector((0.1 + a[0]) * x);
  };
  sys.dispersion = [](const Vector& x, const Vector&) {
    Matrix m(2, 1);
    m(0, 0) = -0.2 * x[1];
    m(1, 0) = 0.2 * x[0];
    return m;
  };
  s.system = sys;

  s.affine = AffineSystem::create(
      2, [](const Vector& x) { return Vector(0.1 * x); },
      {[](const Vector& x) { return x; }},
      [](const Vector& x) {
        Vector col(2);
        col << -0.2 * x[1], 0.2 * x[0];
        return col;
      },
      nullptr, std::vector<std::array<double, 2>>{{-2.0, 2.0}},
      "radial-affine");

  LyapunovCandidate v;
  v.name = "half-square-norm";
  v.value = [](const Vector& x) { return 0.5 * (x[0] * x[0] + x[1] * x[1]); };
  v.gradient = [](const Vector& x) { return x; };
  v.hessian = [](const Vector& x) {
    return Matrix(Matrix::Identity(x.size(), x.size()));
  };
  s.candidate = v;
  s.rate = [](const Vector& x) {
    return 0.3 * (x[0] * x[0] + x[1] * x[1]);
  };

  json d = base_doc(
      "radial-affine", "radial-affine",
      "Unstable radial drift with one radial control channel and "
      "tangential noise; the universal formula yields a constant gain.");
  d["policy"] = "synthesized";
  d["stages"] = {"verify", "synthesize", "simulate", "certify"};
  d["verify"]["condition"] = "strict-clf";
  d["verify"]["seed"] = 7003;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.2}, {"r_max", 1.5}, {"count", 300}};
  d["synthesis"] = {{"probe_count", 200}, {"r_min", 1e-3}, {"r_max", 1.2},
                    {"seed", 901},        {"margin_tol", 1e-8},
                    {"orth_tol", 1e-8}};
  d["simulation"] = {{"x0", {1.0, 0.0}},       {"dt", 1e-3},
                     {"horizon", 8.0},         {"paths", 200},
                     {"master_seed", 555777},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["comparison"] = {{"radii", {0.25, 0.5, 1.0, 2.0}},
                     {"angular_samples", 360}};
  d["certificates"] = {{{"type", "stability"},
                        {"bound", "fitted"},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.1},
                        {"min_fraction", 0.99},
                        {"min_converged_fraction", 0.99}},
                       {{"type", "decrease"}, {"tol", 0.05}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario polar_radial() {
  Scenario s;
  ControlSystem sys;
  sys.name = "polar-radial";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  {
    Vector m1(1), z(1), p1(1);
    m1 << -1.0;
    z << 0.0;
    p1 << 1.0;
    sys.controls = ControlSet::points({m1, z, p1});
  }
  sys.drift = [](const Vector& x, const Vector& a) {
    Vector f(2);
    f[0] = (a[0] - 0.5) * x[0];
    f[1] = 1.0;
    return f;
  };
  sys.dispersion = [](const Vector& x, const Vector& a) {
    Matrix m(2, 1);
    m(0, 0) = a[0] * x[0];
    m(1, 0) = 0.2 * x[0];
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "radius-square";
  v.value = [](const Vector& x) { return x[0] * x[0]; };
  v.gradient = [](const Vector& x) {
    Vector g(2);
    g << 2.0 * x[0], 0.0;
    return g;
  };
  v.hessian = [](const Vector&) {
    Matrix h = Matrix::Zero(2, 2);
    h(0, 0) = 2.0;
    return h;
  };
  s.candidate = v;
  s.rate = [](const Vector& x) { return 0.5 * x[0] * x[0]; };
  s.targets.push_back(TargetSet::zero_set(
      [](const Vector& x) { return x[0]; }, "zero-radius"));

  json d = base_doc(
      "polar-radial", "polar-radial",
      "Polar model (rho, theta): only the control that silences the radial "
      "noise channel passes the orthogonality filter, and it contracts rho.");
  d["check_positive_definite"] = false;  // polar coordinates
  d["metric"] = "target-distance";
  d["verify"]["condition"] = "set-clf";
  d["verify"]["seed"] = 7004;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.2}, {"r_max", 1.5}, {"count", 200}};
  d["targets"] = {
      {{"kind", "zero-set"}, {"fn", "x1"}, {"name", "zero-radius"}}};
  d["simulation"] = {{"x0", {1.0, 0.0}},       {"dt", 1e-3},
                     {"horizon", 8.0},         {"paths", 100},
                     {"master_seed", 606060},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["certificates"] = {{{"type", "stability"},
                        {"bound", {{"factor", 1.0}}},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.1},
                        {"min_fraction", 1.0}},
                       {{"type", "decrease"}, {"tol", 0.01}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario exterior_ball() {
  Scenario s;
  ControlSystem sys;
  sys.name = "exterior-ball";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::box(Vector::Constant(1, 0.0),
                                 Vector::Constant(1, 6.283185307179586),
                                 {128});
  sys.drift = [](const Vector&, const Vector&) {
    return Vector(Vector::Zero(2));
  };
  sys.dispersion = [](const Vector&, const Vector& a) {
    Matrix m(2, 1);
    m(0, 0) = 0.5 * std::cos(a[0]);
    m(1, 0) = 0.5 * std::sin(a[0]);
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "interior-gap";
  v.value = [](const Vector& x) {
    return std::max(1.0 - x.squaredNorm(), 0.0);
  };
  v.gradient = [](const Vector& x) {
    return Vector(x.squaredNorm() < 1.0 ? Vector(-2.0 * x)
                                        : Vector(Vector::Zero(2)));
  };
  v.hessian = [](const Vector& x) {
    return Matrix(x.squaredNorm() < 1.0
                      ? Matrix(-2.0 * Matrix::Identity(2, 2))
                      : Matrix(Matrix::Zero(2, 2)));
  };
  s.candidate = v;
  s.rate = [](const Vector&) { return 0.2; };
  s.targets.push_back(
      TargetSet::complement_of_ball(Vector::Zero(2), 1.0, "exterior"));

  json d = base_doc(
      "exterior-ball", "exterior-ball",
      "Driftless system pointing its dispersion in any direction; the gap "
      "candidate 1 - |x|^2 drives paths out of the unit ball in finite "
      "time. The direction grid makes exact orthogonality unreachable, so "
      "the filter tolerance is widened to 0.02.");
  d["check_positive_definite"] = false;  // candidate vanishes outside
  d["verify"]["condition"] = "set-clf";
  d["verify"]["seed"] = 7005;
  d["verify"]["tolerances"]["orth_tol"] = 0.02;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.15}, {"r_max", 0.9}, {"count", 200}};
  d["targets"] = {{{"kind", "complement-of-ball"},
                   {"center", {0.0, 0.0}},
                   {"radius", 1.0},
                   {"name", "exterior"}}};
  d["simulation"] = {{"x0", {0.5, 0.0}},       {"dt", 1e-3},
                     {"horizon", 6.0},         {"paths", 100},
                     {"master_seed", 717171},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["certificates"] = {{{"type", "entry-bound"},
                        {"target", 0},
                        {"rate_floor", 0.2},
                        {"inf_boundary_v", 0.0},
                        {"slack_dt", true},
                        {"min_fraction", 0.97}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario periodic_orbit() {
  Scenario s;
  ControlSystem sys;
  sys.name = "periodic-orbit";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  {
    Vector z(1), p1(1);
    z << 0.0;
    p1 << 1.0;
    sys.controls = ControlSet::points({z, p1});
  }
  sys.drift = [](const Vector& x, const Vector& a) {
    const double gap = 1.0 - x.squaredNorm();
    return Vector(a[0] * gap * x);
  };
  sys.dispersion = [](const Vector& x, const Vector&) {
    const double gap = 1.0 - x.squaredNorm();
    Matrix m(2, 1);
    m(0, 0) = -0.2 * gap * x[1];
    m(1, 0) = 0.2 * gap * x[0];
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "orbit-gap-square";
  v.value = [](const Vector& x) {
    const double gap = x.squaredNorm() - 1.0;
    return gap * gap;
  };
  v.gradient = [](const Vector& x) {
    return Vector(4.0 * (x.squaredNorm() - 1.0) * x);
  };
  v.hessian = [](const Vector& x) {
    Matrix h = 4.0 * (x.squaredNorm() - 1.0) * Matrix::Identity(2, 2);
    h += 8.0 * x * x.transpose();
    return h;
  };
  s.candidate = v;
  s.rate = [](const Vector& x) {
    const double r2 = x.squaredNorm();
    const double gap = 1.0 - r2;
    return 2.0 * r2 * gap * gap;
  };
  s.targets.push_back(TargetSet::zero_set(
      [](const Vector& x) { return x.norm() - 1.0; }, "unit-circle"));

  json d = base_doc(
      "periodic-orbit", "periodic-orbit",
      "The unit circle is an attracting invariant set: the gap candidate "
      "(|x|^2 - 1)^2 decreases strictly off the circle inside the working "
      "annulus, from either side.");
  d["check_positive_definite"] = false;  // candidate vanishes on the circle
  d["metric"] = "target-distance";
  d["verify"]["condition"] = "set-clf";
  d["verify"]["seed"] = 7006;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.5}, {"r_max", 1.5}, {"count", 240}};
  d["targets"] = {{{"kind", "zero-set"},
                   {"fn", "norm(x1, x2) - 1"},
                   {"name", "unit-circle"}}};
  d["simulation"] = {{"x0", {1.4, 0.0}},       {"dt", 1e-3},
                     {"horizon", 8.0},         {"paths", 100},
                     {"master_seed", 808080},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["certificates"] = {{{"type", "stability"},
                        {"bound", {{"factor", 2.1}}},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.05},
                        {"min_fraction", 1.0}},
                       {{"type", "attractor"},
                        {"target", 0},
                        {"threshold", 0.02}},
                       {{"type", "decrease"}, {"tol", 0.02}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario linear_tangential() {
  Scenario s;
  ControlSystem sys;
  sys.name = "linear-tangential";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::points({Vector::Zero(1)});
  sys.drift = [](const Vector& x, const Vector&) { return Vector(-x); };
  sys.dispersion = [](const Vector& x, const Vector&) {
    Matrix m(2, 1);
    m(0, 0) = -0.5 * x[1];
    m(1, 0) = 0.5 * x[0];
    return m;
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "square-norm";
  v.value = [](const Vector& x) { return x[0] * x[0] + x[1] * x[1]; };
  v.gradient = [](const Vector& x) { return Vector(2.0 * x); };
  v.hessian = [](const Vector& x) {
    return Matrix(2.0 * Matrix::Identity(x.size(), x.size()));
  };
  s.candidate = v;
  s.rate = [](const Vector& x) {
    return 1.5 * (x[0] * x[0] + x[1] * x[1]);
  };

  json d = base_doc(
      "linear-tangential", "linear-tangential",
      "Linear contraction with rotational noise tangent to the candidate's "
      "level sets: V(X_t) carries no martingale part and decays at the "
      "exact rate 2 - kappa^2/2 = 1.75.");
  d["verify"]["condition"] = "strict-clf";
  d["verify"]["seed"] = 7007;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.2}, {"r_max", 2.0}, {"count", 200}};
  d["simulation"] = {{"x0", {1.0, 0.0}},       {"dt", 1e-3},
                     {"horizon", 5.0},         {"paths", 200},
                     {"master_seed", 131415},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["comparison"] = {{"radii", {0.25, 0.5, 1.0, 2.0}},
                     {"angular_samples", 360}};
  d["certificates"] = {{{"type", "rate"},
                        {"expected", 1.75},
                        {"rel_tol", 0.05}},
                       {{"type", "stability"},
                        {"bound", "fitted"},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.2},
                        {"min_fraction", 1.0}},
                       {{"type", "noise-free-v"}, {"factor", 10.0}},
                       {{"type", "decrease"}, {"tol", 0.01}}};
  s.doc = std::move(d);
  return s;
}

inline Scenario deterministic_linear() {
  Scenario s;
  ControlSystem sys;
  sys.name = "deterministic-linear";
  sys.dim_state = 2;
  sys.dim_noise = 1;
  sys.controls = ControlSet::points({Vector::Zero(1)});
  sys.drift = [](const Vector& x, const Vector&) { return Vector(-x); };
  sys.dispersion = [](const Vector&, const Vector&) {
    return Matrix(Matrix::Zero(2, 1));
  };
  s.system = sys;

  LyapunovCandidate v;
  v.name = "square-norm";
  v.value = [](const Vector& x) { return x[0] * x[0] + x[1] * x[1]; };
  v.gradient = [](const Vector& x) { return Vector(2.0 * x); };
  v.hessian = [](const Vector& x) {
    return Matrix(2.0 * Matrix::Identity(x.size(), x.size()));
  };
  s.candidate = v;
  s.rate = [](const Vector& x) {
    return 2.0 * (x[0] * x[0] + x[1] * x[1]);
  };
  s.targets.push_back(TargetSet::ball(Vector::Zero(2), 1.0, "unit-ball"));

  json d = base_doc(
      "deterministic-linear", "deterministic-linear",
      "Noise-free contraction dX = -X dt from |x0| = 2: enters the unit "
      "ball at t = ln 2 and respects the entry budget (V(x0) - 1)/2 = 1.5.");
  d["verify"]["condition"] = "strict-clf";
  d["verify"]["seed"] = 7008;
  d["verify"]["sampler"] = {
      {"kind", "annulus"}, {"r_min", 0.2}, {"r_max", 2.5}, {"count", 200}};
  d["targets"] = {{{"kind", "ball"},
                   {"center", {0.0, 0.0}},
                   {"radius", 1.0},
                   {"name", "unit-ball"}}};
  d["simulation"] = {{"x0", {2.0, 0.0}},   {"dt", 1e-3},
                     {"horizon", 3.0},     {"paths", 100},
                     {"master_seed", 99},  {"blowup_radius", 1e6},
                     {"checkpoints", 64}};
  d["comparison"] = {{"radii", {0.25, 0.5, 1.0, 2.0, 3.0}},
                     {"angular_samples", 360}};
  d["csv"] = {{"stride", 10}, {"max_paths", 10}, {"layout", "long"}};
  d["certificates"] = {{{"type", "entry-bound"},
                        {"target", 0},
                        {"rate_floor", 2.0},
                        {"inf_boundary_v", 1.0},
                        {"slack_dt", true},
                        {"min_fraction", 1.0}},
                       {{"type", "stability"},
                        {"bound", "fitted"},
                        {"cert_tol", 0.05},
                        {"convergence_radius", 0.15},
                        {"min_fraction", 1.0}},
                       {{"type", "decrease"}, {"tol", 1e-6}}};
  s.doc = std::move(d);
  return s;
}

}  // namespace builtin_detail

namespace scenario_detail {

inline ConditionKind parse_condition(const std::string& c) {
  if (c == "clf") return ConditionKind::Clf;
  if (c == "strict-clf") return ConditionKind::StrictClf;
  if (c == "exponential-clf") return ConditionKind::Exponential;
  if (c == "radial") return ConditionKind::Radial;
  if (c == "set-clf") return ConditionKind::SetClf;
  throw ScenarioError("verify.condition: unknown value '" + c + "'");
}

inline Policy parse_policy(const std::string& p) {
  if (p == "witness") return Policy::Witness;
  if (p == "synthesized") return Policy::Synthesized;
  if (p == "zero") return Policy::Zero;
  if (p == "constant") return Policy::Constant;
  throw ScenarioError("policy: unknown value '" + p + "'");
}

// read every doc-representable setting into the materialized scenario;
// shared by the builtin and inline paths so overrides behave identically
inline void apply_doc_settings(Scenario& s) {
  const json& d = s.doc;
  s.name = d.value("name", std::string("scenario"));
  s.description = d.value("description", std::string());
  if (d.contains("builtin"))
    s.builtin_id = d.at("builtin").get<std::string>();

  s.policy = parse_policy(d.value("policy", std::string("witness")));
  if (d.contains("constant_control"))
    s.constant_control = to_vector(d.at("constant_control"));

  s.stages.clear();
  for (const auto& st : d.value("stages", json::array({"verify"})))
    s.stages.insert(st.get<std::string>());
  s.metric = d.value("metric", std::string("norm"));
  s.check_positive_definite = d.value("check_positive_definite", true);
  s.certificates = d.value("certificates", json::array());
  s.lambda = d.value("lambda", 0.0);

  s.verify.enabled = d.contains("verify");
  if (s.verify.enabled) {
    const json& v = d.at("verify");
    s.verify.condition =
        parse_condition(v.value("condition", std::string("clf")));
    s.verify.seed = v.value("seed", std::uint64_t{0});
    s.verify.min_pass_fraction = v.value("min_pass_fraction", 1.0);
    if (v.contains("tolerances")) {
      const json& t = v.at("tolerances");
      s.verify.tolerances.orth_tol = t.value("orth_tol", 1e-8);
      s.verify.tolerances.margin_tol = t.value("margin_tol", 1e-9);
      s.verify.tolerances.boundary_tol = t.value("boundary_tol", 1e-6);
    }
    if (v.contains("sampler")) {
      const json& sp = v.at("sampler");
      const std::string kind = sp.value("kind", std::string("annulus"));
      if (kind == "annulus") {
        s.verify.sampler = RegionSampler::annulus(sp.at("r_min").get<double>(),
                                                  sp.at("r_max").get<double>(),
                                                  sp.at("count").get<int>());
      } else if (kind == "explicit") {
        std::vector<Vector> pts;
        for (const auto& row : sp.at("points")) pts.push_back(to_vector(row));
        s.verify.sampler = RegionSampler::explicit_points(std::move(pts));
      } else {
        throw ScenarioError("verify.sampler: unknown kind '" + kind + "'");
      }
    }
  }

  if (d.contains("simulation")) {
    const json& sim = d.at("simulation");
    if (sim.contains("x0")) s.simulation.x0 = to_vector(sim.at("x0"));
    s.simulation.dt = sim.value("dt", 1e-3);
    s.simulation.horizon = sim.value("horizon", 1.0);
    s.simulation.paths = sim.value("paths", 100);
    s.simulation.master_seed = sim.value("master_seed", std::uint64_t{0});
    s.simulation.blowup_radius = sim.value("blowup_radius", 1e6);
    s.simulation.checkpoints = sim.value("checkpoints", 64);
  }

  if (d.contains("csv")) {
    const json& c = d.at("csv");
    s.csv.stride = c.value("stride", 1);
    s.csv.max_paths = c.value("max_paths", 16);
    s.csv.layout = c.value("layout", std::string("long"));
  }

  if (d.contains("synthesis")) {
    const json& sy = d.at("synthesis");
    s.synthesis.probe_count = sy.value("probe_count", 200);
    s.synthesis.r_min = sy.value("r_min", 1e-3);
    s.synthesis.r_max = sy.value("r_max", 1.0);
    s.synthesis.seed = sy.value("seed", std::uint64_t{0x5EEDF00Dull});
    s.synthesis.margin_tol = sy.value("margin_tol", 1e-8);
    s.synthesis.orth_tol = sy.value("orth_tol", 1e-8);
  }

  s.comparison.enabled = d.contains("comparison");
  if (s.comparison.enabled) {
    const json& c = d.at("comparison");
    s.comparison.radii.clear();
    for (const auto& r : c.at("radii"))
      s.comparison.radii.push_back(r.get<double>());
    s.comparison.angular_samples = c.value("angular_samples", 360);
  }
}

inline void materialize_inline(Scenario& s) {
  json& d = s.doc;
  if (!d.contains("system") && !d.contains("affine"))
    throw ScenarioError("scenario needs a 'system' or 'affine' section");

  int n = 0;
  if (d.contains("system")) {
    const json& sysdoc = d.at("system");
    ControlSystem sys;
    sys.dim_state = sysdoc.at("state_dim").get<int>();
    sys.dim_noise = sysdoc.at("noise_dim").get<int>();
    sys.controls = make_controls(sysdoc.at("controls"));
    const int p = sys.controls.dim();
    sys.drift = make_drift(sysdoc.at("drift"), sys.dim_state, p,
                           "system.drift");
    sys.dispersion = make_dispersion(sysdoc.at("dispersion"), sys.dim_state,
                                     sys.dim_noise, p, "system.dispersion");
    sys.name = d.value("name", std::string("scenario"));
    n = sys.dim_state;
    s.system = std::move(sys);
  }

  if (d.contains("affine")) {
    const json& a = d.at("affine");
    const int an = a.at("state_dim").get<int>();
    if (n == 0) n = an;
    std::vector<VectorField> gs;
    for (std::size_t i = 0; i < a.at("g").size(); ++i)
      gs.push_back(make_field(a.at("g")[i], an,
                              "affine.g[" + std::to_string(i) + "]"));
    VectorField tau = nullptr;
    if (a.contains("tau") && !a.at("tau").is_null())
      tau = make_field(a.at("tau"), an, "affine.tau");
    std::optional<std::vector<std::array<double, 2>>> box;
    if (a.contains("box") && !a.at("box").is_null()) {
      std::vector<std::array<double, 2>> b;
      for (const auto& row : a.at("box"))
        b.push_back({row[0].get<double>(), row[1].get<double>()});
      box = std::move(b);
    }
    s.affine = AffineSystem::create(
        an, make_field(a.at("f"), an, "affine.f"), std::move(gs),
        a.contains("sigma") && !a.at("sigma").is_null()
            ? make_field(a.at("sigma"), an, "affine.sigma")
            : VectorField([an](const Vector&) {
                return Vector(Vector::Zero(an));
              }),
        std::move(tau), std::move(box), d.value("name", std::string()));
  }

  const json& cd = d.at("candidate");
  LyapunovCandidate v;
  v.name = cd.value("name", std::string("candidate"));
  auto value = make_scalar(cd.at("value").get<std::string>(), n,
                           "candidate.value");
  v.value = value;
  if (cd.contains("gradient") && !cd.at("gradient").is_null()) {
    auto g = make_field(cd.at("gradient"), n, "candidate.gradient");
    v.gradient = g;
  }
  if (cd.contains("hessian") && !cd.at("hessian").is_null()) {
    const json& rows = cd.at("hessian");
    std::vector<std::vector<std::function<double(const Vector&)>>> hs(n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        hs[i].push_back(make_scalar(rows[i][j].get<std::string>(), n,
                                    "candidate.hessian"));
    v.hessian = [hs, n](const Vector& x) {
      Matrix m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = hs[i][j](x);
      return m;
    };
  }
  v.fd_step = cd.value("fd_step", 1e-5);
  if (cd.contains("domain_radius") && !cd.at("domain_radius").is_null())
    v.domain_radius = cd.at("domain_radius").get<double>();
  s.candidate = std::move(v);

  if (d.contains("rate") && !d.at("rate").is_null())
    s.rate = make_scalar(d.at("rate").get<std::string>(), n, "rate");

  if (d.contains("target") && !d.contains("targets")) {
    d["targets"] = json::array({d.at("target")});
    d.erase("target");
  }
  for (const auto& t : d.value("targets", json::array()))
    s.targets.push_back(make_target(t, n));
}

}  // namespace scenario_detail

inline Scenario make_builtin(const std::string& id) {
  Scenario s;
  if (id == "krasovskii") s = builtin_detail::krasovskii();
  else if (id == "perturbed-drift") s = builtin_detail::perturbed_drift();
  else if (id == "perturbed-coupled") s = builtin_detail::perturbed_coupled();
  else if (id == "radial-affine") s = builtin_detail::radial_affine();
  else if (id == "polar-radial") s = builtin_detail::polar_radial();
  else if (id == "exterior-ball") s = builtin_detail::exterior_ball();
  else if (id == "periodic-orbit") s = builtin_detail::periodic_orbit();
  else if (id == "linear-tangential") s = builtin_detail::linear_tangential();
  else if (id == "deterministic-linear")
    s = builtin_detail::deterministic_linear();
  else {
    std::string msg = "unknown builtin '" + id + "'; valid ids:";
    for (const auto& info : list_builtins()) msg += " " + info.id;
    throw ScenarioError(msg);
  }
  scenario_detail::apply_doc_settings(s);
  return s;
}

// rebuild a scenario from a (possibly edited) document
inline Scenario make_scenario_from_doc(const json& doc) {
  if (doc.contains("builtin")) {
    Scenario s = make_builtin(doc.at("builtin").get<std::string>());
    s.doc.merge_patch(doc);
    scenario_detail::apply_doc_settings(s);
    return s;
  }
  Scenario s;
  s.doc = doc;
  scenario_detail::materialize_inline(s);
  scenario_detail::apply_doc_settings(s);
  return s;
}

inline Scenario load_scenario_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // recover line/column from the byte offset for a uniform error shape
    int line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(text.size(), e.byte); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(line, col, e.what());
  }
  return make_scenario_from_doc(doc);
}

inline Scenario with_overrides(const Scenario& base, const json& patch) {
  json doc = base.doc;
  doc.merge_patch(patch);
  return make_scenario_from_doc(doc);
}

}  // namespace stochstab
