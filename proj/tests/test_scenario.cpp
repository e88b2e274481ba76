#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "stochstab/scenario.hpp"

using namespace stochstab;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

const char* kInlineScenario = R"({
  "name": "inline-demo",
  "description": "scaled drift, no noise",
  "stages": ["simulate"],
  "system": {
    "state_dim": 2,
    "noise_dim": 1,
    "controls": {"kind": "box", "lo": [-1.0], "hi": [1.0], "counts": [3]},
    "drift": ["u1*x1", "-x2"],
    "dispersion": [["0"], ["0"]]
  },
  "candidate": {
    "name": "squared-norm",
    "value": "x1^2 + x2^2",
    "gradient": ["2*x1", "2*x2"],
    "hessian": [["2", "0"], ["0", "2"]]
  },
  "rate": "x1^2 + x2^2",
  "targets": [{"kind": "ball", "center": [0.0, 0.0], "radius": 0.5}],
  "simulation": {"x0": [1.0, 1.0], "dt": 0.01, "horizon": 2.0, "paths": 3,
                 "master_seed": 99}
})";

}  // namespace

TEST_CASE("builtin catalog order and ids") {
  const auto infos = list_builtins();
  REQUIRE(infos.size() == 9);
  const char* expected[9] = {
      "krasovskii",      "perturbed-drift",   "perturbed-coupled",
      "radial-affine",   "polar-radial",      "exterior-ball",
      "periodic-orbit",  "linear-tangential", "deterministic-linear"};
  for (int i = 0; i < 9; ++i) {
    CHECK(infos[i].id == expected[i]);
    CHECK_FALSE(infos[i].summary.empty());
  }
}

TEST_CASE("unknown builtin id reports the valid ones") {
  try {
    make_builtin("nope");
    FAIL("expected ScenarioError");
  } catch (const ScenarioError& e) {
    CHECK_THAT(e.what(),
               Catch::Matchers::ContainsSubstring("unknown builtin 'nope'"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("krasovskii"));
    CHECK_THAT(e.what(),
               Catch::Matchers::ContainsSubstring("deterministic-linear"));
  }
}

TEST_CASE("every builtin materializes and round-trips its document") {
  for (const auto& info : list_builtins()) {
    const Scenario s = make_builtin(info.id);
    CHECK(s.builtin_id == info.id);
    CHECK_FALSE(s.name.empty());
    CHECK(s.simulation.x0.size() > 0);
    CHECK(s.has_stage("simulate"));
    CHECK((s.system.has_value() || s.affine.has_value()));

    const std::string text = serialize_scenario(s);
    REQUIRE_FALSE(text.empty());
    CHECK(text.back() == '\n');
    const Scenario again = load_scenario_text(text);
    CHECK(again.doc == s.doc);
    CHECK(again.name == s.name);
  }
}

TEST_CASE("step candidate values on and between the vanishing circles") {
  const Scenario s = make_builtin("krasovskii");
  const auto& v = s.candidate;
  const auto at = [&](double rho) { return v.value_at(vec({rho, 1.0})); };

  // on the circles: V(rho_n) = 1/sqrt(n+1)
  CHECK(at(0.7071067811865475) == 0.5773502691896258);
  CHECK(at(0.5773502691896257) == 0.5);
  CHECK(at(0.5) == 0.4472135954999579);
  CHECK(at(0.4472135954999579) == 0.4082482904638631);
  CHECK(at(0.408248290463863) == 0.3779644730092272);

  // between circles the value is the step of the outer circle
  CHECK(at(0.55) == 0.5);
  CHECK(at(0.62) == 0.5773502691896258);
  CHECK(at(0.8) == 0.7071067811865475);
  CHECK(at(0.45) == 0.4472135954999579);

  // lower semicontinuous: the value drops exactly on the circle
  CHECK(at(0.5 + 1e-6) == 0.5);
  CHECK(at(0.5) < at(0.5 + 1e-6));
  CHECK(at(0.5 - 1e-6) == 0.4472135954999579);

  // outside the unit circle and at the origin
  CHECK(at(1.5) == 1.0);
  CHECK(at(0.0) == 0.0);
  CHECK(at(-1.0) == 0.0);
}

TEST_CASE("oscillation factor vanishes exactly on the circles") {
  using scenario_detail::sin_pi_squared;
  CHECK(sin_pi_squared(2.0) == 0.0);
  CHECK(sin_pi_squared(3.0) == 0.0);
  CHECK(sin_pi_squared(4.0) == 0.0);
  CHECK(sin_pi_squared(1e15) == 0.0);
  CHECK_THAT(sin_pi_squared(4.5), Catch::Matchers::WithinAbs(1.0, 1e-15));
  CHECK(sin_pi_squared(std::numeric_limits<double>::infinity()) == 0.0);

  const Scenario s = make_builtin("krasovskii");
  REQUIRE(s.system.has_value());
  const Vector a = Vector::Zero(1);

  // on rho_3 and rho_4 both coefficients vanish except the unit rotation
  for (double rho : {0.5773502691896257, 0.5}) {
    const Vector x = vec({rho, 0.3});
    const Vector f = s.system->drift_at(x, a);
    CHECK(f[0] == 0.0);
    CHECK(f[1] == -1.0);
    CHECK(s.system->dispersion_at(x, a)(0, 0) == 0.0);
  }

  // strictly between circles the radial noise is alive
  CHECK(s.system->dispersion_at(vec({0.55, 0.3}), a)(0, 0) != 0.0);
}

TEST_CASE("step candidate advertises subjet elements on the circles") {
  const Scenario s = make_builtin("krasovskii");
  const auto on = s.candidate.subjet_at(vec({0.5, 2.0}));
  REQUIRE(on.size() == 3);
  CHECK(on[0].p[0] == 1.0);
  CHECK(on[0].p[1] == 0.0);
  CHECK(on[0].y.norm() == 0.0);
  CHECK(on[1].p.norm() == 0.0);
  CHECK(on[1].y(1, 1) == -1.0);
  CHECK(on[2].p[0] == 2.0);
  CHECK(on[2].y(0, 0) == 0.5);
  CHECK(on[2].y(0, 1) == 0.3);

  const auto off = s.candidate.subjet_at(vec({0.55, 2.0}));
  REQUIRE(off.size() == 2);
  CHECK(off[0].p.norm() == 0.0);
  CHECK(off[0].y.norm() == 0.0);
  CHECK(off[1].y(0, 0) == -1.0);
}

TEST_CASE("krasovskii run settings") {
  const Scenario s = make_builtin("krasovskii");
  CHECK(s.name == "krasovskii");
  CHECK(s.simulation.x0[0] == 0.7071067811865475);
  CHECK(s.simulation.x0[1] == 0.7853981633974483);
  CHECK(s.simulation.dt == 1e-3);
  CHECK(s.simulation.horizon == 10.0);
  CHECK(s.simulation.paths == 100);
  CHECK(s.simulation.master_seed == 424242);
  CHECK(s.simulation.checkpoints == 50);
  CHECK(s.policy == Policy::Witness);
  CHECK(s.has_stage("verify"));
  CHECK(s.has_stage("simulate"));
  CHECK(s.has_stage("certify"));
  CHECK_FALSE(s.has_stage("synthesize"));
  CHECK_FALSE(s.check_positive_definite);
  CHECK(s.verify.enabled);
  CHECK(s.verify.sampler.points.size() == 19);  // 5 circles x 3 angles + 4
  REQUIRE(s.certificates.size() == 1);
  CHECK(s.certificates[0].at("type") == "decrease");
}

TEST_CASE("synthesis-backed builtin carries both system forms") {
  const Scenario s = make_builtin("radial-affine");
  CHECK(s.system.has_value());
  CHECK(s.affine.has_value());
  CHECK(s.policy == Policy::Synthesized);
  CHECK(s.has_stage("synthesize"));
  CHECK(s.affine->channels() == 1);
  CHECK(s.affine->constraint_box.has_value());
}

TEST_CASE("inline scenario materializes fields from the grammar") {
  const Scenario s = load_scenario_text(kInlineScenario);
  CHECK(s.name == "inline-demo");
  CHECK(s.description == "scaled drift, no noise");
  CHECK_FALSE(s.builtin_id.has_value());
  REQUIRE(s.system.has_value());
  CHECK_FALSE(s.affine.has_value());

  CHECK(s.system->dim_state == 2);
  CHECK(s.system->dim_noise == 1);
  CHECK(s.system->controls.size() == 3);
  CHECK(s.system->controls.grid()[0][0] == -1.0);

  const Vector f = s.system->drift_at(vec({2.0, 3.0}), vec({0.5}));
  CHECK(f[0] == 1.0);
  CHECK(f[1] == -3.0);
  CHECK(s.system->dispersion_at(vec({2.0, 3.0}), vec({0.5})).norm() == 0.0);

  CHECK(s.candidate.value_at(vec({2.0, 3.0})) == 13.0);
  CHECK(s.candidate.gradient_at(vec({2.0, 3.0}))[0] == 4.0);
  CHECK(s.candidate.hessian_at(vec({2.0, 3.0}))(1, 1) == 2.0);
  CHECK(s.candidate.name == "squared-norm");
  REQUIRE(s.rate);
  CHECK(s.rate(vec({2.0, 3.0})) == 13.0);

  REQUIRE(s.targets.size() == 1);
  CHECK(s.targets[0].contains(vec({0.1, 0.1})));

  CHECK(s.simulation.x0[0] == 1.0);
  CHECK(s.simulation.dt == 0.01);
  CHECK(s.simulation.paths == 3);
  CHECK(s.simulation.master_seed == 99);
  CHECK(s.has_stage("simulate"));
  CHECK_FALSE(s.has_stage("verify"));
  CHECK_FALSE(s.verify.enabled);
}

TEST_CASE("field compilation errors name the offending component") {
  json doc = json::parse(kInlineScenario);
  doc["system"]["drift"][0] = "x1*";
  try {
    make_scenario_from_doc(doc);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK_THAT(e.what(),
               Catch::Matchers::ContainsSubstring("in 'system.drift[0]'"));
  }

  json wrong_count = json::parse(kInlineScenario);
  wrong_count["system"]["drift"] = {"x1"};
  CHECK_THROWS_AS(make_scenario_from_doc(wrong_count), ScenarioError);

  json wrong_cols = json::parse(kInlineScenario);
  wrong_cols["system"]["dispersion"] = {{"0", "0"}, {"0", "0"}};
  CHECK_THROWS_AS(make_scenario_from_doc(wrong_cols), ScenarioError);

  json no_system = json::parse(kInlineScenario);
  no_system.erase("system");
  CHECK_THROWS_AS(make_scenario_from_doc(no_system), ScenarioError);
}

TEST_CASE("malformed JSON surfaces line and column") {
  try {
    load_scenario_text("{\n  \"name\": oops\n}");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line == 2);
    CHECK(e.column > 1);
  }
}

TEST_CASE("document patches rebuild the scenario") {
  const json patch = {{"builtin", "krasovskii"},
                      {"simulation", {{"paths", 7}}}};
  const Scenario s = make_scenario_from_doc(patch);
  CHECK(s.simulation.paths == 7);
  CHECK(s.simulation.horizon == 10.0);  // untouched keys survive the merge
  CHECK(s.simulation.master_seed == 424242);
  CHECK(s.name == "krasovskii");
}

TEST_CASE("with_overrides merges without mutating the base") {
  const Scenario base = make_builtin("krasovskii");
  const Scenario tweaked = with_overrides(
      base, {{"policy", "zero"}, {"simulation", {{"horizon", 0.5}}}});
  CHECK(tweaked.policy == Policy::Zero);
  CHECK(tweaked.simulation.horizon == 0.5);
  CHECK(tweaked.simulation.paths == 100);
  CHECK(base.policy == Policy::Witness);
  CHECK(base.simulation.horizon == 10.0);
}

TEST_CASE("unknown enum strings are rejected") {
  const Scenario base = make_builtin("krasovskii");
  CHECK_THROWS_AS(with_overrides(base, {{"policy", "bogus"}}), ScenarioError);
  CHECK_THROWS_AS(
      with_overrides(base, {{"verify", {{"condition", "bogus"}}}}),
      ScenarioError);
  CHECK_THROWS_AS(
      with_overrides(base,
                     {{"verify", {{"sampler", {{"kind", "bogus"}}}}}}),
      ScenarioError);
}

TEST_CASE("control grids parse from documents") {
  using scenario_detail::make_controls;
  const auto pts = make_controls(
      json{{"kind", "points"}, {"points", {{0.0, 1.0}, {2.0, 3.0}}}});
  REQUIRE(pts.size() == 2);
  CHECK(pts.grid()[1][1] == 3.0);

  const auto box = make_controls(json{{"kind", "box"},
                                      {"lo", {-1.0}},
                                      {"hi", {1.0}},
                                      {"counts", {5}}});
  CHECK(box.size() == 5);

  CHECK_THROWS_AS(make_controls(json{{"kind", "mesh"}}), ScenarioError);
}

TEST_CASE("target specifications parse from documents") {
  using scenario_detail::make_target;
  const auto ball =
      make_target(json{{"kind", "ball"}, {"center", {0.0, 0.0}},
                       {"radius", 1.0}},
                  2);
  CHECK(ball.contains(vec({0.5, 0.0})));

  const auto exterior = make_target(
      json{{"kind", "complement-of-ball"}, {"center", {0.0, 0.0}},
           {"radius", 1.0}},
      2);
  CHECK(exterior.contains(vec({2.0, 0.0})));

  const auto orbit = make_target(
      json{{"kind", "zero-set"}, {"fn", "norm(x1,x2) - 1"}}, 2);
  CHECK(orbit.contains(vec({1.0, 0.0})));
  CHECK_FALSE(orbit.contains(vec({0.5, 0.0})));

  const auto level = make_target(
      json{{"kind", "sublevel"}, {"fn", "x1^2 + x2^2"}, {"level", 0.25}}, 2);
  CHECK(level.contains(vec({0.4, 0.0})));

  CHECK_THROWS_AS(make_target(json{{"kind", "halfspace"}}, 2), ScenarioError);
}

TEST_CASE("circle radii invert to exact integer indices where possible") {
  using builtin_detail::circle_radius;
  for (int n : {3, 4, 5, 6}) {
    const double r = circle_radius(n);
    CHECK(1.0 / (r * r) == static_cast<double>(n));
  }
  // no double satisfies 1/(r*r) == 2 exactly; the chosen start sits half an
  // ulp above and the dynamics round the oscillation away
  const double r2 = circle_radius(2);
  CHECK(1.0 / (r2 * r2) == 2.0000000000000004);
}
