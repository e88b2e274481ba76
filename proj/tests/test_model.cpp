#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "stochstab/model.hpp"

using namespace stochstab;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<int>(xs.size()));
  int i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

ControlSystem scalar_system(DriftFn f, DispersionFn s, ControlSet grid) {
  ControlSystem sys;
  sys.dim_state = 1;
  sys.dim_noise = 1;
  sys.drift = std::move(f);
  sys.dispersion = std::move(s);
  sys.controls = std::move(grid);
  return sys;
}

}  // namespace

TEST_CASE("ControlSet::points keeps order and validates shape") {
  const auto s = ControlSet::points({vec({2.0}), vec({-1.0}), vec({0.0})});
  REQUIRE(s.size() == 3);
  CHECK(s.dim() == 1);
  CHECK(s.grid()[0][0] == 2.0);
  CHECK(s.grid()[1][0] == -1.0);
  CHECK(s.grid()[2][0] == 0.0);

  CHECK_THROWS_AS(ControlSet::points({}), PreconditionError);
  CHECK_THROWS_AS(ControlSet::points({vec({1.0}), vec({1.0, 2.0})}),
                  PreconditionError);
}

TEST_CASE("ControlSet::box spacing and ordering") {
  SECTION("uniform 1d grid includes both endpoints") {
    const auto s = ControlSet::box(vec({-1.0}), vec({1.0}), {5});
    REQUIRE(s.size() == 5);
    CHECK(s.grid()[0][0] == -1.0);
    CHECK(s.grid()[1][0] == -0.5);
    CHECK(s.grid()[2][0] == 0.0);
    CHECK(s.grid()[3][0] == 0.5);
    CHECK(s.grid()[4][0] == 1.0);
  }

  SECTION("count of one takes the midpoint") {
    const auto s = ControlSet::box(vec({-2.0}), vec({4.0}), {1});
    REQUIRE(s.size() == 1);
    CHECK(s.grid()[0][0] == 1.0);
  }

  SECTION("last axis varies fastest") {
    const auto s = ControlSet::box(vec({0.0, 10.0}), vec({1.0, 20.0}), {2, 3});
    REQUIRE(s.size() == 6);
    CHECK(s.dim() == 2);
    const double expected[6][2] = {{0, 10}, {0, 15}, {0, 20},
                                   {1, 10}, {1, 15}, {1, 20}};
    for (int i = 0; i < 6; ++i) {
      CHECK(s.grid()[i][0] == expected[i][0]);
      CHECK(s.grid()[i][1] == expected[i][1]);
    }
  }

  SECTION("argument validation") {
    CHECK_THROWS_AS(ControlSet::box(vec({0.0}), vec({1.0}), {0}),
                    PreconditionError);
    CHECK_THROWS_AS(ControlSet::box(vec({1.0}), vec({0.0}), {2}),
                    PreconditionError);
    CHECK_THROWS_AS(ControlSet::box(vec({0.0, 0.0}), vec({1.0}), {2}),
                    PreconditionError);
    CHECK_THROWS_AS(ControlSet::box(Vector(0), Vector(0), {}),
                    PreconditionError);
  }
}

TEST_CASE("ControlSet::product concatenates with left factor slowest") {
  const auto a = ControlSet::points({vec({1.0}), vec({2.0})});
  const auto b = ControlSet::points({vec({10.0}), vec({20.0})});
  const auto p = ControlSet::product(a, b);
  REQUIRE(p.size() == 4);
  CHECK(p.dim() == 2);
  const double expected[4][2] = {{1, 10}, {1, 20}, {2, 10}, {2, 20}};
  for (int i = 0; i < 4; ++i) {
    CHECK(p.grid()[i][0] == expected[i][0]);
    CHECK(p.grid()[i][1] == expected[i][1]);
  }
}

TEST_CASE("diffusion_matrix is half sigma sigma^T") {
  ControlSystem sys;
  sys.dim_state = 2;
  sys.dim_noise = 2;
  sys.drift = [](const Vector& x, const Vector&) { return x; };
  sys.dispersion = [](const Vector&, const Vector&) {
    Matrix m(2, 2);
    m << 1.0, 2.0, 3.0, 4.0;
    return m;
  };
  const Matrix a = diffusion_matrix(sys, vec({0.0, 0.0}), vec({0.0}));
  CHECK(a(0, 0) == 2.5);
  CHECK(a(0, 1) == 5.5);
  CHECK(a(1, 0) == 5.5);
  CHECK(a(1, 1) == 12.5);
}

TEST_CASE("system evaluation guards shape and finiteness") {
  auto grid = ControlSet::points({vec({0.0})});

  SECTION("wrong drift size") {
    auto sys = scalar_system(
        [](const Vector&, const Vector&) { return Vector::Zero(2); },
        [](const Vector&, const Vector&) { return Matrix::Zero(1, 1); },
        grid);
    CHECK_THROWS_AS(sys.drift_at(vec({1.0}), vec({0.0})), EvaluationError);
  }

  SECTION("non-finite drift") {
    auto sys = scalar_system(
        [](const Vector& x, const Vector&) {
          Vector f(1);
          f[0] = std::sqrt(x[0]);
          return f;
        },
        [](const Vector&, const Vector&) { return Matrix::Zero(1, 1); },
        grid);
    CHECK(sys.drift_at(vec({4.0}), vec({0.0}))[0] == 2.0);
    CHECK_THROWS_AS(sys.drift_at(vec({-1.0}), vec({0.0})), EvaluationError);
  }

  SECTION("wrong dispersion shape") {
    auto sys = scalar_system(
        [](const Vector& x, const Vector&) { return x; },
        [](const Vector&, const Vector&) { return Matrix::Zero(1, 2); },
        grid);
    CHECK_THROWS_AS(sys.dispersion_at(vec({1.0}), vec({0.0})),
                    EvaluationError);
  }
}

TEST_CASE("equilibrium_check returns the first freezing control") {
  auto grid = ControlSet::points({vec({1.0}), vec({0.0}), vec({-1.0})});
  auto sys = scalar_system(
      [](const Vector& x, const Vector& a) {
        Vector f(1);
        f[0] = x[0] + a[0];
        return f;
      },
      [](const Vector&, const Vector& a) {
        Matrix m(1, 1);
        m(0, 0) = a[0];
        return m;
      },
      grid);
  const auto eq = equilibrium_check(sys);
  REQUIRE(eq.has_value());
  CHECK((*eq)[0] == 0.0);

  // no grid control freezes the origin when f(0, a) = a + 2
  auto drifting = scalar_system(
      [](const Vector& x, const Vector& a) {
        Vector f(1);
        f[0] = x[0] + a[0] + 2.0;
        return f;
      },
      [](const Vector&, const Vector&) { return Matrix::Zero(1, 1); },
      grid);
  CHECK_FALSE(equilibrium_check(drifting).has_value());
}

TEST_CASE("candidate derivatives fall back to central differences") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) { return x[0] * x[0] + 3.0 * x[0] * x[1]; };

  const Vector x = vec({0.7, -0.3});
  const Vector g = v.gradient_at(x);
  CHECK_THAT(g[0], Catch::Matchers::WithinAbs(2.0 * 0.7 - 0.9, 1e-8));
  CHECK_THAT(g[1], Catch::Matchers::WithinAbs(3.0 * 0.7, 1e-8));

  const Matrix h = v.hessian_at(x);
  CHECK_THAT(h(0, 0), Catch::Matchers::WithinAbs(2.0, 1e-4));
  CHECK_THAT(h(0, 1), Catch::Matchers::WithinAbs(3.0, 1e-4));
  CHECK_THAT(h(1, 0), Catch::Matchers::WithinAbs(3.0, 1e-4));
  CHECK_THAT(h(1, 1), Catch::Matchers::WithinAbs(0.0, 1e-4));

  CHECK_FALSE(v.has_analytic_gradient());
  CHECK_FALSE(v.has_analytic_hessian());
}

TEST_CASE("analytic derivatives take precedence over differences") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) { return x.squaredNorm(); };
  v.gradient = [](const Vector& x) { return Vector(7.0 * x); };
  const Vector g = v.gradient_at(vec({1.0, 0.0}));
  CHECK(g[0] == 7.0);  // sentinel, deliberately not 2x
  CHECK(v.has_analytic_gradient());
}

TEST_CASE("candidate value guard") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) { return std::log(x[0]); };
  CHECK_THROWS_AS(v.value_at(vec({-1.0})), EvaluationError);
}

TEST_CASE("subjet_at prefers the provider and falls back when empty") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) { return x.squaredNorm(); };
  v.gradient = [](const Vector& x) { return Vector(2.0 * x); };
  v.hessian = [](const Vector& x) {
    return Matrix(2.0 * Matrix::Identity(x.size(), x.size()));
  };

  SECTION("no provider: single element from the analytic derivatives") {
    const auto elems = v.subjet_at(vec({1.0, 2.0}));
    REQUIRE(elems.size() == 1);
    CHECK(elems[0].p[0] == 2.0);
    CHECK(elems[0].p[1] == 4.0);
    CHECK(elems[0].y(0, 0) == 2.0);
    CHECK(elems[0].y(0, 1) == 0.0);
  }

  SECTION("provider output is used verbatim") {
    v.subjet = [](const Vector&) {
      SubjetElement e;
      e.p = vec({5.0, 6.0});
      e.y = Matrix::Zero(2, 2);
      SubjetElement f;
      f.p = vec({0.0, 0.0});
      f.y = -Matrix::Identity(2, 2);
      return std::vector<SubjetElement>{e, f};
    };
    const auto elems = v.subjet_at(vec({1.0, 2.0}));
    REQUIRE(elems.size() == 2);
    CHECK(elems[0].p[0] == 5.0);
    CHECK(elems[1].y(1, 1) == -1.0);
  }

  SECTION("empty provider output falls back to derivatives") {
    v.subjet = [](const Vector&) { return std::vector<SubjetElement>{}; };
    const auto elems = v.subjet_at(vec({1.0, 2.0}));
    REQUIRE(elems.size() == 1);
    CHECK(elems[0].p[0] == 2.0);
  }
}

TEST_CASE("derivative_consistency_check flags mismatched derivatives") {
  LyapunovCandidate good;
  good.value = [](const Vector& x) { return x.squaredNorm(); };
  good.gradient = [](const Vector& x) { return Vector(2.0 * x); };
  good.hessian = [](const Vector& x) {
    return Matrix(2.0 * Matrix::Identity(x.size(), x.size()));
  };
  const auto ok = derivative_consistency_check(good, 2, 0.5, 2.0, 50, 77);
  CHECK(ok.ok);
  CHECK(ok.worst_gradient_error < 1e-6);

  LyapunovCandidate bad = good;
  bad.gradient = [](const Vector& x) { return Vector(3.0 * x); };
  const auto flagged = derivative_consistency_check(bad, 2, 0.5, 2.0, 50, 77);
  CHECK_FALSE(flagged.ok);
  CHECK(flagged.worst_gradient_error > 0.1);

  LyapunovCandidate plain;
  plain.value = [](const Vector& x) { return x.squaredNorm(); };
  CHECK(derivative_consistency_check(plain, 2, 0.5, 2.0, 50, 77).ok);
}

TEST_CASE("positive_definiteness_violation") {
  LyapunovCandidate good;
  good.value = [](const Vector& x) { return x.squaredNorm(); };
  CHECK_FALSE(positive_definiteness_violation(good, 2, 2.0, 200, 5).has_value());

  LyapunovCandidate shifted;
  shifted.value = [](const Vector& x) { return x.squaredNorm() + 1.0; };
  const auto at_zero = positive_definiteness_violation(shifted, 2, 2.0, 200, 5);
  REQUIRE(at_zero.has_value());
  CHECK(at_zero->norm() == 0.0);

  LyapunovCandidate negative;
  negative.value = [](const Vector& x) { return -x.squaredNorm(); };
  const auto inside = positive_definiteness_violation(negative, 2, 2.0, 200, 5);
  REQUIRE(inside.has_value());
  CHECK(inside->norm() > 0.0);
  CHECK(negative.value_at(*inside) <= 0.0);
}

TEST_CASE("interp_loglog is exact on power laws") {
  const std::vector<double> xs = {1.0, 4.0};
  const std::vector<double> ys = {3.0, 48.0};  // y = 3 x^2
  CHECK_THAT(ComparisonPair::interp_loglog(xs, ys, 2.0),
             Catch::Matchers::WithinRel(12.0, 1e-12));
  CHECK_THAT(ComparisonPair::interp_loglog(xs, ys, 8.0),
             Catch::Matchers::WithinRel(192.0, 1e-12));  // extrapolates
  CHECK_THAT(ComparisonPair::interp_loglog(xs, ys, 0.5),
             Catch::Matchers::WithinRel(0.75, 1e-12));
  CHECK_THROWS_AS(ComparisonPair::interp_loglog(xs, ys, 0.0),
                  PreconditionError);
  CHECK_THROWS_AS(ComparisonPair::interp_loglog(xs, ys, -1.0),
                  PreconditionError);
}

TEST_CASE("fit_comparison_pair brackets an anisotropic quadratic") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) {
    return x[0] * x[0] + 4.0 * x[1] * x[1];
  };
  const auto pair =
      fit_comparison_pair(v, 2, {0.25, 0.5, 1.0, 2.0, 4.0}, 720);

  // envelopes of r^2 and 4 r^2, so the excursion bound is 2 r
  for (double r : {0.5, 1.0, 2.0}) {
    CHECK_THAT(pair.gamma1_at(r), Catch::Matchers::WithinRel(r * r, 1e-3));
    CHECK_THAT(pair.gamma2_at(r),
               Catch::Matchers::WithinRel(4.0 * r * r, 1e-3));
    CHECK_THAT(pair.bound(r), Catch::Matchers::WithinRel(2.0 * r, 1e-2));
  }
  CHECK(pair.rel_slack < 0.01);

  // the fitted envelopes really bracket V along a dense direction sweep
  for (int k = 0; k < 997; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 997.0;
    const double r = 0.3 + 3.0 * k / 997.0;
    const Vector x = vec({r * std::cos(a), r * std::sin(a)});
    const double val = v.value(x);
    CHECK(val >= pair.gamma1_at(r) * (1.0 - pair.rel_slack));
    CHECK(val <= pair.gamma2_at(r) * (1.0 + pair.rel_slack));
  }
}

TEST_CASE("fit_comparison_pair argument and positivity guards") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) { return x.squaredNorm(); };
  CHECK_THROWS_AS(fit_comparison_pair(v, 2, {1.0}), PreconditionError);
  CHECK_THROWS_AS(fit_comparison_pair(v, 2, {2.0, 1.0}), PreconditionError);
  CHECK_THROWS_AS(fit_comparison_pair(v, 2, {-1.0, 1.0}), PreconditionError);

  LyapunovCandidate indefinite;
  indefinite.value = [](const Vector& x) {
    return x[0] * x[0] - x[1] * x[1];
  };
  CHECK_THROWS_AS(fit_comparison_pair(indefinite, 2, {0.5, 1.0}),
                  PositivityError);
}

TEST_CASE("fit_comparison_pair in one dimension") {
  LyapunovCandidate v;
  v.value = [](const Vector& x) { return x[0] * x[0]; };
  const auto pair = fit_comparison_pair(v, 1, {0.5, 1.0, 2.0});
  CHECK_THAT(pair.bound(1.0), Catch::Matchers::WithinRel(1.0, 1e-6));
  CHECK(pair.rel_slack < 1e-6);
}

TEST_CASE("target sets: membership, distance, boundary samples") {
  const Vector c = vec({0.0, 0.0});

  SECTION("ball") {
    const auto t = TargetSet::ball(c, 1.0);
    CHECK(t.contains(vec({1.0, 0.0})));
    CHECK(t.contains(vec({0.2, 0.2})));
    CHECK_FALSE(t.contains(vec({1.5, 0.0})));
    CHECK(t.distance(vec({2.0, 0.0})) == 1.0);
    CHECK(t.distance(vec({0.5, 0.0})) == 0.0);
    CHECK(t.kind() == TargetSet::Kind::Ball);
  }

  SECTION("complement of a ball") {
    const auto t = TargetSet::complement_of_ball(c, 1.0);
    CHECK(t.contains(vec({2.0, 0.0})));
    CHECK_FALSE(t.contains(vec({0.5, 0.0})));
    CHECK(t.distance(vec({0.5, 0.0})) == 0.5);
    CHECK(t.distance(vec({3.0, 0.0})) == 0.0);
  }

  SECTION("sublevel set uses the level gap as distance") {
    const auto t = TargetSet::sublevel(
        [](const Vector& x) { return x.squaredNorm(); }, 0.25);
    CHECK(t.contains(vec({0.5, 0.0})));
    CHECK_FALSE(t.contains(vec({1.0, 0.0})));
    CHECK(t.distance(vec({1.0, 0.0})) == 0.75);
    CHECK(t.distance(vec({0.1, 0.0})) == 0.0);
  }

  SECTION("zero set") {
    const auto t = TargetSet::zero_set(
        [](const Vector& x) { return x.norm() - 1.0; });
    CHECK(t.contains(vec({1.0, 0.0})));
    CHECK_FALSE(t.contains(vec({1.1, 0.0})));
    CHECK_THAT(t.distance(vec({1.5, 0.0})),
               Catch::Matchers::WithinAbs(0.5, 1e-15));
  }

  SECTION("planar boundary sample walks the circle deterministically") {
    const auto t = TargetSet::ball(c, 2.0);
    const auto pts = t.boundary_sample(4, 0);
    REQUIRE(pts.size() == 4);
    CHECK_THAT(pts[0][0], Catch::Matchers::WithinAbs(2.0, 1e-15));
    CHECK_THAT(pts[1][1], Catch::Matchers::WithinAbs(2.0, 1e-15));
    CHECK_THAT(pts[2][0], Catch::Matchers::WithinAbs(-2.0, 1e-15));
    CHECK_THAT(pts[3][1], Catch::Matchers::WithinAbs(-2.0, 1e-15));
    const auto again = t.boundary_sample(4, 0);
    for (int i = 0; i < 4; ++i) CHECK((pts[i] - again[i]).norm() == 0.0);
  }

  SECTION("no boundary sampler for level sets") {
    const auto t = TargetSet::sublevel(
        [](const Vector& x) { return x.squaredNorm(); }, 0.25);
    CHECK_THROWS_AS(t.boundary_sample(4, 0), PreconditionError);
  }

  SECTION("nonpositive radius is rejected") {
    CHECK_THROWS_AS(TargetSet::ball(c, 0.0), PreconditionError);
    CHECK_THROWS_AS(TargetSet::complement_of_ball(c, -1.0), PreconditionError);
  }
}
