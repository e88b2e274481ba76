#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "stochstab/expr.hpp"

using stochstab::Expression;
using stochstab::ParseError;

namespace {

double eval(const std::string& src, std::initializer_list<double> vars = {},
            const std::vector<std::string>& names = {}) {
  return Expression::compile(src, names)(vars);
}

}  // namespace

TEST_CASE("arithmetic precedence and associativity") {
  CHECK(eval("1+2*3^2") == 19.0);
  CHECK(eval("2^3^2") == 512.0);      // right associative
  CHECK(eval("(2^3)^2") == 64.0);
  CHECK(eval("-2^2") == -4.0);        // negation binds looser than power
  CHECK(eval("(-2)^2") == 4.0);
  CHECK(eval("2^-2") == 0.25);
  CHECK(eval("6/3/2") == 1.0);        // left associative
  CHECK(eval("6-2-3") == 1.0);
  CHECK(eval("+5") == 5.0);
  CHECK(eval("2*-3") == -6.0);
  CHECK(eval("--4") == 4.0);
  CHECK(eval("1 + 2 * (3 - 1)") == 5.0);
}

TEST_CASE("number formats") {
  CHECK(eval(".5") == 0.5);
  CHECK(eval("2.5e3") == 2500.0);
  CHECK(eval("1e-3") == 1e-3);
  CHECK(eval("0.1") == 0.1);
}

TEST_CASE("variables resolve by position") {
  const Expression e = Expression::compile("x1*x2-x2", {"x1", "x2"});
  CHECK(e({3.0, 4.0}) == 8.0);
  CHECK(e({0.0, 7.0}) == -7.0);
  CHECK(e.arity() == 2);
  CHECK(e.source() == "x1*x2-x2");
  CHECK(e.valid());

  // mixed state and control variable lists, order matters
  const Expression f = Expression::compile("u1*x1", {"x1", "u1"});
  CHECK(f({2.0, 5.0}) == 10.0);

  // span overload matches the initializer-list overload
  const std::vector<double> vars = {3.0, 4.0};
  CHECK(e(std::span<const double>(vars)) == 8.0);
}

TEST_CASE("default-constructed expression is invalid") {
  const Expression e;
  CHECK_FALSE(e.valid());
  CHECK(e.arity() == 0);
  CHECK(e.source().empty());
}

TEST_CASE("builtin functions") {
  CHECK(eval("norm(3,4)") == 5.0);
  CHECK(eval("norm(2)") == 2.0);
  CHECK(eval("norm(1,2,2)") == 3.0);
  CHECK(eval("abs(-3)") == 3.0);
  CHECK(eval("sign(-0.5)") == -1.0);
  CHECK(eval("sign(0)") == 0.0);
  CHECK(eval("sign(7)") == 1.0);
  CHECK(eval("sqrt(9)") == 3.0);
  CHECK(eval("sin(0)") == 0.0);
  CHECK(eval("cos(0)") == 1.0);
  CHECK(eval("sin(1)") == std::sin(1.0));
  CHECK(eval("cos(2)") == std::cos(2.0));
  // nested calls
  CHECK(eval("sqrt(abs(-16))") == 4.0);
  CHECK(eval("norm(x1, x2)", {3.0, 4.0}, {"x1", "x2"}) == 5.0);
}

TEST_CASE("builtin constants") {
  CHECK(eval("pi") == 3.14159265358979323846);
  CHECK(eval("e") == 2.71828182845904523536);
  CHECK(eval("sin(pi)") == std::sin(3.14159265358979323846));
  // a variable named pi shadows the constant
  const Expression e = Expression::compile("pi", {"pi"});
  CHECK(e({2.5}) == 2.5);
  // custom constant table replaces the default one
  const Expression f =
      Expression::compile("tau", {}, std::map<std::string, double>{{"tau", 6.5}});
  CHECK(f({}) == 6.5);
}

TEST_CASE("parse errors carry line and column") {
  try {
    Expression::compile("1 +\n  oops", {"x1"});
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.line == 2);
    CHECK(err.column == 3);
    CHECK_THAT(err.what(), Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THAT(err.what(), Catch::Matchers::ContainsSubstring("column 3"));
    CHECK_THAT(err.what(),
               Catch::Matchers::ContainsSubstring("unknown symbol 'oops'"));
  }

  try {
    Expression::compile("2 $ 3", {});
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK(err.line == 1);
    CHECK(err.column == 3);
    CHECK_THAT(err.what(),
               Catch::Matchers::ContainsSubstring("unexpected character '$'"));
  }
}

TEST_CASE("parse error cases") {
  CHECK_THROWS_AS(Expression::compile("x9", {"x1"}), ParseError);
  CHECK_THROWS_AS(Expression::compile("frobnicate(1)", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("sin(1,2)", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("sin()", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("norm()", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("(1+2", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("1 2", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile("*3", {}), ParseError);
  CHECK_THROWS_AS(Expression::compile(".", {}), ParseError);

  try {
    Expression::compile("1 2", {});
    FAIL("expected ParseError");
  } catch (const ParseError& err) {
    CHECK_THAT(err.what(),
               Catch::Matchers::ContainsSubstring("unexpected trailing input"));
    CHECK(err.column == 3);
  }
}
