#include "doctest.h"

#include <string>

#include "vsem/error.hpp"
#include "vsem/model.hpp"

using namespace vsem;

namespace {

int free_count(const ModelSpec& s, MatrixKind kind) {
  int c = 0;
  for (const auto& e : s.params) c += e.matrix == kind;
  return c;
}

}  // namespace

TEST_CASE("two-factor model with a cross-loading") {
  ModelSpec s = parse_model("F1 =~ X1 + X2 + X3 + X4\nF2 =~ X4 + X5 + X6");
  CHECK(s.p() == 6);
  CHECK(s.m() == 2);
  // 5 loadings, 6 residual variances, 2 factor variances, 1 factor covariance
  CHECK(s.k() == 14);
  CHECK(free_count(s, MatrixKind::Lambda) == 5);
  CHECK(s.lambda(0, 0).set);
  CHECK_FALSE(s.lambda(0, 0).is_free());
  CHECK(s.lambda(0, 0).value == 1.0);
  CHECK(s.lambda(3, 1).set);
  CHECK_FALSE(s.lambda(3, 1).is_free());
}

TEST_CASE("path models count parameters like the degrees of freedom") {
  const int moments = 45;
  CHECK(moments - parse_model("X3 ~ X1 + X2\nX4 ~ X3\nX5 ~ X3\nX6 ~ X3\nX7 ~ X3\nX8 ~ X3\nX9 ~ X3\nX1 ~~ X2").k() == 27);
  CHECK(moments - parse_model("X2 ~ X1\nX3 ~ X2\nX4 ~ X2 + X3\nX5 ~ X3\nX6 ~ X2 + X3\nX7 ~ X3 + X4\n"
                              "X8 ~ X5\nX9 ~ X3 + X6\nX7 ~~ X8 + X9\nX8 ~~ X9")
                      .k() ==
        21);
  CHECK(moments - parse_model("X6 ~ X3\nX7 ~ X4\nX8 ~ X5\nX9 ~ X6 + X7 + X8\nX1 ~~ X2 + X3 + X4 + X5\n"
                              "X2 ~~ X3 + X4 + X5\nX3 ~~ X4 + X5\nX4 ~~ X5")
                      .k() ==
        20);
}

TEST_CASE("modifiers fix and free loadings") {
  ModelSpec s = parse_model("F =~ NA*A + 0.5*B + C\nF ~~ 1*F");
  CHECK(s.lambda(0, 0).is_free());
  CHECK_FALSE(s.lambda(1, 0).is_free());
  CHECK(s.lambda(1, 0).value == doctest::Approx(0.5));
  CHECK(s.lambda(2, 0).is_free());
  CHECK_FALSE(s.psi(3, 3).is_free());
  CHECK(s.k() == 5);  // two loadings, three residual variances
}

TEST_CASE("intercepts switch the mean structure on") {
  ModelSpec s = parse_model("Y ~ X\nY ~ 1");
  CHECK(s.meanstructure);
  CHECK(free_count(s, MatrixKind::Mean) == 2);
  ModelSpec t = parse_model("Y ~ X", ParseOptions{true, std::nullopt});
  CHECK(free_count(t, MatrixKind::Mean) == 2);
}

TEST_CASE("parse errors carry positions") {
  try {
    parse_model("F1 =~ X1 + X2\nF1 =~ X3 X4");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() > 0);
  }
  CHECK_THROWS_AS(parse_model("F1 =~ X1 +"), ParseError);
  CHECK_THROWS_AS(parse_model("X1 ~~ X2 $ X3"), ParseError);
}

TEST_CASE("semantic errors") {
  CHECK_THROWS_AS(parse_model("Y ~ X\nY ~ X"), ParseError);
  ParseOptions po;
  po.known_manifests = std::vector<std::string>{"X1", "X2"};
  CHECK_THROWS_AS(parse_model("X1 ~ X3", po), ParseError);
  CHECK_NOTHROW(parse_model("X1 ~ X2", po));
  CHECK_THROWS_AS(parse_model("X1 ~ 1*X2\nX2 ~ 1*X1"), ParseError);
}

TEST_CASE("print and parse round-trip") {
  const char* texts[] = {
      "F1 =~ X1 + X2 + X3 + X4\nF2 =~ X4 + X5 + X6",
      "F =~ NA*A + 0.5*B + C\nF ~~ 1*F\nA ~~ B",
      "Y ~ X1 + X2\nX1 ~~ X2\nY ~ 1",
      "F1 =~ A + B + C\nF2 =~ D + E + G\nF2 ~ F1",
  };
  for (const char* t : texts) {
    ModelSpec a = parse_model(t);
    std::string printed = print_model(a);
    ModelSpec b = parse_model(printed);
    CHECK(print_model(b) == printed);
    REQUIRE(a.k() == b.k());
    for (int j = 0; j < a.k(); ++j) {
      CHECK(a.params[j].matrix == b.params[j].matrix);
      CHECK(a.params[j].row == b.params[j].row);
      CHECK(a.params[j].col == b.params[j].col);
    }
  }
}

TEST_CASE("layout does not depend on whitespace, comments or separators") {
  std::string a = print_model(parse_model("F1 =~ X1 + X2 + X3\nX3 ~~ X2"));
  std::string b = print_model(parse_model("  # comment\nF1=~X1+X2+X3 ; X3~~X2  # trailing\n\n"));
  std::string c = print_model(parse_model("F1 =~ X1 +\n  X2 +\n  X3\nX3 ~~ X2\n"));
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("variables are ordered by natural sort") {
  ModelSpec s = parse_model("X10 ~ X2\nX2 ~ X1");
  REQUIRE(s.p() == 3);
  CHECK(s.manifest_names[0] == "X1");
  CHECK(s.manifest_names[1] == "X2");
  CHECK(s.manifest_names[2] == "X10");
}
