#include "doctest.h"

#include <cmath>

#include "vsem/error.hpp"
#include "vsem/resampling.hpp"

using namespace vsem;
using Eigen::VectorXd;

TEST_CASE("simulated data follow the implied moments") {
  ModelSpec sat = parse_model("X1 ~~ X1");
  VectorXd theta(1);
  theta << 1.0;
  Dataset d = simulate_data(SimConfig{sat, theta, 1000000, 3});
  CHECK(d.names == std::vector<std::string>{"X1"});
  CHECK(std::abs(sample_moments(d.cases).cov(0, 0) - 1.0) < 0.004);

  ModelSpec gen = parse_model(
      "X2 ~ 0.2*X1\nX3 ~ 0.2*X2\nX4 ~ 0.2*X2 + 0.2*X3\nX5 ~ 0.2*X3\nX6 ~ 0.2*X2 + 0.2*X3\n"
      "X7 ~ 0.2*X3 + 0.2*X4\nX8 ~ 0.2*X5\nX9 ~ 0.2*X3 + 0.2*X6\nX1 ~~ 1*X1\nX2 ~~ 0.8*X2\nX3 ~~ 0.8*X3\n"
      "X4 ~~ 0.8*X4\nX5 ~~ 0.8*X5\nX6 ~~ 0.8*X6\nX7 ~~ 0.8*X7\nX8 ~~ 0.8*X8\nX9 ~~ 0.8*X9");
  Dataset g = simulate_data(SimConfig{gen, VectorXd(0), 1000000, 4});
  Eigen::MatrixXd diff = sample_moments(g.cases).cov - implied_moments(gen, VectorXd(0)).sigma;
  CHECK(diff.cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("same seed, same data") {
  ModelSpec sat = parse_model("X1 ~~ X1\nX2 ~~ X2\nX1 ~~ X2");
  VectorXd theta(3);
  theta << 1.0, 1.0, 0.5;
  Dataset a = simulate_data(SimConfig{sat, theta, 50, 9});
  Dataset b = simulate_data(SimConfig{sat, theta, 50, 9});
  Dataset c = simulate_data(SimConfig{sat, theta, 50, 10});
  CHECK(a.cases == b.cases);
  CHECK(a.cases != c.cases);
  VectorXd bad(3);
  bad << 1.0, 1.0, 2.0;
  CHECK_THROWS_AS(simulate_data(SimConfig{sat, bad, 50, 9}), NumericalError);
}

TEST_CASE("order statistics and percentile intervals") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  CHECK(order_statistic_quantile(v, 0.05) == 1);
  CHECK(order_statistic_quantile(v, 0.1) == 1);
  CHECK(order_statistic_quantile(v, 0.11) == 2);
  CHECK(order_statistic_quantile(v, 0.95) == 10);
  Interval i = percentile_interval({5, 3, 9, 1, 7, 2, 8, 4, 6, 10}, 0.2);
  CHECK(i.lower == 1);
  CHECK(i.upper == 9);
}

TEST_CASE("bootstrap intervals") {
  ModelSpec gen = parse_model("F =~ 1*X1 + 0.8*X2 + 0.7*X3 + 0.5*X4\nF ~~ 1*F\nX1 ~~ 0.5*X1\nX2 ~~ 0.5*X2\n"
                              "X3 ~~ 0.5*X3\nX4 ~~ 0.5*X4");
  Dataset d = simulate_data(SimConfig{gen, VectorXd(0), 200, 12});
  ModelSpec a = parse_model("F =~ X1 + X2 + X3 + X4");
  ModelSpec b = parse_model("F =~ X1 + X2 + X3\nX4 ~~ X1");

  BootstrapOptions bo;
  bo.reps = 100;
  BootstrapResult same = bootstrap_ic_ci(a, a, d, bo);
  CHECK(same.interval.lower == 0.0);
  CHECK(same.interval.upper == 0.0);

  bo.reps = 400;
  bo.alpha = 0.10;
  BootstrapResult r90 = bootstrap_ic_ci(a, b, d, bo);
  bo.alpha = 0.02;
  BootstrapResult r98 = bootstrap_ic_ci(a, b, d, bo);
  CHECK(r98.interval.lower <= r90.interval.lower);
  CHECK(r98.interval.upper >= r90.interval.upper);
  CHECK(r90.dropped == 0);
  CHECK(r90.differences.size() == 400u);

  bo.threads = 3;
  bo.alpha = 0.10;
  BootstrapResult threaded = bootstrap_ic_ci(a, b, d, bo);
  CHECK(threaded.differences == r90.differences);

  bo.reps = 99;
  CHECK_THROWS_AS(bootstrap_ic_ci(a, b, d, bo), std::invalid_argument);
}
