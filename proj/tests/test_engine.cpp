#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "oracle.hpp"
#include "vsem/engine.hpp"
#include "vsem/error.hpp"
#include "vsem/model.hpp"
#include "vsem/resampling.hpp"

using namespace vsem;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

Dataset noise_data(Eigen::Index n, const std::vector<std::string>& names, unsigned seed) {
  std::mt19937 eng(seed);
  std::normal_distribution<double> z;
  Dataset d;
  d.names = names;
  d.cases.resize(n, static_cast<Eigen::Index>(names.size()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d.p(); ++j) d.cases(i, j) = z(eng);
  // Some correlation so regressions have signal.
  for (Eigen::Index j = 1; j < d.p(); ++j) d.cases.col(j) += 0.5 * d.cases.col(j - 1);
  return d;
}

}  // namespace

TEST_CASE("saturated one-variable model") {
  ModelSpec s = parse_model("X1 ~~ X1");
  Dataset d = noise_data(50, {"X1"}, 3);
  FittedModel f = fit_ml(s, d);
  REQUIRE(f.converged);
  double mean = d.cases.col(0).mean();
  double var = (d.cases.col(0).array() - mean).square().mean();
  CHECK(f.theta_hat(0) == doctest::Approx(var).epsilon(1e-7));
  double ll = -0.5 * 50 * (std::log(2 * std::numbers::pi * var) + 1.0);
  CHECK(f.loglik_total == doctest::Approx(ll).epsilon(1e-10));
  auto ic = information_criteria(f);
  CHECK(ic.aic == doctest::Approx(-2 * ll + 2));
  CHECK(ic.bic == doctest::Approx(-2 * ll + std::log(50.0)));
}

TEST_CASE("regression estimates equal least squares") {
  ModelSpec s = parse_model("Y ~ X1 + X2\nX1 ~~ X2");
  Dataset d = noise_data(200, {"X1", "X2", "Y"}, 11);
  d.cases.col(2) += 0.7 * d.cases.col(0) - 0.3 * d.cases.col(1);
  FittedModel f = fit_ml(s, d);
  REQUIRE(f.converged);
  MatrixXd x(200, 3);
  x.col(0).setOnes();
  x.col(1) = d.cases.col(0);
  x.col(2) = d.cases.col(1);
  VectorXd beta = x.colPivHouseholderQr().solve(d.cases.col(2));
  double rss = (d.cases.col(2) - x * beta).squaredNorm();
  for (int j = 0; j < s.k(); ++j) {
    const auto& e = s.params[j];
    if (e.matrix == MatrixKind::Beta && e.col == 0) CHECK(f.theta_hat(j) == doctest::Approx(beta(1)).epsilon(1e-6));
    if (e.matrix == MatrixKind::Beta && e.col == 1) CHECK(f.theta_hat(j) == doctest::Approx(beta(2)).epsilon(1e-6));
    if (e.matrix == MatrixKind::Psi && e.row == 2 && e.col == 2) {
      CHECK(f.theta_hat(j) == doctest::Approx(rss / 200).epsilon(1e-6));
    }
  }
}

TEST_CASE("implied moments match the reference formula") {
  ModelSpec gen = parse_model("X2 ~ 0.2*X1\nX3 ~ 0.2*X2\nX1 ~~ 1*X1\nX2 ~~ 0.8*X2\nX3 ~~ 0.8*X3");
  ImpliedMoments m = implied_moments(gen, VectorXd(0));
  CHECK(m.sigma(0, 1) == doctest::Approx(0.2));
  CHECK(m.sigma(1, 1) == doctest::Approx(0.84));
  CHECK(m.sigma(2, 2) == doctest::Approx(0.04 * 0.84 + 0.8));

  ModelSpec s = parse_model("F1 =~ A + B + C\nF2 =~ D + E + G\nF2 ~ F1\nA ~~ D\nA ~ 1\nF1 ~ 1");
  std::mt19937 eng(5);
  std::uniform_real_distribution<double> u(0.2, 0.9);
  VectorXd theta(s.k());
  for (int j = 0; j < s.k(); ++j) theta(j) = s.params[j].is_variance() ? u(eng) + 0.5 : u(eng) * 0.5;
  ImpliedMoments mine = implied_moments(s, theta);
  oracle::Moments ref = oracle::implied(s, theta);
  CHECK((mine.sigma - ref.sigma).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((mine.mu - ref.mu).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("casewise log-likelihood matches the reference density") {
  MatrixXd sigma(2, 2);
  sigma << 2.0, 0.3, 0.3, 1.0;
  VectorXd mu(2);
  mu << 0.5, -1.0;
  MatrixXd x = MatrixXd::Random(7, 2);
  VectorXd a = casewise_loglik(ImpliedMoments{mu, sigma}, x);
  VectorXd b = oracle::mvn_loglik(x, mu, sigma);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  MatrixXd bad = MatrixXd::Zero(2, 2);
  CHECK_THROWS_AS(casewise_loglik(ImpliedMoments{mu, bad}, x), NumericalError);
}

TEST_CASE("scores match finite differences and sum to zero at the estimate") {
  ModelSpec s = parse_model("F =~ X1 + X2 + X3 + X4\nX1 ~~ X2");
  ModelSpec gen = parse_model("F =~ 1*X1 + 0.8*X2 + 0.7*X3 + 0.6*X4\nF ~~ 1*F\nX1 ~~ 0.5*X1\nX2 ~~ 0.5*X2\n"
                              "X3 ~~ 0.5*X3\nX4 ~~ 0.5*X4\nX1 ~~ 0.1*X2");
  Dataset d = simulate_data(SimConfig{gen, VectorXd(0), 300, 4});
  FittedModel f = fit_ml(s, d);
  REQUIRE(f.converged);
  CHECK(f.scores.colwise().sum().cwiseAbs().maxCoeff() < 1e-6 * 300);
  MatrixXd fd = oracle::fd_scores(s, f.theta_hat, d.cases, &f.moments.mu);
  double scale = fd.cwiseAbs().maxCoeff();
  CHECK((f.scores - fd).cwiseAbs().maxCoeff() < 1e-5 * scale);
  CHECK((casewise_scores(f, d) - f.scores).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("expected information equals minus the Hessian when the model reproduces the moments") {
  ModelSpec s = parse_model("F =~ X1 + X2 + X3\nX3 ~ 1\nX1 ~ 1\nX2 ~ 1");
  MomentModel model(s);
  VectorXd theta(s.k());
  for (int j = 0; j < s.k(); ++j) theta(j) = s.params[j].is_variance() ? 0.7 : 0.4 + 0.1 * j;
  MomentModel::State st;
  REQUIRE(model.evaluate(theta, st));
  SampleMoments sm{st.moments.mu, st.moments.sigma, 1000};
  MatrixXd info = model.expected_information(st);
  MatrixXd hess = average_hessian(model, sm, theta);
  CHECK((info + hess).cwiseAbs().maxCoeff() < 1e-5);
  VectorXd g;
  REQUIRE(model.average_gradient(st, sm, g));
  CHECK(g.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("regression information in closed form") {
  // Y ~ X with var(X) = v, residual variance s2: I(beta) = v / s2 and I(s2) = 1 / (2 s2^2).
  ModelSpec s = parse_model("Y ~ X");
  MomentModel model(s);
  VectorXd theta(3);
  for (int j = 0; j < 3; ++j) {
    const auto& e = s.params[j];
    if (e.matrix == MatrixKind::Beta) theta(j) = 0.5;
    if (e.is_variance() && e.row == 0) theta(j) = 2.0;  // X
    if (e.is_variance() && e.row == 1) theta(j) = 0.5;  // Y
  }
  MomentModel::State st;
  REQUIRE(model.evaluate(theta, st));
  MatrixXd info = model.expected_information(st);
  for (int j = 0; j < 3; ++j) {
    const auto& e = s.params[j];
    if (e.matrix == MatrixKind::Beta) CHECK(info(j, j) == doctest::Approx(2.0 / 0.5));
    if (e.is_variance() && e.row == 1) CHECK(info(j, j) == doctest::Approx(1.0 / (2 * 0.25)));
    if (e.is_variance() && e.row == 0) CHECK(info(j, j) == doctest::Approx(1.0 / (2 * 4.0)));
  }
}

TEST_CASE("fit errors") {
  ModelSpec s = parse_model("F =~ X1 + X2 + X3");
  Dataset d = noise_data(5, {"X1", "X2", "X3"}, 1);
  CHECK_THROWS_AS(fit_ml(s, d), DataError);
  Dataset wrong = noise_data(50, {"X1", "X2", "Q"}, 1);
  CHECK_THROWS_AS(fit_ml(s, wrong), DataError);
}

TEST_CASE("warm start reaches the same optimum") {
  ModelSpec s = parse_model("F =~ X1 + X2 + X3 + X4");
  Dataset d = noise_data(200, {"X1", "X2", "X3", "X4"}, 8);
  SampleMoments sm = sample_moments(d.cases);
  Estimate cold = fit_moments(s, sm);
  FitOptions fo;
  fo.start = cold.theta;
  Estimate warm = fit_moments(s, sm, fo);
  CHECK(warm.converged);
  CHECK(warm.iterations <= 1);
  CHECK(warm.loglik_total == doctest::Approx(cold.loglik_total).epsilon(1e-12));
}
