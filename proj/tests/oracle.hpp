#pragma once

// Reference implementations used by the tests. They read the pattern matrices of a ModelSpec
// directly and share no code with the engine.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

#include "vsem/model.hpp"

namespace oracle {

inline double cell_value(const vsem::Cell& c, const Eigen::VectorXd& theta) {
  return c.is_free() ? theta(c.param) : (c.set ? c.value : 0.0);
}

struct Moments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// Sigma = Lambda_all (I - B)^-1 Psi (I - B)^-T Lambda_all' restricted to manifests.
inline Moments implied(const vsem::ModelSpec& s, const Eigen::VectorXd& theta) {
  const int p = s.p(), m = s.m(), nv = p + m;
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nv, nv);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv; ++j) b(i, j) = cell_value(s.beta(i, j), theta);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < m; ++j) b(i, p + j) += cell_value(s.lambda(i, j), theta);
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(nv, nv);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j <= i; ++j) psi(i, j) = psi(j, i) = cell_value(s.psi(i, j), theta);
  Eigen::VectorXd alpha(nv);
  for (int i = 0; i < nv; ++i) alpha(i) = cell_value(s.nu_alpha(i, 0), theta);
  Eigen::MatrixXd a = (Eigen::MatrixXd::Identity(nv, nv) - b).inverse();
  Eigen::MatrixXd all = a * psi * a.transpose();
  Moments out;
  out.sigma = all.topLeftCorner(p, p);
  out.mu = (a * alpha).head(p);
  return out;
}

// log N(x; mu, sigma) for each row, via an explicit inverse and determinant.
inline Eigen::VectorXd mvn_loglik(const Eigen::MatrixXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma) {
  const double p = static_cast<double>(sigma.rows());
  Eigen::MatrixXd inv = sigma.inverse();
  double logdet = std::log(sigma.determinant());
  Eigen::VectorXd out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::VectorXd r = x.row(i).transpose() - mu;
    out(i) = -0.5 * (p * std::log(2.0 * std::numbers::pi) + logdet + r.dot(inv * r));
  }
  return out;
}

// Central finite-difference casewise scores. `mean_override` replaces the implied mean
// (used when the model has no mean structure).
inline Eigen::MatrixXd fd_scores(const vsem::ModelSpec& s, const Eigen::VectorXd& theta, const Eigen::MatrixXd& x,
                                 const Eigen::VectorXd* mean_override) {
  Eigen::MatrixXd out(x.rows(), theta.size());
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    double h = 1e-5 * (1.0 + std::abs(theta(j)));
    Eigen::VectorXd tp = theta, tm = theta;
    tp(j) += h;
    tm(j) -= h;
    Moments mp = implied(s, tp), mm = implied(s, tm);
    if (mean_override) mp.mu = mm.mu = *mean_override;
    out.col(j) = (mvn_loglik(x, mp.mu, mp.sigma) - mvn_loglik(x, mm.mu, mm.sigma)) / (2.0 * h);
  }
  return out;
}

}  // namespace oracle
