#include "vsem/vuong.hpp"

#include <gsl/gsl_cdf.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vsem/error.hpp"
#include "vsem/wchisq.hpp"

namespace vsem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* to_string(Decision d) {
  switch (d) {
    case Decision::EquivalentFitIndistinguishable: return "equivalent-fit-indistinguishable";
    case Decision::PreferA: return "prefer-A";
    case Decision::PreferB: return "prefer-B";
    case Decision::NoPreference: return "no-preference";
  }
  return "?";
}

const char* to_string(Criterion c) { return c == Criterion::AIC ? "aic" : "bic"; }

double omega_hat_squared(const VectorXd& ll_a, const VectorXd& ll_b, bool unbiased) {
  if (ll_a.size() != ll_b.size()) throw std::invalid_argument("omega_hat_squared: length mismatch");
  const Eigen::Index n = ll_a.size();
  if (n < 2) throw std::invalid_argument("omega_hat_squared: need at least 2 cases");
  VectorXd d = ll_a - ll_b;
  // Two-pass form of mean(d^2) - mean(d)^2.
  double mean = d.mean();
  double ss = (d.array() - mean).square().sum();
  return ss / static_cast<double>(unbiased ? n - 1 : n);
}

MatrixXd w_matrix(const MatrixXd& u_a, const MatrixXd& u_b, const MatrixXd& scores_a, const MatrixXd& scores_b) {
  const Eigen::Index n = scores_a.rows();
  if (scores_b.rows() != n) throw std::invalid_argument("w_matrix: score matrices have different case counts");
  const Eigen::Index k = scores_a.cols(), q = scores_b.cols();
  if (u_a.rows() != k || u_a.cols() != k || u_b.rows() != q || u_b.cols() != q) {
    throw std::invalid_argument("w_matrix: Hessian dimensions do not match the scores");
  }
  for (const auto* u : {&u_a, &u_b}) {
    if (condition_number(*u) > 1e12) {
      throw NumericalError("W matrix: a unit Hessian is numerically singular (condition number > 1e12); "
                           "check that both models are identified");
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  MatrixXd v_a = scores_a.transpose() * scores_a * inv_n;
  MatrixXd v_b = scores_b.transpose() * scores_b * inv_n;
  MatrixXd v_ab = scores_a.transpose() * scores_b * inv_n;
  MatrixXd ua_inv = u_a.partialPivLu().inverse();
  MatrixXd ub_inv = u_b.partialPivLu().inverse();
  MatrixXd w(k + q, k + q);
  w.topLeftCorner(k, k) = -v_a * ua_inv;
  w.topRightCorner(k, q) = -v_ab * ub_inv;
  w.bottomLeftCorner(q, k) = v_ab.transpose() * ua_inv;
  w.bottomRightCorner(q, q) = v_b * ub_inv;
  return w;
}

MatrixXd w_matrix(const FittedModel& fit_a, const FittedModel& fit_b, bool use_expected_information) {
  if (fit_a.n() != fit_b.n()) throw std::invalid_argument("fits were computed on different case counts");
  const MatrixXd u_a = use_expected_information ? MatrixXd(-fit_a.expected_info) : fit_a.unit_hessian;
  const MatrixXd u_b = use_expected_information ? MatrixXd(-fit_b.expected_info) : fit_b.unit_hessian;
  return w_matrix(u_a, u_b, fit_a.scores, fit_b.scores);
}

Eigenvalues real_eigenvalues(const MatrixXd& w) {
  Eigenvalues out;
  if (w.size() == 0) return out;
  Eigen::EigenSolver<MatrixXd> es(w, false);
  if (es.info() != Eigen::Success) throw NumericalError("eigenvalue decomposition of W failed");
  const auto& ev = es.eigenvalues();
  out.values = ev.real();
  double radius = ev.cwiseAbs().maxCoeff();
  double max_imag = ev.imag().cwiseAbs().maxCoeff();
  out.max_imag_ratio = radius > 0.0 ? max_imag / radius : 0.0;
  std::sort(out.values.data(), out.values.data() + out.values.size(), std::greater<>());
  return out;
}

namespace {

double weighted_upper_p(const VectorXd& weights, double stat) {
  WeightedChiSq dist(std::vector<double>(weights.data(), weights.data() + weights.size()));
  if (dist.degenerate()) return stat > 0.0 ? 0.0 : 1.0;
  return dist.upper_p(stat);
}

Eigenvalues checked_eigenvalues(const FittedModel& fit_a, const FittedModel& fit_b, bool expected,
                                std::vector<std::string>* warnings) {
  Eigenvalues ev = real_eigenvalues(w_matrix(fit_a, fit_b, expected));
  if (warnings && ev.max_imag_ratio > 1e-8) {
    warnings->push_back("W has complex eigenvalues (max |imag| / spectral radius = " +
                        std::to_string(ev.max_imag_ratio) + "); real parts used");
  }
  return ev;
}

TestResult distinguishability_from(const FittedModel& fit_a, const FittedModel& fit_b, const Eigenvalues& ev,
                                   const CompareOptions& opts, std::vector<std::string>* warnings) {
  TestResult r;
  r.eigenvalues = ev.values;
  const double n = static_cast<double>(fit_a.n());
  r.statistic = n * omega_hat_squared(fit_a.loglik_casewise, fit_b.loglik_casewise, opts.unbiased_omega);
  if (r.statistic <= 0.0) {
    r.p = 1.0;
    if (warnings) warnings->push_back("casewise likelihoods are identical; models are indistinguishable");
    return r;
  }
  r.p = weighted_upper_p(ev.values.array().square().matrix(), r.statistic);
  return r;
}

}  // namespace

TestResult distinguishability_test(const FittedModel& fit_a, const FittedModel& fit_b, const CompareOptions& opts) {
  Eigenvalues ev = checked_eigenvalues(fit_a, fit_b, opts.use_expected_information, nullptr);
  return distinguishability_from(fit_a, fit_b, ev, opts, nullptr);
}

LrtResult nonnested_lrt(const VectorXd& ll_a, const VectorXd& ll_b, bool unbiased) {
  double omega_sq = omega_hat_squared(ll_a, ll_b, unbiased);
  if (!(omega_sq > 0.0)) {
    throw NumericalError("non-nested LRT undefined: casewise log-ratio variance is zero "
                         "(run the distinguishability test)");
  }
  LrtResult r;
  const double n = static_cast<double>(ll_a.size());
  r.lr = (ll_a - ll_b).sum() / std::sqrt(n);
  r.z = r.lr / std::sqrt(omega_sq);
  r.p_one = gsl_cdf_ugaussian_Q(std::abs(r.z));
  r.p_two = std::min(1.0, 2.0 * r.p_one);
  return r;
}

NestedResult nested_tests(const FittedModel& fit_full, const FittedModel& fit_restricted, const CompareOptions& opts) {
  NestedResult r;
  r.df = fit_full.k() - fit_restricted.k();
  if (r.df <= 0) {
    throw std::invalid_argument("nested tests: the full model must have more free parameters than the restricted one");
  }
  Eigenvalues ev = checked_eigenvalues(fit_full, fit_restricted, opts.use_expected_information, nullptr);
  TestResult dist = distinguishability_from(fit_full, fit_restricted, ev, opts, nullptr);
  r.eigenvalues = ev.values;
  r.variance_stat = dist.statistic;
  r.p_variance = dist.p;
  r.lr_stat = 2.0 * (fit_full.loglik_casewise - fit_restricted.loglik_casewise).sum();
  r.p_lr = weighted_upper_p(ev.values, r.lr_stat);
  r.p_classical = r.lr_stat > 0.0 ? gsl_cdf_chisq_Q(r.lr_stat, r.df) : 1.0;
  return r;
}

Interval ic_difference_ci(double ic_diff, double omega_sq, Eigen::Index n, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  double z = gsl_cdf_ugaussian_Pinv(1.0 - alpha / 2.0);
  double half = z * std::sqrt(4.0 * static_cast<double>(n) * std::max(omega_sq, 0.0));
  return {ic_diff - half, ic_diff + half};
}

Interval ic_difference_ci(const FittedModel& fit_a, const FittedModel& fit_b, double alpha, Criterion criterion,
                          bool unbiased) {
  auto ia = information_criteria(fit_a);
  auto ib = information_criteria(fit_b);
  double diff = criterion == Criterion::AIC ? ia.aic - ib.aic : ia.bic - ib.bic;
  return ic_difference_ci(diff, omega_hat_squared(fit_a.loglik_casewise, fit_b.loglik_casewise, unbiased), fit_a.n(),
                          alpha);
}

Decision decide(double p_distinguish, double z, double p_lrt, double alpha1, double alpha2) {
  if (!(p_distinguish < alpha1)) return Decision::EquivalentFitIndistinguishable;
  if (p_lrt < alpha2) return z > 0.0 ? Decision::PreferA : Decision::PreferB;
  return Decision::NoPreference;
}

ComparisonResult sequential_compare(const FittedModel& fit_a, const FittedModel& fit_b, const CompareOptions& opts) {
  if (fit_a.n() != fit_b.n()) throw std::invalid_argument("fits were computed on different case counts");
  ComparisonResult r;
  r.n = fit_a.n();
  r.k = fit_a.k();
  r.q = fit_b.k();
  r.criterion = opts.criterion;
  r.ci_alpha = opts.ci_alpha;
  r.nested = opts.variant == Variant::Nested;
  for (const auto* f : {&fit_a, &fit_b}) {
    if (!f->converged) r.warnings.push_back("a fit did not converge; statistics may be unreliable");
  }

  const VectorXd& la = fit_a.loglik_casewise;
  const VectorXd& lb = fit_b.loglik_casewise;
  r.omega_hat_sq = omega_hat_squared(la, lb, opts.unbiased_omega);
  r.lr_ab = (la - lb).sum() / std::sqrt(static_cast<double>(r.n));

  Eigenvalues ev = checked_eigenvalues(fit_a, fit_b, opts.use_expected_information, &r.warnings);
  r.w_eigenvalues = ev.values;
  TestResult dist = distinguishability_from(fit_a, fit_b, ev, opts, &r.warnings);
  r.p_distinguish = dist.p;

  if (r.omega_hat_sq > 0.0) {
    LrtResult lrt = nonnested_lrt(la, lb, opts.unbiased_omega);
    r.z_lrt = lrt.z;
    r.p_lrt_one_sided = lrt.p_one;
    r.p_lrt_two_sided = lrt.p_two;
  } else {
    r.z_lrt = std::numeric_limits<double>::quiet_NaN();
    r.p_lrt_one_sided = r.p_lrt_two_sided = 1.0;
  }

  auto ia = information_criteria(fit_a);
  auto ib = information_criteria(fit_b);
  r.aic_diff = ia.aic - ib.aic;
  r.bic_diff = ia.bic - ib.bic;
  double center = opts.criterion == Criterion::AIC ? r.aic_diff : r.bic_diff;
  r.ic_ci = ic_difference_ci(center, r.omega_hat_sq, r.n, opts.ci_alpha);
  if (!(r.omega_hat_sq > 0.0)) {
    r.warnings.push_back("zero-width IC interval: models are indistinguishable and the interval is invalid");
  }

  if (r.nested) {
    NestedResult nr = nested_tests(fit_a, fit_b, opts);
    r.p_nested_variance = nr.p_variance;
    r.p_nested_lr = nr.p_lr;
    r.p_classical = nr.p_classical;
    r.lrt_applicable = r.p_distinguish < opts.alpha1;
    // The full model (A) can only be preferred; the LR statistic is one-directional.
    r.decision = decide(r.p_distinguish, nr.lr_stat, nr.p_lr, opts.alpha1, opts.alpha2);
    if (r.decision == Decision::PreferB) r.decision = Decision::NoPreference;
  } else {
    r.lrt_applicable = r.p_distinguish < opts.alpha1;
    double p_lrt = opts.one_sided ? r.p_lrt_one_sided : r.p_lrt_two_sided;
    r.decision = decide(r.p_distinguish, r.z_lrt, p_lrt, opts.alpha1, opts.alpha2);
  }
  if (!r.lrt_applicable) {
    r.warnings.push_back("models not shown distinguishable; the LRT is reported but not applicable");
  }
  return r;
}

}  // namespace vsem
