#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "vsem/engine.hpp"

namespace vsem {

enum class Decision { EquivalentFitIndistinguishable, PreferA, PreferB, NoPreference };
enum class Criterion { AIC, BIC };
enum class Variant { NonNested, Nested };

const char* to_string(Decision d);
const char* to_string(Criterion c);

/// Casewise log-ratio variance. Divisor n by default; `unbiased` switches to n - 1.
/// Throws std::invalid_argument on a length mismatch or n < 2.
double omega_hat_squared(const Eigen::VectorXd& ll_a, const Eigen::VectorXd& ll_b, bool unbiased = false);

/// Block matrix
///   [ -V_A U_A^-1     -V_AB U_B^-1 ]
///   [  V_AB' U_A^-1    V_B U_B^-1  ]
/// with V_* the average score cross-products. U_* are average casewise Hessians (negative
/// definite). Throws NumericalError if either U has condition number > 1e12.
Eigen::MatrixXd w_matrix(const Eigen::MatrixXd& u_a, const Eigen::MatrixXd& u_b, const Eigen::MatrixXd& scores_a,
                         const Eigen::MatrixXd& scores_b);

struct Eigenvalues {
  Eigen::VectorXd values;  // real parts, descending
  double max_imag_ratio = 0.0;  // max |imag| / spectral radius
};

/// Eigenvalues of a nonsymmetric matrix via real Schur decomposition.
Eigenvalues real_eigenvalues(const Eigen::MatrixXd& w);

struct CompareOptions {
  double alpha1 = 0.05;  // distinguishability test
  double alpha2 = 0.05;  // LRT
  double ci_alpha = 0.05;
  Criterion criterion = Criterion::BIC;
  Variant variant = Variant::NonNested;
  bool one_sided = false;  // decide on the one-sided p in the direction of z
  bool unbiased_omega = false;
  bool use_expected_information = false;  // U = -expected information instead of the average Hessian
};

struct TestResult {
  double statistic = 0.0;
  double p = 1.0;
  Eigen::VectorXd eigenvalues;
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }
};

struct ComparisonResult {
  std::string model_a;
  std::string model_b;
  Eigen::Index n = 0;
  int k = 0;
  int q = 0;
  double omega_hat_sq = 0.0;
  double lr_ab = 0.0;  // n^-1/2 sum log f_A / f_B
  Eigen::VectorXd w_eigenvalues;
  double p_distinguish = 1.0;
  double z_lrt = 0.0;
  double p_lrt_two_sided = 1.0;
  double p_lrt_one_sided = 1.0;  // in the direction of the sign of z
  bool lrt_applicable = false;
  double p_nested_variance = 1.0;
  double p_nested_lr = 1.0;
  double p_classical = 1.0;
  bool nested = false;
  double aic_diff = 0.0;
  double bic_diff = 0.0;
  Criterion criterion = Criterion::BIC;
  double ci_alpha = 0.05;
  Interval ic_ci;
  Decision decision = Decision::NoPreference;
  std::vector<std::string> warnings;
};

Eigen::MatrixXd w_matrix(const FittedModel& fit_a, const FittedModel& fit_b, bool use_expected_information = false);

/// n * omega^2 against the weighted chi-square with squared eigenvalues of W.
TestResult distinguishability_test(const FittedModel& fit_a, const FittedModel& fit_b,
                                   const CompareOptions& opts = {});

struct LrtResult {
  double lr = 0.0;
  double z = 0.0;
  double p_one = 1.0;  // P(Z > |z|), direction given by the sign of z
  double p_two = 1.0;
};

/// Normal-theory non-nested LRT from casewise log-likelihoods. Positive z favors A.
/// Throws NumericalError when omega^2 == 0.
LrtResult nonnested_lrt(const Eigen::VectorXd& ll_a, const Eigen::VectorXd& ll_b, bool unbiased = false);
inline LrtResult nonnested_lrt(const FittedModel& fit_a, const FittedModel& fit_b, bool unbiased = false) {
  return nonnested_lrt(fit_a.loglik_casewise, fit_b.loglik_casewise, unbiased);
}

struct NestedResult {
  double variance_stat = 0.0;  // n * omega^2
  double lr_stat = 0.0;        // 2 sum log f_full / f_restricted
  double p_variance = 1.0;
  double p_lr = 1.0;
  double p_classical = 1.0;
  int df = 0;
  Eigen::VectorXd eigenvalues;
};

/// Vuong's nested-model tests and the classical chi-square difference test.
/// Throws std::invalid_argument if the full model does not have more parameters.
NestedResult nested_tests(const FittedModel& fit_full, const FittedModel& fit_restricted,
                          const CompareOptions& opts = {});

/// (IC_A - IC_B) +- z_{1-alpha/2} sqrt(4 n omega^2).
Interval ic_difference_ci(double ic_diff, double omega_sq, Eigen::Index n, double alpha);
Interval ic_difference_ci(const FittedModel& fit_a, const FittedModel& fit_b, double alpha, Criterion criterion,
                          bool unbiased = false);

/// Three-outcome sequential rule from the distinguishability p-value and the LRT.
Decision decide(double p_distinguish, double z, double p_lrt, double alpha1, double alpha2);

/// Distinguishability test at alpha1, then the LRT at alpha2. All statistics are kept.
ComparisonResult sequential_compare(const FittedModel& fit_a, const FittedModel& fit_b,
                                    const CompareOptions& opts = {});

}  // namespace vsem
