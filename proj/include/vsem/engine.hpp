#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vsem/data.hpp"
#include "vsem/model.hpp"

namespace vsem {

struct ImpliedMoments {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

/// Moments of the manifest variables: Sigma_all = (I-B)^-1 Psi (I-B)^-T with the
/// loadings folded into B, mu_all = (I-B)^-1 alpha, both restricted to manifests.
/// With the mean structure off, mu is zero. Throws NumericalError on a singular (I - B)
/// or a non-finite theta.
ImpliedMoments implied_moments(const ModelSpec& spec, const Eigen::VectorXd& theta);

/// Natural-log MVN density of every row of `cases`. Throws NumericalError if sigma is not PD.
Eigen::VectorXd casewise_loglik(const ImpliedMoments& mom, const Eigen::MatrixXd& cases);
inline Eigen::VectorXd casewise_loglik(const ImpliedMoments& mom, const Dataset& data) {
  return casewise_loglik(mom, data.cases);
}

/// Precomputed evaluator for one ModelSpec. Cheap to copy; thread-compatible (const methods only).
class MomentModel {
 public:
  explicit MomentModel(const ModelSpec& spec);

  struct State {
    Eigen::MatrixXd a;          // (I - B)^-1
    Eigen::MatrixXd sigma_all;  // A Psi A'
    Eigen::VectorXd mu_all;     // A alpha
    ImpliedMoments moments;
  };

  const ModelSpec& spec() const { return spec_; }
  int k() const { return spec_.k(); }

  /// Returns false if (I - B) is singular.
  bool evaluate(const Eigen::VectorXd& theta, State& out) const;

  /// Average log-likelihood per case given sample moments; `mean_fixed` plugs the sample
  /// mean in for mu (mean structure off). Returns -inf if sigma is not PD.
  double average_loglik(const State& st, const SampleMoments& sm) const;

  /// Gradient of average_loglik with respect to theta (analytic).
  bool average_gradient(const State& st, const SampleMoments& sm, Eigen::VectorXd& grad) const;

  /// Per-observation expected (Fisher) information.
  Eigen::MatrixXd expected_information(const State& st) const;

  /// n x k casewise scores at the moments in `st`; `mu` is the mean used for the residuals.
  Eigen::MatrixXd casewise_scores(const State& st, const Eigen::MatrixXd& cases, const Eigen::VectorXd& mu) const;

  /// d sigma / d theta_j (p x p) and d mu / d theta_j (column j), analytic.
  void jacobian(const State& st, std::vector<Eigen::MatrixXd>& dsigma, Eigen::MatrixXd& dmu) const;

  /// The mean used for residuals: implied mu with a mean structure, the sample mean otherwise.
  Eigen::VectorXd effective_mean(const State& st, const SampleMoments& sm) const {
    return spec_.meanstructure ? st.moments.mu : sm.mean;
  }

 private:
  struct Slot {
    MatrixKind kind;
    int row;
    int col;  // in all-variable indices (lambda already folded into beta)
  };

  // tr(M_top (d Sigma_all / d theta_j)) for every j, M given on manifests.
  Eigen::VectorXd trace_terms(const State& st, const Eigen::MatrixXd& m_top) const;

  ModelSpec spec_;
  std::vector<Slot> slots_;
  Eigen::MatrixXd b_fixed_;
  Eigen::MatrixXd psi_fixed_;
  Eigen::VectorXd alpha_fixed_;
};

struct FitOptions {
  int max_iter = 500;
  double grad_tol = 1e-6;  // max-norm of the average (per-case) gradient
  double variance_floor = 1e-6;
  std::optional<Eigen::VectorXd> start;
};

/// Outcome of an optimizer run on sufficient statistics only.
struct Estimate {
  Eigen::VectorXd theta;
  double loglik_total = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_max = 0.0;
  std::vector<int> at_bound;  // variance parameters clamped at the floor
};

/// ML fit from sample moments (mean, biased covariance, n). Also used with population
/// moments to obtain pseudo-true parameters.
Estimate fit_moments(const ModelSpec& spec, const SampleMoments& sm, const FitOptions& opts = {});
Estimate fit_moments(const MomentModel& model, const SampleMoments& sm, const FitOptions& opts = {});

/// Average casewise Hessian at theta by central differences of the analytic gradient
/// (forward differences next to a variance bound), symmetrized.
Eigen::MatrixXd average_hessian(const MomentModel& model, const SampleMoments& sm, const Eigen::VectorXd& theta,
                                double variance_floor = 1e-6);

/// Start vector with the data-driven entries resolved (half the sample variance, sample mean).
Eigen::VectorXd resolve_start(const ModelSpec& spec, const SampleMoments& sm);

struct FittedModel {
  ModelSpec spec;
  Eigen::VectorXd theta_hat;
  Eigen::VectorXd loglik_casewise;
  Eigen::MatrixXd scores;         // n x k
  Eigen::MatrixXd unit_hessian;   // k x k, average casewise Hessian (estimate of U)
  Eigen::MatrixXd expected_info;  // k x k, per observation
  ImpliedMoments moments;         // mu is the mean actually used in the likelihood
  bool converged = false;
  int iterations = 0;
  double loglik_total = 0.0;
  double grad_max = 0.0;
  std::vector<std::string> warnings;

  Eigen::Index n() const { return loglik_casewise.size(); }
  int k() const { return spec.k(); }
};

/// Fits `spec` to `data` (columns matched by name). Non-convergence is reported through
/// `converged == false`, not an exception. Throws DataError on model/data mismatch.
FittedModel fit_ml(const ModelSpec& spec, const Dataset& data, const FitOptions& opts = {});

/// Recomputes the n x k score matrix of a fit on `data`.
Eigen::MatrixXd casewise_scores(const FittedModel& fit, const Dataset& data);

/// -U: negative average casewise Hessian (per observation).
Eigen::MatrixXd unit_information(const FittedModel& fit);

/// Ratio of extreme singular values; infinity for a singular matrix.
double condition_number(const Eigen::MatrixXd& m);

struct InformationCriteria {
  double aic = 0.0;
  double bic = 0.0;
};

InformationCriteria information_criteria(double loglik_total, int k, Eigen::Index n);
inline InformationCriteria information_criteria(const FittedModel& fit) {
  return information_criteria(fit.loglik_total, fit.k(), fit.n());
}

}  // namespace vsem
