#include "vsem/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "vsem/error.hpp"
#include "vsem/parallel.hpp"

namespace vsem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd simulate_cases(const ImpliedMoments& mom, Eigen::Index n, std::uint64_t seed, std::uint64_t key) {
  if (n <= 0) throw std::invalid_argument("simulate: n must be positive");
  Eigen::LLT<MatrixXd> llt(mom.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("implied covariance matrix is not positive definite");
  const Eigen::Index p = mom.sigma.rows();
  auto eng = substream(seed, key);
  std::normal_distribution<double> norm;
  MatrixXd z(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) z(i, j) = norm(eng);
  }
  MatrixXd x = z * llt.matrixL().transpose();
  x.rowwise() += mom.mu.transpose();
  return x;
}

Dataset simulate_data(const SimConfig& cfg) {
  if (cfg.theta_true.size() != cfg.spec.k()) throw std::invalid_argument("theta_true has the wrong length");
  Dataset out;
  out.names = cfg.spec.manifest_names;
  out.cases = simulate_cases(implied_moments(cfg.spec, cfg.theta_true), cfg.n, cfg.seed);
  return out;
}

double order_statistic_quantile(const std::vector<double>& sorted, double prob) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  double pos = std::ceil(prob * static_cast<double>(sorted.size()) - 1e-9);
  auto idx = static_cast<std::size_t>(std::clamp(pos, 1.0, static_cast<double>(sorted.size())));
  return sorted[idx - 1];
}

namespace {

// Moments of a resample given how often each case was drawn.
SampleMoments weighted_moments(const MatrixXd& cases, const VectorXd& counts) {
  SampleMoments sm;
  sm.n = cases.rows();
  const double n = static_cast<double>(sm.n);
  sm.mean = cases.transpose() * counts / n;
  MatrixXd centered = cases.rowwise() - sm.mean.transpose();
  sm.cov = centered.transpose() * counts.asDiagonal() * centered / n;
  return sm;
}

}  // namespace

BootstrapFits bootstrap_fits(const std::vector<const MomentModel*>& models, const std::vector<const MatrixXd*>& cases,
                             const std::vector<VectorXd>& starts, int reps, std::uint64_t seed, int threads) {
  const std::size_t m = models.size();
  if (cases.size() != m || starts.size() != m) throw std::invalid_argument("bootstrap: argument lengths differ");
  if (m == 0) throw std::invalid_argument("bootstrap: no models");
  const Eigen::Index n = cases[0]->rows();
  BootstrapFits out;
  out.loglik = MatrixXd::Zero(reps, static_cast<Eigen::Index>(m));
  out.converged.assign(reps, 0);
  std::vector<FitOptions> fo(m);
  for (std::size_t j = 0; j < m; ++j) fo[j].start = starts[j];
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    auto eng = substream(seed, 0xb007, r);
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    VectorXd counts = VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) counts(pick(eng)) += 1.0;
    bool all = true;
    for (std::size_t j = 0; j < m && all; ++j) {
      Estimate e = fit_moments(*models[j], weighted_moments(*cases[j], counts), fo[j]);
      all = e.converged;
      out.loglik(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = e.loglik_total;
    }
    out.converged[r] = all ? 1 : 0;
  });
  return out;
}

BootstrapResult bootstrap_ic_ci(const ModelSpec& spec_a, const ModelSpec& spec_b, const Dataset& data,
                                const BootstrapOptions& opts) {
  if (opts.reps < 100) throw std::invalid_argument("bootstrap needs at least 100 replicates");
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const Dataset aligned_a = align_to_model(data, spec_a);
  const Dataset aligned_b = align_to_model(data, spec_b);
  const Eigen::Index n = aligned_a.n();
  const MomentModel model_a(spec_a), model_b(spec_b);
  VectorXd start_a = opts.start_a ? *opts.start_a : fit_moments(model_a, sample_moments(aligned_a.cases)).theta;
  VectorXd start_b = opts.start_b ? *opts.start_b : fit_moments(model_b, sample_moments(aligned_b.cases)).theta;

  BootstrapFits fits = bootstrap_fits({&model_a, &model_b}, {&aligned_a.cases, &aligned_b.cases}, {start_a, start_b},
                                      opts.reps, opts.seed, opts.threads);
  const double per_param = opts.criterion == Criterion::AIC ? 2.0 : std::log(static_cast<double>(n));
  const double penalty = per_param * (spec_a.k() - spec_b.k());

  BootstrapResult out;
  out.requested = opts.reps;
  for (int r = 0; r < opts.reps; ++r) {
    if (fits.converged[r]) {
      out.differences.push_back(-2.0 * (fits.loglik(r, 0) - fits.loglik(r, 1)) + penalty);
    } else {
      ++out.dropped;
    }
  }
  if (out.dropped * 10 > opts.reps) {
    throw NumericalError("bootstrap: " + std::to_string(out.dropped) + " of " + std::to_string(opts.reps) +
                         " replicates failed to converge");
  }
  out.interval = percentile_interval(out.differences, opts.alpha);
  return out;
}

Interval percentile_interval(std::vector<double> values, double alpha) {
  std::sort(values.begin(), values.end());
  return {order_statistic_quantile(values, alpha / 2.0), order_statistic_quantile(values, 1.0 - alpha / 2.0)};
}

}  // namespace vsem
