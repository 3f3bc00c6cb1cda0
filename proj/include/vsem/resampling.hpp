#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

#include "vsem/data.hpp"
#include "vsem/engine.hpp"
#include "vsem/model.hpp"
#include "vsem/vuong.hpp"

namespace vsem {

struct SimConfig {
  ModelSpec spec;
  Eigen::VectorXd theta_true;
  Eigen::Index n = 0;
  std::uint64_t seed = 1;
};

/// n iid normal draws from the moments implied by theta_true. Columns are named after the
/// manifests. Throws NumericalError if the implied covariance is not positive definite.
Dataset simulate_data(const SimConfig& cfg);

/// Same, from moments directly; `key` selects an independent substream of `seed`.
Eigen::MatrixXd simulate_cases(const ImpliedMoments& mom, Eigen::Index n, std::uint64_t seed, std::uint64_t key = 0);

struct BootstrapOptions {
  int reps = 1000;
  double alpha = 0.10;
  Criterion criterion = Criterion::BIC;
  std::uint64_t seed = 1;
  int threads = 1;
  // Warm starts; when absent both models are fitted once to the full sample first.
  std::optional<Eigen::VectorXd> start_a;
  std::optional<Eigen::VectorXd> start_b;
};

struct BootstrapResult {
  Interval interval;
  std::vector<double> differences;  // IC_A - IC_B per kept replicate, in replicate order
  int requested = 0;
  int dropped = 0;
};

/// Total log-likelihoods of several models refitted on common case resamples.
/// `cases[j]` holds the data aligned to `models[j]`; all share the same rows.
struct BootstrapFits {
  Eigen::MatrixXd loglik;  // reps x models
  std::vector<char> converged;  // per replicate, all models converged
};
BootstrapFits bootstrap_fits(const std::vector<const MomentModel*>& models, const std::vector<const Eigen::MatrixXd*>& cases,
                             const std::vector<Eigen::VectorXd>& starts, int reps, std::uint64_t seed, int threads = 1);

/// Percentile interval of IC_A - IC_B over case resamples. Throws std::invalid_argument for
/// reps < 100 and NumericalError when more than 10% of replicates fail to converge.
BootstrapResult bootstrap_ic_ci(const ModelSpec& spec_a, const ModelSpec& spec_b, const Dataset& data,
                                const BootstrapOptions& opts = {});

/// Equal-tailed percentile interval at level 1 - alpha.
Interval percentile_interval(std::vector<double> values, double alpha);

/// Type-1 (inverse empirical CDF) quantile of sorted values.
double order_statistic_quantile(const std::vector<double>& sorted, double prob);

}  // namespace vsem
