#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "vsem/model.hpp"

namespace vsem {

/// Pooled standard deviation of interval endpoints:
/// sqrt((n_rep - 1)(s_L^2 + s_U^2) / (2 n_rep - 2)), with divisor n_rep - 1 variances.
/// Throws std::invalid_argument on a length mismatch or fewer than 2 replicates.
double endpoint_sd(const std::vector<double>& lowers, const std::vector<double>& uppers);

struct IntervalSummary {
  int count = 0;
  double coverage = 0.0;
  double miss_low = 0.0;   // interval entirely below the truth
  double miss_high = 0.0;  // interval entirely above the truth
  double mean_width = 0.0;
  double endpoint_sd = 0.0;
};

/// Coverage summary of intervals against a fixed truth.
IntervalSummary summarize_intervals(const std::vector<double>& lowers, const std::vector<double>& uppers,
                                    double truth);

struct SimSummary {
  int study = 0;
  std::string pair;  // "A-B" etc.; model A is the first of the pair
  Eigen::Index n = 0;
  double d = 0.0;
  int reps = 0;     // replicates kept
  int dropped = 0;  // replicates with a failed fit
  double truth = 0.0;             // coverage target: expected sample BIC difference of the pair
  double population_truth = 0.0;  // BIC difference at the pseudo-true parameters
  std::vector<std::pair<std::string, double>> reject_rates;
  std::vector<std::pair<std::string, IntervalSummary>> intervals;
  // Per-replicate values, filled when SimOptions::keep_samples is set.
  std::vector<std::pair<std::string, std::vector<double>>> samples;
  std::vector<Eigen::VectorXd> eigenvalues;

  double rate(const std::string& key) const;
  const IntervalSummary& interval(const std::string& key) const;
  const std::vector<double>& sample(const std::string& key) const;
};

struct SimOptions {
  std::vector<Eigen::Index> n_levels;
  std::vector<double> d_levels;
  int reps = 1000;
  std::uint64_t seed = 1;
  int threads = 0;       // 0 = all hardware threads
  int boot_reps = 1000;  // 0 disables the bootstrap intervals
  double alpha = 0.05;
  double ci_level = 0.90;
  bool keep_samples = false;
};

SimOptions sim1_defaults();
SimOptions sim2_defaults();
SimOptions sim3_defaults();

/// Two-factor study: X4 cross-loading d in the population; candidates differ in which
/// indicator loads on both factors.
std::vector<SimSummary> run_sim1(const SimOptions& opts);
/// Path-model study: data from model D, candidates A, B, C compared pairwise.
std::vector<SimSummary> run_sim2(const SimOptions& opts);
/// Nested study: full model with residual covariances d among X7-X9 against the model without them.
std::vector<SimSummary> run_sim3(const SimOptions& opts);

/// Population model text for the two-factor study at cross-loading d.
std::string sim1_generator(double d);
/// Population model text for the nested study at residual covariance d.
std::string sim3_generator(double d);
extern const char* const kSim1ModelA;
extern const char* const kSim1ModelB;
extern const char* const kSim2ModelA;
extern const char* const kSim2ModelB;
extern const char* const kSim2ModelC;
extern const char* const kSim2Generator;
extern const char* const kSim3Full;
extern const char* const kSim3Restricted;

struct PopulationTarget {
  double population = 0.0;  // -2n (E l_A - E l_B) + (k_A - k_B) ln n at the pseudo-true parameters
  double expected = 0.0;    // same, less the difference in tr(J^-1 K): the mean of the sample difference
};

/// BIC difference (A - B) at sample size n from pseudo-true fits to the population moments.
/// Covariance-only models; normal data.
PopulationTarget population_bic_difference(const ModelSpec& a, const ModelSpec& b, const ModelSpec& generator, Eigen::Index n);

/// One row per summary; columns follow the first summary's rates and intervals.
void write_table_tsv(std::ostream& out, const std::vector<SimSummary>& rows);
/// Long format: study, pair, n, d, statistic, rate.
void write_power_tsv(std::ostream& out, const std::vector<SimSummary>& rows);

}  // namespace vsem
