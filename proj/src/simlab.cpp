#include "vsem/simlab.hpp"

#include <gsl/gsl_cdf.h>

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "vsem/engine.hpp"
#include "vsem/error.hpp"
#include "vsem/parallel.hpp"
#include "vsem/resampling.hpp"
#include "vsem/vuong.hpp"

namespace vsem {

using Eigen::MatrixXd;
using Eigen::VectorXd;

const char* const kSim1ModelA = "F1 =~ X1 + X2 + X3 + X4\nF2 =~ X4 + X5 + X6\n";
const char* const kSim1ModelB = "F1 =~ X1 + X2 + X3\nF2 =~ X4 + X3 + X5 + X6\n";

const char* const kSim2ModelA =
    "X3 ~ X1 + X2\nX4 ~ X3\nX5 ~ X3\nX6 ~ X3\nX7 ~ X3\nX8 ~ X3\nX9 ~ X3\nX1 ~~ X2\n";
const char* const kSim2ModelB =
    "X2 ~ X1\nX3 ~ X2\nX4 ~ X2 + X3\nX5 ~ X3\nX6 ~ X2 + X3\nX7 ~ X3 + X4\nX8 ~ X5\nX9 ~ X3 + X6\n"
    "X7 ~~ X8 + X9\nX8 ~~ X9\n";
const char* const kSim2ModelC =
    "X6 ~ X3\nX7 ~ X4\nX8 ~ X5\nX9 ~ X6 + X7 + X8\n"
    "X1 ~~ X2 + X3 + X4 + X5\nX2 ~~ X3 + X4 + X5\nX3 ~~ X4 + X5\nX4 ~~ X5\n";
const char* const kSim2Generator =
    "X2 ~ 0.2*X1\nX3 ~ 0.2*X1\nX4 ~ 0.2*X1\nX5 ~ 0.2*X2\nX6 ~ 0.2*X2\nX7 ~ 0.2*X2 + 0.2*X3\n"
    "X8 ~ 0.2*X3 + 0.2*X4\nX9 ~ 0.2*X4\n"
    "X1 ~~ 1*X1\nX2 ~~ 0.8*X2\nX3 ~~ 0.8*X3\nX4 ~~ 0.8*X4\nX5 ~~ 0.8*X5\nX6 ~~ 0.8*X6\n"
    "X7 ~~ 0.8*X7\nX8 ~~ 0.8*X8\nX9 ~~ 0.8*X9\n";

const char* const kSim3Full = kSim2ModelB;
const char* const kSim3Restricted =
    "X2 ~ X1\nX3 ~ X2\nX4 ~ X2 + X3\nX5 ~ X3\nX6 ~ X2 + X3\nX7 ~ X3 + X4\nX8 ~ X5\nX9 ~ X3 + X6\n";

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string sim1_generator(double d) {
  return "F1 =~ 0.9*X1 + 0.8*X2 + 0.7*X3 + " + num(d) +
         "*X4\n"
         "F2 =~ 0.9*X4 + 0.8*X5 + 0.7*X6\n"
         "F1 ~~ 1*F1\nF2 ~~ 1*F2\nF1 ~~ 0.3*F2\n"
         "X1 ~~ 0.19*X1\nX2 ~~ 0.36*X2\nX3 ~~ 0.51*X3\n"
         "X4 ~~ 0.19*X4\nX5 ~~ 0.36*X5\nX6 ~~ 0.51*X6\n";
}

std::string sim3_generator(double d) {
  return "X2 ~ 0.2*X1\nX3 ~ 0.2*X2\nX4 ~ 0.2*X2 + 0.2*X3\nX5 ~ 0.2*X3\nX6 ~ 0.2*X2 + 0.2*X3\n"
         "X7 ~ 0.2*X3 + 0.2*X4\nX8 ~ 0.2*X5\nX9 ~ 0.2*X3 + 0.2*X6\n"
         "X1 ~~ 1*X1\nX2 ~~ 0.8*X2\nX3 ~~ 0.8*X3\nX4 ~~ 0.8*X4\nX5 ~~ 0.8*X5\nX6 ~~ 0.8*X6\n"
         "X7 ~~ 0.8*X7\nX8 ~~ 0.8*X8\nX9 ~~ 0.8*X9\n"
         "X7 ~~ " + num(d) + "*X8 + " + num(d) + "*X9\nX8 ~~ " + num(d) + "*X9\n";
}

double endpoint_sd(const std::vector<double>& lowers, const std::vector<double>& uppers) {
  if (lowers.size() != uppers.size()) throw std::invalid_argument("endpoint_sd: length mismatch");
  const std::size_t r = lowers.size();
  if (r < 2) throw std::invalid_argument("endpoint_sd: need at least 2 replicates");
  auto var = [r](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(r);
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(r - 1);
  };
  const double nr = static_cast<double>(r);
  return std::sqrt((nr - 1.0) * (var(lowers) + var(uppers)) / (2.0 * nr - 2.0));
}

IntervalSummary summarize_intervals(const std::vector<double>& lowers, const std::vector<double>& uppers,
                                    double truth) {
  if (lowers.size() != uppers.size()) throw std::invalid_argument("interval summary: length mismatch");
  IntervalSummary s;
  s.count = static_cast<int>(lowers.size());
  if (s.count == 0) return s;
  int cover = 0, low = 0, high = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < lowers.size(); ++i) {
    if (uppers[i] < truth) {
      ++low;
    } else if (lowers[i] > truth) {
      ++high;
    } else {
      ++cover;
    }
    width += uppers[i] - lowers[i];
  }
  const double c = static_cast<double>(s.count);
  s.coverage = cover / c;
  s.miss_low = low / c;
  s.miss_high = high / c;
  s.mean_width = width / c;
  s.endpoint_sd = s.count >= 2 ? endpoint_sd(lowers, uppers) : 0.0;
  return s;
}

double SimSummary::rate(const std::string& key) const {
  for (const auto& [k, v] : reject_rates) {
    if (k == key) return v;
  }
  throw std::out_of_range("no rate named '" + key + "'");
}

const IntervalSummary& SimSummary::interval(const std::string& key) const {
  for (const auto& [k, v] : intervals) {
    if (k == key) return v;
  }
  throw std::out_of_range("no interval named '" + key + "'");
}

const std::vector<double>& SimSummary::sample(const std::string& key) const {
  for (const auto& [k, v] : samples) {
    if (k == key) return v;
  }
  throw std::out_of_range("no sample named '" + key + "'");
}

SimOptions sim1_defaults() {
  SimOptions o;
  o.n_levels = {200, 500, 1000};
  o.d_levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  return o;
}

SimOptions sim2_defaults() {
  SimOptions o;
  o.n_levels = {200, 500, 1000};
  o.d_levels = {0.0};
  return o;
}

SimOptions sim3_defaults() {
  SimOptions o;
  o.n_levels = {200, 500, 1000};
  o.d_levels = {0.0, 0.025, 0.05, 0.075, 0.1, 0.125};
  o.boot_reps = 0;
  return o;
}

namespace {

// tr(J^-1 K) at the pseudo-true parameters for normal data with covariance sigma0: J is minus the
// expected Hessian, K the score covariance 1/2 tr(S^-1 D_j S^-1 sigma0 S^-1 D_k S^-1 sigma0).
double effective_parameters(const MomentModel& model, const SampleMoments& pop, const VectorXd& theta) {
  if (model.spec().meanstructure) throw std::invalid_argument("population targets need a covariance-only model");
  MomentModel::State st;
  if (!model.evaluate(theta, st)) throw NumericalError("singular (I - B) at the pseudo-true parameters");
  std::vector<MatrixXd> dsigma;
  MatrixXd dmu;
  model.jacobian(st, dsigma, dmu);
  Eigen::LLT<MatrixXd> llt(st.moments.sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("pseudo-true covariance is not positive definite");
  const int k = model.k();
  std::vector<MatrixXd> m(k);
  for (int j = 0; j < k; ++j) m[j] = llt.solve(llt.solve(dsigma[j]).transpose()) * pop.cov;
  MatrixXd kmat(k, k);
  for (int a = 0; a < k; ++a) {
    for (int b = a; b < k; ++b) kmat(a, b) = kmat(b, a) = 0.5 * (m[a] * m[b]).trace();
  }
  MatrixXd j = -average_hessian(model, pop, theta);
  return j.partialPivLu().solve(kmat).trace();
}

}  // namespace

PopulationTarget population_bic_difference(const ModelSpec& a, const ModelSpec& b, const ModelSpec& generator,
                                           Eigen::Index n) {
  ImpliedMoments pop = implied_moments(generator, VectorXd::Zero(generator.k()));
  SampleMoments sm{pop.mu, pop.sigma, n};
  FitOptions fo;
  fo.max_iter = 2000;
  fo.grad_tol = 1e-10;
  MomentModel ma(a), mb(b);
  Estimate ea = fit_moments(ma, sm, fo);
  Estimate eb = fit_moments(mb, sm, fo);
  PopulationTarget t;
  t.population = -2.0 * (ea.loglik_total - eb.loglik_total) + (a.k() - b.k()) * std::log(static_cast<double>(n));
  t.expected = t.population - (effective_parameters(ma, sm, ea.theta) - effective_parameters(mb, sm, eb.theta));
  return t;
}

namespace {

// Outcome of one pair within one replicate.
struct Record {
  std::vector<double> rates;
  std::vector<double> lowers;
  std::vector<double> uppers;
  std::vector<double> samples;
  VectorXd eigenvalues;
};

struct PairSpec {
  std::string name;
  int a;
  int b;
};

struct Layout {
  std::vector<std::string> rates;
  std::vector<std::string> intervals;
  std::vector<std::string> samples;
};

struct Condition {
  Eigen::Index n;
  double d;
  ModelSpec generator;
  ImpliedMoments population;
  std::vector<PopulationTarget> truth;  // per pair
};

// Runs one replicate of a condition and returns a record per pair; an empty result marks a failure.
using ReplicateFn = std::function<std::vector<Record>(const Condition&, const MatrixXd&, std::uint64_t)>;

std::vector<SimSummary> drive(int study, const SimOptions& opts, const std::vector<ModelSpec>& models,
                              const std::vector<PairSpec>& pairs, const Layout& layout,
                              const std::function<std::string(double)>& generator_text, const ReplicateFn& replicate) {
  if (opts.reps < 1) throw std::invalid_argument("reps must be positive");
  if (!(opts.ci_level > 0.0 && opts.ci_level < 1.0)) throw std::invalid_argument("ci level must lie in (0, 1)");
  std::vector<Condition> conditions;
  for (Eigen::Index n : opts.n_levels) {
    for (double d : opts.d_levels) {
      Condition c{n, d, parse_model(generator_text(d)), {}, {}};
      c.population = implied_moments(c.generator, VectorXd::Zero(c.generator.k()));
      for (const auto& pr : pairs) {
        c.truth.push_back(population_bic_difference(models[pr.a], models[pr.b], c.generator, n));
      }
      conditions.push_back(std::move(c));
    }
  }

  const std::size_t reps = static_cast<std::size_t>(opts.reps);
  std::vector<std::vector<Record>> results(conditions.size() * reps);
  parallel_for(results.size(), opts.threads, [&](std::size_t job) {
    const std::size_t ci = job / reps, r = job % reps;
    const Condition& c = conditions[ci];
    std::uint64_t key = (static_cast<std::uint64_t>(ci) << 32) | r;
    MatrixXd cases = simulate_cases(c.population, c.n, opts.seed, key);
    try {
      results[job] = replicate(c, cases, key);
    } catch (const NumericalError&) {
      results[job].clear();
    }
  });

  std::vector<SimSummary> out;
  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const Condition& c = conditions[ci];
    for (std::size_t pi = 0; pi < pairs.size(); ++pi) {
      SimSummary s;
      s.study = study;
      s.pair = pairs[pi].name;
      s.n = c.n;
      s.d = c.d;
      s.truth = c.truth[pi].expected;
      s.population_truth = c.truth[pi].population;
      std::vector<double> rate_sum(layout.rates.size(), 0.0);
      std::vector<std::vector<double>> lo(layout.intervals.size()), hi(layout.intervals.size());
      std::vector<std::vector<double>> smp(layout.samples.size());
      for (std::size_t r = 0; r < reps; ++r) {
        const auto& recs = results[ci * reps + r];
        if (recs.empty()) {
          ++s.dropped;
          continue;
        }
        ++s.reps;
        const Record& rec = recs[pi];
        for (std::size_t j = 0; j < rate_sum.size(); ++j) rate_sum[j] += rec.rates[j];
        for (std::size_t j = 0; j < lo.size(); ++j) {
          // NaN endpoints mark an interval that was not computed for this replicate.
          if (std::isnan(rec.lowers[j])) continue;
          lo[j].push_back(rec.lowers[j]);
          hi[j].push_back(rec.uppers[j]);
        }
        if (opts.keep_samples) {
          for (std::size_t j = 0; j < smp.size(); ++j) smp[j].push_back(rec.samples[j]);
          s.eigenvalues.push_back(rec.eigenvalues);
        }
      }
      for (std::size_t j = 0; j < rate_sum.size(); ++j) {
        s.reject_rates.emplace_back(layout.rates[j], s.reps > 0 ? rate_sum[j] / s.reps : 0.0);
      }
      for (std::size_t j = 0; j < lo.size(); ++j) {
        if (lo[j].empty()) continue;
        s.intervals.emplace_back(layout.intervals[j], summarize_intervals(lo[j], hi[j], s.truth));
      }
      if (opts.keep_samples) {
        for (std::size_t j = 0; j < smp.size(); ++j) s.samples.emplace_back(layout.samples[j], std::move(smp[j]));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<FittedModel> fit_all(const std::vector<ModelSpec>& models, const Dataset& data) {
  std::vector<FittedModel> fits;
  for (const auto& m : models) {
    fits.push_back(fit_ml(m, data));
    if (!fits.back().converged) throw NumericalError("fit did not converge");
  }
  return fits;
}

// Bootstrap BIC-difference intervals for every pair on common resamples. Returns false if
// too many resamples failed.
bool bootstrap_pairs(const std::vector<ModelSpec>& models, const std::vector<FittedModel>& fits,
                     const std::vector<PairSpec>& pairs, const Dataset& data, const SimOptions& opts,
                     std::uint64_t key, std::vector<Interval>& out) {
  std::vector<MomentModel> mm;
  for (const auto& m : models) mm.emplace_back(m);
  std::vector<const MomentModel*> mp;
  std::vector<const MatrixXd*> cp;
  std::vector<VectorXd> starts;
  for (std::size_t j = 0; j < models.size(); ++j) {
    mp.push_back(&mm[j]);
    cp.push_back(&data.cases);
    starts.push_back(fits[j].theta_hat);
  }
  BootstrapFits bf = bootstrap_fits(mp, cp, starts, opts.boot_reps, substream(opts.seed, key, 0xb00)(), 1);
  int ok = 0;
  for (char c : bf.converged) ok += c;
  if ((opts.boot_reps - ok) * 10 > opts.boot_reps) return false;
  const double ln_n = std::log(static_cast<double>(data.n()));
  out.clear();
  for (const auto& pr : pairs) {
    std::vector<double> diffs;
    for (int r = 0; r < opts.boot_reps; ++r) {
      if (!bf.converged[r]) continue;
      diffs.push_back(-2.0 * (bf.loglik(r, pr.a) - bf.loglik(r, pr.b)) + (models[pr.a].k() - models[pr.b].k()) * ln_n);
    }
    out.push_back(percentile_interval(std::move(diffs), 1.0 - opts.ci_level));
  }
  return true;
}

Dataset as_dataset(const ModelSpec& generator, const MatrixXd& cases) {
  Dataset d;
  d.names = generator.manifest_names;
  d.cases = cases;
  return d;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

std::vector<SimSummary> run_sim1(const SimOptions& opts) {
  std::vector<ModelSpec> models{parse_model(kSim1ModelA), parse_model(kSim1ModelB)};
  std::vector<PairSpec> pairs{{"A-B", 0, 1}};
  Layout layout{{"distinguish", "lrt_one_sided", "lrt_conditional", "bic"}, {"vuong", "bootstrap"}, {}};
  CompareOptions co;
  co.alpha1 = co.alpha2 = opts.alpha;
  co.ci_alpha = 1.0 - opts.ci_level;
  co.one_sided = true;
  auto rep = [&](const Condition& c, const MatrixXd& cases, std::uint64_t key) {
    Dataset data = as_dataset(c.generator, cases);
    auto fits = fit_all(models, data);
    ComparisonResult cr = sequential_compare(fits[0], fits[1], co);
    Record rec;
    bool dist = cr.p_distinguish < opts.alpha;
    bool lrt = cr.z_lrt > 0.0 && cr.p_lrt_one_sided < opts.alpha;
    rec.rates = {double(dist), double(lrt), double(dist && lrt), double(cr.bic_diff < 0.0)};
    rec.lowers = {cr.ic_ci.lower, kNaN};
    rec.uppers = {cr.ic_ci.upper, kNaN};
    if (opts.boot_reps > 0) {
      std::vector<Interval> boot;
      if (!bootstrap_pairs(models, fits, pairs, data, opts, key, boot)) return std::vector<Record>{};
      rec.lowers[1] = boot[0].lower;
      rec.uppers[1] = boot[0].upper;
    }
    return std::vector<Record>{rec};
  };
  return drive(1, opts, models, pairs, layout, sim1_generator, rep);
}

std::vector<SimSummary> run_sim2(const SimOptions& opts) {
  std::vector<ModelSpec> models{parse_model(kSim2ModelA), parse_model(kSim2ModelB), parse_model(kSim2ModelC)};
  std::vector<PairSpec> pairs{{"A-B", 0, 1}, {"B-C", 1, 2}, {"C-A", 2, 0}};
  Layout layout{{"distinguish", "lrt_prefer_a", "lrt_prefer_b", "bic"}, {"vuong", "bootstrap"}, {}};
  CompareOptions co;
  co.alpha1 = co.alpha2 = opts.alpha;
  co.ci_alpha = 1.0 - opts.ci_level;
  auto rep = [&](const Condition& c, const MatrixXd& cases, std::uint64_t key) {
    Dataset data = as_dataset(c.generator, cases);
    auto fits = fit_all(models, data);
    std::vector<Interval> boot;
    if (opts.boot_reps > 0 && !bootstrap_pairs(models, fits, pairs, data, opts, key, boot)) {
      return std::vector<Record>{};
    }
    std::vector<Record> recs;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      ComparisonResult cr = sequential_compare(fits[pairs[i].a], fits[pairs[i].b], co);
      Record rec;
      rec.rates = {double(cr.p_distinguish < opts.alpha), double(cr.decision == Decision::PreferA),
                   double(cr.decision == Decision::PreferB), double(cr.bic_diff < 0.0)};
      rec.lowers = {cr.ic_ci.lower, boot.empty() ? kNaN : boot[i].lower};
      rec.uppers = {cr.ic_ci.upper, boot.empty() ? kNaN : boot[i].upper};
      recs.push_back(std::move(rec));
    }
    return recs;
  };
  return drive(2, opts, models, pairs, layout, [](double) { return std::string(kSim2Generator); }, rep);
}

std::vector<SimSummary> run_sim3(const SimOptions& opts) {
  std::vector<ModelSpec> models{parse_model(kSim3Full), parse_model(kSim3Restricted)};
  std::vector<PairSpec> pairs{{"full-restricted", 0, 1}};
  Layout layout{{"distinguish", "vuong_lr", "classical", "bic"}, {"vuong", "bootstrap"}, {"lr_stat", "p_lr", "p_classical"}};
  CompareOptions co;
  co.alpha1 = co.alpha2 = opts.alpha;
  co.ci_alpha = 1.0 - opts.ci_level;
  co.variant = Variant::Nested;
  auto rep = [&](const Condition& c, const MatrixXd& cases, std::uint64_t key) {
    Dataset data = as_dataset(c.generator, cases);
    auto fits = fit_all(models, data);
    NestedResult nr = nested_tests(fits[0], fits[1], co);
    InformationCriteria ia = information_criteria(fits[0]), ib = information_criteria(fits[1]);
    Record rec;
    rec.rates = {double(nr.p_variance < opts.alpha), double(nr.p_lr < opts.alpha),
                 double(nr.p_classical < opts.alpha), double(ia.bic < ib.bic)};
    double omega = omega_hat_squared(fits[0].loglik_casewise, fits[1].loglik_casewise);
    Interval v = ic_difference_ci(ia.bic - ib.bic, omega, data.n(), 1.0 - opts.ci_level);
    rec.lowers = {v.lower, kNaN};
    rec.uppers = {v.upper, kNaN};
    rec.samples = {nr.lr_stat, nr.p_lr, nr.p_classical};
    rec.eigenvalues = nr.eigenvalues;
    if (opts.boot_reps > 0) {
      std::vector<Interval> boot;
      if (!bootstrap_pairs(models, fits, pairs, data, opts, key, boot)) return std::vector<Record>{};
      rec.lowers[1] = boot[0].lower;
      rec.uppers[1] = boot[0].upper;
    }
    return std::vector<Record>{rec};
  };
  return drive(3, opts, models, pairs, layout, sim3_generator, rep);
}

void write_table_tsv(std::ostream& out, const std::vector<SimSummary>& rows) {
  out << "study\tpair\tn\td\treps\tdropped\ttruth\tpopulation_truth";
  if (!rows.empty()) {
    for (const auto& [k, v] : rows.front().reject_rates) out << "\t" << k;
    for (const auto& [k, v] : rows.front().intervals) {
      out << "\t" << k << "_coverage\t" << k << "_miss_low\t" << k << "_miss_high\t" << k << "_width\t" << k << "_sd";
    }
  }
  out << "\n";
  for (const auto& s : rows) {
    out << s.study << "\t" << s.pair << "\t" << s.n << "\t" << s.d << "\t" << s.reps << "\t" << s.dropped << "\t"
        << s.truth << "\t" << s.population_truth;
    for (const auto& [k, v] : s.reject_rates) out << "\t" << v;
    for (const auto& [k, v] : s.intervals) {
      out << "\t" << v.coverage << "\t" << v.miss_low << "\t" << v.miss_high << "\t" << v.mean_width << "\t"
          << v.endpoint_sd;
    }
    out << "\n";
  }
}

void write_power_tsv(std::ostream& out, const std::vector<SimSummary>& rows) {
  out << "study\tpair\tn\td\tstatistic\trate\n";
  for (const auto& s : rows) {
    for (const auto& [k, v] : s.reject_rates) {
      out << s.study << "\t" << s.pair << "\t" << s.n << "\t" << s.d << "\t" << k << "\t" << v << "\n";
    }
  }
}

}  // namespace vsem
