#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "vsem/data.hpp"
#include "vsem/engine.hpp"
#include "vsem/error.hpp"
#include "vsem/model.hpp"
#include "vsem/report.hpp"
#include "vsem/resampling.hpp"
#include "vsem/simlab.hpp"
#include "vsem/vuong.hpp"
#include "vsem/wchisq.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace vsem;

namespace {

enum Exit { kOk = 0, kInput = 1, kNumerical = 2 };

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ModelSpec load_model(const std::string& path, bool meanstructure, const Dataset* data) {
  ParseOptions po;
  po.meanstructure = meanstructure;
  if (data) po.known_manifests = data->names;
  return parse_model(read_text(path), po);
}

// Files are written to a sibling temporary and renamed, so a failed run leaves nothing behind.
class OutputFiles {
 public:
  void add(const std::string& path, const std::string& contents) { pending_.emplace_back(path, contents); }

  void commit() {
    std::vector<std::string> temps;
    try {
      for (const auto& [path, contents] : pending_) {
        std::string tmp = path + ".tmp";
        temps.push_back(tmp);
        std::ofstream out(tmp, std::ios::binary);
        out << contents;
        out.close();
        if (!out) throw DataError("cannot write '" + path + "'");
      }
      for (std::size_t i = 0; i < pending_.size(); ++i) fs::rename(temps[i], pending_[i].first);
    } catch (...) {
      std::error_code ec;
      for (const auto& t : temps) fs::remove(t, ec);
      throw;
    }
  }

 private:
  std::vector<std::pair<std::string, std::string>> pending_;
};

void emit(const std::string& out_path, const ordered_json& j) {
  std::string text = j.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  OutputFiles files;
  files.add(out_path, text);
  files.commit();
}

struct FitArgs {
  std::string model;
  std::string data;
  std::string out;
  bool meanstructure = false;
};

int cmd_fit(const FitArgs& a) {
  RunManifest m = make_manifest("fit", {{"model", a.model}, {"data", a.data}, {"meanstructure", a.meanstructure}}, 0);
  Dataset data = read_csv_file(a.data);
  ModelSpec spec = load_model(a.model, a.meanstructure, &data);
  m.inputs = {{a.model, file_digest(a.model)}, {a.data, file_digest(a.data)}};
  FittedModel fit = fit_ml(spec, data);
  m.finished = utc_timestamp();
  ordered_json j = fit_report(fit);
  j["manifest"] = to_json(m);
  emit(a.out, j);
  for (const auto& w : fit.warnings) std::cerr << "warning: " << w << "\n";
  return fit.converged ? kOk : kNumerical;
}

struct CompareArgs {
  std::string model_a;
  std::string model_b;
  std::string data;
  std::string out;
  double alpha = 0.05;
  double ci_level = 0.90;
  bool nested = false;
  bool one_sided = false;
  bool expected_information = false;
  bool meanstructure = false;
  std::string criterion = "bic";
  int bootstrap = 0;
  std::uint64_t seed = 1;
  int threads = 0;
};

int cmd_compare(const CompareArgs& a) {
  ordered_json config = {{"model_a", a.model_a}, {"model_b", a.model_b}, {"data", a.data},
                         {"alpha", a.alpha},     {"ci_level", a.ci_level}, {"nested", a.nested},
                         {"criterion", a.criterion}, {"bootstrap", a.bootstrap}, {"one_sided", a.one_sided}};
  RunManifest m = make_manifest("compare", config, a.seed);
  Dataset data = read_csv_file(a.data);
  ModelSpec spec_a = load_model(a.model_a, a.meanstructure, &data);
  ModelSpec spec_b = load_model(a.model_b, a.meanstructure, &data);
  m.inputs = {{a.model_a, file_digest(a.model_a)}, {a.model_b, file_digest(a.model_b)}, {a.data, file_digest(a.data)}};

  FittedModel fa = fit_ml(spec_a, data);
  FittedModel fb = fit_ml(spec_b, data);
  if (!fa.converged || !fb.converged) throw NumericalError("a model fit did not converge");

  CompareOptions co;
  co.alpha1 = co.alpha2 = a.alpha;
  co.ci_alpha = 1.0 - a.ci_level;
  co.criterion = a.criterion == "aic" ? Criterion::AIC : Criterion::BIC;
  co.variant = a.nested ? Variant::Nested : Variant::NonNested;
  co.one_sided = a.one_sided;
  co.use_expected_information = a.expected_information;
  ComparisonResult r = sequential_compare(fa, fb, co);
  r.model_a = a.model_a;
  r.model_b = a.model_b;

  std::optional<BootstrapResult> boot;
  if (a.bootstrap > 0) {
    BootstrapOptions bo;
    bo.reps = a.bootstrap;
    bo.alpha = co.ci_alpha;
    bo.criterion = co.criterion;
    bo.seed = a.seed;
    bo.threads = a.threads;
    bo.start_a = fa.theta_hat;
    bo.start_b = fb.theta_hat;
    boot = bootstrap_ic_ci(spec_a, spec_b, data, bo);
  }
  m.finished = utc_timestamp();
  ordered_json j = comparison_report(r, boot);
  j["manifest"] = to_json(m);
  if (a.out.empty()) {
    std::cout << j.dump(2) << "\n";
    std::cerr << comparison_text(r);
  } else {
    emit(a.out, j);
    std::cout << comparison_text(r);
  }
  return kOk;
}

struct WchisqArgs {
  std::vector<double> weights;
  std::vector<double> x;
};

int cmd_wchisq(const WchisqArgs& a) {
  WeightedChiSq dist(a.weights);
  ordered_json rows = ordered_json::array();
  for (double x : a.x) {
    auto p = dist.cdf_detail(x);
    rows.push_back({{"x", x}, {"cdf", p.value}, {"upper_p", std::clamp(1.0 - p.value, 0.0, 1.0)},
                    {"error", p.error}, {"monte_carlo", p.monte_carlo}});
  }
  ordered_json j = {{"weights", dist.weights()}, {"values", rows}};
  if (a.x.size() == 1) {
    j["cdf"] = rows[0]["cdf"];
    j["upper_p"] = rows[0]["upper_p"];
  }
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct SimulateArgs {
  int study = 1;
  int reps = 0;
  int boot_reps = 1000;
  std::uint64_t seed = 1;
  int threads = 0;
  bool full_scale = false;
  bool no_boot = false;
  double alpha = 0.05;
  double ci_level = 0.90;
  std::vector<long> n_levels;
  std::vector<double> d_levels;
  std::string out_dir = ".";
};

int cmd_simulate(const SimulateArgs& a) {
  SimOptions o = a.study == 1 ? sim1_defaults() : a.study == 2 ? sim2_defaults() : sim3_defaults();
  if (a.study != 3) o.boot_reps = a.boot_reps;
  if (a.no_boot) o.boot_reps = 0;
  if (a.full_scale && a.study == 1) o.reps = 3000;
  if (a.reps > 0) o.reps = a.reps;
  if (!a.n_levels.empty()) o.n_levels.assign(a.n_levels.begin(), a.n_levels.end());
  if (!a.d_levels.empty()) o.d_levels = a.d_levels;
  o.seed = a.seed;
  o.threads = a.threads;
  o.alpha = a.alpha;
  o.ci_level = a.ci_level;

  ordered_json config = {{"study", a.study}, {"reps", o.reps},         {"boot_reps", o.boot_reps},
                         {"n", o.n_levels},  {"d", o.d_levels},        {"alpha", o.alpha},
                         {"ci_level", o.ci_level}, {"full_scale", a.full_scale}};
  RunManifest m = make_manifest("simulate", config, a.seed);
  std::vector<SimSummary> rows = a.study == 1 ? run_sim1(o) : a.study == 2 ? run_sim2(o) : run_sim3(o);
  m.finished = utc_timestamp();

  std::ostringstream table, power;
  write_table_tsv(table, rows);
  write_power_tsv(power, rows);
  ordered_json summaries = ordered_json::array();
  for (const auto& s : rows) summaries.push_back(to_json(s));
  ordered_json j = {{"manifest", to_json(m)}, {"summaries", summaries}};

  fs::create_directories(a.out_dir);
  std::string stem = (fs::path(a.out_dir) / ("sim" + std::to_string(a.study))).string();
  OutputFiles files;
  files.add(stem + "_table.tsv", table.str());
  files.add(stem + "_power.tsv", power.str());
  files.add(stem + "_manifest.json", j.dump(2) + "\n");
  files.commit();
  std::cout << table.str();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vuong-type comparisons of structural equation models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(VSEM_VERSION));

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model by maximum likelihood");
  fit_cmd->add_option("model", fit.model, "Model syntax file")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("data", fit.data, "CSV data with a header row")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("-o,--output", fit.out, "Write the JSON report here instead of stdout");
  fit_cmd->add_flag("--meanstructure", fit.meanstructure, "Add intercepts for every manifest");

  CompareArgs cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "Compare two models on the same data");
  cmp_cmd->add_option("model_a", cmp.model_a, "First model")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("model_b", cmp.model_b, "Second model")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("data", cmp.data, "CSV data")->required()->check(CLI::ExistingFile);
  cmp_cmd->add_option("-o,--output", cmp.out, "Write the JSON report here");
  cmp_cmd->add_option("--alpha", cmp.alpha, "Level of both sequential tests")->capture_default_str()->check(
      CLI::Range(1e-12, 1.0 - 1e-12));
  cmp_cmd->add_option("--ci-level", cmp.ci_level, "Confidence level of the IC interval")
      ->capture_default_str()
      ->check(CLI::Range(1e-12, 1.0 - 1e-12));
  cmp_cmd->add_flag("--nested", cmp.nested, "Model A contains model B");
  cmp_cmd->add_flag("--one-sided", cmp.one_sided, "Decide on the one-sided LRT p-value");
  cmp_cmd->add_flag("--expected-information", cmp.expected_information, "Use expected information for U");
  cmp_cmd->add_flag("--meanstructure", cmp.meanstructure, "Add intercepts for every manifest");
  cmp_cmd->add_option("--criterion", cmp.criterion, "Criterion for the interval")
      ->capture_default_str()
      ->check(CLI::IsMember({"aic", "bic"}));
  cmp_cmd->add_option("--bootstrap", cmp.bootstrap, "Bootstrap replicates (0 = off, else >= 100)")
      ->check(CLI::Range(0, 1000000));
  cmp_cmd->add_option("--seed", cmp.seed, "Random seed")->capture_default_str();
  cmp_cmd->add_option("--threads", cmp.threads, "Worker threads (0 = all)")->capture_default_str();

  WchisqArgs wq;
  auto* wq_cmd = app.add_subcommand("wchisq", "CDF of a weighted sum of chi-square(1) variables");
  wq_cmd->add_option("--weights", wq.weights, "Weights")->required()->delimiter(',');
  wq_cmd->add_option("--x", wq.x, "Evaluation points")->required()->delimiter(',');

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study");
  sim_cmd->add_option("study", sim.study, "Study number")->required()->check(CLI::IsMember({1, 2, 3}));
  sim_cmd->add_option("--reps", sim.reps, "Replicates per condition");
  sim_cmd->add_option("--bootstrap", sim.boot_reps, "Bootstrap resamples per replicate")->capture_default_str();
  sim_cmd->add_flag("--no-boot", sim.no_boot, "Skip bootstrap intervals");
  sim_cmd->add_flag("--full-scale", sim.full_scale, "Replicate counts of the original studies");
  sim_cmd->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  sim_cmd->add_option("--threads", sim.threads, "Worker threads (0 = all)")->capture_default_str();
  sim_cmd->add_option("--alpha", sim.alpha, "Test level")->capture_default_str();
  sim_cmd->add_option("--ci-level", sim.ci_level, "Interval level")->capture_default_str();
  sim_cmd->add_option("--n", sim.n_levels, "Sample sizes")->delimiter(',');
  sim_cmd->add_option("--d", sim.d_levels, "Effect levels")->delimiter(',');
  sim_cmd->add_option("--out-dir", sim.out_dir, "Directory for TSV and JSON output")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kOk : kInput;
  }

  try {
    if (*fit_cmd) return cmd_fit(fit);
    if (*cmp_cmd) {
      if (cmp.bootstrap > 0 && cmp.bootstrap < 100) throw std::invalid_argument("--bootstrap needs at least 100");
      return cmd_compare(cmp);
    }
    if (*wq_cmd) return cmd_wchisq(wq);
    if (*sim_cmd) return cmd_simulate(sim);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kInput;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
  return kInput;
}
